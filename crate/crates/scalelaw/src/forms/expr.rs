//! Structural wiring of the composed forms.
//!
//! Each structured form (UNSL, A1, A2, A3, and CF treated as a structured
//! special case) expands into a small expression tree over kernels, the
//! additive floor, and reciprocal limit constants. The same tree drives
//! plain evaluation, the differentiation tape, and the output-rescaling
//! walk used when converting a normalized fit back to raw units.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::forms::{FormKind, FormSpec, ParamSet};

/// Expression over log-space quantities. `Sum` adds the (nonnegative)
/// exponentials of its children; `Recip` is the multiplicative inverse,
/// i.e. negation in log space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// log value of the kernel with this id.
    Kernel(u32),
    /// log a_0 — the additive floor.
    Floor,
    /// log(a_role^{-1}) — a limit constant's reciprocal as a summand.
    LimitInv(u32),
    Sum(Vec<Expr>),
    Recip(Box<Expr>),
}

/// One kernel slot demanded by a form's wiring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSlot {
    /// 1-based input dimensions the kernel reads.
    pub index_set: Vec<u32>,
    pub break_count: u32,
}

/// Inventory of parameters a form's expression demands.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Structure {
    pub kernels: BTreeMap<u32, KernelSlot>,
    pub limit_roles: BTreeSet<u32>,
    pub has_floor: bool,
}

impl Structure {
    /// Checks that a parameter set carries exactly the demanded kernels,
    /// limits, and floor — no orphans, no gaps — and that each kernel's
    /// shape matches its slot.
    pub fn check_params(&self, params: &ParamSet, f_floor: f64) -> Result<()> {
        for (&id, slot) in &self.kernels {
            let k = params.kernels.get(&id).ok_or_else(|| {
                Error::Config(format!("missing kernel {id} demanded by the form"))
            })?;
            if k.kernel_id != id {
                return Err(Error::Config(format!(
                    "kernel stored under id {id} claims id {}",
                    k.kernel_id
                )));
            }
            if k.index_set != slot.index_set {
                return Err(Error::Config(format!(
                    "kernel {id}: index set {:?} does not match the form's {:?}",
                    k.index_set, slot.index_set
                )));
            }
            if k.breaks.len() != slot.break_count as usize {
                return Err(Error::Config(format!(
                    "kernel {id}: {} breaks where the form demands {}",
                    k.breaks.len(),
                    slot.break_count
                )));
            }
            k.validate(f_floor)?;
        }
        if let Some(&id) = params.kernels.keys().find(|id| !self.kernels.contains_key(id)) {
            return Err(Error::Config(format!(
                "kernel {id} is not part of this form"
            )));
        }
        for &role in &self.limit_roles {
            if !params.limits.contains_key(&role) {
                return Err(Error::Config(format!(
                    "missing limit constant a_{role} demanded by the form"
                )));
            }
        }
        if let Some(&role) = params.limits.keys().find(|r| !self.limit_roles.contains(r)) {
            return Err(Error::Config(format!(
                "limit constant a_{role} is not part of this form"
            )));
        }
        if self.has_floor && params.log_floor.is_none() {
            return Err(Error::Config("missing additive floor a_0".into()));
        }
        if !self.has_floor && params.log_floor.is_some() {
            return Err(Error::Config("this form has no additive floor".into()));
        }
        Ok(())
    }
}

struct Builder<'a> {
    spec: &'a FormSpec,
    structure: Structure,
}

impl<'a> Builder<'a> {
    fn kernel(&mut self, id: u32, index_set: Vec<u32>) -> Expr {
        self.structure.kernels.insert(
            id,
            KernelSlot {
                index_set,
                break_count: self.spec.breaks_for(id),
            },
        );
        Expr::Kernel(id)
    }

    fn limit_inv(&mut self, role: u32) -> Expr {
        self.structure.limit_roles.insert(role);
        Expr::LimitInv(role)
    }

    /// (body^{-1} + a_role^{-1})^{-1} — a quantity capped by a limit.
    fn limited(&mut self, body: Expr, role: u32) -> Expr {
        let inv = self.limit_inv(role);
        Expr::Recip(Box::new(Expr::Sum(vec![Expr::Recip(Box::new(body)), inv])))
    }

    /// Group r: the joint kernel over U_r plus one bottleneck kernel per
    /// dimension in T_r. Kernel ids follow the r·(m+1)+t arithmetic so
    /// every instantiation gets a unique, stable id.
    fn group(&mut self, r: u32) -> Result<Expr> {
        let m = self.spec.arity as u32;
        let mut terms = Vec::new();
        let joint = self.spec.nonbottleneck_set(r);
        if !joint.is_empty() {
            terms.push(self.kernel(r * (m + 1), joint));
        }
        for t in self.spec.bottleneck_set(r) {
            terms.push(self.kernel(r * (m + 1) + t, vec![t]));
        }
        if terms.is_empty() {
            return Err(Error::Config(format!(
                "kernel group {r} has an empty joint set and no bottlenecks"
            )));
        }
        Ok(sum_or_single(terms))
    }

    /// Limited group plus S hyperparameter force terms, with the group and
    /// limit indices starting at q.
    fn forces(&mut self, q: u32) -> Result<Expr> {
        let body = self.group(q)?;
        let mut terms = vec![self.limited(body, q)];
        for s in 1..=self.spec.effective_s() {
            let g = self.group(q + s)?;
            let inv = self.limit_inv(q + s);
            terms.push(Expr::Recip(Box::new(Expr::Sum(vec![g, inv]))));
        }
        Ok(sum_or_single(terms))
    }

    /// Wraps `body` in the finite metric upper limit a_2 when enabled,
    /// then adds the floor a_0.
    fn floored(&mut self, body: Expr) -> Expr {
        self.structure.has_floor = true;
        let capped = if self.spec.metric_upper_limit_enabled {
            self.limited(body, 2)
        } else {
            body
        };
        Expr::Sum(vec![Expr::Floor, capped])
    }
}

fn sum_or_single(mut terms: Vec<Expr>) -> Expr {
    if terms.len() == 1 {
        terms.pop().unwrap()
    } else {
        Expr::Sum(terms)
    }
}

/// Expands a spec into its expression tree and parameter inventory.
///
/// The DC baseline is not expressible in this structure (its saturation
/// involves min/max switching) and is evaluated by a dedicated routine.
pub fn build_expr(spec: &FormSpec) -> Result<(Expr, Structure)> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        structure: Structure::default(),
    };
    let s = spec.effective_s();
    let expr = match spec.form_kind {
        FormKind::A1 => b.kernel(0, (1..=spec.arity as u32).collect()),
        FormKind::A2 => {
            let g = b.group(0)?;
            b.structure.has_floor = true;
            Expr::Sum(vec![Expr::Floor, g])
        }
        FormKind::A3 => {
            let body = b.forces_a3()?;
            b.floored(body)
        }
        FormKind::Unsl => {
            let main = b.forces(3)?;
            let body = if spec.overfit_enabled {
                let overfit = b.forces(s + 4)?;
                let a1 = b.limit_inv(1);
                Expr::Sum(vec![
                    main,
                    Expr::Recip(Box::new(Expr::Sum(vec![overfit, a1]))),
                ])
            } else {
                main
            };
            b.floored(body)
        }
        FormKind::Cf => {
            // CF is the floor plus two independent power laws; its kernels
            // never carry breaks regardless of the configured count.
            b.structure.has_floor = true;
            let k1 = b.kernel(1, vec![1]);
            let k2 = b.kernel(2, vec![2]);
            for slot in b.structure.kernels.values_mut() {
                slot.break_count = 0;
            }
            Expr::Sum(vec![Expr::Floor, k1, k2])
        }
        FormKind::Dc => {
            return Err(Error::Config(
                "the DC baseline is not a structured form; use its dedicated evaluator".into(),
            ))
        }
    };
    Ok((expr, b.structure))
}

impl<'a> Builder<'a> {
    /// The A3 wiring: like one force stack starting at group 0, but the
    /// first group's limit uses role 1 (the overfitting force and its
    /// separate limit are absent by construction), and the hyperparameter
    /// groups r = 1..S use limit roles r + 2.
    fn forces_a3(&mut self) -> Result<Expr> {
        let body = self.group(0)?;
        let mut terms = vec![self.limited(body, 1)];
        for r in 1..=self.spec.effective_s() {
            let g = self.group(r)?;
            let inv = self.limit_inv(r + 2);
            terms.push(Expr::Recip(Box::new(Expr::Sum(vec![g, inv]))));
        }
        Ok(sum_or_single(terms))
    }
}

/// Walks the expression recording how each parameter's log value must
/// shift when the whole output is multiplied by e^{log_scale}: summands
/// scale with their parent, reciprocation flips the sign. Used to convert
/// a fit done on normalized targets back to raw units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScaleShifts {
    /// Additive shift to each kernel's log_offset.
    pub kernel_log_offset: BTreeMap<u32, f64>,
    /// Additive shift to log a_0.
    pub floor: f64,
    /// Additive shift to each limit's log_inverse.
    pub limit_log_inverse: BTreeMap<u32, f64>,
}

pub fn scale_shifts(expr: &Expr, log_scale: f64) -> ScaleShifts {
    let mut out = ScaleShifts::default();
    walk(expr, log_scale, &mut out);
    out
}

fn walk(e: &Expr, log_scale: f64, out: &mut ScaleShifts) {
    match e {
        Expr::Kernel(id) => {
            *out.kernel_log_offset.entry(*id).or_insert(0.0) += log_scale;
        }
        Expr::Floor => out.floor += log_scale,
        Expr::LimitInv(role) => {
            *out.limit_log_inverse.entry(*role).or_insert(0.0) += log_scale;
        }
        Expr::Sum(children) => {
            for c in children {
                walk(c, log_scale, out);
            }
        }
        Expr::Recip(child) => walk(child, -log_scale, out),
    }
}
