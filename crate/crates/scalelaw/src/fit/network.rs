//! Trainable parameterizations of the forms and their loss tapes.
//!
//! Structured forms train in a normalized space: inputs are z-scored logs
//! (train-set mean/std per dimension) and the output is centered by the
//! mean log target. The trainable vector mirrors the canonical flat
//! layout slot for slot — each kernel's offset is a bias, its exponent
//! slots are linear weights on z, each break is a hidden unit (weights,
//! bias, outgoing weight), and floor/limit slots are zero-initialized
//! biases. [`NetworkProblem::to_param_set`] converts a trained vector
//! back to raw-unit constants exactly (up to the sharpness floor clamp).
//!
//! The DC baseline trains directly over its seven constants with the
//! exponents kept in log form so they stay positive.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape};
use crate::data::{NormStats, ScalingDataset};
use crate::error::{Error, Result};
use crate::forms::eval::CompiledForm;
use crate::forms::expr::{scale_shifts, Expr};
use crate::forms::grad::{dc_unflatten, flat_len, unflatten};
use crate::forms::{DcParams, ParamSet};

use super::FitConfig;

/// What each trainable slot is, for initialization and regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// Linear weight (exponent-bearing); carries its fan-in.
    Weight(u32),
    /// Bias (offsets, break locations, floor, limits): zero-initialized,
    /// excluded from L2.
    Bias,
}

/// Loss tape for one structured form on one training set.
pub struct NetworkProblem {
    form: CompiledForm,
    stats: NormStats,
    tape: Tape,
    out: NodeId,
    slots: Vec<SlotKind>,
    f_floor: f64,
}

impl NetworkProblem {
    pub fn new(
        spec: &crate::forms::FormSpec,
        train: &ScalingDataset,
        stats: &NormStats,
        cfg: &FitConfig,
    ) -> Result<Self> {
        if spec.arity != train.arity() {
            return Err(Error::Argument(format!(
                "form arity {} vs dataset arity {}",
                spec.arity,
                train.arity()
            )));
        }
        let form = CompiledForm::new(spec)?;
        let slots = slot_kinds(&form);
        let n_params = slots.len();

        let mut tape = Tape::new();
        let theta: Vec<NodeId> = (0..n_params).map(|_| tape.var()).collect();

        let log_eps = cfg.loss_epsilon.ln();
        let mut sq_terms = Vec::with_capacity(train.len());
        for p in &train.points {
            let log_x: Vec<f64> = p.x.iter().map(|v| v.ln()).collect();
            let z = stats.apply_log_x(&log_x);
            let net = build_network_output(&mut tape, &form, &theta, &z);
            // Raw-scale prediction log: re-center, then fold in the loss
            // epsilon the same way the metric does.
            let ymc = tape.constant(stats.log_y_mean);
            let raw_log = tape.add(net, ymc);
            let epsc = tape.constant(log_eps);
            let pred = tape.logsumexp(&[raw_log, epsc]);
            let target = tape.constant((p.y + cfg.loss_epsilon).ln());
            let diff = tape.sub(pred, target);
            sq_terms.push(tape.mul(diff, diff));
        }
        let total = tape.sum(&sq_terms);
        // The squared-log-error term is normalized by the variance of the
        // log targets. This conditions the objective independently of the
        // target's dynamic range; the L2 term is *not* normalized, so the
        // effective regularization relative to raw mean-squared-log-error
        // scales with that variance.
        let var = log_target_variance(train, cfg.loss_epsilon);
        let mut out = tape.scale(total, 1.0 / (train.len() as f64 * var));

        if cfg.lambda > 0.0 {
            let weights: Vec<NodeId> = slots
                .iter()
                .zip(&theta)
                .filter(|(k, _)| matches!(k, SlotKind::Weight(_)))
                .map(|(_, &n)| tape.mul(n, n))
                .collect();
            if !weights.is_empty() {
                let l2 = tape.sum(&weights);
                let scaled = tape.scale(l2, 0.5 * cfg.lambda);
                out = tape.add(out, scaled);
            }
        }

        Ok(Self {
            form,
            stats: stats.clone(),
            tape,
            out,
            slots,
            f_floor: cfg.f_floor,
        })
    }

    pub fn n_params(&self) -> usize {
        self.slots.len()
    }

    /// Fan-in normal weights, zero biases.
    pub fn init_theta(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.slots
            .iter()
            .map(|k| match k {
                SlotKind::Weight(fan_in) => {
                    normal(rng) / (*fan_in as f64).sqrt()
                }
                SlotKind::Bias => 0.0,
            })
            .collect()
    }

    /// Training objective and gradient at `theta`.
    pub fn objective(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.tape.forward(theta);
        self.tape.backward(self.out, grad);
        self.tape.value(self.out)
    }

    /// Converts a trained vector to raw-unit constants: undo the input
    /// z-scoring per kernel, then shift every log constant by the output
    /// centering according to its position in the expression.
    pub fn to_param_set(&self, theta: &[f64]) -> ParamSet {
        let structure = &self.form.structure;
        let mut params = unflatten(structure, theta).expect("theta matches structure");

        for k in params.kernels.values_mut() {
            let mu: Vec<f64> = k
                .index_set
                .iter()
                .map(|&d| self.stats.log_x_mean[(d - 1) as usize])
                .collect();
            let sd: Vec<f64> = k
                .index_set
                .iter()
                .map(|&d| self.stats.log_x_std[(d - 1) as usize])
                .collect();
            // Slots currently hold network values: offset = bias b0,
            // exponents = weights w/u, location = bias beta, sharpness = v.
            k.log_offset -= k
                .init_exponents
                .iter()
                .zip(mu.iter().zip(&sd))
                .map(|(w, (m, s))| w * m / s)
                .sum::<f64>();
            for (c, si) in k.init_exponents.iter_mut().zip(&sd) {
                *c = -*c / si;
            }
            for b in &mut k.breaks {
                let v = b.sharpness;
                let beta = b.log_location;
                let f = -v;
                let f_abs = f.abs().max(self.f_floor);
                let sign = if f == 0.0 { -1.0 } else { f.signum() };
                b.sharpness = sign * f_abs;
                b.log_location = -(beta
                    - b.exponents
                        .iter()
                        .zip(mu.iter().zip(&sd))
                        .map(|(u, (m, s))| u * m / s)
                        .sum::<f64>())
                    * f_abs;
                for (c, si) in b.exponents.iter_mut().zip(&sd) {
                    *c = *c / si * f_abs;
                }
            }
        }

        let shifts = scale_shifts(&self.form.expr, self.stats.log_y_mean);
        for (id, k) in params.kernels.iter_mut() {
            k.log_offset += shifts.kernel_log_offset.get(id).copied().unwrap_or(0.0);
        }
        if let Some(fl) = params.log_floor.as_mut() {
            *fl += shifts.floor;
        }
        for (role, l) in params.limits.iter_mut() {
            l.log_inverse += shifts.limit_log_inverse.get(role).copied().unwrap_or(0.0);
        }
        params
    }

    pub fn structure(&self) -> &crate::forms::expr::Structure {
        &self.form.structure
    }

    /// Clones the tape so seeds can run on separate buffers in parallel.
    pub fn clone_for_seed(&self) -> NetworkProblem {
        NetworkProblem {
            form: self.form.clone(),
            stats: self.stats.clone(),
            tape: self.tape.clone(),
            out: self.out,
            slots: self.slots.clone(),
            f_floor: self.f_floor,
        }
    }
}

/// Population variance of `ln(y + eps)` over the training targets,
/// guarded away from zero for degenerate (constant-target) sets.
fn log_target_variance(train: &ScalingDataset, eps: f64) -> f64 {
    let ly: Vec<f64> = train.points.iter().map(|p| (p.y + eps).ln()).collect();
    let mu = ly.iter().sum::<f64>() / ly.len() as f64;
    let var = ly.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / ly.len() as f64;
    if var > 0.0 && var.is_finite() {
        var
    } else {
        1.0
    }
}

/// Standard normal via Box-Muller on the given generator.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > 0.0 {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Slot classification in canonical flat order.
fn slot_kinds(form: &CompiledForm) -> Vec<SlotKind> {
    let mut out = Vec::with_capacity(flat_len(&form.structure));
    for slot in form.structure.kernels.values() {
        let m = slot.index_set.len() as u32;
        out.push(SlotKind::Bias); // offset
        for _ in 0..m {
            out.push(SlotKind::Weight(m));
        }
        for _ in 0..slot.break_count {
            for _ in 0..m {
                out.push(SlotKind::Weight(m));
            }
            out.push(SlotKind::Bias); // location
            out.push(SlotKind::Weight(slot.break_count.max(1))); // sharpness
        }
    }
    if form.structure.has_floor {
        out.push(SlotKind::Bias);
    }
    for _ in &form.structure.limit_roles {
        out.push(SlotKind::Bias);
    }
    out
}

/// Kernel outputs in z-space, combined by the form's expression.
fn build_network_output(
    tape: &mut Tape,
    form: &CompiledForm,
    theta: &[NodeId],
    z: &[f64],
) -> NodeId {
    let mut kernel_nodes = std::collections::BTreeMap::new();
    let mut limit_nodes = std::collections::BTreeMap::new();
    let mut floor_node = None;
    let mut off = 0usize;
    for (&id, slot) in &form.structure.kernels {
        let m = slot.index_set.len();
        let zc: Vec<NodeId> = slot
            .index_set
            .iter()
            .map(|&d| tape.constant(z[(d - 1) as usize]))
            .collect();
        // bias + w·z
        let mut node = theta[off];
        for i in 0..m {
            let t = tape.mul(theta[off + 1 + i], zc[i]);
            node = tape.add(node, t);
        }
        let mut boff = off + 1 + m;
        for _ in 0..slot.break_count {
            // v · softplus(u·z + beta)
            let mut a = theta[boff + m]; // beta
            for i in 0..m {
                let t = tape.mul(theta[boff + i], zc[i]);
                a = tape.add(a, t);
            }
            let sp = tape.softplus(a);
            let contrib = tape.mul(theta[boff + m + 1], sp);
            node = tape.add(node, contrib);
            boff += m + 2;
        }
        kernel_nodes.insert(id, node);
        off = boff;
    }
    if form.structure.has_floor {
        floor_node = Some(theta[off]);
        off += 1;
    }
    for &role in &form.structure.limit_roles {
        limit_nodes.insert(role, theta[off]);
        off += 1;
    }
    debug_assert_eq!(off, theta.len());
    build_expr_on_tape(tape, &form.expr, &kernel_nodes, floor_node, &limit_nodes)
}

fn build_expr_on_tape(
    tape: &mut Tape,
    e: &Expr,
    kernels: &std::collections::BTreeMap<u32, NodeId>,
    floor: Option<NodeId>,
    limits: &std::collections::BTreeMap<u32, NodeId>,
) -> NodeId {
    match e {
        Expr::Kernel(id) => kernels[id],
        Expr::Floor => floor.expect("floor slot"),
        Expr::LimitInv(role) => limits[role],
        Expr::Sum(children) => {
            let nodes: Vec<NodeId> = children
                .iter()
                .map(|c| build_expr_on_tape(tape, c, kernels, floor, limits))
                .collect();
            tape.logsumexp(&nodes)
        }
        Expr::Recip(child) => {
            let n = build_expr_on_tape(tape, child, kernels, floor, limits);
            tape.neg(n)
        }
    }
}

/// Loss tape for the DC baseline: trains over
/// `[log_a, log_b1, log_c1, log_b2, log_c2, log_d1, log_d2]` so both
/// exponents stay positive, on raw (un-normalized) inputs — the form's
/// saturation ratios are unit-sensitive.
pub struct DcProblem {
    tape: Tape,
    out: NodeId,
    init_center: [f64; 7],
}

impl DcProblem {
    pub fn new(train: &ScalingDataset, cfg: &FitConfig) -> Result<Self> {
        if train.arity() != 3 {
            return Err(Error::Argument(format!(
                "DC needs 3 input dimensions, got {}",
                train.arity()
            )));
        }
        let mut tape = Tape::new();
        let t: Vec<NodeId> = (0..7).map(|_| tape.var()).collect();
        let c1 = tape.exp(t[2]);
        let c2 = tape.exp(t[4]);
        let p_nodes = [t[0], t[1], c1, t[3], c2, t[5], t[6]];

        let log_eps = cfg.loss_epsilon.ln();
        let mut sq_terms = Vec::with_capacity(train.len());
        for p in &train.points {
            let lx: Vec<NodeId> = p.x.iter().map(|v| tape.constant(v.ln())).collect();
            let raw_log = crate::forms::grad::build_dc_on(&mut tape, &p_nodes, &lx);
            let epsc = tape.constant(log_eps);
            let pred = tape.logsumexp(&[raw_log, epsc]);
            let target = tape.constant((p.y + cfg.loss_epsilon).ln());
            let diff = tape.sub(pred, target);
            sq_terms.push(tape.mul(diff, diff));
        }
        let total = tape.sum(&sq_terms);
        let var = log_target_variance(train, cfg.loss_epsilon);
        let mut out = tape.scale(total, 1.0 / (train.len() as f64 * var));
        if cfg.lambda > 0.0 {
            // L2 on the exponents themselves.
            let c1sq = tape.mul(c1, c1);
            let c2sq = tape.mul(c2, c2);
            let l2 = tape.add(c1sq, c2sq);
            let scaled = tape.scale(l2, 0.5 * cfg.lambda);
            out = tape.add(out, scaled);
        }

        // Data-informed center for initialization: the floor below the
        // smallest target, mild exponents, scale constants matched to the
        // median inputs, unit saturation constants.
        let ys = train.ys();
        let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_mean_log = ys.iter().map(|y| y.ln()).sum::<f64>() / ys.len() as f64;
        let mean_l1 = train.points.iter().map(|p| p.x[0].ln()).sum::<f64>() / train.len() as f64;
        let mean_l3 = train.points.iter().map(|p| p.x[2].ln()).sum::<f64>() / train.len() as f64;
        let c0 = 0.3f64;
        let init_center = [
            (0.5 * y_min).ln(),
            y_mean_log + c0 * mean_l1,
            c0.ln(),
            y_mean_log + c0 * mean_l3,
            c0.ln(),
            0.0,
            0.0,
        ];
        Ok(Self {
            tape,
            out,
            init_center,
        })
    }

    pub fn init_theta(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.init_center
            .iter()
            .map(|c| c + 0.5 * normal(rng))
            .collect()
    }

    pub fn objective(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.tape.forward(theta);
        self.tape.backward(self.out, grad);
        self.tape.value(self.out)
    }

    pub fn to_dc_params(&self, theta: &[f64]) -> DcParams {
        dc_unflatten(&[
            theta[0],
            theta[1],
            theta[2].exp(),
            theta[3],
            theta[4].exp(),
            theta[5],
            theta[6],
        ])
    }

    pub fn clone_for_seed(&self) -> DcProblem {
        DcProblem {
            tape: self.tape.clone(),
            out: self.out,
            init_center: self.init_center,
        }
    }
}
