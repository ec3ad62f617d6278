//! Exact reverse-mode gradients of the forms with respect to both the
//! stored parameters and the inputs.
//!
//! Parameters are exchanged with callers as a flat vector in a canonical
//! order: kernels ascending by id (offset, initial exponents, then per
//! break its exponents, location, sharpness), the floor, then limit
//! constants ascending by role. [`flat_names`] documents the order.

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::forms::eval::CompiledForm;
use crate::forms::expr::{Expr, Structure};
use crate::forms::{Break, DcParams, FormSpec, MbnslParams, ParamSet};

/// Number of flat parameters a structure demands.
pub fn flat_len(structure: &Structure) -> usize {
    let mut n = 0;
    for slot in structure.kernels.values() {
        let m = slot.index_set.len();
        n += 1 + m + slot.break_count as usize * (m + 2);
    }
    if structure.has_floor {
        n += 1;
    }
    n + structure.limit_roles.len()
}

/// Human-readable name of each flat slot, in order.
pub fn flat_names(structure: &Structure) -> Vec<String> {
    let mut names = Vec::with_capacity(flat_len(structure));
    for (&id, slot) in &structure.kernels {
        names.push(format!("kernel{id}.log_offset"));
        for &d in &slot.index_set {
            names.push(format!("kernel{id}.c{d}_0"));
        }
        for j in 1..=slot.break_count {
            for &d in &slot.index_set {
                names.push(format!("kernel{id}.c{d}_{j}"));
            }
            names.push(format!("kernel{id}.log_location_{j}"));
            names.push(format!("kernel{id}.sharpness_{j}"));
        }
    }
    if structure.has_floor {
        names.push("log_floor".into());
    }
    for &role in &structure.limit_roles {
        names.push(format!("limit{role}.log_inverse"));
    }
    names
}

/// Parameter set → flat vector (assumes the set matches the structure).
pub fn flatten(structure: &Structure, params: &ParamSet) -> Vec<f64> {
    let mut out = Vec::with_capacity(flat_len(structure));
    for &id in structure.kernels.keys() {
        let k = &params.kernels[&id];
        out.push(k.log_offset);
        out.extend_from_slice(&k.init_exponents);
        for b in &k.breaks {
            out.extend_from_slice(&b.exponents);
            out.push(b.log_location);
            out.push(b.sharpness);
        }
    }
    if structure.has_floor {
        out.push(params.log_floor.unwrap_or(f64::NEG_INFINITY));
    }
    for role in &structure.limit_roles {
        out.push(params.limits[role].log_inverse);
    }
    out
}

/// Flat vector → parameter set.
pub fn unflatten(structure: &Structure, flat: &[f64]) -> Result<ParamSet> {
    if flat.len() != flat_len(structure) {
        return Err(Error::Argument(format!(
            "expected {} flat parameters, got {}",
            flat_len(structure),
            flat.len()
        )));
    }
    let mut params = ParamSet::default();
    let mut i = 0;
    let mut take = |n: usize| {
        let s = &flat[i..i + n];
        i += n;
        s.to_vec()
    };
    for (&id, slot) in &structure.kernels {
        let m = slot.index_set.len();
        let log_offset = take(1)[0];
        let init_exponents = take(m);
        let mut breaks = Vec::with_capacity(slot.break_count as usize);
        for _ in 0..slot.break_count {
            let exponents = take(m);
            let rest = take(2);
            breaks.push(Break {
                exponents,
                log_location: rest[0],
                sharpness: rest[1],
            });
        }
        params.insert_kernel(MbnslParams {
            kernel_id: id,
            index_set: slot.index_set.clone(),
            log_offset,
            init_exponents,
            breaks,
        });
    }
    if structure.has_floor {
        params.log_floor = Some(take(1)[0]);
    }
    for &role in &structure.limit_roles {
        params
            .limits
            .insert(role, crate::forms::LimitConstant { log_inverse: take(1)[0] });
    }
    Ok(params)
}

/// Reusable differentiation tape for one structured form. Inputs to the
/// tape are the flat parameters followed by the log of each input
/// dimension; the output is log y.
pub struct FormTape {
    tape: Tape,
    out: NodeId,
    n_params: usize,
    arity: usize,
    buf: Vec<f64>,
    grad_buf: Vec<f64>,
}

impl FormTape {
    pub fn build(form: &CompiledForm) -> Self {
        let structure = &form.structure;
        let mut tape = Tape::new();
        let n_params = flat_len(structure);
        let param_nodes: Vec<NodeId> = (0..n_params).map(|_| tape.var()).collect();
        let arity = form.spec.arity;
        let lx_nodes: Vec<NodeId> = (0..arity).map(|_| tape.var()).collect();

        // Kernel log values, then the expression tree on top of them.
        let mut kernel_nodes = std::collections::BTreeMap::new();
        let mut offset = 0usize;
        for (&id, slot) in &structure.kernels {
            let m = slot.index_set.len();
            let lx: Vec<NodeId> = slot
                .index_set
                .iter()
                .map(|&d| lx_nodes[(d - 1) as usize])
                .collect();
            let node = build_kernel(
                &mut tape,
                &param_nodes[offset..offset + 1 + m + slot.break_count as usize * (m + 2)],
                &lx,
                m,
                slot.break_count as usize,
            );
            kernel_nodes.insert(id, node);
            offset += 1 + m + slot.break_count as usize * (m + 2);
        }
        let floor_node = if structure.has_floor {
            let n = param_nodes[offset];
            offset += 1;
            Some(n)
        } else {
            None
        };
        let mut limit_nodes = std::collections::BTreeMap::new();
        for &role in &structure.limit_roles {
            limit_nodes.insert(role, param_nodes[offset]);
            offset += 1;
        }
        debug_assert_eq!(offset, n_params);

        let out = build_expr_node(&mut tape, &form.expr, &kernel_nodes, floor_node, &limit_nodes);
        Self {
            tape,
            out,
            n_params,
            arity,
            buf: vec![0.0; n_params + arity],
            grad_buf: vec![0.0; n_params + arity],
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// log y at the given flat parameters and log inputs.
    pub fn log_value(&mut self, flat: &[f64], log_x: &[f64]) -> f64 {
        self.load(flat, log_x);
        self.tape.forward(&self.buf);
        self.tape.value(self.out)
    }

    /// log y plus its gradient w.r.t. (flat params, log inputs).
    pub fn log_grad(&mut self, flat: &[f64], log_x: &[f64]) -> (f64, &[f64], &[f64]) {
        self.load(flat, log_x);
        self.tape.forward(&self.buf);
        self.tape.backward(self.out, &mut self.grad_buf);
        (
            self.tape.value(self.out),
            &self.grad_buf[..self.n_params],
            &self.grad_buf[self.n_params..],
        )
    }

    fn load(&mut self, flat: &[f64], log_x: &[f64]) {
        assert_eq!(flat.len(), self.n_params);
        assert_eq!(log_x.len(), self.arity);
        self.buf[..self.n_params].copy_from_slice(flat);
        self.buf[self.n_params..].copy_from_slice(log_x);
    }
}

/// log K on the tape. `p` holds the kernel's slice of the flat layout.
fn build_kernel(tape: &mut Tape, p: &[NodeId], lx: &[NodeId], m: usize, n_breaks: usize) -> NodeId {
    let mut ly = p[0];
    for i in 0..m {
        let t = tape.mul(p[1 + i], lx[i]);
        ly = tape.sub(ly, t);
    }
    let mut off = 1 + m;
    for _ in 0..n_breaks {
        let exps = &p[off..off + m];
        let log_loc = p[off + m];
        let sharp = p[off + m + 1];
        off += m + 2;
        let mut t = tape.neg(log_loc);
        for i in 0..m {
            let prod = tape.mul(exps[i], lx[i]);
            t = tape.add(t, prod);
        }
        let absf = tape.abs(sharp);
        let arg = tape.div(t, absf);
        let sp = tape.softplus(arg);
        let term = tape.mul(sharp, sp);
        ly = tape.sub(ly, term);
    }
    ly
}

fn build_expr_node(
    tape: &mut Tape,
    e: &Expr,
    kernels: &std::collections::BTreeMap<u32, NodeId>,
    floor: Option<NodeId>,
    limits: &std::collections::BTreeMap<u32, NodeId>,
) -> NodeId {
    match e {
        Expr::Kernel(id) => kernels[id],
        Expr::Floor => floor.expect("form with a floor"),
        Expr::LimitInv(role) => limits[role],
        Expr::Sum(children) => {
            let nodes: Vec<NodeId> = children
                .iter()
                .map(|c| build_expr_node(tape, c, kernels, floor, limits))
                .collect();
            tape.logsumexp(&nodes)
        }
        Expr::Recip(child) => {
            let n = build_expr_node(tape, child, kernels, floor, limits);
            tape.neg(n)
        }
    }
}

/// Gradient of y (raw scale) w.r.t. the flat parameters and the inputs.
pub fn grad_form(spec: &FormSpec, params: &ParamSet, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let form = CompiledForm::new(spec)?;
    form.check_params(params)?;
    if x.len() != spec.arity {
        return Err(Error::Argument(format!(
            "expected {} inputs, got {}",
            spec.arity,
            x.len()
        )));
    }
    let log_x: Vec<f64> = x
        .iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!(
                    "inputs must be positive and finite, got {v}"
                )))
            }
        })
        .collect::<Result<_>>()?;
    let flat = flatten(&form.structure, params);
    let mut tape = FormTape::build(&form);
    let (log_y, dparams, dlogx) = tape.log_grad(&flat, &log_x);
    let y = log_y.exp();
    let dp = dparams.iter().map(|g| g * y).collect();
    let dx = dlogx
        .iter()
        .zip(x)
        .map(|(g, &xi)| g * y / xi)
        .collect();
    Ok((dp, dx))
}

/// Differentiation tape for the DC baseline. Inputs: the seven parameters
/// `[log_a, log_b1, c1, log_b2, c2, log_d1, log_d2]` followed by the three
/// log inputs; output is log y.
pub struct DcTape {
    tape: Tape,
    out: NodeId,
    buf: Vec<f64>,
    grad_buf: Vec<f64>,
}

pub const DC_PARAM_NAMES: [&str; 7] =
    ["log_a", "log_b1", "c1", "log_b2", "c2", "log_d1", "log_d2"];

pub fn dc_flat(p: &DcParams) -> [f64; 7] {
    [p.log_a, p.log_b1, p.c1, p.log_b2, p.c2, p.log_d1, p.log_d2]
}

pub fn dc_unflatten(flat: &[f64]) -> DcParams {
    DcParams {
        log_a: flat[0],
        log_b1: flat[1],
        c1: flat[2],
        log_b2: flat[3],
        c2: flat[4],
        log_d1: flat[5],
        log_d2: flat[6],
    }
}

impl DcTape {
    pub fn build() -> Self {
        let mut tape = Tape::new();
        let p: Vec<NodeId> = (0..7).map(|_| tape.var()).collect();
        let lx: Vec<NodeId> = (0..3).map(|_| tape.var()).collect();
        let out = build_dc(&mut tape, &p, &lx);
        Self {
            tape,
            out,
            buf: vec![0.0; 10],
            grad_buf: vec![0.0; 10],
        }
    }

    pub fn log_value(&mut self, flat: &[f64; 7], log_x: &[f64; 3]) -> f64 {
        self.buf[..7].copy_from_slice(flat);
        self.buf[7..].copy_from_slice(log_x);
        self.tape.forward(&self.buf);
        self.tape.value(self.out)
    }

    /// log y plus its gradient w.r.t. (the 7 params, the 3 log inputs).
    pub fn log_grad(&mut self, flat: &[f64; 7], log_x: &[f64; 3]) -> (f64, [f64; 7], [f64; 3]) {
        let v = self.log_value(flat, log_x);
        self.tape.backward(self.out, &mut self.grad_buf);
        let mut dp = [0.0; 7];
        dp.copy_from_slice(&self.grad_buf[..7]);
        let mut dx = [0.0; 3];
        dx.copy_from_slice(&self.grad_buf[7..]);
        (v, dp, dx)
    }
}

/// The DC formula on the tape. Saturation kinks use exact max/min; on a
/// tie the gradient follows the first argument, so the saturated branch
/// gets zero gradient exactly at the kink.
pub(crate) fn build_dc_on(tape: &mut Tape, p: &[NodeId], lx: &[NodeId]) -> NodeId {
    build_dc(tape, p, lx)
}

fn build_dc(tape: &mut Tape, p: &[NodeId], lx: &[NodeId]) -> NodeId {
    let (log_a, log_b1, c1, log_b2, c2) = (p[0], p[1], p[2], p[3], p[4]);
    let (log_d1, log_d2) = (p[5], p[6]);
    let x: Vec<NodeId> = lx.iter().map(|&n| tape.exp(n)).collect();
    let zero = tape.constant(0.0);
    let one = tape.constant(1.0);
    let d1 = tape.exp(log_d1);
    let d2 = tape.exp(log_d2);

    // Excess-data ratio R_D = max(0, x2/x3 - 1).
    let ratio_d = tape.div(x[1], x[2]);
    let rd_raw = tape.sub(ratio_d, one);
    let r_d = tape.max(zero, rd_raw);

    // log G = (log(c1/c2) + log_b1 - log_b2) / (c1 + c2); c1/c2 > 0 for
    // valid parameters regardless of the shared sign.
    let c_ratio = tape.div(c1, c2);
    let log_c_ratio = tape.ln(c_ratio);
    let num = {
        let t = tape.add(log_c_ratio, log_b1);
        tape.sub(t, log_b2)
    };
    let c_sum = tape.add(c1, c2);
    let log_g = tape.div(num, c_sum);

    // Parameter cap U_N = min(x1, (x3·G)^{c2/c1}·G).
    let c_exp = tape.div(c2, c1);
    let lx3g = tape.add(lx[2], log_g);
    let pow = tape.mul(c_exp, lx3g);
    let log_cap = tape.add(pow, log_g);
    let cap = tape.exp(log_cap);
    let u_n = tape.min(x[0], cap);

    // Excess-parameter ratio R_N = max(0, x1/U_N - 1).
    let ratio_n = tape.div(x[0], u_n);
    let rn_raw = tape.sub(ratio_n, one);
    let r_n = tape.max(zero, rn_raw);

    let eff_n = saturated(tape, u_n, r_n, d1, one);
    let eff_d = saturated(tape, x[2], r_d, d2, one);

    let t1 = {
        let le = tape.ln(eff_n);
        let ce = tape.mul(c1, le);
        tape.sub(log_b1, ce)
    };
    let t2 = {
        let le = tape.ln(eff_d);
        let ce = tape.mul(c2, le);
        tape.sub(log_b2, ce)
    };
    tape.logsumexp(&[log_a, t1, t2])
}

/// base + base·d·(1 − e^{−r/d}) — the effective quantity after saturating
/// the excess ratio r with decay constant d.
fn saturated(tape: &mut Tape, base: NodeId, r: NodeId, d: NodeId, one: NodeId) -> NodeId {
    let rd = tape.div(r, d);
    let nrd = tape.neg(rd);
    let e = tape.exp(nrd);
    let omx = tape.sub(one, e);
    let scaled = tape.mul(d, omx);
    let bump = tape.add(one, scaled);
    tape.mul(base, bump)
}

/// Gradient of the DC value w.r.t. its seven parameters and three inputs.
pub fn grad_dc(params: &DcParams, x: &[f64]) -> Result<([f64; 7], [f64; 3])> {
    params.validate()?;
    if x.len() != 3 {
        return Err(Error::Argument(format!("DC takes 3 inputs, got {}", x.len())));
    }
    for &v in x {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!(
                "inputs must be positive and finite, got {v}"
            )));
        }
    }
    let log_x = [x[0].ln(), x[1].ln(), x[2].ln()];
    let mut tape = DcTape::build();
    let (log_y, dp_log, dx_log) = tape.log_grad(&dc_flat(params), &log_x);
    let y = log_y.exp();
    let mut dp = [0.0; 7];
    for i in 0..7 {
        dp[i] = dp_log[i] * y;
    }
    let mut dx = [0.0; 3];
    for i in 0..3 {
        dx[i] = dx_log[i] * y / x[i];
    }
    Ok((dp, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::eval::{eval_dc, eval_form};
    use crate::forms::{FormKind, LimitConstant};

    fn fd_param(
        f: &dyn Fn(&[f64]) -> f64,
        theta: &[f64],
        i: usize,
    ) -> f64 {
        let h = 1e-6 * theta[i].abs().max(1.0);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[i] += h;
        tm[i] -= h;
        (f(&tp) - f(&tm)) / (2.0 * h)
    }

    fn sample_unsl() -> (FormSpec, ParamSet) {
        let spec = FormSpec::new(FormKind::Unsl, 2)
            .with_breaks(1)
            .with_oppositional(1)
            .with_metric_upper_limit(true);
        let form = CompiledForm::new(&spec).unwrap();
        let n = flat_len(&form.structure);
        // Deterministic smallish values; sharpness slots get pushed away
        // from zero below.
        let flat: Vec<f64> = (0..n).map(|i| 0.3 * ((i as f64) * 0.7).sin()).collect();
        let mut params = unflatten(&form.structure, &flat).unwrap();
        for k in params.kernels.values_mut() {
            for b in &mut k.breaks {
                b.sharpness = if b.sharpness >= 0.0 {
                    b.sharpness + 0.5
                } else {
                    b.sharpness - 0.5
                };
            }
        }
        for l in params.limits.values_mut() {
            l.log_inverse = l.log_inverse.abs() - 1.0;
        }
        params.log_floor = Some(-2.0);
        (spec, params)
    }

    #[test]
    fn flatten_round_trips() {
        let (spec, params) = sample_unsl();
        let form = CompiledForm::new(&spec).unwrap();
        let flat = flatten(&form.structure, &params);
        assert_eq!(flat.len(), flat_len(&form.structure));
        assert_eq!(flat_names(&form.structure).len(), flat.len());
        let back = unflatten(&form.structure, &flat).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn form_gradient_matches_finite_differences() {
        let (spec, params) = sample_unsl();
        let form = CompiledForm::new(&spec).unwrap();
        let x = [12.0, 130.0];
        let (dp, dx) = grad_form(&spec, &params, &x).unwrap();

        let st = form.structure.clone();
        let flat = flatten(&st, &params);
        let sp = spec.clone();
        let value = move |theta: &[f64]| {
            let p = unflatten(&st, theta).unwrap();
            eval_form(&sp, &p, &x).unwrap()
        };
        for i in 0..flat.len() {
            let fd = fd_param(&value, &flat, i);
            let denom = dp[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (dp[i] - fd).abs() / denom < 1e-5,
                "param {} ({}): {} vs fd {}",
                i,
                flat_names(&form.structure)[i],
                dp[i],
                fd
            );
        }
        let value_x = |xs: &[f64]| eval_form(&spec, &params, xs).unwrap();
        for i in 0..2 {
            let fd = fd_param(&value_x, &x, i);
            let denom = dx[i].abs().max(fd.abs()).max(1e-8);
            assert!((dx[i] - fd).abs() / denom < 1e-5, "input {i}: {} vs {fd}", dx[i]);
        }
    }

    #[test]
    fn constant_form_has_zero_input_gradient() {
        let spec = FormSpec::new(FormKind::A1, 2).with_breaks(0);
        let mut params = ParamSet::default();
        params.insert_kernel(MbnslParams::power_law(0, vec![1, 2], 1.0, vec![0.0, 0.0]));
        let (_, dx) = grad_form(&spec, &params, &[3.0, 4.0]).unwrap();
        assert_eq!(dx, vec![0.0, 0.0]);
    }

    #[test]
    fn pure_power_law_log_slope_is_minus_c0() {
        let spec = FormSpec::new(FormKind::A1, 2).with_breaks(0);
        let mut params = ParamSet::default();
        params.insert_kernel(MbnslParams::power_law(0, vec![1, 2], 0.3, vec![0.7, -0.2]));
        let form = CompiledForm::new(&spec).unwrap();
        let mut tape = FormTape::build(&form);
        let flat = flatten(&form.structure, &params);
        let (_, _, dlx) = tape.log_grad(&flat, &[1.7, -0.4]);
        assert!((dlx[0] + 0.7).abs() < 1e-14);
        assert!((dlx[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn infinite_limits_get_zero_gradient() {
        let mut spec = FormSpec::new(FormKind::Unsl, 1)
            .with_breaks(0)
            .with_oppositional(0)
            .with_overfit(false);
        spec.bottleneck_sets.insert(3, vec![]);
        let mut params = ParamSet::default();
        params.insert_kernel(MbnslParams::power_law(6, vec![1], 0.0, vec![1.0]));
        params.limits.insert(3, LimitConstant::INFINITE);
        params.log_floor = Some(f64::NEG_INFINITY);
        let (dp, dx) = grad_form(&spec, &params, &[2.0]).unwrap();
        // Flat order: kernel offset, c, floor, limit3.
        assert!(dp[2] == 0.0 && dp[3] == 0.0, "{dp:?}");
        // y = 1/x so dy/dx = -1/4 at x = 2.
        assert!((dx[0] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn dc_gradient_matches_finite_differences() {
        let p = DcParams {
            log_a: -1.2,
            log_b1: 0.4,
            c1: 0.5,
            log_b2: 0.1,
            c2: 0.3,
            log_d1: -0.7,
            log_d2: 0.6,
        };
        // Off-kink point: x2 > x3 (data excess active) and x1 above the cap.
        let x = [500.0, 40.0, 10.0];
        let (dp, dx) = grad_dc(&p, &x).unwrap();
        let flat = dc_flat(&p);
        let value = |theta: &[f64]| {
            eval_dc(&dc_unflatten(theta), x[0], x[1], x[2]).unwrap()
        };
        for i in 0..7 {
            let fd = fd_param(&value, &flat, i);
            let denom = dp[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (dp[i] - fd).abs() / denom < 1e-5,
                "param {}: {} vs fd {}",
                DC_PARAM_NAMES[i],
                dp[i],
                fd
            );
        }
        let value_x = |xs: &[f64]| eval_dc(&p, xs[0], xs[1], xs[2]).unwrap();
        for i in 0..3 {
            let fd = fd_param(&value_x, &x, i);
            let denom = dx[i].abs().max(fd.abs()).max(1e-8);
            assert!((dx[i] - fd).abs() / denom < 1e-5, "x{i}: {} vs {fd}", dx[i]);
        }
    }

    #[test]
    fn dc_tape_agrees_with_direct_eval() {
        let p = DcParams {
            log_a: -0.5,
            log_b1: 0.2,
            c1: 0.6,
            log_b2: -0.1,
            c2: 0.4,
            log_d1: 0.0,
            log_d2: 0.3,
        };
        let mut tape = DcTape::build();
        for x in [[3.0, 5.0, 2.0], [1e4, 1e2, 1e3], [0.5, 0.5, 0.5]] {
            let direct = eval_dc(&p, x[0], x[1], x[2]).unwrap();
            let via = tape
                .log_value(&dc_flat(&p), &[x[0].ln(), x[1].ln(), x[2].ln()])
                .exp();
            assert!(
                (direct - via).abs() / direct < 1e-12,
                "at {x:?}: {direct} vs {via}"
            );
        }
    }
}
