//! Numerically stable evaluation of every functional form.
//!
//! All arithmetic runs in log space: sums of nonnegative terms go through
//! `logsumexp`, reciprocals are negations, and the limit composition
//! `(Y^{-1} + a^{-1})^{-1}` uses a guarded `log1p`-of-exp, so evaluation
//! never overflows for inputs with |log x| up to ~700.

use crate::error::{Error, Result};
use crate::forms::expr::{build_expr, Expr, Structure};
use crate::forms::{CfParams, DcParams, FormSpec, MbnslParams, ParamSet, F_FLOOR};
use crate::numerics::{logsumexp, softplus};

/// log of the kernel value at `log_x`, which carries one entry per element
/// of the kernel's index set (in index-set order).
pub fn log_eval_mbnsl(params: &MbnslParams, log_x: &[f64]) -> Result<f64> {
    if log_x.len() != params.index_set.len() {
        return Err(Error::Argument(format!(
            "kernel {}: {} log-inputs for {} dimensions",
            params.kernel_id,
            log_x.len(),
            params.index_set.len()
        )));
    }
    Ok(log_eval_mbnsl_unchecked(params, log_x))
}

pub(crate) fn log_eval_mbnsl_unchecked(params: &MbnslParams, log_x: &[f64]) -> f64 {
    let mut ly = params.log_offset;
    for (c0, lx) in params.init_exponents.iter().zip(log_x) {
        ly -= c0 * lx;
    }
    for br in &params.breaks {
        let mut t = -br.log_location;
        for (c, lx) in br.exponents.iter().zip(log_x) {
            t += c * lx;
        }
        ly -= br.sharpness * softplus(t / br.sharpness.abs());
    }
    ly
}

/// Kernel value at positive inputs (one per index-set element).
pub fn eval_mbnsl(params: &MbnslParams, x: &[f64]) -> Result<f64> {
    let log_x = logs_of(x)?;
    Ok(log_eval_mbnsl(params, &log_x)?.exp())
}

fn logs_of(x: &[f64]) -> Result<Vec<f64>> {
    x.iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!(
                    "inputs must be positive and finite, got {v}"
                )))
            }
        })
        .collect()
}

/// A form's expression tree paired with its parameter inventory, reusable
/// across many evaluations of the same spec.
#[derive(Debug, Clone)]
pub struct CompiledForm {
    pub spec: FormSpec,
    pub expr: Expr,
    pub structure: Structure,
}

impl CompiledForm {
    pub fn new(spec: &FormSpec) -> Result<Self> {
        let (expr, structure) = build_expr(spec)?;
        Ok(Self {
            spec: spec.clone(),
            expr,
            structure,
        })
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.structure.check_params(params, F_FLOOR)
    }

    /// log y at `log_x` (one entry per input dimension). Parameters are
    /// assumed already checked against the structure.
    pub fn log_eval(&self, params: &ParamSet, log_x: &[f64]) -> f64 {
        log_eval_expr(&self.expr, params, log_x)
    }

    pub fn eval(&self, params: &ParamSet, x: &[f64]) -> Result<f64> {
        if x.len() != self.spec.arity {
            return Err(Error::Argument(format!(
                "expected {} inputs, got {}",
                self.spec.arity,
                x.len()
            )));
        }
        self.check_params(params)?;
        let log_x = logs_of(x)?;
        Ok(self.log_eval(params, &log_x).exp())
    }
}

fn log_eval_expr(e: &Expr, params: &ParamSet, log_x: &[f64]) -> f64 {
    match e {
        Expr::Kernel(id) => {
            let k = &params.kernels[id];
            let selected: Vec<f64> = k
                .index_set
                .iter()
                .map(|&d| log_x[(d - 1) as usize])
                .collect();
            log_eval_mbnsl_unchecked(k, &selected)
        }
        Expr::Floor => params.log_floor.unwrap_or(f64::NEG_INFINITY),
        Expr::LimitInv(role) => params.limits[role].log_inverse,
        Expr::Sum(children) => {
            let terms: Vec<f64> = children
                .iter()
                .map(|c| log_eval_expr(c, params, log_x))
                .collect();
            logsumexp(&terms)
        }
        Expr::Recip(child) => -log_eval_expr(child, params, log_x),
    }
}

/// y at positive inputs for any structured form (UNSL, A1, A2, A3, CF).
pub fn eval_form(spec: &FormSpec, params: &ParamSet, x: &[f64]) -> Result<f64> {
    CompiledForm::new(spec)?.eval(params, x)
}

/// y = a + b1·x1^{-c1} + b2·x2^{-c2}.
pub fn eval_cf(params: &CfParams, x1: f64, x2: f64) -> Result<f64> {
    let lx = logs_of(&[x1, x2])?;
    Ok(log_eval_cf(params, lx[0], lx[1]).exp())
}

pub(crate) fn log_eval_cf(params: &CfParams, log_x1: f64, log_x2: f64) -> f64 {
    logsumexp(&[
        params.log_a,
        params.log_b1 - params.c1 * log_x1,
        params.log_b2 - params.c2 * log_x2,
    ])
}

/// The saturating baseline over (x1, x2, x3). Excess data (x2 over x3) and
/// excess parameters (x1 over the data-dependent cap U_N) decay
/// exponentially toward saturation; below both caps it coincides with CF
/// evaluated at (x1, x3).
pub fn eval_dc(params: &DcParams, x1: f64, x2: f64, x3: f64) -> Result<f64> {
    params.validate()?;
    logs_of(&[x1, x2, x3])?;
    let p = params;
    let (b1, b2) = (p.log_b1.exp(), p.log_b2.exp());
    let (d1, d2) = (p.log_d1.exp(), p.log_d2.exp());

    let r_d = 0.0f64.max(x2 / x3 - 1.0);
    // G = ((c1 b1)/(c2 b2))^{1/(c1+c2)}; the ratio is positive because
    // c1, c2 share a sign (validated) and b1, b2 > 0 by storage.
    let g = ((p.c1 * b1) / (p.c2 * b2)).powf(1.0 / (p.c1 + p.c2));
    let cap = (x3 * g).powf(p.c2 / p.c1) * g;
    let u_n = if x1 <= cap { x1 } else { cap };
    let r_n = 0.0f64.max(x1 / u_n - 1.0);

    let eff_n = u_n + u_n * d1 * (1.0 - (-r_n / d1).exp());
    let eff_d = x3 + x3 * d2 * (1.0 - (-r_d / d2).exp());
    Ok(logsumexp(&[
        p.log_a,
        p.log_b1 - p.c1 * eff_n.ln(),
        p.log_b2 - p.c2 * eff_d.ln(),
    ])
    .exp())
}

/// CF constants as the equivalent structured parameter set (floor plus two
/// single-dimension power-law kernels with ids 1 and 2).
pub fn cf_to_param_set(params: &CfParams) -> ParamSet {
    let mut out = ParamSet {
        log_floor: Some(params.log_a),
        ..Default::default()
    };
    out.insert_kernel(MbnslParams::power_law(1, vec![1], params.log_b1, vec![params.c1]));
    out.insert_kernel(MbnslParams::power_law(2, vec![2], params.log_b2, vec![params.c2]));
    out
}

/// Inverse of [`cf_to_param_set`].
pub fn param_set_to_cf(params: &ParamSet) -> Result<CfParams> {
    let get = |id: u32| -> Result<&MbnslParams> {
        params
            .kernels
            .get(&id)
            .ok_or_else(|| Error::Config(format!("missing CF kernel {id}")))
    };
    let k1 = get(1)?;
    let k2 = get(2)?;
    if !k1.breaks.is_empty() || !k2.breaks.is_empty() || k1.arity() != 1 || k2.arity() != 1 {
        return Err(Error::Config(
            "CF kernels must be single-dimension power laws".into(),
        ));
    }
    Ok(CfParams {
        log_a: params
            .log_floor
            .ok_or_else(|| Error::Config("missing CF floor".into()))?,
        log_b1: k1.log_offset,
        c1: k1.init_exponents[0],
        log_b2: k2.log_offset,
        c2: k2.init_exponents[0],
    })
}
