//! Downstream analyses on fitted forms: noiseless simulation for
//! recovery studies, compute-optimal input allocation under a
//! multiplicative budget, and multi-form comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{DataPoint, ScalingDataset};
use crate::error::{Error, Result};
use crate::fit::optim::{minimize, OptimOptions};
use crate::fit::{fit_form, fit_selected, score_on, FitConfig, FitResult, Grids, Score};
use crate::forms::eval::CompiledForm;
use crate::forms::grad::{flatten, FormTape};
use crate::forms::{FormSpec, ParamSet};

/// Evaluates the form exactly on a grid of input points, producing a
/// noise-free dataset for simulate-and-recover experiments.
pub fn simulate_noiseless(
    spec: &FormSpec,
    params: &ParamSet,
    grid: &[Vec<f64>],
) -> Result<ScalingDataset> {
    if grid.is_empty() {
        return Err(Error::Argument("simulation grid must be nonempty".into()));
    }
    let form = CompiledForm::new(spec)?;
    form.check_params(params)?;
    let points = grid
        .iter()
        .map(|x| {
            let y = form.eval(params, x)?;
            Ok(DataPoint { x: x.clone(), y })
        })
        .collect::<Result<Vec<_>>>()?;
    let dim_names = (1..=spec.arity).map(|i| format!("x{i}")).collect();
    ScalingDataset::new(points, dim_names, "y".into())
}

/// Training-compute budget C = C0 · Π_{ℓ∈D} x_ℓ over the compute
/// dimensions D, with optionally some free dimensions H optimized without
/// constraint and the remaining dimensions pinned to fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeBudget {
    pub c: f64,
    pub c0: f64,
    /// D — 1-based dimensions whose product is constrained.
    pub compute_dims: Vec<u32>,
    /// H — 1-based dimensions minimized over freely.
    pub free_dims: Vec<u32>,
    /// Values for dimensions in neither D nor H.
    pub fixed: BTreeMap<u32, f64>,
}

impl ComputeBudget {
    pub fn new(c: f64, compute_dims: Vec<u32>) -> Self {
        Self {
            c,
            c0: 6.0,
            compute_dims,
            free_dims: Vec::new(),
            fixed: BTreeMap::new(),
        }
    }

    pub fn with_free_dims(mut self, free_dims: Vec<u32>) -> Self {
        self.free_dims = free_dims;
        self
    }

    pub fn with_fixed(mut self, dim: u32, value: f64) -> Self {
        self.fixed.insert(dim, value);
        self
    }

    pub fn validate(&self, arity: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) || !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::Argument("C and C0 must be positive and finite".into()));
        }
        if self.compute_dims.is_empty() {
            return Err(Error::Argument("compute dimension set must be nonempty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &d in self
            .compute_dims
            .iter()
            .chain(&self.free_dims)
            .chain(self.fixed.keys())
        {
            if d == 0 || d as usize > arity {
                return Err(Error::Argument(format!(
                    "dimension {d} out of range 1..={arity}"
                )));
            }
            if !seen.insert(d) {
                return Err(Error::Argument(format!(
                    "dimension {d} appears in more than one role"
                )));
            }
        }
        if seen.len() != arity {
            return Err(Error::Argument(
                "every dimension needs a role: compute, free, or fixed".into(),
            ));
        }
        for (&d, &v) in &self.fixed {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!(
                    "fixed value for dimension {d} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Solution of the budget-constrained minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeOptimum {
    /// Input allocation, all dimensions.
    pub x: Vec<f64>,
    /// Predicted metric there.
    pub y: f64,
    /// Recovered Lagrange multiplier of the compute constraint.
    pub lagrange_multiplier: f64,
    /// Max-norm of the projected log-space gradient at the solution.
    pub stationarity: f64,
    /// |C − C0·Πx_ℓ| / C at the solution.
    pub constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ComputeOptimalOptions {
    pub starts: usize,
    pub max_steps: usize,
    pub seed_base: u64,
    /// Required max-norm of the projected gradient.
    pub stationarity_tol: f64,
}

impl Default for ComputeOptimalOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            max_steps: 4000,
            seed_base: 0,
            stationarity_tol: 1e-8,
        }
    }
}

/// Minimizes the fitted metric over the budget simplex.
///
/// The constraint is eliminated rather than handled with a multiplier:
/// the last compute dimension's log is determined by the others through
/// Σ_{ℓ∈D} log x_ℓ = log(C/C0), and the reduced problem is minimized with
/// the usual quasi-Newton routine from several random interior starts.
/// The multiplier is recovered afterward from the stationarity system.
pub fn compute_optimal(
    spec: &FormSpec,
    params: &ParamSet,
    budget: &ComputeBudget,
) -> Result<ComputeOptimum> {
    compute_optimal_with(spec, params, budget, &ComputeOptimalOptions::default())
}

pub fn compute_optimal_with(
    spec: &FormSpec,
    params: &ParamSet,
    budget: &ComputeBudget,
    opts: &ComputeOptimalOptions,
) -> Result<ComputeOptimum> {
    budget.validate(spec.arity)?;
    let form = CompiledForm::new(spec)?;
    form.check_params(params)?;
    let flat = flatten(&form.structure, params);
    let arity = spec.arity;
    let log_budget = (budget.c / budget.c0).ln();
    let d = &budget.compute_dims;
    let k = d.len();
    let h = &budget.free_dims;
    let n_vars = (k - 1) + h.len();

    // Reduced variables t → full log-x vector.
    let assemble = |t: &[f64]| -> Vec<f64> {
        let mut lx = vec![0.0; arity];
        for (&dim, &v) in &budget.fixed {
            lx[(dim - 1) as usize] = v.ln();
        }
        let mut partial = 0.0;
        for (i, &dim) in d.iter().take(k - 1).enumerate() {
            lx[(dim - 1) as usize] = t[i];
            partial += t[i];
        }
        lx[(d[k - 1] - 1) as usize] = log_budget - partial;
        for (i, &dim) in h.iter().enumerate() {
            lx[(dim - 1) as usize] = t[k - 1 + i];
        }
        lx
    };

    // Projected log-space gradient of log y at a reduced point.
    let tape = std::cell::RefCell::new(FormTape::build(&form));
    let objective = |t: &[f64], grad: &mut [f64]| -> f64 {
        let lx = assemble(t);
        let mut tp = tape.borrow_mut();
        let (log_y, _, dlx) = tp.log_grad(&flat, &lx);
        let g_last = dlx[(d[k - 1] - 1) as usize];
        for (i, &dim) in d.iter().take(k - 1).enumerate() {
            grad[i] = dlx[(dim - 1) as usize] - g_last;
        }
        for (i, &dim) in h.iter().enumerate() {
            grad[k - 1 + i] = dlx[(dim - 1) as usize];
        }
        log_y
    };

    let optim_opts = OptimOptions {
        warmup_steps: 50,
        warmup_lr: 0.05,
        max_steps: opts.max_steps,
        grad_tol: opts.stationarity_tol * 1e-2,
        ..OptimOptions::default()
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let starts = if n_vars == 0 { 1 } else { opts.starts.max(1) };
    for s in 0..starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed_base + s as u64);
        let center = log_budget / k as f64;
        let spread = 1.0 + log_budget.abs() / (2.0 * k as f64);
        let t0: Vec<f64> = (0..n_vars)
            .map(|_| center + spread * (rng.gen::<f64>() * 2.0 - 1.0))
            .collect();
        let r = minimize(objective, &t0, &optim_opts);
        if r.diverged || !r.f.is_finite() {
            continue;
        }
        if best.as_ref().map_or(true, |(_, f)| r.f < *f) {
            best = Some((r.x, r.f));
        }
    }
    let (t_best, log_y) = best.ok_or_else(|| {
        Error::Solver("every compute-optimal start diverged".into())
    })?;

    // Residuals at the winner.
    let mut grad = vec![0.0; n_vars];
    let log_y_check = objective(&t_best, &mut grad);
    debug_assert_eq!(log_y_check, log_y);
    let stationarity = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
    let lx = assemble(&t_best);
    let x: Vec<f64> = lx.iter().map(|v| v.exp()).collect();
    let y = log_y.exp();
    let prod_log: f64 = d.iter().map(|&dim| lx[(dim - 1) as usize]).sum();
    let constraint_residual =
        ((budget.c - budget.c0 * prod_log.exp()) / budget.c).abs();

    if n_vars > 0 && stationarity > opts.stationarity_tol {
        return Err(Error::Solver(format!(
            "no stationary point within tolerance: best y = {y} at {x:?} with projected \
             gradient max-norm {stationarity}"
        )));
    }

    // λ from ∂y/∂x_ℓ + λ C / x_ℓ = 0: λ = −(x_ℓ ∂y/∂x_ℓ)/C, identical
    // across ℓ ∈ D at stationarity; average for symmetry. x∂y/∂x is
    // y · dlogy/dlogx, recomputed from the reduced gradient structure.
    let mut tp = tape.borrow_mut();
    let (_, _, dlx) = tp.log_grad(&flat, &lx);
    let lambda = -d
        .iter()
        .map(|&dim| y * dlx[(dim - 1) as usize])
        .sum::<f64>()
        / (k as f64 * budget.c);

    Ok(ComputeOptimum {
        x,
        y,
        lagrange_multiplier: lambda,
        stationarity,
        constraint_residual,
    })
}

/// One row of a form-comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub form: String,
    pub n: u32,
    pub s: u32,
    pub lambda: f64,
    pub train: Option<Score>,
    pub test: Option<Score>,
    pub wall_seconds: f64,
    pub error: Option<String>,
    /// Best test RMSLE (train RMSLE when no test set) among the rows.
    pub winner: bool,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Fits every listed form on the same train split (hyperparameters
/// selected per form when `grids` is given) and scores each on the shared
/// test split. Individual fit failures become error rows, not a failure
/// of the whole table.
pub fn compare_forms(
    train: &ScalingDataset,
    test: Option<&ScalingDataset>,
    specs: &[FormSpec],
    grids: Option<&Grids>,
    cfg: &FitConfig,
) -> Comparison {
    let fits: Vec<(std::result::Result<FitResult, Error>, f64)> = specs
        .par_iter()
        .map(|spec| {
            let t0 = Instant::now();
            let r = match grids {
                Some(g) => fit_selected(spec, train, g, cfg),
                None => fit_form(spec, train, cfg),
            };
            (r, t0.elapsed().as_secs_f64())
        })
        .collect();

    let mut rows: Vec<ComparisonRow> = specs
        .iter()
        .zip(fits)
        .map(|(spec, (fit, wall))| match fit {
            Ok(f) => {
                let test_score = test.and_then(|ds| score_on(&f.spec, &f.params, ds).ok());
                ComparisonRow {
                    form: f.spec.form_kind.to_string(),
                    n: f.spec.break_count,
                    s: f.spec.oppositional_count,
                    lambda: f.lambda,
                    train: Some(f.train),
                    test: test_score,
                    wall_seconds: wall,
                    error: None,
                    winner: false,
                }
            }
            Err(e) => ComparisonRow {
                form: spec.form_kind.to_string(),
                n: spec.break_count,
                s: spec.oppositional_count,
                lambda: cfg.lambda,
                train: None,
                test: None,
                wall_seconds: wall,
                error: Some(e.to_string()),
                winner: false,
            },
        })
        .collect();

    let key = |r: &ComparisonRow| {
        r.test
            .map(|s| s.rmsle)
            .or_else(|| r.train.map(|s| s.rmsle))
    };
    if let Some(best) = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| key(r).filter(|v| v.is_finite()).map(|v| (i, v)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite"))
        .map(|(i, _)| i)
    {
        rows[best].winner = true;
    }
    Comparison { rows }
}

impl Comparison {
    /// Machine-readable table; shortest-round-trip float formatting.
    pub fn tsv(&self) -> String {
        let mut out = String::from(
            "form\tn\tS\tlambda\ttrain_rmsle\ttrain_rsle\ttest_rmsle\ttest_rsle\twall_seconds\n",
        );
        for r in &self.rows {
            let cell = |s: Option<Score>, f: fn(&Score) -> f64| {
                s.map(|s| f(&s).to_string()).unwrap_or_default()
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.form,
                r.n,
                r.s,
                r.lambda,
                cell(r.train, |s| s.rmsle),
                cell(r.train, |s| s.rsle),
                cell(r.test, |s| s.rmsle),
                cell(r.test, |s| s.rsle),
                r.wall_seconds,
            )
            .expect("write to string");
        }
        out
    }

    /// Human-readable table with the winner marked, scores printed in
    /// the RMSLE ± RSLE convention.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<6} {:>2} {:>2} {:>8} {:>23} {:>23}\n",
            "form", "n", "S", "lambda", "train", "test"
        );
        let fmt_score = |s: Option<Score>| match s {
            Some(s) => format!("{:.3e} ± {:.3e}", s.rmsle, s.rsle),
            None => "-".into(),
        };
        for r in &self.rows {
            match &r.error {
                Some(e) => {
                    writeln!(out, "{:<6} fit failed: {e}", r.form).expect("write to string")
                }
                None => writeln!(
                    out,
                    "{:<6} {:>2} {:>2} {:>8.1e} {:>23} {:>23}{}",
                    r.form,
                    r.n,
                    r.s,
                    r.lambda,
                    fmt_score(r.train),
                    fmt_score(r.test),
                    if r.winner { "  *" } else { "" },
                )
                .expect("write to string"),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{FormKind, MbnslParams};

    fn cf_like(b1: f64, c1: f64, b2: f64, c2: f64) -> (FormSpec, ParamSet) {
        let spec = FormSpec::new(FormKind::Cf, 2);
        let mut params = ParamSet::default();
        params.insert_kernel(MbnslParams::power_law(1, vec![1], b1.ln(), vec![c1]));
        params.insert_kernel(MbnslParams::power_law(2, vec![2], b2.ln(), vec![c2]));
        params.log_floor = Some(f64::NEG_INFINITY);
        (spec, params)
    }

    #[test]
    fn simulation_matches_direct_evaluation() {
        let (spec, params) = cf_like(2.0, 0.5, 3.0, 0.25);
        let grid = vec![vec![10.0, 20.0], vec![100.0, 5.0]];
        let ds = simulate_noiseless(&spec, &params, &grid).unwrap();
        assert_eq!(ds.len(), 2);
        let form = CompiledForm::new(&spec).unwrap();
        for (p, g) in ds.points.iter().zip(&grid) {
            assert_eq!(p.y, form.eval(&params, g).unwrap());
        }
    }

    #[test]
    fn simulation_of_constant_form_is_constant() {
        let spec = FormSpec::new(FormKind::A1, 2).with_breaks(0);
        let mut params = ParamSet::default();
        params.insert_kernel(MbnslParams::power_law(0, vec![1, 2], 0.7, vec![0.0, 0.0]));
        let grid = vec![vec![1.0, 2.0], vec![30.0, 4.0], vec![5.0, 600.0]];
        let ds = simulate_noiseless(&spec, &params, &grid).unwrap();
        for p in &ds.points {
            assert!((p.y - 0.7f64.exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_budget_splits_evenly() {
        let (spec, params) = cf_like(2.0, 0.5, 2.0, 0.5);
        let budget = ComputeBudget::new(6.0e8, vec![1, 2]);
        let opt = compute_optimal(&spec, &params, &budget).unwrap();
        let root = (budget.c / budget.c0).sqrt();
        assert!((opt.x[0] / root - 1.0).abs() < 1e-8, "{:?}", opt.x);
        assert!((opt.x[1] / root - 1.0).abs() < 1e-8, "{:?}", opt.x);
        assert!(opt.constraint_residual <= 1e-10);
        assert!(opt.stationarity <= 1e-8);
    }

    #[test]
    fn asymmetric_budget_balances_term_derivatives() {
        // At the optimum of b1 x1^{-c1} + b2 x2^{-c2} on the simplex,
        // c1 b1 x1^{-c1} = c2 b2 x2^{-c2}.
        let (spec, params) = cf_like(5.0, 0.4, 1.5, 0.7);
        let budget = ComputeBudget::new(1.0e10, vec![1, 2]);
        let opt = compute_optimal(&spec, &params, &budget).unwrap();
        let lhs = 0.4 * 5.0 * opt.x[0].powf(-0.4);
        let rhs = 0.7 * 1.5 * opt.x[1].powf(-0.7);
        assert!(
            ((lhs - rhs) / lhs).abs() < 1e-6,
            "{lhs} vs {rhs} at {:?}",
            opt.x
        );
        // Multiplier consistency: λ = c1 b1 x1^{-c1} / C per the system.
        assert!((opt.lagrange_multiplier - lhs / budget.c).abs() / (lhs / budget.c) < 1e-6);
    }

    #[test]
    fn general_case_matches_grid_search() {
        let (spec, params) = cf_like(3.0, 0.6, 8.0, 0.2);
        let budget = ComputeBudget::new(4.0e7, vec![1, 2]);
        let opt = compute_optimal(&spec, &params, &budget).unwrap();
        // Dense search over log x1 on the simplex.
        let form = CompiledForm::new(&spec).unwrap();
        let l = (budget.c / budget.c0).ln();
        let mut best = (f64::INFINITY, 0.0);
        let steps = 400_000;
        for i in 0..=steps {
            let lx1 = l * i as f64 / steps as f64;
            let y = form
                .eval(&params, &[lx1.exp(), (l - lx1).exp()])
                .unwrap();
            if y < best.0 {
                best = (y, lx1);
            }
        }
        assert!(
            (opt.x[0].ln() - best.1).abs() < 1e-4,
            "solver {} vs grid {}",
            opt.x[0].ln(),
            best.1
        );
        assert!(opt.y <= best.0 + 1e-12);
    }

    #[test]
    fn budget_monotonicity_on_cf() {
        let (spec, params) = cf_like(4.0, 0.3, 2.0, 0.6);
        let mut prev = f64::INFINITY;
        for c in [1e6, 1e7, 1e8, 1e9] {
            let opt =
                compute_optimal(&spec, &params, &ComputeBudget::new(c, vec![1, 2])).unwrap();
            assert!(opt.y <= prev + 1e-10, "y*({c}) = {} > {prev}", opt.y);
            prev = opt.y;
        }
    }

    #[test]
    fn free_dimension_reaches_interior_stationary_point() {
        // Dimension 2 enters through a break that makes y nonmonotonic in
        // it: falling before the break, rising after (positive h in the
        // additive view), so the slice has an interior minimum.
        let spec = FormSpec::new(FormKind::A1, 2).with_breaks(1);
        let mut params = ParamSet::default();
        params.insert_kernel(MbnslParams {
            kernel_id: 0,
            index_set: vec![1, 2],
            log_offset: 1.0,
            init_exponents: vec![0.4, 0.5],
            breaks: vec![crate::forms::Break {
                exponents: vec![0.0, 0.9],
                log_location: 4.0,
                sharpness: -1.0,
            }],
        });
        let budget = ComputeBudget::new(1e6, vec![1]).with_free_dims(vec![2]);
        let opt = compute_optimal(&spec, &params, &budget).unwrap();
        assert!(opt.stationarity <= 1e-8);
        // Golden-section oracle on the x2 slice at the returned x1.
        let form = CompiledForm::new(&spec).unwrap();
        let f = |lx2: f64| form.eval(&params, &[opt.x[0], lx2.exp()]).unwrap();
        let (mut a, mut b) = (-20.0, 40.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!(
            (opt.x[1].ln() - 0.5 * (a + b)).abs() < 1e-5,
            "solver {} vs golden {}",
            opt.x[1].ln(),
            0.5 * (a + b)
        );
    }

    #[test]
    fn budget_validation_catches_role_conflicts() {
        let b = ComputeBudget::new(10.0, vec![1]).with_free_dims(vec![1]);
        assert!(b.validate(2).is_err(), "dim in two roles");
        let b = ComputeBudget::new(10.0, vec![1]);
        assert!(b.validate(2).is_err(), "dim 2 unassigned");
        let b = ComputeBudget::new(10.0, vec![1, 2]);
        assert!(b.validate(2).is_ok());
    }

    #[test]
    fn comparison_table_marks_a_winner_and_records_errors() {
        let (gspec, gparams) = cf_like(2.0, 0.5, 3.0, 0.25);
        let mut grid = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                grid.push(vec![10f64.powi(i + 1), 10f64.powi(j + 1)]);
            }
        }
        let ds = simulate_noiseless(&gspec, &gparams, &grid).unwrap();
        let specs = vec![
            FormSpec::new(FormKind::Cf, 2),
            FormSpec::new(FormKind::Dc, 3), // arity mismatch → error row
        ];
        let cfg = FitConfig {
            seeds: 3,
            max_steps: 1500,
            ..FitConfig::default()
        };
        let cmp = compare_forms(&ds, Some(&ds), &specs, None, &cfg);
        assert_eq!(cmp.rows.len(), 2);
        assert!(cmp.rows[0].winner);
        assert!(cmp.rows[0].error.is_none());
        assert!(cmp.rows[1].error.is_some());
        assert!(!cmp.rows[1].winner);
        let tsv = cmp.tsv();
        assert!(tsv.starts_with("form\tn\tS\tlambda\t"));
        assert_eq!(tsv.lines().count(), 3);
        assert!(cmp.table().contains('*'));
    }

    #[test]
    fn identical_specs_give_identical_rows() {
        let (gspec, gparams) = cf_like(2.0, 0.5, 3.0, 0.25);
        let grid: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![10f64.powf(1.0 + 0.2 * i as f64), 10f64.powf(1.0 + 0.15 * i as f64)])
            .collect();
        let ds = simulate_noiseless(&gspec, &gparams, &grid).unwrap();
        let specs = vec![FormSpec::new(FormKind::Cf, 2), FormSpec::new(FormKind::Cf, 2)];
        let cfg = FitConfig {
            seeds: 2,
            max_steps: 600,
            ..FitConfig::default()
        };
        let cmp = compare_forms(&ds, Some(&ds), &specs, None, &cfg);
        assert_eq!(cmp.rows[0].train, cmp.rows[1].train);
        assert_eq!(cmp.rows[0].test, cmp.rows[1].test);
    }
}
