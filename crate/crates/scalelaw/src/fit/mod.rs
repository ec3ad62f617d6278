//! Multi-start fitting and hyperparameter selection.
//!
//! A fit runs the same deterministic optimizer from several seeded random
//! initializations in parallel and keeps the start with the lowest final
//! training loss (ties go to the smaller seed). Hyperparameters — break
//! count, oppositional-pair count, and L2 strength — are chosen on a
//! Pareto-frontier validation split of the training data, then the winner
//! is refit on the full training set.

pub mod network;
pub mod optim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{compute_norm_stats, frontier_validation_split, ScalingDataset};
use crate::error::{Error, Result};
use crate::forms::eval::{eval_dc, eval_form};
use crate::forms::{DcParams, FormKind, FormSpec, ParamSet, F_FLOOR};
use crate::metrics::{
    rmsle, root_standard_log_error, MetricInputs, NORM_EPSILON, REPORT_EPSILON, TRAIN_EPSILON,
};

use network::{DcProblem, NetworkProblem};
use optim::{minimize, OptimOptions};

/// Knobs shared by every fit. `lambda` is the L2 strength used when a fit
/// is run directly; [`select_hyperparameters`] overrides it per grid cell.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Number of random starts.
    pub seeds: usize,
    /// Optimizer iteration budget per start.
    pub max_steps: usize,
    /// L2 regularization strength on exponent-bearing weights.
    pub lambda: f64,
    /// Epsilon inside the training loss logs.
    pub loss_epsilon: f64,
    /// Epsilon guarding degenerate normalization statistics.
    pub norm_epsilon: f64,
    /// Smallest admissible |sharpness| after denormalization.
    pub f_floor: f64,
    /// Added to the seed index so disjoint runs draw disjoint streams.
    pub seed_base: u64,
    pub warmup_steps: usize,
    pub warmup_lr: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            max_steps: 20_000,
            lambda: 0.0,
            loss_epsilon: TRAIN_EPSILON,
            norm_epsilon: NORM_EPSILON,
            f_floor: F_FLOOR,
            seed_base: 0,
            warmup_steps: 200,
            warmup_lr: 0.02,
        }
    }
}

impl FitConfig {
    fn optim_options(&self) -> OptimOptions {
        OptimOptions {
            warmup_steps: self.warmup_steps,
            warmup_lr: self.warmup_lr,
            max_steps: self.max_steps,
            ..OptimOptions::default()
        }
    }
}

/// Fitted constants; the DC baseline has its own shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum FittedParams {
    Structured(ParamSet),
    Dc(DcParams),
}

/// Fit quality on one dataset: root mean squared log error and the
/// dispersion-penalized variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub rmsle: f64,
    pub rsle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: FormSpec,
    pub params: FittedParams,
    pub lambda: f64,
    /// Seed (including the base offset) of the winning start.
    pub best_seed: u64,
    /// Final training loss per start (squared log error normalized by the
    /// log-target variance, plus the L2 term), seed order; diverged
    /// starts are +inf.
    pub per_seed_train_loss: Vec<f64>,
    pub train: Score,
}

/// Evaluates the fitted form at one input point.
pub fn predict(spec: &FormSpec, params: &FittedParams, x: &[f64]) -> Result<f64> {
    match params {
        FittedParams::Structured(p) => eval_form(spec, p, x),
        FittedParams::Dc(p) => {
            if x.len() != 3 {
                return Err(Error::Argument(format!(
                    "DC takes 3 inputs, got {}",
                    x.len()
                )));
            }
            eval_dc(p, x[0], x[1], x[2])
        }
    }
}

/// Predictions for every point of a dataset.
pub fn predictions(
    spec: &FormSpec,
    params: &FittedParams,
    ds: &ScalingDataset,
) -> Result<Vec<f64>> {
    ds.points.iter().map(|p| predict(spec, params, &p.x)).collect()
}

/// Reporting-scale scores of predictions against targets.
pub fn score(actual: &[f64], predicted: &[f64]) -> Result<Score> {
    let inputs = MetricInputs::new(actual, predicted, REPORT_EPSILON)?;
    Ok(Score {
        rmsle: rmsle(&inputs),
        rsle: root_standard_log_error(&inputs)?,
    })
}

/// Fits the fitted form's scores on a dataset.
pub fn score_on(spec: &FormSpec, params: &FittedParams, ds: &ScalingDataset) -> Result<Score> {
    let preds = predictions(spec, params, ds)?;
    score(&ds.ys(), &preds)
}

/// Runs the jobs in parallel, honoring the `SCALELAW_THREADS` cap.
fn run_seeds<T: Send, F: Fn(usize) -> T + Sync>(n: usize, job: F) -> Vec<T> {
    let cap = std::env::var("SCALELAW_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&k| k > 0);
    match cap {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool")
            .install(|| (0..n).into_par_iter().map(&job).collect()),
        None => (0..n).into_par_iter().map(&job).collect(),
    }
}

/// Fits one form with fixed hyperparameters. Deterministic for a given
/// config: seeds are derived from `seed_base`, starts run independently,
/// and the winner is the lowest finite training loss with ties broken
/// toward the smaller seed.
pub fn fit_form(spec: &FormSpec, train: &ScalingDataset, cfg: &FitConfig) -> Result<FitResult> {
    if cfg.seeds == 0 {
        return Err(Error::Argument("need at least one seed".into()));
    }
    spec.validate()?;
    match spec.form_kind {
        FormKind::Dc => fit_dc(spec, train, cfg),
        _ => fit_structured(spec, train, cfg),
    }
}

fn fit_structured(spec: &FormSpec, train: &ScalingDataset, cfg: &FitConfig) -> Result<FitResult> {
    let stats = compute_norm_stats(train, cfg.norm_epsilon)?;
    let base = NetworkProblem::new(spec, train, &stats, cfg)?;
    let opts = cfg.optim_options();

    let runs = run_seeds(cfg.seeds, |i| {
        let mut prob = base.clone_for_seed();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed_base + i as u64);
        let theta0 = prob.init_theta(&mut rng);
        minimize(|x, g| prob.objective(x, g), &theta0, &opts)
    });

    let per_seed_train_loss: Vec<f64> = runs
        .iter()
        .map(|r| if r.diverged || !r.f.is_finite() { f64::INFINITY } else { r.f })
        .collect();
    let best_idx = best_seed_index(&per_seed_train_loss).ok_or_else(|| {
        Error::Fit("every random start diverged".into())
    })?;
    let params = base.to_param_set(&runs[best_idx].x);
    let train_score = score_on(spec, &FittedParams::Structured(params.clone()), train)?;
    Ok(FitResult {
        spec: spec.clone(),
        params: FittedParams::Structured(params),
        lambda: cfg.lambda,
        best_seed: cfg.seed_base + best_idx as u64,
        per_seed_train_loss,
        train: train_score,
    })
}

fn fit_dc(spec: &FormSpec, train: &ScalingDataset, cfg: &FitConfig) -> Result<FitResult> {
    let base = DcProblem::new(train, cfg)?;
    let opts = cfg.optim_options();
    let runs = run_seeds(cfg.seeds, |i| {
        let mut prob = base.clone_for_seed();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed_base + i as u64);
        let theta0 = prob.init_theta(&mut rng);
        minimize(|x, g| prob.objective(x, g), &theta0, &opts)
    });
    let per_seed_train_loss: Vec<f64> = runs
        .iter()
        .map(|r| if r.diverged || !r.f.is_finite() { f64::INFINITY } else { r.f })
        .collect();
    let best_idx = best_seed_index(&per_seed_train_loss).ok_or_else(|| {
        Error::Fit("every random start diverged".into())
    })?;
    let params = base.to_dc_params(&runs[best_idx].x);
    params.validate()?;
    let train_score = score_on(spec, &FittedParams::Dc(params), train)?;
    Ok(FitResult {
        spec: spec.clone(),
        params: FittedParams::Dc(params),
        lambda: cfg.lambda,
        best_seed: cfg.seed_base + best_idx as u64,
        per_seed_train_loss,
        train: train_score,
    })
}

/// Smallest finite loss; earlier seed wins ties (strict comparison).
fn best_seed_index(losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in losses.iter().enumerate() {
        if !l.is_finite() {
            continue;
        }
        if best.map_or(true, |(_, b)| l < b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i)
}

/// Search space for model selection.
#[derive(Debug, Clone)]
pub struct Grids {
    /// Break counts n.
    pub n: Vec<u32>,
    /// Oppositional-pair counts S.
    pub s: Vec<u32>,
    /// L2 strengths.
    pub lambda: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            n: vec![0, 1, 2],
            s: vec![0, 1],
            lambda: vec![0.0, 1e-7, 1e-6, 3e-6, 1e-5, 1e-4, 1e-3],
        }
    }
}

/// Which grid axes a form actually responds to.
fn form_axes(kind: FormKind) -> (bool, bool) {
    match kind {
        FormKind::Unsl | FormKind::A3 => (true, true),
        FormKind::A1 | FormKind::A2 => (true, false),
        FormKind::Cf | FormKind::Dc => (false, false),
    }
}

/// Chosen hyperparameters and the validation score that chose them
/// (NaN when the grid had a single cell and no split was needed).
#[derive(Debug, Clone)]
pub struct Selection {
    pub spec: FormSpec,
    pub lambda: f64,
    pub val_rmsle: f64,
}

/// Chooses (n, S, lambda) on a frontier validation split of `train`.
///
/// Axes the form ignores are collapsed to the base spec's values. Cells
/// are visited with n ascending, S ascending, lambda descending, and a
/// later cell must be strictly better on validation RMSLE to win — so
/// ties prefer fewer breaks, then fewer oppositional pairs, then more
/// regularization.
pub fn select_hyperparameters(
    base: &FormSpec,
    train: &ScalingDataset,
    grids: &Grids,
    cfg: &FitConfig,
) -> Result<Selection> {
    let (uses_n, uses_s) = form_axes(base.form_kind);
    let n_axis: Vec<u32> = if uses_n {
        let mut v = grids.n.clone();
        v.sort_unstable();
        v.dedup();
        v
    } else {
        vec![base.break_count]
    };
    let s_axis: Vec<u32> = if uses_s {
        let mut v = grids.s.clone();
        v.sort_unstable();
        v.dedup();
        v
    } else {
        vec![base.oppositional_count]
    };
    let mut l_axis = grids.lambda.clone();
    l_axis.sort_by(|a, b| b.partial_cmp(a).expect("finite lambdas"));
    l_axis.dedup();
    if n_axis.is_empty() || s_axis.is_empty() || l_axis.is_empty() {
        return Err(Error::Argument("empty hyperparameter grid".into()));
    }

    let cell_spec = |n: u32, s: u32| {
        let mut spec = base.clone();
        if uses_n {
            spec = spec.with_breaks(n);
        }
        if uses_s {
            spec = spec.with_oppositional(s);
        }
        spec
    };

    // One cell: nothing to compare, skip the split and the extra fit.
    if n_axis.len() * s_axis.len() * l_axis.len() == 1 {
        return Ok(Selection {
            spec: cell_spec(n_axis[0], s_axis[0]),
            lambda: l_axis[0],
            val_rmsle: f64::NAN,
        });
    }

    let (inner, val) = frontier_validation_split(train)?;
    if val.is_empty() {
        // Every point is needed for training; fall back to the most
        // conservative cell the iteration order would prefer.
        return Ok(Selection {
            spec: cell_spec(n_axis[0], s_axis[0]),
            lambda: l_axis[0],
            val_rmsle: f64::NAN,
        });
    }

    let mut best: Option<Selection> = None;
    let mut last_err: Option<Error> = None;
    for &n in &n_axis {
        for &s in &s_axis {
            for &l in &l_axis {
                let spec = cell_spec(n, s);
                let cell_cfg = FitConfig {
                    lambda: l,
                    ..cfg.clone()
                };
                let fitted = match fit_form(&spec, &inner, &cell_cfg) {
                    Ok(f) => f,
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                };
                // Only RMSLE drives selection (the dispersion metric
                // needs two points and the frontier can be a single one).
                let v = match predictions(&spec, &fitted.params, &val)
                    .and_then(|p| Ok(rmsle(&MetricInputs::new(&val.ys(), &p, REPORT_EPSILON)?)))
                {
                    Ok(v) => v,
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                };
                if v.is_finite() && best.as_ref().map_or(true, |b| v < b.val_rmsle) {
                    best = Some(Selection {
                        spec,
                        lambda: l,
                        val_rmsle: v,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| match last_err {
        Some(e) => e,
        None => Error::Fit("no hyperparameter cell produced a finite validation score".into()),
    })
}

/// Full pipeline: select hyperparameters on a validation split, then refit
/// the winner on the complete training set (normalization statistics are
/// recomputed on the full set for the final fit).
pub fn fit_selected(
    base: &FormSpec,
    train: &ScalingDataset,
    grids: &Grids,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let sel = select_hyperparameters(base, train, grids, cfg)?;
    let final_cfg = FitConfig {
        lambda: sel.lambda,
        ..cfg.clone()
    };
    fit_form(&sel.spec, train, &final_cfg)
}
