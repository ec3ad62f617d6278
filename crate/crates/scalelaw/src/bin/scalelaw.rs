//! Command-line interface: fit scaling-law forms to CSV data or the
//! embedded fixtures, predict from saved fits, compare forms, solve
//! compute-optimal allocations, and simulate noiseless datasets.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 fit/solver failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use scalelaw::analysis::{
    compare_forms, compute_optimal_with, simulate_noiseless, ComputeBudget,
    ComputeOptimalOptions,
};
use scalelaw::data::{
    half_max_thresholds, load_dataset, save_dataset, threshold_split, ScalingDataset,
};
use scalelaw::fit::{
    fit_form, predict, predictions, score, select_hyperparameters, FitConfig, FittedParams,
    Grids, Score,
};
use scalelaw::fixtures;
use scalelaw::forms::{FormKind, FormSpec};
use scalelaw::{Error, Result};

#[derive(Parser)]
#[command(
    name = "scalelaw",
    version,
    about = "Fit, evaluate, and extrapolate multivariate scaling-law forms"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one form and write the result plus plot data.
    Fit(FitArgs),
    /// Evaluate a saved fit at new points.
    Predict(PredictArgs),
    /// Fit several forms on a shared split and tabulate the scores.
    Compare(CompareArgs),
    /// Budget-constrained optimal input allocation for a saved fit.
    ComputeOptimal(ComputeOptimalArgs),
    /// Evaluate a saved fit on a grid and write a noiseless CSV dataset.
    Simulate(SimulateArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DataSource {
    /// CSV file: input dimension columns, metric column last.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Embedded dataset: llm_trivariate or downstream_imagenet.
    #[arg(long, value_name = "NAME")]
    fixture: Option<String>,
}

impl DataSource {
    fn load(&self) -> Result<ScalingDataset> {
        match (&self.data, &self.fixture) {
            (Some(path), None) => load_dataset(path),
            (None, Some(name)) => Ok(fixtures::fixture(name)?.clone()),
            _ => Err(Error::Argument(
                "exactly one of --data and --fixture is required".into(),
            )),
        }
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Extrapolation holdout threshold, repeatable: DIM=VALUE with DIM a
    /// column name or 1-based index. A point trains iff it is below every
    /// threshold.
    #[arg(long = "split-threshold", value_name = "DIM=VAL", conflicts_with = "split_half")]
    split_threshold: Vec<String>,
    /// Threshold every dimension at half its maximum.
    #[arg(long = "split-half")]
    split_half: bool,
}

impl SplitArgs {
    /// (train, test) split, or None when no split was requested.
    fn split(&self, ds: &ScalingDataset) -> Result<Option<(ScalingDataset, ScalingDataset)>> {
        if self.split_half {
            return threshold_split(ds, &half_max_thresholds(ds)).map(Some);
        }
        if self.split_threshold.is_empty() {
            return Ok(None);
        }
        // Unspecified dimensions keep an infinite threshold (never split).
        let mut thresholds = vec![f64::INFINITY; ds.arity()];
        for spec in &self.split_threshold {
            let (dim, val) = parse_dim_value(spec, ds)?;
            thresholds[dim] = val;
        }
        threshold_split(ds, &thresholds).map(Some)
    }
}

#[derive(Args)]
struct FitKnobs {
    /// Functional form: unsl, a1, a2, a3, cf, or dc.
    #[arg(long, default_value = "unsl", value_parser = parse_form)]
    form: FormKind,
    /// Break counts to search, comma-separated.
    #[arg(long = "n-grid", value_name = "LIST", default_value = "1")]
    n_grid: String,
    /// Oppositional-pair counts to search, comma-separated.
    #[arg(long = "s-grid", value_name = "LIST", default_value = "1")]
    s_grid: String,
    /// L2 strengths to search, comma-separated.
    #[arg(long = "lambda-grid", value_name = "LIST", default_value = "3e-6")]
    lambda_grid: String,
    /// Random starts per fit.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Optimizer iteration budget per start.
    #[arg(long = "max-steps", default_value_t = 20_000)]
    max_steps: usize,
    /// Offset added to every seed.
    #[arg(long = "seed-base", default_value_t = 0)]
    seed_base: u64,
}

impl FitKnobs {
    fn grids(&self) -> Result<Grids> {
        Ok(Grids {
            n: parse_list(&self.n_grid, "--n-grid")?,
            s: parse_list(&self.s_grid, "--s-grid")?,
            lambda: parse_list(&self.lambda_grid, "--lambda-grid")?,
        })
    }

    fn config(&self) -> FitConfig {
        FitConfig {
            seeds: self.seeds,
            max_steps: self.max_steps,
            seed_base: self.seed_base,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    source: DataSource,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    knobs: FitKnobs,
    /// Output directory for fit.json and plot data.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Dimension whose unique values define the plot slices (name or
    /// 1-based index; default: the last dimension).
    #[arg(long = "colorbar-dim", value_name = "NAME")]
    colorbar_dim: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    /// fit.json produced by the fit command.
    #[arg(long, value_name = "PATH")]
    fit: PathBuf,
    /// Input point, comma-separated, repeatable.
    #[arg(long = "x", value_name = "V1,V2,...")]
    points: Vec<String>,
    /// Predict over every row of a dataset instead.
    #[arg(long, value_name = "PATH", conflicts_with = "points")]
    data: Option<PathBuf>,
    /// Predict over an embedded dataset instead.
    #[arg(long, value_name = "NAME", conflicts_with_all = ["points", "data"])]
    fixture: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: DataSource,
    #[command(flatten)]
    split: SplitArgs,
    /// Forms to compare, comma-separated (default: every form whose
    /// arity matches the data).
    #[arg(long, value_name = "LIST")]
    forms: Option<String>,
    #[command(flatten)]
    knobs: FitKnobs,
    /// Output directory for compare.tsv.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ComputeOptimalArgs {
    /// fit.json produced by the fit command.
    #[arg(long, value_name = "PATH")]
    fit: PathBuf,
    /// Training compute C.
    #[arg(long, value_name = "C")]
    budget: f64,
    /// Compute constant C0 in C = C0 · Π x.
    #[arg(long, default_value_t = 6.0)]
    c0: f64,
    /// Budget-constrained dimensions, comma-separated 1-based indices.
    #[arg(long = "compute-dims", value_name = "LIST", default_value = "1,2")]
    compute_dims: String,
    /// Freely optimized dimensions, comma-separated 1-based indices.
    #[arg(long = "free-dims", value_name = "LIST")]
    free_dims: Option<String>,
    /// Pinned dimension, repeatable: DIM=VALUE (1-based index).
    #[arg(long = "fixed", value_name = "DIM=VAL")]
    fixed: Vec<String>,
    /// Random interior starts.
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long = "seed-base", default_value_t = 0)]
    seed_base: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// fit.json (or any JSON with spec and params fields).
    #[arg(long, value_name = "PATH")]
    fit: PathBuf,
    /// Log-spaced grid per dimension, repeatable: DIM=MIN:MAX:COUNT
    /// (1-based index). Every dimension needs one.
    #[arg(long = "range", value_name = "DIM=MIN:MAX:COUNT", required = true)]
    ranges: Vec<String>,
    /// Output directory for simulated.csv.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

/// On-disk fit result. Non-finite per-seed losses (diverged starts)
/// become nulls, since JSON has no infinity.
#[derive(Debug, Serialize, Deserialize)]
struct FitArtifact {
    spec: FormSpec,
    params: FittedParams,
    lambda: f64,
    best_seed: u64,
    per_seed_train_loss: Vec<Option<f64>>,
    train: Score,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation_rmsle: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("SCALELAW_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&k| k > 0)
    {
        // Library fits also honor the variable; this caps the form-level
        // parallelism of compare as well.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.cmd {
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Predict(a) => cmd_predict(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::ComputeOptimal(a) => cmd_compute_optimal(a),
        Cmd::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Fit(_) | Error::Solver(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let ds = a.source.load()?;
    let (train, test) = match a.split.split(&ds)? {
        Some((tr, te)) => (tr, Some(te)),
        None => (ds.clone(), None),
    };
    let base = FormSpec::new(a.knobs.form, ds.arity());
    let grids = a.knobs.grids()?;
    let cfg = a.knobs.config();

    let sel = select_hyperparameters(&base, &train, &grids, &cfg)?;
    let final_cfg = FitConfig {
        lambda: sel.lambda,
        ..cfg
    };
    let fit = fit_form(&sel.spec, &train, &final_cfg)?;
    let test_score = match &test {
        Some(te) => {
            let preds = predictions(&fit.spec, &fit.params, te)?;
            Some(score(&te.ys(), &preds)?)
        }
        None => None,
    };

    std::fs::create_dir_all(&a.out)
        .map_err(|e| Error::Argument(format!("{}: {e}", a.out.display())))?;
    let artifact = FitArtifact {
        spec: fit.spec.clone(),
        params: fit.params.clone(),
        lambda: fit.lambda,
        best_seed: fit.best_seed,
        per_seed_train_loss: fit
            .per_seed_train_loss
            .iter()
            .map(|&l| l.is_finite().then_some(l))
            .collect(),
        train: fit.train,
        test: test_score,
        validation_rmsle: sel.val_rmsle.is_finite().then_some(sel.val_rmsle),
    };
    write_json(&a.out.join("fit.json"), &artifact)?;
    emit_plot_data(&a.out, &artifact, &train, test.as_ref(), a.colorbar_dim.as_deref(), &ds)?;

    println!(
        "form {}  n {}  S {}  lambda {:e}",
        fit.spec.form_kind, fit.spec.break_count, fit.spec.oppositional_count, fit.lambda
    );
    println!("train rmsle {:e} ± {:e}", fit.train.rmsle, fit.train.rsle);
    if let Some(t) = artifact.test {
        println!("test rmsle {:e} ± {:e}", t.rmsle, t.rsle);
    }
    println!("artifacts written to {}", a.out.display());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let artifact = read_artifact(&a.fit)?;
    let arity = artifact.spec.arity;
    if let Some(name) = &a.fixture {
        let ds = fixtures::fixture(name)?;
        return predict_dataset(&artifact, ds);
    }
    if let Some(path) = &a.data {
        let ds = load_dataset(path)?;
        return predict_dataset(&artifact, &ds);
    }
    if a.points.is_empty() {
        return Err(Error::Argument(
            "give points with --x, or a dataset with --data/--fixture".into(),
        ));
    }
    for raw in &a.points {
        let x: Vec<f64> = raw
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    Error::Argument(format!("bad coordinate '{t}' in --x {raw}"))
                })
            })
            .collect::<Result<_>>()?;
        if x.len() != arity {
            return Err(Error::Argument(format!(
                "--x {raw} has {} coordinates, fit expects {arity}",
                x.len()
            )));
        }
        let y = predict(&artifact.spec, &artifact.params, &x)?;
        println!("{}\t{y}", raw.trim());
    }
    Ok(())
}

fn predict_dataset(artifact: &FitArtifact, ds: &ScalingDataset) -> Result<()> {
    let preds = predictions(&artifact.spec, &artifact.params, ds)?;
    let mut header = ds.dim_names.join("\t");
    write!(header, "\t{}\tpredicted", ds.metric_name).expect("write to string");
    println!("{header}");
    for (p, y) in ds.points.iter().zip(&preds) {
        let xs: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
        println!("{}\t{}\t{y}", xs.join("\t"), p.y);
    }
    let s = score(&ds.ys(), &preds)?;
    eprintln!("rmsle {:e} ± {:e}", s.rmsle, s.rsle);
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let ds = a.source.load()?;
    let (train, test) = match a.split.split(&ds)? {
        Some((tr, te)) => (tr, Some(te)),
        None => (ds.clone(), None),
    };
    let kinds: Vec<FormKind> = match &a.forms {
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse::<FormKind>())
            .collect::<Result<_>>()?,
        None => [
            FormKind::Unsl,
            FormKind::A1,
            FormKind::A2,
            FormKind::A3,
            FormKind::Cf,
            FormKind::Dc,
        ]
        .into_iter()
        .filter(|k| k.fixed_arity().map_or(true, |m| m == ds.arity()))
        .collect(),
    };
    if kinds.is_empty() {
        return Err(Error::Argument("no forms to compare".into()));
    }
    let specs: Vec<FormSpec> = kinds
        .iter()
        .map(|&k| FormSpec::new(k, ds.arity()))
        .collect();
    let grids = a.knobs.grids()?;
    let cfg = a.knobs.config();
    let cmp = compare_forms(&train, test.as_ref(), &specs, Some(&grids), &cfg);

    std::fs::create_dir_all(&a.out)
        .map_err(|e| Error::Argument(format!("{}: {e}", a.out.display())))?;
    let tsv_path = a.out.join("compare.tsv");
    std::fs::write(&tsv_path, cmp.tsv())
        .map_err(|e| Error::Argument(format!("{}: {e}", tsv_path.display())))?;
    print!("{}", cmp.table());
    println!("table written to {}", tsv_path.display());
    Ok(())
}

fn cmd_compute_optimal(a: ComputeOptimalArgs) -> Result<()> {
    let artifact = read_artifact(&a.fit)?;
    let FittedParams::Structured(params) = &artifact.params else {
        return Err(Error::Argument(
            "compute-optimal needs a structured fit (the DC baseline is not supported)".into(),
        ));
    };
    let mut budget = ComputeBudget::new(a.budget, parse_list(&a.compute_dims, "--compute-dims")?);
    budget.c0 = a.c0;
    if let Some(list) = &a.free_dims {
        budget.free_dims = parse_list(list, "--free-dims")?;
    }
    for spec in &a.fixed {
        let (dim, val) = parse_indexed_value(spec)?;
        budget.fixed.insert(dim, val);
    }
    let opts = ComputeOptimalOptions {
        starts: a.starts,
        seed_base: a.seed_base,
        ..ComputeOptimalOptions::default()
    };
    let opt = compute_optimal_with(&artifact.spec, params, &budget, &opts)?;
    for (i, v) in opt.x.iter().enumerate() {
        println!("x{} = {v}", i + 1);
    }
    println!("y = {}", opt.y);
    println!("lagrange_multiplier = {}", opt.lagrange_multiplier);
    println!("constraint_residual = {:e}", opt.constraint_residual);
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let artifact = read_artifact(&a.fit)?;
    let FittedParams::Structured(params) = &artifact.params else {
        return Err(Error::Argument(
            "simulate needs a structured fit (the DC baseline is not supported)".into(),
        ));
    };
    let arity = artifact.spec.arity;
    let mut axes: Vec<Option<Vec<f64>>> = vec![None; arity];
    for raw in &a.ranges {
        let (dim, rest) = split_dim(raw)?;
        if dim as usize > arity || dim == 0 {
            return Err(Error::Argument(format!(
                "--range {raw}: dimension out of range 1..={arity}"
            )));
        }
        let parts: Vec<&str> = rest.split(':').collect();
        let [min, max, count] = parts.as_slice() else {
            return Err(Error::Argument(format!(
                "--range {raw}: expected DIM=MIN:MAX:COUNT"
            )));
        };
        let min: f64 = min
            .parse()
            .map_err(|_| Error::Argument(format!("--range {raw}: bad MIN")))?;
        let max: f64 = max
            .parse()
            .map_err(|_| Error::Argument(format!("--range {raw}: bad MAX")))?;
        let count: usize = count
            .parse()
            .map_err(|_| Error::Argument(format!("--range {raw}: bad COUNT")))?;
        if !(min > 0.0 && max >= min) || count == 0 {
            return Err(Error::Argument(format!(
                "--range {raw}: need 0 < MIN <= MAX and COUNT >= 1"
            )));
        }
        axes[(dim - 1) as usize] = Some(log_spaced(min, max, count));
    }
    let axes: Vec<Vec<f64>> = axes
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::Argument(format!("missing --range for dimension {}", i + 1))))
        .collect::<Result<_>>()?;

    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    let ds = simulate_noiseless(&artifact.spec, params, &grid)?;
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Error::Argument(format!("{}: {e}", a.out.display())))?;
    let path = a.out.join("simulated.csv");
    save_dataset(&ds, &path)?;
    println!("{} points written to {}", ds.len(), path.display());
    Ok(())
}

/// Per-slice plot data: for each unique value of the colorbar dimension,
/// a log-spaced prediction curve over the slice's x-axis range (extended
/// a decade past the data) plus the train and test points of the slice.
fn emit_plot_data(
    out: &Path,
    artifact: &FitArtifact,
    train: &ScalingDataset,
    test: Option<&ScalingDataset>,
    colorbar_dim: Option<&str>,
    full: &ScalingDataset,
) -> Result<()> {
    let arity = full.arity();
    let plot_dir = out.join("plots");
    std::fs::create_dir_all(&plot_dir)
        .map_err(|e| Error::Argument(format!("{}: {e}", plot_dir.display())))?;
    let write = |path: &Path, content: &str| -> Result<()> {
        std::fs::write(path, content)
            .map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
    };

    // One dimension: a single slice over that dimension.
    let (cb, x_dim) = if arity == 1 {
        (None, 0usize)
    } else {
        let cb = match colorbar_dim {
            Some(name) => resolve_dim(name, full)?,
            None => arity - 1,
        };
        let x_dim = (0..arity).find(|&d| d != cb).expect("arity >= 2");
        (Some(cb), x_dim)
    };

    // Slice keys over the full dataset so train and test line up.
    let keys: Vec<f64> = match cb {
        Some(cb) => {
            let mut v: Vec<f64> = full.points.iter().map(|p| p.x[cb]).collect();
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite inputs"));
            v.dedup();
            v
        }
        None => vec![f64::NAN], // single unkeyed slice
    };
    if keys.len() > 64 {
        return Err(Error::Argument(format!(
            "colorbar dimension has {} distinct values; choose a coarser one",
            keys.len()
        )));
    }

    let mut index = String::from("slice\tcolorbar_dim\tvalue\tn_train\tn_test\n");
    for (si, &key) in keys.iter().enumerate() {
        let in_slice = |p: &&scalelaw::data::DataPoint| match cb {
            Some(cb) => p.x[cb] == key,
            None => true,
        };
        let tr: Vec<_> = train.points.iter().filter(in_slice).collect();
        let te: Vec<_> = test.map(|t| t.points.iter().filter(in_slice).collect()).unwrap_or_default();
        if tr.is_empty() && te.is_empty() {
            continue;
        }

        // Curve inputs: x-axis sweeps, colorbar pinned to the key, other
        // dimensions at the slice's geometric mean.
        let all: Vec<_> = tr.iter().chain(te.iter()).collect();
        let xs: Vec<f64> = all.iter().map(|p| p.x[x_dim]).collect();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(0.0f64, f64::max) * 10.0;
        let mut template = vec![0.0; arity];
        for d in 0..arity {
            if d == x_dim {
                continue;
            }
            if Some(d) == cb {
                template[d] = key;
            } else {
                let mean_log =
                    all.iter().map(|p| p.x[d].ln()).sum::<f64>() / all.len() as f64;
                template[d] = mean_log.exp();
            }
        }

        let mut curve = format!("{}\tpredicted_{}\n", full.dim_names[x_dim], full.metric_name);
        for x in log_spaced(lo, hi, 200) {
            let mut point = template.clone();
            point[x_dim] = x;
            let y = predict(&artifact.spec, &artifact.params, &point)?;
            writeln!(curve, "{x}\t{y}").expect("write to string");
        }
        write(&plot_dir.join(format!("slice_{si:02}_curve.tsv")), &curve)?;

        for (suffix, points) in [("train", &tr), ("test", &te)] {
            let mut table = format!("{}\t{}\n", full.dim_names[x_dim], full.metric_name);
            for p in points.iter() {
                writeln!(table, "{}\t{}", p.x[x_dim], p.y).expect("write to string");
            }
            write(&plot_dir.join(format!("slice_{si:02}_{suffix}.tsv")), &table)?;
        }
        writeln!(
            index,
            "{si:02}\t{}\t{}\t{}\t{}",
            cb.map(|d| full.dim_names[d].as_str()).unwrap_or("-"),
            if key.is_nan() { "-".to_string() } else { key.to_string() },
            tr.len(),
            te.len(),
        )
        .expect("write to string");
    }
    write(&plot_dir.join("slices.tsv"), &index)
}

fn log_spaced(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 || min == max {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn parse_form(s: &str) -> std::result::Result<FormKind, String> {
    s.parse::<FormKind>().map_err(|e| e.to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str, flag: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::Argument(format!("{flag}: bad entry '{t}'")))
        })
        .collect()
}

/// "DIM=VALUE" where DIM is a column name or 1-based index.
fn parse_dim_value(s: &str, ds: &ScalingDataset) -> Result<(usize, f64)> {
    let (dim, val) = s
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("expected DIM=VALUE, got '{s}'")))?;
    let idx = resolve_dim(dim.trim(), ds)?;
    let val: f64 = val
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("bad value in '{s}'")))?;
    Ok((idx, val))
}

/// "DIM=VALUE" with DIM a plain 1-based index (no dataset in scope).
fn parse_indexed_value(s: &str) -> Result<(u32, f64)> {
    let (dim, val) = s
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("expected DIM=VALUE, got '{s}'")))?;
    let dim: u32 = dim
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("bad dimension in '{s}'")))?;
    let val: f64 = val
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("bad value in '{s}'")))?;
    Ok((dim, val))
}

fn split_dim(s: &str) -> Result<(u32, &str)> {
    let (dim, rest) = s
        .split_once('=')
        .ok_or_else(|| Error::Argument(format!("expected DIM=..., got '{s}'")))?;
    let dim: u32 = dim
        .trim()
        .parse()
        .map_err(|_| Error::Argument(format!("bad dimension in '{s}'")))?;
    Ok((dim, rest))
}

/// Column name or 1-based index → 0-based dimension index.
fn resolve_dim(name: &str, ds: &ScalingDataset) -> Result<usize> {
    if let Some(i) = ds.dim_names.iter().position(|n| n == name) {
        return Ok(i);
    }
    if let Ok(i) = name.parse::<usize>() {
        if i >= 1 && i <= ds.arity() {
            return Ok(i - 1);
        }
    }
    Err(Error::Argument(format!(
        "unknown dimension '{name}' (columns: {})",
        ds.dim_names.join(", ")
    )))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Argument(format!("serialization failed: {e}")))?;
    std::fs::write(path, json + "\n")
        .map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
}

fn read_artifact(path: &Path) -> Result<FitArtifact> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Argument(format!("{}: not a valid fit artifact: {e}", path.display()))
    })
}
