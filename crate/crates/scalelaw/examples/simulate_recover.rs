//! Simulate-and-recover: generate noiseless data from a known two-input
//! form with a break, hold out the top decade of both inputs, fit on the
//! rest, and measure pure extrapolation error.
//!
//! Run with: cargo run --release --example simulate_recover

use scalelaw::analysis::simulate_noiseless;
use scalelaw::data::threshold_split;
use scalelaw::fit::{fit_form, predictions, score, FitConfig};
use scalelaw::forms::{Break, FormKind, FormSpec, MbnslParams, ParamSet};

fn main() -> scalelaw::Result<()> {
    // Floor + joint kernel whose decay steepens at a break inside the
    // training window.
    let mut spec = FormSpec::new(FormKind::A2, 2).with_breaks(1);
    spec.bottleneck_sets.insert(0, vec![]);
    let mut truth = ParamSet::default();
    truth.insert_kernel(MbnslParams {
        kernel_id: 0,
        index_set: vec![1, 2],
        log_offset: 2f64.ln(),
        init_exponents: vec![0.2, 0.1],
        breaks: vec![Break {
            exponents: vec![0.3, 0.2],
            log_location: 3.0,
            sharpness: 1.0,
        }],
    });
    truth.log_floor = Some(0.01f64.ln());

    let grid: Vec<Vec<f64>> = (0..10)
        .flat_map(|i| (0..10).map(move |j| vec![10f64.powf(0.5 * i as f64), 10f64.powf(0.5 * j as f64)]))
        .collect();
    let data = simulate_noiseless(&spec, &truth, &grid)?;

    // Train below 10^3.5 in both dimensions; the held-out corner extends
    // one order of magnitude beyond in each.
    let (train, test) = threshold_split(&data, &[10f64.powf(3.5), 10f64.powf(3.5)])?;
    println!("{} train points, {} held out", train.len(), test.len());

    let cfg = FitConfig {
        seeds: 12,
        max_steps: 8000,
        lambda: 1e-7,
        ..FitConfig::default()
    };
    let fit = fit_form(&spec, &train, &cfg)?;
    let train_score = fit.train;
    let test_score = score(&test.ys(), &predictions(&fit.spec, &fit.params, &test)?)?;
    println!("train RMSLE: {:.3e} ± {:.3e}", train_score.rmsle, train_score.rsle);
    println!("extrapolation RMSLE: {:.3e} ± {:.3e}", test_score.rmsle, test_score.rsle);
    Ok(())
}
