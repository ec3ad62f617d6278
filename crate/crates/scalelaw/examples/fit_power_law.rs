//! Fit a floored power law to noiseless synthetic data and recover the
//! generating constants.
//!
//! Run with: cargo run --release --example fit_power_law

use scalelaw::analysis::simulate_noiseless;
use scalelaw::fit::{fit_form, FitConfig, FittedParams};
use scalelaw::forms::{FormKind, FormSpec, MbnslParams, ParamSet};

fn main() -> scalelaw::Result<()> {
    // Generator: y = 0.05 + 4 x1^{-0.5} x2^{-0.25}.
    let mut gen = FormSpec::new(FormKind::A2, 2).with_breaks(0);
    gen.bottleneck_sets.insert(0, vec![]);
    let mut truth = ParamSet::default();
    truth.insert_kernel(MbnslParams::power_law(0, vec![1, 2], 4f64.ln(), vec![0.5, 0.25]));
    truth.log_floor = Some(0.05f64.ln());

    let grid: Vec<Vec<f64>> = (0..6)
        .flat_map(|i| (0..6).map(move |j| vec![10f64.powi(i + 1), 10f64.powi(j + 1)]))
        .collect();
    let data = simulate_noiseless(&gen, &truth, &grid)?;

    let cfg = FitConfig {
        seeds: 8,
        max_steps: 5000,
        ..FitConfig::default()
    };
    let fit = fit_form(&gen, &data, &cfg)?;
    println!("train RMSLE: {:.3e}", fit.train.rmsle);
    println!("best seed:   {}", fit.best_seed);

    let FittedParams::Structured(p) = &fit.params else { unreachable!() };
    let kernel = p.kernels.values().next().unwrap();
    println!("\n{:>12} {:>12} {:>12}", "", "true", "fitted");
    println!("{:>12} {:>12.4} {:>12.4}", "prefactor", 4.0, kernel.log_offset.exp());
    println!("{:>12} {:>12.4} {:>12.4}", "exponent 1", 0.5, kernel.init_exponents[0]);
    println!("{:>12} {:>12.4} {:>12.4}", "exponent 2", 0.25, kernel.init_exponents[1]);
    println!("{:>12} {:>12.4} {:>12.4}", "floor", 0.05, p.log_floor.unwrap().exp());
    Ok(())
}
