//! Optimal split of a compute budget C = C0·x1·x2 between two resources
//! under a fitted two-term power law.
//!
//! Run with: cargo run --example compute_optimal

use scalelaw::analysis::{compute_optimal, ComputeBudget};
use scalelaw::forms::{FormKind, FormSpec, MbnslParams, ParamSet};

fn main() -> scalelaw::Result<()> {
    // y = 5 x1^{-0.4} + 1.5 x2^{-0.7}: the first resource is cheap to
    // improve at small scale, the second pays off faster at large scale.
    let spec = FormSpec::new(FormKind::Cf, 2);
    let mut params = ParamSet::default();
    params.insert_kernel(MbnslParams::power_law(1, vec![1], 5f64.ln(), vec![0.4]));
    params.insert_kernel(MbnslParams::power_law(2, vec![2], 1.5f64.ln(), vec![0.7]));
    params.log_floor = Some(f64::NEG_INFINITY);

    println!(
        "{:>10} {:>14} {:>14} {:>12} {:>10}",
        "C", "x1*", "x2*", "y*", "x1/x2"
    );
    for exp in 6..=12 {
        let c = 10f64.powi(exp);
        let budget = ComputeBudget::new(c, vec![1, 2]);
        let opt = compute_optimal(&spec, &params, &budget)?;
        println!(
            "{:>10.0e} {:>14.4e} {:>14.4e} {:>12.4e} {:>10.3}",
            c,
            opt.x[0],
            opt.x[1],
            opt.y,
            opt.x[0] / opt.x[1]
        );
    }
    Ok(())
}
