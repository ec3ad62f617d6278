//! Compare several forms on the embedded bivariate ImageNet downstream
//! dataset under the standard extrapolation split.
//!
//! Run with: cargo run --release --example compare_fixture

use scalelaw::analysis::compare_forms;
use scalelaw::data::{half_max_thresholds, threshold_split};
use scalelaw::fit::FitConfig;
use scalelaw::fixtures;
use scalelaw::forms::{FormKind, FormSpec};

fn main() -> scalelaw::Result<()> {
    let ds = fixtures::downstream_imagenet();
    let (train, test) = threshold_split(ds, &half_max_thresholds(ds))?;
    println!(
        "{}: {} train / {} test points\n",
        ds.metric_name,
        train.len(),
        test.len()
    );

    let specs: Vec<FormSpec> = [FormKind::Unsl, FormKind::A1, FormKind::A2, FormKind::Cf]
        .into_iter()
        .map(|k| FormSpec::new(k, ds.arity()))
        .collect();
    let cfg = FitConfig {
        seeds: 8,
        max_steps: 6000,
        lambda: 3e-6,
        ..FitConfig::default()
    };
    let cmp = compare_forms(&train, Some(&test), &specs, None, &cfg);
    print!("{}", cmp.table());
    Ok(())
}
