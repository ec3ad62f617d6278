//! Embedded benchmark datasets.
//!
//! Two fixtures ship inside the binary so fitting and comparison runs
//! need no external files:
//!
//! - `llm_trivariate` — 182 language-model training observations of
//!   cross-entropy over (training dataset size, model parameters,
//!   training steps);
//! - `downstream_imagenet` — 535 ImageNet test-error observations for a
//!   MiX/B/16 model over (training steps, training dataset size); the
//!   metric is an error rate, so it is bounded above.

use std::sync::OnceLock;

use crate::data::{load_dataset_from, ScalingDataset};
use crate::error::{Error, Result};

static LLM_TRIVARIATE_CSV: &str = include_str!("../data/llm_trivariate.csv");
static DOWNSTREAM_IMAGENET_CSV: &str = include_str!("../data/downstream_imagenet_mix_b16.csv");

/// Names accepted by [`fixture`].
pub const FIXTURE_NAMES: [&str; 2] = ["llm_trivariate", "downstream_imagenet"];

fn parse(csv_text: &str, origin: &str) -> ScalingDataset {
    let reader = csv::Reader::from_reader(csv_text.as_bytes());
    load_dataset_from(reader, origin).expect("embedded fixture parses")
}

/// The trivariate language-model cross-entropy fixture (182 points).
pub fn llm_trivariate() -> &'static ScalingDataset {
    static DS: OnceLock<ScalingDataset> = OnceLock::new();
    DS.get_or_init(|| parse(LLM_TRIVARIATE_CSV, "llm_trivariate"))
}

/// The bivariate ImageNet test-error fixture (535 points). The metric is
/// bounded above by 1, so fits should enable the finite upper limit.
pub fn downstream_imagenet() -> &'static ScalingDataset {
    static DS: OnceLock<ScalingDataset> = OnceLock::new();
    DS.get_or_init(|| parse(DOWNSTREAM_IMAGENET_CSV, "downstream_imagenet"))
}

/// Whether a fixture's metric is bounded above (an error rate vs an
/// unbounded loss).
pub fn metric_bounded_above(name: &str) -> bool {
    name == "downstream_imagenet"
}

/// Looks up an embedded fixture by name.
pub fn fixture(name: &str) -> Result<&'static ScalingDataset> {
    match name {
        "llm_trivariate" => Ok(llm_trivariate()),
        "downstream_imagenet" => Ok(downstream_imagenet()),
        other => Err(Error::Argument(format!(
            "unknown fixture '{other}' (available: {})",
            FIXTURE_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{half_max_thresholds, threshold_split};

    #[test]
    fn llm_trivariate_shape() {
        let ds = llm_trivariate();
        assert_eq!(ds.len(), 182);
        assert_eq!(ds.arity(), 3);
        assert_eq!(
            ds.dim_names,
            vec!["training_dataset_size", "model_parameters", "training_steps"]
        );
        assert_eq!(ds.metric_name, "cross_entropy");
    }

    #[test]
    fn downstream_imagenet_shape() {
        let ds = downstream_imagenet();
        assert_eq!(ds.len(), 535);
        assert_eq!(ds.arity(), 2);
        assert_eq!(ds.dim_names, vec!["training_steps", "training_dataset_size"]);
        assert_eq!(ds.metric_name, "test_error_rate");
        assert!(ds.points.iter().all(|p| p.y < 1.0));
    }

    #[test]
    fn half_max_split_is_nontrivial() {
        for name in FIXTURE_NAMES {
            let ds = fixture(name).unwrap();
            let th = half_max_thresholds(ds);
            let (train, test) = threshold_split(ds, &th).unwrap();
            assert!(!train.is_empty() && !test.is_empty(), "{name}");
            assert_eq!(train.len() + test.len(), ds.len());
        }
    }

    #[test]
    fn unknown_fixture_errors() {
        assert!(fixture("nope").is_err());
    }
}
