//! Dataset ingestion, normalization statistics, and split procedures.
//!
//! Splits come in two flavors: a per-dimension threshold split (train =
//! points strictly below every threshold; everything else probes
//! extrapolation) and a Pareto-frontier validation split that holds out
//! the componentwise-maximal training points so validation itself tests
//! extrapolation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::NORM_EPSILON;

/// One observation: resource quantities x and the metric value y.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Immutable set of observations with dimension and metric names.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingDataset {
    pub points: Vec<DataPoint>,
    pub dim_names: Vec<String>,
    pub metric_name: String,
}

impl ScalingDataset {
    pub fn new(
        points: Vec<DataPoint>,
        dim_names: Vec<String>,
        metric_name: String,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("dataset must be nonempty".into()));
        }
        let arity = dim_names.len();
        for (i, p) in points.iter().enumerate() {
            if p.x.len() != arity {
                return Err(Error::Argument(format!(
                    "point {i} has {} coordinates, expected {arity}",
                    p.x.len()
                )));
            }
            for (&v, name) in p.x.iter().zip(&dim_names) {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Argument(format!(
                        "point {i}, {name}: values must be positive and finite, got {v}"
                    )));
                }
            }
            if !(p.y > 0.0 && p.y.is_finite()) {
                return Err(Error::Argument(format!(
                    "point {i}, {}: values must be positive and finite, got {}",
                    metric_name, p.y
                )));
            }
        }
        Ok(Self {
            points,
            dim_names,
            metric_name,
        })
    }

    pub fn arity(&self) -> usize {
        self.dim_names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    /// Per-dimension maximum over all points.
    pub fn dim_max(&self) -> Vec<f64> {
        let mut m = vec![f64::NEG_INFINITY; self.arity()];
        for p in &self.points {
            for (mx, &v) in m.iter_mut().zip(&p.x) {
                if v > *mx {
                    *mx = v;
                }
            }
        }
        m
    }

    fn with_points(&self, points: Vec<DataPoint>) -> ScalingDataset {
        ScalingDataset {
            points,
            dim_names: self.dim_names.clone(),
            metric_name: self.metric_name.clone(),
        }
    }
}

/// Loads a CSV whose last column is the metric and whose preceding
/// columns are the input dimensions, using the header row for names.
pub fn load_dataset(path: &Path) -> Result<ScalingDataset> {
    let reader = csv::Reader::from_path(path)
        .map_err(|e| Error::LoadOther(format!("{}: {e}", path.display())))?;
    load_dataset_from(reader, &path.display().to_string())
}

/// Same as [`load_dataset`] but over any reader; `origin` labels errors.
pub fn load_dataset_from<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    origin: &str,
) -> Result<ScalingDataset> {
    let headers = reader
        .headers()
        .map_err(|e| Error::LoadOther(format!("{origin}: {e}")))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::LoadOther(format!(
            "{origin}: need at least one input column and one metric column"
        )));
    }
    let names: Vec<String> = headers.iter().map(str::to_owned).collect();
    let (dim_names, metric_name) = (
        names[..names.len() - 1].to_vec(),
        names[names.len() - 1].clone(),
    );
    let mut points = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::LoadOther(format!("row {row}: {e}")))?;
        if record.len() != names.len() {
            return Err(Error::Load {
                row,
                column: String::new(),
                message: format!("{} fields, expected {}", record.len(), names.len()),
            });
        }
        let mut vals = Vec::with_capacity(names.len());
        for (field, name) in record.iter().zip(&names) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Load {
                row,
                column: name.clone(),
                message: format!("cannot parse '{field}' as a number"),
            })?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Load {
                    row,
                    column: name.clone(),
                    message: format!("values must be positive and finite, got {v}"),
                });
            }
            vals.push(v);
        }
        let y = vals.pop().unwrap();
        points.push(DataPoint { x: vals, y });
    }
    ScalingDataset::new(points, dim_names, metric_name)
}

/// Writes a dataset back out as CSV (inputs then metric, with a header).
pub fn save_dataset(ds: &ScalingDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::LoadOther(format!("{}: {e}", path.display())))?;
    let mut header = ds.dim_names.clone();
    header.push(ds.metric_name.clone());
    w.write_record(&header)
        .map_err(|e| Error::LoadOther(e.to_string()))?;
    for p in &ds.points {
        let mut rec: Vec<String> = p.x.iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{}", p.y));
        w.write_record(&rec)
            .map_err(|e| Error::LoadOther(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::LoadOther(e.to_string()))?;
    Ok(())
}

/// Per-dimension half-maximum thresholds, the default extrapolation cut.
pub fn half_max_thresholds(ds: &ScalingDataset) -> Vec<f64> {
    ds.dim_max().into_iter().map(|m| m / 2.0).collect()
}

/// Partitions into (train, test): a point trains iff x_i < threshold_i in
/// every dimension (an infinite threshold disables that dimension's cut).
pub fn threshold_split(
    ds: &ScalingDataset,
    thresholds: &[f64],
) -> Result<(ScalingDataset, ScalingDataset)> {
    if thresholds.len() != ds.arity() {
        return Err(Error::Argument(format!(
            "{} thresholds for {} dimensions",
            thresholds.len(),
            ds.arity()
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for p in &ds.points {
        if p.x.iter().zip(thresholds).all(|(&v, &t)| v < t) {
            train.push(p.clone());
        } else {
            test.push(p.clone());
        }
    }
    if train.is_empty() {
        return Err(Error::Split(
            "no point lies below every threshold; nothing to train on".into(),
        ));
    }
    Ok((ds.with_points(train), ds.with_points(test)))
}

/// `a` dominates `b` when a ≥ b in every dimension and a > b somewhere.
fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (&x, &y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Splits training data into (inner_train, validation) where validation
/// is the Pareto-maximal frontier: points no other training point
/// dominates. If the frontier would swallow more than half the data, it
/// is truncated (keeping the largest points by coordinate product) so
/// inner_train retains at least half.
pub fn frontier_validation_split(
    train: &ScalingDataset,
) -> Result<(ScalingDataset, ScalingDataset)> {
    let n = train.len();
    let mut is_val: Vec<bool> = (0..n)
        .map(|i| {
            !train
                .points
                .iter()
                .any(|q| dominates(&q.x, &train.points[i].x))
        })
        .collect();

    let keep_min = n.div_ceil(2);
    let n_val = is_val.iter().filter(|&&v| v).count();
    if n - n_val < keep_min {
        // Degenerate frontier: demote the smallest frontier points (by
        // log-coordinate sum, i.e. coordinate product) back to training.
        let mut frontier: Vec<usize> = (0..n).filter(|&i| is_val[i]).collect();
        frontier.sort_by(|&a, &b| {
            let pa: f64 = train.points[a].x.iter().map(|v| v.ln()).sum();
            let pb: f64 = train.points[b].x.iter().map(|v| v.ln()).sum();
            pa.partial_cmp(&pb).unwrap().then(a.cmp(&b))
        });
        let demote = keep_min - (n - n_val);
        for &i in frontier.iter().take(demote) {
            is_val[i] = false;
        }
    }

    let mut inner = Vec::new();
    let mut val = Vec::new();
    for (i, p) in train.points.iter().enumerate() {
        if is_val[i] {
            val.push(p.clone());
        } else {
            inner.push(p.clone());
        }
    }
    if inner.is_empty() {
        return Err(Error::Split("validation split left no training points".into()));
    }
    Ok((train.with_points(inner), train.with_points(val)))
}

/// Train-set statistics for log-space normalization: per-dimension mean
/// and population standard deviation of log x, and the mean of log(y+ε).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub log_x_mean: Vec<f64>,
    pub log_x_std: Vec<f64>,
    pub log_y_mean: f64,
    pub epsilon: f64,
}

/// Computes normalization statistics on a training set. A dimension that
/// is constant in training gets std 1 (normalization must stay invertible
/// and has no expressivity effect either way).
pub fn compute_norm_stats(train: &ScalingDataset, epsilon: f64) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::Argument("cannot normalize an empty dataset".into()));
    }
    let n = train.len() as f64;
    let arity = train.arity();
    let mut mean = vec![0.0; arity];
    for p in &train.points {
        for (m, &v) in mean.iter_mut().zip(&p.x) {
            *m += v.ln();
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; arity];
    for p in &train.points {
        for ((s, m), &v) in var.iter_mut().zip(&mean).zip(&p.x) {
            let d = v.ln() - m;
            *s += d * d;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let log_y_mean = train
        .points
        .iter()
        .map(|p| (p.y + epsilon).ln())
        .sum::<f64>()
        / n;
    Ok(NormStats {
        log_x_mean: mean,
        log_x_std: std,
        log_y_mean,
        epsilon,
    })
}

impl NormStats {
    /// Default statistics with the standard normalization offset.
    pub fn of(train: &ScalingDataset) -> Result<NormStats> {
        compute_norm_stats(train, NORM_EPSILON)
    }

    /// log x → z (centered, unit-scale per dimension).
    pub fn apply_log_x(&self, log_x: &[f64]) -> Vec<f64> {
        log_x
            .iter()
            .zip(&self.log_x_mean)
            .zip(&self.log_x_std)
            .map(|((lx, m), s)| (lx - m) / s)
            .collect()
    }

    /// z → log x.
    pub fn unapply_log_x(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.log_x_mean)
            .zip(&self.log_x_std)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(points: &[(&[f64], f64)]) -> ScalingDataset {
        let arity = points[0].0.len();
        ScalingDataset::new(
            points
                .iter()
                .map(|(x, y)| DataPoint {
                    x: x.to_vec(),
                    y: *y,
                })
                .collect(),
            (1..=arity).map(|i| format!("x{i}")).collect(),
            "y".into(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_nonpositive_values() {
        let bad = ScalingDataset::new(
            vec![DataPoint {
                x: vec![1.0],
                y: 0.0,
            }],
            vec!["x1".into()],
            "y".into(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn threshold_split_conjunction_rule() {
        let d = ds(&[
            (&[1.0, 1.0], 1.0),
            (&[1.0, 3.0], 1.0),
            (&[3.0, 1.0], 1.0),
            (&[3.0, 3.0], 1.0),
        ]);
        let (train, test) = threshold_split(&d, &[2.0, 2.0]).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(train.points[0].x, vec![1.0, 1.0]);
        assert_eq!(test.len(), 3);
    }

    #[test]
    fn infinite_thresholds_keep_everything() {
        let d = ds(&[(&[1.0], 1.0), (&[5.0], 2.0)]);
        let (train, test) = threshold_split(&d, &[f64::INFINITY]).unwrap();
        assert_eq!(train.len(), 2);
        assert!(test.is_empty());
    }

    #[test]
    fn split_then_merge_is_identity() {
        let d = ds(&[
            (&[1.0, 9.0], 0.5),
            (&[2.0, 2.0], 0.7),
            (&[8.0, 1.0], 0.9),
            (&[1.5, 1.5], 1.1),
        ]);
        let (train, test) = threshold_split(&d, &[4.0, 4.0]).unwrap();
        let mut merged: Vec<_> = train.points.iter().chain(&test.points).cloned().collect();
        let key = |p: &DataPoint| (p.x.clone(), p.y);
        let mut orig: Vec<_> = d.points.clone();
        merged.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        orig.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(merged, orig);
    }

    #[test]
    fn empty_train_is_an_error() {
        let d = ds(&[(&[5.0], 1.0)]);
        assert!(matches!(threshold_split(&d, &[2.0]), Err(Error::Split(_))));
    }

    #[test]
    fn frontier_of_a_line_is_its_maximum() {
        let d = ds(&[(&[1.0], 1.0), (&[2.0], 1.0), (&[3.0], 1.0)]);
        let (inner, val) = frontier_validation_split(&d).unwrap();
        assert_eq!(val.len(), 1);
        assert_eq!(val.points[0].x, vec![3.0]);
        assert_eq!(inner.len(), 2);
    }

    #[test]
    fn grid_frontier_is_the_corner() {
        let d = ds(&[
            (&[1.0, 1.0], 1.0),
            (&[1.0, 2.0], 1.0),
            (&[2.0, 1.0], 1.0),
            (&[2.0, 2.0], 1.0),
        ]);
        let (_, val) = frontier_validation_split(&d).unwrap();
        assert_eq!(val.len(), 1);
        assert_eq!(val.points[0].x, vec![2.0, 2.0]);
    }

    #[test]
    fn degenerate_frontier_is_truncated() {
        // All four points are mutually non-dominated except (1,1): the
        // frontier would take 3 of 4 points, so it is truncated to keep
        // at least half in inner training.
        let d = ds(&[
            (&[1.0, 3.0], 1.0),
            (&[3.0, 1.0], 1.0),
            (&[2.0, 2.0], 1.0),
            (&[1.0, 1.0], 1.0),
        ]);
        let (inner, val) = frontier_validation_split(&d).unwrap();
        assert!(inner.len() >= 2, "inner kept {}", inner.len());
        assert_eq!(inner.len() + val.len(), 4);
        // No inner point may dominate a validation point.
        for v in &val.points {
            for i in &inner.points {
                assert!(!dominates(&i.x, &v.x));
            }
        }
        // The largest-by-product point (2,2) stays in validation.
        assert!(val.points.iter().any(|p| p.x == vec![2.0, 2.0]));
    }

    #[test]
    fn no_inner_point_dominates_validation() {
        let d = ds(&[
            (&[1.0, 1.0], 1.0),
            (&[2.0, 5.0], 1.0),
            (&[5.0, 2.0], 1.0),
            (&[3.0, 3.0], 1.0),
            (&[4.0, 1.0], 1.0),
            (&[2.0, 2.0], 1.0),
        ]);
        let (inner, val) = frontier_validation_split(&d).unwrap();
        for v in &val.points {
            for i in &inner.points {
                assert!(!dominates(&i.x, &v.x), "{:?} dominates {:?}", i.x, v.x);
            }
        }
    }

    #[test]
    fn norm_stats_basics() {
        let d = ds(&[(&[1.0, 4.0], 1.0), (&[4.0, 4.0], 1.0)]);
        let st = compute_norm_stats(&d, 0.0).unwrap();
        // Dim 1: logs 0 and ln 4 -> mean = ln 2, population std = ln 2.
        assert!((st.log_x_mean[0] - 2.0f64.ln()).abs() < 1e-14);
        assert!((st.log_x_std[0] - 2.0f64.ln()).abs() < 1e-14);
        // Dim 2 is constant: mean = ln 4, std defaults to 1.
        assert!((st.log_x_mean[1] - 4.0f64.ln()).abs() < 1e-14);
        assert_eq!(st.log_x_std[1], 1.0);
        assert!(st.log_y_mean.abs() < 1e-14);
    }

    #[test]
    fn normalization_round_trips() {
        let d = ds(&[
            (&[1.0, 10.0], 0.5),
            (&[7.0, 90.0], 0.4),
            (&[30.0, 400.0], 0.3),
        ]);
        let st = NormStats::of(&d).unwrap();
        for p in &d.points {
            let lx: Vec<f64> = p.x.iter().map(|v| v.ln()).collect();
            let back = st.unapply_log_x(&st.apply_log_x(&lx));
            for (a, b) in back.iter().zip(&lx) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_point_stats_are_degenerate_but_valid() {
        let d = ds(&[(&[3.0], 2.0)]);
        let st = compute_norm_stats(&d, 0.0).unwrap();
        assert_eq!(st.log_x_std, vec![1.0]);
        assert!((st.log_x_mean[0] - 3.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        std::fs::write(&good, "x1,x2,y\n1,2,0.5\n3,4,0.25\n2,9,0.125\n10,1,0.9\n").unwrap();
        let d = load_dataset(&good).unwrap();
        assert_eq!(d.arity(), 2);
        assert_eq!(d.len(), 4);
        assert_eq!(d.dim_names, vec!["x1", "x2"]);
        assert_eq!(d.metric_name, "y");

        let out = dir.path().join("out.csv");
        save_dataset(&d, &out).unwrap();
        assert_eq!(load_dataset(&out).unwrap(), d);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "x1,y\n1,0.5\n2,0\n").unwrap();
        match load_dataset(&bad) {
            Err(Error::Load { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "y");
            }
            other => panic!("expected row-numbered load error, got {other:?}"),
        }

        let junk = dir.path().join("junk.csv");
        std::fs::write(&junk, "x1,y\noops,0.5\n").unwrap();
        assert!(matches!(
            load_dataset(&junk),
            Err(Error::Load { row: 2, .. })
        ));
        assert!(load_dataset(&dir.path().join("missing.csv")).is_err());
    }
}
