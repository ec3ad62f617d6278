//! Functional forms: the broken-power-law kernel, the full composed family
//! (UNSL and its ablations A1/A2/A3), and the two baselines CF and DC.
//!
//! Submodules:
//! - [`expr`] — the structural wiring of a form as a small expression tree,
//!   plus the kernel/limit inventory it demands;
//! - [`eval`] — numerically stable log-space evaluation;
//! - [`grad`] — exact reverse-mode gradients w.r.t. parameters and inputs.

pub mod eval;
pub mod expr;
pub mod grad;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default sharpness floor: |f| below this is considered degenerate because
/// the kernel's break term divides by |f|.
pub const F_FLOOR: f64 = 1e-3;

/// One smooth transition of a kernel between power-law regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Break {
    /// Exponent deltas c_{ij}, one per element of the kernel's index set.
    pub exponents: Vec<f64>,
    /// log d_j — the break location in product space (d_j > 0 by storage).
    pub log_location: f64,
    /// f_j — nonzero; sign selects the bend direction, |f| its sharpness.
    pub sharpness: f64,
}

/// Constants of one multiplicative broken-power-law kernel over an index
/// set M of input dimensions (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbnslParams {
    pub kernel_id: u32,
    /// M — the 1-based input dimensions this kernel reads, ascending.
    pub index_set: Vec<u32>,
    /// log b.
    pub log_offset: f64,
    /// c_{i0}, one per element of `index_set`.
    pub init_exponents: Vec<f64>,
    pub breaks: Vec<Break>,
}

impl MbnslParams {
    /// Power law b·Π x_i^{-c_{i0}} with no breaks.
    pub fn power_law(kernel_id: u32, index_set: Vec<u32>, log_offset: f64, c0: Vec<f64>) -> Self {
        Self {
            kernel_id,
            index_set,
            log_offset,
            init_exponents: c0,
            breaks: Vec::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.index_set.len()
    }

    pub fn validate(&self, f_floor: f64) -> Result<()> {
        if self.index_set.is_empty() {
            return Err(Error::Parameter(format!(
                "kernel {}: empty index set",
                self.kernel_id
            )));
        }
        if !self.index_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Parameter(format!(
                "kernel {}: index set must be strictly ascending",
                self.kernel_id
            )));
        }
        if self.index_set[0] == 0 {
            return Err(Error::Parameter(format!(
                "kernel {}: dimension indices are 1-based",
                self.kernel_id
            )));
        }
        if self.init_exponents.len() != self.index_set.len() {
            return Err(Error::Parameter(format!(
                "kernel {}: {} initial exponents for {} dimensions",
                self.kernel_id,
                self.init_exponents.len(),
                self.index_set.len()
            )));
        }
        for (j, b) in self.breaks.iter().enumerate() {
            if b.exponents.len() != self.index_set.len() {
                return Err(Error::Parameter(format!(
                    "kernel {} break {}: {} exponents for {} dimensions",
                    self.kernel_id,
                    j,
                    b.exponents.len(),
                    self.index_set.len()
                )));
            }
            if !(b.sharpness.abs() >= f_floor) {
                return Err(Error::Parameter(format!(
                    "kernel {} break {}: |sharpness| = {} below floor {}",
                    self.kernel_id,
                    j,
                    b.sharpness.abs(),
                    f_floor
                )));
            }
        }
        Ok(())
    }
}

/// A positive constant a entering the form as a reciprocal-summed limit;
/// stored as log(a^{-1}) so that a = ∞ is the representable value −∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConstant {
    pub log_inverse: f64,
}

impl LimitConstant {
    /// a = ∞, i.e. the limit is absent from the sum.
    pub const INFINITE: LimitConstant = LimitConstant {
        log_inverse: f64::NEG_INFINITY,
    };

    pub fn from_value(a: f64) -> Self {
        Self { log_inverse: -a.ln() }
    }

    pub fn value(&self) -> f64 {
        (-self.log_inverse).exp()
    }

    pub fn is_infinite(&self) -> bool {
        self.log_inverse == f64::NEG_INFINITY
    }
}

// JSON has no -inf, so an infinite limit serializes as null.
impl Serialize for LimitConstant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.log_inverse == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_some(&self.log_inverse)
        }
    }
}

impl<'de> Deserialize<'de> for LimitConstant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Option::<f64>::deserialize(d)?;
        Ok(LimitConstant {
            log_inverse: v.unwrap_or(f64::NEG_INFINITY),
        })
    }
}

/// Serde adapter for `Option<f64>` log values where `Some(-inf)` must
/// survive a JSON round trip (encoded as null; absent field stays `None`).
pub(crate) mod log_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        v: &Option<f64>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) if *x == f64::NEG_INFINITY => s.serialize_none(),
            Some(x) => s.serialize_some(x),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<f64>, D::Error> {
        let v = Option::<f64>::deserialize(d)?;
        Ok(Some(v.unwrap_or(f64::NEG_INFINITY)))
    }
}

/// Which functional form a [`FormSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormKind {
    /// The full composed form: floor + limited sum of opposed forces.
    Unsl,
    /// A single kernel over all dimensions.
    A1,
    /// Floor plus one non-bottleneck/bottleneck group.
    A2,
    /// Like UNSL but without the overfitting force.
    A3,
    /// Sum of two independent power laws plus a constant (arity 2).
    Cf,
    /// The saturating data-constrained baseline (arity 3).
    Dc,
}

impl FormKind {
    pub fn name(&self) -> &'static str {
        match self {
            FormKind::Unsl => "unsl",
            FormKind::A1 => "a1",
            FormKind::A2 => "a2",
            FormKind::A3 => "a3",
            FormKind::Cf => "cf",
            FormKind::Dc => "dc",
        }
    }

    /// Arity the form pins down, if any (CF reads 2 inputs, DC reads 3).
    pub fn fixed_arity(&self) -> Option<usize> {
        match self {
            FormKind::Cf => Some(2),
            FormKind::Dc => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for FormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unsl" => Ok(FormKind::Unsl),
            "a1" => Ok(FormKind::A1),
            "a2" => Ok(FormKind::A2),
            "a3" => Ok(FormKind::A3),
            "cf" => Ok(FormKind::Cf),
            "dc" => Ok(FormKind::Dc),
            other => Err(Error::Argument(format!(
                "unknown form '{other}' (expected unsl, a1, a2, a3, cf, or dc)"
            ))),
        }
    }
}

/// Structural description of one form instance: which form, how many input
/// dimensions, how many breaks per kernel, how many hyperparameter forces,
/// and which dimensions each kernel group reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormSpec {
    pub form_kind: FormKind,
    /// m — number of input dimensions.
    pub arity: usize,
    /// n — breaks per kernel unless overridden per kernel id.
    pub break_count: u32,
    /// S — number of hyperparameter force terms per group.
    pub oppositional_count: u32,
    /// U_r per group index r; a missing entry means all dimensions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nonbottleneck_sets: BTreeMap<u32, Vec<u32>>,
    /// T_r per group index r; a missing entry means all dimensions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bottleneck_sets: BTreeMap<u32, Vec<u32>>,
    /// Per-kernel-id break-count overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub break_count_overrides: BTreeMap<u32, u32>,
    /// Whether the overfitting force term is present.
    pub overfit_enabled: bool,
    /// Whether the S hyperparameter force terms are present (S = 0 if not).
    pub hparam_force_enabled: bool,
    /// Whether the metric's upper limit a_2 is finite (learned) vs infinite.
    pub metric_upper_limit_enabled: bool,
}

impl FormSpec {
    /// A spec with the default wiring: every kernel group reads all
    /// dimensions and has one bottleneck kernel per dimension; one break
    /// per kernel; one hyperparameter force; overfitting force on;
    /// no finite metric upper limit.
    pub fn new(form_kind: FormKind, arity: usize) -> Self {
        let arity = form_kind.fixed_arity().unwrap_or(arity);
        Self {
            form_kind,
            arity,
            break_count: 1,
            oppositional_count: 1,
            nonbottleneck_sets: BTreeMap::new(),
            bottleneck_sets: BTreeMap::new(),
            break_count_overrides: BTreeMap::new(),
            overfit_enabled: true,
            hparam_force_enabled: true,
            metric_upper_limit_enabled: false,
        }
    }

    pub fn with_breaks(mut self, n: u32) -> Self {
        self.break_count = n;
        self
    }

    pub fn with_oppositional(mut self, s: u32) -> Self {
        self.oppositional_count = s;
        self.hparam_force_enabled = s > 0;
        self
    }

    pub fn with_metric_upper_limit(mut self, enabled: bool) -> Self {
        self.metric_upper_limit_enabled = enabled;
        self
    }

    pub fn with_overfit(mut self, enabled: bool) -> Self {
        self.overfit_enabled = enabled;
        self
    }

    /// Effective S: zero when the hyperparameter force is disabled.
    pub fn effective_s(&self) -> u32 {
        if self.hparam_force_enabled {
            self.oppositional_count
        } else {
            0
        }
    }

    /// U_r — dimensions of group r's joint kernel (default: all).
    pub fn nonbottleneck_set(&self, r: u32) -> Vec<u32> {
        match self.nonbottleneck_sets.get(&r) {
            Some(v) => v.clone(),
            None => (1..=self.arity as u32).collect(),
        }
    }

    /// T_r — dimensions with their own bottleneck kernel in group r.
    pub fn bottleneck_set(&self, r: u32) -> Vec<u32> {
        match self.bottleneck_sets.get(&r) {
            Some(v) => v.clone(),
            None => (1..=self.arity as u32).collect(),
        }
    }

    /// Break count for a given kernel id, honoring overrides.
    pub fn breaks_for(&self, kernel_id: u32) -> u32 {
        *self
            .break_count_overrides
            .get(&kernel_id)
            .unwrap_or(&self.break_count)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arity == 0 {
            return Err(Error::Config("arity must be at least 1".into()));
        }
        if let Some(fixed) = self.form_kind.fixed_arity() {
            if self.arity != fixed {
                return Err(Error::Config(format!(
                    "form {} has fixed arity {fixed}, got {}",
                    self.form_kind, self.arity
                )));
            }
        }
        for (r, set) in self.nonbottleneck_sets.iter().chain(&self.bottleneck_sets) {
            for &d in set {
                if d == 0 || d as usize > self.arity {
                    return Err(Error::Config(format!(
                        "group {r}: dimension index {d} out of range 1..={}",
                        self.arity
                    )));
                }
            }
            if !set.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Config(format!(
                    "group {r}: dimension sets must be strictly ascending"
                )));
            }
        }
        Ok(())
    }
}

/// All learned constants of one structured form instance: every kernel
/// keyed by its unique id, the additive floor a_0 (as log a_0), and the
/// reciprocal limit constants keyed by role index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamSet {
    pub kernels: BTreeMap<u32, MbnslParams>,
    /// log a_0 — present iff the form has an additive floor; `Some(-inf)`
    /// is a zero floor.
    #[serde(default, with = "log_opt", skip_serializing_if = "Option::is_none")]
    pub log_floor: Option<f64>,
    pub limits: BTreeMap<u32, LimitConstant>,
}

impl ParamSet {
    pub fn insert_kernel(&mut self, k: MbnslParams) {
        self.kernels.insert(k.kernel_id, k);
    }
}

/// Constants of the two-power-law baseline y = a + b1·x1^{-c1} + b2·x2^{-c2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfParams {
    pub log_a: f64,
    pub log_b1: f64,
    pub c1: f64,
    pub log_b2: f64,
    pub c2: f64,
}

/// Constants of the saturating data-constrained baseline over
/// (x1, x2, x3) = (params, epochs·unique data, unique data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcParams {
    pub log_a: f64,
    pub log_b1: f64,
    pub c1: f64,
    pub log_b2: f64,
    pub c2: f64,
    pub log_d1: f64,
    pub log_d2: f64,
}

impl DcParams {
    pub fn validate(&self) -> Result<()> {
        if self.c1 == 0.0 {
            return Err(Error::Parameter("c1 must be nonzero".into()));
        }
        if self.c1 + self.c2 == 0.0 {
            return Err(Error::Parameter("c1 + c2 must be nonzero".into()));
        }
        if self.c1 * self.c2 <= 0.0 {
            return Err(Error::Parameter(
                "c1 and c2 must share a sign (the saturation base must be positive)".into(),
            ));
        }
        Ok(())
    }
}
