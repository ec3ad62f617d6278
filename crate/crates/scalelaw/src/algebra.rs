//! Closed-form kernel manipulations.
//!
//! Two bridges between representations of the same function:
//! - a two-term additive law b·Πx^{-c0} + g·Πx^{h} is exactly a
//!   single-break kernel with sharpness −1 (and vice versa);
//! - any kernel, at any point, has a tangent hyperplane in multi-log
//!   space, i.e. a local monomial w_b·Πx^{w_c} matching its value and
//!   log-log gradient there.

use crate::error::{Error, Result};
use crate::forms::eval::log_eval_mbnsl;
use crate::forms::{Break, MbnslParams};
use crate::numerics::sigmoid;

/// Constants of the additive two-power-law form
/// y = b·Π x_i^{-c0_i} + g·Π x_i^{h_i}.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditivePair {
    pub log_b: f64,
    pub c0: Vec<f64>,
    pub log_g: f64,
    pub h: Vec<f64>,
}

/// A monomial w_b·Π x_i^{w_c_i} — a hyperplane in multi-log space.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPlane {
    pub log_wb: f64,
    pub w_c: Vec<f64>,
}

impl TangentPlane {
    pub fn log_eval(&self, log_x: &[f64]) -> f64 {
        self.log_wb + self.w_c.iter().zip(log_x).map(|(w, lx)| w * lx).sum::<f64>()
    }

    /// Sum of two planes taken at the same point: value add in raw space,
    /// slope becomes the value-weighted average (first-order matching).
    pub fn add_at(&self, other: &TangentPlane, log_x: &[f64]) -> TangentPlane {
        let la = self.log_eval(log_x);
        let lb = other.log_eval(log_x);
        let total = crate::numerics::logsumexp(&[la, lb]);
        let wa = (la - total).exp();
        let wb = (lb - total).exp();
        let w_c: Vec<f64> = self
            .w_c
            .iter()
            .zip(&other.w_c)
            .map(|(a, b)| wa * a + wb * b)
            .collect();
        let log_wb = total - w_c.iter().zip(log_x).map(|(w, lx)| w * lx).sum::<f64>();
        TangentPlane { log_wb, w_c }
    }
}

/// Rewrites the additive pair as the equivalent single-break kernel:
/// sharpness −1, break exponents c0 + h, location b/g.
pub fn additive_to_single_break(p: &AdditivePair) -> Result<MbnslParams> {
    if p.c0.len() != p.h.len() || p.c0.is_empty() {
        return Err(Error::Argument(format!(
            "c0 and h must be nonempty and equal length, got {} and {}",
            p.c0.len(),
            p.h.len()
        )));
    }
    let m = p.c0.len() as u32;
    Ok(MbnslParams {
        kernel_id: 0,
        index_set: (1..=m).collect(),
        log_offset: p.log_b,
        init_exponents: p.c0.clone(),
        breaks: vec![Break {
            exponents: p.c0.iter().zip(&p.h).map(|(c, h)| c + h).collect(),
            log_location: p.log_b - p.log_g,
            sharpness: -1.0,
        }],
    })
}

/// Inverse of [`additive_to_single_break`]; only kernels with exactly one
/// break of sharpness exactly −1 have an additive two-term form (a free
/// sharpness is strictly more expressive).
pub fn single_break_to_additive(k: &MbnslParams) -> Result<AdditivePair> {
    if k.breaks.len() != 1 {
        return Err(Error::NotRepresentable(format!(
            "kernel has {} breaks; the additive form needs exactly 1",
            k.breaks.len()
        )));
    }
    let br = &k.breaks[0];
    if br.sharpness != -1.0 {
        return Err(Error::NotRepresentable(format!(
            "break sharpness is {}; the additive form needs exactly -1",
            br.sharpness
        )));
    }
    Ok(AdditivePair {
        log_b: k.log_offset,
        c0: k.init_exponents.clone(),
        log_g: k.log_offset - br.log_location,
        h: br
            .exponents
            .iter()
            .zip(&k.init_exponents)
            .map(|(c1, c0)| c1 - c0)
            .collect(),
    })
}

/// Tangent hyperplane of a kernel at x: slopes are the initial exponents
/// plus each break's contribution weighted by how far past the break x
/// sits (a logistic of the break argument); the offset makes the plane
/// pass through the kernel's value at x exactly.
pub fn tangent_hyperplane(k: &MbnslParams, x: &[f64]) -> Result<TangentPlane> {
    if x.len() != k.index_set.len() {
        return Err(Error::Argument(format!(
            "expected {} inputs, got {}",
            k.index_set.len(),
            x.len()
        )));
    }
    let log_x: Vec<f64> = x
        .iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!(
                    "inputs must be positive and finite, got {v}"
                )))
            }
        })
        .collect::<Result<_>>()?;

    let mut w_c: Vec<f64> = k.init_exponents.iter().map(|c| -c).collect();
    for br in &k.breaks {
        let mut t = -br.log_location;
        for (c, lx) in br.exponents.iter().zip(&log_x) {
            t += c * lx;
        }
        // d/dt [f·softplus(t/|f|)] = sign(f)·sigmoid(t/|f|).
        let weight = br.sharpness.signum() * sigmoid(t / br.sharpness.abs());
        for (w, c) in w_c.iter_mut().zip(&br.exponents) {
            *w -= c * weight;
        }
    }
    let log_val = log_eval_mbnsl(k, &log_x)?;
    let log_wb = log_val - w_c.iter().zip(&log_x).map(|(w, lx)| w * lx).sum::<f64>();
    Ok(TangentPlane { log_wb, w_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::eval::eval_mbnsl;
    use crate::forms::grad::{flatten, FormTape};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn eval_pair(p: &AdditivePair, x: &[f64]) -> f64 {
        let t1 = p.log_b - p.c0.iter().zip(x).map(|(c, x)| c * x.ln()).sum::<f64>();
        let t2 = p.log_g + p.h.iter().zip(x).map(|(h, x)| h * x.ln()).sum::<f64>();
        t1.exp() + t2.exp()
    }

    #[test]
    fn pair_to_break_known_constants() {
        let p = AdditivePair {
            log_b: 0.0,
            c0: vec![0.5],
            log_g: 0.01f64.ln(),
            h: vec![1.0],
        };
        let k = additive_to_single_break(&p).unwrap();
        assert_eq!(k.breaks[0].sharpness, -1.0);
        assert!((k.breaks[0].exponents[0] - 1.5).abs() < 1e-15);
        assert!(rel(k.breaks[0].log_location.exp(), 100.0) < 1e-12);
        for x in [0.1, 1.0, 50.0, 1e4] {
            assert!(rel(eval_mbnsl(&k, &[x]).unwrap(), eval_pair(&p, &[x])) < 1e-12);
        }
    }

    #[test]
    fn constant_second_term() {
        let p = AdditivePair {
            log_b: 0.2,
            c0: vec![0.3, 0.7],
            log_g: -1.0,
            h: vec![-0.3, -0.7],
        };
        let k = additive_to_single_break(&p).unwrap();
        assert!(k.breaks[0].exponents.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn round_trip_is_exact() {
        let p = AdditivePair {
            log_b: 1.3,
            c0: vec![0.4, -0.1, 0.9],
            log_g: -0.6,
            h: vec![0.2, 0.5, -0.3],
        };
        let back = single_break_to_additive(&additive_to_single_break(&p).unwrap()).unwrap();
        assert_eq!(back.log_b, p.log_b);
        assert_eq!(back.c0, p.c0);
        // log_g and h pass through one add/subtract pair, so allow the
        // single rounding step that introduces.
        assert!((back.log_g - p.log_g).abs() <= f64::EPSILON * p.log_g.abs().max(2.0));
        for (a, b) in back.h.iter().zip(&p.h) {
            assert!((a - b).abs() <= f64::EPSILON * b.abs().max(2.0));
        }
    }

    #[test]
    fn wrong_shape_is_not_representable() {
        let mut k = additive_to_single_break(&AdditivePair {
            log_b: 0.0,
            c0: vec![1.0],
            log_g: 0.0,
            h: vec![1.0],
        })
        .unwrap();
        k.breaks[0].sharpness = 1.0;
        assert!(matches!(
            single_break_to_additive(&k),
            Err(Error::NotRepresentable(_))
        ));
        k.breaks.clear();
        assert!(single_break_to_additive(&k).is_err());
    }

    #[test]
    fn tangent_of_pure_power_law_is_itself() {
        let k = MbnslParams::power_law(0, vec![1, 2], 1.1, vec![0.4, 0.6]);
        for x in [[1.0, 1.0], [10.0, 0.2], [1e5, 3.0]] {
            let t = tangent_hyperplane(&k, &x).unwrap();
            assert!((t.w_c[0] + 0.4).abs() < 1e-14);
            assert!((t.w_c[1] + 0.6).abs() < 1e-14);
            assert!((t.log_wb - 1.1).abs() < 1e-10);
        }
    }

    fn broken_kernel() -> MbnslParams {
        let mut k = MbnslParams::power_law(0, vec![1, 2], 0.3, vec![0.5, 0.2]);
        k.breaks.push(Break {
            exponents: vec![0.8, -0.4],
            log_location: 2.0,
            sharpness: 0.7,
        });
        k.breaks.push(Break {
            exponents: vec![-0.2, 0.6],
            log_location: -1.0,
            sharpness: -1.3,
        });
        k
    }

    #[test]
    fn tangent_before_the_break_recovers_initial_slope() {
        let mut k = MbnslParams::power_law(0, vec![1], 0.0, vec![0.5]);
        k.breaks.push(Break {
            exponents: vec![1.0],
            log_location: 0.0,
            sharpness: 1.0,
        });
        let t = tangent_hyperplane(&k, &[1e-6]).unwrap();
        assert!((t.w_c[0] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn tangent_slope_matches_autodiff() {
        let k = broken_kernel();
        use crate::forms::{FormKind, FormSpec, ParamSet};
        let mut spec = FormSpec::new(FormKind::A1, 2).with_breaks(2);
        spec.break_count_overrides.insert(0, 2);
        let mut p = ParamSet::default();
        p.insert_kernel(k.clone());
        let form = crate::forms::eval::CompiledForm::new(&spec).unwrap();
        let mut tape = FormTape::build(&form);
        let flat = flatten(&form.structure, &p);
        for x in [[2.0, 3.0], [40.0, 0.5], [0.01, 90.0]] {
            let t = tangent_hyperplane(&k, &x).unwrap();
            let (lv, _, dlx) = tape.log_grad(&flat, &[x[0].ln(), x[1].ln()]);
            assert!((t.log_eval(&[x[0].ln(), x[1].ln()]) - lv).abs() < 1e-12);
            for i in 0..2 {
                assert!((t.w_c[i] - dlx[i]).abs() < 1e-10, "{:?} vs {:?}", t.w_c, dlx);
            }
        }
    }

    #[test]
    fn second_order_contact_richardson() {
        let k = broken_kernel();
        let x = [3.0, 7.0];
        let t = tangent_hyperplane(&k, &x).unwrap();
        for i in 0..2 {
            let gap = |delta: f64| {
                let mut xp = x;
                xp[i] *= 1.0 + delta;
                let lx: Vec<f64> = xp.iter().map(|v| v.ln()).collect();
                (log_eval_mbnsl(&k, &lx).unwrap() - t.log_eval(&lx)).abs()
            };
            let g3 = gap(1e-3);
            let g4 = gap(1e-4);
            let ratio = g3 / g4;
            assert!(
                (ratio - 100.0).abs() < 15.0,
                "dimension {i}: Richardson ratio {ratio}"
            );
        }
    }

    #[test]
    fn summed_tangents_match_summed_kernels_to_first_order() {
        let ka = broken_kernel();
        let mut kb = MbnslParams::power_law(1, vec![1, 2], -0.4, vec![0.1, 0.9]);
        kb.breaks.push(Break {
            exponents: vec![0.3, 0.3],
            log_location: 1.0,
            sharpness: 2.0,
        });
        let x = [5.0f64, 2.0];
        let lx = [x[0].ln(), x[1].ln()];
        let ta = tangent_hyperplane(&ka, &x).unwrap();
        let tb = tangent_hyperplane(&kb, &x).unwrap();
        let sum_plane = ta.add_at(&tb, &lx);

        let sum_val = |lx: &[f64]| {
            (log_eval_mbnsl(&ka, lx).unwrap().exp() + log_eval_mbnsl(&kb, lx).unwrap().exp()).ln()
        };
        // Value matches at x...
        assert!((sum_plane.log_eval(&lx) - sum_val(&lx)).abs() < 1e-12);
        // ...and the first-order gap shrinks quadratically.
        for i in 0..2 {
            let gap = |delta: f64| {
                let mut l = lx;
                l[i] += delta;
                (sum_val(&l) - sum_plane.log_eval(&l)).abs()
            };
            let ratio = gap(1e-3) / gap(1e-4);
            assert!((ratio - 100.0).abs() < 15.0, "ratio {ratio}");
        }
    }

    #[test]
    fn tangent_rejects_bad_inputs() {
        let k = broken_kernel();
        assert!(tangent_hyperplane(&k, &[1.0]).is_err());
        assert!(tangent_hyperplane(&k, &[1.0, -2.0]).is_err());
    }
}
