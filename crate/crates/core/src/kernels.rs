//! Aggregation kernels used by value backups: the weighted power mean and
//! the constants that bound how far it can drift above lower-order means.
//!
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, grid_golden_max};

/// Exponents with magnitude below this are rejected: the geometric-mean limit
/// is not used by tree search and `1/p` overflows near zero.
pub const MIN_ABS_EXPONENT: f64 = 1e-9;

/// Exponent of a power mean, including the two limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerExponent {
    Finite(f64),
    /// The maximum.
    PosInf,
    /// The minimum.
    NegInf,
}

impl PowerExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(PowerExponent::PosInf)
        } else if p == f64::NEG_INFINITY {
            Ok(PowerExponent::NegInf)
        } else if !p.is_finite() {
            Err(Error::domain("power exponent is NaN"))
        } else if p.abs() < MIN_ABS_EXPONENT {
            Err(Error::domain(format!("power exponent {p} is too close to zero")))
        } else {
            Ok(PowerExponent::Finite(p))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            PowerExponent::Finite(p) => p,
            PowerExponent::PosInf => f64::INFINITY,
            PowerExponent::NegInf => f64::NEG_INFINITY,
        }
    }
}

/// Payoffs with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedValues {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedValues {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("power mean of an empty sequence"));
        }
        if values.len() != weights.len() {
            return Err(Error::domain(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::domain(format!("weight {w} is not strictly positive")));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::domain(format!("value {x} is not finite")));
        }
        Ok(Self { values, weights })
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Weighted power mean `(sum w_i x_i^p / sum w_i)^(1/p)`.
///
/// The sums are compensated and the values are scaled by their largest
/// magnitude before exponentiation, so large exponents neither overflow nor
/// lose the leading terms. The result is clamped into `[min x, max x]`.
pub fn power_mean(data: &WeightedValues, p: PowerExponent) -> Result<f64> {
    let p = match p {
        PowerExponent::PosInf => return Ok(data.max()),
        PowerExponent::NegInf => return Ok(data.min()),
        PowerExponent::Finite(p) => p,
    };
    PowerExponent::new(p)?;
    let (lo, hi) = (data.min(), data.max());
    let integral = p.fract() == 0.0;
    if lo < 0.0 && !integral {
        return Err(Error::domain(format!(
            "negative value {lo} with fractional exponent {p}"
        )));
    }
    if lo == hi {
        return Ok(lo);
    }
    if p < 0.0 && data.values.contains(&0.0) {
        // x^p diverges, the mean is pulled to zero.
        return Ok(0.0);
    }

    let scale = lo.abs().max(hi.abs());
    let total_weight = compensated_sum(data.weights.iter().copied());
    let moment = compensated_sum(
        data.values
            .iter()
            .zip(&data.weights)
            .map(|(&x, &w)| w * (x / scale).powf(p)),
    ) / total_weight;

    let root = if moment < 0.0 {
        // Only reachable with an odd integral exponent.
        -(-moment).powf(1.0 / p)
    } else {
        moment.powf(1.0 / p)
    };
    Ok((scale * root).clamp(lo, hi))
}

/// Weighted arithmetic mean, the `p = 1` member of the family.
pub fn arithmetic_mean(data: &WeightedValues) -> f64 {
    let total = compensated_sum(data.weights.iter().copied());
    compensated_sum(data.values.iter().zip(&data.weights).map(|(x, w)| x * w)) / total
}

/// Constants bounding the gap and the ratio between the `p` and `q` power
/// means of values confined to `[l, u]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub l: f64,
    pub u: f64,
    pub p: f64,
    pub q: f64,
    /// Additive bound: `M_p - M_q <= h`.
    pub h: f64,
    /// Ratio bound: `M_p / M_q <= ratio`. Reported only.
    pub ratio: f64,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    /// Maximizer of `x^(1/p) - (a x + b)^(1/q)` on `(l^p, u^p)`.
    pub x_star: f64,
}

const H_SEARCH_CELLS: usize = 2048;
const H_SEARCH_TOL: f64 = 1e-10;

/// Computes the gap constant `H_{p,q}` and its companions for values in
/// `[l, u]` with `p > q >= 1`.
pub fn compute_h(l: f64, u: f64, p: f64, q: f64) -> Result<BoundConstants> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::domain(format!("lower bound {l} must be positive")));
    }
    if !(l <= u) || !u.is_finite() {
        return Err(Error::domain(format!("lower bound {l} exceeds upper bound {u}")));
    }
    if !(p > q) || !p.is_finite() {
        return Err(Error::domain(format!("need p > q, got p={p}, q={q}")));
    }
    if q < 1.0 {
        return Err(Error::domain(format!("need q >= 1, got {q}")));
    }

    if l == u {
        return Ok(BoundConstants {
            l,
            u,
            p,
            q,
            h: 0.0,
            ratio: 1.0,
            theta: 0.0,
            a: 0.0,
            b: 0.0,
            x_star: l.powf(p),
        });
    }

    let (lp, up) = (l.powf(p), u.powf(p));
    let (lq, uq) = (l.powf(q), u.powf(q));
    let a = (uq - lq) / (up - lp);
    let b = (up * lq - uq * lp) / (up - lp);
    let gap = |x: f64| x.powf(1.0 / p) - (a * x + b).max(0.0).powf(1.0 / q);

    let tol = H_SEARCH_TOL * (up - lp).max(f64::MIN_POSITIVE);
    let x_star = grid_golden_max(gap, lp, up, H_SEARCH_CELLS, tol);
    let theta = ((x_star - lp) / (up - lp)).clamp(0.0, 1.0);
    let h = (theta * up + (1.0 - theta) * lp).powf(1.0 / p)
        - (theta * uq + (1.0 - theta) * lq).powf(1.0 / q);

    Ok(BoundConstants {
        l,
        u,
        p,
        q,
        h: h.max(0.0),
        ratio: ratio_bound(u / l, p, q),
        theta,
        a,
        b,
        x_star,
    })
}

fn ratio_bound(c: f64, p: f64, q: f64) -> f64 {
    if c == 1.0 {
        return 1.0;
    }
    let first = (q * (c.powf(p) - c.powf(q)) / ((p - q) * (c.powf(q) - 1.0))).powf(1.0 / p);
    let second = (p * (c.powf(q) - c.powf(p)) / ((q - p) * (c.powf(p) - 1.0))).powf(-1.0 / q);
    first * second
}

/// Lower end used when the caller's interval starts at zero.
pub const BOUND_FLOOR: f64 = 1e-6;

/// Tail bound for an equal-weight power mean of `n` samples in `[l, u]`:
/// `2 exp(H_{p,1}) exp(-2 eps^2 n / (u - l)^2)`.
///
/// `l` is floored at [`BOUND_FLOOR`] for the `H` computation so that
/// rewards in `[0, 1]` can be passed directly.
pub fn theorem1_bound(n: u64, p: f64, epsilon: f64, l: f64, u: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    if !(p >= 1.0) {
        return Err(Error::domain(format!("need p >= 1, got {p}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("need epsilon > 0, got {epsilon}")));
    }
    if !(l < u) {
        return Err(Error::domain(format!("empty interval [{l}, {u}]")));
    }
    let h = if p == 1.0 {
        0.0
    } else {
        compute_h(l.max(BOUND_FLOOR), u, p, 1.0)?.h
    };
    let width = u - l;
    Ok(2.0 * h.exp() * (-2.0 * epsilon * epsilon * n as f64 / (width * width)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn wv(values: &[f64], weights: &[f64]) -> WeightedValues {
        WeightedValues::new(values.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn single_value_is_fixed_point() {
        let m = power_mean(&wv(&[0.5], &[1.0]), PowerExponent::Finite(3.0)).unwrap();
        assert_eq!(m, 0.5);
    }

    #[test]
    fn infinite_exponents_pick_extremes() {
        let d = wv(&[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(power_mean(&d, PowerExponent::PosInf).unwrap(), 1.0);
        assert_eq!(power_mean(&d, PowerExponent::NegInf).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_mean_example() {
        // (1*0.04 + 3*0.64) / 4 = 0.49 exactly.
        let m = power_mean(&wv(&[0.2, 0.8], &[1.0, 3.0]), PowerExponent::Finite(2.0)).unwrap();
        assert_relative_eq!(m, 0.7, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(WeightedValues::new(vec![], vec![]).is_err());
        assert!(WeightedValues::new(vec![1.0], vec![0.0]).is_err());
        assert!(WeightedValues::new(vec![1.0, 2.0], vec![1.0]).is_err());
        let neg = wv(&[-0.5, 0.5], &[1.0, 1.0]);
        assert!(matches!(
            power_mean(&neg, PowerExponent::Finite(2.5)),
            Err(Error::Domain(_))
        ));
        assert!(power_mean(&neg, PowerExponent::Finite(2.0)).is_ok());
        assert!(PowerExponent::new(1e-12).is_err());
        assert!(PowerExponent::new(f64::NAN).is_err());
    }

    #[test]
    fn huge_exponent_does_not_overflow() {
        let m = power_mean(&wv(&[50.0, 100.0], &[1.0, 1.0]), PowerExponent::Finite(400.0)).unwrap();
        assert!(m > 99.0 && m <= 100.0);
    }

    #[test]
    fn degenerate_interval_has_zero_gap() {
        let b = compute_h(1.0, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(b.h, 0.0);
    }

    #[test]
    fn compute_h_matches_grid_oracle() {
        let (l, u, p, q) = (0.5f64, 1.0f64, 2.0f64, 1.0f64);
        let b = compute_h(l, u, p, q).unwrap();
        let (lp, up) = (l.powf(p), u.powf(p));
        let grid = 1_000_000;
        let oracle = (1..grid)
            .map(|i| {
                let x = lp + (up - lp) * i as f64 / grid as f64;
                x.sqrt() - (b.a * x + b.b)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((b.h - oracle).abs() < 1e-8, "h={} oracle={}", b.h, oracle);
        // theta reproduces the same gap through the closed form
        assert_relative_eq!(b.h, b.x_star.sqrt() - (b.a * b.x_star + b.b), epsilon = 1e-14);
    }

    #[test]
    fn compute_h_errors() {
        assert!(compute_h(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(compute_h(2.0, 1.0, 2.0, 1.0).is_err());
        assert!(compute_h(0.5, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn bound_reduces_to_hoeffding_at_p1() {
        let b = theorem1_bound(50, 1.0, 0.1, 0.0, 1.0).unwrap();
        assert_relative_eq!(b, 2.0 * (-2.0f64 * 0.01 * 50.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn bound_decreases_in_n() {
        let mut prev = f64::INFINITY;
        for n in [1, 10, 100, 1000] {
            let b = theorem1_bound(n, 2.0, 0.2, 0.0, 1.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn ratio_bound_dominates_sampled_ratios() {
        let b = compute_h(0.2, 1.0, 3.0, 1.0).unwrap();
        for (x, w) in [([0.2, 1.0], [1.0, 1.0]), ([0.2, 1.0], [3.0, 1.0]), ([0.5, 0.9], [1.0, 2.0])] {
            let d = wv(&x, &w);
            let r = power_mean(&d, PowerExponent::Finite(3.0)).unwrap() / arithmetic_mean(&d);
            assert!(r <= b.ratio + 1e-12);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(0.01f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn mean_stays_between_extremes((x, w) in instance(), p in 1.0f64..40.0) {
            let d = WeightedValues::new(x, w).unwrap();
            let m = power_mean(&d, PowerExponent::Finite(p)).unwrap();
            prop_assert!(d.min() <= m && m <= d.max());
        }

        #[test]
        fn monotone_in_exponent((x, w) in instance(), q in 1.0f64..10.0, dp in 0.0f64..10.0) {
            let d = WeightedValues::new(x, w).unwrap();
            let mq = power_mean(&d, PowerExponent::Finite(q)).unwrap();
            let mp = power_mean(&d, PowerExponent::Finite(q + dp)).unwrap();
            prop_assert!(mp >= mq - 1e-12);
        }

        #[test]
        fn gap_below_h((x, w) in instance(), p in 1.1f64..8.0) {
            let x: Vec<f64> = x.into_iter().map(|v| 0.1 + 0.9 * v).collect();
            let d = WeightedValues::new(x, w).unwrap();
            let b = compute_h(0.1, 1.0, p, 1.0).unwrap();
            let gap = power_mean(&d, PowerExponent::Finite(p)).unwrap() - arithmetic_mean(&d);
            prop_assert!(gap <= b.h + 1e-12);
        }
    }
}
