//! Convex regularizers over the probability simplex and their conjugates.
//!
//! For a regularizer `Omega` and temperature `tau`, the conjugate value is
//!
//! ```text
//! Omega*(q) = max_{pi in simplex} <pi, q> - tau * Omega(pi)
//! ```
//!
//! and the maximizing `pi` is the regularized policy. [`RegularizerKind::value`]
//! returns the former and [`RegularizerKind::policy`] the latter. Both take raw
//! action values; the division by `tau` happens inside.
//!
//! Supported entropies:
//!
//! | entropy    | `Omega(pi)`                              | value                       |
//! |------------|------------------------------------------|-----------------------------|
//! | Shannon    | `sum pi log pi`                          | `tau log sum exp(q/tau)`    |
//! | Relative   | `KL(pi || prior)`                        | `tau log sum prior exp(q/tau)` |
//! | Tsallis    | `(||pi||^2 - 1) / 2`                     | `tau spmax(q/tau)`          |
//! | Alpha(a)   | `(sum pi^a - 1) / (a (a - 1))`           | `<pi, q> - tau Omega(pi)`   |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Tolerance on the mass of a [`Simplex`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Allowed mass defect of the alpha-divergence policy before renormalization.
pub const ALPHA_MASS_TOL: f64 = 1e-6;

/// A probability distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("empty distribution"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::domain(format!("probability {p} is negative or not finite")));
        }
        let mass = compensated_sum(probs.iter().copied());
        if (mass - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("probabilities sum to {mass}")));
        }
        Ok(Simplex(probs))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over zero actions");
        Simplex(vec![1.0 / n as f64; n])
    }

    /// Rescales non-negative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let mass = compensated_sum(weights.iter().copied());
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Numeric(format!("cannot normalize mass {mass}")));
        }
        Simplex::new(weights.into_iter().map(|w| w / mass).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `<pi, q>`
    pub fn dot(&self, q: &[f64]) -> f64 {
        compensated_sum(self.0.iter().zip(q).map(|(p, q)| p * q))
    }
}

/// Which entropy the regularizer is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Entropy {
    /// Maximum (Shannon) entropy.
    Shannon,
    /// KL divergence to a prior policy with strictly positive entries.
    Relative(Simplex),
    Tsallis,
    /// Alpha-divergence to the uniform policy. `1` dispatches to Shannon and
    /// `2` to Tsallis.
    Alpha(f64),
}

/// A regularizer together with its temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerKind {
    pub entropy: Entropy,
    pub tau: f64,
}

/// Action indices carrying non-zero probability, in decreasing order of value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseSupport {
    pub indices: Vec<usize>,
}

impl SparseSupport {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

enum Branch<'a> {
    Shannon,
    Relative(&'a Simplex),
    Tsallis,
    Alpha(f64),
}

impl RegularizerKind {
    pub fn new(entropy: Entropy, tau: f64) -> Result<Self> {
        let kind = RegularizerKind { entropy, tau };
        kind.validate()?;
        Ok(kind)
    }

    pub fn shannon(tau: f64) -> Result<Self> {
        Self::new(Entropy::Shannon, tau)
    }

    pub fn tsallis(tau: f64) -> Result<Self> {
        Self::new(Entropy::Tsallis, tau)
    }

    pub fn relative(prior: Simplex, tau: f64) -> Result<Self> {
        Self::new(Entropy::Relative(prior), tau)
    }

    pub fn alpha(alpha: f64, tau: f64) -> Result<Self> {
        Self::new(Entropy::Alpha(alpha), tau)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::domain(format!("temperature {} must be positive", self.tau)));
        }
        match &self.entropy {
            Entropy::Alpha(a) if !(*a > 0.0 && a.is_finite()) => {
                Err(Error::domain(format!("alpha {a} must be positive")))
            }
            Entropy::Relative(prior) if prior.min() <= 0.0 => {
                Err(Error::domain("relative-entropy prior must be strictly positive"))
            }
            _ => Ok(()),
        }
    }

    /// Same entropy with a different prior (only meaningful for `Relative`).
    pub fn with_prior(&self, prior: Simplex) -> Self {
        match self.entropy {
            Entropy::Relative(_) => RegularizerKind {
                entropy: Entropy::Relative(prior),
                tau: self.tau,
            },
            _ => self.clone(),
        }
    }

    fn branch(&self) -> Branch<'_> {
        match &self.entropy {
            Entropy::Shannon => Branch::Shannon,
            Entropy::Relative(prior) => Branch::Relative(prior),
            Entropy::Tsallis => Branch::Tsallis,
            Entropy::Alpha(a) if *a == 1.0 => Branch::Shannon,
            Entropy::Alpha(a) if *a == 2.0 => Branch::Tsallis,
            Entropy::Alpha(a) => Branch::Alpha(*a),
        }
    }

    /// Conjugate value `Omega*(q)`.
    pub fn value(&self, q: &[f64]) -> Result<f64> {
        check_q(q)?;
        let tau = self.tau;
        match self.branch() {
            Branch::Shannon => Ok(tau * log_sum_exp(q, tau, None)),
            Branch::Relative(prior) => {
                check_prior(prior, q)?;
                Ok(tau * log_sum_exp(q, tau, Some(prior.probs())))
            }
            Branch::Tsallis => Ok(tau * spmax(&scaled(q, tau))),
            Branch::Alpha(alpha) => {
                let pi = alpha_policy(alpha, &scaled(q, tau))?;
                Ok(pi.dot(q) - tau * alpha_omega(alpha, pi.probs()))
            }
        }
    }

    /// Regularized policy, the gradient of [`Self::value`].
    pub fn policy(&self, q: &[f64]) -> Result<Simplex> {
        check_q(q)?;
        let tau = self.tau;
        match self.branch() {
            Branch::Shannon => Ok(softmax(q, tau, None)),
            Branch::Relative(prior) => {
                check_prior(prior, q)?;
                Ok(softmax(q, tau, Some(prior.probs())))
            }
            Branch::Tsallis => Ok(sparsemax(&scaled(q, tau))),
            Branch::Alpha(alpha) => alpha_policy(alpha, &scaled(q, tau)),
        }
    }

    /// Actions with non-zero probability under the sparse regularizers.
    pub fn support(&self, q: &[f64]) -> Result<SparseSupport> {
        check_q(q)?;
        match self.branch() {
            Branch::Tsallis => {
                let z = scaled(q, self.tau);
                let order = descending_order(&z);
                let k = tsallis_support_size(&z, &order);
                Ok(SparseSupport {
                    indices: order[..k].to_vec(),
                })
            }
            Branch::Alpha(alpha) if alpha > 1.0 => {
                let z = scaled(q, self.tau);
                let pi = alpha_policy(alpha, &z)?;
                let indices = descending_order(&z)
                    .into_iter()
                    .filter(|&a| pi.probs()[a] > 0.0)
                    .collect();
                Ok(SparseSupport { indices })
            }
            _ => Err(Error::Usage(
                "support is only defined for Tsallis and alpha > 1; other entropies have full support"
                    .into(),
            )),
        }
    }

    /// The regularizer itself, `Omega(pi)`. Lower means more entropic.
    pub fn regularizer_value(&self, pi: &Simplex) -> Result<f64> {
        let p = pi.probs();
        match self.branch() {
            Branch::Shannon => Ok(neg_entropy(p)),
            Branch::Relative(prior) => {
                if prior.len() != p.len() {
                    return Err(Error::domain("prior and policy lengths differ"));
                }
                Ok(compensated_sum(p.iter().zip(prior.probs()).map(|(&x, &m)| {
                    if x == 0.0 {
                        0.0
                    } else {
                        x * (x / m).ln()
                    }
                })))
            }
            Branch::Tsallis => Ok(0.5 * (compensated_sum(p.iter().map(|x| x * x)) - 1.0)),
            Branch::Alpha(alpha) => Ok(alpha_omega(alpha, p)),
        }
    }

    /// `(L, U)` with `L <= Omega(pi) <= U` over the simplex with `n` actions.
    pub fn omega_bounds(&self, n: usize) -> (f64, f64) {
        let nf = n as f64;
        match self.branch() {
            Branch::Shannon => (-nf.ln(), 0.0),
            Branch::Relative(prior) => (0.0, nf.ln() + (1.0 / prior.min()).ln()),
            Branch::Tsallis => (-(nf - 1.0) / (2.0 * nf), 0.0),
            Branch::Alpha(alpha) => ((nf.powf(1.0 - alpha) - 1.0) / (alpha * (alpha - 1.0)), 0.0),
        }
    }
}

fn check_q(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::domain("empty action-value vector"));
    }
    if let Some(x) = q.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("action value {x} is not finite")));
    }
    Ok(())
}

fn check_prior(prior: &Simplex, q: &[f64]) -> Result<()> {
    if prior.len() != q.len() {
        return Err(Error::domain(format!(
            "prior has {} entries for {} actions",
            prior.len(),
            q.len()
        )));
    }
    Ok(())
}

fn scaled(q: &[f64], tau: f64) -> Vec<f64> {
    q.iter().map(|x| x / tau).collect()
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `log sum_a w_a exp(q_a / tau)`, shifted by the maximum.
fn log_sum_exp(q: &[f64], tau: f64, weights: Option<&[f64]>) -> f64 {
    let m = max_of(q);
    let s = compensated_sum(q.iter().enumerate().map(|(a, &x)| {
        let w = weights.map_or(1.0, |w| w[a]);
        w * ((x - m) / tau).exp()
    }));
    m / tau + s.ln()
}

fn softmax(q: &[f64], tau: f64, weights: Option<&[f64]>) -> Simplex {
    let m = max_of(q);
    let e: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(a, &x)| weights.map_or(1.0, |w| w[a]) * ((x - m) / tau).exp())
        .collect();
    let total = compensated_sum(e.iter().copied());
    Simplex(e.into_iter().map(|x| x / total).collect())
}

fn neg_entropy(p: &[f64]) -> f64 {
    compensated_sum(p.iter().map(|&x| if x == 0.0 { 0.0 } else { x * x.ln() }))
}

/// Indices sorted by decreasing value; ties keep index order.
fn descending_order(z: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]));
    order
}

/// Number of sorted entries passing `1 + i z_(i) > sum_{j<=i} z_(j)`.
fn tsallis_support_size(z: &[f64], order: &[usize]) -> usize {
    let mut cumulative = 0.0;
    let mut k = 1;
    for (i, &a) in order.iter().enumerate() {
        let rank = (i + 1) as f64;
        cumulative += z[a];
        if 1.0 + rank * z[a] > cumulative {
            k = i + 1;
        }
    }
    k
}

fn tsallis_threshold(z: &[f64]) -> (f64, usize) {
    let order = descending_order(z);
    let k = tsallis_support_size(z, &order);
    let top: f64 = compensated_sum(order[..k].iter().map(|&a| z[a]));
    ((top - 1.0) / k as f64, k)
}

fn sparsemax(z: &[f64]) -> Simplex {
    let (t, _) = tsallis_threshold(z);
    Simplex(z.iter().map(|&x| (x - t).max(0.0)).collect())
}

/// `spmax(z) = sum_K (z^2/2 - t^2/2) + 1/2`, evaluated after shifting by the
/// maximum since `spmax(z + c) = spmax(z) + c`.
fn spmax(z: &[f64]) -> f64 {
    let m = max_of(z);
    let shifted: Vec<f64> = z.iter().map(|x| x - m).collect();
    let (t, _) = tsallis_threshold(&shifted);
    let body = compensated_sum(
        shifted
            .iter()
            .filter(|&&x| x > t)
            .map(|&x| 0.5 * (x * x - t * t)),
    );
    m + body + 0.5
}

fn alpha_omega(alpha: f64, p: &[f64]) -> f64 {
    if alpha == 1.0 {
        return neg_entropy(p);
    }
    (compensated_sum(p.iter().map(|x| x.powf(alpha))) - 1.0) / (alpha * (alpha - 1.0))
}

/// Unnormalized alpha-policy weight at scaled value `z` for threshold `mu`.
fn alpha_weight(alpha: f64, z: f64, mu: f64) -> f64 {
    let e = 1.0 / (alpha - 1.0);
    if alpha > 1.0 {
        ((alpha - 1.0) * (z - mu)).max(0.0).powf(e)
    } else {
        ((1.0 - alpha) * (mu - z)).powf(e)
    }
}

fn alpha_mass(alpha: f64, z: &[f64], mu: f64) -> f64 {
    compensated_sum(z.iter().map(|&x| alpha_weight(alpha, x, mu)))
}

/// Unnormalized alpha-policy weights: `((alpha-1)(z_a - mu))_+^(1/(alpha-1))`
/// with `mu` chosen so the mass is one.
///
/// Bisection runs until the bracket is two adjacent floats. For `alpha > 2`
/// the weight of an action sitting at the threshold has unbounded slope in
/// `mu`, so one ulp can move the mass by a visible amount; the remaining
/// defect is then taken from the smallest-weight group of tied actions, which
/// is where the exact threshold puts it.
fn alpha_weights(alpha: f64, z: &[f64]) -> Vec<f64> {
    let zmax = max_of(z);
    let n = z.len() as f64;
    // mass is decreasing in mu; mass(lo) >= 1 >= mass(hi)
    let (mut lo, mut hi) = if alpha > 1.0 {
        (zmax - 1.0 / (alpha - 1.0), zmax)
    } else {
        (zmax + 1.0 / (1.0 - alpha), zmax + n.powf(1.0 - alpha) / (1.0 - alpha))
    };
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if alpha_mass(alpha, z, mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut weights: Vec<f64> = z.iter().map(|&x| alpha_weight(alpha, x, lo)).collect();
    if alpha > 2.0 {
        let mut excess = compensated_sum(weights.iter().copied()) - 1.0;
        let mut order: Vec<usize> = (0..z.len()).filter(|&a| weights[a] > 0.0).collect();
        order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
        let mut i = 0;
        while excess > 0.0 && i < order.len() {
            let group: Vec<usize> = order[i..]
                .iter()
                .copied()
                .take_while(|&a| z[a] == z[order[i]])
                .collect();
            i += group.len();
            let share = excess / group.len() as f64;
            for &a in &group {
                let cut = share.min(weights[a]);
                weights[a] -= cut;
                excess -= cut;
            }
        }
    }
    weights
}

/// Exact maximizer for the alpha-divergence regularizer at scaled values `z`.
pub(crate) fn alpha_policy(alpha: f64, z: &[f64]) -> Result<Simplex> {
    let weights = alpha_weights(alpha, z);
    let mass = compensated_sum(weights.iter().copied());
    if (mass - 1.0).abs() > ALPHA_MASS_TOL {
        return Err(Error::Numeric(format!(
            "alpha={alpha} policy has mass {mass} before renormalization"
        )));
    }
    Ok(Simplex(weights.into_iter().map(|w| w / mass).collect()))
}
