//! Exact reference values for small problems.

use serde::Serialize;

use crate::envs::SyntheticTree;
use crate::error::{Error, Result};
use crate::mcts::{argmax_by, SearchResult};
use crate::numeric::{compensated_sum, golden_section_min};
use crate::regularizers::RegularizerKind;

/// Bracket width at which the entropic-mean search stops.
pub const ENTROPIC_TOL: f64 = 1e-10;

/// Backward-induction values of every node of a synthetic tree.
/// `levels[t][i]` is the value of node `i` at depth `t`; the last level
/// holds the leaf means.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    pub levels: Vec<Vec<f64>>,
}

impl ExactValues {
    pub fn root_value(&self) -> f64 {
        self.levels[0][0]
    }

    /// Values of the root's children, i.e. the true `Q` of each root action.
    pub fn root_children(&self) -> &[f64] {
        &self.levels[1]
    }

    pub fn best_action(&self) -> usize {
        argmax_by(self.root_children().iter().copied())
    }
}

/// `V*` of every node: the maximum over children, undiscounted.
pub fn exact_values(tree: &SyntheticTree) -> Result<ExactValues> {
    backward(tree, |children| Ok(children.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
}

/// `V*_Omega` of every node: the conjugate value of the children's values.
pub fn exact_regularized_values(tree: &SyntheticTree, kind: &RegularizerKind) -> Result<ExactValues> {
    kind.validate()?;
    backward(tree, |children| kind.value(children))
}

fn backward<F: Fn(&[f64]) -> Result<f64>>(tree: &SyntheticTree, reduce: F) -> Result<ExactValues> {
    let k = tree.branching();
    let leaves = tree.leaf_means().len() as u64;
    if leaves > crate::envs::MAX_LEAVES {
        return Err(Error::SizeGuard { size: leaves, limit: crate::envs::MAX_LEAVES });
    }
    let mut levels = vec![tree.leaf_means().to_vec()];
    for _ in 0..tree.depth() {
        let below = levels.last().unwrap();
        let above = below.chunks(k).map(&reduce).collect::<Result<Vec<_>>>()?;
        levels.push(above);
    }
    levels.reverse();
    Ok(ExactValues { levels })
}

/// Generator of the alpha-divergence with `p = 1 - alpha`, including the
/// `p = 0` and `p = 1` limits.
fn f_alpha(p: f64, y: f64) -> f64 {
    if p == 0.0 {
        y * y.ln() - y
    } else if p == 1.0 {
        y - y.ln()
    } else {
        (y.powf(1.0 - p) - p) / (p * (p - 1.0)) + y / p
    }
}

/// Minimizer over `x > 0` of `sum_i w_i a_i f_alpha(x / a_i)`. It equals the
/// weighted power mean of the values with exponent `1 - alpha`.
pub fn entropic_mean(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::domain("values and weights must be non-empty and of equal length"));
    }
    if values.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::domain("entropic mean needs strictly positive values"));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) || (compensated_sum(weights.iter().copied()) - 1.0).abs() > 1e-9 {
        return Err(Error::domain("weights must be a probability vector"));
    }
    if !alpha.is_finite() {
        return Err(Error::domain(format!("alpha {alpha} must be finite")));
    }
    let p = 1.0 - alpha;
    let objective = |x: f64| compensated_sum(values.iter().zip(weights).map(|(&a, &w)| w * a * f_alpha(p, x / a)));
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    Ok(golden_section_min(objective, lo, hi, ENTROPIC_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretAndErrors {
    /// `n V* - sum_t V(i_t)` over the root choices.
    pub regret: f64,
    /// Root value minus the regularized optimum.
    pub eps_omega: f64,
    /// Root value minus the unregularized optimum.
    pub eps_uct: f64,
}

/// Regret of the root choices and root-value errors of a search on `tree`.
/// `kind` selects the regularized optimum; `None` uses `V*` for both errors.
pub fn regret_and_errors(
    result: &SearchResult,
    n_simulations: usize,
    tree: &SyntheticTree,
    kind: Option<&RegularizerKind>,
) -> Result<RegretAndErrors> {
    let exact = exact_values(tree)?;
    let regularized = match kind {
        Some(kind) => exact_regularized_values(tree, kind)?,
        None => exact.clone(),
    };
    regret_and_errors_with(result, n_simulations, &exact, &regularized, result.root_value)
}

/// As [`regret_and_errors`] with precomputed oracle values and the root
/// value given explicitly, for callers that report it in other units.
pub fn regret_and_errors_with(
    result: &SearchResult,
    n_simulations: usize,
    exact: &ExactValues,
    regularized: &ExactValues,
    root_value: f64,
) -> Result<RegretAndErrors> {
    if result.root_choices.len() != n_simulations {
        return Err(Error::TraceMismatch {
            expected: n_simulations,
            got: result.root_choices.len(),
        });
    }
    let children = exact.root_children();
    let v_star = exact.root_value();
    let chosen = compensated_sum(result.root_choices.iter().map(|&a| children[a]));
    Ok(RegretAndErrors {
        regret: n_simulations as f64 * v_star - chosen,
        eps_omega: root_value - regularized.root_value(),
        eps_uct: root_value - v_star,
    })
}
