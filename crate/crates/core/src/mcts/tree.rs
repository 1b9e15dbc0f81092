use crate::error::{Error, Result};
use crate::kernels::{power_mean, PowerExponent, WeightedValues};
use crate::regularizers::{RegularizerKind, Simplex};
use crate::SimRng;

use rand::Rng;

pub type NodeId = usize;

/// Statistics of one action out of a node (a Q-node).
#[derive(Debug, Clone)]
pub struct QEdge<K> {
    pub action: usize,
    /// `n(s, a)`
    pub visits: u64,
    /// Sum of immediate rewards observed through this edge.
    pub reward_sum: f64,
    /// Visits that ended on this edge without reaching a child node: terminal
    /// transitions (value 0) and rollouts from unexpanded successors.
    pub leaf_visits: u64,
    pub leaf_return_sum: f64,
    /// Current estimate: `Q(s, a)` for the UCT backups, `Q_Omega(s, a)` under
    /// E3W. Zero until the first visit.
    pub q: f64,
    pub children: Vec<(K, NodeId)>,
}

impl<K> QEdge<K> {
    fn new(action: usize) -> Self {
        QEdge {
            action,
            visits: 0,
            reward_sum: 0.0,
            leaf_visits: 0,
            leaf_return_sum: 0.0,
            q: 0.0,
            children: Vec::new(),
        }
    }
}

/// A state (or history) node, the V-node.
#[derive(Debug, Clone)]
pub struct TreeNode<K> {
    /// `N(s)`; equals the sum of edge visits after every backup.
    pub visits: u64,
    pub value: f64,
    pub edges: Vec<QEdge<K>>,
    /// Last regularized policy, used as the relative-entropy prior.
    pub prior_policy: Simplex,
    pub depth: usize,
}

impl<K> TreeNode<K> {
    pub fn new(n_actions: usize, depth: usize) -> Self {
        TreeNode {
            visits: 0,
            value: 0.0,
            edges: (0..n_actions).map(QEdge::new).collect(),
            prior_policy: Simplex::uniform(n_actions.max(1)),
            depth,
        }
    }

    pub fn q_values(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.q).collect()
    }

    pub fn visit_counts(&self) -> Vec<u64> {
        self.edges.iter().map(|e| e.visits).collect()
    }
}

/// Search tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree<K> {
    pub nodes: Vec<TreeNode<K>>,
}

impl<K: PartialEq> Tree<K> {
    pub fn new(root_actions: usize) -> Self {
        Tree {
            nodes: vec![TreeNode::new(root_actions, 0)],
        }
    }

    pub fn root(&self) -> &TreeNode<K> {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &TreeNode<K> {
        &self.nodes[id]
    }

    pub fn child(&self, id: NodeId, action: usize, key: &K) -> Option<NodeId> {
        self.nodes[id].edges[action]
            .children
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, c)| *c)
    }

    pub(crate) fn add_child(&mut self, parent: NodeId, action: usize, key: K, n_actions: usize) -> NodeId {
        let depth = self.nodes[parent].depth + 1;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::new(n_actions, depth));
        self.nodes[parent].edges[action].children.push((key, id));
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// UCB1 over the node's edges; unvisited edges come first in index order and
/// ties go to the lowest index.
pub fn select_ucb1<K>(node: &TreeNode<K>, c: f64) -> usize {
    if let Some(e) = node.edges.iter().find(|e| e.visits == 0) {
        return e.action;
    }
    let log_n = (node.visits as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for e in &node.edges {
        let score = e.q + c * (log_n / e.visits as f64).sqrt();
        if score > best_score {
            best = e.action;
            best_score = score;
        }
    }
    best
}

/// Uniform-mixing weight `min(1, eps |A| / log(sum_a n(s,a) + 1))`.
pub fn e3w_lambda<K>(node: &TreeNode<K>, epsilon: f64) -> f64 {
    let denom = (node.visits as f64 + 1.0).ln();
    if denom <= 0.0 {
        return 1.0;
    }
    (epsilon * node.edges.len() as f64 / denom).min(1.0)
}

/// The E3W sampling distribution at `node`:
/// `(1 - lambda) grad Omega*(Q_Omega) + lambda / |A|`.
///
/// `kind` is taken as given; callers that use the relative entropy pass the
/// node's prior through [`RegularizerKind::with_prior`].
pub fn e3w_distribution<K>(node: &TreeNode<K>, kind: &RegularizerKind, epsilon: f64) -> Result<(Simplex, Simplex)> {
    let policy = kind.policy(&node.q_values())?;
    let lambda = e3w_lambda(node, epsilon);
    let n = node.edges.len() as f64;
    let mixed: Vec<f64> = policy
        .probs()
        .iter()
        .map(|p| (1.0 - lambda) * p + lambda / n)
        .collect();
    Ok((Simplex::normalized(mixed)?, policy))
}

/// Samples an action from the E3W distribution.
pub fn select_e3w<K>(node: &TreeNode<K>, kind: &RegularizerKind, epsilon: f64, rng: &mut SimRng) -> Result<usize> {
    let (dist, _) = e3w_distribution(node, &kind.with_prior(node.prior_policy.clone()), epsilon)?;
    Ok(sample_index(dist.probs(), rng))
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the tail short of one
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// How V-nodes aggregate their children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum NodeAggregate {
    Average,
    Power(f64),
    Max,
}

pub(crate) fn aggregate<K>(node: &TreeNode<K>, mode: NodeAggregate) -> Result<f64> {
    let visited = node.edges.iter().filter(|e| e.visits > 0);
    match mode {
        NodeAggregate::Average => {
            let total: f64 = node.edges.iter().map(|e| e.visits as f64).sum();
            Ok(visited.map(|e| e.visits as f64 * e.q).sum::<f64>() / total)
        }
        NodeAggregate::Max => Ok(visited.map(|e| e.q).fold(f64::NEG_INFINITY, f64::max)),
        NodeAggregate::Power(p) => {
            let (values, weights): (Vec<f64>, Vec<f64>) =
                visited.map(|e| (e.q.max(0.0), e.visits as f64)).unzip();
            let data = WeightedValues::new(values, weights)?;
            power_mean(&data, PowerExponent::new(p)?)
        }
    }
}

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Corruption(format!("{what} became {x}")))
    }
}
