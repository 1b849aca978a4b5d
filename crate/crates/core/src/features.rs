//! Feature maps, additive per-agent decompositions and greedy oracles.

use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;

use crate::mdp::{joint_action_count, joint_actions, ActionVector, Factor, GridFactor, ProductMdp, TabularMdp};
use crate::{Error, Result};

/// `φ(s, a) ∈ ℝᵈ` over a product action space.
pub trait FeatureMap: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn action_counts(&self) -> &[usize];
    fn feature(&self, s: &[usize], a: &[usize]) -> Vec<f64>;

    /// `⟨w, φ(s, a)⟩`.
    fn feature_dot(&self, s: &[usize], a: &[usize], w: &[f64]) -> f64 {
        dot(w, &self.feature(s, a))
    }
}

/// A feature map of the form `φ(s, a) = Σ_j φ_j(s, a_j)`.
pub trait AdditiveFeatureMap: FeatureMap {
    fn agent_feature(&self, s: &[usize], agent: usize, action: usize) -> Vec<f64>;

    /// `⟨w, φ_j(s, a_j)⟩`.
    fn agent_dot(&self, s: &[usize], agent: usize, action: usize, w: &[f64]) -> f64 {
        dot(&self.agent_feature(s, agent, action), w)
    }

    /// Whether `φ_j(s, ·)` depends on `s` only through `s[j]`.
    fn agent_local(&self) -> bool {
        false
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_j φ_j(s, a_j)`, checking that every agent map has the shared dimension.
pub fn joint_feature(map: &dyn AdditiveFeatureMap, s: &[usize], a: &[usize]) -> Result<Vec<f64>> {
    let d = map.dim();
    let mut phi = vec![0.0; d];
    for (j, &aj) in a.iter().enumerate() {
        let part = map.agent_feature(s, j, aj);
        if part.len() != d {
            return Err(Error::Dimension { expected: d, got: part.len() });
        }
        phi.iter_mut().zip(&part).for_each(|(p, x)| *p += x);
    }
    Ok(phi)
}

/// Scores `⟨w, φ_j(s, b)⟩` for every action `b` of agent `j`.
pub fn agent_scores(map: &dyn AdditiveFeatureMap, s: &[usize], agent: usize, w: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..map.action_counts()[agent]).map(|b| map.agent_dot(s, agent, b, w)));
}

/// First index attaining the maximum.
pub fn first_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Maximizer of `⟨w, φ(s, ·)⟩` computed agent by agent; ties go to the
/// lowest action index, i.e. the lexicographically smallest joint action.
pub fn greedy_additive(map: &dyn AdditiveFeatureMap, w: &[f64], s: &[usize]) -> Result<ActionVector> {
    if w.len() != map.dim() {
        return Err(Error::Dimension { expected: map.dim(), got: w.len() });
    }
    let mut scores = Vec::new();
    let mut a = Vec::with_capacity(map.action_counts().len());
    for (j, &n) in map.action_counts().iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidParameter(format!("agent {j} has no actions")));
        }
        agent_scores(map, s, j, w, &mut scores);
        a.push(first_argmax(&scores));
    }
    Ok(a)
}

/// Exact linear maximization over the joint action set.
pub trait GreedyOracle: Send + Sync {
    fn argmax(&self, s: &[usize], w: &[f64]) -> Result<ActionVector>;
}

#[derive(Debug, Clone)]
pub struct AdditiveOracle(pub Arc<dyn AdditiveFeatureMap>);

impl GreedyOracle for AdditiveOracle {
    fn argmax(&self, s: &[usize], w: &[f64]) -> Result<ActionVector> {
        greedy_additive(&*self.0, w, s)
    }
}

/// Brute force over all joint actions; for small action sets and testing.
#[derive(Debug, Clone)]
pub struct EnumerationOracle(pub Arc<dyn FeatureMap>);

pub const MAX_ENUMERATION: u128 = 1_000_000;

impl GreedyOracle for EnumerationOracle {
    fn argmax(&self, s: &[usize], w: &[f64]) -> Result<ActionVector> {
        let counts = self.0.action_counts();
        let size = joint_action_count(counts);
        if size > MAX_ENUMERATION {
            return Err(Error::TooLarge { what: "joint action set", size });
        }
        let mut best: Option<(f64, ActionVector)> = None;
        for a in joint_actions(counts) {
            let v = dot(&self.0.feature(s, &a), w);
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, a));
            }
        }
        best.map(|(_, a)| a).ok_or_else(|| Error::InvalidParameter("empty action set".into()))
    }
}

/// One-hot features over `(agent, agent state, agent action)` for product
/// environments, scaled by `1/√m` so the joint feature has unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotProductMap {
    states: Vec<usize>,
    counts: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
    scale: f64,
}

impl OneHotProductMap {
    /// `(states, actions)` per agent.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut dim = 0;
        for &(s, a) in shapes {
            offsets.push(dim);
            dim += s * a;
        }
        Self {
            states: shapes.iter().map(|x| x.0).collect(),
            counts: shapes.iter().map(|x| x.1).collect(),
            offsets,
            dim,
            scale: 1.0 / (shapes.len().max(1) as f64).sqrt(),
        }
    }

    pub fn for_product(product: &ProductMdp) -> Self {
        let shapes: Vec<_> = product.factors().iter().map(|f| (f.num_states(), f.num_actions())).collect();
        Self::new(&shapes)
    }

    pub fn index(&self, agent: usize, local_state: usize, action: usize) -> usize {
        self.offsets[agent] + local_state * self.counts[agent] + action
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn num_local_states(&self, agent: usize) -> usize {
        self.states[agent]
    }
}

/// Features of the four-agent grid world: `d = 4 · 9 · 4 = 144`.
pub fn grid4_feature_map() -> OneHotProductMap {
    let g = GridFactor::standard(0.95);
    OneHotProductMap::new(&[(g.num_states(), g.num_actions()); 4])
}

impl FeatureMap for OneHotProductMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn action_counts(&self) -> &[usize] {
        &self.counts
    }

    fn feature(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        let mut phi = vec![0.0; self.dim];
        for (j, &aj) in a.iter().enumerate() {
            phi[self.index(j, s[j], aj)] += self.scale;
        }
        phi
    }

    fn feature_dot(&self, s: &[usize], a: &[usize], w: &[f64]) -> f64 {
        a.iter().enumerate().map(|(j, &aj)| w[self.index(j, s[j], aj)]).sum::<f64>() * self.scale
    }
}

impl AdditiveFeatureMap for OneHotProductMap {
    fn agent_feature(&self, s: &[usize], agent: usize, action: usize) -> Vec<f64> {
        let mut phi = vec![0.0; self.dim];
        phi[self.index(agent, s[agent], action)] = self.scale;
        phi
    }

    fn agent_dot(&self, s: &[usize], agent: usize, action: usize, w: &[f64]) -> f64 {
        self.scale * w[self.index(agent, s[agent], action)]
    }

    fn agent_local(&self) -> bool {
        true
    }
}

/// Agent features looked up from a table indexed by `(s[0], agent, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableAdditiveMap {
    dim: usize,
    counts: Vec<usize>,
    table: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TableAdditiveMap {
    pub fn new(dim: usize, counts: Vec<usize>, table: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        for per_state in &table {
            if per_state.len() != counts.len() {
                return Err(Error::Dimension { expected: counts.len(), got: per_state.len() });
            }
            for (per_agent, &n) in per_state.iter().zip(&counts) {
                if per_agent.len() != n {
                    return Err(Error::Dimension { expected: n, got: per_agent.len() });
                }
                if let Some(bad) = per_agent.iter().find(|f| f.len() != dim) {
                    return Err(Error::Dimension { expected: dim, got: bad.len() });
                }
            }
        }
        Ok(Self { dim, counts, table })
    }

    /// The coordination example: the first agent carries the features of
    /// the first state, the second agent those of the two absorbing states.
    pub fn coordination() -> Self {
        let z = vec![0.0, 0.0];
        let table = vec![
            vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![z.clone(), z.clone()]],
            vec![vec![z.clone(), z.clone()], vec![vec![1.0, 0.0], vec![2.0, 0.0]]],
            vec![vec![z.clone(), z.clone()], vec![vec![0.0, 2.0], vec![0.0, 1.0]]],
        ];
        Self::new(2, vec![2, 2], table).expect("coordination table is well formed")
    }

    /// Random Gaussian-like entries scaled so joint features have norm at most one.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, states: usize, counts: &[usize], dim: usize) -> Self {
        let m = counts.len() as f64;
        let table = (0..states)
            .map(|_| {
                counts
                    .iter()
                    .map(|&n| {
                        (0..n)
                            .map(|_| {
                                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                                let r: f64 = rng.gen_range(0.2..1.0);
                                v.into_iter().map(|x| x / norm * r / m).collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(dim, counts.to_vec(), table).expect("random table is well formed")
    }

    pub fn num_states(&self) -> usize {
        self.table.len()
    }
}

impl FeatureMap for TableAdditiveMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn action_counts(&self) -> &[usize] {
        &self.counts
    }

    fn feature(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        joint_feature(self, s, a).expect("table dimensions are validated")
    }
}

impl AdditiveFeatureMap for TableAdditiveMap {
    fn agent_feature(&self, s: &[usize], agent: usize, action: usize) -> Vec<f64> {
        self.table[s[0]][agent][action].clone()
    }

    fn agent_dot(&self, s: &[usize], agent: usize, action: usize, w: &[f64]) -> f64 {
        dot(&self.table[s[0]][agent][action], w)
    }
}

/// Largest `‖φ(s, a)‖₂` over all states and joint actions of a tabular MDP.
pub fn max_feature_norm(map: &dyn FeatureMap, mdp: &dyn TabularMdp) -> Result<f64> {
    let size = mdp.num_states() as u128 * joint_action_count(map.action_counts());
    if size > 100 * MAX_ENUMERATION {
        return Err(Error::TooLarge { what: "state-action table", size });
    }
    let mut best: f64 = 0.0;
    for i in 0..mdp.num_states() {
        let s = mdp.state_at(i);
        for a in joint_actions(map.action_counts()) {
            best = best.max(dot(&map.feature(&s, &a), &map.feature(&s, &a)).sqrt());
        }
    }
    Ok(best)
}
