use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::features::{agent_scores, first_argmax, AdditiveFeatureMap};
use crate::kernel::{KernelElement, KernelFn};
use crate::mdp::ActionVector;
use crate::{Error, Result};

/// Per-agent action scores `Q̂_j(s, ·)` of a fitted additive model.
pub trait ActionScorer: Send + Sync + Debug {
    fn scores(&self, s: &[usize], agent: usize, out: &mut Vec<f64>) -> Result<()>;
}

/// `⟨w, φ_j(s, ·)⟩`.
#[derive(Debug, Clone)]
pub struct LinearScorer {
    pub map: Arc<dyn AdditiveFeatureMap>,
    pub w: Vec<f64>,
}

impl ActionScorer for LinearScorer {
    fn scores(&self, s: &[usize], agent: usize, out: &mut Vec<f64>) -> Result<()> {
        agent_scores(&*self.map, s, agent, &self.w, out);
        Ok(())
    }
}

/// `Σ_c β_c k_j((s, ·), c)` over a snapshot of kernel core elements.
#[derive(Debug, Clone)]
pub struct KernelScorer {
    pub kernel: Arc<dyn KernelFn>,
    pub elements: Vec<KernelElement>,
    pub beta: Vec<f64>,
}

impl ActionScorer for KernelScorer {
    fn scores(&self, s: &[usize], agent: usize, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for b in 0..self.kernel.action_counts()[agent] {
            let mut total = 0.0;
            for (beta, e) in self.beta.iter().zip(&self.elements) {
                let k = self
                    .kernel
                    .agent_eval(s, agent, b, (&e.state, &e.action))
                    .ok_or_else(|| Error::Unsupported("kernel does not decompose over agents".into()))?;
                total += beta * k;
            }
            out.push(total);
        }
        Ok(())
    }
}

/// A stationary policy whose joint action law is a product of per-agent laws.
#[derive(Debug, Clone)]
pub enum Policy {
    Uniform { counts: Vec<usize> },
    /// Per-agent argmax of the scores, ties to the lowest action.
    Greedy { scorer: Arc<dyn ActionScorer>, counts: Vec<usize> },
    /// Per-agent softmax of `alpha` times the scores.
    Softmax { scorer: Arc<dyn ActionScorer>, alpha: f64, counts: Vec<usize> },
    /// `table[j][s[j]]` for product environments.
    AgentTable { table: Vec<Vec<usize>> },
}

impl Policy {
    pub fn counts(&self) -> Vec<usize> {
        match self {
            Policy::Uniform { counts } | Policy::Greedy { counts, .. } | Policy::Softmax { counts, .. } => counts.clone(),
            Policy::AgentTable { table } => table.iter().map(|t| t.iter().max().map_or(1, |m| m + 1)).collect(),
        }
    }

    fn num_agents(&self) -> usize {
        match self {
            Policy::Uniform { counts } | Policy::Greedy { counts, .. } | Policy::Softmax { counts, .. } => counts.len(),
            Policy::AgentTable { table } => table.len(),
        }
    }

    /// Action probabilities of agent `j` at `s`.
    pub fn agent_distribution(&self, s: &[usize], agent: usize, n_actions: usize) -> Result<Vec<f64>> {
        let mut scores = Vec::new();
        Ok(match self {
            Policy::Uniform { .. } => vec![1.0 / n_actions as f64; n_actions],
            Policy::Greedy { scorer, .. } => {
                scorer.scores(s, agent, &mut scores)?;
                let mut p = vec![0.0; n_actions];
                p[first_argmax(&scores)] = 1.0;
                p
            }
            Policy::Softmax { scorer, alpha, .. } => {
                scorer.scores(s, agent, &mut scores)?;
                softmax(&scores, *alpha)
            }
            Policy::AgentTable { table } => {
                let mut p = vec![0.0; n_actions];
                p[table[agent][s[agent]]] = 1.0;
                p
            }
        })
    }

    /// Precomputes what is needed to sample repeatedly at `s`.
    pub fn prepare(&self, s: &[usize]) -> Result<Prepared> {
        let mut scores = Vec::new();
        Ok(match self {
            Policy::Uniform { counts } => Prepared::Uniform(counts.clone()),
            Policy::Greedy { scorer, .. } => {
                let mut a = Vec::with_capacity(self.num_agents());
                for j in 0..self.num_agents() {
                    scorer.scores(s, j, &mut scores)?;
                    a.push(first_argmax(&scores));
                }
                Prepared::Fixed(a)
            }
            Policy::Softmax { scorer, alpha, .. } => {
                let mut dists = Vec::with_capacity(self.num_agents());
                for j in 0..self.num_agents() {
                    scorer.scores(s, j, &mut scores)?;
                    dists.push(softmax(&scores, *alpha));
                }
                Prepared::Factored(dists)
            }
            Policy::AgentTable { table } => Prepared::Fixed(table.iter().zip(s).map(|(t, &x)| t[x]).collect()),
        })
    }

    pub fn sample(&self, s: &[usize], rng: &mut dyn RngCore) -> Result<ActionVector> {
        Ok(self.prepare(s)?.sample(rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prepared {
    Uniform(Vec<usize>),
    Fixed(ActionVector),
    Factored(Vec<Vec<f64>>),
}

impl Prepared {
    pub fn sample(&self, rng: &mut dyn RngCore) -> ActionVector {
        let mut a = Vec::new();
        self.sample_into(rng, &mut a);
        a
    }

    pub fn sample_into(&self, rng: &mut dyn RngCore, out: &mut ActionVector) {
        out.clear();
        match self {
            Prepared::Uniform(counts) => out.extend(counts.iter().map(|&n| rng.gen_range(0..n))),
            Prepared::Fixed(a) => out.extend_from_slice(a),
            Prepared::Factored(dists) => out.extend(dists.iter().map(|p| sample_index(p, rng))),
        }
    }
}

/// `exp(α x_i − max) / Σ`, stable for large logits.
pub fn softmax(scores: &[f64], alpha: f64) -> Vec<f64> {
    let logits: Vec<f64> = scores.iter().map(|x| alpha * x).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

pub fn sample_index(p: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave the total just below u.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Draws a joint action from the softmax of accumulated linear estimates,
/// one agent at a time: agent `j` uses logits `α Σ_k ⟨w_k, φ_j(s, ·)⟩`.
pub fn politex_sample(
    map: &dyn AdditiveFeatureMap,
    weights: &[Vec<f64>],
    alpha: f64,
    s: &[usize],
    rng: &mut dyn RngCore,
) -> Result<ActionVector> {
    let d = map.dim();
    if let Some(bad) = weights.iter().find(|w| w.len() != d) {
        return Err(Error::Dimension { expected: d, got: bad.len() });
    }
    let mut scores = Vec::new();
    let mut a = Vec::with_capacity(map.action_counts().len());
    for (j, &n) in map.action_counts().iter().enumerate() {
        let mut logits = vec![0.0; n];
        for w in weights {
            agent_scores(map, s, j, w, &mut scores);
            logits.iter_mut().zip(&scores).for_each(|(l, x)| *l += x);
        }
        a.push(sample_index(&softmax(&logits, alpha), rng));
    }
    Ok(a)
}

/// `Unif{π_0, …, π_{K−1}}`: draws a component, then acts with it for a whole episode.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub components: Vec<Policy>,
}

impl Mixture {
    pub fn sample_component(&self, rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..self.components.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TableAdditiveMap;
    use crate::rng::{stream, Stream};

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 0.0], 1.0);
        assert_eq!(p, vec![1.0, 0.0]);
        let q = softmax(&[1.0, 1.0, 1.0], 5.0);
        assert!(q.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn empty_weights_sample_uniformly() {
        let mut rng = stream(1, Stream::Policy);
        let map = TableAdditiveMap::random(&mut rng, 1, &[2, 2], 3);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            let a = politex_sample(&map, &[], 1.0, &[0], &mut rng).unwrap();
            counts[a[0] * 2 + a[1]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 40_000.0 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn dominant_logit_is_greedy() {
        let mut rng = stream(2, Stream::Policy);
        let map = TableAdditiveMap::random(&mut rng, 1, &[3, 3], 4);
        let w = vec![0.7, -0.2, 0.4, 0.1];
        let greedy = crate::features::greedy_additive(&map, &w, &[0]).unwrap();
        let hits = (0..10_000).filter(|_| politex_sample(&map, &[w.clone()], 1e6, &[0], &mut rng).unwrap() == greedy).count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn mismatched_weights_are_rejected() {
        let mut rng = stream(3, Stream::Policy);
        let map = TableAdditiveMap::random(&mut rng, 1, &[2], 3);
        assert!(politex_sample(&map, &[vec![1.0]], 1.0, &[0], &mut rng).is_err());
    }

    #[test]
    fn sample_index_handles_rounding() {
        let mut rng = stream(4, Stream::Policy);
        for _ in 0..1000 {
            assert!(sample_index(&[0.0, 0.3, 0.7 - 1e-17, 0.0], &mut rng) < 3);
        }
    }
}
