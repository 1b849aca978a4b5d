//! MDPs with product action spaces, the local-access simulator, the shipped
//! environments and exact dynamic programming used as a reference.

mod coordination;
mod dp;
mod product;
mod simulator;
mod spec;

use std::fmt::Debug;

use rand::RngCore;

pub use coordination::CoordinationMdp;
pub use dp::{
    evaluate_joint_policy, factor_policy_evaluation, factor_value_iteration, tabular_value_iteration,
    ValueTable, BELLMAN_TOLERANCE,
};
pub use product::{ChainFactor, Factor, GridFactor, MoveDraw, ProductMdp, GRID_ACTIONS};
pub use simulator::{LocalAccessSimulator, StateHandle, Transition};
pub use spec::{reset, Environment, EnvironmentSpec};

use crate::{Error, Result};

/// Environment state, one entry per state component.
pub type State = Vec<usize>;

/// Joint action, one component per agent.
pub type ActionVector = Vec<usize>;

/// A generative model over a product action space with rewards in `[0, 1]`.
pub trait Mdp: Send + Sync + Debug {
    fn action_counts(&self) -> &[usize];
    fn initial_state(&self) -> State;
    /// Draws `(s', r)` for a validated action.
    fn sample(&self, s: &[usize], a: &[usize], rng: &mut dyn RngCore) -> (State, f64);

    /// [`Mdp::sample`] writing `s'` into `next`.
    fn sample_into(&self, s: &[usize], a: &[usize], rng: &mut dyn RngCore, next: &mut State) -> f64 {
        let (n, r) = self.sample(s, a, rng);
        *next = n;
        r
    }

    fn num_agents(&self) -> usize {
        self.action_counts().len()
    }
}

/// An MDP whose states can be enumerated and whose transitions are known.
pub trait TabularMdp: Mdp {
    fn num_states(&self) -> usize;
    fn state_index(&self, s: &[usize]) -> usize;
    fn state_at(&self, index: usize) -> State;
    /// `(s', P(s' | s, a), r(s, a, s'))` with probabilities summing to one.
    fn outcomes(&self, s: &[usize], a: &[usize]) -> Vec<(State, f64, f64)>;

    fn as_product(&self) -> Option<&ProductMdp> {
        None
    }
}

pub fn validate_action(counts: &[usize], a: &[usize]) -> Result<()> {
    if a.len() != counts.len() || a.iter().zip(counts).any(|(x, n)| x >= n) {
        return Err(Error::InvalidAction(a.to_vec()));
    }
    Ok(())
}

pub fn joint_action_count(counts: &[usize]) -> u128 {
    counts.iter().map(|&c| c as u128).product()
}

/// All joint actions in lexicographic order (last component varies fastest).
pub fn joint_actions(counts: &[usize]) -> JointActions {
    JointActions {
        counts: counts.to_vec(),
        next: if counts.iter().all(|&c| c > 0) { Some(vec![0; counts.len()]) } else { None },
    }
}

pub struct JointActions {
    counts: Vec<usize>,
    next: Option<ActionVector>,
}

impl Iterator for JointActions {
    type Item = ActionVector;

    fn next(&mut self) -> Option<ActionVector> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.counts[i] {
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    }
}
