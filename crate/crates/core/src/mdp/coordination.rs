use rand::RngCore;

use super::{Mdp, State, TabularMdp};

pub const S1: usize = 0;
pub const S2: usize = 1;
pub const S3: usize = 2;

/// Two agents with actions {0, 1}. From `s1` the first agent picks the
/// absorbing state (`1` leads to `s2`, `0` to `s3`); in `s2` the second agent
/// is paid for playing 1, in `s3` for playing 0.
#[derive(Debug, Clone, Default)]
pub struct CoordinationMdp;

impl CoordinationMdp {
    fn step(s: usize, a: &[usize]) -> (usize, f64) {
        match s {
            S1 => (if a[0] == 1 { S2 } else { S3 }, 0.0),
            S2 => (S2, if a[1] == 1 { 1.0 } else { 0.0 }),
            _ => (S3, if a[1] == 0 { 1.0 } else { 0.0 }),
        }
    }
}

impl Mdp for CoordinationMdp {
    fn action_counts(&self) -> &[usize] {
        &[2, 2]
    }

    fn initial_state(&self) -> State {
        vec![S1]
    }

    fn sample(&self, s: &[usize], a: &[usize], _rng: &mut dyn RngCore) -> (State, f64) {
        let (next, r) = Self::step(s[0], a);
        (vec![next], r)
    }
}

impl TabularMdp for CoordinationMdp {
    fn num_states(&self) -> usize {
        3
    }

    fn state_index(&self, s: &[usize]) -> usize {
        s[0]
    }

    fn state_at(&self, index: usize) -> State {
        vec![index]
    }

    fn outcomes(&self, s: &[usize], a: &[usize]) -> Vec<(State, f64, f64)> {
        let (next, r) = Self::step(s[0], a);
        vec![(vec![next], 1.0, r)]
    }
}
