use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::{validate_action, Mdp, State};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

static NEXT_SIMULATOR: AtomicU32 = AtomicU32::new(0);

/// Reference to a state previously returned by a particular simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateHandle {
    sim: u32,
    id: u32,
}

impl StateHandle {
    /// Dense per-simulator index, usable as a cache key.
    pub fn index(self) -> usize {
        self.id as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: StateHandle,
    pub reward: f64,
}

/// A simulator that can only be queried at the initial state or at states it
/// has returned before. Each distinct state gets one handle; every `step` is
/// counted as a query.
pub struct LocalAccessSimulator {
    mdp: Arc<dyn Mdp>,
    sim: u32,
    states: Vec<State>,
    index: FxHashMap<State, u32>,
    rng: ChaCha8Rng,
    queries: u64,
    scratch: State,
}

impl LocalAccessSimulator {
    pub fn new(mdp: Arc<dyn Mdp>, seed: u64) -> Self {
        Self {
            mdp,
            sim: NEXT_SIMULATOR.fetch_add(1, Ordering::Relaxed),
            states: Vec::new(),
            index: FxHashMap::default(),
            rng: stream(seed, Stream::Environment),
            queries: 0,
            scratch: Vec::new(),
        }
    }

    pub fn mdp(&self) -> &dyn Mdp {
        &*self.mdp
    }

    fn register(&mut self, s: State) -> StateHandle {
        let next = self.states.len() as u32;
        let id = *self.index.entry(s).or_insert_with_key(|k| {
            self.states.push(k.clone());
            next
        });
        StateHandle { sim: self.sim, id }
    }

    /// Handle of the initial state.
    pub fn reset(&mut self) -> StateHandle {
        let s = self.mdp.initial_state();
        self.register(s)
    }

    pub fn state(&self, h: StateHandle) -> Result<&[usize]> {
        if h.sim != self.sim {
            return Err(Error::UnknownHandle(h));
        }
        self.states.get(h.id as usize).map(|s| s.as_slice()).ok_or(Error::UnknownHandle(h))
    }

    pub fn step(&mut self, h: StateHandle, a: &[usize]) -> Result<Transition> {
        self.state(h)?;
        validate_action(self.mdp.action_counts(), a)?;
        let reward = self.mdp.sample_into(&self.states[h.id as usize], a, &mut self.rng, &mut self.scratch);
        self.queries += 1;
        let next = match self.index.get(self.scratch.as_slice()) {
            Some(&id) => StateHandle { sim: self.sim, id },
            None => self.register(self.scratch.clone()),
        };
        Ok(Transition { next, reward })
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Number of distinct states returned so far.
    pub fn num_registered(&self) -> usize {
        self.states.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{reset, CoordinationMdp, EnvironmentSpec};

    #[test]
    fn unknown_handles_are_rejected() {
        let mdp: Arc<dyn Mdp> = Arc::new(CoordinationMdp);
        let mut a = LocalAccessSimulator::new(mdp.clone(), 0);
        let mut b = LocalAccessSimulator::new(mdp, 0);
        let ha = a.reset();
        let hb = b.reset();
        assert!(matches!(a.step(hb, &[0, 0]), Err(Error::UnknownHandle(_))));
        let forged = StateHandle { sim: ha.sim, id: 7 };
        assert!(matches!(a.step(forged, &[0, 0]), Err(Error::UnknownHandle(_))));
        assert_eq!(a.queries(), 0);
        assert!(a.step(ha, &[1, 0]).is_ok());
        assert_eq!(a.queries(), 1);
        assert!(matches!(a.step(ha, &[2, 0]), Err(Error::InvalidAction(_))));
    }

    #[test]
    fn coordination_transitions() {
        let mut sim = LocalAccessSimulator::new(Arc::new(CoordinationMdp), 0);
        let s1 = sim.reset();
        assert_eq!(sim.state(s1).unwrap(), &[0]);
        let t = sim.step(s1, &[1, 0]).unwrap();
        assert_eq!((sim.state(t.next).unwrap(), t.reward), (&[1usize][..], 0.0));
        let loop2 = sim.step(t.next, &[0, 1]).unwrap();
        assert_eq!((loop2.next, loop2.reward), (t.next, 1.0));
        let t3 = sim.step(s1, &[0, 1]).unwrap();
        assert_eq!(sim.state(t3.next).unwrap(), &[2]);
        assert_eq!(sim.step(t3.next, &[1, 0]).unwrap().reward, 1.0);
    }

    #[test]
    fn reset_is_deterministic() {
        let spec = EnvironmentSpec::grid4();
        let (mut a, ha) = reset(&spec, 7).unwrap();
        let (mut b, hb) = reset(&spec, 7).unwrap();
        assert_eq!(a.state(ha).unwrap(), b.state(hb).unwrap());
        assert_eq!(a.state(ha).unwrap(), &[0, 0, 0, 0]);
        let mut ra = Vec::new();
        let mut rb = Vec::new();
        let (mut x, mut y) = (ha, hb);
        for t in 0..50 {
            let act = [t % 4, (t + 1) % 4, (t + 2) % 4, 3];
            let ta = a.step(x, &act).unwrap();
            let tb = b.step(y, &act).unwrap();
            ra.push((a.state(ta.next).unwrap().to_vec(), ta.reward));
            rb.push((b.state(tb.next).unwrap().to_vec(), tb.reward));
            x = ta.next;
            y = tb.next;
        }
        assert_eq!(ra, rb);
        let (c, h) = reset(&EnvironmentSpec::Chain { length: 3, slip: 0.1 }, 1).unwrap();
        assert_eq!(c.state(h).unwrap(), &[0]);
    }
}
