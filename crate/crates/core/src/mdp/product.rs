use std::fmt::Debug;

use rand::{Rng, RngCore};

use super::{Mdp, State, TabularMdp};

/// A single-agent tabular MDP used as one component of a [`ProductMdp`].
/// Rewards are raw and may fall outside `[0, 1]`; the product rescales them.
pub trait Factor: Send + Sync + Debug {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn start(&self) -> usize;
    /// Bounds `(lo, hi)` on the raw reward, `lo < hi`.
    fn reward_range(&self) -> (f64, f64);
    /// `(s', p, raw reward)` for every reachable next state.
    fn outcomes(&self, s: usize, a: usize) -> Vec<(usize, f64, f64)>;
    fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> (usize, f64);
}

/// Grid moves: up, right, down, left.
pub const GRID_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveDraw {
    pub applied: bool,
    pub random_dir: usize,
}

impl MoveDraw {
    pub const NO_NOISE: MoveDraw = MoveDraw { applied: true, random_dir: 0 };
}

/// One agent on a `rows x cols` grid with an absorbing goal (+1) and trap (-1).
/// The intended move is executed with probability `p_intended`, otherwise a
/// uniformly random move is executed. Moves off the grid leave the agent in place.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFactor {
    pub rows: usize,
    pub cols: usize,
    pub start: usize,
    pub goal: usize,
    pub trap: usize,
    pub p_intended: f64,
}

impl GridFactor {
    /// 3x3 grid, start in a corner, goal in the opposite corner, trap in the centre.
    pub fn standard(p_intended: f64) -> Self {
        Self { rows: 3, cols: 3, start: 0, goal: 8, trap: 4, p_intended }
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        s == self.goal || s == self.trap
    }

    pub fn moved(&self, s: usize, dir: usize) -> usize {
        let (r, c) = (s / self.cols, s % self.cols);
        match dir {
            0 if r > 0 => s - self.cols,
            1 if c + 1 < self.cols => s + 1,
            2 if r + 1 < self.rows => s + self.cols,
            3 if c > 0 => s - 1,
            _ => s,
        }
    }

    /// The random part of one step: whether the chosen move is applied, and
    /// the uniformly drawn move used otherwise.
    pub fn draw(&self, rng: &mut dyn RngCore) -> MoveDraw {
        // The direction only matters when the intended move is not applied.
        let applied = rng.gen::<f64>() < self.p_intended;
        MoveDraw { applied, random_dir: if applied { 0 } else { rng.gen_range(0..GRID_ACTIONS) } }
    }

    pub fn raw_reward(&self, s: usize, next: usize) -> f64 {
        if self.is_absorbing(s) {
            0.0
        } else if next == self.goal {
            1.0
        } else if next == self.trap {
            -1.0
        } else {
            0.0
        }
    }

    pub fn sample_with(&self, s: usize, a: usize, draw: MoveDraw) -> (usize, f64) {
        if self.is_absorbing(s) {
            return (s, 0.0);
        }
        let dir = if draw.applied { a } else { draw.random_dir };
        let next = self.moved(s, dir);
        (next, self.raw_reward(s, next))
    }
}

impl Factor for GridFactor {
    fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    fn num_actions(&self) -> usize {
        GRID_ACTIONS
    }

    fn start(&self) -> usize {
        self.start
    }

    fn reward_range(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<(usize, f64, f64)> {
        if self.is_absorbing(s) {
            return vec![(s, 1.0, 0.0)];
        }
        let noise = (1.0 - self.p_intended) / GRID_ACTIONS as f64;
        let mut out: Vec<(usize, f64, f64)> = Vec::with_capacity(GRID_ACTIONS);
        for dir in 0..GRID_ACTIONS {
            let p = noise + if dir == a { self.p_intended } else { 0.0 };
            if p == 0.0 {
                continue;
            }
            let next = self.moved(s, dir);
            match out.iter_mut().find(|o| o.0 == next) {
                Some(o) => o.1 += p,
                None => out.push((next, p, self.raw_reward(s, next))),
            }
        }
        out
    }

    fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> (usize, f64) {
        let draw = self.draw(rng);
        self.sample_with(s, a, draw)
    }
}

/// A chain of `length` states; action 1 moves right, action 0 moves left, and
/// with probability `slip` the opposite move happens. Taking action 1 in the
/// last state pays 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFactor {
    pub length: usize,
    pub slip: f64,
}

impl ChainFactor {
    fn moved(&self, s: usize, right: bool) -> usize {
        if right {
            (s + 1).min(self.length - 1)
        } else {
            s.saturating_sub(1)
        }
    }

    fn reward(&self, s: usize, a: usize) -> f64 {
        if s + 1 == self.length && a == 1 {
            1.0
        } else {
            0.0
        }
    }
}

impl Factor for ChainFactor {
    fn num_states(&self) -> usize {
        self.length
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn start(&self) -> usize {
        0
    }

    fn reward_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<(usize, f64, f64)> {
        let r = self.reward(s, a);
        let intended = self.moved(s, a == 1);
        let slipped = self.moved(s, a != 1);
        if intended == slipped || self.slip == 0.0 {
            vec![(intended, 1.0, r)]
        } else {
            vec![(intended, 1.0 - self.slip, r), (slipped, self.slip, r)]
        }
    }

    fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> (usize, f64) {
        let slip = rng.gen::<f64>() < self.slip;
        (self.moved(s, (a == 1) != slip), self.reward(s, a))
    }
}

/// Independent factors acting in parallel. Each factor's reward is mapped
/// affinely onto `[0, 1]` and the global reward is their average, so it stays
/// in `[0, 1]` and the value function is the sum of the factor values.
#[derive(Debug)]
pub struct ProductMdp {
    factors: Vec<Box<dyn Factor>>,
    counts: Vec<usize>,
}

impl ProductMdp {
    pub fn new(factors: Vec<Box<dyn Factor>>) -> Self {
        let counts = factors.iter().map(|f| f.num_actions()).collect();
        Self { factors, counts }
    }

    pub fn factors(&self) -> &[Box<dyn Factor>] {
        &self.factors
    }

    /// Share of the global reward contributed by raw factor reward `raw`.
    pub fn scaled_reward(&self, factor: usize, raw: f64) -> f64 {
        let (lo, hi) = self.factors[factor].reward_range();
        (raw - lo) / (hi - lo) / self.factors.len() as f64
    }
}

impl Mdp for ProductMdp {
    fn action_counts(&self) -> &[usize] {
        &self.counts
    }

    fn initial_state(&self) -> State {
        self.factors.iter().map(|f| f.start()).collect()
    }

    fn sample(&self, s: &[usize], a: &[usize], rng: &mut dyn RngCore) -> (State, f64) {
        let mut next = Vec::with_capacity(s.len());
        let r = self.sample_into(s, a, rng, &mut next);
        (next, r)
    }

    fn sample_into(&self, s: &[usize], a: &[usize], rng: &mut dyn RngCore, next: &mut State) -> f64 {
        next.clear();
        let mut reward = 0.0;
        for (i, f) in self.factors.iter().enumerate() {
            let (n, raw) = f.sample(s[i], a[i], rng);
            next.push(n);
            reward += self.scaled_reward(i, raw);
        }
        reward
    }
}

impl TabularMdp for ProductMdp {
    fn num_states(&self) -> usize {
        self.factors.iter().map(|f| f.num_states()).product()
    }

    fn state_index(&self, s: &[usize]) -> usize {
        self.factors.iter().zip(s).fold(0, |acc, (f, &x)| acc * f.num_states() + x)
    }

    fn state_at(&self, mut index: usize) -> State {
        let mut s = vec![0; self.factors.len()];
        for (i, f) in self.factors.iter().enumerate().rev() {
            s[i] = index % f.num_states();
            index /= f.num_states();
        }
        s
    }

    fn outcomes(&self, s: &[usize], a: &[usize]) -> Vec<(State, f64, f64)> {
        let mut acc: Vec<(State, f64, f64)> = vec![(Vec::with_capacity(s.len()), 1.0, 0.0)];
        for (i, f) in self.factors.iter().enumerate() {
            let local = f.outcomes(s[i], a[i]);
            let mut grown = Vec::with_capacity(acc.len() * local.len());
            for (prefix, p, r) in &acc {
                for &(n, q, raw) in &local {
                    let mut state = prefix.clone();
                    state.push(n);
                    grown.push((state, p * q, r + self.scaled_reward(i, raw)));
                }
            }
            acc = grown;
        }
        acc
    }

    fn as_product(&self) -> Option<&ProductMdp> {
        Some(self)
    }
}
