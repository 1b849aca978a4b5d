use super::{joint_action_count, joint_actions, ActionVector, ProductMdp, TabularMdp};
use crate::{Error, Result};

/// Sweeps stop once the sup-norm change drops below this.
pub const BELLMAN_TOLERANCE: f64 = 1e-12;

/// Largest `states x joint actions` table the joint solvers accept.
const MAX_TABLE: u128 = 4_000_000;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub policy: Vec<ActionVector>,
    pub sweeps: usize,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("discount must lie in [0, 1), got {gamma}")))
    }
}

struct Backup {
    reward: f64,
    next: Vec<(usize, f64)>,
}

fn iterate(values: &mut Vec<f64>, gamma: f64, mut sweep: impl FnMut(&[f64], &mut [f64])) -> usize {
    let mut next = vec![0.0; values.len()];
    for k in 1..=MAX_SWEEPS {
        sweep(values, &mut next);
        let delta = values.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(values, &mut next);
        if delta < BELLMAN_TOLERANCE || gamma == 0.0 {
            return k;
        }
    }
    MAX_SWEEPS
}

/// Value iteration on the joint MDP, with greedy ties going to the
/// lexicographically smallest action.
pub fn tabular_value_iteration(mdp: &dyn TabularMdp, gamma: f64) -> Result<ValueTable> {
    check_gamma(gamma)?;
    let n = mdp.num_states();
    let counts = mdp.action_counts();
    let size = n as u128 * joint_action_count(counts);
    if size > MAX_TABLE {
        return Err(Error::TooLarge { what: "state-action table", size });
    }
    let actions: Vec<ActionVector> = joint_actions(counts).collect();
    let table: Vec<Vec<Backup>> = (0..n)
        .map(|i| {
            let s = mdp.state_at(i);
            actions
                .iter()
                .map(|a| {
                    let out = mdp.outcomes(&s, a);
                    Backup {
                        reward: out.iter().map(|o| o.1 * o.2).sum(),
                        next: out.iter().map(|o| (mdp.state_index(&o.0), o.1)).collect(),
                    }
                })
                .collect()
        })
        .collect();
    let q = |v: &[f64], b: &Backup| b.reward + gamma * b.next.iter().map(|&(j, p)| p * v[j]).sum::<f64>();
    let mut values = vec![0.0; n];
    let sweeps = iterate(&mut values, gamma, |v, out| {
        for (i, row) in table.iter().enumerate() {
            out[i] = row.iter().map(|b| q(v, b)).fold(f64::NEG_INFINITY, f64::max);
        }
    });
    let policy = table
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, b) in row.iter().enumerate() {
                if q(&values, b) > q(&values, &row[best]) + BELLMAN_TOLERANCE {
                    best = k;
                }
            }
            actions[best].clone()
        })
        .collect();
    Ok(ValueTable { values, policy, sweeps })
}

/// Exact evaluation of a stochastic joint policy given as a list of
/// `(action, probability)` pairs per state.
pub fn evaluate_joint_policy(
    mdp: &dyn TabularMdp,
    gamma: f64,
    policy: &mut dyn FnMut(&[usize]) -> Vec<(ActionVector, f64)>,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let n = mdp.num_states();
    let size = n as u128 * joint_action_count(mdp.action_counts());
    if size > MAX_TABLE {
        return Err(Error::TooLarge { what: "state-action table", size });
    }
    let table: Vec<Backup> = (0..n)
        .map(|i| {
            let s = mdp.state_at(i);
            let mut b = Backup { reward: 0.0, next: Vec::new() };
            for (a, pa) in policy(&s) {
                if pa == 0.0 {
                    continue;
                }
                for (next, p, r) in mdp.outcomes(&s, &a) {
                    b.reward += pa * p * r;
                    b.next.push((mdp.state_index(&next), pa * p));
                }
            }
            b
        })
        .collect();
    let mut values = vec![0.0; n];
    iterate(&mut values, gamma, |v, out| {
        for (i, b) in table.iter().enumerate() {
            out[i] = b.reward + gamma * b.next.iter().map(|&(j, p)| p * v[j]).sum::<f64>();
        }
    });
    Ok(values)
}

fn factor_backups(product: &ProductMdp, factor: usize) -> Vec<Vec<Backup>> {
    let f = &product.factors()[factor];
    (0..f.num_states())
        .map(|s| {
            (0..f.num_actions())
                .map(|a| {
                    let out = f.outcomes(s, a);
                    Backup {
                        reward: out.iter().map(|o| o.1 * product.scaled_reward(factor, o.2)).sum(),
                        next: out.iter().map(|o| (o.0, o.1)).collect(),
                    }
                })
                .collect()
        })
        .collect()
}

/// Optimal values of one factor under its share of the global reward. The
/// joint optimal value of a product is the sum of these.
pub fn factor_value_iteration(product: &ProductMdp, factor: usize, gamma: f64) -> Result<ValueTable> {
    check_gamma(gamma)?;
    let table = factor_backups(product, factor);
    let q = |v: &[f64], b: &Backup| b.reward + gamma * b.next.iter().map(|&(j, p)| p * v[j]).sum::<f64>();
    let mut values = vec![0.0; table.len()];
    let sweeps = iterate(&mut values, gamma, |v, out| {
        for (i, row) in table.iter().enumerate() {
            out[i] = row.iter().map(|b| q(v, b)).fold(f64::NEG_INFINITY, f64::max);
        }
    });
    let policy = table
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, b) in row.iter().enumerate() {
                if q(&values, b) > q(&values, &row[best]) + BELLMAN_TOLERANCE {
                    best = k;
                }
            }
            vec![best]
        })
        .collect();
    Ok(ValueTable { values, policy, sweeps })
}

/// Values of one factor when its agent acts with `dist(s)` (a distribution
/// over the factor's actions) depending only on its own state.
pub fn factor_policy_evaluation(
    product: &ProductMdp,
    factor: usize,
    gamma: f64,
    dist: &mut dyn FnMut(usize) -> Vec<f64>,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let table = factor_backups(product, factor);
    let mixed: Vec<Backup> = table
        .iter()
        .enumerate()
        .map(|(s, row)| {
            let probs = dist(s);
            let mut b = Backup { reward: 0.0, next: Vec::new() };
            for (a, pa) in probs.iter().enumerate() {
                b.reward += pa * row[a].reward;
                b.next.extend(row[a].next.iter().map(|&(j, p)| (j, p * pa)));
            }
            b
        })
        .collect();
    let mut values = vec![0.0; mixed.len()];
    iterate(&mut values, gamma, |v, out| {
        for (i, b) in mixed.iter().enumerate() {
            out[i] = b.reward + gamma * b.next.iter().map(|&(j, p)| p * v[j]).sum::<f64>();
        }
    });
    Ok(values)
}

impl ProductMdp {
    /// `V*(s)` as the sum of factor optimal values.
    pub fn optimal_value(&self, s: &[usize], gamma: f64) -> Result<f64> {
        let mut total = 0.0;
        for (i, &x) in s.iter().enumerate() {
            total += factor_value_iteration(self, i, gamma)?.values[x];
        }
        Ok(total)
    }
}
