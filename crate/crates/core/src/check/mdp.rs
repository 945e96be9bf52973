use log::warn;

use super::graph::{exists_reach, forall_reach, prob1_exists, prob1_forall};
use super::{ensure_labels, SolverConfig};
use crate::error::Result;
use crate::model::{Choice, Mdp};
use crate::spec::{Direction, Spec};

/// Optimal values and a deterministic memoryless policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    /// Chosen action index per state.
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

const OPT_TOL: f64 = 1e-8;

fn q_value(c: &Choice, x: &[f64], reward: bool) -> f64 {
    let r = if reward { c.reward } else { 0.0 };
    r + c.successors.iter().map(|&(t, p)| p * x[t]).sum::<f64>()
}

fn better(dir: Direction, a: f64, b: f64) -> bool {
    match dir {
        Direction::Max => a > b,
        Direction::Min => a < b,
    }
}

/// Best action among `allowed`, ties broken by the smallest action index.
fn best<'a>(choices: impl Iterator<Item = &'a Choice>, x: &[f64], reward: bool, dir: Direction) -> Option<(usize, f64)> {
    let mut out: Option<(usize, f64)> = None;
    for c in choices {
        let q = q_value(c, x, reward);
        if out.is_none_or(|(_, b)| better(dir, q, b)) {
            out = Some((c.action, q));
        }
    }
    out
}

/// Computes optimal values for the specification's objective on the MDP: probabilities
/// and expected rewards are maximised for lower bounds and minimised for
/// upper bounds (queries state their direction). Value iteration runs from zero after graph precomputation.
///
/// Probability-maximising policies prefer, among value-optimal actions, one
/// that moves strictly closer to the target, so self-loops that tie on value
/// are never selected. Reward minimisation assumes no zero-reward cycles.
pub fn mdp_optimize(m: &Mdp, spec: &Spec, cfg: &SolverConfig) -> Result<MdpSolution> {
    let objective = &spec.objective;
    let mut names = vec![objective.target()];
    names.extend(objective.avoid());
    ensure_labels(m.labels(), &names)?;
    let n = m.num_states();
    let target = m.label_mask(objective.target())?;
    let blocked: Vec<bool> = match objective.avoid() {
        Some(a) => m.label_mask(a)?.iter().zip(&target).map(|(&a, &t)| a && !t).collect(),
        None => vec![false; n],
    };
    let dir = spec.direction();
    let reward = objective.is_reward();

    // Fixed values and the set of actions value iteration may use per state.
    let (mut x, unknown, allowed): (Vec<f64>, Vec<bool>, Vec<Vec<usize>>) = if !reward {
        let (zero, one) = match dir {
            Direction::Max => (
                exists_reach(m, &target, &blocked).into_iter().map(|r| !r).collect::<Vec<_>>(),
                prob1_exists(m, &target, &blocked),
            ),
            Direction::Min => (
                forall_reach(m, &target, &blocked).into_iter().map(|r| !r).collect(),
                prob1_forall(m, &target, &blocked),
            ),
        };
        let x = one.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
        let unknown = (0..n).map(|s| !zero[s] && !one[s]).collect();
        let allowed = (0..n).map(|s| m.choices(s).iter().map(|c| c.action).collect()).collect();
        (x, unknown, allowed)
    } else {
        let finite = match dir {
            Direction::Min => prob1_exists(m, &target, &blocked),
            Direction::Max => prob1_forall(m, &target, &blocked),
        };
        let x = (0..n)
            .map(|s| if finite[s] { 0.0 } else { f64::INFINITY })
            .collect();
        let unknown = (0..n).map(|s| finite[s] && !target[s]).collect();
        let allowed = (0..n)
            .map(|s| {
                m.choices(s)
                    .iter()
                    .filter(|c| c.successors.iter().all(|&(t, _)| finite[t]))
                    .map(|c| c.action)
                    .collect()
            })
            .collect();
        (x, unknown, allowed)
    };

    let states: Vec<usize> = (0..n).filter(|&s| unknown[s]).collect();
    let allowed_choices = |s: usize| {
        let acts = &allowed[s];
        m.choices(s).iter().filter(move |c| acts.contains(&c.action))
    };
    let mut sweeps = 0;
    let mut residual = 0.0;
    if !states.is_empty() {
        residual = f64::INFINITY;
        while sweeps < cfg.max_sweeps && residual > cfg.tolerance {
            residual = 0.0;
            for &s in &states {
                let (_, q) = best(allowed_choices(s), &x, reward, dir).expect("unknown state has an allowed action");
                residual = f64::max(residual, (q - x[s]).abs());
                x[s] = q;
            }
            sweeps += 1;
        }
        if residual > cfg.tolerance {
            warn!("MDP value iteration stopped after {sweeps} sweeps with residual {residual:e}");
        }
    }

    let mut policy: Vec<usize> = (0..n).map(|s| m.choices(s)[0].action).collect();
    for s in 0..n {
        if x[s].is_finite() && !target[s] {
            if let Some((a, _)) = best(allowed_choices(s), &x, reward, dir) {
                policy[s] = a;
            }
        }
    }
    if !reward && dir == Direction::Max {
        progress_policy(m, &x, &target, &mut policy);
    }
    if reward && dir == Direction::Max {
        // Infinite states: follow a policy that misses the target with positive probability.
        let pmin = Spec::new(
            crate::spec::Objective::Eventually {
                target: objective.target().to_string(),
            },
            crate::spec::Bound::Query(Direction::Min),
        )?;
        let escape = mdp_optimize(m, &pmin, cfg)?;
        for s in 0..n {
            if x[s].is_infinite() {
                policy[s] = escape.policy[s];
            }
        }
    }
    Ok(MdpSolution {
        values: x,
        policy,
        iterations: sweeps,
        residual,
    })
}

/// Among value-optimal actions, picks one with a successor strictly closer
/// (in optimal-action steps) to the target.
fn progress_policy(m: &Mdp, x: &[f64], target: &[bool], policy: &mut [usize]) {
    let n = m.num_states();
    let optimal = |s: usize, c: &Choice| (q_value(c, x, false) - x[s]).abs() <= OPT_TOL * x[s].abs().max(1.0);
    let mut placed = target.to_vec();
    loop {
        let mut layer = Vec::new();
        for s in (0..n).filter(|&s| !placed[s] && x[s] > 0.0) {
            let step = m
                .choices(s)
                .iter()
                .find(|c| optimal(s, c) && c.successors.iter().any(|&(t, _)| placed[t]));
            if let Some(c) = step {
                layer.push((s, c.action));
            }
        }
        if layer.is_empty() {
            break;
        }
        for (s, a) in layer {
            placed[s] = true;
            policy[s] = a;
        }
    }
}
