use log::warn;

use super::graph::{prob0, prob1};
use super::linear::solve_dense;
use super::{ensure_labels, CheckResult, SolverConfig, Values};
use crate::error::{Error, Result};
use crate::model::Dtmc;
use crate::spec::{Bound, Direction, Objective, Spec};

/// Solves `x[s] = base[s] + Σ_t P(s,t)·x[t]` for the `unknown` states, with
/// every other entry of `x` held at its given value.
fn solve_unknowns(
    d: &Dtmc,
    mut x: Vec<f64>,
    unknown: &[bool],
    base: &[f64],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&[f64]),
) -> Result<Values> {
    let states: Vec<usize> = (0..d.num_states()).filter(|&s| unknown[s]).collect();
    if states.is_empty() {
        return Ok(Values {
            values: x,
            iterations: 0,
            residual: 0.0,
        });
    }
    if cfg.use_exact(states.len()) {
        let m = states.len();
        let mut pos = vec![usize::MAX; d.num_states()];
        for (k, &s) in states.iter().enumerate() {
            pos[s] = k;
        }
        let mut a = vec![0.0; m * m];
        let mut b = vec![0.0; m];
        for (k, &s) in states.iter().enumerate() {
            a[k * m + k] += 1.0;
            b[k] = base[s];
            for &(t, p) in d.row(s) {
                if unknown[t] {
                    a[k * m + pos[t]] -= p;
                } else {
                    b[k] += p * x[t];
                }
            }
        }
        let sol = solve_dense(a, b).ok_or_else(|| Error::Invalid("singular equation system".into()))?;
        for (k, &s) in states.iter().enumerate() {
            x[s] = sol[k];
        }
        observer(&x);
        return Ok(Values {
            values: x,
            iterations: 0,
            residual: 0.0,
        });
    }

    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < cfg.max_sweeps {
        residual = 0.0;
        for &s in &states {
            let new = base[s] + d.row(s).iter().map(|&(t, p)| p * x[t]).sum::<f64>();
            residual = f64::max(residual, (new - x[s]).abs());
            x[s] = new;
        }
        sweeps += 1;
        observer(&x);
        if residual <= cfg.tolerance {
            break;
        }
    }
    if residual > cfg.tolerance {
        warn!("value iteration stopped after {sweeps} sweeps with residual {residual:e}");
    }
    Ok(Values {
        values: x,
        iterations: sweeps,
        residual,
    })
}

pub(crate) fn reach_values(
    d: &Dtmc,
    target: &str,
    avoid: Option<&str>,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&[f64]),
) -> Result<Values> {
    ensure_labels(d.labels(), &[target])?;
    let target = d.label_mask(target)?;
    let avoid = match avoid {
        Some(a) => {
            let mut m = d.label_mask(a)?;
            for (s, t) in target.iter().enumerate() {
                m[s] &= !t;
            }
            m
        }
        None => vec![false; d.num_states()],
    };
    let no = prob0(d, &target, &avoid);
    let yes = prob1(d, &target, &no);
    let x: Vec<f64> = yes.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    let unknown: Vec<bool> = (0..d.num_states()).map(|s| !no[s] && !yes[s]).collect();
    let base = vec![0.0; d.num_states()];
    let mut v = solve_unknowns(d, x, &unknown, &base, cfg, observer)?;
    for s in 0..d.num_states() {
        if unknown[s] {
            v.values[s] = v.values[s].clamp(0.0, 1.0);
        }
    }
    Ok(v)
}

pub(crate) fn reward_values(d: &Dtmc, target: &str, cfg: &SolverConfig) -> Result<Values> {
    ensure_labels(d.labels(), &[target])?;
    let target = d.label_mask(target)?;
    let none = vec![false; d.num_states()];
    let no = prob0(d, &target, &none);
    let sure = prob1(d, &target, &no);
    let x: Vec<f64> = (0..d.num_states())
        .map(|s| if sure[s] { 0.0 } else { f64::INFINITY })
        .collect();
    let unknown: Vec<bool> = (0..d.num_states()).map(|s| sure[s] && !target[s]).collect();
    solve_unknowns(d, x, &unknown, d.rewards(), cfg, &mut |_| {})
}

/// Probability of reaching `target` while avoiding `avoid`, from every state.
/// States in both labels count as target states.
pub fn dtmc_reach_prob(d: &Dtmc, target: &str, avoid: Option<&str>, cfg: &SolverConfig) -> Result<CheckResult> {
    dtmc_reach_prob_traced(d, target, avoid, cfg, &mut |_| {})
}

/// [`dtmc_reach_prob`], reporting the full value vector after every sweep.
pub fn dtmc_reach_prob_traced(
    d: &Dtmc,
    target: &str,
    avoid: Option<&str>,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&[f64]),
) -> Result<CheckResult> {
    let v = reach_values(d, target, avoid, cfg, observer)?;
    let objective = match avoid {
        Some(a) => Objective::Until {
            avoid: a.into(),
            target: target.into(),
        },
        None => Objective::Eventually { target: target.into() },
    };
    let spec = Spec::new(objective, Bound::Query(Direction::Max))?;
    Ok(v.into_result(d, &spec))
}

/// Expected state reward accumulated until `target` is first reached; states
/// that miss the target with positive probability get `+∞`.
pub fn dtmc_expected_reward(d: &Dtmc, target: &str, cfg: &SolverConfig) -> Result<CheckResult> {
    let v = reward_values(d, target, cfg)?;
    let spec = Spec::new(Objective::Reward { target: target.into() }, Bound::Query(Direction::Min))?;
    Ok(v.into_result(d, &spec))
}
