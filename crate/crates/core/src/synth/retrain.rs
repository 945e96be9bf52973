use rand::Rng;

use super::CritSet;
use crate::check::{mdp_optimize, SolverConfig};
use crate::error::{Error, Result};
use crate::model::Pomdp;
use crate::network::TrainingBatch;
use crate::seed;
use crate::spec::{Direction, Spec};

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainConfig {
    /// Trajectories rolled out from each critical state.
    pub rollouts_per_state: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Weight given to every generated sequence.
    pub weight: f64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        RetrainConfig {
            rollouts_per_state: 20,
            max_steps: 50,
            seed: 0,
            weight: 2.0,
        }
    }
}

/// States where a labelled rollout ends: the specification's target and avoid states.
pub(crate) fn stop_mask(p: &Pomdp, spec: &Spec) -> Result<Vec<bool>> {
    let mut stop = p.label_mask(spec.objective.target())?;
    if let Some(avoid) = spec.objective.avoid() {
        for (s, b) in p.label_mask(avoid)?.into_iter().enumerate() {
            stop[s] |= b;
        }
    }
    Ok(stop)
}

/// A demonstration: `(observation, action)` steps and which of them carry
/// the policy's label (the rest are exploratory actions).
pub type Demo = (Vec<(usize, usize)>, Vec<bool>);

/// Demonstrations of a memoryless state policy. Trajectory `i` starts from a
/// state drawn from `start` with the stream `(seed, phase, i)` and ends at
/// `stop` or absorbing states, or after `max_steps` actions. With
/// probability `explore` a step takes a uniformly random action allowed for
/// its observation instead; such steps are unlabelled.
#[allow(clippy::too_many_arguments)]
pub fn policy_rollouts(
    p: &Pomdp,
    policy: &[usize],
    stop: &[bool],
    start: &[(usize, f64)],
    n: usize,
    max_steps: usize,
    explore: f64,
    seed: u64,
    phase: &str,
) -> Vec<Demo> {
    let allowed: Vec<Vec<usize>> = (0..p.num_observations())
        .map(|z| {
            let mask = p.enabled_for_observation(z);
            (0..mask.len()).filter(|&a| mask[a]).collect()
        })
        .collect();
    seed::map_indexed(n, |i| {
        let mut rng = seed::rng(seed, phase, i as u64);
        let mut s = seed::sample(start, &mut rng);
        let mut steps = Vec::new();
        let mut labelled = Vec::new();
        while steps.len() < max_steps && !stop[s] && !p.is_absorbing(s) {
            let z = p.observation(s);
            let mut a = policy[s];
            let mut label = true;
            if explore > 0.0 && rng.gen::<f64>() < explore {
                a = allowed[z][rng.gen_range(0..allowed[z].len())];
                label = false;
            }
            steps.push((z, a));
            labelled.push(label);
            let choice = p.choice(s, a).expect("policy picks enabled actions");
            s = seed::sample(&choice.successors, &mut rng);
        }
        (steps, labelled)
    })
}

/// Labelled sequences from the underlying MDP's optimal policy, started at
/// every critical state. States from which the specification cannot be met at all
/// (zero maximal probability, infinite minimal cost) are skipped.
pub fn generate_retraining_data(p: &Pomdp, crit: &CritSet, spec: &Spec, cfg: &RetrainConfig) -> Result<TrainingBatch> {
    if crit.is_empty() {
        return Err(Error::Invalid("retraining needs a nonempty counterexample".into()));
    }
    let sol = mdp_optimize(p.mdp(), spec, &SolverConfig::default())?;
    let stop = stop_mask(p, spec)?;
    let mut batch = TrainingBatch::new();
    for s in crit.states() {
        let v = sol.values[s];
        let infeasible = !v.is_finite() || (!spec.objective.is_reward() && spec.direction() == Direction::Max && v == 0.0);
        if infeasible {
            log::warn!("state {} cannot meet the specification; skipped", p.state_names()[s]);
            continue;
        }
        let phase = format!("retrain-{s}");
        for (steps, _) in policy_rollouts(p, &sol.policy, &stop, &[(s, 1.0)], cfg.rollouts_per_state, cfg.max_steps, 0.0, cfg.seed, &phase) {
            if !steps.is_empty() {
                batch.push(steps, cfg.weight);
            }
        }
    }
    batch.merge_duplicates();
    Ok(batch)
}
