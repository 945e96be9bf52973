use std::collections::{BTreeMap, HashMap};

use super::Fsc;
use crate::error::{Error, Result};
use crate::model::Pomdp;
use crate::network::{Code, Memory, RecurrentPolicy};
use crate::seed;

/// One step of a quantized rollout: in state `state` with memory `code`,
/// observation `obs` was received, `action` was taken and memory moved to `next_code`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub code: Code,
    pub obs: usize,
    pub action: usize,
    pub next_code: Code,
    pub state: usize,
}

pub type Trajectory = Vec<Step>;

/// Runs trajectory `index`, calling `visit(state, obs, action, memory, next_memory)`
/// per step. Stops at absorbing states or after `max_steps` steps.
fn rollout(
    p: &Pomdp,
    net: &RecurrentPolicy,
    max_steps: usize,
    master_seed: u64,
    index: usize,
    mut visit: impl FnMut(usize, usize, usize, &Memory, &Memory),
) -> Result<Memory> {
    let mut rng = seed::rng(master_seed, "rollout", index as u64);
    let mut s = seed::sample(p.init(), &mut rng);
    let mut m = net.initial_memory();
    for _ in 0..max_steps {
        if p.is_absorbing(s) {
            break;
        }
        let z = p.observation(s);
        let probs = net.readout(&m, z)?;
        let dist: Vec<(usize, f64)> = probs.iter().copied().enumerate().filter(|e| e.1 > 0.0).collect();
        let a = seed::sample(&dist, &mut rng);
        let choice = p.choice(s, a).ok_or_else(|| {
            Error::Network(format!(
                "policy chose action `{}` not enabled in state `{}`",
                p.action_names()[a],
                p.state_names()[s]
            ))
        })?;
        let next = net.commit(&m, z, a)?;
        visit(s, z, a, &m, &next);
        s = seed::sample(&choice.successors, &mut rng);
        m = next;
    }
    Ok(m)
}

fn check_dims(p: &Pomdp, net: &RecurrentPolicy) -> Result<()> {
    if net.num_observations() != p.num_observations() || net.num_actions() != p.num_actions() {
        return Err(Error::Network(format!(
            "network is sized for {} observations and {} actions, model has {} and {}",
            net.num_observations(),
            net.num_actions(),
            p.num_observations(),
            p.num_actions()
        )));
    }
    Ok(())
}

/// Samples `n_rollouts` trajectories of the quantized network on `p`.
/// Trajectory `i` uses a random stream derived from `(master_seed, i)`.
pub fn simulate_rollouts(
    p: &Pomdp,
    net: &RecurrentPolicy,
    n_rollouts: usize,
    max_steps: usize,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    check_dims(p, net)?;
    if net.bottleneck().is_none() {
        return Err(Error::Network("rollouts over codes need a quantized bottleneck".into()));
    }
    seed::map_indexed(n_rollouts, |i| {
        let mut traj = Vec::new();
        rollout(p, net, max_steps, master_seed, i, |s, z, a, m, next| {
            traj.push(Step {
                code: m.code.clone().expect("quantized memory"),
                obs: z,
                action: a,
                next_code: next.code.clone().expect("quantized memory"),
                state: s,
            })
        })?;
        Ok(traj)
    })
    .into_iter()
    .collect()
}

/// Memory vectors visited by `n_rollouts` trajectories of `net`, including
/// the initial one; the training set for a bottleneck.
pub fn collect_hidden_states(
    p: &Pomdp,
    net: &RecurrentPolicy,
    n_rollouts: usize,
    max_steps: usize,
    master_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_dims(p, net)?;
    let per: Vec<Result<Vec<Vec<f64>>>> = seed::map_indexed(n_rollouts, |i| {
        let mut out = Vec::new();
        let last = rollout(p, net, max_steps, master_seed, i, |_, _, _, m, _| out.push(m.hidden.clone()))?;
        out.push(last.hidden);
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per {
        all.extend(r?);
    }
    Ok(all)
}

/// Observed memory transitions indexed by node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransactionTable {
    /// Node index to code; node 0 is the initial code.
    pub codes: Vec<Code>,
    pub index: HashMap<Code, usize>,
    /// `(node, observation, action)` to successor-node visit counts.
    pub counts: BTreeMap<(usize, usize, usize), BTreeMap<usize, usize>>,
}

impl TransactionTable {
    fn node(&mut self, code: &Code) -> usize {
        if let Some(&n) = self.index.get(code) {
            return n;
        }
        self.codes.push(code.clone());
        self.index.insert(code.clone(), self.codes.len() - 1);
        self.codes.len() - 1
    }

    /// Numbers codes in order of first appearance, starting with `init`.
    pub fn from_trajectories(trajectories: &[Trajectory], init: &Code) -> Self {
        let mut t = TransactionTable::default();
        t.node(init);
        for step in trajectories.iter().flatten() {
            let n = t.node(&step.code);
            let m = t.node(&step.next_code);
            *t.counts.entry((n, step.obs, step.action)).or_default().entry(m).or_default() += 1;
        }
        t
    }

    /// Most frequent successor, lowest node index on ties.
    pub fn successor(&self, node: usize, obs: usize, action: usize) -> Option<usize> {
        let counts = self.counts.get(&(node, obs, action))?;
        let best = counts.values().copied().max()?;
        counts.iter().find(|e| *e.1 == best).map(|e| *e.0)
    }

    pub fn num_nodes(&self) -> usize {
        self.codes.len()
    }
}

/// Builds a controller from rollouts of a quantized network: one node per
/// observed code, majority-vote memory updates, and action distributions
/// read from the network for every node and observation.
pub fn build_fsc(trajectories: &[Trajectory], net: &RecurrentPolicy, p: &Pomdp) -> Result<Fsc> {
    if trajectories.is_empty() {
        return Err(Error::Fsc("no trajectories to extract from".into()));
    }
    check_dims(p, net)?;
    let init = net
        .initial_memory()
        .code
        .ok_or_else(|| Error::Network("extraction needs a quantized bottleneck".into()))?;
    let table = TransactionTable::from_trajectories(trajectories, &init);
    let obs_names = p.obs_names();
    let act_names = p.action_names();
    let mut alpha = BTreeMap::new();
    for (n, code) in table.codes.iter().enumerate() {
        for (z, zname) in obs_names.iter().enumerate() {
            let probs = net.action_distribution_for_code(code, z)?;
            let dist: Vec<(String, f64)> = probs
                .iter()
                .enumerate()
                .filter(|e| *e.1 > 0.0)
                .map(|(a, &pr)| (act_names[a].clone(), pr))
                .collect();
            alpha.insert((n, zname.clone()), dist);
        }
    }
    let mut delta = BTreeMap::new();
    let mut conflicts = 0;
    for (&(n, z, a), counts) in &table.counts {
        if counts.len() > 1 {
            conflicts += 1;
        }
        let m = table.successor(n, z, a).expect("key has counts");
        delta.insert((n, obs_names[z].clone(), act_names[a].clone()), m);
    }
    if conflicts > 0 {
        log::warn!("{conflicts} memory updates had conflicting successors; majority kept");
    }
    let fsc = Fsc::new(table.num_nodes(), 0, alpha, delta)?;
    let missing = uncovered_transitions(&fsc, p)?;
    if missing > 0 {
        log::warn!("{missing} reachable memory updates were never observed and default to self-loops");
    }
    Ok(fsc)
}

/// Count of `(node, observation, action)` keys with positive action
/// probability for an emitted observation but no memory update.
fn uncovered_transitions(fsc: &Fsc, p: &Pomdp) -> Result<usize> {
    let bound = fsc.bind(p)?;
    let emitted: Vec<bool> = (0..p.num_observations())
        .map(|z| p.observations().contains(&z))
        .collect();
    let mut missing = 0;
    for n in 0..bound.nodes {
        for z in (0..p.num_observations()).filter(|&z| emitted[z]) {
            for &(a, _) in bound.alpha(n, z).unwrap_or_default() {
                if !bound.has_transition(n, z, a) && !(0..p.num_states()).all(|s| p.observation(s) != z || p.is_absorbing(s)) {
                    missing += 1;
                }
            }
        }
    }
    Ok(missing)
}
