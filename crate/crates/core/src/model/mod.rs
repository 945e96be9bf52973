//! Explicit-state models: MDPs, POMDPs and discrete-time Markov chains.
//!
//! All constructors validate and canonicalise their input: successor lists are
//! sorted by state index with zero-probability entries removed, choices are
//! sorted by action index, and every distribution sums to one within
//! [`PROB_TOL`].

mod bench;
pub(crate) mod text;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

pub use bench::{gen_grid, gen_maze, gen_navigation, GridLayout};
pub use text::{parse_dtmc, parse_pomdp, serialize_dtmc, serialize_pomdp};

/// Tolerance on distribution sums.
pub const PROB_TOL: f64 = 1e-9;

/// Sparse distribution: `(index, probability)` sorted by index.
pub type Distribution = Vec<(usize, f64)>;

pub type Labels = BTreeMap<String, BTreeSet<usize>>;

/// One enabled action of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: usize,
    pub successors: Distribution,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    choices: Vec<Vec<Choice>>,
    init: Distribution,
    labels: Labels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    mdp: Mdp,
    obs_names: Vec<String>,
    obs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dtmc {
    state_names: Vec<String>,
    rows: Vec<Distribution>,
    rewards: Vec<f64>,
    init: Distribution,
    labels: Labels,
}

pub(crate) fn canonical_distribution(
    mut entries: Vec<(usize, f64)>,
    bound: usize,
    what: &dyn Fn() -> String,
) -> Result<Distribution> {
    entries.sort_by_key(|&(i, _)| i);
    let mut sum = 0.0;
    for w in entries.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Model(format!("{}: duplicate entry for index {}", what(), w[0].0)));
        }
    }
    for &(i, p) in &entries {
        if i >= bound {
            return Err(Error::Model(format!("{}: index {i} out of range", what())));
        }
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::Model(format!("{}: probability {p} outside [0,1]", what())));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Model(format!("{}: probabilities sum to {sum}, not 1", what())));
    }
    entries.retain(|&(_, p)| p > 0.0);
    Ok(entries)
}

fn check_labels(labels: &Labels, n: usize) -> Result<()> {
    for (name, set) in labels {
        if let Some(&s) = set.iter().find(|&&s| s >= n) {
            return Err(Error::Model(format!("label {name} references state {s} out of range")));
        }
    }
    Ok(())
}

fn default_state_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

impl Mdp {
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        choices: Vec<Vec<Choice>>,
        init: Vec<(usize, f64)>,
        labels: Labels,
    ) -> Result<Self> {
        let n = state_names.len();
        if n == 0 {
            return Err(Error::Model("model has no states".into()));
        }
        if choices.len() != n {
            return Err(Error::Model(format!("expected choices for {n} states, got {}", choices.len())));
        }
        let mut canonical = Vec::with_capacity(n);
        for (s, mut cs) in choices.into_iter().enumerate() {
            if cs.is_empty() {
                return Err(Error::Model(format!("state {} has no enabled action", state_names[s])));
            }
            cs.sort_by_key(|c| c.action);
            if let Some(w) = cs.windows(2).find(|w| w[0].action == w[1].action) {
                return Err(Error::Model(format!(
                    "state {} lists action {} twice",
                    state_names[s], w[0].action
                )));
            }
            for c in cs.iter_mut() {
                if c.action >= action_names.len() {
                    return Err(Error::Model(format!("action index {} out of range", c.action)));
                }
                if !c.reward.is_finite() {
                    return Err(Error::Model(format!("state {} has a non-finite reward", state_names[s])));
                }
                let succ = std::mem::take(&mut c.successors);
                c.successors = canonical_distribution(succ, n, &|| {
                    format!("state {} action {}", state_names[s], action_names[c.action])
                })?;
            }
            canonical.push(cs);
        }
        let init = canonical_distribution(init, n, &|| "initial distribution".to_string())?;
        check_labels(&labels, n)?;
        Ok(Mdp {
            state_names,
            action_names,
            choices: canonical,
            init,
            labels,
        })
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn choices(&self, s: usize) -> &[Choice] {
        &self.choices[s]
    }

    pub fn choice(&self, s: usize, action: usize) -> Option<&Choice> {
        self.choices[s]
            .binary_search_by_key(&action, |c| c.action)
            .ok()
            .map(|i| &self.choices[s][i])
    }

    pub fn is_enabled(&self, s: usize, action: usize) -> bool {
        self.choice(s, action).is_some()
    }

    pub fn num_enabled(&self, s: usize) -> usize {
        self.choices[s].len()
    }

    pub fn init(&self) -> &[(usize, f64)] {
        &self.init
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Result<&BTreeSet<usize>> {
        self.labels
            .get(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn label_mask(&self, name: &str) -> Result<Vec<bool>> {
        let set = self.label(name)?;
        let mut mask = vec![false; self.num_states()];
        for &s in set {
            mask[s] = true;
        }
        Ok(mask)
    }

    /// A state is absorbing when every enabled action loops back with probability one.
    pub fn is_absorbing(&self, s: usize) -> bool {
        self.choices[s]
            .iter()
            .all(|c| c.successors.len() == 1 && c.successors[0].0 == s)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_names.iter().position(|n| n == name)
    }

    /// Chain induced by a deterministic memoryless policy.
    pub fn induced_by(&self, policy: &[usize]) -> Result<Dtmc> {
        let mut rows = Vec::with_capacity(self.num_states());
        let mut rewards = Vec::with_capacity(self.num_states());
        for (s, &a) in policy.iter().enumerate() {
            let c = self.choice(s, a).ok_or_else(|| {
                Error::Invalid(format!("policy picks disabled action {a} in state {s}"))
            })?;
            rows.push(c.successors.clone());
            rewards.push(c.reward);
        }
        Dtmc::new(
            self.state_names.clone(),
            rows,
            rewards,
            self.init.clone(),
            self.labels.clone(),
        )
    }
}

impl Pomdp {
    pub fn new(mdp: Mdp, obs_names: Vec<String>, obs: Vec<usize>) -> Result<Self> {
        if obs.len() != mdp.num_states() {
            return Err(Error::Model(format!(
                "observation map covers {} of {} states",
                obs.len(),
                mdp.num_states()
            )));
        }
        if let Some((s, &z)) = obs.iter().enumerate().find(|&(_, &z)| z >= obs_names.len()) {
            return Err(Error::Model(format!(
                "state {} has observation index {z} out of range",
                mdp.state_names[s]
            )));
        }
        Ok(Pomdp { mdp, obs_names, obs })
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    /// The POMDP with its observation layer dropped.
    pub fn underlying_mdp(&self) -> Mdp {
        self.mdp.clone()
    }

    pub fn observation(&self, s: usize) -> usize {
        self.obs[s]
    }

    pub fn observations(&self) -> &[usize] {
        &self.obs
    }

    pub fn obs_names(&self) -> &[String] {
        &self.obs_names
    }

    pub fn num_observations(&self) -> usize {
        self.obs_names.len()
    }

    pub fn observation_index(&self, name: &str) -> Option<usize> {
        self.obs_names.iter().position(|n| n == name)
    }

    /// Actions enabled in every state carrying observation `z`. Observations
    /// that no state emits allow every action.
    pub fn enabled_for_observation(&self, z: usize) -> Vec<bool> {
        let mut mask = vec![true; self.mdp.num_actions()];
        for s in (0..self.mdp.num_states()).filter(|&s| self.obs[s] == z) {
            for (a, m) in mask.iter_mut().enumerate() {
                *m &= self.mdp.is_enabled(s, a);
            }
        }
        mask
    }

    /// Per-observation action masks; errors if an emitted observation has no
    /// action enabled in all of its states.
    pub fn observation_action_masks(&self) -> Result<Vec<Vec<bool>>> {
        (0..self.num_observations())
            .map(|z| {
                let m = self.enabled_for_observation(z);
                if m.iter().any(|&b| b) {
                    Ok(m)
                } else {
                    Err(Error::Model(format!(
                        "no action is enabled in every state with observation {}",
                        self.obs_names[z]
                    )))
                }
            })
            .collect()
    }
}

impl std::ops::Deref for Pomdp {
    type Target = Mdp;
    fn deref(&self) -> &Mdp {
        &self.mdp
    }
}

impl Dtmc {
    pub fn new(
        state_names: Vec<String>,
        rows: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
        init: Vec<(usize, f64)>,
        labels: Labels,
    ) -> Result<Self> {
        let n = state_names.len();
        if n == 0 {
            return Err(Error::Model("chain has no states".into()));
        }
        if rows.len() != n || rewards.len() != n {
            return Err(Error::Model("row/reward count does not match state count".into()));
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(s, r)| canonical_distribution(r, n, &|| format!("state {}", state_names[s])))
            .collect::<Result<Vec<_>>>()?;
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Model("non-finite state reward".into()));
        }
        let init = canonical_distribution(init, n, &|| "initial distribution".to_string())?;
        check_labels(&labels, n)?;
        Ok(Dtmc {
            state_names,
            rows,
            rewards,
            init,
            labels,
        })
    }

    /// Builds a chain with default `s<i>` state names.
    pub fn from_rows(
        rows: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
        init: Vec<(usize, f64)>,
        labels: Labels,
    ) -> Result<Self> {
        Dtmc::new(default_state_names(rows.len()), rows, rewards, init, labels)
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Distribution] {
        &self.rows
    }

    pub fn reward(&self, s: usize) -> f64 {
        self.rewards[s]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn init(&self) -> &[(usize, f64)] {
        &self.init
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn label_mask(&self, name: &str) -> Result<Vec<bool>> {
        let set = self
            .labels
            .get(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))?;
        let mut mask = vec![false; self.num_states()];
        for &s in set {
            mask[s] = true;
        }
        Ok(mask)
    }
}
