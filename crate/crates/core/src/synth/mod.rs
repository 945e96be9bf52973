//! Product construction, counterexamples, entropy and the refinement loop.

mod retrain;
mod run;

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::check::CheckResult;
use crate::error::{Error, Result};
use crate::fsc::Fsc;
use crate::model::{Dtmc, Labels, Pomdp};
use crate::spec::{Bound, Spec};

pub use retrain::{generate_retraining_data, policy_rollouts, Demo, RetrainConfig};
pub use run::{initial_dataset, run_loop, IterationRecord, LoopAction, LoopConfig, LoopReport};

/// Chain over `(node, state)` pairs induced by running a controller on a POMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub dtmc: Dtmc,
    /// Chain state index to `(node, state)`.
    pub pairs: Vec<(usize, usize)>,
}

impl Product {
    pub fn index_of(&self, node: usize, state: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (node, state))
    }
}

/// Builds the induced chain. Pairs are explored breadth-first from the
/// initial ones along every action listed in `alpha` (including
/// zero-probability entries), so the chain's shape does not depend on the
/// probabilities. State names are `(node,state)`.
pub fn induce_dtmc(p: &Pomdp, fsc: &Fsc) -> Result<Product> {
    let bound = fsc.bind(p)?;
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut queue = VecDeque::new();
    let mut visit = |pair: (usize, usize), pairs: &mut Vec<(usize, usize)>, queue: &mut VecDeque<usize>| -> usize {
        *index.entry(pair).or_insert_with(|| {
            pairs.push(pair);
            queue.push_back(pairs.len() - 1);
            pairs.len() - 1
        })
    };
    let init: Vec<(usize, f64)> = p
        .init()
        .iter()
        .map(|&(s, pr)| (visit((bound.init, s), &mut pairs, &mut queue), pr))
        .collect();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rewards = Vec::new();
    while let Some(i) = queue.pop_front() {
        let (n, s) = pairs[i];
        let z = p.observation(s);
        let dist = bound.alpha(n, z).ok_or_else(|| {
            Error::Fsc(format!(
                "no action distribution for node {n} and observation `{}`",
                p.obs_names()[z]
            ))
        })?;
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        let mut reward = 0.0;
        for &(a, pa) in dist {
            let choice = p.choice(s, a).ok_or_else(|| {
                Error::Fsc(format!("action `{}` is not enabled in state `{}`", p.action_names()[a], p.state_names()[s]))
            })?;
            let m = bound.next_node(n, z, a);
            reward += pa * choice.reward;
            for &(t, pt) in &choice.successors {
                let j = visit((m, t), &mut pairs, &mut queue);
                *row.entry(j).or_default() += pa * pt;
            }
        }
        if rows.len() <= i {
            rows.resize(i + 1, Vec::new());
            rewards.resize(i + 1, 0.0);
        }
        // Summing products can overshoot 1 by an ulp.
        rows[i] = row.into_iter().map(|(j, pr)| (j, pr.min(1.0))).collect();
        rewards[i] = reward;
    }
    let mut labels = Labels::new();
    for (name, set) in p.labels() {
        let lifted = pairs
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| set.contains(s))
            .map(|(i, _)| i)
            .collect();
        labels.insert(name.clone(), lifted);
    }
    let names = pairs
        .iter()
        .map(|&(n, s)| format!("({n},{})", p.state_names()[s]))
        .collect();
    let dtmc = Dtmc::new(names, rows, rewards, init, labels)?;
    Ok(Product { dtmc, pairs })
}

/// Chain states reachable with positive probability from the initial distribution.
pub fn reachable(d: &Dtmc) -> Vec<bool> {
    let mut seen = vec![false; d.num_states()];
    let mut stack: Vec<usize> = d.init().iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &(t, pr) in d.row(s) {
            if pr > 0.0 && !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CritPair {
    pub node: usize,
    pub state: usize,
    pub value: f64,
}

/// Reachable `(node, state)` pairs whose value violates the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CritSet {
    pub pairs: Vec<CritPair>,
    pub spec: Spec,
}

impl CritSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Distinct model states among the pairs, ascending.
    pub fn states(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.pairs.iter().map(|c| c.state).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// A pair is critical when its own value fails the comparison against the
/// bound (`+inf` cost fails every upper bound).
pub fn critical_pairs(product: &Product, result: &CheckResult, spec: &Spec) -> Result<CritSet> {
    let Bound::Threshold(cmp, lambda) = spec.bound else {
        return Err(Error::Spec("counterexamples need a bounded specification".into()));
    };
    if result.values.len() != product.pairs.len() {
        return Err(Error::Invalid("check result does not belong to this product".into()));
    }
    let live = reachable(&product.dtmc);
    let pairs = product
        .pairs
        .iter()
        .enumerate()
        .filter(|&(i, _)| live[i] && !cmp.holds(result.values[i], lambda))
        .map(|(i, &(node, state))| CritPair {
            node,
            state,
            value: result.values[i],
        })
        .collect();
    Ok(CritSet {
        pairs,
        spec: spec.clone(),
    })
}

/// Entropy of `dist` normalised by `ln k`, where `k` is the number of
/// available actions. Point masses give exactly 0 and the uniform
/// distribution over all `k` actions exactly 1.
pub fn normalized_entropy(dist: &[f64], k: usize) -> f64 {
    let support: Vec<f64> = dist.iter().copied().filter(|&p| p > 0.0).collect();
    if k <= 1 || support.len() <= 1 {
        return 0.0;
    }
    if support.len() == k && support.iter().all(|&p| p == support[0]) {
        return 1.0;
    }
    let h: f64 = -support.iter().map(|&p| p * p.ln()).sum::<f64>();
    (h / (k as f64).ln()).clamp(0.0, 1.0)
}

fn pair_entropy(p: &Pomdp, fsc: &crate::fsc::BoundFsc, node: usize, state: usize) -> Result<f64> {
    let z = p.observation(state);
    let dist = fsc
        .alpha(node, z)
        .ok_or_else(|| Error::Fsc(format!("no action distribution for node {node} and observation `{}`", p.obs_names()[z])))?;
    let probs: Vec<f64> = dist.iter().map(|e| e.1).collect();
    Ok(normalized_entropy(&probs, p.num_enabled(state)))
}

/// Mean normalised entropy of `alpha(n, O(s))` over the critical pairs.
pub fn entropy_of(p: &Pomdp, fsc: &Fsc, crit: &CritSet) -> Result<f64> {
    if crit.is_empty() {
        return Err(Error::Invalid("entropy of an empty counterexample is undefined".into()));
    }
    let bound = fsc.bind(p)?;
    let mut total = 0.0;
    for c in &crit.pairs {
        total += pair_entropy(p, &bound, c.node, c.state)?;
    }
    Ok(total / crit.len() as f64)
}

/// Mean normalised entropy over every reachable pair of the product.
pub fn fsc_entropy(p: &Pomdp, fsc: &Fsc, product: &Product) -> Result<f64> {
    let bound = fsc.bind(p)?;
    let live = reachable(&product.dtmc);
    let mut total = 0.0;
    let mut count = 0;
    for (i, &(n, s)) in product.pairs.iter().enumerate() {
        if live[i] {
            total += pair_entropy(p, &bound, n, s)?;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Next step of the refinement loop after a check.
pub fn decide(sat: bool, entropy: Option<f64>, eta: f64) -> LoopAction {
    match (sat, entropy) {
        (true, _) => LoopAction::Done,
        (false, Some(h)) if h > eta => LoopAction::Retrain,
        _ => LoopAction::Increment,
    }
}
