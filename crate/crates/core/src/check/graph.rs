//! Qualitative (graph-based) precomputation of the states whose reachability
//! probability is exactly 0 or exactly 1.

use std::collections::VecDeque;

use crate::model::{Distribution, Dtmc, Mdp};

fn predecessors(rows: &[Distribution]) -> Vec<Vec<usize>> {
    let mut pre = vec![Vec::new(); rows.len()];
    for (s, row) in rows.iter().enumerate() {
        for &(t, _) in row {
            pre[t].push(s);
        }
    }
    pre
}

/// Backward closure of `seed` along predecessor edges, expanding only into
/// states for which `may_enter` holds.
fn backward_closure(pre: &[Vec<usize>], seed: &[bool], may_enter: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = seed.to_vec();
    let mut queue: VecDeque<usize> = (0..seed.len()).filter(|&s| seed[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &pre[t] {
            if !seen[s] && may_enter(s) {
                seen[s] = true;
                queue.push_back(s);
            }
        }
    }
    seen
}

/// States that cannot reach `target` without passing through `avoid`.
pub fn prob0(d: &Dtmc, target: &[bool], avoid: &[bool]) -> Vec<bool> {
    let pre = predecessors(d.rows());
    let can = backward_closure(&pre, target, |s| !avoid[s] && !target[s]);
    can.into_iter().map(|c| !c).collect()
}

/// States that reach `target` (avoiding `avoid`) with probability one, given
/// the probability-zero set `no`.
pub fn prob1(d: &Dtmc, target: &[bool], no: &[bool]) -> Vec<bool> {
    let pre = predecessors(d.rows());
    let may_fail = backward_closure(&pre, no, |s| !target[s]);
    may_fail.into_iter().map(|f| !f).collect()
}

fn mdp_predecessors(m: &Mdp) -> Vec<Vec<usize>> {
    let mut pre = vec![Vec::new(); m.num_states()];
    for s in 0..m.num_states() {
        for c in m.choices(s) {
            for &(t, _) in &c.successors {
                pre[t].push(s);
            }
        }
    }
    for p in pre.iter_mut() {
        p.sort_unstable();
        p.dedup();
    }
    pre
}

/// Pmax > 0: some policy reaches `target` avoiding `blocked`.
pub(crate) fn exists_reach(m: &Mdp, target: &[bool], blocked: &[bool]) -> Vec<bool> {
    backward_closure(&mdp_predecessors(m), target, |s| !blocked[s] && !target[s])
}

/// Pmin > 0: every policy reaches `target` with positive probability.
pub(crate) fn forall_reach(m: &Mdp, target: &[bool], blocked: &[bool]) -> Vec<bool> {
    let mut r = target.to_vec();
    loop {
        let mut changed = false;
        for s in 0..m.num_states() {
            if r[s] || blocked[s] {
                continue;
            }
            if m.choices(s).iter().all(|c| c.successors.iter().any(|&(t, _)| r[t])) {
                r[s] = true;
                changed = true;
            }
        }
        if !changed {
            return r;
        }
    }
}

/// Pmax = 1: some policy reaches `target` almost surely while avoiding `blocked`.
pub(crate) fn prob1_exists(m: &Mdp, target: &[bool], blocked: &[bool]) -> Vec<bool> {
    let n = m.num_states();
    let mut u: Vec<bool> = (0..n).map(|s| !blocked[s] || target[s]).collect();
    loop {
        let mut r = target.to_vec();
        loop {
            let mut changed = false;
            for s in 0..n {
                if r[s] || !u[s] {
                    continue;
                }
                let ok = m.choices(s).iter().any(|c| {
                    c.successors.iter().all(|&(t, _)| u[t]) && c.successors.iter().any(|&(t, _)| r[t])
                });
                if ok {
                    r[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if r == u {
            return u;
        }
        u = r;
    }
}

/// Pmin = 1: every policy reaches `target` almost surely while avoiding `blocked`.
pub(crate) fn prob1_forall(m: &Mdp, target: &[bool], blocked: &[bool]) -> Vec<bool> {
    let zero: Vec<bool> = forall_reach(m, target, blocked).into_iter().map(|r| !r).collect();
    // One action with a successor in the failing set lets a policy fail with
    // positive probability, so the union-graph closure is exact.
    let may_fail = backward_closure(&mdp_predecessors(m), &zero, |s| !target[s]);
    may_fail.into_iter().map(|f| !f).collect()
}
