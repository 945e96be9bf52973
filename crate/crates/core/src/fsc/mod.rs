//! Finite-state controllers: representation, text format, and extraction
//! from a quantized policy network.

mod extract;

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{syntax, Error, Result};
use crate::model::text::{expect_header, lines, real, set_once};
use crate::model::{Pomdp, PROB_TOL};
use crate::num::format_real;

pub use extract::{build_fsc, collect_hidden_states, simulate_rollouts, Step, TransactionTable, Trajectory};

/// Stochastic action choice of one `(node, observation)` pair.
pub type ActionDistribution = Vec<(String, f64)>;

/// A finite-state controller over named observations and actions.
///
/// `alpha` maps `(node, observation)` to a distribution over actions and
/// `delta` maps `(node, observation, action)` to the next node. Transitions
/// missing from `delta` stay in the current node.
#[derive(Debug, Clone, PartialEq)]
pub struct Fsc {
    nodes: usize,
    init: usize,
    alpha: BTreeMap<(usize, String), ActionDistribution>,
    delta: BTreeMap<(usize, String, String), usize>,
}

impl Fsc {
    pub fn new(
        nodes: usize,
        init: usize,
        alpha: BTreeMap<(usize, String), ActionDistribution>,
        delta: BTreeMap<(usize, String, String), usize>,
    ) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::Fsc("controller needs at least one node".into()));
        }
        if init >= nodes {
            return Err(Error::Fsc(format!("initial node {init} out of range")));
        }
        for ((n, z), dist) in &alpha {
            if *n >= nodes {
                return Err(Error::Fsc(format!("action mapping for unknown node {n}")));
            }
            check_distribution(dist).map_err(|m| Error::Fsc(format!("alpha({n}, {z}): {m}")))?;
        }
        for ((n, z, a), &m) in &delta {
            if *n >= nodes || m >= nodes {
                return Err(Error::Fsc(format!("memory update ({n}, {z}, {a}) -> {m} references an unknown node")));
            }
        }
        Ok(Fsc {
            nodes,
            init,
            alpha,
            delta,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn alpha(&self, node: usize, obs: &str) -> Option<&[(String, f64)]> {
        self.alpha.get(&(node, obs.to_string())).map(Vec::as_slice)
    }

    pub fn delta(&self, node: usize, obs: &str, action: &str) -> Option<usize> {
        self.delta.get(&(node, obs.to_string(), action.to_string())).copied()
    }

    /// Successor node, staying put where `delta` is undefined.
    pub fn next_node(&self, node: usize, obs: &str, action: &str) -> usize {
        self.delta(node, obs, action).unwrap_or(node)
    }

    pub fn alpha_entries(&self) -> &BTreeMap<(usize, String), ActionDistribution> {
        &self.alpha
    }

    pub fn delta_entries(&self) -> &BTreeMap<(usize, String, String), usize> {
        &self.delta
    }

    /// Resolves names against `p`, checking that every supported action is
    /// enabled in each state emitting the observation. Zero-probability
    /// entries for such actions are kept as part of the controller's structure.
    pub fn bind(&self, p: &Pomdp) -> Result<BoundFsc> {
        let nz = p.num_observations();
        let na = p.num_actions();
        let obs = |z: &str| {
            p.observation_index(z)
                .ok_or_else(|| Error::Fsc(format!("unknown observation `{z}`")))
        };
        let act = |a: &str| {
            p.action_index(a)
                .ok_or_else(|| Error::Fsc(format!("unknown action `{a}`")))
        };
        let mut alpha = vec![vec![None; nz]; self.nodes];
        for ((n, z), dist) in &self.alpha {
            let zi = obs(z)?;
            let allowed = p.enabled_for_observation(zi);
            let mut row = Vec::with_capacity(dist.len());
            for (a, pr) in dist {
                let ai = act(a)?;
                if *pr > 0.0 && !allowed[ai] {
                    return Err(Error::Fsc(format!(
                        "alpha({n}, {z}) chooses `{a}`, which is not enabled in every state observing `{z}`"
                    )));
                }
                if allowed[ai] {
                    row.push((ai, *pr));
                }
            }
            row.sort_by_key(|e| e.0);
            alpha[*n][zi] = Some(row);
        }
        let mut delta = vec![vec![vec![None; na]; nz]; self.nodes];
        for ((n, z, a), &m) in &self.delta {
            delta[*n][obs(z)?][act(a)?] = Some(m);
        }
        Ok(BoundFsc {
            nodes: self.nodes,
            init: self.init,
            alpha,
            delta,
        })
    }
}

fn check_distribution(dist: &[(String, f64)]) -> std::result::Result<(), String> {
    if dist.is_empty() {
        return Err("empty distribution".into());
    }
    let mut sum = 0.0;
    for (i, (a, p)) in dist.iter().enumerate() {
        if !(0.0..=1.0).contains(p) {
            return Err(format!("probability {p} of `{a}` outside [0,1]"));
        }
        if dist[..i].iter().any(|(b, _)| b == a) {
            return Err(format!("action `{a}` listed twice"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("probabilities sum to {sum}, not 1"));
    }
    Ok(())
}

/// An [`Fsc`] with observations and actions resolved to model indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFsc {
    pub nodes: usize,
    pub init: usize,
    alpha: Vec<Vec<Option<Vec<(usize, f64)>>>>,
    delta: Vec<Vec<Vec<Option<usize>>>>,
}

impl BoundFsc {
    pub fn alpha(&self, node: usize, obs: usize) -> Option<&[(usize, f64)]> {
        self.alpha[node][obs].as_deref()
    }

    pub fn next_node(&self, node: usize, obs: usize, action: usize) -> usize {
        self.delta[node][obs][action].unwrap_or(node)
    }

    pub fn has_transition(&self, node: usize, obs: usize, action: usize) -> bool {
        self.delta[node][obs][action].is_some()
    }
}

/// Parses the controller text format:
///
/// ```text
/// fsc
/// nodes <k>
/// init <node>
/// A <node> <observation> <action>:<prob> ...
/// D <node> <observation> <action> <node'>
/// ```
pub fn parse_fsc(text: &str) -> Result<Fsc> {
    let mut it = lines(text);
    expect_header(&mut it, "fsc")?;
    let mut nodes = None;
    let mut init = None;
    let mut alpha = BTreeMap::new();
    let mut delta = BTreeMap::new();
    let node = |line: usize, tok: &str, nodes: Option<usize>| -> Result<usize> {
        let k = nodes.ok_or_else(|| syntax(line, "`nodes` must come first"))?;
        tok.parse::<usize>()
            .ok()
            .filter(|&n| n < k)
            .ok_or_else(|| syntax(line, format!("invalid node `{tok}`")))
    };
    for l in it {
        match (l.keyword, l.args.as_slice()) {
            ("nodes", [k]) => {
                let k = k
                    .parse::<usize>()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| syntax(l.no, format!("invalid node count `{k}`")))?;
                set_once(&mut nodes, k, l.no, "nodes")?;
            }
            ("init", [n]) => {
                let n = node(l.no, n, nodes)?;
                set_once(&mut init, n, l.no, "init")?;
            }
            ("A", [n, z, entries @ ..]) if !entries.is_empty() => {
                let n = node(l.no, n, nodes)?;
                let dist = entries
                    .iter()
                    .map(|tok| {
                        let (a, p) = tok
                            .split_once(':')
                            .ok_or_else(|| syntax(l.no, format!("expected <action>:<prob>, found `{tok}`")))?;
                        Ok((a.to_string(), real(l.no, p)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                check_distribution(&dist).map_err(|m| syntax(l.no, m))?;
                if alpha.insert((n, z.to_string()), dist).is_some() {
                    return Err(syntax(l.no, format!("alpha({n}, {z}) defined twice")));
                }
            }
            ("D", [n, z, a, m]) => {
                let n = node(l.no, n, nodes)?;
                let m = node(l.no, m, nodes)?;
                if delta.insert((n, z.to_string(), a.to_string()), m).is_some() {
                    return Err(syntax(l.no, format!("delta({n}, {z}, {a}) defined twice")));
                }
            }
            (kw @ ("nodes" | "init" | "A" | "D"), _) => {
                return Err(syntax(l.no, format!("wrong number of arguments for `{kw}`")));
            }
            (kw, _) => return Err(syntax(l.no, format!("unknown keyword `{kw}`"))),
        }
    }
    let nodes = nodes.ok_or_else(|| syntax(1, "missing `nodes`"))?;
    Fsc::new(nodes, init.unwrap_or(0), alpha, delta)
}

pub fn serialize_fsc(fsc: &Fsc) -> String {
    let mut out = format!("fsc\nnodes {}\ninit {}\n", fsc.nodes, fsc.init);
    for ((n, z), dist) in &fsc.alpha {
        let _ = write!(out, "A {n} {z}");
        for (a, p) in dist {
            let _ = write!(out, " {a}:{}", format_real(*p));
        }
        out.push('\n');
    }
    for ((n, z, a), m) in &fsc.delta {
        let _ = writeln!(out, "D {n} {z} {a} {m}");
    }
    out
}
