//! Explicit-state probabilistic model checking.
//!
//! DTMC objectives are answered by qualitative graph precomputation followed
//! by either dense Gaussian elimination or Gauss-Seidel value iteration; MDPs
//! are optimised by value iteration with the same precomputation.

mod dtmc;
mod graph;
mod linear;
mod mdp;

pub use dtmc::{dtmc_expected_reward, dtmc_reach_prob, dtmc_reach_prob_traced};
pub use graph::{prob0, prob1};
pub use linear::solve_dense;
pub use mdp::{mdp_optimize, MdpSolution};

use crate::error::{Error, Result};
use crate::model::Dtmc;
use crate::spec::{Bound, Objective, Spec};

/// Chains with at most this many undetermined states are solved exactly under [`Method::Auto`].
pub const EXACT_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    Exact,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Max-norm change between sweeps at which value iteration stops.
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub exact_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Auto,
            tolerance: 1e-10,
            max_sweeps: 10_000_000,
            exact_limit: EXACT_LIMIT,
        }
    }
}

impl SolverConfig {
    pub fn iterative() -> Self {
        SolverConfig {
            method: Method::Iterative,
            ..Self::default()
        }
    }

    pub fn exact() -> Self {
        SolverConfig {
            method: Method::Exact,
            ..Self::default()
        }
    }

    pub(crate) fn use_exact(&self, unknowns: usize) -> bool {
        match self.method {
            Method::Exact => true,
            Method::Iterative => false,
            Method::Auto => unknowns <= self.exact_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Sat,
    Unsat,
    /// Answer to a query specification.
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    /// Per-state probability or expected reward (`f64::INFINITY` allowed for rewards).
    pub values: Vec<f64>,
    /// Initial-distribution-weighted value.
    pub value: f64,
    pub verdict: Verdict,
    /// States whose expected reward is infinite; always empty for probabilities.
    pub infinite_states: Vec<usize>,
    /// Sweeps performed (0 when solved exactly).
    pub iterations: usize,
    pub residual: f64,
}

impl CheckResult {
    pub fn is_sat(&self) -> bool {
        self.verdict == Verdict::Sat
    }
}

/// Solver output before a verdict is attached.
#[derive(Debug, Clone)]
pub(crate) struct Values {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn weighted(init: &[(usize, f64)], values: &[f64]) -> f64 {
    init.iter()
        .map(|&(s, p)| if values[s].is_infinite() { f64::INFINITY } else { p * values[s] })
        .sum()
}

impl Values {
    fn into_result(self, d: &Dtmc, spec: &Spec) -> CheckResult {
        let value = weighted(d.init(), &self.values);
        let verdict = match spec.bound {
            Bound::Threshold(cmp, lambda) => {
                if cmp.holds(value, lambda) {
                    Verdict::Sat
                } else {
                    Verdict::Unsat
                }
            }
            Bound::Query(_) => Verdict::Value(value),
        };
        let infinite_states = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_infinite())
            .map(|(s, _)| s)
            .collect();
        CheckResult {
            values: self.values,
            value,
            verdict,
            infinite_states,
            iterations: self.iterations,
            residual: self.residual,
        }
    }
}

/// Checks `spec` on the chain: per-state values plus a verdict comparing the
/// initial-weighted value with the bound (queries report the value instead).
pub fn check(d: &Dtmc, spec: &Spec, cfg: &SolverConfig) -> Result<CheckResult> {
    let values = match &spec.objective {
        Objective::Eventually { target } => dtmc::reach_values(d, target, None, cfg, &mut |_| {})?,
        Objective::Until { avoid, target } => dtmc::reach_values(d, target, Some(avoid), cfg, &mut |_| {})?,
        Objective::Reward { target } => dtmc::reward_values(d, target, cfg)?,
    };
    Ok(values.into_result(d, spec))
}

pub(crate) fn ensure_labels(labels: &crate::model::Labels, names: &[&str]) -> Result<()> {
    for n in names {
        if !labels.contains_key(*n) {
            return Err(Error::UnknownLabel(n.to_string()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Labels;
    use crate::spec::parse_spec;

    fn chain() -> Dtmc {
        // s0 -> s1 (1/2), s2 (1/2); s1 goal; s2 sink
        let mut labels = Labels::new();
        labels.insert("t".into(), [1].into());
        Dtmc::from_rows(
            vec![vec![(1, 0.5), (2, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]],
            vec![1.0, 0.0, 1.0],
            vec![(0, 1.0)],
            labels,
        )
        .unwrap()
    }

    #[test]
    fn trivial_lower_bound_always_holds() {
        let r = check(&chain(), &parse_spec(r#"P>=0 [ F "t" ]"#).unwrap(), &SolverConfig::default()).unwrap();
        assert!(r.is_sat());
    }

    #[test]
    fn query_reports_value() {
        let r = check(&chain(), &parse_spec(r#"Pmax=? [ F "t" ]"#).unwrap(), &SolverConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Value(0.5));
    }

    #[test]
    fn infinite_reward_verdicts() {
        let d = chain();
        let le = check(&d, &parse_spec(r#"R<=100 [ F "t" ]"#).unwrap(), &SolverConfig::default()).unwrap();
        assert_eq!(le.value, f64::INFINITY);
        assert_eq!(le.verdict, Verdict::Unsat);
        let ge = check(&d, &parse_spec(r#"R>=100 [ F "t" ]"#).unwrap(), &SolverConfig::default()).unwrap();
        assert_eq!(ge.verdict, Verdict::Sat);
        assert_eq!(le.infinite_states, vec![0, 2]);
    }

    #[test]
    fn unknown_label() {
        let err = check(&chain(), &parse_spec(r#"P>=0.5 [ F "nope" ]"#).unwrap(), &SolverConfig::default()).unwrap_err();
        assert_eq!(err, Error::UnknownLabel("nope".into()));
    }
}
