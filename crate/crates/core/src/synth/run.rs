use std::fmt;

use super::retrain::stop_mask;
use super::{critical_pairs, decide, entropy_of, fsc_entropy, generate_retraining_data, induce_dtmc, policy_rollouts, RetrainConfig};
use crate::check::{check, mdp_optimize, SolverConfig, Verdict};
use crate::error::{Error, Result};
use crate::fsc::{build_fsc, collect_hidden_states, simulate_rollouts, Fsc};
use crate::model::Pomdp;
use crate::network::{insert_qbn, train_bc, Hyperparams, RecurrentPolicy, TrainingBatch};
use crate::num::format_sig;
use crate::seed;
use crate::spec::{Bound, Direction, Spec};

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Entropy threshold separating the retrain and increment branches.
    pub eta: f64,
    pub bh_init: usize,
    pub bh_max: usize,
    pub max_iters: usize,
    pub hidden: usize,
    /// Optimal-policy trajectories in the initial training set.
    pub train_rollouts: usize,
    /// Additional initial trajectories with exploratory actions.
    pub explore_rollouts: usize,
    /// Per-step probability of an exploratory action in those trajectories.
    pub explore: f64,
    /// Network trajectories whose memory vectors train the bottleneck.
    pub qbn_rollouts: usize,
    /// Quantized-network trajectories used to build the controller.
    pub rollouts: usize,
    pub retrain_rollouts: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub train: Hyperparams,
    pub qbn: Hyperparams,
    pub finetune_epochs: usize,
    pub solver: SolverConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            eta: 0.5,
            bh_init: 1,
            bh_max: 4,
            max_iters: 10,
            hidden: 16,
            train_rollouts: 200,
            explore_rollouts: 200,
            explore: 0.5,
            qbn_rollouts: 500,
            rollouts: 1000,
            retrain_rollouts: 20,
            max_steps: 50,
            seed: 0,
            train: Hyperparams { epochs: 200, ..Hyperparams::default() },
            qbn: Hyperparams { epochs: 200, ..Hyperparams::default() },
            finetune_epochs: 20,
            solver: SolverConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Invalid(format!("eta {} outside [0,1]", self.eta)));
        }
        if !(0.0..1.0).contains(&self.explore) {
            return Err(Error::Invalid(format!("exploration rate {} outside [0,1)", self.explore)));
        }
        if self.bh_init == 0 || self.bh_max < self.bh_init {
            return Err(Error::Invalid("bottleneck schedule needs 1 <= initial <= max".into()));
        }
        let counts = [
            ("max iterations", self.max_iters),
            ("hidden size", self.hidden),
            ("training rollouts", self.train_rollouts),
            ("bottleneck rollouts", self.qbn_rollouts),
            ("rollouts", self.rollouts),
            ("retraining rollouts", self.retrain_rollouts),
            ("max steps", self.max_steps),
        ];
        if let Some((what, _)) = counts.iter().find(|c| c.1 == 0) {
            return Err(Error::Invalid(format!("{what} must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopAction {
    Retrain,
    Increment,
    Done,
    /// Increment requested with the bottleneck already at its maximum.
    Exhausted,
}

impl fmt::Display for LoopAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoopAction::Retrain => "retrain",
            LoopAction::Increment => "increment",
            LoopAction::Done => "done",
            LoopAction::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub bh: usize,
    pub nodes: usize,
    pub sat: bool,
    pub value: f64,
    pub crit: usize,
    /// Mean entropy over the counterexample; `None` when it is empty or the specification holds.
    pub h_crit: Option<f64>,
    /// Mean entropy over all reachable pairs.
    pub h_fsc: f64,
    pub action: LoopAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopReport {
    pub records: Vec<IterationRecord>,
    /// Controller of the last iteration.
    pub last: Fsc,
    /// Controller with the best value seen; equals `last` when the loop ends SAT.
    pub best: Fsc,
    pub best_value: f64,
    pub best_iter: usize,
    pub sat: bool,
}

impl LoopReport {
    pub const HEADER: &'static str = "iter bh nodes verdict value crit h_crit h_fsc action";

    /// The iteration table, header first, whitespace-separated columns.
    pub fn table(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.records {
            out += &format!(
                "{} {} {} {} {} {} {} {} {}\n",
                r.iter,
                r.bh,
                r.nodes,
                if r.sat { "SAT" } else { "UNSAT" },
                format_sig(r.value, 10),
                r.crit,
                r.h_crit.map_or("-".to_string(), |h| format!("{h:.4}")),
                format!("{:.4}", r.h_fsc),
                r.action
            );
        }
        out
    }
}

fn better(dir: Direction, a: f64, b: f64) -> bool {
    match dir {
        Direction::Max => a > b,
        Direction::Min => a < b,
    }
}

fn with_epochs(hp: &Hyperparams, epochs: usize, seed: u64) -> Hyperparams {
    Hyperparams { epochs, seed, ..hp.clone() }
}

/// Demonstrations of the optimal policy of the underlying MDP from the
/// initial distribution: `train_rollouts` clean ones plus `explore_rollouts`
/// in which each step executes a random allowed action with probability
/// `explore`. Randomised steps are kept as unlabelled context.
pub fn initial_dataset(p: &Pomdp, spec: &Spec, cfg: &LoopConfig) -> Result<TrainingBatch> {
    let sol = mdp_optimize(p.mdp(), spec, &cfg.solver)?;
    let stop = stop_mask(p, spec)?;
    let mut batch = TrainingBatch::new();
    let demos = policy_rollouts(p, &sol.policy, &stop, p.init(), cfg.train_rollouts, cfg.max_steps, 0.0, cfg.seed, "initial");
    let noisy = policy_rollouts(p, &sol.policy, &stop, p.init(), cfg.explore_rollouts, cfg.max_steps, cfg.explore, cfg.seed, "explore");
    for (steps, labelled) in demos.into_iter().chain(noisy) {
        if labelled.iter().any(|&l| l) {
            batch.push_partial(steps, labelled, 1.0);
        }
    }
    batch.merge_duplicates();
    if batch.is_empty() {
        return Err(Error::Invalid("every initial state already ends the specification; nothing to learn".into()));
    }
    Ok(batch)
}

/// Iterative extraction and refinement. Each iteration trains (or
/// retrains) the policy network, inserts a bottleneck of the current width,
/// extracts a controller and checks it. Failing checks either add optimal
/// demonstrations from the critical states (high entropy) or widen the
/// bottleneck (low entropy).
pub fn run_loop(p: &Pomdp, spec: &Spec, cfg: &LoopConfig) -> Result<LoopReport> {
    cfg.validate()?;
    if let Bound::Query(_) = spec.bound {
        return Err(Error::Spec("the loop needs a bounded specification".into()));
    }
    let dir = spec.direction();
    let mut batch = initial_dataset(p, spec, cfg)?;

    let mut net = RecurrentPolicy::new(p.num_observations(), p.num_actions(), cfg.hidden, seed::derive(cfg.seed, "network", 0))?
        .with_action_mask(p.observation_action_masks()?)?;
    let mut retrain = true;
    let mut bh = cfg.bh_init;
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, Fsc)> = None;
    let mut last = None;
    let mut sat = false;

    for iter in 1..=cfg.max_iters {
        let it = iter as u64;
        if retrain {
            let (trained, trace) = train_bc(&net, &batch, &with_epochs(&cfg.train, cfg.train.epochs, seed::derive(cfg.seed, "train", it)))?;
            log::info!("iteration {iter}: trained on {} sequences, loss {:.4}", batch.len(), trace.last().copied().unwrap_or(0.0));
            net = trained;
        }
        let hidden = collect_hidden_states(p, &net, cfg.qbn_rollouts, cfg.max_steps, seed::derive(cfg.seed, "hidden", it))?;
        let (qnet, mse) = insert_qbn(&net, bh, &hidden, &with_epochs(&cfg.qbn, cfg.qbn.epochs, seed::derive(cfg.seed, "qbn", it)))?;
        let (qnet, _) = train_bc(&qnet, &batch, &with_epochs(&cfg.train, cfg.finetune_epochs, seed::derive(cfg.seed, "finetune", it)))?;
        let trajs = simulate_rollouts(p, &qnet, cfg.rollouts, cfg.max_steps, seed::derive(cfg.seed, "extract", it))?;
        let fsc = build_fsc(&trajs, &qnet, p)?;
        let product = induce_dtmc(p, &fsc)?;
        let result = check(&product.dtmc, spec, &cfg.solver)?;
        let h_fsc = fsc_entropy(p, &fsc, &product)?;
        log::info!(
            "iteration {iter}: B_h={bh} mse={mse:.4} nodes={} value={}",
            fsc.num_nodes(),
            format_sig(result.value, 10)
        );
        sat = result.verdict == Verdict::Sat;
        if best.as_ref().is_none_or(|b| better(dir, result.value, b.0)) {
            best = Some((result.value, iter, fsc.clone()));
        }
        let (crit_len, h_crit, mut action) = if sat {
            (0, None, LoopAction::Done)
        } else {
            let crit = critical_pairs(&product, &result, spec)?;
            let h = if crit.is_empty() { None } else { Some(entropy_of(p, &fsc, &crit)?) };
            let action = decide(false, h, cfg.eta);
            if action == LoopAction::Retrain && iter < cfg.max_iters {
                let rc = RetrainConfig {
                    rollouts_per_state: cfg.retrain_rollouts,
                    max_steps: cfg.max_steps,
                    seed: seed::derive(cfg.seed, "retrain", it),
                    weight: 2.0,
                };
                let extra = generate_retraining_data(p, &crit, spec, &rc)?;
                batch.sequences.extend(extra.sequences);
                batch.merge_duplicates();
            }
            (crit.len(), h, action)
        };
        if action == LoopAction::Increment && bh >= cfg.bh_max {
            action = LoopAction::Exhausted;
        }
        records.push(IterationRecord {
            iter,
            bh,
            nodes: fsc.num_nodes(),
            sat,
            value: result.value,
            crit: crit_len,
            h_crit,
            h_fsc,
            action,
        });
        last = Some(fsc);
        match action {
            LoopAction::Done | LoopAction::Exhausted => break,
            LoopAction::Retrain => retrain = true,
            LoopAction::Increment => {
                retrain = false;
                bh += 1;
            }
        }
    }
    let (best_value, best_iter, best) = best.expect("at least one iteration ran");
    Ok(LoopReport {
        records,
        last: last.expect("at least one iteration ran"),
        best,
        best_value,
        best_iter,
        sat,
    })
}
