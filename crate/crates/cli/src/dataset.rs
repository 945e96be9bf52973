//! Behaviour-cloning datasets as text.
//!
//! ```text
//! dataset
//! # weight, then observation:action pairs; a trailing `?` marks an
//! # unlabelled step that only feeds the memory
//! seq 1 blue:up? red:down
//! ```

use fscforge::model::Pomdp;
use fscforge::network::TrainingBatch;
use fscforge::num::parse_real;

pub fn parse(text: &str, p: &Pomdp) -> Result<TrainingBatch, String> {
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match rows.next() {
        Some((_, "dataset")) => {}
        Some((n, _)) => return Err(format!("line {n}: expected `dataset`")),
        None => return Err("empty dataset".into()),
    }
    let mut batch = TrainingBatch::new();
    for (n, line) in rows {
        let mut toks = line.split_whitespace();
        if toks.next() != Some("seq") {
            return Err(format!("line {n}: expected `seq`"));
        }
        let weight = toks
            .next()
            .and_then(parse_real)
            .filter(|w| w.is_finite() && *w > 0.0)
            .ok_or_else(|| format!("line {n}: missing or non-positive weight"))?;
        let mut steps = Vec::new();
        let mut labelled = Vec::new();
        for tok in toks {
            let (tok, label) = match tok.strip_suffix('?') {
                Some(t) => (t, false),
                None => (tok, true),
            };
            let (z, a) = tok
                .split_once(':')
                .ok_or_else(|| format!("line {n}: `{tok}` is not observation:action"))?;
            let z = p
                .observation_index(z)
                .ok_or_else(|| format!("line {n}: unknown observation `{z}`"))?;
            let a = p.action_index(a).ok_or_else(|| format!("line {n}: unknown action `{a}`"))?;
            steps.push((z, a));
            labelled.push(label);
        }
        if steps.is_empty() {
            return Err(format!("line {n}: empty sequence"));
        }
        if !labelled.iter().any(|&l| l) {
            return Err(format!("line {n}: no labelled step"));
        }
        batch.push_partial(steps, labelled, weight);
    }
    if batch.is_empty() {
        return Err("dataset has no sequences".into());
    }
    Ok(batch)
}
