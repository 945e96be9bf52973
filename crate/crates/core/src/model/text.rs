//! Line-oriented text formats for POMDPs and DTMCs.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use super::{default_state_names, Choice, Dtmc, Labels, Mdp, Pomdp};
use crate::error::{syntax, Error, Result};
use crate::num::{format_real, parse_real};

pub(crate) struct Line<'a> {
    pub no: usize,
    pub keyword: &'a str,
    pub args: Vec<&'a str>,
}

pub(crate) fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let keyword = toks.next()?;
        Some(Line {
            no: i + 1,
            keyword,
            args: toks.collect(),
        })
    })
}

pub(crate) fn expect_header<'a>(it: &mut impl Iterator<Item = Line<'a>>, header: &str) -> Result<()> {
    match it.next() {
        Some(l) if l.keyword == header && l.args.is_empty() => Ok(()),
        Some(l) => Err(syntax(l.no, format!("expected `{header}` header, found `{}`", l.keyword))),
        None => Err(syntax(1, "empty document")),
    }
}

pub(crate) fn real(line: usize, tok: &str) -> Result<f64> {
    parse_real(tok).ok_or_else(|| syntax(line, format!("invalid number `{tok}`")))
}

pub(crate) fn set_once<T>(slot: &mut Option<T>, value: T, line: usize, what: &str) -> Result<()> {
    if slot.is_some() {
        return Err(syntax(line, format!("`{what}` declared twice")));
    }
    *slot = Some(value);
    Ok(())
}

fn parse_count(l: &Line) -> Result<usize> {
    match l.args.as_slice() {
        [n] => n
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| syntax(l.no, format!("invalid state count `{n}`"))),
        _ => Err(syntax(l.no, "`states` takes exactly one count")),
    }
}

fn names(l: &Line) -> Result<Vec<String>> {
    if l.args.is_empty() {
        return Err(syntax(l.no, format!("`{}` needs at least one name", l.keyword)));
    }
    let mut seen = BTreeSet::new();
    for a in &l.args {
        if !seen.insert(*a) {
            return Err(syntax(l.no, format!("duplicate name `{a}`")));
        }
    }
    Ok(l.args.iter().map(|s| s.to_string()).collect())
}

struct StateTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl StateTable {
    fn new(names: Vec<String>) -> Self {
        let index = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        StateTable { names, index }
    }

    fn get(&self, line: usize, tok: &str) -> Result<usize> {
        self.index
            .get(tok)
            .copied()
            .ok_or_else(|| syntax(line, format!("unknown state `{tok}`")))
    }
}

fn parse_init(l: &Line, states: &StateTable) -> Result<Vec<(usize, f64)>> {
    if l.args.is_empty() {
        return Err(syntax(l.no, "`init` needs at least one state:probability entry"));
    }
    l.args
        .iter()
        .map(|tok| {
            let (s, p) = tok
                .split_once(':')
                .ok_or_else(|| syntax(l.no, format!("expected <state>:<prob>, found `{tok}`")))?;
            Ok((states.get(l.no, s)?, real(l.no, p)?))
        })
        .collect()
}

fn parse_label(l: &Line, states: &StateTable, labels: &mut Labels) -> Result<()> {
    let (name, members) = l
        .args
        .split_first()
        .ok_or_else(|| syntax(l.no, "`label` needs a name"))?;
    let set = members
        .iter()
        .map(|s| states.get(l.no, s))
        .collect::<Result<BTreeSet<_>>>()?;
    if labels.insert(name.to_string(), set).is_some() {
        return Err(syntax(l.no, format!("label `{name}` declared twice")));
    }
    Ok(())
}

fn is_default_name(tok: &str, n: usize) -> bool {
    tok.strip_prefix('s')
        .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()) && (d.len() == 1 || !d.starts_with('0')))
        .and_then(|d| d.parse::<usize>().ok())
        .is_some_and(|i| i < n)
}

/// Parses the POMDP text format.
pub fn parse_pomdp(text: &str) -> Result<Pomdp> {
    let mut it = lines(text);
    expect_header(&mut it, "pomdp")?;
    let body: Vec<Line> = it.collect();

    let (mut n, mut actions, mut observations) = (None, None, None);
    for l in &body {
        match l.keyword {
            "states" => set_once(&mut n, parse_count(l)?, l.no, "states")?,
            "actions" => set_once(&mut actions, names(l)?, l.no, "actions")?,
            "observations" => set_once(&mut observations, names(l)?, l.no, "observations")?,
            "init" | "obs" | "T" | "R" | "label" => {}
            other => return Err(syntax(l.no, format!("unknown directive `{other}`"))),
        }
    }
    let n = n.ok_or_else(|| syntax(1, "missing `states` declaration"))?;
    let actions = actions.ok_or_else(|| syntax(1, "missing `actions` declaration"))?;
    let observations = observations.ok_or_else(|| syntax(1, "missing `observations` declaration"))?;
    let action_index: HashMap<&str, usize> =
        actions.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let obs_index: HashMap<&str, usize> =
        observations.iter().enumerate().map(|(i, z)| (z.as_str(), i)).collect();

    // State names: `s<i>` by default, otherwise bound in order of first use in `obs`.
    let obs_lines: Vec<&Line> = body.iter().filter(|l| l.keyword == "obs").collect();
    for l in &obs_lines {
        if l.args.len() != 2 {
            return Err(syntax(l.no, "`obs` takes a state and an observation"));
        }
    }
    let default = obs_lines.iter().all(|l| is_default_name(l.args[0], n));
    let state_names = if default {
        default_state_names(n)
    } else {
        let mut seen = Vec::new();
        for l in &obs_lines {
            let name = l.args[0].to_string();
            if seen.contains(&name) {
                return Err(syntax(l.no, format!("state `{name}` has two `obs` lines")));
            }
            if seen.len() == n {
                return Err(syntax(l.no, format!("more than {n} states named")));
            }
            seen.push(name);
        }
        if seen.len() < n {
            return Err(Error::Model(format!(
                "{} of {n} states have an `obs` line",
                seen.len()
            )));
        }
        seen
    };
    let states = StateTable::new(state_names);

    let mut obs = vec![None; n];
    let mut init = None;
    let mut trans: Vec<Vec<(usize, Vec<(usize, f64)>)>> = vec![Vec::new(); n];
    let mut rewards: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    let mut labels = Labels::new();
    let action = |line: usize, tok: &str| {
        action_index
            .get(tok)
            .copied()
            .ok_or_else(|| syntax(line, format!("unknown action `{tok}`")))
    };

    for l in &body {
        match l.keyword {
            "obs" => {
                let s = states.get(l.no, l.args[0])?;
                let z = *obs_index
                    .get(l.args[1])
                    .ok_or_else(|| syntax(l.no, format!("unknown observation `{}`", l.args[1])))?;
                if obs[s].replace(z).is_some() {
                    return Err(syntax(l.no, format!("state `{}` has two `obs` lines", l.args[0])));
                }
            }
            "init" => set_once(&mut init, parse_init(l, &states)?, l.no, "init")?,
            "T" => {
                let [s, a, t, p] = l.args[..] else {
                    return Err(syntax(l.no, "`T` takes <state> <action> <state'> <prob>"));
                };
                let (s, a, t, p) = (states.get(l.no, s)?, action(l.no, a)?, states.get(l.no, t)?, real(l.no, p)?);
                let row = match trans[s].iter_mut().find(|(b, _)| *b == a) {
                    Some((_, row)) => row,
                    None => {
                        trans[s].push((a, Vec::new()));
                        &mut trans[s].last_mut().unwrap().1
                    }
                };
                if row.iter().any(|&(u, _)| u == t) {
                    return Err(syntax(l.no, "duplicate transition"));
                }
                row.push((t, p));
            }
            "R" => {
                let [s, a, r] = l.args[..] else {
                    return Err(syntax(l.no, "`R` takes <state> <action> <real>"));
                };
                let key = (states.get(l.no, s)?, action(l.no, a)?);
                if rewards.insert(key, (real(l.no, r)?, l.no)).is_some() {
                    return Err(syntax(l.no, "duplicate reward"));
                }
            }
            "label" => parse_label(l, &states, &mut labels)?,
            _ => {}
        }
    }

    let obs = obs
        .into_iter()
        .enumerate()
        .map(|(s, z)| {
            z.ok_or_else(|| Error::Model(format!("state {} has no observation", states.names[s])))
        })
        .collect::<Result<Vec<_>>>()?;
    let init = init.ok_or_else(|| syntax(1, "missing `init` line"))?;

    let choices = trans
        .into_iter()
        .enumerate()
        .map(|(s, cs)| {
            cs.into_iter()
                .map(|(a, successors)| Choice {
                    action: a,
                    reward: rewards.remove(&(s, a)).map_or(0.0, |(r, _)| r),
                    successors,
                })
                .collect()
        })
        .collect();
    if let Some((&(s, a), &(_, line))) = rewards.iter().min_by_key(|(_, &(_, line))| line) {
        return Err(syntax(
            line,
            format!("reward for disabled action {} in state {}", actions[a], states.names[s]),
        ));
    }

    let mdp = Mdp::new(states.names, actions, choices, init, labels)?;
    Pomdp::new(mdp, observations, obs)
}

fn write_labels(out: &mut String, labels: &Labels, names: &[String]) {
    for (name, set) in labels {
        out.push_str("label ");
        out.push_str(name);
        for &s in set {
            out.push(' ');
            out.push_str(&names[s]);
        }
        out.push('\n');
    }
}

fn write_init(out: &mut String, init: &[(usize, f64)], names: &[String]) {
    out.push_str("init");
    for &(s, p) in init {
        let _ = write!(out, " {}:{}", names[s], format_real(p));
    }
    out.push('\n');
}

/// Renders a POMDP in the text format; `parse_pomdp` inverts it exactly.
pub fn serialize_pomdp(p: &Pomdp) -> String {
    let m = p.mdp();
    let names = m.state_names();
    let mut out = String::new();
    out.push_str("pomdp\n");
    let _ = writeln!(out, "states {}", m.num_states());
    let _ = writeln!(out, "actions {}", m.action_names().join(" "));
    let _ = writeln!(out, "observations {}", p.obs_names().join(" "));
    write_init(&mut out, m.init(), names);
    for s in 0..m.num_states() {
        let _ = writeln!(out, "obs {} {}", names[s], p.obs_names()[p.observation(s)]);
    }
    for s in 0..m.num_states() {
        for c in m.choices(s) {
            for &(t, prob) in &c.successors {
                let _ = writeln!(
                    out,
                    "T {} {} {} {}",
                    names[s],
                    m.action_names()[c.action],
                    names[t],
                    format_real(prob)
                );
            }
        }
    }
    for s in 0..m.num_states() {
        for c in m.choices(s).iter().filter(|c| c.reward != 0.0) {
            let _ = writeln!(
                out,
                "R {} {} {}",
                names[s],
                m.action_names()[c.action],
                format_real(c.reward)
            );
        }
    }
    write_labels(&mut out, m.labels(), names);
    out
}

/// Parses the DTMC text format (`dtmc` header, `T <s> <s'> <p>`, `R <s> <r>`).
pub fn parse_dtmc(text: &str) -> Result<Dtmc> {
    let mut it = lines(text);
    expect_header(&mut it, "dtmc")?;
    let body: Vec<Line> = it.collect();
    let mut n = None;
    for l in &body {
        match l.keyword {
            "states" => set_once(&mut n, parse_count(l)?, l.no, "states")?,
            "init" | "T" | "R" | "label" => {}
            other => return Err(syntax(l.no, format!("unknown directive `{other}`"))),
        }
    }
    let n = n.ok_or_else(|| syntax(1, "missing `states` declaration"))?;
    let states = StateTable::new(default_state_names(n));
    let mut rows = vec![Vec::new(); n];
    let mut rewards = vec![0.0; n];
    let mut seen_reward = vec![false; n];
    let mut init = None;
    let mut labels = Labels::new();
    for l in &body {
        match l.keyword {
            "init" => set_once(&mut init, parse_init(l, &states)?, l.no, "init")?,
            "T" => {
                let [s, t, p] = l.args[..] else {
                    return Err(syntax(l.no, "`T` takes <state> <state'> <prob>"));
                };
                let (s, t, p) = (states.get(l.no, s)?, states.get(l.no, t)?, real(l.no, p)?);
                if rows[s].iter().any(|&(u, _)| u == t) {
                    return Err(syntax(l.no, "duplicate transition"));
                }
                rows[s].push((t, p));
            }
            "R" => {
                let [s, r] = l.args[..] else {
                    return Err(syntax(l.no, "`R` takes <state> <real>"));
                };
                let s = states.get(l.no, s)?;
                if std::mem::replace(&mut seen_reward[s], true) {
                    return Err(syntax(l.no, "duplicate reward"));
                }
                rewards[s] = real(l.no, r)?;
            }
            "label" => parse_label(l, &states, &mut labels)?,
            _ => {}
        }
    }
    let init = init.ok_or_else(|| syntax(1, "missing `init` line"))?;
    Dtmc::new(states.names, rows, rewards, init, labels)
}

/// Renders a DTMC; state names are replaced by their `s<i>` indices.
pub fn serialize_dtmc(d: &Dtmc) -> String {
    let names = default_state_names(d.num_states());
    let mut out = String::new();
    out.push_str("dtmc\n");
    let _ = writeln!(out, "states {}", d.num_states());
    write_init(&mut out, d.init(), &names);
    for s in 0..d.num_states() {
        for &(t, p) in d.row(s) {
            let _ = writeln!(out, "T {} {} {}", names[s], names[t], format_real(p));
        }
    }
    for s in 0..d.num_states() {
        if d.reward(s) != 0.0 {
            let _ = writeln!(out, "R {} {}", names[s], format_real(d.reward(s)));
        }
    }
    write_labels(&mut out, d.labels(), &names);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SELF_LOOP: &str = "pomdp\nstates 1\nactions a\nobservations z\ninit s0:1\nobs s0 z\nT s0 a s0 1\n";

    #[test]
    fn identity_model() {
        let p = parse_pomdp(SELF_LOOP).unwrap();
        assert_eq!(p.num_states(), 1);
        assert_eq!(p.choice(0, 0).unwrap().successors, vec![(0, 1.0)]);
    }

    #[test]
    fn row_sum_error_names_state_and_action() {
        let text = "pomdp\nstates 2\nactions go\nobservations z\ninit s0:1\nobs s0 z\nobs s1 z\n\
                    T s0 go s0 0.5\nT s0 go s1 0.4\nT s1 go s1 1\n";
        let err = parse_pomdp(text).unwrap_err().to_string();
        assert!(err.contains("s0") && err.contains("go") && err.contains("sum"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = "pomdp\nstates 1\nactions a\nobservations z\ninit s0:1\nobs s0 z\nT s0 a s0\n";
        assert_eq!(
            parse_pomdp(text).unwrap_err(),
            Error::Syntax {
                line: 7,
                msg: "`T` takes <state> <action> <state'> <prob>".into()
            }
        );
        let err = parse_pomdp("pomdp\nstates 1\nbogus\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }));
    }

    #[test]
    fn missing_obs_is_semantic_error() {
        let text = "pomdp\nstates 2\nactions a\nobservations z\ninit s0:1\nobs s0 z\nT s0 a s0 1\nT s1 a s1 1\n";
        let err = parse_pomdp(text).unwrap_err();
        assert!(err.to_string().contains("s1"), "{err}");
    }

    #[test]
    fn unknown_names() {
        let base = "pomdp\nstates 1\nactions a\nobservations z\ninit s0:1\n";
        assert!(parse_pomdp(&format!("{base}obs s0 q\nT s0 a s0 1\n")).is_err());
        assert!(parse_pomdp(&format!("{base}obs s0 z\nT s0 b s0 1\n")).is_err());
        assert!(parse_pomdp(&format!("{base}obs s0 z\nT s0 a s7 1\n")).is_err());
    }

    #[test]
    fn user_state_names_bind_in_obs_order() {
        let text = "pomdp\nstates 2\nactions a\nobservations z\ninit left:1/2 right:1/2\n\
                    obs left z\nobs right z\nT left a right 1\nT right a right 1\nlabel end right\n";
        let p = parse_pomdp(text).unwrap();
        assert_eq!(p.state_names(), ["left", "right"]);
        assert_eq!(p.init(), &[(0, 0.5), (1, 0.5)]);
        assert_eq!(parse_pomdp(&serialize_pomdp(&p)).unwrap(), p);
    }

    #[test]
    fn reward_for_disabled_action_rejected() {
        let text = format!("{SELF_LOOP}R s0 b 1\n");
        assert!(parse_pomdp(&text).is_err());
        let text = "pomdp\nstates 1\nactions a b\nobservations z\ninit s0:1\nobs s0 z\nT s0 a s0 1\nR s0 b 1\n";
        assert!(matches!(parse_pomdp(text).unwrap_err(), Error::Syntax { line: 8, .. }));
    }

    #[test]
    fn dtmc_round_trip() {
        let text = "dtmc\nstates 3\ninit s0:1\nT s0 s1 1/3\nT s0 s2 2/3\nT s1 s1 1\nT s2 s2 1\nR s0 2.5\nlabel t s1\n";
        let d = parse_dtmc(text).unwrap();
        assert_eq!(d.row(0), &[(1, 1.0 / 3.0), (2, 2.0 / 3.0)]);
        assert_eq!(parse_dtmc(&serialize_dtmc(&d)).unwrap(), d);
    }
}
