//! Plain-text network checkpoints.
//!
//! ```text
//! fscforge-network 1
//! seed <u64>
//! dims <observations> <actions> <hidden> <bottleneck, 0 if none>
//! mask none | mask <one 0/1 string per observation>
//! h0 <hidden values>
//! tensor <name> <rows> <cols> <row-major values>
//! ...
//! ```
//!
//! Values are written in shortest round-trip exponent form, so saving and
//! loading is bit-exact. Tensors appear in the order of [`Params::tensors`].

use super::mat::Mat;
use super::policy::{Params, Qbn, RecurrentPolicy};
use crate::error::{syntax, Error, Result};

const MAGIC: &str = "fscforge-network 1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

impl RecurrentPolicy {
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{MAGIC}\nseed {}\n", self.seed());
        out += &format!(
            "dims {} {} {} {}\n",
            self.num_observations(),
            self.num_actions(),
            self.hidden_size(),
            self.bottleneck().unwrap_or(0)
        );
        match self.action_mask() {
            None => out += "mask none\n",
            Some(mask) => {
                let rows: Vec<String> = mask
                    .iter()
                    .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
                    .collect();
                out += &format!("mask {}\n", rows.join(" "));
            }
        }
        out += &format!("h0 {}\n", join(self.h0()));
        for (name, rows, cols, data) in self.params().tensors() {
            out += &format!("tensor {name} {rows} {cols} {}\n", join(data));
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (ln, magic) = next_line(&mut lines, "header")?;
        if magic != MAGIC {
            return Err(syntax(ln, format!("expected '{MAGIC}'")));
        }
        let (ln, l) = next_line(&mut lines, "seed")?;
        let seed = field(ln, l, "seed")?
            .parse::<u64>()
            .map_err(|_| syntax(ln, "invalid seed"))?;
        let (ln, l) = next_line(&mut lines, "dims")?;
        let dims: Vec<usize> = field(ln, l, "dims")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| syntax(ln, "invalid dimension")))
            .collect::<Result<_>>()?;
        let [n_obs, n_actions, hidden, bh] = dims[..] else {
            return Err(syntax(ln, "dims needs four values"));
        };
        let (ln, l) = next_line(&mut lines, "mask")?;
        let m = field(ln, l, "mask")?;
        let mask = if m == "none" {
            None
        } else {
            let rows: Vec<Vec<bool>> = m
                .split_whitespace()
                .map(|r| {
                    r.chars()
                        .map(|c| match c {
                            '0' => Ok(false),
                            '1' => Ok(true),
                            _ => Err(syntax(ln, "mask rows must be 0/1 strings")),
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            Some(rows)
        };
        let (ln, l) = next_line(&mut lines, "h0")?;
        let h0 = values(ln, field(ln, l, "h0")?)?;
        if h0.len() != hidden {
            return Err(syntax(ln, "h0 length does not match hidden size"));
        }

        let mut base = RecurrentPolicy::zeroed(n_obs, n_actions, hidden)?;
        if bh > 0 {
            base = base.with_qbn(Qbn {
                enc_w: Mat::zeros(bh, hidden),
                enc_b: vec![0.0; bh],
                dec_w: Mat::zeros(hidden, bh),
                dec_b: vec![0.0; hidden],
            });
        }
        let mut params: Params = base.params().clone();
        let expected: Vec<(&'static str, usize, usize)> =
            params.tensors().iter().map(|t| (t.0, t.1, t.2)).collect();
        for (slot, (name, rows, cols)) in params.slices_mut().into_iter().zip(expected) {
            let (ln, l) = next_line(&mut lines, "tensor")?;
            let rest = field(ln, l, "tensor")?;
            let mut parts = rest.splitn(4, ' ');
            let got_name = parts.next().unwrap_or_default();
            let r: Option<usize> = parts.next().and_then(|t| t.parse().ok());
            let c: Option<usize> = parts.next().and_then(|t| t.parse().ok());
            if got_name != name || r != Some(rows) || c != Some(cols) {
                return Err(syntax(ln, format!("expected tensor {name} {rows} {cols}")));
            }
            let data = values(ln, parts.next().unwrap_or_default())?;
            if data.len() != slot.len() {
                return Err(syntax(ln, format!("tensor {name} needs {} values", slot.len())));
            }
            slot.copy_from_slice(&data);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(syntax(ln, "unexpected trailing content"));
        }
        if !params.all_finite() || h0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Network("checkpoint contains non-finite parameters".into()));
        }
        let net = RecurrentPolicy::from_parts(n_obs, n_actions, hidden, params, h0, None, seed);
        match mask {
            None => Ok(net),
            Some(mask) => net.with_action_mask(mask),
        }
    }
}

fn next_line<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, what: &str) -> Result<(usize, &'a str)> {
    lines.next().ok_or_else(|| syntax(0, format!("missing {what} line")))
}

fn field<'a>(ln: usize, line: &'a str, key: &str) -> Result<&'a str> {
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok(rest.trim()),
        _ if line == key => Ok(""),
        _ => Err(syntax(ln, format!("expected '{key}' line"))),
    }
}

fn values(ln: usize, s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| syntax(ln, format!("invalid number '{t}'"))))
        .collect()
}
