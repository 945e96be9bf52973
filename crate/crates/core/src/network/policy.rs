
use super::mat::{masked_softmax, sigmoid, Mat};
use crate::error::{Error, Result};
use crate::seed;

/// Ternary bottleneck code, one entry in {-1, 0, 1} per quantized neuron.
pub type Code = Vec<i8>;

/// Encoder outputs above this magnitude quantize to ±1.
pub const QUANT_THRESHOLD: f64 = 0.5;

/// Forward behaviour of the quantizer. The backward pass is always the
/// identity (straight-through); `Bypass` also skips it on the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    Ternary,
    Bypass,
}

/// Gated recurrent cell: `h' = (1-u)·m + u·tanh(W_c x + U_c m + b_c)` with
/// update gate `u = σ(W_u x + U_u m + b_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub w_u: Mat,
    pub u_u: Mat,
    pub b_u: Vec<f64>,
    pub w_c: Mat,
    pub u_c: Mat,
    pub b_c: Vec<f64>,
}

/// Quantized bottleneck autoencoder: `tanh` encoder, ternary quantizer, affine decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Qbn {
    pub enc_w: Mat,
    pub enc_b: Vec<f64>,
    pub dec_w: Mat,
    pub dec_b: Vec<f64>,
}

/// All trainable tensors; also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub cell: Cell,
    pub head_w: Mat,
    pub head_b: Vec<f64>,
    pub qbn: Option<Qbn>,
}

fn zeros_like_mat(m: &Mat) -> Mat {
    Mat::zeros(m.rows, m.cols)
}

impl Qbn {
    fn zeros_like(&self) -> Qbn {
        Qbn {
            enc_w: zeros_like_mat(&self.enc_w),
            enc_b: vec![0.0; self.enc_b.len()],
            dec_w: zeros_like_mat(&self.dec_w),
            dec_b: vec![0.0; self.dec_b.len()],
        }
    }

    pub fn width(&self) -> usize {
        self.enc_b.len()
    }

    pub fn encode(&self, h: &[f64]) -> Vec<f64> {
        let mut e = self.enc_b.clone();
        self.enc_w.mul_add(h, &mut e);
        e.iter_mut().for_each(|v| *v = v.tanh());
        e
    }

    pub fn decode(&self, q: &[f64]) -> Vec<f64> {
        let mut out = self.dec_b.clone();
        self.dec_w.mul_add(q, &mut out);
        out
    }
}

/// Elementwise ternary quantization at ±[`QUANT_THRESHOLD`].
pub fn ternary(e: &[f64]) -> Code {
    e.iter()
        .map(|&v| {
            if v > QUANT_THRESHOLD {
                1
            } else if v < -QUANT_THRESHOLD {
                -1
            } else {
                0
            }
        })
        .collect()
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        let c = &self.cell;
        Params {
            cell: Cell {
                w_u: zeros_like_mat(&c.w_u),
                u_u: zeros_like_mat(&c.u_u),
                b_u: vec![0.0; c.b_u.len()],
                w_c: zeros_like_mat(&c.w_c),
                u_c: zeros_like_mat(&c.u_c),
                b_c: vec![0.0; c.b_c.len()],
            },
            head_w: zeros_like_mat(&self.head_w),
            head_b: vec![0.0; self.head_b.len()],
            qbn: self.qbn.as_ref().map(Qbn::zeros_like),
        }
    }

    /// Named tensors as `(name, rows, cols, data)` in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, usize, usize, &[f64])> {
        let c = &self.cell;
        let mut out: Vec<(&'static str, usize, usize, &[f64])> = vec![
            ("cell.w_u", c.w_u.rows, c.w_u.cols, &c.w_u.data),
            ("cell.u_u", c.u_u.rows, c.u_u.cols, &c.u_u.data),
            ("cell.b_u", c.b_u.len(), 1, &c.b_u),
            ("cell.w_c", c.w_c.rows, c.w_c.cols, &c.w_c.data),
            ("cell.u_c", c.u_c.rows, c.u_c.cols, &c.u_c.data),
            ("cell.b_c", c.b_c.len(), 1, &c.b_c),
            ("head.w", self.head_w.rows, self.head_w.cols, &self.head_w.data),
            ("head.b", self.head_b.len(), 1, &self.head_b),
        ];
        if let Some(q) = &self.qbn {
            out.extend([
                ("qbn.enc_w", q.enc_w.rows, q.enc_w.cols, q.enc_w.data.as_slice()),
                ("qbn.enc_b", q.enc_b.len(), 1, q.enc_b.as_slice()),
                ("qbn.dec_w", q.dec_w.rows, q.dec_w.cols, q.dec_w.data.as_slice()),
                ("qbn.dec_b", q.dec_b.len(), 1, q.dec_b.as_slice()),
            ]);
        }
        out
    }

    /// Mutable views in the same order as [`Params::tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let c = &mut self.cell;
        let mut out: Vec<&mut [f64]> = vec![
            &mut c.w_u.data,
            &mut c.u_u.data,
            &mut c.b_u,
            &mut c.w_c.data,
            &mut c.u_c.data,
            &mut c.b_c,
            &mut self.head_w.data,
            &mut self.head_b,
        ];
        if let Some(q) = &mut self.qbn {
            out.extend([
                q.enc_w.data.as_mut_slice(),
                q.enc_b.as_mut_slice(),
                q.dec_w.data.as_mut_slice(),
                q.dec_b.as_mut_slice(),
            ]);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.3.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.3.iter().all(|v| v.is_finite()))
    }
}

/// Recurrent policy network.
///
/// The memory `m` is updated once per step with the observation and the
/// action actually taken there: `m_{t+1} = B(cell(m_t, z_t, a_t))`, where
/// `B` is the bottleneck (identity when no QBN is inserted). The action
/// distribution at step `t` is read out by applying the same cell with the
/// reserved "none" action slot, `softmax(head(cell(m_t, z_t, none)))`, so it
/// depends only on the memory and the current observation.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentPolicy {
    n_obs: usize,
    n_actions: usize,
    hidden: usize,
    pub(crate) params: Params,
    h0: Vec<f64>,
    mask: Option<Vec<Vec<bool>>>,
    seed: u64,
}

/// Memory vector after the bottleneck, with its code when a QBN is present.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub hidden: Vec<f64>,
    pub code: Option<Code>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    /// Memory the step's decision was read out from.
    pub memory: Memory,
}

#[derive(Debug, Clone)]
pub(crate) struct CellCache {
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct QbnCache {
    pub e: Vec<f64>,
    pub q: Vec<f64>,
}

impl RecurrentPolicy {
    /// Fresh network with uniform ±1/√fan-in weights drawn from `seed`.
    pub fn new(n_obs: usize, n_actions: usize, hidden: usize, seed: u64) -> Result<Self> {
        if n_obs == 0 || n_actions == 0 || hidden == 0 {
            return Err(Error::Network("observation, action and hidden sizes must be positive".into()));
        }
        let mut rng = seed::rng(seed, "init", 0);
        let n_in = n_obs + n_actions + 1;
        let sx = 1.0 / (n_in as f64).sqrt().max(1.0);
        let sh = 1.0 / (hidden as f64).sqrt();
        let cell = Cell {
            w_u: Mat::uniform(hidden, n_in, sx, &mut rng),
            u_u: Mat::uniform(hidden, hidden, sh, &mut rng),
            b_u: vec![0.0; hidden],
            w_c: Mat::uniform(hidden, n_in, sx, &mut rng),
            u_c: Mat::uniform(hidden, hidden, sh, &mut rng),
            b_c: vec![0.0; hidden],
        };
        let head_w = Mat::uniform(n_actions, hidden, sh, &mut rng);
        Ok(RecurrentPolicy {
            n_obs,
            n_actions,
            hidden,
            params: Params {
                cell,
                head_w,
                head_b: vec![0.0; n_actions],
                qbn: None,
            },
            h0: vec![0.0; hidden],
            mask: None,
            seed,
        })
    }

    /// Network with every parameter zero.
    pub fn zeroed(n_obs: usize, n_actions: usize, hidden: usize) -> Result<Self> {
        let mut net = RecurrentPolicy::new(n_obs, n_actions, hidden, 0)?;
        net.params = net.params.zeros_like();
        Ok(net)
    }

    pub(crate) fn from_parts(
        n_obs: usize,
        n_actions: usize,
        hidden: usize,
        params: Params,
        h0: Vec<f64>,
        mask: Option<Vec<Vec<bool>>>,
        seed: u64,
    ) -> Self {
        RecurrentPolicy {
            n_obs,
            n_actions,
            hidden,
            params,
            h0,
            mask,
            seed,
        }
    }

    /// Restricts the softmax for observation `z` to the actions with `mask[z][a]`.
    pub fn with_action_mask(mut self, mask: Vec<Vec<bool>>) -> Result<Self> {
        if mask.len() != self.n_obs
            || mask.iter().any(|m| m.len() != self.n_actions || !m.iter().any(|&b| b))
        {
            return Err(Error::Network("action mask must enable at least one action per observation".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn num_observations(&self) -> usize {
        self.n_obs
    }

    pub fn num_actions(&self) -> usize {
        self.n_actions
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn bottleneck(&self) -> Option<usize> {
        self.params.qbn.as_ref().map(Qbn::width)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn h0(&self) -> &[f64] {
        &self.h0
    }

    pub fn action_mask(&self) -> Option<&[Vec<bool>]> {
        self.mask.as_deref()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Removes the bottleneck, returning the plain recurrent network.
    pub fn without_qbn(&self) -> RecurrentPolicy {
        let mut net = self.clone();
        net.params.qbn = None;
        net
    }

    pub(crate) fn with_qbn(&self, qbn: Qbn) -> RecurrentPolicy {
        let mut net = self.clone();
        net.params.qbn = Some(qbn);
        net
    }

    fn none_slot(&self) -> usize {
        self.n_actions
    }

    fn check_obs(&self, z: usize) -> Result<()> {
        if z >= self.n_obs {
            return Err(Error::Network(format!("observation index {z} out of range")));
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::Network(format!("action index {a} out of range")));
        }
        Ok(())
    }

    pub(crate) fn cell_forward(&self, m: &[f64], z: usize, slot: usize) -> CellCache {
        let c = &self.params.cell;
        let mut pu = c.b_u.clone();
        c.w_u.add_column(z, &mut pu);
        c.w_u.add_column(self.n_obs + slot, &mut pu);
        c.u_u.mul_add(m, &mut pu);
        let mut pc = c.b_c.clone();
        c.w_c.add_column(z, &mut pc);
        c.w_c.add_column(self.n_obs + slot, &mut pc);
        c.u_c.mul_add(m, &mut pc);
        let u: Vec<f64> = pu.into_iter().map(sigmoid).collect();
        let cand: Vec<f64> = pc.into_iter().map(f64::tanh).collect();
        let h = (0..self.hidden).map(|i| (1.0 - u[i]) * m[i] + u[i] * cand[i]).collect();
        CellCache { u, c: cand, h }
    }

    /// Gradient of the cell output `dh` pushed into the cell's parameters;
    /// returns the gradient with respect to the input memory.
    pub(crate) fn cell_backward(&self, cache: &CellCache, m: &[f64], z: usize, slot: usize, dh: &[f64], g: &mut Params) -> Vec<f64> {
        let c = &self.params.cell;
        let n = self.hidden;
        let mut dm: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - cache.u[i])).collect();
        let dpu: Vec<f64> = (0..n)
            .map(|i| dh[i] * (cache.c[i] - m[i]) * cache.u[i] * (1.0 - cache.u[i]))
            .collect();
        let dpc: Vec<f64> = (0..n)
            .map(|i| dh[i] * cache.u[i] * (1.0 - cache.c[i] * cache.c[i]))
            .collect();
        let gc = &mut g.cell;
        gc.w_u.add_to_column(z, &dpu);
        gc.w_u.add_to_column(self.n_obs + slot, &dpu);
        gc.u_u.add_outer(&dpu, m);
        gc.w_c.add_to_column(z, &dpc);
        gc.w_c.add_to_column(self.n_obs + slot, &dpc);
        gc.u_c.add_outer(&dpc, m);
        for i in 0..n {
            gc.b_u[i] += dpu[i];
            gc.b_c[i] += dpc[i];
        }
        c.u_u.mul_t_add(&dpu, &mut dm);
        c.u_c.mul_t_add(&dpc, &mut dm);
        dm
    }

    /// `B(h)`: identity without a QBN, else decode(quantize(encode(h))).
    pub(crate) fn bottleneck_forward(&self, h: Vec<f64>, mode: QuantMode) -> (Vec<f64>, Option<QbnCache>) {
        match &self.params.qbn {
            None => (h, None),
            Some(qbn) => {
                let e = qbn.encode(&h);
                let q: Vec<f64> = match mode {
                    QuantMode::Ternary => ternary(&e).into_iter().map(f64::from).collect(),
                    QuantMode::Bypass => e.clone(),
                };
                (qbn.decode(&q), Some(QbnCache { e, q }))
            }
        }
    }

    /// Straight-through backward pass of the bottleneck; returns `dL/dh`.
    pub(crate) fn bottleneck_backward(&self, h: &[f64], cache: Option<&QbnCache>, dm: Vec<f64>, g: &mut Params) -> Vec<f64> {
        let (Some(qbn), Some(cache)) = (&self.params.qbn, cache) else {
            return dm;
        };
        let gq = g.qbn.as_mut().expect("gradient has QBN tensors");
        gq.dec_w.add_outer(&dm, &cache.q);
        for (b, d) in gq.dec_b.iter_mut().zip(&dm) {
            *b += d;
        }
        let mut dq = vec![0.0; qbn.width()];
        qbn.dec_w.mul_t_add(&dm, &mut dq);
        let dpe: Vec<f64> = dq.iter().zip(&cache.e).map(|(d, e)| d * (1.0 - e * e)).collect();
        gq.enc_w.add_outer(&dpe, h);
        for (b, d) in gq.enc_b.iter_mut().zip(&dpe) {
            *b += d;
        }
        let mut dh = vec![0.0; self.hidden];
        qbn.enc_w.mul_t_add(&dpe, &mut dh);
        dh
    }

    fn memory_from(&self, h: Vec<f64>) -> Memory {
        match &self.params.qbn {
            None => Memory { hidden: h, code: None },
            Some(qbn) => {
                let code = ternary(&qbn.encode(&h));
                let q: Vec<f64> = code.iter().map(|&c| f64::from(c)).collect();
                Memory {
                    hidden: qbn.decode(&q),
                    code: Some(code),
                }
            }
        }
    }

    pub(crate) fn logits_to_probs(&self, r: &[f64], z: usize) -> Vec<f64> {
        let mut logits = self.params.head_b.clone();
        self.params.head_w.mul_add(r, &mut logits);
        masked_softmax(&logits, self.mask.as_ref().map(|m| m[z].as_slice()))
    }

    /// Memory before the first observation: `B(h0)`.
    pub fn initial_memory(&self) -> Memory {
        self.memory_from(self.h0.clone())
    }

    /// Action distribution for observation `z` in memory `m`.
    pub fn readout(&self, m: &Memory, z: usize) -> Result<Vec<f64>> {
        self.check_obs(z)?;
        let r = self.cell_forward(&m.hidden, z, self.none_slot());
        Ok(self.logits_to_probs(&r.h, z))
    }

    /// Memory after taking action `a` on observation `z`.
    pub fn commit(&self, m: &Memory, z: usize, a: usize) -> Result<Memory> {
        self.check_obs(z)?;
        self.check_action(a)?;
        Ok(self.memory_from(self.cell_forward(&m.hidden, z, a).h))
    }

    /// Runs the network on `(observation, previous action)` pairs; the first
    /// pair has no previous action, every later pair must have one.
    pub fn forward(&self, inputs: &[(usize, Option<usize>)]) -> Result<Vec<StepOutput>> {
        let mut out = Vec::with_capacity(inputs.len());
        let mut m = self.initial_memory();
        for (t, &(z, prev)) in inputs.iter().enumerate() {
            self.check_obs(z)?;
            match (t, prev) {
                (0, None) => {}
                (0, Some(_)) => return Err(Error::Network("first step cannot have a previous action".into())),
                (_, None) => return Err(Error::Network(format!("step {t} is missing its previous action"))),
                (_, Some(a)) => m = self.commit(&m, inputs[t - 1].0, a)?,
            }
            out.push(StepOutput {
                probs: self.readout(&m, z)?,
                memory: m.clone(),
            });
        }
        Ok(out)
    }

    fn qbn(&self) -> Result<&Qbn> {
        self.params
            .qbn
            .as_ref()
            .ok_or_else(|| Error::Network("network has no quantized bottleneck".into()))
    }

    /// Ternary code of a hidden vector.
    pub fn quantize_hidden(&self, h: &[f64]) -> Result<Code> {
        if h.len() != self.hidden {
            return Err(Error::Network(format!("hidden vector has length {}, expected {}", h.len(), self.hidden)));
        }
        Ok(ternary(&self.qbn()?.encode(h)))
    }

    /// Memory vector represented by a code.
    pub fn decode(&self, code: &[i8]) -> Result<Vec<f64>> {
        let qbn = self.qbn()?;
        if code.len() != qbn.width() || code.iter().any(|c| !(-1..=1).contains(c)) {
            return Err(Error::Network(format!("code must have {} entries in {{-1,0,1}}", qbn.width())));
        }
        let q: Vec<f64> = code.iter().map(|&c| f64::from(c)).collect();
        Ok(qbn.decode(&q))
    }

    /// Action distribution of memory node `code` on observation `z`.
    pub fn action_distribution_for_code(&self, code: &[i8], z: usize) -> Result<Vec<f64>> {
        let hidden = self.decode(code)?;
        self.readout(
            &Memory {
                hidden,
                code: Some(code.to_vec()),
            },
            z,
        )
    }

    /// Memory reached from `code` after action `a` on observation `z`.
    pub fn successor_code(&self, code: &[i8], z: usize, a: usize) -> Result<Code> {
        let hidden = self.decode(code)?;
        let m = Memory {
            hidden,
            code: Some(code.to_vec()),
        };
        Ok(self.commit(&m, z, a)?.code.expect("network has a QBN"))
    }

    /// Sum of per-step cross-entropies of `steps` (observation, action) over
    /// the labelled steps; when `grads` is given, accumulates `scale ×` their
    /// gradient into it.
    pub(crate) fn sequence_loss(
        &self,
        steps: &[(usize, usize)],
        labelled: Option<&[bool]>,
        mode: QuantMode,
        scale: f64,
        grads: Option<&mut Params>,
    ) -> f64 {
        let is_labelled = |t: usize| labelled.is_none_or(|l| l[t]);
        let none = self.none_slot();
        let (m0, q0) = self.bottleneck_forward(self.h0.clone(), mode);
        let mut memories = vec![m0];
        let mut qcaches = vec![q0];
        let mut commits: Vec<CellCache> = Vec::with_capacity(steps.len());
        let mut readouts = Vec::with_capacity(steps.len());
        let mut probs = Vec::with_capacity(steps.len());
        let mut loss = 0.0;
        for (t, &(z, a)) in steps.iter().enumerate() {
            let r = self.cell_forward(&memories[t], z, none);
            let p = self.logits_to_probs(&r.h, z);
            if is_labelled(t) {
                loss -= p[a].max(1e-300).ln();
            }
            readouts.push(r);
            probs.push(p);
            if t + 1 < steps.len() {
                let c = self.cell_forward(&memories[t], z, a);
                let (m, q) = self.bottleneck_forward(c.h.clone(), mode);
                commits.push(c);
                memories.push(m);
                qcaches.push(q);
            }
        }
        let Some(g) = grads else {
            return loss;
        };

        let mut carry = vec![0.0; self.hidden];
        for t in (0..steps.len()).rev() {
            let (z, a) = steps[t];
            let mut dlogits = probs[t].clone();
            dlogits[a] -= 1.0;
            let s = if is_labelled(t) { scale } else { 0.0 };
            dlogits.iter_mut().for_each(|d| *d *= s);
            if let Some(mask) = &self.mask {
                for (d, &on) in dlogits.iter_mut().zip(&mask[z]) {
                    if !on {
                        *d = 0.0;
                    }
                }
            }
            g.head_w.add_outer(&dlogits, &readouts[t].h);
            for (b, d) in g.head_b.iter_mut().zip(&dlogits) {
                *b += d;
            }
            let mut dr = vec![0.0; self.hidden];
            self.params.head_w.mul_t_add(&dlogits, &mut dr);
            let dm_readout = self.cell_backward(&readouts[t], &memories[t], z, none, &dr, g);
            let dm: Vec<f64> = carry.iter().zip(&dm_readout).map(|(a, b)| a + b).collect();
            if t == 0 {
                self.bottleneck_backward(&self.h0, qcaches[0].as_ref(), dm, g);
            } else {
                let (zp, ap) = steps[t - 1];
                let commit = &commits[t - 1];
                let dh = self.bottleneck_backward(&commit.h, qcaches[t].as_ref(), dm, g);
                carry = self.cell_backward(commit, &memories[t - 1], zp, ap, &dh, g);
            }
        }
        loss
    }
}
