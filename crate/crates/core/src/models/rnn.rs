//! Attention-pooled bidirectional LSTM classifier.
//!
//! ```text
//! x_t --> fwd LSTM --\
//!                     [h_f; h_b] --dropout--> additive attention --> context
//! x_t --> bwd LSTM --/                                                 |
//!                                        dropout --> dense --> softmax
//! ```
//!
//! Attention scores are `v . tanh(W_a h_t + b_a)`, softmaxed over the valid
//! frames only; padded frames get exactly zero weight and the LSTMs never
//! see them. All parameters live in one flat `Vec<f64>` addressed through
//! [`Layout`], which keeps the optimizer and the finite-difference check
//! simple. Gradients are derived by hand.

use std::borrow::Borrow;
use std::io::{Cursor, Read};
use std::ops::Range;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, Classifier};
use crate::error::{Error, Result};
use crate::preprocess::FeatureSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    /// Hidden units per direction.
    pub hidden_size: usize,
    pub attention_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: Option<usize>,
    pub seed: u64,
    pub num_classes: usize,
    pub mask_padding: bool,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            hidden_size: 128,
            attention_size: 128,
            dropout: 0.3,
            learning_rate: 3e-5,
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: None,
            seed: 0,
            num_classes: crate::landmark::NUM_CLASSES,
            mask_padding: true,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("rnn.dropout", "must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("rnn.learning_rate", "must be positive"));
        }
        if self.hidden_size == 0 || self.attention_size == 0 {
            return Err(Error::config(
                "rnn.hidden_size",
                "layer sizes must be positive",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("rnn.batch_size", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config(
                "rnn.num_classes",
                "need at least two classes",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnDims {
    pub input: usize,
    pub hidden: usize,
    pub attention: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmLayout {
    /// `4H x D`, gate blocks in order input, forget, cell, output.
    pub wx: Range<usize>,
    /// `4H x H`
    pub wh: Range<usize>,
    /// `4H`
    pub b: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl LstmLayout {
    /// Parameter range of one gate's input-weight rows.
    pub fn gate_wx(&self, gate: Gate, hidden: usize, input: usize) -> Range<usize> {
        let start = self.wx.start + gate as usize * hidden * input;
        start..start + hidden * input
    }
}

/// Offsets of every parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub fwd: LstmLayout,
    pub bwd: LstmLayout,
    /// `A x 2H`
    pub att_w: Range<usize>,
    pub att_b: Range<usize>,
    pub att_v: Range<usize>,
    /// `K x 2H`
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(d: &RnnDims) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let h4 = 4 * d.hidden;
        let lstm = |take: &mut dyn FnMut(usize) -> Range<usize>| LstmLayout {
            wx: take(h4 * d.input),
            wh: take(h4 * d.hidden),
            b: take(h4),
        };
        let fwd = lstm(&mut take);
        let bwd = lstm(&mut take);
        let att_w = take(d.attention * 2 * d.hidden);
        let att_b = take(d.attention);
        let att_v = take(d.attention);
        let out_w = take(d.classes * 2 * d.hidden);
        let out_b = take(d.classes);
        Layout {
            fwd,
            bwd,
            att_w,
            att_b,
            att_v,
            out_w,
            out_b,
            total: at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub dims: RnnDims,
    pub mask_padding: bool,
    pub params: Vec<f64>,
    layout: Layout,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for row-major `W` of shape `rows x x.len()`.
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T y`
fn matvec_t_add(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `G += y x^T`
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(x) {
            *o += yr * b;
        }
    }
}

struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, `4H`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn lstm_forward(
    params: &[f64],
    lay: &LstmLayout,
    h: usize,
    xs: &[&[f64]],
) -> (Vec<Step>, Vec<Vec<f64>>) {
    let wx = &params[lay.wx.clone()];
    let wh = &params[lay.wh.clone()];
    let b = &params[lay.b.clone()];
    let mut hp = vec![0.0; h];
    let mut cp = vec![0.0; h];
    let mut steps = Vec::with_capacity(xs.len());
    let mut outs = Vec::with_capacity(xs.len());
    for x in xs {
        let mut z = b.to_vec();
        matvec_add(wx, x, &mut z);
        matvec_add(wh, &hp, &mut z);
        let mut gates = z;
        for j in 0..h {
            gates[j] = sigmoid(gates[j]);
            gates[h + j] = sigmoid(gates[h + j]);
            gates[2 * h + j] = gates[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(gates[3 * h + j]);
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        for j in 0..h {
            c[j] = gates[h + j] * cp[j] + gates[j] * gates[2 * h + j];
            tanh_c[j] = c[j].tanh();
            hn[j] = gates[3 * h + j] * tanh_c[j];
        }
        steps.push(Step {
            h_prev: std::mem::replace(&mut hp, hn.clone()),
            c_prev: std::mem::replace(&mut cp, c),
            gates,
            tanh_c,
        });
        outs.push(hn);
    }
    (steps, outs)
}

/// Backpropagation through time; `dh[k]` is the loss gradient w.r.t. the
/// output of processing step `k`.
fn lstm_backward(
    params: &[f64],
    lay: &LstmLayout,
    h: usize,
    xs: &[&[f64]],
    steps: &[Step],
    dh: &[Vec<f64>],
    grads: &mut [f64],
) {
    let wh = &params[lay.wh.clone()];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for k in (0..steps.len()).rev() {
        let s = &steps[k];
        for j in 0..h {
            let dhj = dh[k][j] + dh_next[j];
            let (i, f, g, o) = (
                s.gates[j],
                s.gates[h + j],
                s.gates[2 * h + j],
                s.gates[3 * h + j],
            );
            let tc = s.tanh_c[j];
            let d_o = dhj * tc;
            let dc = dhj * o * (1.0 - tc * tc) + dc_next[j];
            dc_next[j] = dc * f;
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * s.c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - g * g);
            dz[3 * h + j] = d_o * o * (1.0 - o);
        }
        outer_add(&mut grads[lay.wx.clone()], &dz, xs[k]);
        outer_add(&mut grads[lay.wh.clone()], &dz, &s.h_prev);
        for (g, d) in grads[lay.b.clone()].iter_mut().zip(&dz) {
            *g += d;
        }
        dh_next.fill(0.0);
        matvec_t_add(wh, &dz, &mut dh_next);
    }
}

/// Dropout masks for one sample, already scaled by `1 / (1 - p)`.
struct Masks {
    hidden: Vec<Vec<f64>>,
    context: Vec<f64>,
}

impl Masks {
    fn draw(rng: &mut impl Rng, steps: usize, width: usize, p: f64) -> Self {
        let keep = 1.0 / (1.0 - p);
        let mut draw = || if rng.gen::<f64>() < p { 0.0 } else { keep };
        let hidden = (0..steps)
            .map(|_| (0..width).map(|_| draw()).collect())
            .collect();
        let context = (0..width).map(|_| draw()).collect();
        Masks { hidden, context }
    }
}

struct Pass {
    fwd: Vec<Step>,
    bwd: Vec<Step>,
    /// Concatenated, dropped-out hidden states per time step.
    hcat: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    ctx_dropped: Vec<f64>,
    probs: Vec<f64>,
}

impl RnnModel {
    /// Fresh model with seeded uniform initialization.
    pub fn new(input: usize, config: &RnnConfig) -> Self {
        let dims = RnnDims {
            input,
            hidden: config.hidden_size,
            attention: config.attention_size,
            classes: config.num_classes,
        };
        let layout = Layout::new(&dims);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; layout.total];
        let k = 1.0 / (dims.hidden as f64).sqrt();
        for lay in [&layout.fwd, &layout.bwd] {
            for r in [lay.wx.clone(), lay.wh.clone(), lay.b.clone()] {
                params[r].iter_mut().for_each(|p| *p = rng.gen_range(-k..k));
            }
            let forget = lay.b.start + dims.hidden..lay.b.start + 2 * dims.hidden;
            params[forget].iter_mut().for_each(|p| *p += 1.0);
        }
        let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let ka = xavier(2 * dims.hidden, dims.attention);
        params[layout.att_w.clone()]
            .iter_mut()
            .for_each(|p| *p = rng.gen_range(-ka..ka));
        let kv = xavier(dims.attention, 1);
        params[layout.att_v.clone()]
            .iter_mut()
            .for_each(|p| *p = rng.gen_range(-kv..kv));
        let ko = xavier(2 * dims.hidden, dims.classes);
        params[layout.out_w.clone()]
            .iter_mut()
            .for_each(|p| *p = rng.gen_range(-ko..ko));
        RnnModel {
            dims,
            mask_padding: config.mask_padding,
            params,
            layout,
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn steps_of(&self, seq: &FeatureSequence) -> usize {
        if self.mask_padding {
            seq.valid_len
        } else {
            seq.len()
        }
    }

    fn check_input(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.width() != self.dims.input {
            return Err(Error::Length {
                expected: self.dims.input,
                got: seq.width(),
            });
        }
        Ok(())
    }

    fn forward(&self, params: &[f64], seq: &FeatureSequence, masks: Option<&Masks>) -> Pass {
        let d = &self.dims;
        let lay = &self.layout;
        let h = d.hidden;
        let t_len = self.steps_of(seq);
        let xs: Vec<&[f64]> = seq.frames[..t_len].iter().map(Vec::as_slice).collect();
        let (fwd, hf) = lstm_forward(params, &lay.fwd, h, &xs);
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let (bwd, hb) = lstm_forward(params, &lay.bwd, h, &rev);

        let mut hcat: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                let mut v = hf[t].clone();
                v.extend_from_slice(&hb[t_len - 1 - t]);
                v
            })
            .collect();
        if let Some(m) = masks {
            for (v, mk) in hcat.iter_mut().zip(&m.hidden) {
                v.iter_mut().zip(mk).for_each(|(a, b)| *a *= b);
            }
        }

        let att_w = &params[lay.att_w.clone()];
        let att_b = &params[lay.att_b.clone()];
        let att_v = &params[lay.att_v.clone()];
        let mut u = Vec::with_capacity(t_len);
        let mut scores = Vec::with_capacity(t_len);
        for ht in &hcat {
            let mut a = att_b.to_vec();
            matvec_add(att_w, ht, &mut a);
            a.iter_mut().for_each(|v| *v = v.tanh());
            scores.push(a.iter().zip(att_v).map(|(x, y)| x * y).sum::<f64>());
            u.push(a);
        }
        let alpha = softmax(&scores);
        let mut ctx = vec![0.0; 2 * h];
        for (ht, &a) in hcat.iter().zip(&alpha) {
            ctx.iter_mut().zip(ht).for_each(|(c, x)| *c += a * x);
        }
        if let Some(m) = masks {
            ctx.iter_mut().zip(&m.context).for_each(|(a, b)| *a *= b);
        }
        let mut logits = params[lay.out_b.clone()].to_vec();
        matvec_add(&params[lay.out_w.clone()], &ctx, &mut logits);
        let probs = softmax(&logits);
        Pass {
            fwd,
            bwd,
            hcat,
            u,
            alpha,
            ctx_dropped: ctx,
            probs,
        }
    }

    /// Loss and its gradient for one labelled sample.
    fn backward(
        &self,
        params: &[f64],
        seq: &FeatureSequence,
        label: usize,
        masks: Option<&Masks>,
        grads: &mut [f64],
    ) -> f64 {
        let d = &self.dims;
        let lay = &self.layout;
        let h = d.hidden;
        let pass = self.forward(params, seq, masks);
        let t_len = pass.hcat.len();
        let loss = -pass.probs[label].max(f64::MIN_POSITIVE).ln();

        let mut dlogits = pass.probs.clone();
        dlogits[label] -= 1.0;
        outer_add(&mut grads[lay.out_w.clone()], &dlogits, &pass.ctx_dropped);
        grads[lay.out_b.clone()]
            .iter_mut()
            .zip(&dlogits)
            .for_each(|(g, v)| *g += v);
        let mut dctx = vec![0.0; 2 * h];
        matvec_t_add(&params[lay.out_w.clone()], &dlogits, &mut dctx);
        if let Some(m) = masks {
            dctx.iter_mut().zip(&m.context).for_each(|(a, b)| *a *= b);
        }

        // attention pooling
        let att_w = &params[lay.att_w.clone()];
        let att_v = &params[lay.att_v.clone()];
        let dalpha: Vec<f64> = pass
            .hcat
            .iter()
            .map(|ht| ht.iter().zip(&dctx).map(|(a, b)| a * b).sum())
            .collect();
        let mean: f64 = pass.alpha.iter().zip(&dalpha).map(|(a, b)| a * b).sum();
        let mut dh: Vec<Vec<f64>> = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let de = pass.alpha[t] * (dalpha[t] - mean);
            let mut dht: Vec<f64> = dctx.iter().map(|v| v * pass.alpha[t]).collect();
            let ut = &pass.u[t];
            let da: Vec<f64> = ut
                .iter()
                .zip(att_v)
                .map(|(u, v)| de * v * (1.0 - u * u))
                .collect();
            grads[lay.att_v.clone()]
                .iter_mut()
                .zip(ut)
                .for_each(|(g, u)| *g += de * u);
            outer_add(&mut grads[lay.att_w.clone()], &da, &pass.hcat[t]);
            grads[lay.att_b.clone()]
                .iter_mut()
                .zip(&da)
                .for_each(|(g, v)| *g += v);
            matvec_t_add(att_w, &da, &mut dht);
            if let Some(m) = masks {
                dht.iter_mut().zip(&m.hidden[t]).for_each(|(a, b)| *a *= b);
            }
            dh.push(dht);
        }

        let xs: Vec<&[f64]> = seq.frames[..t_len].iter().map(Vec::as_slice).collect();
        let dhf: Vec<Vec<f64>> = dh.iter().map(|v| v[..h].to_vec()).collect();
        lstm_backward(params, &lay.fwd, h, &xs, &pass.fwd, &dhf, grads);
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let dhb: Vec<Vec<f64>> = dh.iter().rev().map(|v| v[h..].to_vec()).collect();
        lstm_backward(params, &lay.bwd, h, &rev, &pass.bwd, &dhb, grads);
        loss
    }

    /// Loss and analytic gradient without dropout.
    pub fn loss_and_gradient(&self, seq: &FeatureSequence, label: usize) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.layout.total];
        let loss = self.backward(&self.params, seq, label, None, &mut g);
        (loss, g)
    }

    pub fn loss(&self, seq: &FeatureSequence, label: usize) -> f64 {
        let pass = self.forward(&self.params, seq, None);
        -pass.probs[label].max(f64::MIN_POSITIVE).ln()
    }

    /// Mean cross-entropy in evaluation mode.
    pub fn mean_loss<S: Borrow<FeatureSequence> + Sync>(
        &self,
        seqs: &[S],
        labels: &[usize],
    ) -> f64 {
        let total: f64 = seqs
            .par_iter()
            .zip(labels)
            .map(|(s, &y)| self.loss(s.borrow(), y))
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total / seqs.len().max(1) as f64
    }

    /// Attention weight per input frame; masked frames get 0.
    pub fn attention_weights(&self, seq: &FeatureSequence) -> Result<Vec<f64>> {
        self.check_input(seq)?;
        let mut w = self.forward(&self.params, seq, None).alpha;
        w.resize(seq.len(), 0.0);
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// `RNN1 | u32 version | u32 input | u32 hidden | u32 attention |
    /// u32 classes | u8 mask_padding | f64 params...`
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(25 + 8 * self.params.len());
        out.extend_from_slice(b"RNN1");
        let d = &self.dims;
        for v in [1, d.input, d.hidden, d.attention, d.classes] {
            out.write_u32::<LittleEndian>(v as u32)
                .expect("write to Vec");
        }
        out.write_u8(self.mask_padding as u8).expect("write to Vec");
        for &p in &self.params {
            out.write_f64::<LittleEndian>(p).expect("write to Vec");
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let trunc = |_| Error::Format("RNN1 file truncated".into());
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic).map_err(trunc)?;
        if &magic != b"RNN1" {
            return Err(Error::Format(format!("bad RNN1 magic {magic:?}")));
        }
        let mut next = || {
            cur.read_u32::<LittleEndian>()
                .map(|v| v as usize)
                .map_err(trunc)
        };
        let version = next()?;
        if version != 1 {
            return Err(Error::Format(format!("unsupported RNN1 version {version}")));
        }
        let dims = RnnDims {
            input: next()?,
            hidden: next()?,
            attention: next()?,
            classes: next()?,
        };
        let mask_padding = cur.read_u8().map_err(trunc)? != 0;
        let layout = Layout::new(&dims);
        let mut params = vec![0.0; layout.total];
        cur.read_f64_into::<LittleEndian>(&mut params)
            .map_err(trunc)?;
        if cur.position() as usize != bytes.len() {
            return Err(Error::Format("trailing bytes after RNN1 model".into()));
        }
        Ok(RnnModel {
            dims,
            mask_padding,
            params,
            layout,
        })
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Class probabilities for one (padded, masked) sequence.
pub fn predict_rnn(model: &RnnModel, seq: &FeatureSequence) -> Result<Vec<f64>> {
    model.check_input(seq)?;
    Ok(model.forward(&model.params, seq, None).probs)
}

impl Classifier<FeatureSequence> for RnnModel {
    fn classify(&self, x: &FeatureSequence) -> usize {
        argmax(&predict_rnn(self, x).expect("input width matches model"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples per parallel work unit. Fixed so the summation order, and hence
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Trains with Adam on softmax cross-entropy.
///
/// With `config.early_stop_patience = Some(p)` and a validation set,
/// training stops once `p` epochs pass without a new best validation loss
/// and the best parameters are restored.
pub fn train_rnn<S: Borrow<FeatureSequence> + Sync>(
    train: &[S],
    labels: &[usize],
    validation: Option<(&[S], &[usize])>,
    config: &RnnConfig,
) -> Result<(RnnModel, TrainHistory)> {
    config.validate()?;
    let first = train.first().ok_or(Error::EmptyInput("rnn training set"))?;
    let model = RnnModel::new(first.borrow().width(), config);
    train_rnn_from(model, train, labels, validation, config)
}

/// Continues training an existing model.
pub fn train_rnn_from<S: Borrow<FeatureSequence> + Sync>(
    mut model: RnnModel,
    train: &[S],
    labels: &[usize],
    validation: Option<(&[S], &[usize])>,
    config: &RnnConfig,
) -> Result<(RnnModel, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("rnn training set"));
    }
    if train.len() != labels.len() {
        return Err(Error::Length {
            expected: train.len(),
            got: labels.len(),
        });
    }
    for s in train {
        model.check_input(s.borrow())?;
    }
    for s in validation.iter().flat_map(|v| v.0.iter()) {
        model.check_input(s.borrow())?;
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.dims.classes) {
        return Err(Error::Label(format!(
            "class {bad} >= {}",
            model.dims.classes
        )));
    }

    let mut adam = Adam::new(model.params.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let width = 2 * model.dims.hidden;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let m = &model;
            let partials: Vec<(f64, Vec<f64>)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut g = vec![0.0; m.params.len()];
                    let mut loss = 0.0;
                    for &i in chunk {
                        let seq: &FeatureSequence = train[i].borrow();
                        let masks = (config.dropout > 0.0).then(|| {
                            let mut r = ChaCha8Rng::seed_from_u64(mix_seed(
                                config.seed,
                                epoch as u64,
                                i as u64,
                            ));
                            Masks::draw(&mut r, m.steps_of(seq), width, config.dropout)
                        });
                        loss += m.backward(&m.params, seq, labels[i], masks.as_ref(), &mut g);
                    }
                    (loss, g)
                })
                .collect();
            let mut grads = vec![0.0; model.params.len()];
            let mut batch_loss = 0.0;
            for (l, g) in partials {
                batch_loss += l;
                grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut model.params, &grads);
            epoch_loss += batch_loss;
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        history.epochs_run = epoch;

        if let Some((vx, vy)) = validation {
            let vl = model.mean_loss(vx, vy);
            if !vl.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            history.val_loss.push(vl);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, model.params.clone()));
                history.best_epoch = Some(epoch);
            }
            if let (Some(p), Some(be)) = (config.early_stop_patience, history.best_epoch) {
                if epoch - be >= p {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }
    if history.stopped_early {
        if let Some((_, params)) = best {
            model.params = params;
        }
    }
    Ok((model, history))
}

/// Largest relative difference between analytic and central-difference
/// gradients over every parameter.
pub fn gradient_check(model: &RnnModel, seq: &FeatureSequence, label: usize) -> f64 {
    gradient_check_with(model, seq, label, |_, _| {})
}

/// As [`gradient_check`], but lets the caller tamper with the analytic
/// gradient before comparison.
pub fn gradient_check_with(
    model: &RnnModel,
    seq: &FeatureSequence,
    label: usize,
    tamper: impl FnOnce(&mut [f64], &Layout),
) -> f64 {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let (_, mut analytic) = model.loss_and_gradient(seq, label);
    tamper(&mut analytic, &model.layout);
    let numeric: Vec<f64> = (0..model.params.len())
        .into_par_iter()
        .map(|i| {
            let mut p = model.params.clone();
            p[i] += STEP;
            let up = model.forward(&p, seq, None).probs[label];
            p[i] -= 2.0 * STEP;
            let down = model.forward(&p, seq, None).probs[label];
            (-up.ln() + down.ln()) / (2.0 * STEP)
        })
        .collect();
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(FLOOR);
            if err.is_nan() {
                f64::INFINITY
            } else {
                err
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::{SignerId, WordClass};

    pub(crate) fn sample(values: &[[f64; 3]], valid: usize) -> FeatureSequence {
        FeatureSequence {
            frames: values.iter().map(|v| v.to_vec()).collect(),
            valid_len: valid,
            word: WordClass::from_index(0).unwrap(),
            signer: SignerId(1),
        }
    }

    fn tiny() -> RnnConfig {
        RnnConfig {
            hidden_size: 4,
            attention_size: 3,
            num_classes: 3,
            dropout: 0.0,
            ..RnnConfig::default()
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let d = RnnDims {
            input: 5,
            hidden: 4,
            attention: 3,
            classes: 2,
        };
        let l = Layout::new(&d);
        assert_eq!(l.fwd.wx, 0..80);
        assert_eq!(l.bwd.wx.start, l.fwd.b.end);
        assert_eq!(l.out_b.end, l.total);
        assert_eq!(l.total, 2 * (80 + 64 + 16) + 24 + 3 + 3 + 16 + 2);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = RnnModel::new(3, &tiny());
        let s = sample(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.0, 0.0]], 2);
        let p = predict_rnn(&m, &s).unwrap();
        assert_eq!(p.len(), 3);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn masked_frames_get_zero_attention() {
        let m = RnnModel::new(3, &tiny());
        let s = sample(
            &[
                [0.1, 0.2, 0.3],
                [1.0, -1.0, 0.5],
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0],
            ],
            2,
        );
        let w = m.attention_weights(&s).unwrap();
        assert_eq!(&w[2..], &[0.0, 0.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unmasked_mode_attends_to_padding() {
        let cfg = RnnConfig {
            mask_padding: false,
            ..tiny()
        };
        let m = RnnModel::new(3, &cfg);
        let s = sample(&[[0.1, 0.2, 0.3], [0.0, 0.0, 0.0]], 1);
        let w = m.attention_weights(&s).unwrap();
        assert!(w[1] > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = RnnModel::new(3, &tiny());
        let s = sample(
            &[
                [0.5, -0.2, 0.3],
                [0.9, 0.1, -0.4],
                [-0.3, 0.8, 0.2],
                [0.0, 0.0, 0.0],
            ],
            3,
        );
        let err = gradient_check(&m, &s, 1);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn bytes_round_trip() {
        let m = RnnModel::new(3, &tiny());
        let back = RnnModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert!(RnnModel::from_bytes(&m.to_bytes()[..40]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = RnnConfig {
            dropout: 1.0,
            ..RnnConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
        let bad = RnnConfig {
            learning_rate: 0.0,
            ..RnnConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = RnnConfig {
            learning_rate: 1e-3,
            max_epochs: 3,
            ..tiny()
        };
        let s = vec![sample(&[[f64::NAN, 0.0, 0.0]], 1)];
        let err = train_rnn(&s, &[0], None, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1 }));
    }
}
