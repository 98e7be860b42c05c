//! Contrastive training of the projection head.
//!
//! For a batch of `B` (anchor, positive) pairs the score matrix is
//! `S_ij = score(E(a_i), E(p_j))` and the loss is the symmetric InfoNCE
//! `½ [CE(S/τ, y) + CE(Sᵀ/τ, y)]` with `y_i = i`. Off-diagonal cells act as
//! negatives; accidental same-group collisions are not filtered.
//!
//! Only `W` is trained. Gradients are analytic, in f64: softmax-CE into `S`,
//! `S` into residue embeddings (MaxSim routes each query row's gradient
//! through its lowest-index argmax), then through `e = u/‖u‖` and `u = W h`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::PairSpec;
use crate::scorer::{ScoreKind, ScoreMatrix};
use crate::types::{glorot_weights, HiddenSet, ProjectionHead, DEFAULT_DIM, ZERO_NORM_EPS};

/// Anchor/positive pair drawn from one group.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub anchor: Arc<HiddenSet>,
    pub positive: Arc<HiddenSet>,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub temperature: f64,
    /// Output dimension `D` of the head.
    pub d_out: usize,
    /// Score used inside the loss: MaxSim, or pooled cosine for the
    /// uni-vector ablation.
    pub objective: ScoreKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 3,
            peak_lr: 2e-5,
            warmup_frac: 0.1,
            weight_decay: 0.01,
            grad_clip_norm: 1.0,
            temperature: 1.0,
            d_out: DEFAULT_DIM,
            objective: ScoreKind::MaxSim,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InsufficientPairs {
                need: 2,
                got: self.batch_size,
            });
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("temperature", self.temperature)?;
        positive("peak learning rate", self.peak_lr)?;
        positive("gradient clip norm", self.grad_clip_norm)?;
        if self.epochs == 0 || self.d_out == 0 {
            return Err(Error::Invalid("epochs and d_out must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) || !(self.weight_decay >= 0.0) {
            return Err(Error::Invalid(
                "warmup_frac must be in [0, 1) and weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Projection weights in f64, row-major `d_out x h_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub values: Vec<f64>,
    pub d_out: usize,
    pub h_in: usize,
}

impl HeadWeights {
    pub fn glorot(d_out: usize, h_in: usize, seed: u64) -> Self {
        Self {
            values: glorot_weights(d_out, h_in, seed),
            d_out,
            h_in,
        }
    }

    pub fn from_head(head: &ProjectionHead) -> Self {
        Self {
            values: head.weights().iter().map(|&w| f64::from(w)).collect(),
            d_out: head.d_out(),
            h_in: head.h_in(),
        }
    }

    pub fn to_head(&self) -> Result<ProjectionHead> {
        ProjectionHead::new(
            self.values.iter().map(|&w| w as f32).collect(),
            self.d_out,
            self.h_in,
        )
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric InfoNCE over a row-major `b x b` score matrix, with `dL/dS`.
pub fn infonce_with_grad(scores: &[f64], b: usize, tau: f64) -> Result<(f64, Vec<f64>)> {
    if b == 0 || scores.len() != b * b {
        return Err(Error::DimensionMismatch {
            expected: b * b,
            got: scores.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!(
            "temperature must be > 0, got {tau}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("score matrix".into()));
    }
    let z = |i: usize, j: usize| scores[i * b + j] / tau;
    let row_lse: Vec<f64> = (0..b)
        .map(|i| log_sum_exp((0..b).map(move |j| z(i, j))))
        .collect();
    let col_lse: Vec<f64> = (0..b)
        .map(|j| log_sum_exp((0..b).map(move |i| z(i, j))))
        .collect();
    let row_ce: f64 = (0..b).map(|i| row_lse[i] - z(i, i)).sum::<f64>() / b as f64;
    let col_ce: f64 = (0..b).map(|j| col_lse[j] - z(j, j)).sum::<f64>() / b as f64;
    let loss = 0.5 * (row_ce + col_ce);

    let scale = 1.0 / (2.0 * b as f64 * tau);
    let mut grad = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            let diag = if i == j { 2.0 } else { 0.0 };
            let p_row = (z(i, j) - row_lse[i]).exp();
            let p_col = (z(i, j) - col_lse[j]).exp();
            grad[i * b + j] = scale * (p_row + p_col - diag);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("infonce loss".into()));
    }
    Ok((loss, grad))
}

/// Symmetric InfoNCE over a row-major `b x b` score matrix.
pub fn infonce_values(scores: &[f64], b: usize, tau: f64) -> Result<f64> {
    Ok(infonce_with_grad(scores, b, tau)?.0)
}

/// Symmetric InfoNCE of a score matrix against its diagonal.
pub fn infonce_loss(s: &ScoreMatrix, tau: f64) -> Result<f64> {
    if s.rows() != s.cols() {
        return Err(Error::DimensionMismatch {
            expected: s.rows(),
            got: s.cols(),
        });
    }
    let values: Vec<f64> = s.values().iter().map(|&v| f64::from(v)).collect();
    infonce_values(&values, s.rows(), tau)
}

/// f64 forward pass of one hidden set through the head.
struct Projected {
    /// Valid hidden rows, `t x h`.
    hidden: Vec<f64>,
    /// Unit embeddings, `t x d`.
    emb: Vec<f64>,
    /// `‖W h_t‖` per row.
    norms: Vec<f64>,
    t: usize,
}

fn forward(h: &HiddenSet, w: &HeadWeights) -> Result<Projected> {
    if h.dim() != w.h_in {
        return Err(Error::DimensionMismatch {
            expected: w.h_in,
            got: h.dim(),
        });
    }
    let (d, hd) = (w.d_out, w.h_in);
    let hidden: Vec<f64> = h
        .valid_rows()
        .flat_map(|(_, r)| r.iter().map(|&v| f64::from(v)))
        .collect();
    let t = hidden.len() / hd;
    if t == 0 {
        return Err(Error::EmptySet(h.protein_id().to_owned()));
    }
    let mut emb = vec![0.0; t * d];
    let mut norms = vec![0.0; t];
    for r in 0..t {
        let hrow = &hidden[r * hd..(r + 1) * hd];
        let out = &mut emb[r * d..(r + 1) * d];
        for (k, o) in out.iter_mut().enumerate() {
            *o = w.values[k * hd..(k + 1) * hd]
                .iter()
                .zip(hrow)
                .map(|(a, b)| a * b)
                .sum();
        }
        let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n >= ZERO_NORM_EPS) {
            return Err(Error::ZeroNormRow { row: r });
        }
        out.iter_mut().for_each(|v| *v /= n);
        norms[r] = n;
    }
    Ok(Projected {
        hidden,
        emb,
        norms,
        t,
    })
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// MaxSim in f64 with the lowest-index argmax per query row.
fn maxsim_argmax(q: &Projected, c: &Projected, d: usize) -> (f64, Vec<usize>) {
    let mut total = 0.0;
    let mut arg = Vec::with_capacity(q.t);
    for i in 0..q.t {
        let qi = &q.emb[i * d..(i + 1) * d];
        let (mut best, mut best_j) = (f64::NEG_INFINITY, 0);
        for j in 0..c.t {
            let s = dot64(qi, &c.emb[j * d..(j + 1) * d]);
            if s > best {
                best = s;
                best_j = j;
            }
        }
        total += best;
        arg.push(best_j);
    }
    (total, arg)
}

fn pooled(p: &Projected, d: usize) -> (Vec<f64>, f64) {
    let mut mean = vec![0.0; d];
    for r in 0..p.t {
        for (m, v) in mean.iter_mut().zip(&p.emb[r * d..(r + 1) * d]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= p.t as f64);
    let n = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    mean.iter_mut().for_each(|m| *m /= n);
    (mean, n)
}

struct BatchForward {
    anchors: Vec<Projected>,
    positives: Vec<Projected>,
    scores: Vec<f64>,
    /// Per cell, the argmax candidate row for every anchor row (MaxSim only).
    argmax: Vec<Vec<usize>>,
    /// Pooled unit vectors and pre-normalization norms (pooled only).
    pooled_a: Vec<(Vec<f64>, f64)>,
    pooled_p: Vec<(Vec<f64>, f64)>,
}

fn batch_forward(batch: &[TrainPair], w: &HeadWeights, kind: ScoreKind) -> Result<BatchForward> {
    let b = batch.len();
    let d = w.d_out;
    let anchors = batch
        .par_iter()
        .map(|p| forward(&p.anchor, w))
        .collect::<Result<Vec<_>>>()?;
    let positives = batch
        .par_iter()
        .map(|p| forward(&p.positive, w))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BatchForward {
        anchors,
        positives,
        scores: Vec::new(),
        argmax: Vec::new(),
        pooled_a: Vec::new(),
        pooled_p: Vec::new(),
    };
    match kind {
        ScoreKind::MaxSim => {
            let cells: Vec<(f64, Vec<usize>)> = (0..b * b)
                .into_par_iter()
                .map(|c| maxsim_argmax(&out.anchors[c / b], &out.positives[c % b], d))
                .collect();
            let (scores, argmax) = cells.into_iter().unzip();
            out.scores = scores;
            out.argmax = argmax;
        }
        ScoreKind::Pooled => {
            out.pooled_a = out.anchors.iter().map(|p| pooled(p, d)).collect();
            out.pooled_p = out.positives.iter().map(|p| pooled(p, d)).collect();
            if out
                .pooled_a
                .iter()
                .chain(&out.pooled_p)
                .any(|(_, n)| !(*n >= ZERO_NORM_EPS))
            {
                return Err(Error::ZeroNormRow { row: 0 });
            }
            for (pa, _) in &out.pooled_a {
                for (pp, _) in &out.pooled_p {
                    out.scores.push(dot64(pa, pp));
                }
            }
        }
    }
    Ok(out)
}

/// Loss of one batch under head `w` (forward only).
pub fn infonce_objective(
    batch: &[TrainPair],
    w: &HeadWeights,
    tau: f64,
    kind: ScoreKind,
) -> Result<f64> {
    let fwd = batch_forward(batch, w, kind)?;
    infonce_values(&fwd.scores, batch.len(), tau)
}

/// Backpropagates `dL/de` of one set into a `d x h` weight gradient.
fn weight_grad(p: &Projected, g_emb: &[f64], d: usize, hd: usize) -> Vec<f64> {
    let mut grad = vec![0.0; d * hd];
    let mut g_u = vec![0.0; d];
    for r in 0..p.t {
        let e = &p.emb[r * d..(r + 1) * d];
        let g = &g_emb[r * d..(r + 1) * d];
        let proj = dot64(g, e);
        for k in 0..d {
            g_u[k] = (g[k] - proj * e[k]) / p.norms[r];
        }
        let h = &p.hidden[r * hd..(r + 1) * hd];
        for k in 0..d {
            if g_u[k] == 0.0 {
                continue;
            }
            for (gw, hv) in grad[k * hd..(k + 1) * hd].iter_mut().zip(h) {
                *gw += g_u[k] * hv;
            }
        }
    }
    grad
}

/// Spreads a gradient on a pooled unit vector back onto the residue rows.
fn unpool_grad(p: &Projected, pooled: &(Vec<f64>, f64), g_unit: &[f64], d: usize) -> Vec<f64> {
    let (unit, norm) = pooled;
    let proj = dot64(g_unit, unit);
    let g_mean: Vec<f64> = g_unit
        .iter()
        .zip(unit)
        .map(|(g, u)| (g - proj * u) / (norm * p.t as f64))
        .collect();
    let mut g_emb = vec![0.0; p.t * d];
    for r in 0..p.t {
        g_emb[r * d..(r + 1) * d].copy_from_slice(&g_mean);
    }
    g_emb
}

/// Loss and analytic `dL/dW` for one batch.
pub fn infonce_grad_w(
    batch: &[TrainPair],
    w: &HeadWeights,
    tau: f64,
    kind: ScoreKind,
) -> Result<(f64, Vec<f64>)> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::InsufficientPairs { need: 2, got: b });
    }
    let (d, hd) = (w.d_out, w.h_in);
    let fwd = batch_forward(batch, w, kind)?;
    let (loss, g_s) = infonce_with_grad(&fwd.scores, b, tau)?;

    // Gradients with respect to every embedding row, one set per task and a
    // fixed summation order inside each, so results do not depend on threads.
    let (g_anchor, g_positive): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match kind {
        ScoreKind::MaxSim => {
            let ga = (0..b)
                .into_par_iter()
                .map(|i| {
                    let a = &fwd.anchors[i];
                    let mut g = vec![0.0; a.t * d];
                    for j in 0..b {
                        let c = g_s[i * b + j];
                        let pos = &fwd.positives[j];
                        for (r, &s) in fwd.argmax[i * b + j].iter().enumerate() {
                            for (gv, pv) in g[r * d..(r + 1) * d]
                                .iter_mut()
                                .zip(&pos.emb[s * d..(s + 1) * d])
                            {
                                *gv += c * pv;
                            }
                        }
                    }
                    g
                })
                .collect();
            let gp = (0..b)
                .into_par_iter()
                .map(|j| {
                    let pos = &fwd.positives[j];
                    let mut g = vec![0.0; pos.t * d];
                    for i in 0..b {
                        let c = g_s[i * b + j];
                        let a = &fwd.anchors[i];
                        for (r, &s) in fwd.argmax[i * b + j].iter().enumerate() {
                            for (gv, av) in g[s * d..(s + 1) * d]
                                .iter_mut()
                                .zip(&a.emb[r * d..(r + 1) * d])
                            {
                                *gv += c * av;
                            }
                        }
                    }
                    g
                })
                .collect();
            (ga, gp)
        }
        ScoreKind::Pooled => {
            let ga = (0..b)
                .into_par_iter()
                .map(|i| {
                    let mut g_unit = vec![0.0; d];
                    for j in 0..b {
                        let c = g_s[i * b + j];
                        for (gv, pv) in g_unit.iter_mut().zip(&fwd.pooled_p[j].0) {
                            *gv += c * pv;
                        }
                    }
                    unpool_grad(&fwd.anchors[i], &fwd.pooled_a[i], &g_unit, d)
                })
                .collect();
            let gp = (0..b)
                .into_par_iter()
                .map(|j| {
                    let mut g_unit = vec![0.0; d];
                    for i in 0..b {
                        let c = g_s[i * b + j];
                        for (gv, av) in g_unit.iter_mut().zip(&fwd.pooled_a[i].0) {
                            *gv += c * av;
                        }
                    }
                    unpool_grad(&fwd.positives[j], &fwd.pooled_p[j], &g_unit, d)
                })
                .collect();
            (ga, gp)
        }
    };

    let partials: Vec<Vec<f64>> = fwd
        .anchors
        .par_iter()
        .zip(g_anchor.par_iter())
        .chain(fwd.positives.par_iter().zip(g_positive.par_iter()))
        .map(|(p, g)| weight_grad(p, g, d, hd))
        .collect();
    let mut grad = vec![0.0; d * hd];
    for part in &partials {
        for (acc, v) in grad.iter_mut().zip(part) {
            *acc += v;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("weight gradient".into()));
    }
    Ok((loss, grad))
}

/// Number of warmup steps for a run of `total_steps`.
pub fn warmup_steps(total_steps: usize, warmup_frac: f64) -> usize {
    ((warmup_frac * total_steps as f64).round() as usize).clamp(1, total_steps.max(1))
}

/// One-cycle learning rate: linear ramp to `peak_lr` ending at step
/// `warmup - 1` (step 0 gets `peak / warmup`), then cosine decay to
/// `peak / 1e4` at the final step.
pub fn onecycle_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let peak = cfg.peak_lr;
    let floor = peak / 1e4;
    let warm = warmup_steps(total_steps, cfg.warmup_frac);
    if step + 1 < warm {
        return peak * (step + 1) as f64 / warm as f64;
    }
    let span = total_steps.saturating_sub(warm);
    if span == 0 {
        return peak;
    }
    let progress = ((step + 1 - warm) as f64 / span as f64).min(1.0);
    floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Scales `grad` in place so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// AdamW with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(n: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *p -= lr * self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: HeadWeights,
    pub log: Vec<StepRecord>,
}

impl TrainOutcome {
    pub fn head(&self) -> Result<ProjectionHead> {
        self.weights.to_head()
    }

    /// Mean loss of each epoch, in order.
    pub fn epoch_losses(&self) -> Vec<f64> {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in &self.log {
            let e = sums.entry(r.epoch).or_default();
            e.0 += r.loss;
            e.1 += 1;
        }
        sums.values().map(|(s, n)| s / *n as f64).collect()
    }

    /// `step\tlr\tloss\tgrad_norm` lines.
    pub fn log_tsv(&self) -> String {
        self.log
            .iter()
            .map(|r| format!("{}\t{:e}\t{}\t{}\n", r.step, r.lr, r.loss, r.grad_norm))
            .collect()
    }
}

fn batches(n: usize, batch_size: usize) -> usize {
    let full = n / batch_size;
    full + usize::from(n % batch_size >= 2)
}

fn run_training<F>(
    n_pairs: usize,
    h_in: usize,
    cfg: &TrainConfig,
    mut epoch_pairs: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> Vec<TrainPair>,
{
    let steps_per_epoch = batches(n_pairs, cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut weights = HeadWeights::glorot(cfg.d_out, h_in, cfg.seed);
    let mut opt = AdamW::new(weights.values.len(), cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut log = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut pairs = epoch_pairs(epoch, &mut rng);
        pairs.shuffle(&mut rng);
        for chunk in pairs.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let lr = onecycle_lr(step, total, cfg);
            let (loss, mut grad) = infonce_grad_w(chunk, &weights, cfg.temperature, cfg.objective)
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::TrainingDiverged { step },
                    other => other,
                })?;
            let grad_norm = clip_grad_norm(&mut grad, cfg.grad_clip_norm);
            opt.step(&mut weights.values, &grad, lr);
            if weights.values.iter().any(|w| !w.is_finite()) {
                return Err(Error::TrainingDiverged { step });
            }
            log::debug!("step {step} lr {lr:.3e} loss {loss:.6} |g| {grad_norm:.4}");
            log.push(StepRecord {
                step,
                epoch,
                lr,
                loss,
                grad_norm,
            });
            step += 1;
        }
    }
    Ok(TrainOutcome { weights, log })
}

fn check_pairs(pairs: &[TrainPair], cfg: &TrainConfig) -> Result<usize> {
    cfg.validate()?;
    if pairs.len() < cfg.batch_size {
        return Err(Error::InsufficientPairs {
            need: cfg.batch_size,
            got: pairs.len(),
        });
    }
    let h_in = pairs[0].anchor.dim();
    for p in pairs {
        for s in [&p.anchor, &p.positive] {
            if s.dim() != h_in {
                return Err(Error::DimensionMismatch {
                    expected: h_in,
                    got: s.dim(),
                });
            }
        }
    }
    Ok(h_in)
}

/// Trains a head on a fixed list of pairs, reshuffled every epoch.
pub fn train_projection(pairs: &[TrainPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let h_in = check_pairs(pairs, cfg)?;
    run_training(pairs.len(), h_in, cfg, |_, _| pairs.to_vec())
}

/// Trains a head on labeled sets, drawing a fresh positive for every anchor
/// each epoch (see [`sample_pairs`]).
pub fn train_projection_grouped(
    sets: &[Arc<HiddenSet>],
    groups: &[String],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if sets.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            got: groups.len(),
        });
    }
    let ids: Vec<(&str, &str)> = sets
        .iter()
        .zip(groups)
        .map(|(s, g)| (s.protein_id(), g.as_str()))
        .collect();
    let index: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (*id, i))
        .collect();
    let resolve = |specs: Vec<PairSpec>| -> Vec<TrainPair> {
        specs
            .into_iter()
            .map(|s| TrainPair {
                anchor: Arc::clone(&sets[index[s.anchor.as_str()]]),
                positive: Arc::clone(&sets[index[s.positive.as_str()]]),
                group: s.group,
            })
            .collect()
    };
    let first = resolve(sample_pairs(&ids, cfg.seed)?);
    let h_in = check_pairs(&first, cfg)?;
    let n = first.len();
    let mut first = Some(first);
    run_training(n, h_in, cfg, |epoch, rng| match first.take() {
        Some(p) if epoch == 0 => p,
        _ => resolve(sample_pairs(&ids, rng.gen()).expect("pairs sampled once already")),
    })
}

/// One positive per anchor, drawn uniformly from the anchor's other group
/// members. Members of singleton groups are not used as anchors.
pub fn sample_pairs(members: &[(&str, &str)], seed: u64) -> Result<Vec<PairSpec>> {
    let mut by_group: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, g) in members {
        by_group.entry(g).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (id, g) in members {
        let peers = &by_group[g];
        if peers.len() < 2 {
            continue;
        }
        let pos = loop {
            let cand = peers[rng.gen_range(0..peers.len())];
            if cand != *id {
                break cand;
            }
        };
        pairs.push(PairSpec {
            anchor: (*id).to_owned(),
            positive: pos.to_owned(),
            group: (*g).to_owned(),
        });
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientPairs { need: 1, got: 0 });
    }
    Ok(pairs)
}
