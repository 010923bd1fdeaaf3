//! Treatment-gated network at toy scale.
//!
//! The backbone multiplies a linear feature map by a sigmoid gate driven by
//! the treatment embedding:
//!
//! ```text
//! interaction(x, t) = (W_x x + b_x) .* sigmoid(W_t e_t + b_t)
//! ```
//!
//! so the treatment can switch feature subspaces off entirely instead of
//! competing with strong prognostic main effects. The gated vector feeds six
//! bifurcated heads, one (pi, mu, sigma) triple per treatment branch; each
//! head is a small ELU dense layer plus a linear readout. Predicted uplift
//! is the difference of the two branch expectations.
//!
//! Training is plain Adam over hand-derived reverse-mode gradients; there is
//! no autograd anywhere. Parameters live in one flat vector with a fixed
//! block layout, which keeps the optimizer, the serializer, and the
//! finite-difference checks straightforward.

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::distributions::ZilnParams;
use crate::error::{Error, Result};
use crate::losses::{
    hybrid_loss_on_pairs, sample_pairs, sigmoid, softplus, transformed_outcome, FocalConfig,
    HeadGradient, HybridWeights, SampleHeads, MAX_SAMPLED_PAIRS,
};
use crate::rng::{derived, uniform, RandomSource};
use crate::UpliftScorer;

/// Floor added to the softplus sigma head so sigma stays strictly positive.
pub const SIGMA_FLOOR: f64 = 1e-3;

const N_BRANCHES: usize = 2;
const N_HEADS: usize = 3;
const HEAD_PI: usize = 0;
const HEAD_MU: usize = 1;
const HEAD_SIGMA: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub d_features: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub d_head: usize,
}

impl NetDims {
    pub fn with_defaults(d_features: usize) -> Self {
        Self {
            d_features,
            d_embed: 8,
            d_hidden: 64,
            d_head: 16,
        }
    }

    fn head_block(&self) -> usize {
        self.d_head * self.d_hidden + 2 * self.d_head + 1
    }

    fn off_embed(&self) -> usize {
        0
    }

    fn off_gate_w(&self) -> usize {
        N_BRANCHES * self.d_embed
    }

    fn off_gate_b(&self) -> usize {
        self.off_gate_w() + self.d_hidden * self.d_embed
    }

    fn off_feat_w(&self) -> usize {
        self.off_gate_b() + self.d_hidden
    }

    fn off_feat_b(&self) -> usize {
        self.off_feat_w() + self.d_hidden * self.d_features
    }

    fn off_heads(&self) -> usize {
        self.off_feat_b() + self.d_hidden
    }

    fn off_head(&self, branch: usize, head: usize) -> usize {
        self.off_heads() + (branch * N_HEADS + head) * self.head_block()
    }

    pub fn n_params(&self) -> usize {
        self.off_heads() + N_BRANCHES * N_HEADS * self.head_block()
    }
}

/// All network parameters in one flat vector with the block layout described
/// by [`NetDims`].
#[derive(Debug, Clone, PartialEq)]
pub struct GatedNetParams {
    pub dims: NetDims,
    pub theta: Vec<f64>,
}

/// Raw and activated outputs of one branch's three heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchHeads {
    pub pi: f64,
    pub mu: f64,
    pub sigma: f64,
}

struct HeadSlices<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
}

impl GatedNetParams {
    pub fn zeroed(dims: NetDims) -> Self {
        Self {
            theta: vec![0.0; dims.n_params()],
            dims,
        }
    }

    /// Glorot-uniform weights (`+-sqrt(6 / (fan_in + fan_out))`), zero biases.
    pub fn init(dims: NetDims, rng: &mut RandomSource) -> Self {
        let mut p = Self::zeroed(dims);
        let d = dims;
        let glorot = |rng: &mut RandomSource, theta: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in theta {
                *v = uniform(rng, -limit, limit);
            }
        };
        glorot(
            rng,
            &mut p.theta[d.off_embed()..d.off_embed() + N_BRANCHES * d.d_embed],
            N_BRANCHES,
            d.d_embed,
        );
        glorot(
            rng,
            &mut p.theta[d.off_gate_w()..d.off_gate_w() + d.d_hidden * d.d_embed],
            d.d_embed,
            d.d_hidden,
        );
        glorot(
            rng,
            &mut p.theta[d.off_feat_w()..d.off_feat_w() + d.d_hidden * d.d_features],
            d.d_features,
            d.d_hidden,
        );
        for branch in 0..N_BRANCHES {
            for head in 0..N_HEADS {
                let base = d.off_head(branch, head);
                let w1_len = d.d_head * d.d_hidden;
                glorot(rng, &mut p.theta[base..base + w1_len], d.d_hidden, d.d_head);
                let w2_base = base + w1_len + d.d_head;
                glorot(rng, &mut p.theta[w2_base..w2_base + d.d_head], d.d_head, 1);
            }
        }
        p
    }

    fn embed_row(&self, branch: usize) -> &[f64] {
        let off = self.dims.off_embed() + branch * self.dims.d_embed;
        &self.theta[off..off + self.dims.d_embed]
    }

    fn head_slices(&self, branch: usize, head: usize) -> HeadSlices<'_> {
        let d = self.dims;
        let base = d.off_head(branch, head);
        let w1_len = d.d_head * d.d_hidden;
        HeadSlices {
            w1: &self.theta[base..base + w1_len],
            b1: &self.theta[base + w1_len..base + w1_len + d.d_head],
            w2: &self.theta[base + w1_len + d.d_head..base + w1_len + 2 * d.d_head],
            b2: self.theta[base + w1_len + 2 * d.d_head],
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.d_features {
            return Err(Error::Shape {
                what: "feature vector",
                expected: self.dims.d_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// The gated hidden vector `(W_x x + b_x) .* sigmoid(W_t e_t + b_t)`.
    pub fn gated_interaction(&self, x: &[f64], treated: bool) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut trace = SampleTrace::new(self.dims);
        self.forward_shared(x, &mut trace);
        self.forward_gate(branch_index(treated), &mut trace);
        let branch = &trace.branch[branch_index(treated)];
        Ok(branch.h.clone())
    }

    /// Head outputs for the requested branch. Both branches are always
    /// computable, so counterfactual queries are just `forward(x, !t)`.
    pub fn forward(&self, x: &[f64], treated: bool) -> Result<BranchHeads> {
        self.check_input(x)?;
        let mut trace = SampleTrace::new(self.dims);
        self.forward_shared(x, &mut trace);
        let k = branch_index(treated);
        self.forward_gate(k, &mut trace);
        self.forward_heads(k, &mut trace);
        Ok(trace.branch[k].heads_out)
    }

    /// Branch expectations reconstructed as `pi * exp(mu + sigma^2/2)`,
    /// treated minus control.
    pub fn predict_uplift(&self, x: &[f64]) -> Result<f64> {
        let treated = self.forward(x, true)?;
        let control = self.forward(x, false)?;
        let e1 = ZilnParams::new(treated.pi, treated.mu, treated.sigma)?.expected_value()?;
        let e0 = ZilnParams::new(control.pi, control.mu, control.sigma)?.expected_value()?;
        Ok(e1 - e0)
    }

    fn forward_shared(&self, x: &[f64], trace: &mut SampleTrace) {
        let d = self.dims;
        matvec(
            &self.theta[d.off_feat_w()..d.off_feat_w() + d.d_hidden * d.d_features],
            d.d_hidden,
            d.d_features,
            x,
            &mut trace.a,
        );
        for (v, b) in trace
            .a
            .iter_mut()
            .zip(&self.theta[d.off_feat_b()..d.off_feat_b() + d.d_hidden])
        {
            *v += *b;
        }
        trace.x.clear();
        trace.x.extend_from_slice(x);
    }

    fn forward_gate(&self, k: usize, trace: &mut SampleTrace) {
        let d = self.dims;
        let e = self.embed_row(k);
        let branch = &mut trace.branch[k];
        matvec(
            &self.theta[d.off_gate_w()..d.off_gate_w() + d.d_hidden * d.d_embed],
            d.d_hidden,
            d.d_embed,
            e,
            &mut branch.g_pre,
        );
        for (v, b) in branch
            .g_pre
            .iter_mut()
            .zip(&self.theta[d.off_gate_b()..d.off_gate_b() + d.d_hidden])
        {
            *v += *b;
        }
        for r in 0..d.d_hidden {
            branch.g[r] = sigmoid(branch.g_pre[r]);
            branch.h[r] = trace.a[r] * branch.g[r];
        }
    }

    fn forward_heads(&self, k: usize, trace: &mut SampleTrace) {
        let d = self.dims;
        let branch = &mut trace.branch[k];
        let hvec = &branch.h;
        let mut raw = [0.0; N_HEADS];
        for (head, raw_slot) in raw.iter_mut().enumerate() {
            let hs = self.head_slices(k, head);
            let span = head * d.d_head..(head + 1) * d.d_head;
            let u_pre = &mut branch.head_u_pre[span.clone()];
            matvec(hs.w1, d.d_head, d.d_hidden, hvec, u_pre);
            let u = &mut branch.head_u[span];
            let mut out = hs.b2;
            for r in 0..d.d_head {
                u_pre[r] += hs.b1[r];
                u[r] = elu(u_pre[r]);
                out += hs.w2[r] * u[r];
            }
            *raw_slot = out;
        }
        branch.raw = raw;
        branch.heads_out = BranchHeads {
            pi: sigmoid(raw[HEAD_PI]),
            mu: raw[HEAD_MU],
            sigma: softplus(raw[HEAD_SIGMA]) + SIGMA_FLOOR,
        };
    }
}

impl UpliftScorer for GatedNetParams {
    /// Overflowing expectations surface as NaN rather than a panic.
    fn predict_uplift_row(&self, x: &[f64]) -> f64 {
        self.predict_uplift(x).unwrap_or(f64::NAN)
    }
}

fn branch_index(treated: bool) -> usize {
    usize::from(treated)
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out[r] = acc;
    }
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

fn elu_deriv(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// Per-sample forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
struct BranchTrace {
    g_pre: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    // u_pre and u for the three heads, concatenated.
    head_u_pre: Vec<f64>,
    head_u: Vec<f64>,
    raw: [f64; N_HEADS],
    heads_out: BranchHeads,
}

impl BranchTrace {
    fn new(dims: NetDims) -> Self {
        Self {
            g_pre: vec![0.0; dims.d_hidden],
            g: vec![0.0; dims.d_hidden],
            h: vec![0.0; dims.d_hidden],
            head_u_pre: vec![0.0; N_HEADS * dims.d_head],
            head_u: vec![0.0; N_HEADS * dims.d_head],
            raw: [0.0; N_HEADS],
            heads_out: BranchHeads {
                pi: 0.5,
                mu: 0.0,
                sigma: SIGMA_FLOOR,
            },
        }
    }

    fn head_u(&self, head: usize, d_head: usize) -> &[f64] {
        &self.head_u[head * d_head..(head + 1) * d_head]
    }

    fn head_u_pre(&self, head: usize, d_head: usize) -> &[f64] {
        &self.head_u_pre[head * d_head..(head + 1) * d_head]
    }
}

#[derive(Debug, Clone)]
struct SampleTrace {
    x: Vec<f64>,
    a: Vec<f64>,
    branch: [BranchTrace; 2],
}

impl SampleTrace {
    fn new(dims: NetDims) -> Self {
        Self {
            x: Vec::with_capacity(dims.d_features),
            a: vec![0.0; dims.d_hidden],
            branch: [BranchTrace::new(dims), BranchTrace::new(dims)],
        }
    }
}

/// Which objective drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Focal propensity + lognormal regression + value-weighted ranking.
    Hybrid,
    /// Squared error between the factual branch expectation and the outcome.
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub d_head: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 512,
            epochs: 30,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            d_embed: 8,
            d_hidden: 64,
            d_head: 16,
            loss_mode: LossMode::Hybrid,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be at least 2 (ranking needs pairs)".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.d_embed == 0 || self.d_hidden == 0 || self.d_head == 0 {
            return Err(Error::Config("net dimensions must be positive".into()));
        }
        Ok(())
    }

    fn dims(&self, d_features: usize) -> NetDims {
        NetDims {
            d_features,
            d_embed: self.d_embed,
            d_hidden: self.d_hidden,
            d_head: self.d_head,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Loss and full parameter gradient over one batch with a fixed pair set.
/// Exposed so finite-difference checks can re-evaluate the exact objective.
pub fn batch_loss_and_grad(
    params: &GatedNetParams,
    data: &Dataset,
    batch_rows: &[usize],
    pairs: &[(usize, usize)],
    focal: &FocalConfig,
    weights: &HybridWeights,
    loss_mode: LossMode,
) -> Result<(f64, Vec<f64>)> {
    let dims = params.dims;
    let mut traces: Vec<SampleTrace> = (0..batch_rows.len())
        .map(|_| SampleTrace::new(dims))
        .collect();
    let mut grad = vec![0.0; dims.n_params()];
    let loss = batch_pass(
        params, data, batch_rows, pairs, focal, weights, loss_mode, &mut traces, &mut grad,
    )?;
    Ok((loss, grad))
}

#[allow(clippy::too_many_arguments)]
fn batch_pass(
    params: &GatedNetParams,
    data: &Dataset,
    batch_rows: &[usize],
    pairs: &[(usize, usize)],
    focal: &FocalConfig,
    weights: &HybridWeights,
    loss_mode: LossMode,
    traces: &mut [SampleTrace],
    grad: &mut [f64],
) -> Result<f64> {
    grad.fill(0.0);
    let n = batch_rows.len();
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    let treated_fraction = data.n_treated() as f64 / data.n_rows() as f64;

    // Forward: both branches per sample, factual heads plus predicted uplift.
    let mut heads = Vec::with_capacity(n);
    for (slot, &row) in batch_rows.iter().enumerate() {
        let trace = &mut traces[slot];
        params.forward_shared(data.row(row), trace);
        for k in 0..N_BRANCHES {
            params.forward_gate(k, trace);
            params.forward_heads(k, trace);
        }
        let out1 = trace.branch[1].heads_out;
        let out0 = trace.branch[0].heads_out;
        let e1 = out1.pi * (out1.mu + 0.5 * out1.sigma * out1.sigma).exp();
        let e0 = out0.pi * (out0.mu + 0.5 * out0.sigma * out0.sigma).exp();
        let factual = trace.branch[branch_index(data.treatment[row])].heads_out;
        heads.push(SampleHeads {
            p: factual.pi,
            mu: factual.mu,
            sigma: factual.sigma,
            y: data.outcome[row],
            z: transformed_outcome(data.outcome[row], data.treatment[row], treated_fraction),
            tau_hat: e1 - e0,
        });
    }

    let (loss, head_grads) = match loss_mode {
        LossMode::Hybrid => hybrid_loss_on_pairs(&heads, pairs, focal, weights)?,
        LossMode::SquaredError => {
            let inv_n = 1.0 / n as f64;
            let mut loss = 0.0;
            let mut grads = Vec::with_capacity(n);
            for (slot, sample) in heads.iter().enumerate() {
                let trace = &traces[slot];
                let k = branch_index(data.treatment[batch_rows[slot]]);
                let out = trace.branch[k].heads_out;
                let m = (out.mu + 0.5 * out.sigma * out.sigma).exp();
                let e = out.pi * m;
                let resid = e - sample.y;
                loss += resid * resid * inv_n;
                let d_e = 2.0 * resid * inv_n;
                grads.push(HeadGradient {
                    d_p: d_e * m,
                    d_mu: d_e * e,
                    d_sigma: d_e * e * out.sigma,
                    d_tau: 0.0,
                });
            }
            (loss, grads)
        }
    };

    // Backward: distribute head gradients over both branches and run the
    // shared reverse pass.
    for (slot, &row) in batch_rows.iter().enumerate() {
        let trace = &traces[slot];
        let hg = &head_grads[slot];
        let factual = branch_index(data.treatment[row]);
        for k in 0..N_BRANCHES {
            let out = trace.branch[k].heads_out;
            let m = (out.mu + 0.5 * out.sigma * out.sigma).exp();
            let e_k = out.pi * m;
            let tau_sign = if k == 1 { 1.0 } else { -1.0 };
            let mut d_pi = tau_sign * hg.d_tau * m;
            let mut d_mu = tau_sign * hg.d_tau * e_k;
            let mut d_sigma = tau_sign * hg.d_tau * e_k * out.sigma;
            if k == factual {
                d_pi += hg.d_p;
                d_mu += hg.d_mu;
                d_sigma += hg.d_sigma;
            }
            if d_pi != 0.0 || d_mu != 0.0 || d_sigma != 0.0 {
                backprop_branch(params, trace, k, d_pi, d_mu, d_sigma, grad);
            }
        }
    }
    Ok(loss)
}

fn backprop_branch(
    params: &GatedNetParams,
    trace: &SampleTrace,
    k: usize,
    d_pi: f64,
    d_mu: f64,
    d_sigma: f64,
    grad: &mut [f64],
) {
    let d = params.dims;
    let branch = &trace.branch[k];
    let out = branch.heads_out;
    let d_raw = [
        d_pi * out.pi * (1.0 - out.pi),
        d_mu,
        d_sigma * sigmoid(branch.raw[HEAD_SIGMA]),
    ];

    let mut d_h = vec![0.0; d.d_hidden];
    for (head, &d_raw_head) in d_raw.iter().enumerate() {
        if d_raw_head == 0.0 {
            continue;
        }
        let hs = params.head_slices(k, head);
        let u = branch.head_u(head, d.d_head);
        let u_pre = branch.head_u_pre(head, d.d_head);
        let base = d.off_head(k, head);
        let w1_len = d.d_head * d.d_hidden;
        for r in 0..d.d_head {
            // w2 and b2.
            grad[base + w1_len + d.d_head + r] += d_raw_head * u[r];
            let d_upre = d_raw_head * hs.w2[r] * elu_deriv(u_pre[r]);
            // w1 row r and b1.
            let w1_row = base + r * d.d_hidden;
            for c in 0..d.d_hidden {
                grad[w1_row + c] += d_upre * branch.h[c];
                d_h[c] += d_upre * hs.w1[r * d.d_hidden + c];
            }
            grad[base + w1_len + r] += d_upre;
        }
        grad[base + w1_len + 2 * d.d_head] += d_raw_head;
    }

    // Through the gate: h = a .* g.
    let e = params.embed_row(k);
    let mut d_embed = vec![0.0; d.d_embed];
    for r in 0..d.d_hidden {
        if d_h[r] == 0.0 {
            continue;
        }
        let d_a = d_h[r] * branch.g[r];
        let d_gpre = d_h[r] * trace.a[r] * branch.g[r] * (1.0 - branch.g[r]);
        let feat_row = d.off_feat_w() + r * d.d_features;
        for c in 0..d.d_features {
            grad[feat_row + c] += d_a * trace.x[c];
        }
        grad[d.off_feat_b() + r] += d_a;
        let gate_row = d.off_gate_w() + r * d.d_embed;
        for c in 0..d.d_embed {
            grad[gate_row + c] += d_gpre * e[c];
            d_embed[c] += d_gpre * params.theta[gate_row + c];
        }
        grad[d.off_gate_b() + r] += d_gpre;
    }
    let embed_off = d.off_embed() + k * d.d_embed;
    for c in 0..d.d_embed {
        grad[embed_off + c] += d_embed[c];
    }
}

/// Trained parameters plus the per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GatedNetParams,
    pub loss_history: Vec<f64>,
}

/// Train on a dataset with both arms present. Deterministic for a fixed
/// seed: epoch shuffles, pair sampling, and initialization all derive from
/// `cfg.seed`.
pub fn train(
    data: &Dataset,
    cfg: &TrainConfig,
    focal: &FocalConfig,
    weights: &HybridWeights,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.n_rows();
    if data.n_treated() == 0 || data.n_control() == 0 {
        return Err(Error::Config(
            "training needs both treated and control samples".into(),
        ));
    }
    let dims = cfg.dims(data.n_features());
    let mut params = GatedNetParams::init(dims, &mut derived(cfg.seed, 0));
    let mut shuffle_rng = derived(cfg.seed, 1);
    let mut pair_rng = derived(cfg.seed, 2);

    let mut adam = Adam::new(dims.n_params());
    let mut grad = vec![0.0; dims.n_params()];
    let mut traces: Vec<SampleTrace> = (0..cfg.batch_size.min(n))
        .map(|_| SampleTrace::new(dims))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for _epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let pairs = if cfg.loss_mode == LossMode::Hybrid && weights.lambda_rank > 0.0 {
                sample_pairs(batch.len(), MAX_SAMPLED_PAIRS, &mut pair_rng)
            } else {
                Vec::new()
            };
            let loss = batch_pass(
                &params,
                data,
                batch,
                &pairs,
                focal,
                weights,
                cfg.loss_mode,
                &mut traces[..batch.len()],
                &mut grad,
            )?;
            adam.step(&mut params.theta, &grad, cfg);
            epoch_loss += loss;
            batches += 1;
        }
        history.push(epoch_loss / batches as f64);
    }

    Ok(TrainOutcome {
        params,
        loss_history: history,
    })
}

const NET_FORMAT_VERSION: u32 = 1;
const NET_KIND: &str = "gated_net";

/// Named parameter block of one head: ELU dense layer plus linear readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadBlock {
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: f64,
}

/// Versioned JSON artifact: shapes, row-major parameter arrays, and the
/// training configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArtifact {
    pub format_version: u32,
    pub kind: String,
    pub dims: NetDims,
    pub treat_embed: Vec<f64>,
    pub gate_w: Vec<f64>,
    pub gate_b: Vec<f64>,
    pub feat_w: Vec<f64>,
    pub feat_b: Vec<f64>,
    /// Indexed `[branch][head]` with heads ordered pi, mu, sigma.
    pub heads: Vec<Vec<HeadBlock>>,
    pub train_config: TrainConfig,
    pub focal: FocalConfig,
    pub rank_weights: HybridWeights,
    pub loss_history: Vec<f64>,
}

impl NetArtifact {
    pub fn from_params(
        params: &GatedNetParams,
        train_config: &TrainConfig,
        focal: &FocalConfig,
        rank_weights: &HybridWeights,
        loss_history: Vec<f64>,
    ) -> Self {
        let d = params.dims;
        let slice = |from: usize, len: usize| params.theta[from..from + len].to_vec();
        let heads = (0..N_BRANCHES)
            .map(|k| {
                (0..N_HEADS)
                    .map(|j| {
                        let hs = params.head_slices(k, j);
                        HeadBlock {
                            dense_w: hs.w1.to_vec(),
                            dense_b: hs.b1.to_vec(),
                            out_w: hs.w2.to_vec(),
                            out_b: hs.b2,
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            format_version: NET_FORMAT_VERSION,
            kind: NET_KIND.to_string(),
            dims: d,
            treat_embed: slice(d.off_embed(), N_BRANCHES * d.d_embed),
            gate_w: slice(d.off_gate_w(), d.d_hidden * d.d_embed),
            gate_b: slice(d.off_gate_b(), d.d_hidden),
            feat_w: slice(d.off_feat_w(), d.d_hidden * d.d_features),
            feat_b: slice(d.off_feat_b(), d.d_hidden),
            heads,
            train_config: train_config.clone(),
            focal: *focal,
            rank_weights: *rank_weights,
            loss_history,
        }
    }

    pub fn to_params(&self) -> Result<GatedNetParams> {
        let d = self.dims;
        let mut params = GatedNetParams::zeroed(d);
        let blocks: [(&[f64], usize, usize); 5] = [
            (&self.treat_embed, d.off_embed(), N_BRANCHES * d.d_embed),
            (&self.gate_w, d.off_gate_w(), d.d_hidden * d.d_embed),
            (&self.gate_b, d.off_gate_b(), d.d_hidden),
            (&self.feat_w, d.off_feat_w(), d.d_hidden * d.d_features),
            (&self.feat_b, d.off_feat_b(), d.d_hidden),
        ];
        for (src, off, len) in blocks {
            if src.len() != len {
                return Err(Error::Shape {
                    what: "net artifact block",
                    expected: len,
                    got: src.len(),
                });
            }
            params.theta[off..off + len].copy_from_slice(src);
        }
        if self.heads.len() != N_BRANCHES || self.heads.iter().any(|h| h.len() != N_HEADS) {
            return Err(Error::Config("net artifact must carry 2x3 heads".into()));
        }
        for k in 0..N_BRANCHES {
            for j in 0..N_HEADS {
                let hb = &self.heads[k][j];
                let base = d.off_head(k, j);
                let w1_len = d.d_head * d.d_hidden;
                if hb.dense_w.len() != w1_len
                    || hb.dense_b.len() != d.d_head
                    || hb.out_w.len() != d.d_head
                {
                    return Err(Error::Shape {
                        what: "net artifact head block",
                        expected: w1_len,
                        got: hb.dense_w.len(),
                    });
                }
                params.theta[base..base + w1_len].copy_from_slice(&hb.dense_w);
                params.theta[base + w1_len..base + w1_len + d.d_head]
                    .copy_from_slice(&hb.dense_b);
                params.theta[base + w1_len + d.d_head..base + w1_len + 2 * d.d_head]
                    .copy_from_slice(&hb.out_w);
                params.theta[base + w1_len + 2 * d.d_head] = hb.out_b;
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let artifact: NetArtifact = serde_json::from_str(&text)?;
        if artifact.kind != NET_KIND {
            return Err(Error::Config(format!(
                "artifact kind {:?} is not a gated net",
                artifact.kind
            )));
        }
        if artifact.format_version != NET_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported net format version {}",
                artifact.format_version
            )));
        }
        Ok(artifact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn tiny_dims(d_features: usize) -> NetDims {
        NetDims {
            d_features,
            d_embed: 3,
            d_hidden: 6,
            d_head: 4,
        }
    }

    fn random_params(dims: NetDims, seed: u64) -> GatedNetParams {
        GatedNetParams::init(dims, &mut seeded(seed))
    }

    fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
        let mut rng = seeded(seed);
        let mut features = Vec::with_capacity(n * d);
        let mut treatment = Vec::with_capacity(n);
        let mut outcome = Vec::with_capacity(n);
        for i in 0..n {
            for _ in 0..d {
                features.push(uniform(&mut rng, -1.5, 1.5));
            }
            treatment.push(i % 2 == 0);
            outcome.push(if rng.random::<f64>() < 0.4 {
                uniform(&mut rng, 0.2, 9.0)
            } else {
                0.0
            });
        }
        Dataset {
            n_binary: 0,
            n_continuous: d,
            features,
            treatment,
            outcome,
            true_uplift: None,
        }
    }

    #[test]
    fn zero_initialized_heads_give_neutral_outputs() {
        let params = GatedNetParams::zeroed(tiny_dims(5));
        let x = vec![0.3, -1.0, 2.0, 0.0, 0.7];
        for treated in [false, true] {
            let out = params.forward(&x, treated).unwrap();
            assert_eq!(out.pi, 0.5);
            assert_eq!(out.mu, 0.0);
            assert_abs_diff_eq!(
                out.sigma,
                softplus(0.0) + SIGMA_FLOOR,
                epsilon = 1e-15
            );
        }
        assert_eq!(params.predict_uplift(&x).unwrap(), 0.0);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn treatment_blind_gate_halves_feature_path() {
        // Zero gate weights and bias: sigmoid(0) = 0.5 elementwise.
        let dims = tiny_dims(4);
        let mut params = random_params(dims, 3);
        let gate_range = dims.off_gate_w()..dims.off_feat_w();
        for v in &mut params.theta[gate_range] {
            *v = 0.0;
        }
        for v in &mut params.theta[dims.off_embed()..dims.off_embed() + 2 * dims.d_embed] {
            *v = uniform(&mut seeded(4), -1.0, 1.0);
        }
        let x = vec![0.5, -0.25, 1.0, 2.0];
        let h0 = params.gated_interaction(&x, false).unwrap();
        let h1 = params.gated_interaction(&x, true).unwrap();
        assert_eq!(h0, h1);

        // Recompute 0.5 * (W_x x + b_x) by hand.
        for r in 0..dims.d_hidden {
            let row = &params.theta
                [dims.off_feat_w() + r * dims.d_features..dims.off_feat_w() + (r + 1) * dims.d_features];
            let a: f64 = row.iter().zip(&x).map(|(w, xi)| w * xi).sum::<f64>()
                + params.theta[dims.off_feat_b() + r];
            assert_abs_diff_eq!(h0[r], 0.5 * a, epsilon = 1e-14);
        }
    }

    #[test]
    fn large_negative_gate_bias_closes_the_gate() {
        let dims = tiny_dims(4);
        let mut params = random_params(dims, 5);
        for v in &mut params.theta[dims.off_gate_b()..dims.off_gate_b() + dims.d_hidden] {
            *v = -40.0;
        }
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let h = params.gated_interaction(&x, true).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-12), "gate not closed: {h:?}");
    }

    #[test]
    fn gated_interaction_rejects_wrong_width() {
        let params = GatedNetParams::zeroed(tiny_dims(5));
        match params.gated_interaction(&[1.0, 2.0], false) {
            Err(Error::Shape { expected: 5, got: 2, .. }) => {}
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn identical_branches_predict_zero_uplift() {
        let dims = tiny_dims(5);
        let mut params = random_params(dims, 7);
        // Copy branch 1 blocks onto branch 0: embedding row and heads.
        let e = dims.d_embed;
        let row1: Vec<f64> = params.embed_row(1).to_vec();
        params.theta[dims.off_embed()..dims.off_embed() + e].copy_from_slice(&row1);
        for head in 0..N_HEADS {
            let src = dims.off_head(1, head);
            let dst = dims.off_head(0, head);
            let len = dims.head_block();
            let block: Vec<f64> = params.theta[src..src + len].to_vec();
            params.theta[dst..dst + len].copy_from_slice(&block);
        }
        let mut rng = seeded(8);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
            assert_eq!(params.predict_uplift(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn swapping_branches_negates_uplift() {
        let dims = tiny_dims(6);
        let params = random_params(dims, 11);
        let cfg = TrainConfig::default();
        let focal = FocalConfig::default();
        let weights = HybridWeights::default();
        let mut artifact = NetArtifact::from_params(&params, &cfg, &focal, &weights, vec![]);
        artifact.treat_embed.rotate_left(dims.d_embed);
        artifact.heads.swap(0, 1);
        let swapped = artifact.to_params().unwrap();
        let mut rng = seeded(12);
        for _ in 0..25 {
            let x: Vec<f64> = (0..6).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
            let a = params.predict_uplift(&x).unwrap();
            let b = swapped.predict_uplift(&x).unwrap();
            assert_relative_eq!(a, -b, max_relative = 1e-12);
        }
    }

    #[test]
    fn gate_forced_to_zero_makes_uplift_feature_invariant() {
        let dims = tiny_dims(5);
        let mut params = random_params(dims, 21);
        let target_feature = 2;
        // Wire feature 2 into hidden units 0 and 1 only, then close their
        // gates for both branches.
        for r in 0..dims.d_hidden {
            let idx = dims.off_feat_w() + r * dims.d_features + target_feature;
            if r > 1 {
                params.theta[idx] = 0.0;
            }
        }
        for r in 0..2usize {
            params.theta[dims.off_gate_b() + r] = -60.0;
            for c in 0..dims.d_embed {
                params.theta[dims.off_gate_w() + r * dims.d_embed + c] = 0.0;
            }
        }
        let mut rng = seeded(22);
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..5).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
            let base = params.predict_uplift(&x).unwrap();
            x[target_feature] += uniform(&mut rng, -5.0, 5.0);
            let moved = params.predict_uplift(&x).unwrap();
            assert_abs_diff_eq!(base, moved, epsilon = 1e-12);
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let denom = a.abs().max(b.abs());
        if denom < 1e-10 {
            0.0
        } else {
            (a - b).abs() / denom
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn full_network_gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let d = 4;
            let dims = tiny_dims(d);
            let mut params = random_params(dims, 100 + seed);
            let data = random_dataset(200 + seed, 8, d);
            let rows: Vec<usize> = (0..8).collect();
            let mut pair_rng = seeded(300 + seed);
            let pairs = sample_pairs(rows.len(), MAX_SAMPLED_PAIRS, &mut pair_rng);
            let focal = FocalConfig::default();
            let weights = HybridWeights::default();
            let (_, grad) = batch_loss_and_grad(
                &params, &data, &rows, &pairs, &focal, &weights, LossMode::Hybrid,
            )
            .unwrap();
            for i in 0..params.theta.len() {
                let orig = params.theta[i];
                params.theta[i] = orig + h;
                let (up, _) = batch_loss_and_grad(
                    &params, &data, &rows, &pairs, &focal, &weights, LossMode::Hybrid,
                )
                .unwrap();
                params.theta[i] = orig - h;
                let (down, _) = batch_loss_and_grad(
                    &params, &data, &rows, &pairs, &focal, &weights, LossMode::Hybrid,
                )
                .unwrap();
                params.theta[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let err = rel_err(grad[i], numeric);
                assert!(
                    err < 1e-3 || (grad[i] - numeric).abs() < 1e-8,
                    "seed {seed} param {i}: analytic {} vs numeric {numeric}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn squared_error_gradient_matches_finite_differences() {
        let h = 1e-5;
        let d = 4;
        let dims = tiny_dims(d);
        let mut params = random_params(dims, 77);
        let data = random_dataset(78, 8, d);
        let rows: Vec<usize> = (0..8).collect();
        let focal = FocalConfig::default();
        let weights = HybridWeights::default();
        let (_, grad) = batch_loss_and_grad(
            &params, &data, &rows, &[], &focal, &weights, LossMode::SquaredError,
        )
        .unwrap();
        for i in (0..params.theta.len()).step_by(3) {
            let orig = params.theta[i];
            params.theta[i] = orig + h;
            let (up, _) = batch_loss_and_grad(
                &params, &data, &rows, &[], &focal, &weights, LossMode::SquaredError,
            )
            .unwrap();
            params.theta[i] = orig - h;
            let (down, _) = batch_loss_and_grad(
                &params, &data, &rows, &[], &focal, &weights, LossMode::SquaredError,
            )
            .unwrap();
            params.theta[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!(
                rel_err(grad[i], numeric) < 1e-3 || (grad[i] - numeric).abs() < 1e-8,
                "param {i}: analytic {} vs numeric {numeric}",
                grad[i]
            );
        }
    }

    #[test]
    fn training_is_deterministic_and_loss_improves() {
        let data = random_dataset(55, 600, 6);
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 64,
            d_embed: 3,
            d_hidden: 8,
            d_head: 4,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let focal = FocalConfig::default();
        let weights = HybridWeights::default();
        let a = train(&data, &cfg, &focal, &weights).unwrap();
        let b = train(&data, &cfg, &focal, &weights).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history, b.loss_history);
        assert!(
            a.loss_history.last().unwrap() < a.loss_history.first().unwrap(),
            "history {:?}",
            a.loss_history
        );
    }

    #[test]
    fn all_zero_outcomes_drive_pi_down() {
        let mut data = random_dataset(60, 400, 5);
        data.outcome = vec![0.0; data.n_rows()];
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 64,
            d_embed: 3,
            d_hidden: 8,
            d_head: 4,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg, &FocalConfig::default(), &HybridWeights::default()).unwrap();
        let mut mean_pi = 0.0;
        for i in 0..data.n_rows() {
            let heads = out
                .params
                .forward(data.row(i), data.treatment[i])
                .unwrap();
            mean_pi += heads.pi;
        }
        mean_pi /= data.n_rows() as f64;
        assert!(mean_pi < 0.4, "mean pi {mean_pi}");
    }

    #[test]
    fn trained_net_recovers_the_sign_of_the_true_ate() {
        let data = crate::datagen::generate(&crate::datagen::GenConfig {
            n_accounts: 4000,
            seed: 9,
            ..crate::datagen::GenConfig::default()
        })
        .unwrap();
        let true_ate = data.true_uplift.as_ref().unwrap().iter().sum::<f64>()
            / data.n_rows() as f64;
        let cfg = TrainConfig {
            epochs: 8,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg, &FocalConfig::default(), &HybridWeights::default()).unwrap();
        let mean_pred = (0..data.n_rows())
            .map(|i| out.params.predict_uplift(data.row(i)).unwrap())
            .sum::<f64>()
            / data.n_rows() as f64;
        assert_eq!(
            mean_pred.signum(),
            true_ate.signum(),
            "mean predicted uplift {mean_pred} vs true ATE {true_ate}"
        );
    }

    #[test]
    fn training_rejects_single_arm_data() {
        let mut data = random_dataset(61, 50, 4);
        data.treatment = vec![false; data.n_rows()];
        let err = train(
            &data,
            &TrainConfig::default(),
            &FocalConfig::default(),
            &HybridWeights::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn artifact_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let data = random_dataset(70, 300, 5);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 64,
            d_embed: 3,
            d_hidden: 8,
            d_head: 4,
            ..TrainConfig::default()
        };
        let focal = FocalConfig::default();
        let weights = HybridWeights::default();
        let out = train(&data, &cfg, &focal, &weights).unwrap();
        let artifact =
            NetArtifact::from_params(&out.params, &cfg, &focal, &weights, out.loss_history.clone());
        artifact.save(&path).unwrap();
        let loaded = NetArtifact::load(&path).unwrap();
        assert_eq!(artifact, loaded);
        let restored = loaded.to_params().unwrap();
        for i in 0..data.n_rows() {
            let a = out.params.predict_uplift(data.row(i)).unwrap();
            let b = restored.predict_uplift(data.row(i)).unwrap();
            assert!(a.to_bits() == b.to_bits(), "row {i}: {a} vs {b}");
        }
    }
}
