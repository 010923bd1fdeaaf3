//! Robust ZILN uplift forest.
//!
//! A bagged ensemble of binary trees grown to maximize *treatment-effect
//! heterogeneity* between children rather than outcome homogeneity. Each
//! node estimates its uplift from zero-inflated lognormal parameters that
//! are shrunk toward dataset-level priors (more shrinkage for sparser
//! nodes), with the log-scale spread clamped to `[0.1, 4.0]` so a handful
//! of whales cannot blow up the leaf expectation.
//!
//! Split gain for a candidate partition into children L and R:
//!
//! ```text
//! gain = N_L * N_R / (N_L + N_R)^2 * (tau_L - tau_R)^2
//! ```
//!
//! and zero whenever either child has fewer than the minimum treated or
//! control samples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::distributions::ZilnParams;
use crate::error::{Error, Result};
use crate::rng::{derived, RandomSource};
use crate::UpliftScorer;

pub const SIGMA_CLAMP_MIN: f64 = 0.1;
pub const SIGMA_CLAMP_MAX: f64 = 4.0;

/// Candidate thresholds per feature per node are capped at this many
/// quantile-spaced midpoints.
pub const MAX_SPLIT_CANDIDATES: usize = 32;

/// Dataset-level priors the leaf estimates shrink toward. Computed from the
/// training sample at each tree's root, never configured by hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub p_bar: f64,
    pub mu_bar: f64,
    pub sigma_bar: f64,
}

impl Priors {
    /// Conversion rate plus moments of `ln y` over positive outcomes.
    /// `sigma_bar` is clamped into the usual `[0.1, 4.0]` band. Degenerate
    /// inputs (no or one positive outcome) fall back to a unit-scale prior.
    pub fn from_outcomes(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Domain("priors need a non-empty outcome vector".into()));
        }
        let n = y.len();
        let logs: Vec<f64> = y.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
        let p_bar = logs.len() as f64 / n as f64;
        let (mu_bar, sigma_bar) = match logs.len() {
            0 => (0.0, 1.0),
            1 => (logs[0], 1.0),
            m => {
                let mean = logs.iter().sum::<f64>() / m as f64;
                let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / m as f64;
                (mean, var.sqrt())
            }
        };
        Ok(Self {
            p_bar,
            mu_bar,
            sigma_bar: sigma_bar.clamp(SIGMA_CLAMP_MIN, SIGMA_CLAMP_MAX),
        })
    }
}

/// Shrinkage strengths: `alpha_p` acts as a pseudo-count on the conversion
/// rate, `alpha_reg` on the log-scale moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha_p: f64,
    pub alpha_reg: f64,
}

impl SmoothingConfig {
    pub fn new(alpha_p: f64, alpha_reg: f64) -> Result<Self> {
        for (name, value) in [("alpha_p", alpha_p), ("alpha_reg", alpha_reg)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: if name == "alpha_p" { "alpha_p" } else { "alpha_reg" },
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(Self { alpha_p, alpha_reg })
    }
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        // A leaf with 10 positives weighs sample and prior evenly.
        Self {
            alpha_p: 10.0,
            alpha_reg: 10.0,
        }
    }
}

/// What a node estimates and splits on: smoothed ZILN uplift (treated minus
/// control expectation), or the pooled mean outcome. The latter is the
/// MSE-split propensity baseline: treatment-blind variance-reduction splits
/// whose score ranks accounts by outcome level, not incremental effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauEstimator {
    RobustZiln,
    OutcomeMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub smoothing: SmoothingConfig,
    pub bootstrap: bool,
    /// Fraction of features drawn per split; `None` means `sqrt(d)/d`.
    pub feature_subsample: Option<f64>,
    pub min_leaf_treated: usize,
    pub min_leaf_control: usize,
    pub estimator: TauEstimator,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 20,
            max_depth: 6,
            smoothing: SmoothingConfig::default(),
            bootstrap: true,
            feature_subsample: None,
            min_leaf_treated: 2,
            min_leaf_control: 2,
            estimator: TauEstimator::RobustZiln,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if let Some(f) = self.feature_subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "feature_subsample must lie in (0, 1], got {f}"
                )));
            }
        }
        if self.min_leaf_treated < 2 || self.min_leaf_control < 2 {
            return Err(Error::Config(
                "min_leaf_treated and min_leaf_control must be at least 2".into(),
            ));
        }
        SmoothingConfig::new(self.smoothing.alpha_p, self.smoothing.alpha_reg)?;
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        match self.feature_subsample {
            Some(f) => ((f * d as f64).ceil() as usize).clamp(1, d),
            None => ((d as f64).sqrt().ceil() as usize).clamp(1, d),
        }
    }
}

/// Tree stored as a flat node array; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        tau_hat: f64,
        treated: ZilnParams,
        control: ZilnParams,
        n_treated: usize,
        n_control: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftTree {
    pub nodes: Vec<TreeNode>,
}

impl UpliftTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { tau_hat, .. } => return *tau_hat,
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
    }

    /// Node levels, root counted as 1.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], idx: usize) -> usize {
            match &nodes[idx] {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

const FOREST_FORMAT_VERSION: u32 = 1;
const FOREST_KIND: &str = "ziln_uplift_forest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftForest {
    pub format_version: u32,
    pub kind: String,
    pub n_features: usize,
    pub config: ForestConfig,
    pub trees: Vec<UpliftTree>,
}

impl UpliftScorer for UpliftForest {
    fn predict_uplift_row(&self, x: &[f64]) -> f64 {
        self.predict_row(x)
    }
}

/// Accumulated sufficient statistics for one treatment arm. The positive
/// logs are kept so moments are computed in a stable two-pass form.
#[derive(Debug, Clone, Default)]
struct ArmSamples {
    n: usize,
    pos_logs: Vec<f64>,
}

impl ArmSamples {
    fn push(&mut self, y: f64) {
        self.n += 1;
        if y > 0.0 {
            self.pos_logs.push(y.ln());
        }
    }
}

fn robust_params_from_logs(
    n: usize,
    pos_logs: &[f64],
    priors: &Priors,
    cfg: &SmoothingConfig,
) -> ZilnParams {
    let n_pos = pos_logs.len();
    let p_hat = (n_pos as f64 + cfg.alpha_p * priors.p_bar) / (n as f64 + cfg.alpha_p);
    let (mu_hat, sigma_hat) = if n_pos > 1 {
        let mu_s = pos_logs.iter().sum::<f64>() / n_pos as f64;
        let var_s = pos_logs.iter().map(|l| (l - mu_s) * (l - mu_s)).sum::<f64>() / n_pos as f64;
        let sigma_s = var_s.sqrt();
        let w = n_pos as f64 / (n_pos as f64 + cfg.alpha_reg);
        (
            w * mu_s + (1.0 - w) * priors.mu_bar,
            w * sigma_s + (1.0 - w) * priors.sigma_bar,
        )
    } else {
        (priors.mu_bar, priors.sigma_bar)
    };
    ZilnParams {
        pi: p_hat,
        mu: mu_hat,
        sigma: sigma_hat.clamp(SIGMA_CLAMP_MIN, SIGMA_CLAMP_MAX),
    }
}

/// Smoothed ZILN parameters for one arm's outcomes: propensity smoothing by
/// pseudo-count, magnitude smoothing by `w = n_pos / (n_pos + alpha_reg)`
/// (prior-only below two positives), then the sigma clamp.
pub fn calc_robust_params(y: &[f64], priors: &Priors, cfg: &SmoothingConfig) -> Result<ZilnParams> {
    if y.is_empty() {
        return Err(Error::Domain(
            "calc_robust_params needs a non-empty outcome vector".into(),
        ));
    }
    if y.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("outcomes must be non-negative".into()));
    }
    let pos_logs: Vec<f64> = y.iter().filter(|&&v| v > 0.0).map(|v| v.ln()).collect();
    Ok(robust_params_from_logs(y.len(), &pos_logs, priors, cfg))
}

fn arm_uplift(
    treated: &ArmSamples,
    control: &ArmSamples,
    priors: &Priors,
    cfg: &SmoothingConfig,
) -> Result<f64> {
    let pt = robust_params_from_logs(treated.n, &treated.pos_logs, priors, cfg);
    let pc = robust_params_from_logs(control.n, &control.pos_logs, priors, cfg);
    Ok(pt.expected_value()? - pc.expected_value()?)
}

/// Node uplift: difference of smoothed arm expectations. `Ok(None)` when an
/// arm has fewer than two samples, which callers treat as "unsplittable".
pub fn node_uplift(
    y: &[f64],
    t: &[bool],
    priors: &Priors,
    cfg: &SmoothingConfig,
) -> Result<Option<f64>> {
    if y.len() != t.len() {
        return Err(Error::Shape {
            what: "node outcome/treatment vectors",
            expected: y.len(),
            got: t.len(),
        });
    }
    let mut treated = ArmSamples::default();
    let mut control = ArmSamples::default();
    for (&yi, &ti) in y.iter().zip(t) {
        if ti {
            treated.push(yi);
        } else {
            control.push(yi);
        }
    }
    if treated.n < 2 || control.n < 2 {
        return Ok(None);
    }
    Ok(Some(arm_uplift(&treated, &control, priors, cfg)?))
}

/// Size-weighted squared uplift difference of two children.
pub fn heterogeneity_gain(n_left: usize, n_right: usize, tau_left: f64, tau_right: f64) -> f64 {
    let nl = n_left as f64;
    let nr = n_right as f64;
    let total = nl + nr;
    nl * nr / (total * total) * (tau_left - tau_right) * (tau_left - tau_right)
}

/// Gain of the partition `in_left` over the node `(y, t)`. Returns 0 when
/// either child fails the two-per-arm minimum.
pub fn split_gain(
    y: &[f64],
    t: &[bool],
    in_left: &[bool],
    priors: &Priors,
    cfg: &SmoothingConfig,
) -> Result<f64> {
    if y.len() != t.len() || y.len() != in_left.len() {
        return Err(Error::Shape {
            what: "split vectors",
            expected: y.len(),
            got: t.len().min(in_left.len()),
        });
    }
    let mut left_y = Vec::new();
    let mut left_t = Vec::new();
    let mut right_y = Vec::new();
    let mut right_t = Vec::new();
    for i in 0..y.len() {
        if in_left[i] {
            left_y.push(y[i]);
            left_t.push(t[i]);
        } else {
            right_y.push(y[i]);
            right_t.push(t[i]);
        }
    }
    let (Some(tau_l), Some(tau_r)) = (
        node_uplift(&left_y, &left_t, priors, cfg)?,
        node_uplift(&right_y, &right_t, priors, cfg)?,
    ) else {
        return Ok(0.0);
    };
    Ok(heterogeneity_gain(left_y.len(), right_y.len(), tau_l, tau_r))
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    cfg: &'a ForestConfig,
    priors: &'a Priors,
    d: usize,
    nodes: Vec<TreeNode>,
}

struct ChildStats {
    samples_t: ArmSamples,
    samples_c: ArmSamples,
    sum_t: f64,
    sum_c: f64,
}

impl ChildStats {
    fn new() -> Self {
        Self {
            samples_t: ArmSamples::default(),
            samples_c: ArmSamples::default(),
            sum_t: 0.0,
            sum_c: 0.0,
        }
    }

    fn push(&mut self, y: f64, t: bool) {
        if t {
            self.samples_t.push(y);
            self.sum_t += y;
        } else {
            self.samples_c.push(y);
            self.sum_c += y;
        }
    }

    fn n(&self) -> usize {
        self.samples_t.n + self.samples_c.n
    }

    fn tau(&self, priors: &Priors, cfg: &SmoothingConfig, estimator: TauEstimator) -> Result<f64> {
        match estimator {
            TauEstimator::RobustZiln => arm_uplift(&self.samples_t, &self.samples_c, priors, cfg),
            TauEstimator::OutcomeMean => Ok((self.sum_t + self.sum_c) / self.n() as f64),
        }
    }
}

impl<'a> TreeBuilder<'a> {
    /// Candidate thresholds: midpoints of consecutive distinct sorted
    /// values, thinned to at most [`MAX_SPLIT_CANDIDATES`] quantile-spaced
    /// picks.
    fn candidate_thresholds(&self, rows: &[usize], feature: usize) -> Vec<f64> {
        let mut values: Vec<f64> = rows
            .iter()
            .map(|&r| self.data.features[r * self.d + feature])
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        if values.len() < 2 {
            return Vec::new();
        }
        let n_mid = values.len() - 1;
        if n_mid <= MAX_SPLIT_CANDIDATES {
            (0..n_mid)
                .map(|i| 0.5 * (values[i] + values[i + 1]))
                .collect()
        } else {
            (0..MAX_SPLIT_CANDIDATES)
                .map(|k| {
                    let i = (k * n_mid) / MAX_SPLIT_CANDIDATES;
                    0.5 * (values[i] + values[i + 1])
                })
                .collect()
        }
    }

    fn evaluate_split(&self, rows: &[usize], feature: usize, threshold: f64) -> Result<f64> {
        let mut left = ChildStats::new();
        let mut right = ChildStats::new();
        for &r in rows {
            let x = self.data.features[r * self.d + feature];
            if x <= threshold {
                left.push(self.data.outcome[r], self.data.treatment[r]);
            } else {
                right.push(self.data.outcome[r], self.data.treatment[r]);
            }
        }
        let arm_ok = |c: &ChildStats| {
            c.samples_t.n >= self.cfg.min_leaf_treated && c.samples_c.n >= self.cfg.min_leaf_control
        };
        if !arm_ok(&left) || !arm_ok(&right) {
            return Ok(0.0);
        }
        let tau_l = left.tau(self.priors, &self.cfg.smoothing, self.cfg.estimator)?;
        let tau_r = right.tau(self.priors, &self.cfg.smoothing, self.cfg.estimator)?;
        Ok(heterogeneity_gain(left.n(), right.n(), tau_l, tau_r))
    }

    fn best_split(
        &self,
        rows: &[usize],
        features: &[usize],
    ) -> Result<Option<(usize, f64, f64)>> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            for threshold in self.candidate_thresholds(rows, f) {
                let gain = self.evaluate_split(rows, f, threshold)?;
                // Strictly-greater keeps the lowest feature index and lowest
                // threshold among exact gain ties.
                if gain > 0.0 && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, threshold, gain));
                }
            }
        }
        Ok(best)
    }

    fn make_leaf(&self, rows: &[usize]) -> Result<TreeNode> {
        let mut stats = ChildStats::new();
        for &r in rows {
            stats.push(self.data.outcome[r], self.data.treatment[r]);
        }
        let treated = robust_params_from_logs(
            stats.samples_t.n,
            &stats.samples_t.pos_logs,
            self.priors,
            &self.cfg.smoothing,
        );
        let control = robust_params_from_logs(
            stats.samples_c.n,
            &stats.samples_c.pos_logs,
            self.priors,
            &self.cfg.smoothing,
        );
        let tau_hat = stats.tau(self.priors, &self.cfg.smoothing, self.cfg.estimator)?;
        Ok(TreeNode::Leaf {
            tau_hat,
            treated,
            control,
            n_treated: stats.samples_t.n,
            n_control: stats.samples_c.n,
        })
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut RandomSource) -> Result<usize> {
        if depth < self.cfg.max_depth {
            let features = self.sample_features(rng);
            if let Some((feature, threshold, _gain)) = self.best_split(&rows, &features)? {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| self.data.features[r * self.d + feature] <= threshold);
                let idx = self.nodes.len();
                self.nodes.push(TreeNode::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let left = self.build(left_rows, depth + 1, rng)?;
                let right = self.build(right_rows, depth + 1, rng)?;
                if let TreeNode::Split {
                    left: l, right: r, ..
                } = &mut self.nodes[idx]
                {
                    *l = left;
                    *r = right;
                }
                return Ok(idx);
            }
        }
        let leaf = self.make_leaf(&rows)?;
        let idx = self.nodes.len();
        self.nodes.push(leaf);
        Ok(idx)
    }

    fn sample_features(&self, rng: &mut RandomSource) -> Vec<usize> {
        let k = self.cfg.features_per_split(self.d);
        if k >= self.d {
            return (0..self.d).collect();
        }
        let mut picked = rand::seq::index::sample(rng, self.d, k).into_vec();
        // Ascending order so gain ties resolve toward the lowest feature.
        picked.sort_unstable();
        picked
    }
}

fn grow_tree_rows(
    data: &Dataset,
    rows: Vec<usize>,
    cfg: &ForestConfig,
    priors: &Priors,
    rng: &mut RandomSource,
) -> Result<UpliftTree> {
    let mut builder = TreeBuilder {
        data,
        cfg,
        priors,
        d: data.n_features(),
        nodes: Vec::new(),
    };
    builder.build(rows, 1, rng)?;
    Ok(UpliftTree {
        nodes: builder.nodes,
    })
}

/// Grow a single tree over the whole dataset. Greedy best-gain splitting;
/// recursion stops at `max_depth` (node levels, root = 1), zero best gain,
/// or when no candidate keeps two treated and two control samples per child.
pub fn grow_tree(
    data: &Dataset,
    cfg: &ForestConfig,
    priors: &Priors,
    rng: &mut RandomSource,
) -> Result<UpliftTree> {
    cfg.validate()?;
    if data.n_treated() < 2 || data.n_control() < 2 {
        return Err(Error::Config(
            "tree growing needs at least 2 treated and 2 control rows".into(),
        ));
    }
    grow_tree_rows(data, (0..data.n_rows()).collect(), cfg, priors, rng)
}

fn fit_one_tree(data: &Dataset, cfg: &ForestConfig, tree_idx: usize) -> Result<UpliftTree> {
    let n = data.n_rows();
    let mut rng = derived(cfg.seed, tree_idx as u64);
    let rows: Vec<usize> = if cfg.bootstrap {
        let mut attempt = 0;
        loop {
            use rand::Rng;
            let draw: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let treated = draw.iter().filter(|&&r| data.treatment[r]).count();
            if treated >= 2 && draw.len() - treated >= 2 {
                break draw;
            }
            attempt += 1;
            if attempt > 100 {
                return Err(Error::Config(
                    "bootstrap cannot find a resample with 2 samples per arm".into(),
                ));
            }
        }
    } else {
        (0..n).collect()
    };
    let outcomes: Vec<f64> = rows.iter().map(|&r| data.outcome[r]).collect();
    let priors = Priors::from_outcomes(&outcomes)?;
    grow_tree_rows(data, rows, cfg, &priors, &mut rng)
}

/// Worker threads used for tree fitting: the `ZILN_UPLIFT_THREADS`
/// environment variable when set, otherwise the available parallelism.
/// Results are identical for any thread count since every tree owns an
/// independent derived stream.
fn fitting_threads(n_trees: usize) -> usize {
    let configured = std::env::var("ZILN_UPLIFT_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&k| k >= 1);
    let threads = configured.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
    });
    threads.min(n_trees).max(1)
}

/// Fit a bagged forest: per-tree bootstrap resampling (when enabled),
/// per-tree priors from that tree's sample, feature subsampling per split.
pub fn fit_forest(data: &Dataset, cfg: &ForestConfig) -> Result<UpliftForest> {
    cfg.validate()?;
    if data.n_treated() < 2 || data.n_control() < 2 {
        return Err(Error::Config(
            "forest fitting needs at least 2 treated and 2 control rows".into(),
        ));
    }
    let threads = fitting_threads(cfg.n_trees);
    let mut slots: Vec<Option<Result<UpliftTree>>> = (0..cfg.n_trees).map(|_| None).collect();
    if threads <= 1 {
        for (tree_idx, slot) in slots.iter_mut().enumerate() {
            *slot = Some(fit_one_tree(data, cfg, tree_idx));
        }
    } else {
        let results = std::sync::Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for worker in 0..threads {
                let results = &results;
                scope.spawn(move || {
                    for tree_idx in (worker..cfg.n_trees).step_by(threads) {
                        let tree = fit_one_tree(data, cfg, tree_idx);
                        results.lock().unwrap()[tree_idx] = Some(tree);
                    }
                });
            }
        });
    }
    let trees = slots
        .into_iter()
        .map(|slot| slot.expect("every tree slot filled"))
        .collect::<Result<Vec<_>>>()?;
    Ok(UpliftForest {
        format_version: FOREST_FORMAT_VERSION,
        kind: FOREST_KIND.to_string(),
        n_features: data.n_features(),
        config: cfg.clone(),
        trees,
    })
}

impl UpliftForest {
    pub fn fit(data: &Dataset, cfg: &ForestConfig) -> Result<Self> {
        fit_forest(data, cfg)
    }

    /// Mean of the per-tree leaf estimates.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n_rows()).map(|i| self.predict_row(data.row(i))).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let forest: UpliftForest = serde_json::from_str(&text)?;
        if forest.kind != FOREST_KIND {
            return Err(Error::Config(format!(
                "artifact kind {:?} is not a forest",
                forest.kind
            )));
        }
        if forest.format_version != FOREST_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported forest format version {}",
                forest.format_version
            )));
        }
        Ok(forest)
    }
}
