//! Synthetic zero-inflated benchmark generator.
//!
//! Mimics sparse B2B revenue: mixed binary/continuous telemetry features,
//! randomized treatment, a stochastic hurdle deciding conversion, and a
//! lognormal magnitude for converters. Every row also carries its analytic
//! ground-truth uplift, which real data never has.
//!
//! Response structure (all linear forms live on *disjoint* feature subsets,
//! with binary features centered by their own rate):
//!
//! ```text
//! conversion logit  L(x, t) = base + prog(x) + t * hs * pers(x)
//! log magnitude     M(x, t) = mu0 + mag(x) + t * hs * delta(x)
//! outcome           y       = Bernoulli(sigmoid(L)) * exp(M + sigma_y * N(0,1))
//! true uplift       tau(x)  = sigmoid(L(x,1)) * exp(M(x,1) + sigma_y^2/2)
//!                           - sigmoid(L(x,0)) * exp(M(x,0) + sigma_y^2/2)
//! ```
//!
//! `hs` is [`GenConfig::heterogeneity_strength`]; at zero the treatment terms
//! vanish and the true uplift is identically zero. The `base` intercept is
//! bisected so the expected conversion rate hits the configured zero
//! fraction. Weight vectors are drawn once per seed and rescaled so each
//! linear form has a fixed target standard deviation.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::sigmoid;
use crate::rng::{derived, standard_normal, uniform, RandomSource};

/// Generator settings. Defaults are desk-scale: 20k accounts, 34 binary and
/// 66 continuous features, >80% zero outcomes, 50/50 randomized treatment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_accounts: usize,
    pub n_binary: usize,
    pub n_continuous: usize,
    pub zero_fraction_target: f64,
    pub treatment_fraction: f64,
    pub heterogeneity_strength: f64,
    pub sigma_y: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_accounts: 20_000,
            n_binary: 34,
            n_continuous: 66,
            zero_fraction_target: 0.83,
            treatment_fraction: 0.5,
            heterogeneity_strength: 1.0,
            sigma_y: 0.8,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_accounts == 0 {
            return Err(Error::Config("n_accounts must be positive".into()));
        }
        if self.n_binary + self.n_continuous < 4 {
            return Err(Error::Config("need at least 4 features".into()));
        }
        if !(self.zero_fraction_target > 0.0 && self.zero_fraction_target < 1.0) {
            return Err(Error::Config(format!(
                "zero_fraction_target must lie in (0, 1), got {}",
                self.zero_fraction_target
            )));
        }
        if !(0.0..=1.0).contains(&self.treatment_fraction) {
            return Err(Error::Config(format!(
                "treatment_fraction must lie in [0, 1], got {}",
                self.treatment_fraction
            )));
        }
        if !(self.sigma_y > 0.0 && self.sigma_y.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_y must be positive, got {}",
                self.sigma_y
            )));
        }
        if !(self.heterogeneity_strength >= 0.0 && self.heterogeneity_strength.is_finite()) {
            return Err(Error::Config(format!(
                "heterogeneity_strength must be >= 0, got {}",
                self.heterogeneity_strength
            )));
        }
        Ok(())
    }
}

/// Columnar dataset: row-major features (binary columns first), treatment
/// flags, non-negative outcomes, and optional generator-only true uplift.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_binary: usize,
    pub n_continuous: usize,
    pub features: Vec<f64>,
    pub treatment: Vec<bool>,
    pub outcome: Vec<f64>,
    pub true_uplift: Option<Vec<f64>>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.treatment.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_binary + self.n_continuous
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n_rows() - self.n_treated()
    }

    /// Copy of the selected rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut features = Vec::with_capacity(rows.len() * d);
        let mut treatment = Vec::with_capacity(rows.len());
        let mut outcome = Vec::with_capacity(rows.len());
        let mut true_uplift = self.true_uplift.as_ref().map(|_| Vec::with_capacity(rows.len()));
        for &r in rows {
            features.extend_from_slice(self.row(r));
            treatment.push(self.treatment[r]);
            outcome.push(self.outcome[r]);
            if let (Some(dst), Some(src)) = (true_uplift.as_mut(), self.true_uplift.as_ref()) {
                dst.push(src[r]);
            }
        }
        Dataset {
            n_binary: self.n_binary,
            n_continuous: self.n_continuous,
            features,
            treatment,
            outcome,
            true_uplift,
        }
    }

    /// Deterministic head/tail split: first `ceil(frac * n)` rows and the
    /// rest. Generated rows are exchangeable, so no shuffle is needed.
    pub fn split_at_fraction(&self, frac: f64) -> (Dataset, Dataset) {
        let cut = ((self.n_rows() as f64) * frac).ceil() as usize;
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..self.n_rows()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}

/// Sparse linear form over a disjoint feature subset. Binary features are
/// centered by their generation rate before weighting.
#[derive(Debug, Clone)]
struct LinearForm {
    terms: Vec<(usize, f64)>,
}

impl LinearForm {
    fn eval(&self, row: &[f64], model: &ResponseModel) -> f64 {
        self.terms
            .iter()
            .map(|&(j, w)| w * model.centered(j, row[j]))
            .sum()
    }
}

#[derive(Debug, Clone)]
struct ResponseModel {
    n_binary: usize,
    binary_rates: Vec<f64>,
    prognostic: LinearForm,
    persuasion: LinearForm,
    persuasion_0: f64,
    magnitude: LinearForm,
    mu_0: f64,
    delta: LinearForm,
    delta_0: f64,
}

impl ResponseModel {
    fn centered(&self, j: usize, value: f64) -> f64 {
        if j < self.n_binary {
            value - self.binary_rates[j]
        } else {
            value
        }
    }
}

// Target standard deviations of the response linear forms, and the constant
// treatment main effects. Chosen so the conversion logit stays in the
// sigmoid's responsive range while prognostic variation dominates.
const PROG_STD: f64 = 1.2;
const PERS_STD: f64 = 1.1;
const PERS_0: f64 = 0.6;
const MAG_STD: f64 = 0.4;
const MU_0: f64 = 1.1;
const DELTA_STD: f64 = 0.8;
const DELTA_0: f64 = 0.25;

fn draw_form(
    pool: &[usize],
    target_std: f64,
    var_of: impl Fn(usize) -> f64,
    rng: &mut RandomSource,
) -> LinearForm {
    let raw: Vec<f64> = (0..pool.len()).map(|_| standard_normal(rng)).collect();
    let total_var: f64 = pool
        .iter()
        .zip(&raw)
        .map(|(&j, &w)| w * w * var_of(j))
        .sum();
    let scale = if total_var > 0.0 {
        target_std / total_var.sqrt()
    } else {
        0.0
    };
    LinearForm {
        terms: pool.iter().zip(&raw).map(|(&j, &w)| (j, w * scale)).collect(),
    }
}

fn build_model(cfg: &GenConfig, rng: &mut RandomSource) -> ResponseModel {
    let d = cfg.n_binary + cfg.n_continuous;
    let binary_rates: Vec<f64> = (0..cfg.n_binary).map(|_| uniform(rng, 0.15, 0.85)).collect();

    // Disjoint feature pools from a seeded shuffle.
    let mut order: Vec<usize> = (0..d).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    let mut take = |want: usize| -> Vec<usize> {
        let n = want.min(order.len());
        order.drain(..n).collect()
    };
    let prog_pool = take((d / 10).max(1));
    let pers_pool = take((d * 8 / 100).max(1));
    let mag_pool = take((d * 6 / 100).max(1));
    let delta_pool = take((d / 20).max(1));

    let n_binary = cfg.n_binary;
    let rates = binary_rates.clone();
    let var_of = move |j: usize| {
        if j < n_binary {
            rates[j] * (1.0 - rates[j])
        } else {
            1.0
        }
    };

    ResponseModel {
        n_binary: cfg.n_binary,
        prognostic: draw_form(&prog_pool, PROG_STD, &var_of, rng),
        persuasion: draw_form(&pers_pool, PERS_STD, &var_of, rng),
        persuasion_0: PERS_0,
        magnitude: draw_form(&mag_pool, MAG_STD, &var_of, rng),
        mu_0: MU_0,
        delta: draw_form(&delta_pool, DELTA_STD, &var_of, rng),
        delta_0: DELTA_0,
        binary_rates,
    }
}

/// Per-row linear terms. Treatment terms are pre-scaled by the
/// heterogeneity strength.
struct RowTerms {
    prog: Vec<f64>,
    pers: Vec<f64>,
    mag: Vec<f64>,
    delta: Vec<f64>,
}

fn compute_terms(model: &ResponseModel, features: &[f64], d: usize, hs: f64) -> RowTerms {
    let n = features.len() / d;
    let mut terms = RowTerms {
        prog: Vec::with_capacity(n),
        pers: Vec::with_capacity(n),
        mag: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
    };
    for i in 0..n {
        let row = &features[i * d..(i + 1) * d];
        terms.prog.push(model.prognostic.eval(row, model));
        terms
            .pers
            .push(hs * (model.persuasion_0 + model.persuasion.eval(row, model)));
        terms.mag.push(model.mu_0 + model.magnitude.eval(row, model));
        terms
            .delta
            .push(hs * (model.delta_0 + model.delta.eval(row, model)));
    }
    terms
}

/// Bisect the base logit so the mean conversion probability under the
/// realized assignment hits `1 - zero_fraction_target`.
fn resolve_base(terms: &RowTerms, treatment: &[bool], target_conversion: f64) -> Result<f64> {
    let n = treatment.len();
    let mean_conv = |base: f64| -> f64 {
        let mut acc = 0.0;
        for ((&t, &prog), &pers) in treatment.iter().zip(&terms.prog).zip(&terms.pers) {
            let t_term = if t { pers } else { 0.0 };
            acc += sigmoid(base + prog + t_term);
        }
        acc / n as f64
    };
    let (mut lo, mut hi) = (-40.0, 40.0);
    if mean_conv(lo) > target_conversion || mean_conv(hi) < target_conversion {
        return Err(Error::Config(format!(
            "zero fraction target is unreachable; achievable conversion range is [{:.6}, {:.6}]",
            mean_conv(lo),
            mean_conv(hi)
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_conv(mid) < target_conversion {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generate a dataset. Deterministic per seed; independent sub-streams for
/// the response model, feature draws, treatment, hurdle, and noise keep the
/// stages decoupled.
#[allow(clippy::needless_range_loop)]
pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_accounts;
    let d = cfg.n_binary + cfg.n_continuous;

    let mut model_rng = derived(cfg.seed, 0);
    let model = build_model(cfg, &mut model_rng);

    let mut feat_rng = derived(cfg.seed, 1);
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n {
        for j in 0..d {
            if j < cfg.n_binary {
                use rand::Rng;
                let v = feat_rng.random::<f64>() < model.binary_rates[j];
                features.push(if v { 1.0 } else { 0.0 });
            } else {
                features.push(standard_normal(&mut feat_rng));
            }
        }
    }

    let mut treat_rng = derived(cfg.seed, 2);
    let treatment: Vec<bool> = (0..n)
        .map(|_| {
            use rand::Rng;
            treat_rng.random::<f64>() < cfg.treatment_fraction
        })
        .collect();

    let terms = compute_terms(&model, &features, d, cfg.heterogeneity_strength);
    let base = resolve_base(&terms, &treatment, 1.0 - cfg.zero_fraction_target)?;

    let mut hurdle_rng = derived(cfg.seed, 3);
    let mut noise_rng = derived(cfg.seed, 4);
    let half_var = 0.5 * cfg.sigma_y * cfg.sigma_y;
    let mut outcome = Vec::with_capacity(n);
    let mut true_uplift = Vec::with_capacity(n);
    for i in 0..n {
        let logit_c = base + terms.prog[i];
        let logit_t = logit_c + terms.pers[i];
        let (logit, mu) = if treatment[i] {
            (logit_t, terms.mag[i] + terms.delta[i])
        } else {
            (logit_c, terms.mag[i])
        };
        use rand::Rng;
        let converted = hurdle_rng.random::<f64>() < sigmoid(logit);
        let y = if converted {
            (mu + cfg.sigma_y * standard_normal(&mut noise_rng)).exp()
        } else {
            0.0
        };
        outcome.push(y);
        true_uplift.push(
            sigmoid(logit_t) * (terms.mag[i] + terms.delta[i] + half_var).exp()
                - sigmoid(logit_c) * (terms.mag[i] + half_var).exp(),
        );
    }

    Ok(Dataset {
        n_binary: cfg.n_binary,
        n_continuous: cfg.n_continuous,
        features,
        treatment,
        outcome,
        true_uplift: Some(true_uplift),
    })
}

fn column_names(n_binary: usize, n_continuous: usize, with_truth: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(n_binary + n_continuous + 3);
    for j in 0..n_binary {
        names.push(format!("bf{j}"));
    }
    for j in 0..n_continuous {
        names.push(format!("cf{}", n_binary + j));
    }
    names.push("treatment".into());
    names.push("outcome".into());
    if with_truth {
        names.push("true_uplift".into());
    }
    names
}

/// Write a dataset as CSV. Floats use shortest round-trip formatting, so a
/// write/read cycle reproduces every value exactly.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let names = column_names(data.n_binary, data.n_continuous, data.true_uplift.is_some());
    out.push_str(&names.join(","));
    out.push('\n');
    let d = data.n_features();
    for i in 0..data.n_rows() {
        for &v in data.row(i).iter().take(d) {
            let _ = write!(out, "{v},");
        }
        let _ = write!(
            out,
            "{},{}",
            if data.treatment[i] { 1 } else { 0 },
            data.outcome[i]
        );
        if let Some(tu) = &data.true_uplift {
            let _ = write!(out, ",{}", tu[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_field(raw: &str, line: usize, col: &str) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::Parse {
            line,
            msg: format!("missing value in column {col}"),
        });
    }
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("unparseable value {raw:?} in column {col}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {raw:?} in column {col}"),
        });
    }
    Ok(v)
}

/// Read a dataset written by [`write_csv`]. Strict: exact header names,
/// no missing values, treatment limited to {0, 1}, outcomes non-negative.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file, expected a header row".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();

    let n_binary = cols.iter().take_while(|c| c.starts_with("bf")).count();
    let n_continuous = cols
        .iter()
        .skip(n_binary)
        .take_while(|c| c.starts_with("cf"))
        .count();
    let d = n_binary + n_continuous;
    let expected = column_names(n_binary, n_continuous, false);
    let header_ok = d > 0
        && cols.len() >= d + 2
        && cols
            .iter()
            .take(d + 2)
            .copied()
            .eq(expected.iter().map(|s| s.as_str()));
    if !header_ok {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be bf0..,cf..,treatment,outcome[,true_uplift]".into(),
        });
    }
    let with_truth = match cols.len() - (d + 2) {
        0 => false,
        1 if cols[d + 2] == "true_uplift" => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected trailing columns after outcome: {:?}", &cols[d + 2..]),
            })
        }
    };

    let mut features = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut true_uplift = if with_truth { Some(Vec::new()) } else { None };
    for (idx, raw_line) in lines.enumerate() {
        let line = idx + 2;
        let fields: Vec<&str> = raw_line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        for (j, c) in fields.iter().take(d).enumerate() {
            let v = parse_field(c, line, &expected[j])?;
            if j < n_binary && v != 0.0 && v != 1.0 {
                return Err(Error::Parse {
                    line,
                    msg: format!("binary column {} must be 0 or 1, got {v}", expected[j]),
                });
            }
            features.push(v);
        }
        let t = parse_field(fields[d], line, "treatment")?;
        if t != 0.0 && t != 1.0 {
            return Err(Error::Parse {
                line,
                msg: format!("treatment must be 0 or 1, got {t}"),
            });
        }
        treatment.push(t == 1.0);
        let y = parse_field(fields[d + 1], line, "outcome")?;
        if y < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("outcome must be non-negative, got {y}"),
            });
        }
        outcome.push(y);
        if let Some(tu) = true_uplift.as_mut() {
            tu.push(parse_field(fields[d + 2], line, "true_uplift")?);
        }
    }
    if treatment.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    Ok(Dataset {
        n_binary,
        n_continuous,
        features,
        treatment,
        outcome,
        true_uplift,
    })
}
