//! Uplift evaluation: cumulative-lift curves, AUUC, Qini, Lift@k, Kendall
//! rank correlation against ground truth, and scoring latency.
//!
//! The curve uses the within-prefix two-arm estimator: rank rows by score
//! descending (stable on ties), and at a prefix of size k the cumulative
//! lift is
//!
//! ```text
//! lift(k) = (sum(y | treated, prefix) / n_treated(prefix)
//!          - sum(y | control, prefix) / n_control(prefix)) * k
//! ```
//!
//! defined as zero until both arms appear in the prefix. Curves are read off
//! a 101-point percentile grid. The random baseline is the straight line
//! from zero to the full-population lift, so Qini = AUUC minus its area.

use std::time::Instant;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::UpliftScorer;

/// Ranked cumulative-lift series on a percentile grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UpliftCurve {
    pub fractions: Vec<f64>,
    pub incremental_value: Vec<f64>,
    pub random_baseline: Vec<f64>,
}

const GRID_POINTS: usize = 101;

/// Cumulative uplift curve of `scores` against observed outcomes and arms.
pub fn uplift_curve(scores: &[f64], y: &[f64], t: &[bool]) -> Result<UpliftCurve> {
    let n = scores.len();
    if y.len() != n || t.len() != n {
        return Err(Error::Shape {
            what: "curve inputs",
            expected: n,
            got: y.len().min(t.len()),
        });
    }
    if n == 0 {
        return Err(Error::Domain("uplift curve needs at least one row".into()));
    }
    let n_treated = t.iter().filter(|&&v| v).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::Domain(
            "uplift curve needs both treated and control rows".into(),
        ));
    }

    // Stable descending sort: ties keep input order, independent of seeds.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut lift_at_k = Vec::with_capacity(n + 1);
    lift_at_k.push(0.0);
    let (mut sum_t, mut cnt_t, mut sum_c, mut cnt_c) = (0.0, 0usize, 0.0, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if t[i] {
            sum_t += y[i];
            cnt_t += 1;
        } else {
            sum_c += y[i];
            cnt_c += 1;
        }
        let lift = if cnt_t == 0 || cnt_c == 0 {
            0.0
        } else {
            (sum_t / cnt_t as f64 - sum_c / cnt_c as f64) * (k + 1) as f64
        };
        lift_at_k.push(lift);
    }
    let total = *lift_at_k.last().unwrap();

    let mut fractions = Vec::with_capacity(GRID_POINTS);
    let mut incremental_value = Vec::with_capacity(GRID_POINTS);
    let mut random_baseline = Vec::with_capacity(GRID_POINTS);
    for i in 0..GRID_POINTS {
        let f = i as f64 / (GRID_POINTS - 1) as f64;
        let k = (f * n as f64).round() as usize;
        fractions.push(f);
        incremental_value.push(lift_at_k[k.min(n)]);
        random_baseline.push(f * total);
    }
    Ok(UpliftCurve {
        fractions,
        incremental_value,
        random_baseline,
    })
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    let mut area = 0.0;
    for i in 1..xs.len() {
        area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    area
}

/// Area under the cumulative uplift curve.
pub fn auuc(curve: &UpliftCurve) -> f64 {
    trapezoid(&curve.fractions, &curve.incremental_value)
}

/// AUUC minus the random-baseline area.
pub fn qini(curve: &UpliftCurve) -> f64 {
    auuc(curve) - trapezoid(&curve.fractions, &curve.random_baseline)
}

/// Qini rescaled by the absolute full-population lift; zero when the total
/// lift is zero. Scale-free companion to the raw area difference.
pub fn qini_normalized(curve: &UpliftCurve) -> f64 {
    let total = curve.incremental_value.last().copied().unwrap_or(0.0);
    if total == 0.0 {
        0.0
    } else {
        qini(curve) / total.abs()
    }
}

/// Cumulative lift at a targeting fraction, interpolated on the grid.
pub fn lift_at(curve: &UpliftCurve, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let xs = &curve.fractions;
    let ys = &curve.incremental_value;
    let pos = xs.partition_point(|&x| x < fraction);
    if pos == 0 {
        return Ok(ys[0]);
    }
    if (xs[pos.min(xs.len() - 1)] - fraction).abs() < 1e-12 {
        return Ok(ys[pos.min(xs.len() - 1)]);
    }
    let (x0, x1) = (xs[pos - 1], xs[pos]);
    let (y0, y1) = (ys[pos - 1], ys[pos]);
    Ok(y0 + (y1 - y0) * (fraction - x0) / (x1 - x0))
}

/// Kendall tau-b (tie corrected) via merge-sort inversion counting.
/// Errors when either vector is all ties, where tau is undefined.
pub fn krcc(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    let n = predicted.len();
    if truth.len() != n {
        return Err(Error::Shape {
            what: "rank correlation inputs",
            expected: n,
            got: truth.len(),
        });
    }
    if n < 2 {
        return Err(Error::Domain(
            "rank correlation needs at least two rows".into(),
        ));
    }
    if predicted.iter().any(|v| v.is_nan()) || truth.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("rank correlation inputs contain NaN".into()));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        predicted[a]
            .partial_cmp(&predicted[b])
            .unwrap()
            .then(truth[a].partial_cmp(&truth[b]).unwrap())
    });

    let tied_pairs = |counts: &mut dyn Iterator<Item = usize>| -> u64 {
        counts.map(|c| (c as u64) * (c as u64 - 1) / 2).sum()
    };

    // Tied-x and tied-(x, y) pair counts over runs in the sorted order.
    let mut x_runs = Vec::new();
    let mut xy_runs = Vec::new();
    let mut run = 1usize;
    let mut run_xy = 1usize;
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if predicted[a] == predicted[b] {
            run += 1;
            if truth[a] == truth[b] {
                run_xy += 1;
            } else {
                xy_runs.push(run_xy);
                run_xy = 1;
            }
        } else {
            x_runs.push(run);
            run = 1;
            xy_runs.push(run_xy);
            run_xy = 1;
        }
    }
    x_runs.push(run);
    xy_runs.push(run_xy);
    let n1 = tied_pairs(&mut x_runs.into_iter());
    let n_xy = tied_pairs(&mut xy_runs.into_iter());

    // Merge sort the truth sequence, counting exchanges (discordant pairs).
    let mut ys: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
    let mut buf = vec![0.0; n];
    let mut swaps: u64 = 0;
    let mut width = 1usize;
    while width < n {
        let mut lo = 0;
        while lo + width < n {
            let mid = lo + width;
            let hi = (mid + width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if ys[j] < ys[i] {
                    buf[k] = ys[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = ys[i];
                    i += 1;
                }
                k += 1;
            }
            while i < mid {
                buf[k] = ys[i];
                i += 1;
                k += 1;
            }
            while j < hi {
                buf[k] = ys[j];
                j += 1;
                k += 1;
            }
            ys[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo = hi;
        }
        width *= 2;
    }

    // Tied-y pair count over the now fully sorted truth values.
    let mut y_runs = Vec::new();
    run = 1;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            y_runs.push(run);
            run = 1;
        }
    }
    y_runs.push(run);
    let n2 = tied_pairs(&mut y_runs.into_iter());

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    if n1 == n0 || n2 == n0 {
        return Err(Error::Domain(
            "rank correlation undefined for an all-constant vector".into(),
        ));
    }
    let concordant_minus_discordant =
        n0 as f64 - n1 as f64 - n2 as f64 + n_xy as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((concordant_minus_discordant / denom).clamp(-1.0, 1.0))
}

/// Per-row scoring time statistics over warm repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub median_ms_per_row: f64,
    pub p95_ms_per_row: f64,
    pub rows: usize,
    pub repeats: usize,
}

/// Median and p95 per-row scoring time. One untimed warm-up pass, then
/// `repeats` timed full passes.
pub fn latency_probe(
    model: &dyn UpliftScorer,
    data: &Dataset,
    repeats: usize,
) -> Result<LatencyStats> {
    if repeats == 0 {
        return Err(Error::Domain("latency probe needs at least one repeat".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::Domain("latency probe needs at least one row".into()));
    }
    let score_all = |sink: &mut f64| {
        for i in 0..data.n_rows() {
            *sink += model.predict_uplift_row(data.row(i));
        }
    };
    let mut sink = 0.0;
    score_all(&mut sink);

    let mut per_row_ms: Vec<f64> = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        score_all(&mut sink);
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        per_row_ms.push(elapsed / data.n_rows() as f64);
    }
    // The sink keeps the optimizer from discarding the scoring work.
    std::hint::black_box(sink);
    per_row_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = per_row_ms[(per_row_ms.len() - 1) / 2];
    let p95_idx = ((per_row_ms.len() as f64) * 0.95).ceil() as usize - 1;
    Ok(LatencyStats {
        median_ms_per_row: median,
        p95_ms_per_row: per_row_ms[p95_idx.min(per_row_ms.len() - 1)],
        rows: data.n_rows(),
        repeats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    /// Six-row fixture with a fixed score order: prefix lifts traced by
    /// hand are [0, 0, 20, 15, 16, 55/3, 24].
    fn hand_fixture() -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let scores = vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let y = vec![10.0, 0.0, 0.0, 2.0, 4.0, 0.0];
        let t = vec![true, false, true, false, true, false];
        (scores, y, t)
    }

    #[test]
    fn hand_fixture_prefix_values() {
        let (scores, y, t) = hand_fixture();
        let curve = uplift_curve(&scores, &y, &t).unwrap();
        assert_eq!(curve.fractions.len(), 101);
        assert_eq!(curve.incremental_value[0], 0.0);
        // k = round(f * 6): f=0.17 -> k=1, f=0.3 -> k=2, f=0.5 -> k=3,
        // f=0.67 -> k=4, f=0.83 -> k=5, f=1 -> k=6.
        assert_abs_diff_eq!(curve.incremental_value[17], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.incremental_value[30], 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.incremental_value[50], 15.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.incremental_value[67], 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.incremental_value[83], 55.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(curve.incremental_value[100], 24.0, epsilon = 1e-12);
        // Total lift = ATE * n = (14/3 - 2/3) * 6.
        assert_abs_diff_eq!(curve.random_baseline[100], 24.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lift_at(&curve, 0.30).unwrap(), 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lift_at(&curve, 1.0).unwrap(), 24.0, epsilon = 1e-12);
    }

    #[test]
    fn auuc_matches_independent_integration_of_hand_trace() {
        let (scores, y, t) = hand_fixture();
        let curve = uplift_curve(&scores, &y, &t).unwrap();
        let lift_k = [0.0, 0.0, 20.0, 15.0, 16.0, 55.0 / 3.0, 24.0];
        let mut expected = 0.0;
        let mut prev = lift_k[0];
        for i in 1..101 {
            let f = i as f64 / 100.0;
            let k = (f * 6.0).round() as usize;
            expected += 0.5 * (lift_k[k] + prev) * 0.01;
            prev = lift_k[k];
        }
        assert_relative_eq!(auuc(&curve), expected, max_relative = 1e-12);
    }

    #[test]
    fn zero_outcomes_give_zero_curve_and_negative_definitionless_qini() {
        let y = vec![0.0; 8];
        let t = vec![true, false, true, false, true, false, true, false];
        let scores: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let curve = uplift_curve(&scores, &y, &t).unwrap();
        assert!(curve.incremental_value.iter().all(|&v| v == 0.0));
        assert_eq!(auuc(&curve), 0.0);
        // Zero curve means the baseline area is also zero here.
        assert_eq!(qini(&curve), 0.0);
        assert_eq!(qini_normalized(&curve), 0.0);
    }

    #[test]
    fn single_arm_input_is_rejected() {
        let y = vec![1.0, 2.0];
        assert!(uplift_curve(&[1.0, 0.5], &y, &[true, true]).is_err());
        assert!(uplift_curve(&[1.0, 0.5], &y, &[false, false]).is_err());
    }

    fn randomized_rows(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>) {
        let mut rng = seeded(seed);
        let y: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    uniform(&mut rng, 0.2, 10.0)
                } else {
                    0.0
                }
            })
            .collect();
        let t: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
        (y, t)
    }

    #[test]
    fn random_scores_give_near_baseline_curve() {
        let (y, t) = randomized_rows(3, 4000);
        let mut rng = seeded(4);
        let mut qinis = Vec::new();
        for _ in 0..50 {
            let scores: Vec<f64> = (0..y.len()).map(|_| rng.random::<f64>()).collect();
            let curve = uplift_curve(&scores, &y, &t).unwrap();
            qinis.push(qini(&curve));
        }
        let mean = qinis.iter().sum::<f64>() / qinis.len() as f64;
        let sd = (qinis.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>()
            / qinis.len() as f64)
            .sqrt();
        let se = sd / (qinis.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn equal_scores_track_the_random_baseline() {
        // All-equal scores rank rows in input order, which is arbitrary on
        // randomized data; the resulting qini is one draw from the
        // random-ranking null.
        let (y, t) = randomized_rows(21, 4000);
        let equal = vec![1.0; y.len()];
        let q_equal = qini(&uplift_curve(&equal, &y, &t).unwrap());
        let mut rng = seeded(22);
        let null: Vec<f64> = (0..50)
            .map(|_| {
                let scores: Vec<f64> = (0..y.len()).map(|_| rng.random::<f64>()).collect();
                qini(&uplift_curve(&scores, &y, &t).unwrap())
            })
            .collect();
        let sd = {
            let m = null.iter().sum::<f64>() / null.len() as f64;
            (null.iter().map(|q| (q - m) * (q - m)).sum::<f64>() / null.len() as f64).sqrt()
        };
        assert!(q_equal.abs() < 4.0 * sd, "qini {q_equal} vs null sd {sd}");
    }

    #[test]
    fn lift_vanishes_toward_zero_fraction() {
        let (scores, y, t) = hand_fixture();
        let curve = uplift_curve(&scores, &y, &t).unwrap();
        assert!(lift_at(&curve, 1e-9).unwrap().abs() < 1e-12);
        assert!(lift_at(&curve, 0.0).is_err());
        assert!(lift_at(&curve, 1.1).is_err());
    }

    #[test]
    fn doubling_outcomes_doubles_every_metric() {
        let (y, t) = randomized_rows(9, 500);
        let mut rng = seeded(10);
        let scores: Vec<f64> = (0..y.len()).map(|_| rng.random::<f64>()).collect();
        let base = uplift_curve(&scores, &y, &t).unwrap();
        let doubled_y: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let doubled = uplift_curve(&scores, &doubled_y, &t).unwrap();
        assert_eq!(2.0 * auuc(&base), auuc(&doubled));
        assert_eq!(2.0 * qini(&base), qini(&doubled));
        assert_eq!(
            2.0 * lift_at(&base, 0.3).unwrap(),
            lift_at(&doubled, 0.3).unwrap()
        );
    }

    #[test]
    fn shifting_scores_changes_nothing() {
        let (y, t) = randomized_rows(11, 400);
        let mut rng = seeded(12);
        let scores: Vec<f64> = (0..y.len()).map(|_| rng.random::<f64>()).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| s + 42.5).collect();
        let a = uplift_curve(&scores, &y, &t).unwrap();
        let b = uplift_curve(&shifted, &y, &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truth_ranking_dominates_permutations() {
        // Outcomes with genuine heterogeneous lift.
        let mut rng = seeded(14);
        let n = 2000;
        let tau: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -1.0, 3.0)).collect();
        let t: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let base = uniform(&mut rng, 0.0, 1.0);
                (base + if t[i] { tau[i].max(0.0) } else { 0.0 }).max(0.0)
            })
            .collect();
        let truth_curve = uplift_curve(&tau, &y, &t).unwrap();
        let truth_qini = qini(&truth_curve);
        use rand::seq::SliceRandom;
        let mut perm = tau.clone();
        for _ in 0..20 {
            perm.shuffle(&mut rng);
            let q = qini(&uplift_curve(&perm, &y, &t).unwrap());
            assert!(q < truth_qini, "permutation qini {q} >= truth {truth_qini}");
        }
    }

    #[test]
    fn krcc_trivial_orderings() {
        let v: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert_eq!(krcc(&v, &v).unwrap(), 1.0);
        let rev: Vec<f64> = v.iter().rev().copied().collect();
        assert_eq!(krcc(&v, &rev).unwrap(), -1.0);
    }

    #[test]
    fn krcc_single_swap() {
        // 5 concordant pairs, 1 discordant: tau = 4/6.
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 3.0, 2.0, 4.0];
        assert_abs_diff_eq!(krcc(&a, &b).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn krcc_rejects_constant_vectors() {
        assert!(krcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(krcc(&[1.0, 2.0, 3.0], &[7.0, 7.0, 7.0]).is_err());
    }

    /// O(n^2) pair enumeration. n1 counts pairs tied in x (including pairs
    /// tied in both), n2 likewise for y.
    fn krcc_brute(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut concordant, mut discordant) = (0i64, 0i64);
        let (mut n1, mut n2) = (0i64, 0i64);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 {
                    n1 += 1;
                }
                if dy == 0.0 {
                    n2 += 1;
                }
                if dx != 0.0 && dy != 0.0 {
                    if dx * dy > 0.0 {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
        }
        let n0 = (n * (n - 1) / 2) as i64;
        (concordant - discordant) as f64
            / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt()
    }

    #[test]
    fn krcc_matches_brute_force_with_ties() {
        let mut rng = seeded(19);
        for trial in 0..60 {
            let n = 2 + (trial % 49);
            // Coarse grid forces plenty of ties.
            let x: Vec<f64> = (0..n)
                .map(|_| (uniform(&mut rng, 0.0, 5.0)).round())
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|_| (uniform(&mut rng, 0.0, 5.0)).round())
                .collect();
            let fast = krcc(&x, &y);
            let constant_x = x.iter().all(|&v| v == x[0]);
            let constant_y = y.iter().all(|&v| v == y[0]);
            if constant_x || constant_y {
                assert!(fast.is_err());
                continue;
            }
            let slow = krcc_brute(&x, &y);
            assert_eq!(fast.unwrap(), slow, "trial {trial}: x={x:?} y={y:?}");
        }
    }

    struct ConstantScorer;
    impl UpliftScorer for ConstantScorer {
        fn predict_uplift_row(&self, x: &[f64]) -> f64 {
            x.iter().sum()
        }
    }

    #[test]
    fn latency_probe_basics() {
        let data = Dataset {
            n_binary: 0,
            n_continuous: 3,
            features: (0..300).map(|i| i as f64).collect(),
            treatment: (0..100).map(|i| i % 2 == 0).collect(),
            outcome: vec![0.0; 100],
            true_uplift: None,
        };
        let one = latency_probe(&ConstantScorer, &data, 1).unwrap();
        assert_eq!(one.repeats, 1);
        assert_eq!(one.rows, 100);
        assert!(one.median_ms_per_row >= 0.0);
        assert_eq!(one.median_ms_per_row, one.p95_ms_per_row);

        let many = latency_probe(&ConstantScorer, &data, 9).unwrap();
        assert_eq!(many.rows, 100);
        assert!(many.p95_ms_per_row >= many.median_ms_per_row);
        assert!(latency_probe(&ConstantScorer, &data, 0).is_err());
    }
}
