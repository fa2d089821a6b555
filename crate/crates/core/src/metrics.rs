//! Ranking and classification measures, and ratios against a baseline run.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Average precision of `ranked` against `relevant`.
///
/// Relevant items missing from `ranked` contribute zero precision, so a
/// truncated list is penalised for what it leaves out.
pub fn average_precision(ranked: &[usize], relevant: &[usize]) -> Result<f64> {
    average_precision_at(ranked, relevant, None)
}

/// Average precision over the first `cutoff` ranks. With a cutoff the
/// normaliser is `min(|relevant|, cutoff)`.
pub fn average_precision_at(ranked: &[usize], relevant: &[usize], cutoff: Option<usize>) -> Result<f64> {
    let mut rel = relevant.to_vec();
    rel.sort_unstable();
    rel.dedup();
    if rel.is_empty() {
        return Err(Error::Empty("relevant item set".into()));
    }
    let depth = cutoff.map_or(ranked.len(), |c| c.min(ranked.len()));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in ranked[..depth].iter().enumerate() {
        if rel.binary_search(item).is_ok() {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let norm = cutoff.map_or(rel.len(), |c| rel.len().min(c.max(1)));
    Ok(sum / norm as f64)
}

/// `1 / rank` of `correct` in `ranked`, or 0 when absent.
pub fn reciprocal_rank(ranked: &[usize], correct: usize) -> f64 {
    ranked
        .iter()
        .position(|&i| i == correct)
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

/// Percentage of positions where `predicted` equals `truth`.
pub fn accuracy<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::mismatch("label count", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("label list".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Measure {
    Map,
    Rr,
    Acc,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Map => "MAP",
            Measure::Rr => "RR",
            Measure::Acc => "Acc",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(Measure::Map),
            "rr" | "mrr" => Ok(Measure::Rr),
            "acc" | "accuracy" => Ok(Measure::Acc),
            other => Err(Error::invalid(format!("unknown measure '{other}'"))),
        }
    }
}

/// One evaluated run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluationResult {
    pub score: f64,
    pub measure: Measure,
    pub n_evaluated: usize,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioReport {
    pub score_ratio: f64,
    pub dim_ratio: f64,
    pub time_ratio: f64,
}

/// `S_i/S_0`, `m/d` and `T_i/T_0` of `run` against `baseline`.
pub fn ratio_report(run: &EvaluationResult, baseline: &EvaluationResult, m: usize, d: usize) -> Result<RatioReport> {
    if run.measure != baseline.measure {
        return Err(Error::invalid(format!(
            "cannot compare {} against a {} baseline",
            run.measure, baseline.measure
        )));
    }
    if !(baseline.score > 0.0) {
        return Err(Error::invalid("baseline score must be positive"));
    }
    if !(baseline.wall_time > 0.0) {
        return Err(Error::invalid("baseline wall time must be positive"));
    }
    if d == 0 {
        return Err(Error::invalid("d must be positive"));
    }
    Ok(RatioReport {
        score_ratio: run.score / baseline.score,
        dim_ratio: m as f64 / d as f64,
        time_ratio: run.wall_time / baseline.wall_time,
    })
}

/// Two-sided Mann-Whitney U test (normal approximation with tie and
/// continuity correction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

impl MannWhitney {
    /// Whether the difference is significant at `alpha`.
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney sample".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Mann-Whitney sample".into()));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&x| (x, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += avg_rank * pooled[i..j].iter().filter(|p| p.1).count() as f64;
        i = j;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    if var <= 0.0 {
        return Ok(MannWhitney {
            u,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let diff = u - mean;
    let corrected = (diff.abs() - 0.5).max(0.0) * diff.signum();
    let z = corrected / var.sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0);
    Ok(MannWhitney { u, z, p_value })
}

/// One row of the comparison report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportRow {
    pub measure: Measure,
    pub score: f64,
    pub baseline_score: f64,
    pub dim_ratio: f64,
    pub k: usize,
    pub train_time_ratio: f64,
    pub eval_time_ratio: f64,
}

pub const REPORT_HEADER: &str = "measure\tS_i\tS_0\tS_i/S_0\tm/d\tk\tT_train ratio\tT_eval ratio";

impl ReportRow {
    pub fn score_ratio(&self) -> f64 {
        self.score / self.baseline_score
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{}\t{:.6}\t{:.6}",
            self.measure,
            self.score,
            self.baseline_score,
            self.score_ratio(),
            self.dim_ratio,
            self.k,
            self.train_time_ratio,
            self.eval_time_ratio
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{rank, ItemScores, ScoreOrdering};
    use crate::rng;

    #[test]
    fn ap_hand_example() {
        // ranked = [a, x, b, y], relevant = {a, b}
        let ap = average_precision(&[0, 9, 1, 8], &[0, 1]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn ap_perfect_and_missing() {
        assert_eq!(average_precision(&[3, 1, 0, 2], &[1, 3]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0, 2], &[1]).unwrap(), 0.0);
        assert!((average_precision(&[1, 0], &[1, 5]).unwrap() - 0.5).abs() < 1e-12);
        assert!(average_precision(&[1, 2], &[]).is_err());
    }

    #[test]
    fn ap_with_cutoff() {
        let ap = average_precision_at(&[0, 9, 1, 8], &[0, 1], Some(1)).unwrap();
        assert_eq!(ap, 1.0);
        let ap = average_precision_at(&[9, 0, 1], &[0, 1, 2], Some(2)).unwrap();
        assert!((ap - 0.25).abs() < 1e-12);
    }

    /// Exhaustive oracle: precision@k summed at every relevant position.
    fn ap_oracle(ranked: &[usize], relevant: &[usize]) -> f64 {
        let mut total = 0.0;
        for &r in relevant {
            if let Some(pos) = ranked.iter().position(|&x| x == r) {
                let prefix = &ranked[..=pos];
                let rel_in_prefix = prefix.iter().filter(|x| relevant.contains(x)).count();
                total += rel_in_prefix as f64 / prefix.len() as f64;
            }
        }
        total / relevant.len() as f64
    }

    #[test]
    fn ap_matches_oracle() {
        let mut r = rng::seeded(2);
        for _ in 0..500 {
            let d = 1 + rng::below(&mut r, 12) as usize;
            let mut perm: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                perm.swap(i, rng::below(&mut r, i as u32 + 1) as usize);
            }
            let depth = 1 + rng::below(&mut r, d as u32) as usize;
            perm.truncate(depth);
            let rel: Vec<usize> = (0..d).filter(|_| rng::below(&mut r, 3) == 0).collect();
            if rel.is_empty() {
                continue;
            }
            let got = average_precision(&perm, &rel).unwrap();
            assert!((got - ap_oracle(&perm, &rel)).abs() < 1e-12);
        }
    }

    #[test]
    fn ap_ignores_order_below_last_relevant() {
        let a = average_precision(&[2, 0, 5, 1, 3, 4], &[0, 5]).unwrap();
        let b = average_precision(&[2, 0, 5, 4, 3, 1], &[0, 5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rr_examples() {
        assert_eq!(reciprocal_rank(&[4, 5, 6, 7], 7), 0.25);
        assert_eq!(reciprocal_rank(&[7, 5], 7), 1.0);
        assert_eq!(reciprocal_rank(&[4, 5], 7), 0.0);
    }

    #[test]
    fn rr_invariant_to_score_scaling() {
        let scores = vec![0.1, 0.5, 0.2, 0.7];
        let scaled: Vec<f64> = scores.iter().map(|s| s * 3.5).collect();
        let r1 = rank(&ItemScores::new(scores, ScoreOrdering::Descending).unwrap(), 4).unwrap();
        let r2 = rank(&ItemScores::new(scaled, ScoreOrdering::Descending).unwrap(), 4).unwrap();
        assert_eq!(reciprocal_rank(&r1, 2), reciprocal_rank(&r2, 2));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(accuracy(&[1, 2], &[3, 4]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 0, 3, 0]).unwrap(), 50.0);
        assert!(accuracy::<u8>(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    fn result(score: f64, wall_time: f64) -> EvaluationResult {
        EvaluationResult {
            score,
            measure: Measure::Map,
            n_evaluated: 10,
            wall_time,
        }
    }

    #[test]
    fn ratios() {
        let base = result(0.16, 2.0);
        let same = ratio_report(&base, &base, 100, 100).unwrap();
        assert_eq!((same.score_ratio, same.dim_ratio, same.time_ratio), (1.0, 1.0, 1.0));
        let r = ratio_report(&result(0.12, 0.5), &base, 30, 120).unwrap();
        assert!((r.score_ratio - 0.75).abs() < 1e-12);
        assert_eq!(r.dim_ratio, 0.25);
        assert_eq!(r.time_ratio, 0.25);
        assert!(ratio_report(&base, &result(0.0, 1.0), 1, 1).is_err());
        assert!(ratio_report(&base, &result(1.0, 0.0), 1, 1).is_err());
        let rr = EvaluationResult {
            measure: Measure::Rr,
            ..base
        };
        assert!(ratio_report(&rr, &base, 1, 1).is_err());
    }

    #[test]
    fn mann_whitney_reference() {
        // reference values from scipy.stats.mannwhitneyu(two-sided,
        // asymptotic, use_continuity=True)
        let a = [1.1, 2.3, 3.0, 2.2, 1.9, 2.0];
        let b = [3.4, 4.1, 2.8, 3.9, 4.4, 3.7];
        let mw = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(mw.u, 1.0);
        assert!((mw.p_value - 0.00823901882572464).abs() < 1e-9);
        assert!(mw.significant(SIGNIFICANCE_LEVEL));

        let tied = mann_whitney_u(&[1.0, 2.0, 2.0, 3.0, 5.0], &[2.0, 3.0, 3.0, 4.0, 6.0, 7.0]).unwrap();
        assert_eq!(tied.u, 7.0);
        assert!((tied.p_value - 0.16304505585423734).abs() < 1e-9);
        assert!(!tied.significant(SIGNIFICANCE_LEVEL));

        let same = mann_whitney_u(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn report_row_format() {
        let row = ReportRow {
            measure: Measure::Map,
            score: 0.1,
            baseline_score: 0.2,
            dim_ratio: 0.25,
            k: 4,
            train_time_ratio: 0.5,
            eval_time_ratio: 1.1,
        };
        let mut out = Vec::new();
        row.write_tsv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "MAP\t0.100000\t0.200000\t0.500000\t0.2500\t4\t0.500000\t1.100000\n"
        );
    }
}
