//! Two-sample t-tests.

use serde::{Deserialize, Serialize};

use super::binning::DistributionVector;
use super::special::student_t_two_tailed;
use super::StatsError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance (Student).
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_score: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Independent two-sample t-test on raw samples.
///
/// Two constant samples have no sampling variance: equal means give
/// `t = 0, p = 1`, unequal means give `|t| = inf, p = 0`.
pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InvalidParameter(
            "each sample needs at least two values".into(),
        ));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled_df = na + nb - 2.0;
    if a == b {
        return Ok(TTestResult {
            t_score: 0.0,
            df: pooled_df,
            p_value: 1.0,
        });
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let diff = ma - mb;
    if va == 0.0 && vb == 0.0 {
        let (t_score, p_value) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TTestResult {
            t_score,
            df: pooled_df,
            p_value,
        });
    }
    let (se2, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (se2, df)
        }
        TTestKind::Pooled => {
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / pooled_df;
            (sp2 * (1.0 / na + 1.0 / nb), pooled_df)
        }
    };
    let t_score = diff / se2.sqrt();
    Ok(TTestResult {
        t_score,
        df,
        p_value: student_t_two_tailed(t_score, df),
    })
}

/// t-test treating the two count vectors as the samples.
pub fn welch_t_test(a: &DistributionVector, b: &DistributionVector) -> Result<TTestResult, StatsError> {
    count_t_test(a, b, TTestKind::Welch)
}

pub fn count_t_test(
    a: &DistributionVector,
    b: &DistributionVector,
    kind: TTestKind,
) -> Result<TTestResult, StatsError> {
    if a.bin_edges() != b.bin_edges() {
        return Err(StatsError::EdgeMismatch);
    }
    if a.bins() < 2 {
        return Err(StatsError::InvalidParameter(format!(
            "t-test over bins needs k >= 2, got {}",
            a.bins()
        )));
    }
    let xa: Vec<f64> = a.counts().iter().map(|&c| c as f64).collect();
    let xb: Vec<f64> = b.counts().iter().map(|&c| c as f64).collect();
    t_test(&xa, &xb, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::binning::Feature;

    fn dv(counts: &[u64]) -> DistributionVector {
        let edges = (0..=counts.len()).map(|i| i as f64).collect();
        DistributionVector::new(edges, counts.to_vec(), Feature::PacketSize).unwrap()
    }

    #[test]
    fn identical_vectors() {
        let r = welch_t_test(&dv(&[4, 0, 9, 1]), &dv(&[4, 0, 9, 1])).unwrap();
        assert_eq!((r.t_score, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_vectors() {
        let r = welch_t_test(&dv(&[3, 3, 3]), &dv(&[5, 5, 5])).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.t_score.is_infinite() && r.t_score < 0.0);
    }

    #[test]
    fn shifted_sequence() {
        // Equal variances 2.5, mean difference -1: t = -1 / sqrt(1), df = 8.
        let r = welch_t_test(&dv(&[1, 2, 3, 4, 5]), &dv(&[2, 3, 4, 5, 6])).unwrap();
        assert!((r.t_score + 1.0).abs() < 1e-15);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p_value - 0.346_593_507_087_334).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn pooled_equals_welch_for_equal_variances() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let w = t_test(&a, &b, TTestKind::Welch).unwrap();
        let p = t_test(&a, &b, TTestKind::Pooled).unwrap();
        assert!((w.p_value - p.p_value).abs() < 1e-14);
    }

    #[test]
    fn rejects_short_or_mismatched() {
        assert!(welch_t_test(&dv(&[1]), &dv(&[2])).is_err());
        assert!(matches!(
            welch_t_test(&dv(&[1, 2]), &dv(&[1, 2, 3])),
            Err(StatsError::EdgeMismatch)
        ));
    }
}
