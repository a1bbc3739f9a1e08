//! Automatic bin selection and histograms.

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Upper bound on the number of bins, guarding against a near-zero IQR on
/// a wide range.
pub const MAX_BINS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    PacketSize,
    InterArrival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionVector {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    feature: Feature,
}

impl DistributionVector {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>, feature: Feature) -> Result<Self, StatsError> {
        validate_edges(&bin_edges)?;
        if counts.len() + 1 != bin_edges.len() {
            return Err(StatsError::InvalidParameter(format!(
                "{} counts for {} edges",
                counts.len(),
                bin_edges.len()
            )));
        }
        Ok(DistributionVector {
            bin_edges,
            counts,
            feature,
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

// Strictly increasing, except the single degenerate bin [v, v].
fn validate_edges(edges: &[f64]) -> Result<(), StatsError> {
    if edges.len() < 2 {
        return Err(StatsError::InvalidParameter("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(StatsError::InvalidParameter("bin edges must be finite".into()));
    }
    let degenerate = edges.len() == 2 && edges[0] == edges[1];
    if !degenerate && edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::InvalidParameter("bin edges must increase strictly".into()));
    }
    Ok(())
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sturges_bins(m: usize) -> usize {
    (m as f64).log2().ceil() as usize + 1
}

/// Equal-width edges over the sample range, with the bin count taken as the
/// larger of the Sturges and Freedman–Diaconis estimates.
pub fn auto_bins(samples: &[f64]) -> Result<Vec<f64>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::InvalidParameter("cannot bin an empty sample".into()));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::InvalidParameter("samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![min, max]);
    }
    let m = sorted.len();
    let sturges = sturges_bins(m);
    let iqr = percentile_sorted(&sorted, 0.75) - percentile_sorted(&sorted, 0.25);
    let k = if iqr > 0.0 {
        let h = 2.0 * iqr * (m as f64).powf(-1.0 / 3.0);
        let fd = (range / h).ceil();
        sturges.max(fd.min(MAX_BINS as f64) as usize)
    } else {
        sturges
    };
    let k = k.min(MAX_BINS);
    let width = range / k as f64;
    let mut edges: Vec<f64> = (0..k).map(|i| min + width * i as f64).collect();
    edges.push(max);
    Ok(edges)
}

/// Index of the bin a sample falls in. Bins are half-open except the last,
/// and samples outside the edges clamp to the end bins.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let k = edges.len() - 1;
    let above = edges.partition_point(|&e| e <= x);
    above.saturating_sub(1).min(k - 1)
}

pub fn histogram(samples: &[f64], edges: &[f64], feature: Feature) -> Result<DistributionVector, StatsError> {
    validate_edges(edges)?;
    let mut counts = vec![0u64; edges.len() - 1];
    for &s in samples {
        counts[bin_index(edges, s)] += 1;
    }
    DistributionVector::new(edges.to_vec(), counts, feature)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_samples_give_one_bin() {
        assert_eq!(auto_bins(&[3.0; 64]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(auto_bins(&[7.5]).unwrap(), vec![7.5, 7.5]);
        let h = histogram(&[3.0; 64], &[3.0, 3.0], Feature::PacketSize).unwrap();
        assert_eq!(h.counts(), &[64]);
        assert!(auto_bins(&[]).is_err());
    }

    #[test]
    fn uniform_grid_takes_sturges() {
        // 64 evenly spaced points on [0, 1]: IQR 0.5, h 0.25, k_fd 4, k_sturges 7.
        let xs: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let edges = auto_bins(&xs).unwrap();
        assert_eq!(edges.len(), 8);
        assert_eq!(edges[0], 0.0);
        assert_eq!(edges[7], 1.0);
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&s, 0.25), 1.75);
        assert_eq!(percentile_sorted(&s, 0.75), 3.25);
        assert_eq!(percentile_sorted(&s, 0.5), 2.5);
    }

    #[test]
    fn half_open_bins_and_clamping() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        let h = histogram(&[0.5, 1.5, 2.5], &edges, Feature::PacketSize).unwrap();
        assert_eq!(h.counts(), &[1, 1, 1]);
        let h = histogram(&[-4.0, 1.0, 3.0, 99.0], &edges, Feature::PacketSize).unwrap();
        assert_eq!(h.counts(), &[1, 1, 2]);
    }

    #[test]
    fn edges_validated() {
        assert!(histogram(&[1.0], &[0.0, 2.0, 1.0], Feature::PacketSize).is_err());
        assert!(histogram(&[1.0], &[0.0], Feature::PacketSize).is_err());
        assert!(DistributionVector::new(vec![0.0, 1.0], vec![1, 2], Feature::InterArrival).is_err());
    }
}
