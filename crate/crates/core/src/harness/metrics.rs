//! Error metrics and box-plot summaries of parameter samples.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-coordinate `sqrt(mean_k (x_{i,k} - truth_i)^2)`.
pub fn compute_rmse<'a, I>(samples: I, truth: &[f64]) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = vec![0.0; truth.len()];
    let mut count = 0usize;
    for s in samples {
        if s.len() != truth.len() {
            return Err(Error::Dimension(format!(
                "sample has {} coordinates, truth {}",
                s.len(),
                truth.len()
            )));
        }
        for ((a, x), t) in acc.iter_mut().zip(s).zip(truth) {
            *a += (x - t).powi(2);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    Ok(acc.into_iter().map(|a| (a / count as f64).sqrt()).collect())
}

/// `sqrt(mean_i (x_i - truth_i)^2)` for a single point estimate.
pub fn vector_rmse(x: &[f64], truth: &[f64]) -> f64 {
    let n = x.len().max(1) as f64;
    (x.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles, whiskers at the most extreme samples within `1.5 IQR` of the
/// box, and the samples beyond them.
pub fn boxplot_stats(samples: &[f64]) -> Result<BoxplotStats> {
    if samples.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "box plot needs at least 5 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("box plot samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = s.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    let whisker_lo = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_hi = inside.fold(f64::NEG_INFINITY, f64::max);
    let outliers = s.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
    Ok(BoxplotStats {
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{fill_standard_normal, StreamKey, StreamTag};
    use rand::Rng;

    #[test]
    fn rmse_examples() {
        let truth = [1.0, -2.0];
        let s = [[1.0, -2.0], [1.0, -2.0]];
        assert_eq!(compute_rmse(s.iter().map(|r| &r[..]), &truth).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_rmse([&[3.0][..]], &[1.0]).unwrap(), vec![2.0]);
        assert!(compute_rmse(std::iter::empty::<&[f64]>(), &[1.0]).is_err());
    }

    #[test]
    fn rmse_matches_naive_loop() {
        let mut rng = StreamKey::new(1, StreamTag::Auxiliary).rng();
        let truth: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let samples: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let got = compute_rmse(samples.iter().map(|v| v.as_slice()), &truth).unwrap();
        for i in 0..5 {
            let mut s = 0.0;
            for row in &samples {
                s += (row[i] - truth[i]) * (row[i] - truth[i]);
            }
            assert!((got[i] - (s / 1000.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn boxplot_examples() {
        let b = boxplot_stats(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3), (3.0, 2.0, 4.0));
        assert_eq!((b.whisker_lo, b.whisker_hi), (1.0, 5.0));
        assert!(b.outliers.is_empty());

        let c = boxplot_stats(&[2.5; 7]).unwrap();
        assert!([c.median, c.q1, c.q3, c.whisker_lo, c.whisker_hi].iter().all(|&v| v == 2.5));

        let d = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]).unwrap();
        assert_eq!(d.outliers, vec![100.0]);
        assert_eq!(d.whisker_hi, 5.0);
        assert!(boxplot_stats(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn boxplot_of_standard_normal() {
        let mut rng = StreamKey::new(2, StreamTag::Auxiliary).rng();
        let mut x = vec![0.0; 10_000];
        fill_standard_normal(&mut rng, &mut x);
        let b = boxplot_stats(&x).unwrap();
        assert!(b.median.abs() < 0.05);
        assert!((b.q3 - b.q1 - 1.349).abs() < 0.05);
    }
}
