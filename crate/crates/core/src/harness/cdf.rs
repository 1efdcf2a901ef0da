use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical CDF on a uniform grid plus the usual summary points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    /// `(x, F(x))` pairs with `x` spanning `[min, max]`.
    pub points: Vec<(f64, f64)>,
    pub median: f64,
    /// Fifth percentile, the "95%-likely" value.
    pub p5: f64,
    pub count: usize,
}

/// Nearest-rank percentile: the `ceil(q n)`-th smallest sample, `q` in `(0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("percentile of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

pub fn compute_cdf(values: &[f64], grid: usize) -> Result<Cdf> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("CDF of an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let n = sorted.len() as f64;
    let grid = grid.max(2);
    let points = if lo == hi {
        vec![(lo, 1.0)]
    } else {
        (0..grid)
            .map(|i| {
                let x = if i + 1 == grid { hi } else { lo + (hi - lo) * i as f64 / (grid - 1) as f64 };
                let below = sorted.partition_point(|&v| v <= x);
                (x, below as f64 / n)
            })
            .collect()
    };
    Ok(Cdf { points, median: percentile(&sorted, 0.5)?, p5: percentile(&sorted, 0.05)?, count: sorted.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifth_percentile_of_first_hundred() {
        let v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(percentile(&v, 0.05).unwrap(), 5.0);
        let cdf = compute_cdf(&v, 11).unwrap();
        assert_eq!(cdf.p5, 5.0);
        assert_eq!(cdf.median, 50.0);
    }

    #[test]
    fn constant_sample_is_a_single_step() {
        let cdf = compute_cdf(&[2.5; 7], 50).unwrap();
        assert_eq!(cdf.points, vec![(2.5, 1.0)]);
        assert_eq!(cdf.median, 2.5);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(compute_cdf(&[], 10).is_err());
    }

    proptest::proptest! {
        #[test]
        fn cdf_is_monotone_and_ends_at_one(v in proptest::collection::vec(-1e3f64..1e3, 1..200), grid in 2usize..100) {
            let cdf = compute_cdf(&v, grid).unwrap();
            for w in cdf.points.windows(2) {
                proptest::prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
            }
            proptest::prop_assert_eq!(cdf.points.last().unwrap().1, 1.0);
        }
    }
}
