use serde::Serialize;

use crate::scalar::KahanSum;

/// Moments and quantiles of one replicate scalar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n − 1` denominator); zero for a single value.
    pub stddev: f64,
    pub stderr: f64,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(name: impl Into<String>, values: &[f64]) -> Summary {
        assert!(!values.is_empty(), "cannot summarise an empty sample");
        let n = values.len();
        let mean = values.iter().copied().collect::<KahanSum>().total() / n as f64;
        let var = if n > 1 {
            values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .collect::<KahanSum>()
                .total()
                / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let stddev = var.sqrt();
        Summary {
            name: name.into(),
            count: n,
            mean,
            stddev,
            stderr: stddev / (n as f64).sqrt(),
            min: sorted[0],
            q05: quantile_sorted(&sorted, 0.05),
            q25: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q75: quantile_sorted(&sorted, 0.75),
            q95: quantile_sorted(&sorted, 0.95),
            max: sorted[n - 1],
        }
    }

    /// Whether `value` lies in `mean ± k·stddev`.
    pub fn within_band(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.stddev
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_summary() {
        let s = Summary::of("x", &[0.25]);
        assert_eq!(
            (s.mean, s.stddev, s.median, s.min, s.max),
            (0.25, 0.0, 0.25, 0.25, 0.25)
        );
    }

    #[test]
    fn quantiles_and_moments() {
        let s = Summary::of("x", &[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.stddev - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q25, 2.0);
        assert!((s.q05 - 1.2).abs() < 1e-12);
        assert!(s.within_band(6.0, 3.0) && !s.within_band(8.0, 3.0));
    }
}
