use statrs::distribution::{ContinuousCDF, StudentsT};

/// Result of a two-sided paired t-test on `a - b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t: f64,
    pub p_value: f64,
}

impl PairedTest {
    /// Whether `a` is significantly worse (larger) than `b` at level `alpha`.
    pub fn worse_at(&self, alpha: f64) -> bool {
        self.mean_difference > 0.0 && self.p_value < alpha
    }
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = if n == 0 { 0.0 } else { diffs.iter().sum::<f64>() / n as f64 };
    if n < 2 {
        return PairedTest {
            mean_difference: mean,
            t: 0.0,
            p_value: 1.0,
        };
    }
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    if se == 0.0 || !se.is_finite() {
        // All differences equal: identical samples are never separated, a
        // constant nonzero offset is separated with certainty.
        let (t, p_value) = if mean == 0.0 || !mean.is_finite() {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return PairedTest {
            mean_difference: mean,
            t,
            p_value,
        };
    }
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    PairedTest {
        mean_difference: mean,
        t,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // scipy.stats.ttest_rel([1,2,3,4,5.5], [1.2,1.9,2.5,3.1,4.0])
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.5], &[1.2, 1.9, 2.5, 3.1, 4.0]);
        assert!((r.t - 1.8708286933869704).abs() < 1e-12, "{}", r.t);
        assert!((r.p_value - 0.1347019353189672).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn degenerate_variances() {
        let zero = paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(zero.p_value, 1.0);
        assert!(!zero.worse_at(0.05));
        let shifted = paired_t_test(&[101.0, 102.0, 103.0], &[1.0, 2.0, 3.0]);
        assert_eq!(shifted.p_value, 0.0);
        assert!(shifted.worse_at(0.05));
        let better = paired_t_test(&[1.0, 2.0, 3.0], &[101.0, 102.0, 103.0]);
        assert!(!better.worse_at(0.05));
        assert_eq!(paired_t_test(&[1.0], &[0.0]).p_value, 1.0);
    }
}
