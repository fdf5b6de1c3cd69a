/// Learning rates and recombination weights. Standard published defaults;
/// the diagonal variant scales the covariance learning rates by `(d + 2) / 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
    /// Generations between two eigendecompositions of the full covariance.
    pub eigen_gap: u64,
}

impl StrategyParams {
    pub fn new(dimension: usize, lambda: usize, diagonal: bool) -> Self {
        assert!(lambda >= 2, "population must hold at least two points");
        let n = dimension as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let mut c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let mut c_mu = 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff);
        if diagonal {
            let boost = (n + 2.0) / 3.0;
            c_1 *= boost;
            c_mu *= boost;
        }
        c_1 = c_1.min(1.0);
        c_mu = c_mu.min(1.0 - c_1).max(0.0);
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let eigen_gap = if diagonal {
            1
        } else {
            ((1.0 / ((c_1 + c_mu) * n * 10.0)).floor() as u64).max(1)
        };

        StrategyParams {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            eigen_gap,
        }
    }
}
