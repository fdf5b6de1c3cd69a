use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::StrategyParams;
use super::{population_size, CmaConfig};
use crate::error::{Error, Result};
use crate::seed::rng_from;
use crate::suites::{InstanceSpec, Interval};

/// Reference step size in standardized coordinates; `scale` multiplies it.
pub const REFERENCE_STEP: f64 = 1.0;

/// Resampling attempts before an out-of-box point is clipped.
const MAX_RESAMPLES: usize = 10;
/// Eigenvalues and diagonal entries are floored at this fraction of the largest.
const REPAIR_FLOOR: f64 = 1e-20;
const MIN_SIGMA: f64 = 1e-300;

/// Search domain of one run.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Unbounded, centered at the origin.
    Unbounded,
    Box(Vec<Interval>),
}

impl Domain {
    pub fn of(instance: &InstanceSpec) -> Self {
        match &instance.bounds {
            Some(b) => Domain::Box(b.clone()),
            None => Domain::Unbounded,
        }
    }
}

#[derive(Debug, Clone)]
enum Covariance {
    Full {
        matrix: DMatrix<f64>,
        /// Eigenvectors of `matrix`.
        basis: DMatrix<f64>,
        /// Square roots of the eigenvalues.
        axis_lengths: DVector<f64>,
        decomposed_at: Option<u64>,
    },
    Diagonal(DVector<f64>),
}

/// Read-only view of the covariance representation.
#[derive(Debug, Clone, Copy)]
pub enum CovarianceView<'a> {
    Full(&'a DMatrix<f64>),
    Diagonal(&'a DVector<f64>),
}

impl CovarianceView<'_> {
    /// Number of stored entries: `d * d` for full, `d` for diagonal.
    pub fn len(&self) -> usize {
        match self {
            CovarianceView::Full(m) => m.len(),
            CovarianceView::Diagonal(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            CovarianceView::Full(m) => SymmetricEigen::new((*m).clone()).eigenvalues.min(),
            CovarianceView::Diagonal(v) => v.min(),
        }
    }
}

/// Outcome of one `tell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TellReport {
    /// Best loss in the ranked pool, including an injected elite.
    pub pool_best: f64,
    /// Whether the historical best was injected into the pool.
    pub injected: bool,
}

/// Mutable state of one CMA-ES run.
///
/// The distribution lives in standardized coordinates `u`, related to the
/// problem coordinates by `x = center + coordinate_scale * u`. For boxes
/// `coordinate_scale` is a quarter of the box width, otherwise 1.
#[derive(Debug, Clone)]
pub struct CmaState {
    config: CmaConfig,
    params: StrategyParams,
    center: Vec<f64>,
    coordinate_scale: Vec<f64>,
    bounds: Option<Vec<Interval>>,
    mean: DVector<f64>,
    sigma: f64,
    covariance: Covariance,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    generation: u64,
    best: Option<(Vec<f64>, f64)>,
    evals_used: u64,
    rng: ChaCha8Rng,
}

impl CmaState {
    pub fn new(config: CmaConfig, dimension: usize, domain: &Domain, seed: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        let (center, coordinate_scale, bounds) = match domain {
            Domain::Unbounded => (vec![0.0; dimension], vec![REFERENCE_STEP; dimension], None),
            Domain::Box(b) => {
                if b.len() != dimension {
                    return Err(Error::DimensionMismatch {
                        expected: dimension,
                        actual: b.len(),
                    });
                }
                if let Some((i, iv)) = b
                    .iter()
                    .enumerate()
                    .find(|(_, iv)| !(iv.lower < iv.upper) || !iv.width().is_finite())
                {
                    return Err(Error::InvalidDomain(format!(
                        "coordinate {i}: [{}, {}] is degenerate",
                        iv.lower, iv.upper
                    )));
                }
                (
                    b.iter().map(Interval::center).collect(),
                    b.iter().map(|iv| REFERENCE_STEP * iv.width() / 4.0).collect(),
                    Some(b.clone()),
                )
            }
        };
        let lambda = population_size(&config, dimension);
        let covariance = if config.diagonal() {
            Covariance::Diagonal(DVector::from_element(dimension, 1.0))
        } else {
            Covariance::Full {
                matrix: DMatrix::identity(dimension, dimension),
                basis: DMatrix::identity(dimension, dimension),
                axis_lengths: DVector::from_element(dimension, 1.0),
                decomposed_at: Some(0),
            }
        };
        Ok(CmaState {
            config,
            params: StrategyParams::new(dimension, lambda, config.diagonal()),
            center,
            coordinate_scale,
            bounds,
            mean: DVector::zeros(dimension),
            sigma: config.scale() * REFERENCE_STEP,
            covariance,
            path_sigma: DVector::zeros(dimension),
            path_c: DVector::zeros(dimension),
            generation: 0,
            best: None,
            evals_used: 0,
            rng: rng_from(seed),
        })
    }

    /// Raises the population to at least `min_population` points per
    /// generation, as needed when that many evaluations run in parallel.
    /// Only meaningful before the first `tell`.
    pub fn with_min_population(mut self, min_population: usize) -> Self {
        if min_population > self.params.lambda {
            self.params = StrategyParams::new(self.dimension(), min_population, self.config.diagonal());
        }
        self
    }

    pub fn config(&self) -> &CmaConfig {
        &self.config
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn population(&self) -> usize {
        self.params.lambda
    }

    /// Step size in standardized coordinates.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-coordinate step size in problem coordinates.
    pub fn effective_step(&self) -> Vec<f64> {
        self.coordinate_scale.iter().map(|s| s * self.sigma).collect()
    }

    /// Distribution mean in problem coordinates.
    pub fn mean(&self) -> Vec<f64> {
        self.to_problem(&self.mean)
    }

    pub fn covariance(&self) -> CovarianceView<'_> {
        match &self.covariance {
            Covariance::Full { matrix, .. } => CovarianceView::Full(matrix),
            Covariance::Diagonal(v) => CovarianceView::Diagonal(v),
        }
    }

    pub fn step_size_path(&self) -> &DVector<f64> {
        &self.path_sigma
    }

    pub fn covariance_path(&self) -> &DVector<f64> {
        &self.path_c
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn evals_used(&self) -> u64 {
        self.evals_used
    }

    /// Best told point and its loss.
    pub fn best_seen(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    fn to_problem(&self, u: &DVector<f64>) -> Vec<f64> {
        u.iter()
            .zip(&self.center)
            .zip(&self.coordinate_scale)
            .map(|((u, c), s)| c + s * u)
            .collect()
    }

    fn to_standard(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(&self.center)
                .zip(&self.coordinate_scale)
                .map(|((x, c), s)| (x - c) / s),
        )
    }

    fn in_box(&self, x: &[f64]) -> bool {
        self.bounds
            .as_ref()
            .is_none_or(|b| x.iter().zip(b).all(|(v, iv)| iv.contains(*v)))
    }

    /// Samples `lambda` points from `N(mean, sigma^2 C)`, in problem
    /// coordinates. Out-of-box samples are redrawn up to ten times, then clipped.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        self.refresh_decomposition();
        (0..self.params.lambda)
            .map(|_| {
                let mut x = self.sample_one();
                for _ in 0..MAX_RESAMPLES {
                    if self.in_box(&x) {
                        break;
                    }
                    x = self.sample_one();
                }
                match &self.bounds {
                    Some(b) if !self.in_box(&x) => {
                        x.iter().zip(b).map(|(v, iv)| iv.clip(*v)).collect()
                    }
                    _ => x,
                }
            })
            .collect()
    }

    fn sample_one(&mut self) -> Vec<f64> {
        let d = self.dimension();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut self.rng));
        let y = match &self.covariance {
            Covariance::Full {
                basis, axis_lengths, ..
            } => basis * z.component_mul(axis_lengths),
            Covariance::Diagonal(c) => z.zip_map(c, |zi, ci| zi * ci.sqrt()),
        };
        self.to_problem(&(&self.mean + y * self.sigma))
    }

    /// `C^{-1/2} y`.
    fn whiten(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.covariance {
            Covariance::Full {
                basis, axis_lengths, ..
            } => basis * (basis.tr_mul(y).component_div(axis_lengths)),
            Covariance::Diagonal(c) => y.zip_map(c, |yi, ci| yi / ci.sqrt()),
        }
    }

    /// Updates the distribution from one evaluated population.
    pub fn tell(&mut self, points: &[Vec<f64>], losses: &[f64]) -> Result<TellReport> {
        let lambda = self.params.lambda;
        if points.len() != lambda || losses.len() != lambda {
            return Err(Error::PopulationMismatch {
                expected: lambda,
                points: points.len(),
                losses: losses.len(),
            });
        }
        if let Some((index, &value)) = losses.iter().enumerate().find(|(_, l)| !l.is_finite()) {
            return Err(Error::InvalidLoss { index, value });
        }
        let d = self.dimension();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: p.len(),
            });
        }
        self.refresh_decomposition();

        let mut pool: Vec<(DVector<f64>, f64)> = points
            .iter()
            .zip(losses)
            .map(|(x, &f)| ((self.to_standard(x) - &self.mean) / self.sigma, f))
            .collect();

        let generation_best = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let mut injected = false;
        if self.config.elitist() {
            if let Some((elite, elite_loss)) = self.best.as_ref().filter(|(_, f)| *f < generation_best) {
                let y = self.clip_injected((self.to_standard(elite) - &self.mean) / self.sigma);
                let worst = pool
                    .iter()
                    .enumerate()
                    .fold(0, |w, (i, (_, f))| if *f > pool[w].1 { i } else { w });
                pool[worst] = (y, *elite_loss);
                injected = true;
            }
        }
        // Stable, so equal losses keep submission order.
        pool.sort_by(|a, b| a.1.total_cmp(&b.1));
        let pool_best = pool[0].1;

        let p = &self.params;
        let y_w = pool
            .iter()
            .zip(&p.weights)
            .fold(DVector::zeros(d), |acc, ((y, _), w)| acc + y * *w);

        self.mean += &y_w * self.sigma;

        let whitened = self.whiten(&y_w);
        self.path_sigma = &self.path_sigma * (1.0 - p.c_sigma)
            + whitened * (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();
        let norm_ps = self.path_sigma.norm();
        let decay = (1.0 - (1.0 - p.c_sigma).powi(2 * (self.generation as i32 + 1))).sqrt();
        let h_sigma = if norm_ps / decay < (1.4 + 2.0 / (d as f64 + 1.0)) * p.chi_n {
            1.0
        } else {
            0.0
        };
        self.path_c = &self.path_c * (1.0 - p.c_c)
            + &y_w * (h_sigma * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt());

        let keep = 1.0 - p.c_1 - p.c_mu + (1.0 - h_sigma) * p.c_1 * p.c_c * (2.0 - p.c_c);
        let selected = pool.iter().take(p.mu).zip(&p.weights);
        match &mut self.covariance {
            Covariance::Full { matrix, .. } => {
                let mut next = &*matrix * keep + &self.path_c * self.path_c.transpose() * p.c_1;
                for ((y, _), w) in selected {
                    next += y * y.transpose() * (p.c_mu * w);
                }
                *matrix = (&next + next.transpose()) * 0.5;
            }
            Covariance::Diagonal(c) => {
                let mut next = &*c * keep + self.path_c.component_mul(&self.path_c) * p.c_1;
                for ((y, _), w) in selected {
                    next += y.component_mul(y) * (p.c_mu * w);
                }
                *c = next;
            }
        }

        let exponent = (p.c_sigma / p.d_sigma) * (norm_ps / p.chi_n - 1.0);
        self.sigma = (self.sigma * exponent.min(1.0).exp()).max(MIN_SIGMA);

        self.generation += 1;
        self.evals_used += lambda as u64;
        self.mark_stale();
        self.repair();

        let (argmin, &min_loss) = losses
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("population is non-empty");
        if self.best.as_ref().is_none_or(|(_, f)| min_loss < *f) {
            self.best = Some((points[argmin].clone(), min_loss));
        }

        Ok(TellReport {
            pool_best,
            injected,
        })
    }

    /// Limits the Mahalanobis length of an injected step so that a distant
    /// elite cannot blow up the evolution paths.
    fn clip_injected(&self, y: DVector<f64>) -> DVector<f64> {
        let d = self.dimension() as f64;
        let limit = d.sqrt() + 2.0 * d / (d + 2.0);
        let length = self.whiten(&y).norm();
        if length > limit {
            y * (limit / length)
        } else {
            y
        }
    }

    fn mark_stale(&mut self) {
        if let Covariance::Full { decomposed_at, .. } = &mut self.covariance {
            if decomposed_at.is_some_and(|g| self.generation >= g + self.params.eigen_gap) {
                *decomposed_at = None;
            }
        }
    }

    fn refresh_decomposition(&mut self) {
        let d = self.dimension();
        let generation = self.generation;
        if let Covariance::Full {
            matrix,
            basis,
            axis_lengths,
            decomposed_at,
        } = &mut self.covariance
        {
            if decomposed_at.is_some() {
                return;
            }
            let eigen = SymmetricEigen::new(matrix.clone());
            let finite = eigen.eigenvalues.iter().all(|v| v.is_finite())
                && eigen.eigenvectors.iter().all(|v| v.is_finite());
            if !finite || eigen.eigenvalues.max() <= 0.0 {
                *matrix = DMatrix::identity(d, d);
                *basis = DMatrix::identity(d, d);
                *axis_lengths = DVector::from_element(d, 1.0);
                self.path_c.fill(0.0);
                self.path_sigma.fill(0.0);
            } else {
                let floor = REPAIR_FLOOR * eigen.eigenvalues.max();
                let floored = eigen.eigenvalues.iter().any(|&v| v < floor);
                let values = eigen.eigenvalues.map(|v| v.max(floor));
                if floored {
                    *matrix = &eigen.eigenvectors
                        * DMatrix::from_diagonal(&values)
                        * eigen.eigenvectors.transpose();
                }
                *basis = eigen.eigenvectors;
                *axis_lengths = values.map(f64::sqrt);
            }
            *decomposed_at = Some(generation);
        }
    }

    /// Keeps the diagonal representation strictly positive. The full matrix is
    /// repaired during its next eigendecomposition.
    fn repair(&mut self) {
        let d = self.dimension();
        if let Covariance::Diagonal(c) = &mut self.covariance {
            if c.iter().any(|v| !v.is_finite()) || c.max() <= 0.0 {
                *c = DVector::from_element(d, 1.0);
                self.path_c.fill(0.0);
                self.path_sigma.fill(0.0);
            } else {
                let floor = REPAIR_FLOOR * c.max();
                c.apply(|v| *v = v.max(floor));
            }
        }
        if !self.mean.iter().all(|v| v.is_finite()) || !self.sigma.is_finite() {
            self.mean = match &self.best {
                Some((x, _)) => self.to_standard(x),
                None => DVector::zeros(d),
            };
            self.sigma = self.config.scale() * REFERENCE_STEP;
            self.path_c.fill(0.0);
            self.path_sigma.fill(0.0);
        }
    }
}

/// Creates the initial state: mean at the domain center, step `scale`
/// times the reference step, identity covariance and zero paths.
pub fn init_state(config: CmaConfig, dimension: usize, domain: &Domain, seed: u64) -> Result<CmaState> {
    CmaState::new(config, dimension, domain, seed)
}
