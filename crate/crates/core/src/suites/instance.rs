use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::functions::FunctionId;
use super::rotation::random_rotation;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

/// Optimum shifts are drawn uniformly from `[-SHIFT_RADIUS, SHIFT_RADIUS]^d`.
pub const SHIFT_RADIUS: f64 = 4.0;

const ROTATION_STREAM: u64 = 0x524f_54;
const SHIFT_STREAM: u64 = 0x5348_4654;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// One training or test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub function: FunctionId,
    pub dimension: usize,
    pub rotation_seed: u64,
    pub budget: u64,
    pub num_workers: usize,
    pub fully_bounded: bool,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<Interval>>,
}

impl InstanceSpec {
    /// An unbounded instance with a single worker.
    pub fn unbounded(function: FunctionId, dimension: usize, rotation_seed: u64, budget: u64) -> Self {
        InstanceSpec {
            function,
            dimension,
            rotation_seed,
            budget,
            num_workers: 1,
            fully_bounded: false,
            bounds: None,
        }
    }

    /// The same instance restricted to the box `[lower, upper]^d`.
    pub fn with_box(mut self, lower: f64, upper: f64) -> Self {
        self.fully_bounded = true;
        self.bounds = Some(vec![Interval::new(lower, upper); self.dimension]);
        self
    }

    pub fn with_workers(mut self, num_workers: usize) -> Self {
        self.num_workers = num_workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        if self.budget == 0 {
            return Err(Error::config("budget", "must be at least 1"));
        }
        if self.num_workers == 0 {
            return Err(Error::config("num_workers", "must be at least 1"));
        }
        match (&self.bounds, self.fully_bounded) {
            (Some(bounds), true) => {
                if bounds.len() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        actual: bounds.len(),
                    });
                }
                if let Some((i, b)) = bounds
                    .iter()
                    .enumerate()
                    .find(|(_, b)| !(b.lower < b.upper) || !b.lower.is_finite() || !b.upper.is_finite())
                {
                    return Err(Error::InvalidDomain(format!(
                        "coordinate {i}: lower {} must be below upper {}",
                        b.lower, b.upper
                    )));
                }
                Ok(())
            }
            (None, false) => Ok(()),
            _ => Err(Error::config(
                "fully_bounded",
                "must be true exactly when a box is present",
            )),
        }
    }

    /// Stable 64-bit identity derived from the canonical serialization.
    pub fn key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("instance serializes");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The planted optimum.
    pub fn shift(&self) -> Vec<f64> {
        let mut rng = rng_from(derive_seed(self.rotation_seed, &[SHIFT_STREAM]));
        (0..self.dimension)
            .map(|_| rng.random_range(-SHIFT_RADIUS..=SHIFT_RADIUS))
            .collect()
    }

    /// Orthogonal rotation for this instance, or `None` when the function is
    /// axis-aligned.
    pub fn rotation(&self) -> Option<DMatrix<f64>> {
        self.function.descriptor().rotated.then(|| {
            random_rotation(
                self.dimension,
                derive_seed(self.rotation_seed, &[ROTATION_STREAM]),
            )
        })
    }

    /// Precomputes rotation and shift so that repeated evaluations are cheap.
    pub fn materialize(&self) -> Result<Problem> {
        self.validate()?;
        Ok(Problem {
            function: self.function,
            shift: self.shift(),
            rotation: self.rotation(),
            bounds: self.bounds.clone(),
        })
    }
}

/// An instance ready for evaluation.
#[derive(Debug, Clone)]
pub struct Problem {
    function: FunctionId,
    shift: Vec<f64>,
    rotation: Option<DMatrix<f64>>,
    bounds: Option<Vec<Interval>>,
}

impl Problem {
    pub fn dimension(&self) -> usize {
        self.shift.len()
    }

    pub fn optimum(&self) -> &[f64] {
        &self.shift
    }

    pub fn rotation(&self) -> Option<&DMatrix<f64>> {
        self.rotation.as_ref()
    }

    pub fn bounds(&self) -> Option<&[Interval]> {
        self.bounds.as_deref()
    }

    /// Clips `x` into the box, if any.
    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        match &self.bounds {
            Some(b) => x.iter().zip(b).map(|(v, iv)| iv.clip(*v)).collect(),
            None => x.to_vec(),
        }
    }

    /// `f(R (clip(x) - shift))`, saturated to `f64::MAX` when it overflows.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                actual: x.len(),
            });
        }
        let clipped = self.clip(x);
        let centered: Vec<f64> = clipped.iter().zip(&self.shift).map(|(a, s)| a - s).collect();
        let z = match &self.rotation {
            Some(r) => (r * DVector::from_vec(centered)).data.into(),
            None => centered,
        };
        let value = self.function.eval(&z);
        Ok(if value.is_finite() { value } else { f64::MAX })
    }
}

/// Convenience wrapper: materializes `spec` and evaluates `x` once.
pub fn evaluate(spec: &InstanceSpec, x: &[f64]) -> Result<f64> {
    spec.materialize()?.evaluate(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_evaluates_to_zero() {
        for f in FunctionId::ALL {
            for d in [1, 2, 9] {
                let spec = InstanceSpec::unbounded(f, d, 5, 100);
                let p = spec.materialize().unwrap();
                assert_eq!(p.evaluate(&spec.shift()).unwrap(), 0.0, "{f} d={d}");
            }
        }
    }

    #[test]
    fn shift_lies_inside_standard_box() {
        let spec = InstanceSpec::unbounded(FunctionId::Sphere, 200, 17, 10);
        assert!(spec.shift().iter().all(|v| v.abs() <= SHIFT_RADIUS));
    }

    #[test]
    fn ellipsoid_axes_after_inverse_rotation() {
        for f in [FunctionId::Ellipsoid, FunctionId::RotatedEllipsoid] {
            let spec = InstanceSpec::unbounded(f, 2, 23, 100);
            let p = spec.materialize().unwrap();
            let r = p
                .rotation()
                .cloned()
                .unwrap_or_else(|| DMatrix::identity(2, 2));
            let shift = p.optimum().to_vec();
            for (axis, expected) in [([1.0, 0.0], 1.0), ([0.0, 1.0], 1e6)] {
                let offset = r.transpose() * DVector::from_row_slice(&axis);
                let x: Vec<f64> = shift.iter().zip(offset.iter()).map(|(s, o)| s + o).collect();
                let loss = p.evaluate(&x).unwrap();
                assert!((loss - expected).abs() <= 1e-9 * expected, "{f}: {loss}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = InstanceSpec::unbounded(FunctionId::Sphere, 3, 0, 10);
        assert!(matches!(
            evaluate(&spec, &[0.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn out_of_box_points_are_clipped() {
        let spec = InstanceSpec::unbounded(FunctionId::Sphere, 2, 0, 10).with_box(-5.0, 5.0);
        let p = spec.materialize().unwrap();
        assert_eq!(
            p.evaluate(&[100.0, -100.0]).unwrap(),
            p.evaluate(&[5.0, -5.0]).unwrap()
        );
    }

    #[test]
    fn huge_points_stay_finite() {
        let spec = InstanceSpec::unbounded(FunctionId::Rosenbrock, 4, 0, 10);
        let loss = evaluate(&spec, &[1e300; 4]).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn boundedness_flag_must_match_box() {
        let mut spec = InstanceSpec::unbounded(FunctionId::Sphere, 2, 0, 10);
        spec.fully_bounded = true;
        assert!(spec.validate().is_err());
        let mut degenerate = spec.clone().with_box(1.0, 1.0);
        assert!(matches!(degenerate.validate(), Err(Error::InvalidDomain(_))));
        degenerate.bounds = None;
        degenerate.fully_bounded = false;
        assert!(degenerate.validate().is_ok());
    }

    #[test]
    fn key_distinguishes_instances() {
        let a = InstanceSpec::unbounded(FunctionId::Sphere, 2, 0, 10);
        let b = InstanceSpec::unbounded(FunctionId::Sphere, 2, 1, 10);
        assert_eq!(a.key(), a.clone().key());
        assert_ne!(a.key(), b.key());
        assert_eq!(a.key().len(), 16);
    }
}
