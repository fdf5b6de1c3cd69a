//! Base test functions. Every function has its global minimum 0 at the origin
//! of the transformed coordinates and accepts any dimension >= 1.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Condition number used by the ill-conditioned functions.
pub const CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionId {
    Sphere,
    Ellipsoid,
    RotatedEllipsoid,
    Rosenbrock,
    Rastrigin,
    Ackley,
    Schwefel12,
    SharpRidge,
    DifferentPowers,
    Griewank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionClass {
    UnimodalSeparable,
    UnimodalIllConditioned,
    Multimodal,
}

impl FunctionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FunctionClass::UnimodalSeparable => "unimodal-separable",
            FunctionClass::UnimodalIllConditioned => "unimodal-ill-conditioned",
            FunctionClass::Multimodal => "multimodal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunctionDescriptor {
    pub id: FunctionId,
    pub class: FunctionClass,
    /// Whether instances apply their seeded rotation before evaluation.
    /// Axis-aligned functions keep the identity so that the catalog retains
    /// separable members.
    pub rotated: bool,
}

const CATALOG: [FunctionDescriptor; 10] = [
    FunctionDescriptor {
        id: FunctionId::Sphere,
        class: FunctionClass::UnimodalSeparable,
        rotated: false,
    },
    FunctionDescriptor {
        id: FunctionId::Ellipsoid,
        class: FunctionClass::UnimodalSeparable,
        rotated: false,
    },
    FunctionDescriptor {
        id: FunctionId::RotatedEllipsoid,
        class: FunctionClass::UnimodalIllConditioned,
        rotated: true,
    },
    FunctionDescriptor {
        id: FunctionId::Rosenbrock,
        class: FunctionClass::UnimodalIllConditioned,
        rotated: true,
    },
    FunctionDescriptor {
        id: FunctionId::Rastrigin,
        class: FunctionClass::Multimodal,
        rotated: false,
    },
    FunctionDescriptor {
        id: FunctionId::Ackley,
        class: FunctionClass::Multimodal,
        rotated: true,
    },
    FunctionDescriptor {
        id: FunctionId::Schwefel12,
        class: FunctionClass::UnimodalIllConditioned,
        rotated: true,
    },
    FunctionDescriptor {
        id: FunctionId::SharpRidge,
        class: FunctionClass::UnimodalIllConditioned,
        rotated: true,
    },
    FunctionDescriptor {
        id: FunctionId::DifferentPowers,
        class: FunctionClass::UnimodalIllConditioned,
        rotated: true,
    },
    FunctionDescriptor {
        id: FunctionId::Griewank,
        class: FunctionClass::Multimodal,
        rotated: true,
    },
];

/// The fixed function catalog, in block order.
pub fn function_catalog() -> Vec<FunctionDescriptor> {
    CATALOG.to_vec()
}

impl FunctionId {
    pub const ALL: [FunctionId; 10] = [
        FunctionId::Sphere,
        FunctionId::Ellipsoid,
        FunctionId::RotatedEllipsoid,
        FunctionId::Rosenbrock,
        FunctionId::Rastrigin,
        FunctionId::Ackley,
        FunctionId::Schwefel12,
        FunctionId::SharpRidge,
        FunctionId::DifferentPowers,
        FunctionId::Griewank,
    ];

    pub fn descriptor(self) -> FunctionDescriptor {
        CATALOG[self as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::Sphere => "sphere",
            FunctionId::Ellipsoid => "ellipsoid",
            FunctionId::RotatedEllipsoid => "rotated-ellipsoid",
            FunctionId::Rosenbrock => "rosenbrock",
            FunctionId::Rastrigin => "rastrigin",
            FunctionId::Ackley => "ackley",
            FunctionId::Schwefel12 => "schwefel12",
            FunctionId::SharpRidge => "sharp-ridge",
            FunctionId::DifferentPowers => "different-powers",
            FunctionId::Griewank => "griewank",
        }
    }

    /// Evaluates the untransformed function at `z`.
    pub fn eval(self, z: &[f64]) -> f64 {
        match self {
            FunctionId::Sphere => z.iter().map(|v| v * v).sum(),
            FunctionId::Ellipsoid | FunctionId::RotatedEllipsoid => ellipsoid(z),
            FunctionId::Rosenbrock => rosenbrock(z),
            FunctionId::Rastrigin => {
                let d = z.len() as f64;
                10.0 * d
                    + z.iter()
                        .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                        .sum::<f64>()
            }
            FunctionId::Ackley => ackley(z),
            FunctionId::Schwefel12 => {
                let mut partial = 0.0;
                let mut total = 0.0;
                for v in z {
                    partial += v;
                    total += partial * partial;
                }
                total
            }
            FunctionId::SharpRidge => {
                let tail: f64 = z[1..].iter().map(|v| v * v).sum();
                z[0] * z[0] + 100.0 * tail.sqrt()
            }
            FunctionId::DifferentPowers => {
                let n = z.len();
                z.iter()
                    .enumerate()
                    .map(|(i, v)| v.abs().powf(2.0 + 4.0 * ratio(i, n)))
                    .sum::<f64>()
                    .sqrt()
            }
            FunctionId::Griewank => {
                let sum: f64 = z.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let prod: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product();
                1.0 + sum - prod
            }
        }
    }
}

/// `(i) / (n - 1)`, or 0 in one dimension.
fn ratio(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

fn ellipsoid(z: &[f64]) -> f64 {
    let n = z.len();
    z.iter()
        .enumerate()
        .map(|(i, v)| CONDITION.powf(ratio(i, n)) * v * v)
        .sum()
}

fn rosenbrock(z: &[f64]) -> f64 {
    if z.len() == 1 {
        return z[0] * z[0];
    }
    // Shifted by one so that the optimum sits at z = 0.
    z.windows(2)
        .map(|w| {
            let (a, b) = (w[0] + 1.0, w[1] + 1.0);
            100.0 * (a * a - b).powi(2) + (a - 1.0).powi(2)
        })
        .sum()
}

fn ackley(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    let mean_sq = z.iter().map(|v| v * v).sum::<f64>() / d;
    let mean_cos = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
    // Grouped so that the origin evaluates to exactly zero.
    (20.0 - 20.0 * (-0.2 * mean_sq.sqrt()).exp()) + (1f64.exp() - mean_cos.exp())
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownFunction(s.to_string()))
    }
}
