use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cma::{CmaConfig, POPSIZE_FACTOR_RANGE, SCALE_RANGE};
use crate::error::{Error, Result};
use crate::seed::rng_from;

const TRUNCATION_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamKind {
    /// Open interval `(lower, upper)`.
    Real { lower: f64, upper: f64 },
    /// Inclusive range.
    Integer { lower: i64, upper: i64 },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDescriptor {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Real(f64),
    Integer(i64),
    /// Index into the descriptor's values.
    Categorical(usize),
}

/// A point of the parameter space with a race-wide identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub values: Vec<ParamValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamDescriptor>,
}

impl ParamSpace {
    /// The CMA tuning space: scale in (0.1, 10), integer popsize factor in
    /// [1, 9], boolean elitist and diagonal switches.
    pub fn cma() -> Self {
        let boolean = || ParamKind::Categorical {
            values: vec!["false".into(), "true".into()],
        };
        ParamSpace {
            params: vec![
                ParamDescriptor {
                    name: "scale".into(),
                    kind: ParamKind::Real {
                        lower: SCALE_RANGE.0,
                        upper: SCALE_RANGE.1,
                    },
                },
                ParamDescriptor {
                    name: "popsize_factor".into(),
                    kind: ParamKind::Integer {
                        lower: i64::from(POPSIZE_FACTOR_RANGE.0),
                        upper: i64::from(POPSIZE_FACTOR_RANGE.1),
                    },
                },
                ParamDescriptor {
                    name: "elitist".into(),
                    kind: boolean(),
                },
                ParamDescriptor {
                    name: "diagonal".into(),
                    kind: boolean(),
                },
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn contains(&self, values: &[ParamValue]) -> bool {
        values.len() == self.params.len()
            && self.params.iter().zip(values).all(|(p, v)| match (&p.kind, v) {
                (ParamKind::Real { lower, upper }, ParamValue::Real(x)) => x > lower && x < upper,
                (ParamKind::Integer { lower, upper }, ParamValue::Integer(x)) => {
                    (lower..=upper).contains(&x)
                }
                (ParamKind::Categorical { values }, ParamValue::Categorical(i)) => *i < values.len(),
                _ => false,
            })
    }

    /// Real value of parameter `name`, for real or integer parameters.
    pub fn numeric(&self, candidate: &Candidate, name: &str) -> Option<f64> {
        match candidate.values.get(self.index_of(name)?)? {
            ParamValue::Real(x) => Some(*x),
            ParamValue::Integer(x) => Some(*x as f64),
            ParamValue::Categorical(_) => None,
        }
    }

    pub fn label<'a>(&'a self, candidate: &Candidate, name: &str) -> Option<&'a str> {
        let i = self.index_of(name)?;
        match (&self.params[i].kind, candidate.values.get(i)?) {
            (ParamKind::Categorical { values }, ParamValue::Categorical(k)) => {
                values.get(*k).map(String::as_str)
            }
            _ => None,
        }
    }

    /// Named JSON view: reals and integers as numbers, categoricals as their label.
    pub fn to_named(&self, candidate: &Candidate) -> Map<String, Value> {
        self.params
            .iter()
            .zip(&candidate.values)
            .map(|(p, v)| {
                let value = match (&p.kind, v) {
                    (ParamKind::Categorical { values }, ParamValue::Categorical(k)) => {
                        Value::String(values[*k].clone())
                    }
                    (_, ParamValue::Real(x)) => Value::from(*x),
                    (_, ParamValue::Integer(x)) => Value::from(*x),
                    (_, ParamValue::Categorical(k)) => Value::from(*k as u64),
                };
                (p.name.clone(), value)
            })
            .collect()
    }

    /// Inverse of [`ParamSpace::to_named`].
    pub fn from_named(&self, named: &Map<String, Value>, id: u64) -> Result<Candidate> {
        if let Some(extra) = named.keys().find(|k| self.index_of(k).is_none()) {
            return Err(Error::config(extra.as_str(), "not a parameter of the space"));
        }
        let values = self
            .params
            .iter()
            .map(|p| {
                let v = named
                    .get(&p.name)
                    .ok_or_else(|| Error::config(p.name.as_str(), "missing"))?;
                let bad = || Error::config(p.name.as_str(), format!("invalid value {v}"));
                Ok(match &p.kind {
                    ParamKind::Real { .. } => ParamValue::Real(v.as_f64().ok_or_else(bad)?),
                    ParamKind::Integer { .. } => ParamValue::Integer(v.as_i64().ok_or_else(bad)?),
                    ParamKind::Categorical { values } => {
                        let s = v.as_str().ok_or_else(bad)?;
                        ParamValue::Categorical(values.iter().position(|x| x == s).ok_or_else(bad)?)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !self.contains(&values) {
            return Err(Error::config("params", "value outside the space"));
        }
        Ok(Candidate {
            id,
            values,
            parent: None,
        })
    }

    /// Interprets a candidate of the CMA space as a configuration.
    pub fn to_cma_config(&self, candidate: &Candidate) -> Result<CmaConfig> {
        let missing = |name: &str| Error::config(name, "missing from candidate");
        let scale = self.numeric(candidate, "scale").ok_or_else(|| missing("scale"))?;
        let factor = self
            .numeric(candidate, "popsize_factor")
            .ok_or_else(|| missing("popsize_factor"))?;
        let flag = |name: &str| -> Result<bool> {
            match self.label(candidate, name) {
                Some("true") => Ok(true),
                Some("false") => Ok(false),
                Some(other) => Err(Error::config(name, format!("`{other}` is not a boolean"))),
                None => Err(missing(name)),
            }
        };
        CmaConfig::new(scale, factor as u32, flag("elitist")?, flag("diagonal")?)
    }

    /// The candidate of the CMA space describing `config`.
    pub fn from_cma_config(&self, config: &CmaConfig, id: u64) -> Result<Candidate> {
        let values = self
            .params
            .iter()
            .map(|p| match (p.name.as_str(), &p.kind) {
                ("scale", ParamKind::Real { .. }) => Ok(ParamValue::Real(config.scale())),
                ("popsize_factor", ParamKind::Integer { .. }) => {
                    Ok(ParamValue::Integer(i64::from(config.popsize_factor())))
                }
                (name @ ("elitist" | "diagonal"), ParamKind::Categorical { values }) => {
                    let flag = if name == "elitist" { config.elitist() } else { config.diagonal() };
                    values
                        .iter()
                        .position(|v| v == if flag { "true" } else { "false" })
                        .map(ParamValue::Categorical)
                        .ok_or_else(|| Error::config(name, "no boolean label"))
                }
                (name, _) => Err(Error::config(name, "not a CMA parameter")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Candidate {
            id,
            values,
            parent: None,
        })
    }
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R, lower: f64, upper: f64) -> f64 {
    loop {
        let x = rng.random_range(lower..upper);
        if x > lower {
            return x;
        }
    }
}

/// `n` candidates drawn independently and uniformly from the space, with
/// ids `0..n`.
pub fn sample_initial(space: &ParamSpace, n: usize, seed: u64) -> Vec<Candidate> {
    let mut rng = rng_from(seed);
    (0..n as u64)
        .map(|id| Candidate {
            id,
            values: space
                .params
                .iter()
                .map(|p| match &p.kind {
                    ParamKind::Real { lower, upper } => {
                        ParamValue::Real(uniform_open(&mut rng, *lower, *upper))
                    }
                    ParamKind::Integer { lower, upper } => {
                        ParamValue::Integer(rng.random_range(*lower..=*upper))
                    }
                    ParamKind::Categorical { values } => {
                        ParamValue::Categorical(rng.random_range(0..values.len()))
                    }
                })
                .collect(),
            parent: None,
        })
        .collect()
}

/// Standard deviation of the sampling distribution at `iteration`:
/// `(upper - lower) / 2^(iteration + 1)`.
pub fn refine_sd(lower: f64, upper: f64, iteration: usize) -> f64 {
    (upper - lower) / 2f64.powi(iteration as i32 + 1)
}

/// Samples `n_new` children around uniformly chosen parent elites. Ids are
/// assigned consecutively from `first_id`.
pub fn refine(
    elites: &[Candidate],
    space: &ParamSpace,
    iteration: usize,
    n_new: usize,
    first_id: u64,
    seed: u64,
) -> Vec<Candidate> {
    assert!(!elites.is_empty(), "refine needs at least one elite");
    let mut rng = rng_from(seed);
    let keep = 1.0 - 0.5f64.powi(iteration as i32);
    (0..n_new as u64)
        .map(|k| {
            let parent = &elites[rng.random_range(0..elites.len())];
            let values = space
                .params
                .iter()
                .zip(&parent.values)
                .map(|(p, v)| match (&p.kind, v) {
                    (ParamKind::Real { lower, upper }, ParamValue::Real(x)) => {
                        let sd = refine_sd(*lower, *upper, iteration);
                        ParamValue::Real(truncated_normal(&mut rng, *x, sd, |y| y > *lower && y < *upper))
                    }
                    (ParamKind::Integer { lower, upper }, ParamValue::Integer(x)) => {
                        let (lo, hi) = (*lower as f64, *upper as f64);
                        let sd = refine_sd(lo, hi, iteration);
                        let y = truncated_normal(&mut rng, *x as f64, sd, |y| y >= lo && y <= hi);
                        ParamValue::Integer((y.round() as i64).clamp(*lower, *upper))
                    }
                    (ParamKind::Categorical { values }, ParamValue::Categorical(i)) => {
                        if rng.random_bool(keep) {
                            ParamValue::Categorical(*i)
                        } else {
                            ParamValue::Categorical(rng.random_range(0..values.len()))
                        }
                    }
                    _ => *v,
                })
                .collect();
            Candidate {
                id: first_id + k,
                values,
                parent: Some(parent.id),
            }
        })
        .collect()
}

/// Rejection sampling from `N(mean, sd^2)` restricted to `accept`; falls back
/// to the mean, which is always admissible here.
fn truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    accept: impl Fn(f64) -> bool,
) -> f64 {
    if sd > 0.0 && sd.is_finite() {
        let normal = Normal::new(mean, sd).expect("finite positive sd");
        for _ in 0..TRUNCATION_ATTEMPTS {
            let y = normal.sample(rng);
            if accept(y) {
                return y;
            }
        }
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cma_space_matches_search_table() {
        let s = ParamSpace::cma();
        assert_eq!(s.len(), 4);
        assert_eq!(
            s.params[0].kind,
            ParamKind::Real {
                lower: 0.1,
                upper: 10.0
            }
        );
        assert_eq!(s.params[1].kind, ParamKind::Integer { lower: 1, upper: 9 });
        for p in &s.params[2..] {
            assert!(matches!(&p.kind, ParamKind::Categorical { values } if values.len() == 2));
        }
    }

    #[test]
    fn initial_samples_stay_in_domain() {
        let s = ParamSpace::cma();
        let c = sample_initial(&s, 100, 1);
        assert_eq!(c.len(), 100);
        assert!(c.iter().all(|c| s.contains(&c.values)));
        assert!(c.iter().all(|c| s.to_cma_config(c).is_ok()));
        assert_eq!(c, sample_initial(&s, 100, 1));
        assert_ne!(c, sample_initial(&s, 100, 2));
    }

    #[test]
    fn initial_scale_mean_matches_uniform() {
        let s = ParamSpace::cma();
        let c = sample_initial(&s, 10_000, 3);
        let mean = c.iter().map(|c| s.numeric(c, "scale").unwrap()).sum::<f64>() / 1e4;
        // Analytic mean of U(0.1, 10) is 5.05.
        assert!((mean - 5.05).abs() < 0.1, "{mean}");
    }

    #[test]
    fn refined_children_stay_in_domain() {
        let s = ParamSpace::cma();
        let parent = s
            .from_cma_config(&CmaConfig::new(5.0, 5, false, false).unwrap(), 0)
            .unwrap();
        let kids = refine(&[parent], &s, 1, 2000, 10, 4);
        assert!(kids.iter().all(|c| s.contains(&c.values)));
        assert!(kids.iter().all(|c| c.parent == Some(0)));
        assert_eq!(kids[0].id, 10);
        assert_eq!(kids.last().unwrap().id, 2009);
    }

    #[test]
    fn refine_sd_matches_formula() {
        // Parent in the middle of the domain, so truncation barely matters at
        // iteration 1: sd (10 - 0.1) / 4.
        let s = ParamSpace::cma();
        let parent = s
            .from_cma_config(&CmaConfig::new(5.05, 5, false, false).unwrap(), 0)
            .unwrap();
        let kids = refine(&[parent], &s, 1, 10_000, 1, 8);
        let xs: Vec<f64> = kids.iter().map(|c| s.numeric(c, "scale").unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        let expected = 9.9 / 4.0;
        // Truncation at roughly +-2 sd shrinks the sd by about 12%.
        assert!(sd < expected && sd > 0.8 * expected, "sd {sd}");
    }

    #[test]
    fn late_iterations_converge_to_parent() {
        let s = ParamSpace::cma();
        let parent = s
            .from_cma_config(&CmaConfig::new(2.0, 4, true, false).unwrap(), 0)
            .unwrap();
        let kids = refine(&[parent.clone()], &s, 60, 200, 1, 0);
        for k in kids {
            assert_eq!(s.to_cma_config(&k).unwrap(), s.to_cma_config(&parent).unwrap());
        }
    }

    #[test]
    fn config_round_trip() {
        let s = ParamSpace::cma();
        let cfg = CmaConfig::new(0.8905, 8, true, true).unwrap();
        let cand = s.from_cma_config(&cfg, 3).unwrap();
        assert_eq!(s.to_cma_config(&cand).unwrap(), cfg);
        let named = s.to_named(&cand);
        assert_eq!(named["scale"], serde_json::json!(0.8905));
        assert_eq!(named["elitist"], serde_json::json!("true"));
    }
}
