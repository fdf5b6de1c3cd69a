//! MetaCMA: a deterministic dispatcher over five named CMA configurations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::cma::{run_with, CmaConfig, SmallBudget};
use crate::error::{Error, Result};
use crate::record::{Optimizer, RunRecord};
use crate::suites::{InstanceSpec, SuiteName};

pub const REGISTRY_SCHEMA: &str = "cmawizard.registry/1";
pub const WIZARD_ID: &str = "MetaCMA";

/// A priori problem features used for dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub budget: u64,
    pub dimension: usize,
    pub num_workers: usize,
    pub fully_bounded: bool,
}

impl ProblemDescriptor {
    pub fn of(instance: &InstanceSpec) -> Self {
        ProblemDescriptor {
            budget: instance.budget,
            dimension: instance.dimension,
            num_workers: instance.num_workers,
            fully_bounded: instance.fully_bounded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfigName {
    #[serde(rename = "CMAstd")]
    Std,
    #[serde(rename = "CMAsmall")]
    Small,
    #[serde(rename = "CMAtuning")]
    Tuning,
    #[serde(rename = "CMApara")]
    Para,
    #[serde(rename = "CMAbounded")]
    Bounded,
}

impl ConfigName {
    pub const ALL: [ConfigName; 5] = [
        ConfigName::Std,
        ConfigName::Small,
        ConfigName::Tuning,
        ConfigName::Para,
        ConfigName::Bounded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigName::Std => "CMAstd",
            ConfigName::Small => "CMAsmall",
            ConfigName::Tuning => "CMAtuning",
            ConfigName::Para => "CMApara",
            ConfigName::Bounded => "CMAbounded",
        }
    }

    /// Tuned values shipped with the wizard.
    pub fn builtin(self) -> CmaConfig {
        let (scale, factor, elitist, diagonal) = match self {
            ConfigName::Std => (0.3607, 3, false, false),
            ConfigName::Small => (0.4151, 9, false, false),
            ConfigName::Tuning => (0.4847, 1, true, false),
            ConfigName::Para => (0.8905, 8, true, true),
            ConfigName::Bounded => (1.5884, 1, true, true),
        };
        CmaConfig::new(scale, factor, elitist, diagonal).expect("built-in values lie in the domain")
    }

    /// The configuration slot filled by tuning on `suite`.
    pub fn for_suite(suite: SuiteName) -> Option<ConfigName> {
        match suite {
            SuiteName::Yabbob => Some(ConfigName::Std),
            SuiteName::Yasmallbbob => Some(ConfigName::Small),
            SuiteName::Yatuningbbob => Some(ConfigName::Tuning),
            SuiteName::Yaparabbob => Some(ConfigName::Para),
            SuiteName::Yaboundedbbob => Some(ConfigName::Bounded),
            _ => None,
        }
    }
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConfigName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown configuration name `{s}`")))
    }
}

/// MetaCMA's decision rules.
pub fn meta_cma_select(p: &ProblemDescriptor) -> ConfigName {
    if p.fully_bounded {
        ConfigName::Bounded
    } else if p.budget < 50 {
        if p.dimension <= 15 {
            ConfigName::Tuning
        } else {
            ConfigName::Small
        }
    } else if p.num_workers > 20 {
        ConfigName::Para
    } else {
        ConfigName::Std
    }
}

/// Named configurations used by the wizard.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigRegistry {
    configs: BTreeMap<ConfigName, CmaConfig>,
}

impl Default for ConfigRegistry {
    fn default() -> Self {
        ConfigRegistry {
            configs: ConfigName::ALL.into_iter().map(|n| (n, n.builtin())).collect(),
        }
    }
}

impl ConfigRegistry {
    pub fn get(&self, name: ConfigName) -> &CmaConfig {
        &self.configs[&name]
    }

    pub fn set(&mut self, name: ConfigName, config: CmaConfig) {
        self.configs.insert(name, config);
    }

    /// Structured text: a schema line followed by one section per name.
    pub fn to_text(&self) -> String {
        let mut out = format!("schema = \"{REGISTRY_SCHEMA}\"\n");
        for name in ConfigName::ALL {
            let c = self.get(name);
            out.push_str(&format!(
                "\n[{name}]\nscale = {:?}\npopsize_factor = {}\nelitist = {}\ndiagonal = {}\n",
                c.scale(),
                c.popsize_factor(),
                c.elitist(),
                c.diagonal()
            ));
        }
        out
    }

    /// Parses registry text. With `partial`, names missing from the text keep
    /// their built-in values; otherwise all five sections are required.
    pub fn from_text(text: &str, partial: bool) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        let mut registry = ConfigRegistry::default();
        let mut seen = Vec::new();
        for (key, value) in &table {
            if key == "schema" {
                match value.as_str() {
                    Some(REGISTRY_SCHEMA) => continue,
                    _ => return Err(Error::Parse(format!("schema: expected \"{REGISTRY_SCHEMA}\""))),
                }
            }
            let name: ConfigName = key.parse()?;
            let section = value
                .as_table()
                .ok_or_else(|| Error::Parse(format!("{key}: expected a section")))?;
            registry.set(name, parse_section(key, section)?);
            seen.push(name);
        }
        if !partial {
            if let Some(missing) = ConfigName::ALL.into_iter().find(|n| !seen.contains(n)) {
                return Err(Error::Parse(format!("{missing}: section missing")));
            }
        }
        Ok(registry)
    }
}

fn parse_section(name: &str, section: &toml::Table) -> Result<CmaConfig> {
    const FIELDS: [&str; 4] = ["scale", "popsize_factor", "elitist", "diagonal"];
    if let Some(unknown) = section.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(Error::Parse(format!("{name}.{unknown}: unknown field")));
    }
    let field = |f: &str| {
        section
            .get(f)
            .ok_or_else(|| Error::Parse(format!("{name}.{f}: missing")))
    };
    let scale = match field("scale")? {
        toml::Value::Float(v) => *v,
        toml::Value::Integer(v) => *v as f64,
        _ => return Err(Error::Parse(format!("{name}.scale: expected a number"))),
    };
    let factor = field("popsize_factor")?
        .as_integer()
        .ok_or_else(|| Error::Parse(format!("{name}.popsize_factor: expected an integer")))?;
    let flag = |f: &str| -> Result<bool> {
        field(f)?
            .as_bool()
            .ok_or_else(|| Error::Parse(format!("{name}.{f}: expected a boolean")))
    };
    let factor = u32::try_from(factor)
        .map_err(|_| Error::Parse(format!("{name}.popsize_factor: {factor} outside [1, 9]")))?;
    CmaConfig::new(scale, factor, flag("elitist")?, flag("diagonal")?).map_err(|e| match e {
        Error::InvalidConfig { field, reason } => Error::Parse(format!("{name}.{field}: {reason}")),
        other => other,
    })
}

pub fn load_registry(path: &Path, partial: bool) -> Result<ConfigRegistry> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ConfigRegistry::from_text(&text, partial)
}

/// Dispatches on `p` and runs the selected configuration on `instance`.
/// Budgets below one generation run a truncated first generation.
pub fn wizard_run(
    p: &ProblemDescriptor,
    instance: &InstanceSpec,
    registry: &ConfigRegistry,
    seed: u64,
) -> Result<RunRecord> {
    let actual = ProblemDescriptor::of(instance);
    let mut mismatches = Vec::new();
    if p.budget != actual.budget {
        mismatches.push(format!("budget {} vs {}", p.budget, actual.budget));
    }
    if p.dimension != actual.dimension {
        mismatches.push(format!("dimension {} vs {}", p.dimension, actual.dimension));
    }
    if p.fully_bounded != actual.fully_bounded {
        mismatches.push(format!("fully_bounded {} vs {}", p.fully_bounded, actual.fully_bounded));
    }
    if !mismatches.is_empty() {
        return Err(Error::DescriptorMismatch(mismatches.join(", ")));
    }
    let name = meta_cma_select(p);
    let config = *registry.get(name);
    let mut record = run_with(&config, instance, seed, SmallBudget::SampleOnly)?;
    record.algorithm = WIZARD_ID.to_string();
    record.optimizer = Optimizer::Cma {
        config,
        selected: Some(name.as_str().to_string()),
    };
    Ok(record)
}
