use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use cmawizard::{Error, Result, SuiteName};

#[derive(Debug, Parser)]
#[command(name = "cmawizard", version, about = "Tune, validate, dispatch and compare CMA-ES configurations")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Base seed of every random stream.
    #[arg(long, global = true, env = "CMAWIZARD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// TOML file whose keys act as flags; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect benchmark suites.
    #[command(subcommand)]
    Suite(SuiteCommand),
    /// Race CMA configurations on a suite and write the elites.
    Tune(TuneArgs),
    /// Vote between elites and the default configuration; writes a registry.
    Validate(ValidateArgs),
    /// Run algorithms over a suite into the run store.
    Run(RunArgs),
    /// Score the algorithms in the run store against each other.
    Compare(CompareArgs),
    /// Print the tables written by `compare` and `validate`.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum SuiteCommand {
    /// List the suites and their ranges.
    List,
    /// Print the instances of a sampled suite.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct SuiteSelect {
    /// Suite name, e.g. YABBOB.
    #[arg(long, value_parser = parse_suite)]
    pub suite: SuiteName,
    /// Upper dimension bound below the suite's own.
    #[arg(long)]
    pub dimension_cap: Option<usize>,
    /// Comma-separated function subset.
    #[arg(long, value_delimiter = ',')]
    pub functions: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(value_parser = parse_suite)]
    pub suite: SuiteName,
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long)]
    pub dimension_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub suite: SuiteSelect,
    #[arg(long, default_value_t = 10_000)]
    pub max_experiments: u64,
    #[arg(long, default_value_t = 50)]
    pub blocks: usize,
    /// Blocks seen before the first elimination test.
    #[arg(long, default_value_t = 5)]
    pub first_test: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 2)]
    pub min_survivors: usize,
    #[arg(long)]
    pub elites: Option<PathBuf>,
    /// Stop after this many new experiments; rerun to resume.
    #[arg(long)]
    pub stop_after: Option<u64>,
    /// Discard an existing race log instead of resuming from it.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Vote {
    OverRuns,
    Pooled,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub suite: SuiteSelect,
    /// Elites file; defaults to the one written by `tune`.
    #[arg(long)]
    pub elites: Option<PathBuf>,
    /// Number of top elites entering the vote.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 20)]
    pub blocks: usize,
    #[arg(long, value_enum, default_value_t = Vote::OverRuns)]
    pub vote: Vote,
    /// Registry to start from; built-in values otherwise.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Registry slot to fill; defaults to the suite's own.
    #[arg(long)]
    pub slot: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub suite: SuiteSelect,
    /// MetaCMA, a registry name (CMAstd, ...), CMA for the default
    /// configuration, or a baseline. Repeatable.
    #[arg(long = "algorithm", required = true)]
    pub algorithms: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub blocks: usize,
    /// Runs per instance and algorithm.
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Read registry sections missing from the file as built-in values.
    #[arg(long)]
    pub partial_registry: bool,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Stop after this many new runs; rerun to resume.
    #[arg(long)]
    pub stop_after: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Only records of this suite.
    #[arg(long, value_parser = parse_suite)]
    pub suite: Option<SuiteName>,
    /// Only these algorithms. Repeatable.
    #[arg(long = "algorithm")]
    pub algorithms: Vec<String>,
    /// Budget fractions, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {}

fn parse_suite(s: &str) -> std::result::Result<SuiteName, String> {
    s.parse::<SuiteName>().map_err(|e| e.to_string())
}

/// Outcome of argument parsing.
pub enum Parsed {
    Cli(Box<Cli>),
    /// Help, version or a usage error; clap prints and exits.
    Clap(clap::Error),
    /// The config file itself is faulty.
    Config(Error),
}

/// Parses `argv`, then splices the keys of `--config` in as flags placed
/// before the user's own, skipping any flag the user gave explicitly.
pub fn parse(argv: Vec<OsString>) -> Parsed {
    let Some(path) = config_path(&argv) else {
        return match Cli::try_parse_from(&argv) {
            Ok(c) => Parsed::Cli(Box::new(c)),
            Err(e) => Parsed::Clap(e),
        };
    };
    let merged = match with_config(&argv, &path) {
        Ok(m) => m,
        Err(e) => return Parsed::Config(e),
    };
    match Cli::try_parse_from(merged) {
        Ok(c) => Parsed::Cli(Box::new(c)),
        Err(e)
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::MissingRequiredArgument
            ) =>
        {
            Parsed::Clap(e)
        }
        Err(e) => {
            // Blame the command line when it is wrong on its own terms.
            let own = Cli::try_parse_from(&argv);
            if let Err(own) = own {
                if own.kind() != ErrorKind::MissingRequiredArgument {
                    return Parsed::Clap(own);
                }
            }
            let msg = e.to_string();
            let detail: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let detail = detail.join(" ");
            Parsed::Config(Error::Parse(format!(
                "{}: {}",
                path.display(),
                detail.trim_start_matches("error: ")
            )))
        }
    }
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

const GLOBAL_VALUED: [&str; 4] = ["--seed", "--workers", "--out-dir", "--config"];

fn with_config(argv: &[OsString], path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(format!("{}: {}", path.display(), e.message())))?;
    let user: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();

    // Locate the subcommand path in the user's arguments.
    let mut sub_end = None;
    let mut sub_name = None;
    let mut i = 1;
    while i < user.len() {
        let a = &user[i];
        if GLOBAL_VALUED.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if !a.starts_with('-') {
            sub_name = Some(a.clone());
            sub_end = Some(i + 1);
            if a == "suite" && i + 1 < user.len() {
                sub_end = Some(i + 2);
            }
            break;
        }
        i += 1;
    }
    let command = Cli::command();
    let sub = sub_name
        .as_deref()
        .and_then(|n| command.find_subcommand(n))
        .filter(|s| !s.has_subcommands());

    let given = |flag: &str| user.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    let mut global_args = Vec::new();
    let mut sub_args = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                let Some(sub) = sub.filter(|s| s.get_name() == key) else {
                    if command.find_subcommand(key).is_none() {
                        return Err(Error::config(key.as_str(), "unknown section"));
                    }
                    continue;
                };
                for (k, v) in section {
                    let long = k.replace('_', "-");
                    if !sub.get_arguments().any(|a| a.get_long() == Some(long.as_str())) {
                        return Err(Error::config(format!("{key}.{k}"), "unknown field"));
                    }
                    if !given(&format!("--{long}")) {
                        push_flag(&mut sub_args, &long, v, &format!("{key}.{k}"))?;
                    }
                }
            }
            v => {
                let long = key.replace('_', "-");
                if long == "config" || !GLOBAL_VALUED.contains(&format!("--{long}").as_str()) {
                    return Err(Error::config(key.as_str(), "unknown field"));
                }
                if !given(&format!("--{long}")) {
                    push_flag(&mut global_args, &long, v, key)?;
                }
            }
        }
    }
    let split = sub_end.unwrap_or(user.len());
    let mut merged: Vec<OsString> = vec![argv[0].clone()];
    merged.extend(global_args.into_iter().map(OsString::from));
    merged.extend(argv[1..split].iter().cloned());
    merged.extend(sub_args.into_iter().map(OsString::from));
    merged.extend(argv[split..].iter().cloned());
    Ok(merged)
}

fn push_flag(out: &mut Vec<String>, long: &str, value: &toml::Value, field: &str) -> Result<()> {
    let scalar = |v: &toml::Value| -> Result<String> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            _ => Err(Error::config(field, "expected a string or number")),
        }
    };
    match value {
        toml::Value::Boolean(true) => out.push(format!("--{long}")),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            for item in items {
                out.push(format!("--{long}"));
                out.push(scalar(item)?);
            }
        }
        v => {
            out.push(format!("--{long}"));
            out.push(scalar(v)?);
        }
    }
    Ok(())
}
