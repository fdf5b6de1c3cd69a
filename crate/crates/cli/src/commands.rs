use rayon::prelude::*;
use std::fs;
use std::path::{Path, PathBuf};

use cmawizard::cma::{run_with, SmallBudget};
use cmawizard::evaluation::{
    convergence_curves, curves_tsv, labels_tsv, matrix_tsv, render_heatmap, score_matrix, DEFAULT_CHECKPOINTS,
};
use cmawizard::racing::{tune_with_journal, CmaTarget, Journal, ParamSpace, TunerSettings};
use cmawizard::seed::derive_seed;
use cmawizard::store::{open_race_log, read_elites, write_atomic, write_elites, EliteEntry, RunStore};
use cmawizard::suites::{function_catalog, generate_suite, FunctionId};
use cmawizard::validation::{validate, CmaRunner, Contender, ValidationReport, ValidationSettings, VoteRule};
use cmawizard::wizard::load_registry;
use cmawizard::{
    wizard_run, Baseline, CmaConfig, ConfigName, ConfigRegistry, Error, InstanceSpec, ProblemDescriptor, Result,
    RunRecord, SuiteName, SuiteSpec,
};

use crate::args::{
    Cli, Command, CompareArgs, Global, RunArgs, SampleArgs, SuiteCommand, SuiteSelect, TuneArgs, ValidateArgs, Vote,
};

/// `println!` that exits quietly once the reader of stdout goes away.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout(), $($t)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}

/// Seed stream of the instances drawn by `run`.
const RUN_STREAM: u64 = 11;
/// Instances per parallel batch of `run`; a crash loses at most one batch.
const RUN_BATCH: usize = 64;

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Suite(SuiteCommand::List) => suite_list(),
        Command::Suite(SuiteCommand::Sample(a)) => suite_sample(g, a),
        Command::Tune(a) => tune(g, a),
        Command::Validate(a) => validate_cmd(g, a),
        Command::Run(a) => run(g, a),
        Command::Compare(a) => compare(g, a),
        Command::Report(_) => report(g),
    }
}

fn suite_spec(sel: &SuiteSelect) -> Result<SuiteSpec> {
    let mut spec = SuiteSpec::named(sel.suite);
    if let Some(cap) = sel.dimension_cap {
        spec = spec.with_dimension_cap(cap)?;
    }
    if !sel.functions.is_empty() {
        let fs = sel
            .functions
            .iter()
            .map(|f| f.parse::<FunctionId>())
            .collect::<Result<Vec<_>>>()?;
        spec = spec.with_functions(fs)?;
    }
    Ok(spec)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::config("workers", "must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))
}

fn print_table(rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:<w$}", w = widths[c]))
            .collect();
        out!("{}", line.join("  ").trim_end());
    }
}

fn suite_list() -> Result<()> {
    let mut rows = vec![["suite", "dimension", "budget", "workers", "box", "use"].map(String::from).to_vec()];
    for name in SuiteName::ALL {
        let s = SuiteSpec::named(name);
        rows.push(vec![
            name.to_string(),
            format!("{}..{}", s.dimension.lower, s.dimension.upper),
            format!("{}..{}", s.budget.lower, s.budget.upper),
            s.num_workers.to_string(),
            s.bounds.map_or("-".into(), |b| format!("[{}, {}]", b.lower, b.upper)),
            name.context().to_string(),
        ]);
    }
    print_table(&rows);
    out!();
    let mut rows = vec![["function", "class", "rotated"].map(String::from).to_vec()];
    for d in function_catalog() {
        rows.push(vec![d.id.to_string(), d.class.as_str().to_string(), d.rotated.to_string()]);
    }
    print_table(&rows);
    Ok(())
}

fn suite_sample(g: &Global, a: &SampleArgs) -> Result<()> {
    let sel = SuiteSelect {
        suite: a.suite,
        dimension_cap: a.dimension_cap,
        functions: Vec::new(),
    };
    let blocks = generate_suite(&suite_spec(&sel)?, a.blocks, g.seed)?;
    let mut rows = vec![["block", "function", "dimension", "budget", "workers", "bounded", "rotation", "key"]
        .map(String::from)
        .to_vec()];
    for (b, block) in blocks.iter().enumerate() {
        for inst in block.instances() {
            rows.push(vec![
                b.to_string(),
                inst.function.to_string(),
                inst.dimension.to_string(),
                inst.budget.to_string(),
                inst.num_workers.to_string(),
                inst.fully_bounded.to_string(),
                inst.rotation_seed.to_string(),
                inst.key(),
            ]);
        }
    }
    print_table(&rows);
    Ok(())
}

fn race_log_path(elites: &Path) -> PathBuf {
    let stem = elites.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    elites.with_file_name(format!("{stem}.race.jsonl"))
}

fn tune(g: &Global, a: &TuneArgs) -> Result<()> {
    let spec = suite_spec(&a.suite)?;
    let settings = TunerSettings {
        max_experiments: a.max_experiments,
        first_test_after_blocks: a.first_test,
        alpha: a.alpha,
        min_survivors: a.min_survivors,
        n_blocks: a.blocks,
        workers: g.workers,
        seed: g.seed,
        ..TunerSettings::default()
    };
    settings.validate()?;
    let elites_path = a
        .elites
        .clone()
        .unwrap_or_else(|| g.out_dir.join("elites").join(format!("{}.jsonl", spec.name)));
    let log_path = race_log_path(&elites_path);
    if a.fresh && log_path.exists() {
        fs::remove_file(&log_path)?;
    }
    let mut log = open_race_log(&log_path)?;
    let replay = log.items().to_vec();
    let resumed = replay.len();

    let space = ParamSpace::cma();
    let target = CmaTarget { space: space.clone() };
    let mut journal = Journal::new()
        .replaying(replay)
        .with_sink(|done| log.extend(done.iter().cloned()));
    if let Some(n) = a.stop_after {
        journal = journal.with_limit(n);
    }
    let outcome = tune_with_journal(&target, &space, &spec, &settings, journal)?;

    let entries: Vec<EliteEntry> = outcome.elites.iter().map(|e| EliteEntry::new(&space, e)).collect();
    write_elites(&elites_path, &entries)?;
    out!(
        "{}: {} experiments ({} reused), {} races",
        spec.name,
        outcome.experiments_used,
        resumed.min(outcome.experiments.len()),
        outcome.races.len()
    );
    for e in &outcome.elites {
        let config = space.to_cma_config(&e.candidate)?;
        out!("  {}. {config} mean loss {} over {} instances", e.rank, e.mean_loss, e.instances);
    }
    out!("elites: {}", elites_path.display());
    out!("race log: {}", log_path.display());
    Ok(())
}

fn validate_cmd(g: &Global, a: &ValidateArgs) -> Result<()> {
    let spec = suite_spec(&a.suite)?;
    let elites_path = a
        .elites
        .clone()
        .unwrap_or_else(|| g.out_dir.join("elites").join(format!("{}.jsonl", spec.name)));
    let space = ParamSpace::cma();
    let mut elites = read_elites(&elites_path)?;
    if let Some(top) = a.top {
        elites.truncate(top);
    }
    if elites.is_empty() {
        return Err(Error::config("elites", format!("{} holds no elites", elites_path.display())));
    }
    let contenders = elites
        .iter()
        .map(|e| {
            let c = space.from_named(&e.params, e.id)?;
            Ok(Contender::new(format!("elite-{}", e.id), space.to_cma_config(&c)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let slot = match &a.slot {
        Some(s) => s.parse::<ConfigName>()?,
        None => ConfigName::for_suite(spec.name)
            .ok_or_else(|| Error::config("slot", format!("{} has no registry slot; pass --slot", spec.name)))?,
    };
    let mut registry = match &a.registry {
        Some(p) => load_registry(p, false)?,
        None => ConfigRegistry::default(),
    };
    let settings = ValidationSettings {
        n_runs: a.runs,
        n_blocks: a.blocks,
        vote: match a.vote {
            Vote::OverRuns => VoteRule::OverRuns,
            Vote::Pooled => VoteRule::Pooled,
        },
        workers: g.workers,
        seed: g.seed,
    };
    let report = validate(&contenders, &spec, &settings, &CmaRunner)?;
    registry.set(slot, report.winner().config);

    let registry_path = g.out_dir.join("registries").join(format!("{}.toml", spec.name));
    write_atomic(&registry_path, registry.to_text().as_bytes())?;
    let report_path = g.out_dir.join("reports").join(format!("validation-{}.json", spec.name));
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))? + "\n";
    write_atomic(&report_path, json.as_bytes())?;

    print_validation(&report);
    out!("{slot} <- {}", report.winner().config);
    out!("registry: {}", registry_path.display());
    out!("report: {}", report_path.display());
    Ok(())
}

fn print_validation(report: &ValidationReport) {
    let mut rows = vec![vec!["contender".to_string(), "config".into(), "run wins".into(), "instance wins".into()]];
    for (c, contender) in report.contenders.iter().enumerate() {
        let wins: f64 = report.per_instance_win_counts.iter().map(|w| w[c]).sum();
        rows.push(vec![
            contender.id.clone(),
            contender.config.to_string(),
            report.run_wins(&contender.id).to_string(),
            format!("{wins:.1}"),
        ]);
    }
    print_table(&rows);
    let tie = if report.tie { " (tie broken by instance wins)" } else { "" };
    out!("winner: {}{tie}", report.overall_winner);
}

enum Algorithm {
    Wizard,
    Config(CmaConfig),
    Baseline(Baseline),
}

fn resolve(name: &str, registry: &ConfigRegistry) -> Result<Algorithm> {
    if name == cmawizard::wizard::WIZARD_ID {
        return Ok(Algorithm::Wizard);
    }
    if name == "CMA" {
        return Ok(Algorithm::Config(CmaConfig::DEFAULT));
    }
    if let Ok(n) = name.parse::<ConfigName>() {
        return Ok(Algorithm::Config(*registry.get(n)));
    }
    name.parse::<Baseline>().map(Algorithm::Baseline).map_err(|_| {
        Error::config(
            "algorithm",
            format!("unknown algorithm `{name}`; expected MetaCMA, CMA, a registry name or a baseline"),
        )
    })
}

fn execute(name: &str, algorithm: &Algorithm, registry: &ConfigRegistry, inst: &InstanceSpec, seed: u64) -> Result<RunRecord> {
    match algorithm {
        Algorithm::Wizard => wizard_run(&ProblemDescriptor::of(inst), inst, registry, seed),
        Algorithm::Config(c) => Ok(run_with(c, inst, seed, SmallBudget::SampleOnly)?.with_algorithm(name)),
        Algorithm::Baseline(b) => b.run(inst, seed),
    }
}

fn run(g: &Global, a: &RunArgs) -> Result<()> {
    let spec = suite_spec(&a.suite)?;
    let registry = match &a.registry {
        Some(p) => load_registry(p, a.partial_registry)?,
        None => ConfigRegistry::default(),
    };
    let algorithms = a
        .algorithms
        .iter()
        .map(|n| Ok((n.as_str(), resolve(n, &registry)?)))
        .collect::<Result<Vec<_>>>()?;
    let store_path = a.store.clone().unwrap_or_else(|| g.out_dir.join("runs").join("runs.jsonl"));
    let mut store = RunStore::open(&store_path)?;
    let blocks = generate_suite(&spec, a.blocks, derive_seed(g.seed, &[RUN_STREAM]))?;
    let instances: Vec<&InstanceSpec> = blocks.iter().flat_map(|b| b.instances()).collect();

    let mut jobs = Vec::new();
    for (k, (name, _)) in algorithms.iter().enumerate() {
        for (i, inst) in instances.iter().enumerate() {
            for rep in 0..a.repeats {
                let seed = derive_seed(g.seed, &[i as u64, rep]);
                if !store.contains(name, spec.name, &inst.key(), seed) {
                    jobs.push((k, *inst, seed));
                }
            }
        }
    }
    let pending = jobs.len();
    if let Some(limit) = a.stop_after {
        jobs.truncate(limit as usize);
    }
    let pool = pool(g.workers)?;
    let mut written = 0u64;
    for batch in jobs.chunks(RUN_BATCH) {
        let records: Vec<Result<RunRecord>> = pool.install(|| {
            batch
                .par_iter()
                .map(|&(k, inst, seed)| execute(algorithms[k].0, &algorithms[k].1, &registry, inst, seed))
                .collect()
        });
        for r in records {
            if store.append(spec.name, r?)? {
                written += 1;
            }
        }
    }
    if jobs.len() < pending {
        return Err(Error::Interrupted { completed: written });
    }
    out!(
        "{}: {} new runs, {} already stored, store {}",
        spec.name,
        written,
        algorithms.len() * instances.len() * a.repeats as usize - pending,
        store_path.display()
    );
    Ok(())
}

fn compare(g: &Global, a: &CompareArgs) -> Result<()> {
    let store_path = a.store.clone().unwrap_or_else(|| g.out_dir.join("runs").join("runs.jsonl"));
    let records: Vec<RunRecord> = RunStore::read(&store_path)?
        .into_iter()
        .filter(|r| a.suite.is_none_or(|s| s == r.suite))
        .filter(|r| a.algorithms.is_empty() || a.algorithms.contains(&r.record.algorithm))
        .map(|r| r.record)
        .collect();
    let checkpoints = if a.checkpoints.is_empty() {
        DEFAULT_CHECKPOINTS.to_vec()
    } else {
        a.checkpoints.clone()
    };
    let matrix = score_matrix(&records, &checkpoints)?;
    let curves = convergence_curves(&records, &checkpoints)?;
    let dir = g.out_dir.join("reports");
    let heatmap = render_heatmap(&matrix);
    write_atomic(&dir.join("matrix.tsv"), matrix_tsv(&matrix).as_bytes())?;
    write_atomic(&dir.join("curves.tsv"), curves_tsv(&curves).as_bytes())?;
    write_atomic(&dir.join("labels.tsv"), labels_tsv(&matrix).as_bytes())?;
    write_atomic(&dir.join("heatmap.txt"), heatmap.as_bytes())?;
    out!("{} settings, {} algorithms", matrix.settings, matrix.algorithms.len());
    for line in labels_tsv(&matrix).lines().skip(1) {
        let (alg, label) = line.split_once('\t').expect("two columns");
        out!("{label}  {alg}");
    }
    out!();
    print!("{heatmap}");
    out!("reports: {}", dir.display());
    Ok(())
}

fn read_tsv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(|l| l.split('\t').map(String::from).collect()).collect())
}

fn report(g: &Global) -> Result<()> {
    let dir = g.out_dir.join("reports");
    let mut shown = false;
    if dir.join("labels.tsv").exists() {
        out!("== ranking ==");
        print_table(&read_tsv(&dir.join("labels.tsv"))?);
        out!("\n== pairwise wins (top rows) ==");
        print!("{}", fs::read_to_string(dir.join("heatmap.txt"))?);
        out!("\n== normalized loss by budget fraction ==");
        print_table(&read_tsv(&dir.join("curves.tsv"))?);
        shown = true;
    }
    if dir.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("validation-") && n.ends_with(".json"))
            })
            .collect();
        files.sort();
        for path in files {
            let text = fs::read_to_string(&path)?;
            let report: ValidationReport =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            if shown {
                out!();
            }
            out!("== {} ==", path.file_stem().unwrap_or_default().to_string_lossy());
            print_validation(&report);
            shown = true;
        }
    }
    if !shown {
        return Err(Error::Io(format!(
            "no reports under {}; run `compare` or `validate` first",
            dir.display()
        )));
    }
    Ok(())
}
