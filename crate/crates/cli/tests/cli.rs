use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cmd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmawizard"))
        .current_dir(dir)
        .env_remove("CMAWIZARD_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 6] = [
    "--suite",
    "YATUNINGBBOB",
    "--dimension-cap",
    "4",
    "--functions",
    "sphere,ellipsoid,rosenbrock",
];

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cmd(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(cmd(dir.path(), &["tune", "--suite", "YABBOB", "--bogus"]).status.code(), Some(2));
    assert_eq!(cmd(dir.path(), &["suite", "sample", "NOSUCH"]).status.code(), Some(2));
    assert_eq!(cmd(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn sampled_small_suite_has_small_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmd(dir.path(), &["suite", "sample", "YASMALLBBOB", "--blocks", "3", "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    for row in rows {
        let budget: u64 = row.split_whitespace().nth(3).unwrap().parse().unwrap();
        assert!(budget < 50, "{row}");
    }
    assert!(cmd(dir.path(), &["suite", "list"]).status.success());
}

#[test]
fn config_file_and_environment_compose_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let sample = |extra: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_cmawizard"));
        c.current_dir(dir.path()).env_remove("CMAWIZARD_SEED");
        if let Some(v) = env {
            c.env("CMAWIZARD_SEED", v);
        }
        let o = c.args(extra).args(["suite", "sample", "YABBOB"]).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    fs::write(dir.path().join("c.toml"), "seed = 7\n").unwrap();
    let seven = sample(&["--seed", "7"], None);
    let eight = sample(&["--seed", "8"], None);
    assert_ne!(seven, eight);
    assert_eq!(sample(&["--config", "c.toml"], None), seven);
    assert_eq!(sample(&["--config", "c.toml", "--seed", "8"], None), eight);
    assert_eq!(sample(&["--seed=8", "--config", "c.toml"], None), eight);
    assert_eq!(sample(&[], Some("7")), seven);
    assert_eq!(sample(&["--config", "c.toml"], Some("8")), seven);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[tune]\nmax_experiments = 100\nbogus = 1\n").unwrap();
    let o = cmd(dir.path(), &["--config", "c.toml", "tune", "--suite", "YABBOB"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tune.bogus"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);

    fs::write(dir.path().join("c.toml"), "[tune]\nalpha = \"high\"\n").unwrap();
    let o = cmd(dir.path(), &["--config", "c.toml", "tune", "--suite", "YABBOB"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));

    let registry = cmawizard::ConfigRegistry::default()
        .to_text()
        .replacen("scale = 0.4151", "scale = 0.05", 1);
    fs::write(dir.path().join("r.toml"), registry).unwrap();
    let o = cmd(dir.path(), &["run", "--suite", "YASMALLBBOB", "--algorithm", "MetaCMA", "--registry", "r.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CMAsmall.scale"), "{}", stderr(&o));
}

#[test]
fn config_sections_supply_subcommand_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "seed = 3\n[tune]\nsuite = \"YATUNINGBBOB\"\ndimension_cap = 4\nfunctions = [\"sphere\", \"ellipsoid\", \"rosenbrock\"]\nmax_experiments = 300\nblocks = 15\n",
    )
    .unwrap();
    let a = cmd(dir.path(), &["--config", "c.toml", "--out-dir", "a", "tune"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let mut args = vec!["--seed", "3", "--out-dir", "b", "tune", "--max-experiments", "300", "--blocks", "15"];
    args.extend(SMALL);
    let b = cmd(dir.path(), &args);
    assert!(b.status.success(), "{}", stderr(&b));
    let read = |d: &str| fs::read(dir.path().join(d).join("elites/YATUNINGBBOB.jsonl")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn tune_validate_run_compare_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut tune = vec!["--seed", "2", "--workers", "2", "tune", "--max-experiments", "300", "--blocks", "15"];
    tune.extend(SMALL);
    let o = cmd(dir.path(), &tune);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut validate = vec!["validate", "--runs", "3", "--blocks", "2"];
    validate.extend(SMALL);
    let o = cmd(dir.path(), &validate);
    assert!(o.status.success(), "{}", stderr(&o));
    let registry_path = dir.path().join("registries/YATUNINGBBOB.toml");
    let registry = cmawizard::wizard::load_registry(&registry_path, false).unwrap();
    let report: cmawizard::validation::ValidationReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reports/validation-YATUNINGBBOB.json")).unwrap())
            .unwrap();
    assert_eq!(*registry.get(cmawizard::ConfigName::Tuning), report.winner().config);
    assert_eq!(report.per_run_winners.len(), 3);

    let mut run = vec![
        "run",
        "--registry",
        "registries/YATUNINGBBOB.toml",
        "--algorithm",
        "MetaCMA",
        "--algorithm",
        "random-search",
        "--blocks",
        "2",
    ];
    run.extend(SMALL);
    let o = cmd(dir.path(), &run);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cmd(dir.path(), &["compare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("/2:"));
    for f in ["matrix.tsv", "curves.tsv", "labels.tsv", "heatmap.txt"] {
        assert!(dir.path().join("reports").join(f).exists(), "{f}");
    }
    let o = cmd(dir.path(), &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("== ranking =="));
    assert!(stdout(&o).contains("== validation-YATUNINGBBOB =="));
}

#[test]
fn compare_single_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = vec!["run", "--algorithm", "CMAtuning", "--blocks", "1", "--repeats", "2"];
    run.extend(SMALL);
    assert!(cmd(dir.path(), &run).status.success());
    let o = cmd(dir.path(), &["compare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("1/1:50.0% +- 0.0  CMAtuning"), "{}", stdout(&o));
    let o = cmd(dir.path(), &["compare", "--algorithm", "nobody"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn report_without_outputs_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmd(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn run_resumes_from_torn_store() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = vec!["--seed", "4", "run", "--algorithm", "CMA", "--algorithm", "one-plus-one-es", "--blocks", "2"];
    run.extend(SMALL);
    let full = [&["--out-dir", "full"][..], &run[..]].concat();
    assert!(cmd(dir.path(), &full).status.success());

    let part = [&["--out-dir", "part"][..], &run[..], &["--stop-after", "5"][..]].concat();
    let o = cmd(dir.path(), &part);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rerun"), "{}", stderr(&o));
    let store = dir.path().join("part/runs/runs.jsonl");
    let mut bytes = fs::read(&store).unwrap();
    bytes.extend_from_slice(b"{\"suite\":\"YATUNINGBBOB\",\"record\":{\"algo");
    fs::write(&store, bytes).unwrap();

    let resume = [&["--out-dir", "part", "--workers", "3"][..], &run[..]].concat();
    let o = cmd(dir.path(), &resume);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("full/runs/runs.jsonl")).unwrap(),
        fs::read(&store).unwrap()
    );
    // A completed run is a no-op.
    let o = cmd(dir.path(), &resume);
    assert!(stdout(&o).contains(": 0 new runs"), "{}", stdout(&o));
    assert_eq!(
        fs::read(dir.path().join("full/runs/runs.jsonl")).unwrap(),
        fs::read(&store).unwrap()
    );
}
