use crate::args::{Cli, Command, PlotKind};
use crate::error::CliError;
use crate::plot::{self, LineChart, Series};
use fanet_core::engine::{events_csv, metrics_csv, RunManifest, METRICS_COLUMNS};
use fanet_core::learning::{run_comparison, seed_bank, Comparison};
use fanet_core::scenario::{
    apply_override, read_scenario_value, scenario_from_value, split_override, FIRE_SCENARIO,
};
use fanet_core::scenario::importance_grid;
use fanet_core::{run, Algo, LearnerConfig, MetricsRecord, Scenario, ScenarioError, Trace};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST: &str = "manifest.txt";
pub const SCENARIO_DIR_VAR: &str = "FANET_SCENARIO_DIR";
const BUNDLED_NAME: &str = "fire.scn";

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { scenario } => {
            let (scn, _, label) = load(scenario, &cli.set)?;
            let grid = importance_grid(&scn);
            let (nx, ny) = (grid.nx, grid.ny);
            println!(
                "ok: {label}: {} UAVs, {nx}x{ny} grid of {} m cells, {} fields, {} directives, max_steps {}",
                scn.uavs.len(),
                scn.cell_size_m,
                scn.fields.len(),
                scn.directives.len(),
                scn.max_steps
            );
            Ok(())
        }
        Command::Run { scenario, algo, seed, out } => {
            guard_manifest(out, cli.force)?;
            let (mut scn, mut config, _) = load(scenario, &cli.set)?;
            if let Some(s) = seed {
                scn.seed = *s;
            }
            config.algo = *algo;
            let trace = run(&scn, &config)?;
            eprintln!(
                "{algo} seed {}: {} steps, converged_at {}, objective {:.6}",
                scn.seed,
                trace.metrics.len(),
                trace.converged_at.map_or("none".to_string(), |c| c.to_string()),
                trace.final_state.objective.objective
            );
            let files = vec![
                ("metrics.csv".to_string(), metrics_csv(&trace.metrics)),
                ("events.csv".to_string(), events_csv(&trace.events)),
                ("trace.json".to_string(), trace.to_json()),
            ];
            let mut entries = learner_entries(&config);
            entries.insert(0, ("steps_run".into(), trace.metrics.len().to_string()));
            let mut command = format!("run {} --algo {algo}", display_name(scenario));
            if let Some(s) = seed {
                command.push_str(&format!(" --seed {s}"));
            }
            publish(out, files, manifest(&command, &cli.set, &scn, vec![scn.seed], entries))
        }
        Command::Sweep { scenario, algo, seeds, out } => {
            guard_manifest(out, cli.force)?;
            let (scn, mut config, _) = load(scenario, &cli.set)?;
            config.algo = *algo;
            let cmp = run_comparison(&scn, &[config.clone()], *seeds as usize)?;
            report(&cmp);
            let files = comparison_files(&cmp, false)?;
            let command = format!("sweep {} --algo {algo} --seeds {seeds}", display_name(scenario));
            let entries = learner_entries(&config);
            publish(out, files, manifest(&command, &cli.set, &scn, seed_bank(scn.seed, *seeds as usize), entries))
        }
        Command::Compare { scenario, algos, seeds, out } => {
            guard_manifest(out, cli.force)?;
            let mut unique = algos.clone();
            unique.sort();
            unique.dedup();
            if unique.len() != algos.len() {
                return Err(CliError::Usage("--algos lists an algorithm twice".into()));
            }
            let (scn, config, _) = load(scenario, &cli.set)?;
            let configs: Vec<LearnerConfig> = algos.iter().map(|&a| LearnerConfig { algo: a, ..config.clone() }).collect();
            let cmp = run_comparison(&scn, &configs, *seeds as usize)?;
            report(&cmp);
            let files = comparison_files(&cmp, true)?;
            let names: Vec<&str> = algos.iter().map(|a| a.as_str()).collect();
            let command = format!("compare {} --algos {} --seeds {seeds}", display_name(scenario), names.join(","));
            let mut entries = learner_entries(&config);
            entries.retain(|(k, _)| k != "learner.algo");
            publish(out, files, manifest(&command, &cli.set, &scn, seed_bank(scn.seed, *seeds as usize), entries))
        }
        Command::Plot { input, kind, out } => {
            let svg = render_plot(input, *kind)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
            }
            write_atomically(out, &svg)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn display_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Finds the scenario file: the path itself, then the scenario directory
/// variable, then the bundled copy for `fire.scn`.
fn resolve(path: &Path) -> Result<(Value, String), CliError> {
    if path.exists() {
        return Ok((read_scenario_value(path)?, path.display().to_string()));
    }
    if let Some(dir) = std::env::var_os(SCENARIO_DIR_VAR) {
        let candidate = PathBuf::from(dir).join(path);
        if candidate.exists() {
            return Ok((read_scenario_value(&candidate)?, candidate.display().to_string()));
        }
    }
    if path.as_os_str() == BUNDLED_NAME {
        let value = serde_json::from_str(FIRE_SCENARIO).expect("bundled scenario is JSON");
        return Ok((value, format!("{BUNDLED_NAME} (bundled)")));
    }
    // Produces the ordinary not-found error.
    Err(read_scenario_value(path).expect_err("path does not exist").into())
}

/// Scenario and learner settings with every `--set` applied.
pub fn load(path: &Path, sets: &[String]) -> Result<(Scenario, LearnerConfig, String), CliError> {
    let (mut doc, label) = resolve(path)?;
    let mut learner = serde_json::to_value(LearnerConfig::default()).expect("config serializes");
    for s in sets {
        let (key, raw) = split_override(s)?;
        match key.strip_prefix("learner.") {
            Some(rest) => {
                if learner.get(rest).is_none() {
                    return Err(ScenarioError::Override { key: key.into(), message: "unknown learner setting".into() }.into());
                }
                apply_override(&mut learner, rest, raw)?
            }
            None => apply_override(&mut doc, key, raw)?,
        }
    }
    let scenario = scenario_from_value(doc)?;
    let config: LearnerConfig = serde_json::from_value(learner)
        .map_err(|e| ScenarioError::Validation { field: "learner".into(), message: e.to_string() })?;
    config.validate()?;
    Ok((scenario, config, label))
}

fn learner_entries(config: &LearnerConfig) -> Vec<(String, String)> {
    config.describe().into_iter().map(|(k, v)| (format!("learner.{k}"), v)).collect()
}

fn manifest(command: &str, sets: &[String], scn: &Scenario, seeds: Vec<u64>, entries: Vec<(String, String)>) -> RunManifest {
    let mut command = command.to_string();
    for s in sets {
        command.push_str(&format!(" --set {s}"));
    }
    RunManifest { command, scenario_sha256: scn.content_hash(), seeds, entries, files: Vec::new() }
}

fn guard_manifest(out: &Path, force: bool) -> Result<(), CliError> {
    let m = out.join(MANIFEST);
    if m.exists() && !force {
        return Err(CliError::Usage(format!("{} already exists; pass --force to overwrite", m.display())));
    }
    Ok(())
}

fn write_atomically(path: &Path, contents: &str) -> Result<(), CliError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.partial"));
    fs::write(&tmp, contents).map_err(CliError::io(format!("cannot write {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(CliError::io(format!("cannot move {} into place", tmp.display())))
}

/// Writes the data files, then the manifest that lists them.
fn publish(out: &Path, files: Vec<(String, String)>, mut manifest: RunManifest) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(CliError::io(format!("cannot create {}", out.display())))?;
    for (name, body) in &files {
        write_atomically(&out.join(name), body)?;
    }
    manifest.files = files.into_iter().map(|(n, _)| n).collect();
    manifest.files.push(MANIFEST.to_string());
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    write_atomically(&out.join(MANIFEST), &manifest.render(ts))?;
    eprintln!("wrote {} files to {}", manifest.files.len(), out.display());
    Ok(())
}

fn report(cmp: &Comparison) {
    for s in &cmp.summary {
        eprintln!(
            "{}: {} seeds, {} converged, median converged_at {}, median objective {:.6}",
            s.algo, s.seeds, s.converged_runs, s.converged_at_median, s.final_objective_median
        );
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    algo: Algo,
    seed: u64,
    step: usize,
    objective: f64,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io { context: "csv".into(), source: e.into() })?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { context: "csv".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv is utf8"))
}

fn comparison_files(cmp: &Comparison, with_plot: bool) -> Result<Vec<(String, String)>, CliError> {
    let curves: Vec<CurveRow> = cmp
        .rows
        .iter()
        .zip(&cmp.curves)
        .flat_map(|(r, c)| c.iter().enumerate().map(move |(step, &objective)| CurveRow { algo: r.algo, seed: r.seed, step, objective }))
        .collect();
    let mut files = vec![
        ("comparison.csv".to_string(), to_csv(&cmp.rows)?),
        ("summary.csv".to_string(), to_csv(&cmp.summary)?),
    ];
    if with_plot {
        files.push(("convergence.svg".to_string(), convergence_chart(&curves)));
    }
    files.push(("curves.csv".to_string(), to_csv(&curves)?));
    Ok(files)
}

/// Mean objective per iteration for each algorithm; runs that stopped early
/// hold their last value.
fn convergence_chart(rows: &[CurveRow]) -> String {
    let mut runs: BTreeMap<Algo, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        runs.entry(r.algo).or_default().entry(r.seed).or_default().push(r.objective);
    }
    let series = runs
        .into_iter()
        .map(|(algo, seeds)| {
            let len = seeds.values().map(Vec::len).max().unwrap_or(0);
            let points = (0..len)
                .map(|i| {
                    let sum: f64 = seeds.values().map(|c| c.get(i).or(c.last()).copied().unwrap_or(0.0)).sum();
                    (i as f64, sum / seeds.len() as f64)
                })
                .collect();
            Series { label: algo.to_string(), points }
        })
        .collect();
    LineChart { title: "Convergence", x_label: "iteration", y_label: "mean global objective", series }.render()
}

enum PlotInput {
    Trace(Box<Trace>),
    Metrics(Vec<MetricsRecord>),
    Curves(Vec<CurveRow>),
}

fn parse_error(path: &Path, message: impl ToString) -> CliError {
    CliError::Parse { path: path.display().to_string(), message: message.to_string() }
}

fn read_plot_input(path: &Path) -> Result<PlotInput, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(format!("cannot read {}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let trace: Trace = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
        return Ok(PlotInput::Trace(Box::new(trace)));
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers: Vec<String> = r.headers().map_err(|e| parse_error(path, e))?.iter().map(String::from).collect();
    if headers == METRICS_COLUMNS {
        let rows = r.deserialize().collect::<Result<_, _>>().map_err(|e| parse_error(path, e))?;
        Ok(PlotInput::Metrics(rows))
    } else if headers == ["algo", "seed", "step", "objective"] {
        let rows = r.deserialize().collect::<Result<_, _>>().map_err(|e| parse_error(path, e))?;
        Ok(PlotInput::Curves(rows))
    } else {
        Err(parse_error(path, "expected trace.json, metrics.csv or curves.csv"))
    }
}

fn objective_chart(metrics: &[MetricsRecord]) -> String {
    let line = |label: &str, f: fn(&MetricsRecord) -> f64| Series {
        label: label.into(),
        points: metrics.iter().map(|m| (m.step as f64, f(m))).collect(),
    };
    let series = vec![line("coverage", |m| m.coverage), line("overhead", |m| m.overhead), line("objective", |m| m.objective)];
    LineChart { title: "Coverage, overhead and objective", x_label: "step", y_label: "value", series }.render()
}

pub fn render_plot(input: &Path, kind: PlotKind) -> Result<String, CliError> {
    let data = read_plot_input(input)?;
    Ok(match (kind, data) {
        (PlotKind::Objective, PlotInput::Trace(t)) => objective_chart(&t.metrics),
        (PlotKind::Objective, PlotInput::Metrics(m)) => objective_chart(&m),
        (PlotKind::Convergence, PlotInput::Curves(c)) => convergence_chart(&c),
        (PlotKind::Convergence, PlotInput::Trace(t)) => {
            let series =
                vec![Series { label: t.algo.clone(), points: t.metrics.iter().map(|m| (m.step as f64, m.objective)).collect() }];
            LineChart { title: "Convergence", x_label: "iteration", y_label: "global objective", series }.render()
        }
        (PlotKind::Convergence, PlotInput::Metrics(m)) => {
            let series = vec![Series { label: "objective".into(), points: m.iter().map(|m| (m.step as f64, m.objective)).collect() }];
            LineChart { title: "Convergence", x_label: "iteration", y_label: "global objective", series }.render()
        }
        (PlotKind::Layout, PlotInput::Trace(t)) => {
            plot::layout(&t.final_state, &format!("Final layout ({}, seed {})", t.algo, t.seed))
        }
        (PlotKind::Layout, _) | (PlotKind::Objective, PlotInput::Curves(_)) => {
            return Err(CliError::Usage(format!("plot kind `{}` cannot be drawn from {}", kind_name(kind), input.display())))
        }
    })
}

fn kind_name(kind: PlotKind) -> String {
    use clap::ValueEnum;
    kind.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
}
