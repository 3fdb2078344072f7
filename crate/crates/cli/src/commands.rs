use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use neurontrace::exec::ExecMode;
use neurontrace::expkit::{cross_silo_run, fault_localization_run, forgetting_run, select_inputs, trace_round, Selection};
use neurontrace::flsim::{evaluate, write_atomic, FlConfig, Federation, RoundSnapshot, RunStore};
use neurontrace::provenance::{heatmap as build_heatmap, ProvenanceReport, TraceOptions};
use neurontrace::{Error, Result};

use crate::inputs::InputSpec;
use crate::Experiment;

const THREADS_VAR: &str = "NEURONTRACE_THREADS";

/// Caps the worker pool when `NEURONTRACE_THREADS` is set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config_field(THREADS_VAR, format!("expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config_field(THREADS_VAR, e.to_string()))
}

pub fn train(config: &Path, out: &Path, force: bool) -> Result<()> {
    let cfg = FlConfig::load(config)?;
    let store = RunStore::create(out, force)?;
    let mut fed = Federation::new(cfg.clone(), store)?;
    for _ in 0..cfg.rounds {
        let (log, _) = fed.run_round()?;
        println!("round {:>4}  clients {:>3}  accuracy {:.2}%", log.round, log.participants.len(), log.accuracy);
    }
    Ok(())
}

pub fn trace(run: &Path, round: usize, inputs: &str, opts: &TraceOptions, out: Option<&Path>) -> Result<()> {
    let spec = InputSpec::parse(inputs)?;
    let store = RunStore::open(run)?;
    let manifest = store.read_manifest()?;
    let snapshot = RoundSnapshot::load(&store, round)?;
    let (_, test) = manifest.config.dataset.load(manifest.seed)?;

    let rows: Vec<usize> = match spec {
        InputSpec::Rows(rows) => {
            if let Some(r) = rows.iter().find(|&&r| r >= test.len()) {
                return Err(Error::config_field("inputs", format!("row {r} outside the {}-row test set", test.len())));
            }
            rows
        }
        InputSpec::Label(k) => {
            let rows: Vec<usize> = (0..test.len()).filter(|&r| test.label(r) == k).collect();
            if rows.is_empty() {
                return Err(Error::config_field("inputs", format!("test set has no input with label {k}")));
            }
            rows
        }
        InputSpec::AllCorrect | InputSpec::AllWrong => {
            let eval = evaluate(&snapshot.arch, &snapshot.global, &test, ExecMode::default())?;
            let sel = if spec == InputSpec::AllCorrect {
                Selection::Correct
            } else {
                Selection::Misclassified { labels: (0..test.num_classes()).collect() }
            };
            select_inputs(&eval, &test, &sel, None)
        }
    };

    let traced = trace_round(&snapshot, &test, &rows, opts, ExecMode::default())?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| run.join("reports").join(RunStore::round_dir_name(round)));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    for r in &traced.reports {
        let name = format!("input_{:05}.json", r.input_id);
        r.write(&dir.join(&name))?;
        files.push(serde_json::json!({ "input_id": r.input_id, "file": name, "top": r.top() }));
    }
    let summary = serde_json::json!({
        "round": round,
        "threshold": opts.threshold,
        "requested": rows.len(),
        "reports": files,
        "untraced": traced.untraced,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&dir.join("summary.json"), text.as_bytes())?;
    println!("{} report(s) in {}", traced.reports.len(), dir.display());

    if !traced.untraced.is_empty() {
        return Err(Error::Degenerate(format!(
            "{} input(s) have no neuron above threshold {}: {:?}",
            traced.untraced.len(),
            opts.threshold,
            traced.untraced
        )));
    }
    Ok(())
}

/// Empties `out` (with `force`) and returns the run directory inside it.
fn prepare_out(out: &Path, force: bool) -> Result<PathBuf> {
    let occupied = out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied {
        if !force {
            return Err(Error::io(
                out,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "directory is not empty (use --force)"),
            ));
        }
        std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    Ok(out.join("run"))
}

pub fn experiment(name: Experiment, config: &Path, out: &Path, force: bool) -> Result<()> {
    let cfg = FlConfig::load(config)?;
    let run_dir = prepare_out(out, force)?;
    let store = RunStore::create(run_dir, false)?;
    let exec = ExecMode::default();
    match name {
        Experiment::Forgetting => {
            let r = forgetting_run(&cfg, store, exec)?;
            for x in &r.rounds {
                let excluded = x.excluded.map_or("-".to_string(), |a| format!("{a:.2}%"));
                println!("round {:>4}  overall {:.2}%  excluded labels {excluded}", x.round, x.overall);
            }
            r.write(out)
        }
        Experiment::CrossSilo => {
            let r = cross_silo_run(&cfg, store, exec)?;
            for x in &r.rounds {
                println!("round {:>4}  traced {:>5}  provenance {}", x.round, x.z, pct(x.accuracy));
            }
            println!("mean over last 10 rounds: {}", pct(r.mean_accuracy_last(10)));
            r.write(out)
        }
        Experiment::FaultLocalization => {
            let r = fault_localization_run(&cfg, store, exec)?;
            println!("faulty clients {:?}, flipped labels {:?}", r.faulty_clients, r.targeted_labels);
            for x in &r.rounds {
                println!("round {:>4}  traced {:>5}  localization {}", x.accuracy.round, x.accuracy.z, pct(x.accuracy.accuracy));
            }
            println!("mean: {}", pct(r.mean_accuracy()));
            r.write(out)
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |a| format!("{a:.2}%"))
}

pub fn heatmap(pattern: &str, out: &Path) -> Result<()> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Error::config_field("reports", e.to_string()))?
        .filter_map(|p| p.ok())
        .filter(|p| p.file_name().is_some_and(|n| n != "summary.json"))
        .collect();
    if paths.is_empty() {
        return Err(Error::config_field("reports", format!("no report matches `{pattern}`")));
    }
    let reports = paths.iter().map(|p| ProvenanceReport::read(p)).collect::<Result<Vec<_>>>()?;
    let clients: BTreeSet<usize> = reports.iter().flat_map(|r| r.normalized.keys().copied()).collect();
    let matrix = build_heatmap(&reports, &clients.into_iter().collect::<Vec<_>>())?;
    write_atomic(out, matrix.to_csv().as_bytes())?;
    println!("{} report(s), {} label row(s) -> {}", reports.len(), matrix.rows.len(), out.display());
    Ok(())
}
