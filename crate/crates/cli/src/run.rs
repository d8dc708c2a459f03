use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use drift_pfn::benchmarks::{save_csv, Benchmark};
use drift_pfn::checkpoint::Checkpoint;
use drift_pfn::dataset::{DriftDataset, Samples};
use drift_pfn::eval::{argmax, run_comparison, write_report, Candidate};
use drift_pfn::exec::{map_indexed, Exec};
use drift_pfn::prior::sample_dataset;
use drift_pfn::rng::stream;
use drift_pfn::train::{init_checkpoint, train_until};
use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::config::{ModelKind, RunConfig};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const LOG: &str = "run.log";
pub const REPORT: &str = "report.csv";
pub const BOUNDARY: &str = "boundary.csv";

pub fn checkpoint_name(kind: ModelKind) -> String {
    format!("{}.ckpt", kind.name())
}

pub fn trace_name(kind: ModelKind) -> String {
    format!("loss_{}.csv", kind.name())
}

fn log(out: &Path, msg: &str) -> Result<(), CliError> {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = fs::OpenOptions::new().create(true).append(true).open(out.join(LOG))?;
    writeln!(f, "[{ts}] {msg}")?;
    eprintln!("{msg}");
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Record `files` (relative to `out`) with their hashes in the run manifest.
fn update_manifest(out: &Path, files: &[String]) -> Result<(), CliError> {
    let path = out.join(MANIFEST);
    let mut entries: BTreeMap<String, String> = match fs::read_to_string(&path) {
        Ok(text) => {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Data(format!("corrupt manifest: {e}")))?;
            serde_json::from_value(v["files"].clone()).map_err(|e| CliError::Data(format!("corrupt manifest: {e}")))?
        }
        Err(_) => BTreeMap::new(),
    };
    for f in files {
        entries.insert(f.clone(), sha256_file(&out.join(f))?);
    }
    let doc = serde_json::json!({ "files": entries });
    fs::write(path, serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn parse_benchmark(name: &str) -> Result<Benchmark, CliError> {
    Ok(name.parse::<Benchmark>()?)
}

pub fn init(out: Option<&Path>) -> Result<(), CliError> {
    let text = RunConfig::default().to_json();
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn gen(cfg: &RunConfig, out: &Path, benchmark: Option<&str>, exec: Exec) -> Result<(), CliError> {
    prepare_out(cfg, out)?;
    let mut files = vec!["config.json".to_string()];
    if let Some(name) = benchmark {
        let b = parse_benchmark(name)?;
        let ds = cfg.generate(b)?;
        let file = format!("{}.csv", b.name());
        save_csv(&ds, &out.join(&file))?;
        log(out, &format!("gen: wrote {file} ({} rows, {} domains)", ds.len(), ds.schedule().len()))?;
        files.push(file);
    } else {
        let datasets = map_indexed(cfg.gen.count, exec, |i| sample_dataset(&cfg.prior, &mut stream(cfg.seed, &[2, i as u64])));
        for (i, ds) in datasets.into_iter().enumerate() {
            let file = format!("dataset_{i:04}.csv");
            save_csv(&ds?, &out.join(&file))?;
            files.push(file);
        }
        log(out, &format!("gen: wrote {} prior datasets", cfg.gen.count))?;
    }
    update_manifest(out, &files)
}

fn read_trace(path: &Path, until: u64) -> Result<String, CliError> {
    let mut kept = String::from("step,loss\n");
    if let Ok(text) = fs::read_to_string(path) {
        for line in text.lines().skip(1) {
            let step: u64 = line
                .split(',')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Data(format!("bad loss trace line `{line}` in {}", path.display())))?;
            if step < until {
                kept.push_str(line);
                kept.push('\n');
            }
        }
    }
    Ok(kept)
}

pub fn train(cfg: &RunConfig, out: &Path, resume: bool, only: Option<&str>, exec: Exec) -> Result<(), CliError> {
    prepare_out(cfg, out)?;
    let kinds = match only {
        None => vec![ModelKind::Drift, ModelKind::Static],
        Some("drift") => vec![ModelKind::Drift],
        Some("static") => vec![ModelKind::Static],
        Some(other) => return Err(CliError::Config(format!("unknown model `{other}` (expected drift or static)"))),
    };
    let mut files = vec!["config.json".to_string()];
    for kind in kinds {
        let tc = cfg.train_config(kind);
        let ckpt_path = out.join(checkpoint_name(kind));
        let trace_path = out.join(trace_name(kind));
        let mut state = if resume && ckpt_path.exists() {
            Checkpoint::load(&ckpt_path)?
        } else {
            init_checkpoint(&tc)?
        };
        let mut trace = read_trace(&trace_path, if resume { state.step } else { 0 })?;
        log(out, &format!("train {}: step {} of {}", kind.name(), state.step, tc.steps))?;
        let every = if cfg.training.checkpoint_every == 0 { tc.steps } else { cfg.training.checkpoint_every };
        while state.step < tc.steps {
            let until = (state.step + every).min(tc.steps);
            train_until(&tc, &mut state, until, exec, |step, loss| {
                let _ = writeln!(trace, "{step},{loss}");
            })?;
            // the trace may run ahead of the checkpoint; resume trims it
            write_atomic(&trace_path, trace.as_bytes())?;
            state.save(&ckpt_path)?;
            log(out, &format!("train {}: checkpoint at step {}", kind.name(), state.step))?;
        }
        if !ckpt_path.exists() {
            write_atomic(&trace_path, trace.as_bytes())?;
            state.save(&ckpt_path)?;
        }
        files.push(checkpoint_name(kind));
        files.push(trace_name(kind));
    }
    update_manifest(out, &files)
}

fn load_model(out: &Path, kind: ModelKind) -> Result<Option<Checkpoint>, CliError> {
    let path = out.join(checkpoint_name(kind));
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(Checkpoint::load(&path)?))
}

pub fn eval(cfg: &RunConfig, out: &Path, benchmark: Option<&str>, exec: Exec) -> Result<(), CliError> {
    cfg.validate()?;
    let drift = load_model(out, ModelKind::Drift)?;
    let stat = load_model(out, ModelKind::Static)?;
    if drift.is_none() && stat.is_none() {
        return Err(CliError::Data(format!(
            "no checkpoint found in {}; run `driftpfn train --out {}` first",
            out.display(),
            out.display()
        )));
    }
    let mut candidates = Vec::new();
    if let Some(c) = &drift {
        candidates.push(Candidate { name: "drift", model: &c.model, domain_as_feature: false });
    }
    if let Some(c) = &stat {
        candidates.push(Candidate { name: "static", model: &c.model, domain_as_feature: cfg.eval.static_domain_as_feature });
    }
    let benches = match benchmark {
        Some(name) => vec![parse_benchmark(name)?],
        None => cfg.eval.benchmarks.clone(),
    };
    let datasets: Vec<(String, DriftDataset)> =
        benches.iter().map(|&b| Ok((b.name().to_string(), cfg.generate(b)?))).collect::<Result<_, CliError>>()?;
    let rows = run_comparison(&candidates, &datasets, &cfg.eval.variants, &cfg.eval.options, exec)?;
    let mut buf = Vec::new();
    write_report(&rows, &mut buf)?;
    fs::write(out.join(REPORT), &buf)?;
    for r in rows.iter().filter(|r| r.metric == "accuracy") {
        println!("{:<20} {:<20} {:<4} acc {:.4} ± {:.4}", r.dataset, r.variant, r.split, r.mean, r.ci95);
    }
    log(out, &format!("eval: wrote {REPORT} ({} rows)", rows.len()))?;
    update_manifest(out, &[REPORT.to_string()])
}

/// Grid coordinates along one axis covering `[lo, hi]` padded by 10%.
pub fn grid_axis(lo: f64, hi: f64, g: usize) -> Vec<f64> {
    let pad = 0.1 * (hi - lo).max(1e-9);
    let (a, b) = (lo - pad, hi + pad);
    if g == 1 {
        return vec![(a + b) / 2.0];
    }
    (0..g).map(|i| a + (b - a) * i as f64 / (g - 1) as f64).collect()
}

pub fn boundary(cfg: &RunConfig, out: &Path, benchmark: Option<&str>) -> Result<(), CliError> {
    cfg.validate()?;
    let ckpt = load_model(out, ModelKind::Drift)?.ok_or_else(|| {
        CliError::Data(format!("no drift checkpoint in {}; run `driftpfn train` first", out.display()))
    })?;
    let b = match benchmark {
        Some(name) => parse_benchmark(name)?,
        None => cfg.boundary.benchmark,
    };
    let ds = cfg.generate(b)?;
    if ds.num_features() != 2 {
        return Err(CliError::Config(format!("{} has {} features; decision surfaces need 2", b.name(), ds.num_features())));
    }
    let domains = ds.schedule().domains();
    let until = cfg.boundary.context_until.unwrap_or(domains[domains.len().saturating_sub(2)]);
    let ctx_rows: Vec<usize> = (0..ds.len()).filter(|&r| ds.domains()[r] <= until).collect();
    if ctx_rows.len() < 2 {
        return Err(CliError::Config(format!("context_until = {until} leaves fewer than two context rows")));
    }
    let context: Samples = ds.select(&ctx_rows);
    let targets = if cfg.boundary.domains.is_empty() { domains.to_vec() } else { cfg.boundary.domains.clone() };
    let x = ds.features();
    let axis = |j: usize| {
        let col = x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        grid_axis(lo, hi, cfg.boundary.grid)
    };
    let (ax0, ax1) = (axis(0), axis(1));
    let g = cfg.boundary.grid;
    let mut grid = Array2::zeros((g * g, 2));
    for (i, &a) in ax0.iter().enumerate() {
        for (j, &b) in ax1.iter().enumerate() {
            grid[[i * g + j, 0]] = a;
            grid[[i * g + j, 1]] = b;
        }
    }
    let mut text = String::from("x0,x1,domain,class,prob\n");
    for &d in &targets {
        let probs = ckpt.model.predict_proba(&context, grid.view(), &vec![d; g * g])?;
        for (row, p) in grid.rows().into_iter().zip(probs.rows()) {
            let k = argmax(p.iter().copied());
            let _ = writeln!(text, "{},{},{},{},{}", row[0], row[1], d, k, p[k]);
        }
    }
    fs::write(out.join(BOUNDARY), text)?;
    log(out, &format!("boundary: {} grid points for {} domains of {}", g * g, targets.len(), b.name()))?;
    update_manifest(out, &[BOUNDARY.to_string()])
}
