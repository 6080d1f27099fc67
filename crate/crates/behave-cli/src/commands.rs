use std::path::{Path, PathBuf};
use std::time::Duration;

use behave::config::{AllocatorKind, RunConfig};
use behave::detection::{run_sr_repeats, run_tr_repeats, DetectionError, DetectionOutcome};
use behave::par::ExecMode;
use behave::rfta::RftaError;
use behave::sim::{run_many, RunResult, SimError};
use serde_json::json;

use crate::output::{create_dir, finish, fmt_opt, peak_memory_mb, run_dir, write_rows, write_text};
use crate::{history, CliError, Context, Granularity};

fn label(rel: &Path) -> String {
    if rel.as_os_str().is_empty() {
        ".".into()
    } else {
        rel.display().to_string()
    }
}

/// One job per sweep point and repeat; repeat `r` runs with seed `seed + r`.
fn simulation_jobs(cfg: &RunConfig) -> Vec<(PathBuf, RunConfig)> {
    let mut jobs = Vec::new();
    for (name, point) in cfg.sweep_points() {
        for r in 0..cfg.repeat {
            let mut c = point.clone();
            c.seed = cfg.seed + r as u64;
            let mut rel = PathBuf::new();
            if !name.is_empty() {
                rel.push(&name);
            }
            if cfg.repeat > 1 {
                rel.push(format!("rep{r}"));
            }
            jobs.push((rel, c));
        }
    }
    jobs
}

fn write_run(dir: &Path, result: Result<RunResult, SimError>) -> Result<RunResult, SimError> {
    let r = result?;
    r.write_outputs(dir)?;
    Ok(r)
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let dir = run_dir(&ctx.out, cfg);
    create_dir(&dir)?;
    let jobs = simulation_jobs(cfg);
    ctx.say(format!("simulate: {} run(s) with {} into {}", jobs.len(), cfg.allocator.name(), dir.display()));
    let inputs: Vec<(RunConfig, AllocatorKind)> = jobs.iter().map(|(_, c)| (c.clone(), c.allocator)).collect();
    let results = run_many(&inputs, ExecMode::auto());
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for ((rel, c), result) in jobs.iter().zip(results) {
        match write_run(&dir.join(rel), result) {
            Ok(r) => {
                ctx.say(format!("  {}: seed {} total gain {:.3}", label(rel), c.seed, r.total_gain));
                outputs.push(json!({
                    "path": label(rel),
                    "seed": c.seed,
                    "total_gain": r.total_gain,
                    "trace_hash": format!("{:016x}", r.trace_hash),
                }));
            }
            Err(e) => failures.push(format!("{}: {e}", label(rel))),
        }
    }
    finish(&dir, "simulate", cfg, json!(outputs), &failures)
}

struct Compared {
    kind: AllocatorKind,
    total_gain: f64,
    ef: Option<f64>,
    load_var: f64,
    trace_hash: u64,
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let dir = run_dir(&ctx.out, cfg);
    create_dir(&dir)?;
    ctx.say(format!("compare: all allocators on seed {} into {}", cfg.seed, dir.display()));
    let inputs: Vec<(RunConfig, AllocatorKind)> = AllocatorKind::ALL.iter().map(|&k| (cfg.clone(), k)).collect();
    let results = run_many(&inputs, ExecMode::auto());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut skipped = None;
    for (&(_, kind), result) in inputs.iter().zip(results) {
        match write_run(&dir.join(kind.name()), result) {
            Ok(r) => rows.push(Compared {
                kind,
                total_gain: r.total_gain,
                ef: r.metrics.last().and_then(|m| m.ef_index),
                load_var: r.mean_of(|m| m.load_var),
                trace_hash: r.trace_hash,
            }),
            Err(SimError::Rfta(e @ RftaError::SearchCapExceeded { .. })) if kind == AllocatorKind::Oracle => {
                skipped = Some(e.to_string());
            }
            Err(e) => failures.push(format!("{}: {e}", kind.name())),
        }
    }
    rows.sort_by(|a, b| b.total_gain.total_cmp(&a.total_gain).then(a.kind.name().cmp(b.kind.name())));
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| vec![r.kind.name().into(), r.total_gain.to_string(), fmt_opt(r.ef), r.load_var.to_string(), (i + 1).to_string()])
        .collect();
    write_rows(&dir.join("comparison.csv"), &["allocator", "total_gain", "ef", "load_var", "rank"], &table)?;

    let gain_of = |k: AllocatorKind| rows.iter().find(|r| r.kind == k).map(|r| r.total_gain);
    let ratio = match (gain_of(AllocatorKind::Edrl), gain_of(AllocatorKind::Oracle)) {
        (Some(e), Some(o)) if o > 0.0 => Some(e / o),
        _ => None,
    };
    let traces_match = rows.windows(2).all(|w| w[0].trace_hash == w[1].trace_hash);
    let mut summary = String::new();
    for (i, r) in rows.iter().enumerate() {
        summary += &format!("{}. {} total_gain {:.3}\n", i + 1, r.kind.name(), r.total_gain);
    }
    match (ratio, &skipped) {
        (Some(q), _) => summary += &format!("edrl/oracle gain ratio: {q:.4}\n"),
        (None, Some(why)) => summary += &format!("oracle skipped: {why}\n"),
        (None, None) => {}
    }
    summary += &format!("identical arrival traces: {traces_match}\n");
    write_text(&dir.join("ranking.txt"), &summary)?;
    ctx.say(summary.trim_end());
    if !traces_match {
        failures.push("allocators saw different arrival traces".into());
    }
    let outputs = json!({
        "ranking": rows.iter().map(|r| r.kind.name()).collect::<Vec<_>>(),
        "edrl_oracle_ratio": ratio,
        "oracle_skipped": skipped,
        "trace_hash": rows.first().map(|r| format!("{:016x}", r.trace_hash)),
    });
    finish(&dir, "compare", cfg, outputs, &failures)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn score_ms(o: &DetectionOutcome) -> f64 {
    if o.scored == 0 {
        0.0
    } else {
        o.score_time.as_secs_f64() * 1e3 / o.scored as f64
    }
}

pub fn detect(ctx: &Context, granularity: Granularity) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let dir = run_dir(&ctx.out, cfg);
    create_dir(&dir)?;
    let seeds: Vec<u64> = (0..cfg.detection.runs as u64).map(|r| cfg.seed + r).collect();
    let mut models: Vec<(&str, Box<dyn Fn() -> Result<Vec<DetectionOutcome>, DetectionError>>)> = Vec::new();
    if granularity != Granularity::Tr {
        models.push(("sr-ocnn", Box::new(|| run_sr_repeats(&cfg.detection.sr, &seeds, ExecMode::auto()))));
    }
    if granularity != Granularity::Sr {
        models.push(("tr-ganed-ocnn", Box::new(|| run_tr_repeats(&cfg.detection.tr, &seeds, ExecMode::auto()))));
    }
    let mut summary = Vec::new();
    let mut per_run = Vec::new();
    let mut failures = Vec::new();
    let params = dir.join("params");
    for (name, train) in &models {
        ctx.say(format!("detect: {name} over {} run(s)", seeds.len()));
        let outcomes = match train() {
            Ok(o) => o,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        let peak = peak_memory_mb();
        let scores: Vec<_> = outcomes.iter().map(|o| o.confusion.f1()).collect();
        for ((o, f), seed) in outcomes.iter().zip(&scores).zip(&seeds) {
            let c = &o.confusion;
            per_run.push(vec![
                name.to_string(),
                seed.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                f.precision.to_string(),
                f.recall.to_string(),
                f.f1.to_string(),
                o.train_time.as_secs_f64().to_string(),
                score_ms(o).to_string(),
            ]);
        }
        let f1 = mean(scores.iter().map(|f| f.f1));
        summary.push(vec![
            name.to_string(),
            outcomes.len().to_string(),
            mean(scores.iter().map(|f| f.precision)).to_string(),
            mean(scores.iter().map(|f| f.recall)).to_string(),
            f1.to_string(),
            mean(outcomes.iter().map(|o| o.train_time.as_secs_f64())).to_string(),
            mean(outcomes.iter().map(score_ms)).to_string(),
            fmt_opt(peak),
        ]);
        let train: Duration = outcomes.iter().map(|o| o.train_time).sum();
        ctx.say(format!("  mean F1 {f1:.4}, training {:.1}s in total", train.as_secs_f64()));
        if let Some(first) = outcomes.first() {
            create_dir(&params)?;
            for (label, file) in &first.models {
                let path = params.join(format!("{label}.params"));
                file.save(&path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
            }
        }
    }
    let header = ["model", "runs", "precision", "recall", "f1", "train_seconds", "score_ms_mean", "peak_mem_mb"];
    write_rows(&dir.join("detection.csv"), &header, &summary)?;
    let run_header = ["model", "seed", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "train_seconds", "score_ms_mean"];
    write_rows(&dir.join("detection_runs.csv"), &run_header, &per_run)?;
    let outputs = json!({ "models": models.iter().map(|m| m.0).collect::<Vec<_>>(), "seeds": seeds });
    finish(&dir, "detect", cfg, outputs, &failures)
}

pub fn brdi(ctx: &Context, history_path: &Path, devices: Option<usize>) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let dir = run_dir(&ctx.out, cfg);
    let states = match history::load(history_path, &cfg.brdi, devices) {
        Ok(s) => s,
        Err(e) => return finish(&dir, "brdi", cfg, json!({ "history": history_path.display().to_string() }), &[e.message().to_string()]),
    };
    let rows: Vec<Vec<String>> = states
        .iter()
        .enumerate()
        .map(|(i, s)| vec![i.to_string(), s.gamma_sr.to_string(), s.gamma_tr.to_string(), s.gamma_total.to_string()])
        .collect();
    create_dir(&dir)?;
    let header = ["device_id", "gamma_sr", "gamma_tr", "gamma"];
    write_rows(&dir.join("brdi.csv"), &header, &rows)?;
    ctx.say(header.join(","));
    for r in &rows {
        ctx.say(r.join(","));
    }
    finish(&dir, "brdi", cfg, json!({ "history": history_path.display().to_string(), "devices": states.len() }), &[])
}
