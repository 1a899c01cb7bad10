//! Corpus benchmark: detect, extract and repair every program, then report.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use confx_core::agent::{repair, LiveClient, LlmClient, MockClient, SessionOutcome};
use confx_core::explorer::{explore, Verdict};
use confx_core::extractor::{stage_report, FilterStage};
use confx_core::lang::parse;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, LlmBackend};
use crate::manifest::{corpus_programs, BugType, Manifest};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub config: Config,
    /// Stages to sweep in addition to the configured one.
    pub stages: Vec<FilterStage>,
    pub timings: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub detect_ms: f64,
    pub extract_ms: f64,
    pub fix_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRun {
    pub outcome: String,
    pub fixed: bool,
    pub iter: usize,
    pub locks_added: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub loc: usize,
    pub tokens: BTreeMap<FilterStage, usize>,
    pub bug_type: Option<BugType>,
    pub verdict: Option<Verdict>,
    pub detected: bool,
    /// Repair runs per stage; empty when no bug was detected.
    pub runs: BTreeMap<FilterStage, StageRun>,
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl Row {
    fn run(&self, stage: FilterStage) -> Option<&StageRun> {
        self.runs.get(&stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: FilterStage,
    pub tokens: usize,
    pub filtered_ratio: Option<f64>,
    pub attempted: usize,
    pub fixed: usize,
    pub cr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub stage: FilterStage,
    pub rows: Vec<Row>,
    pub files: usize,
    pub attempted: usize,
    pub fixed: usize,
    /// Repair success rate, fixes over attempted repairs.
    pub cr: Option<f64>,
    pub stages: Vec<StageSummary>,
}

/// Model client for one program; `mock` takes the fixture from the manifest.
pub fn client_for(backend: &LlmBackend, manifest: Option<&Manifest>, program: &Path) -> anyhow::Result<Box<dyn LlmClient>> {
    Ok(match backend {
        LlmBackend::Live => Box::new(LiveClient::from_env()?),
        LlmBackend::MockFile(p) => Box::new(MockClient::from_file(p)?),
        LlmBackend::Mock => {
            let fixture = manifest
                .and_then(|m| m.mock.as_ref())
                .ok_or_else(|| anyhow!("no mock fixture declared for {}", program.display()))?;
            Box::new(MockClient::from_file(&program.with_file_name(fixture))?)
        }
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn bench_file(path: &Path, opts: &BenchOptions, stages: &[FilterStage]) -> Row {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut row = Row {
        name: name.clone(),
        loc: 0,
        tokens: BTreeMap::new(),
        bug_type: None,
        verdict: None,
        detected: false,
        runs: BTreeMap::new(),
        error: None,
        timings: opts.timings.then(Timings::default),
    };
    if let Err(e) = fill_row(path, &name, opts, stages, &mut row) {
        row.error = Some(format!("{e:#}"));
    }
    row
}

fn fill_row(path: &Path, name: &str, opts: &BenchOptions, stages: &[FilterStage], row: &mut Row) -> anyhow::Result<()> {
    let manifest = Manifest::for_program(path)?;
    row.bug_type = manifest.as_ref().map(|m| m.bug_type);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    row.loc = text.lines().filter(|l| !l.trim().is_empty()).count();
    let p = parse(&text)?;

    let t = Instant::now();
    let report = stage_report(&p)?;
    let extract_ms = ms(t);
    row.tokens = report.stages.iter().map(|s| (s.stage, s.tokens)).collect();

    let t = Instant::now();
    let detection = explore(&p, opts.config.explore_options());
    let detect_ms = ms(t);
    row.verdict = Some(detection.verdict);
    row.detected = detection.verdict.is_failure();

    let t = Instant::now();
    if row.detected {
        for &stage in stages {
            let mut client = client_for(&opts.config.llm, manifest.as_ref(), path)?;
            let mut cfg = Config { stage, ..opts.config.clone() }.repair_config(name);
            if let Some(m) = &manifest {
                cfg.expect_globals = m.expect_globals.clone();
            }
            let s = repair(&p, client.as_mut(), &cfg)?;
            let outcome = match &s.outcome {
                SessionOutcome::Fixed => "fixed".to_string(),
                SessionOutcome::ExhaustedAttempts => "exhausted".to_string(),
                SessionOutcome::Failed { reason } => format!("failed: {reason}"),
            };
            row.runs.insert(stage, StageRun { fixed: s.is_fixed(), outcome, iter: s.iter, locks_added: s.locks_added });
        }
    }
    if let Some(tm) = row.timings.as_mut() {
        *tm = Timings { detect_ms, extract_ms, fix_ms: ms(t) };
    }
    Ok(())
}

fn rate(fixed: usize, attempted: usize) -> Option<f64> {
    (attempted > 0).then(|| fixed as f64 / attempted as f64)
}

pub fn run_bench(dir: &Path, opts: &BenchOptions) -> anyhow::Result<BenchmarkReport> {
    let files: Vec<PathBuf> = corpus_programs(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut stages = opts.stages.clone();
    stages.push(opts.config.stage);
    stages.sort();
    stages.dedup();
    let mut rows: Vec<Row> = files.par_iter().map(|f| bench_file(f, opts, &stages)).collect();
    rows.sort_by(|a, b| a.name.cmp(&b.name));

    let primary = opts.config.stage;
    let attempted = rows.iter().filter(|r| r.run(primary).is_some()).count();
    let fixed = rows.iter().filter(|r| r.run(primary).is_some_and(|s| s.fixed)).count();
    let mut summaries = Vec::new();
    if !opts.stages.is_empty() {
        let mut previous = None;
        for stage in FilterStage::ALL {
            let tokens: usize = rows.iter().filter_map(|r| r.tokens.get(&stage)).sum();
            let filtered_ratio = previous.filter(|&p: &usize| p > 0).map(|p| 1.0 - tokens as f64 / p as f64);
            previous = Some(tokens);
            if !opts.stages.contains(&stage) {
                continue;
            }
            let att = rows.iter().filter(|r| r.run(stage).is_some()).count();
            let fx = rows.iter().filter(|r| r.run(stage).is_some_and(|s| s.fixed)).count();
            summaries.push(StageSummary { stage, tokens, filtered_ratio, attempted: att, fixed: fx, cr: rate(fx, att) });
        }
    }
    Ok(BenchmarkReport { stage: primary, files: rows.len(), attempted, fixed, cr: rate(fixed, attempted), rows, stages: summaries })
}

fn pct(r: Option<f64>) -> String {
    r.map(|r| format!("{:.1}%", r * 100.0)).unwrap_or_else(|| "n/a".into())
}

impl BenchmarkReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>4} {:>22} {:<12} {:<17} {:<9} {:>4} {:>4}",
            "program", "loc", "tokens p1/p2/p3/p4", "bug type", "verdict", "fixed", "iter", "lock"
        );
        for r in &self.rows {
            let tokens = FilterStage::ALL
                .iter()
                .map(|s| r.tokens.get(s).map(|t| t.to_string()).unwrap_or_else(|| "-".into()))
                .collect::<Vec<_>>()
                .join("/");
            let run = r.run(self.stage);
            let fixed = match (run, &r.error) {
                (_, Some(_)) => "error".to_string(),
                (Some(s), None) => if s.fixed { "yes" } else { "no" }.to_string(),
                (None, None) => "-".to_string(),
            };
            let _ = write!(
                out,
                "{:<24} {:>4} {:>22} {:<12} {:<17} {:<9} {:>4} {:>4}",
                r.name,
                r.loc,
                tokens,
                r.bug_type.map(|b| b.to_string()).unwrap_or_else(|| "?".into()),
                r.verdict.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                fixed,
                run.map(|s| s.iter.to_string()).unwrap_or_else(|| "-".into()),
                run.and_then(|s| s.locks_added).map(|l| l.to_string()).unwrap_or_else(|| "-".into()),
            );
            if let Some(t) = &r.timings {
                let _ = write!(out, "  detect {:.1}ms extract {:.1}ms fix {:.1}ms", t.detect_ms, t.extract_ms, t.fix_ms);
            }
            if let Some(e) = &r.error {
                let _ = write!(out, "  error: {e}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "\nfiles: {}  attempted: {}  fixed: {}  CR: {}", self.files, self.attempted, self.fixed, pct(self.cr));
        if !self.stages.is_empty() {
            let _ = writeln!(out, "\n{:<6} {:>8} {:>10} {:>7} {:>9}", "stage", "tokens", "%filtered", "fixed", "CR");
            for s in &self.stages {
                let _ = writeln!(
                    out,
                    "{:<6} {:>8} {:>10} {:>7} {:>9}",
                    s.stage.to_string(),
                    s.tokens,
                    pct(s.filtered_ratio),
                    format!("{}/{}", s.fixed, s.attempted),
                    pct(s.cr)
                );
            }
        }
        out
    }
}
