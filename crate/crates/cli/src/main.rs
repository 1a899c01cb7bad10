//! `confx`: detect, classify, extract and repair concurrency bugs in
//! MiniConc programs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use confx::bench::{client_for, run_bench, BenchOptions};
use confx::config::{Config, LlmBackend};
use confx::manifest::Manifest;
use confx_core::agent::{repair, PromptStrategy};
use confx_core::analysis::mark_methods_with;
use confx_core::explorer::{explore, replay, run_random, BugReport, DetectionResult, Trace};
use confx_core::extractor::{extract, extract_ideal, stage_report, FilterStage};
use confx_core::graphs::{build_call_graph, build_shbg};
use confx_core::lang::{parse, MethodId, Program};
use confx_core::patterns::classify_bug;
use serde_json::json;

#[derive(Parser)]
#[command(name = "confx", version, about = "Concurrency bug detection, context extraction and LLM-driven repair for MiniConc")]
struct Cli {
    /// Configuration file (TOML, or JSON when the name ends in .json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Emit {
    /// Write the static happens-before graph (JSON, or DOT for a .dot path).
    #[arg(long)]
    emit_shbg: Option<PathBuf>,
    /// Write the marked method set with provenance as JSON.
    #[arg(long)]
    emit_marks: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Explore interleavings; exit 0 when clean, 1 on a bug, 2 on error.
    Detect {
        file: PathBuf,
        /// Exhaustive search (the default).
        #[arg(long, conflicts_with = "random")]
        exhaustive: bool,
        /// Run this many random schedules instead.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        depth_bound: Option<usize>,
        #[command(flatten)]
        emit: Emit,
    },
    /// Print the program filtered to a given stage.
    Extract {
        file: PathBuf,
        #[arg(long)]
        stage: Option<FilterStage>,
        /// Print token counts and filtered ratios of all stages.
        #[arg(long)]
        report: bool,
        /// Keep exactly the methods listed in this file, one per line.
        #[arg(long)]
        ideal: Option<PathBuf>,
        #[command(flatten)]
        emit: Emit,
    },
    /// Match the failing trace of a program (or a saved trace) against the
    /// access patterns.
    Classify { input: PathBuf },
    /// Run the repair loop.
    Fix {
        file: PathBuf,
        #[arg(long)]
        strategy: Option<PromptStrategy>,
        /// live, mock (fixture from the manifest) or mock:<fixture>.
        #[arg(long)]
        llm: Option<LlmBackend>,
        #[arg(long)]
        max_attempts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stage: Option<FilterStage>,
        /// Expectation manifest; defaults to <name>.expect.json next to the file.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Write the session transcript as JSON.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Write the patched program.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over every program of a corpus directory.
    Bench {
        dir: PathBuf,
        #[arg(long)]
        llm: Option<LlmBackend>,
        #[arg(long)]
        strategy: Option<PromptStrategy>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also repair at these stages and summarize per stage.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<FilterStage>,
        /// Include wall-clock times (makes output vary between runs).
        #[arg(long)]
        timings: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run one schedule, given as thread ids or a saved trace.
    Replay {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', conflicts_with = "trace", required_unless_present = "trace")]
        schedule: Vec<usize>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn load_program(path: &Path) -> anyhow::Result<Program> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse(&text).with_context(|| format!("{}", path.display()))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "program.mc".into())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(p: &Program, e: &Emit) -> anyhow::Result<()> {
    if e.emit_shbg.is_none() && e.emit_marks.is_none() {
        return Ok(());
    }
    let cg = build_call_graph(p);
    let g = build_shbg(p, &cg)?;
    if let Some(path) = &e.emit_shbg {
        let text = if path.extension().is_some_and(|x| x == "dot") {
            g.to_dot()
        } else {
            serde_json::to_string_pretty(&g.to_json())?
        };
        write_file(path, &text)?;
    }
    if let Some(path) = &e.emit_marks {
        let marks = mark_methods_with(p, &cg, &g);
        write_file(path, &serde_json::to_string_pretty(&marks.to_json())?)?;
    }
    Ok(())
}

fn print_detection(p: &Program, name: &str, r: &DetectionResult, as_json: bool) -> anyhow::Result<ExitCode> {
    let report = BugReport::from_result(p, r);
    if as_json {
        let v = json!({ "file": name, "verdict": r.verdict, "report": report, "stats": r.stats });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("{name}: {}", r.verdict);
        if let Some(rep) = &report {
            print!("{}", rep.render(p));
        }
        println!(
            "{} schedules, {} states{}",
            r.stats.schedules,
            r.stats.states,
            if r.stats.partial { " (depth bound reached; coverage incomplete)" } else { "" }
        );
    }
    Ok(if r.verdict.is_failure() { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Detect { file, exhaustive: _, random, seed, depth_bound, emit: e } => {
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.depth_bound = depth_bound.unwrap_or(cfg.depth_bound);
            cfg.validate()?;
            let p = load_program(&file)?;
            emit(&p, &e)?;
            let r = match random {
                Some(n) => run_random(&p, n, cfg.seed, cfg.explore_options()),
                None => explore(&p, cfg.explore_options()),
            };
            print_detection(&p, &file_name(&file), &r, cli.json)
        }
        Command::Extract { file, stage, report, ideal, emit: e } => {
            let p = load_program(&file)?;
            emit(&p, &e)?;
            let stage = stage.unwrap_or(cfg.stage);
            let ideal = match &ideal {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                    let keep: BTreeSet<MethodId> = text
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.starts_with('#'))
                        .map(MethodId::new)
                        .collect();
                    Some(extract_ideal(&p, &keep)?)
                }
                None => None,
            };
            if report {
                let rep = stage_report(&p)?;
                if cli.json {
                    let mut v = rep.to_json();
                    if let Some(i) = &ideal {
                        v["ideal"] = json!({ "tokens": i.token_count, "ratio": i.tokens_filtered_ratio });
                    }
                    println!("{}", serde_json::to_string_pretty(&v)?);
                } else {
                    println!("{:<6} {:>7} {:>10}  omitted", "stage", "tokens", "%filtered");
                    for s in &rep.stages {
                        let ratio = s.ratio.map(|r| format!("{:.1}%", r * 100.0)).unwrap_or_else(|| "-".into());
                        let omitted: Vec<&str> = s.omitted.iter().map(|m| m.as_str()).collect();
                        println!("{:<6} {:>7} {:>10}  {}", s.stage.to_string(), s.tokens, ratio, omitted.join(", "));
                    }
                    if let Some(i) = &ideal {
                        let ratio = i.tokens_filtered_ratio.map(|r| format!("{:.1}%", r * 100.0)).unwrap_or_else(|| "-".into());
                        println!("{:<6} {:>7} {:>10}  (vs p2)", "ideal", i.token_count, ratio);
                    }
                }
            } else {
                let f = match ideal {
                    Some(i) => i,
                    None => extract(&p, stage)?,
                };
                if cli.json {
                    println!("{}", serde_json::to_string_pretty(&f)?);
                } else {
                    print!("{}", f.text);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { input } => {
            let trace = if input.extension().is_some_and(|x| x == "json") {
                let text = std::fs::read_to_string(&input).with_context(|| format!("cannot read {}", input.display()))?;
                Trace::from_json(&text)?
            } else {
                let p = load_program(&input)?;
                explore(&p, cfg.explore_options()).trace
            };
            let c = classify_bug(&trace)?;
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&c)?);
            } else {
                println!("verdict: {}", trace.verdict);
                println!("class: {:?}", c.class);
                for (id, w) in &c.witnesses {
                    println!("  p{id} at trace events {w:?}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fix { file, strategy, llm, max_attempts, seed, stage, manifest, transcript, out } => {
            cfg.strategy = strategy.unwrap_or(cfg.strategy);
            cfg.llm = llm.unwrap_or(cfg.llm);
            cfg.max_attempts = max_attempts.unwrap_or(cfg.max_attempts);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.stage = stage.unwrap_or(cfg.stage);
            cfg.validate()?;
            let p = load_program(&file)?;
            let manifest = match manifest {
                Some(m) => Some(Manifest::load(&m)?),
                None => Manifest::for_program(&file)?,
            };
            let mut client = client_for(&cfg.llm, manifest.as_ref(), &file)?;
            let mut rc = cfg.repair_config(&file_name(&file));
            if let Some(m) = &manifest {
                rc.expect_globals = m.expect_globals.clone();
            }
            let s = repair(&p, client.as_mut(), &rc)?;
            if let Some(path) = &transcript {
                write_file(path, &s.to_json())?;
            }
            if let (Some(path), Some(text)) = (&out, &s.patched_source) {
                write_file(path, text)?;
            }
            if cli.json {
                println!("{}", s.to_json());
            } else {
                println!("{}: {:?} after {} attempt(s)", s.file, s.outcome, s.iter);
                for a in &s.history {
                    println!("  attempt {}: {:?}", a.attempt, a.verdict);
                }
                if let Some(l) = s.locks_added {
                    println!("locks added: {l}");
                }
            }
            Ok(if s.is_fixed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Bench { dir, llm, strategy, seed, stages, timings, out } => {
            cfg.llm = llm.unwrap_or(cfg.llm);
            cfg.strategy = strategy.unwrap_or(cfg.strategy);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            let report = run_bench(&dir, &BenchOptions { config: cfg, stages, timings })?;
            let js = serde_json::to_string_pretty(&report)?;
            if let Some(path) = &out {
                write_file(path, &js)?;
            }
            if cli.json {
                println!("{js}");
            } else {
                print!("{}", report.render());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { file, schedule, trace } => {
            let p = load_program(&file)?;
            let schedule = match trace {
                Some(t) => {
                    let text = std::fs::read_to_string(&t).with_context(|| format!("cannot read {}", t.display()))?;
                    Trace::from_json(&text)?.schedule
                }
                None => schedule,
            };
            let r = replay(&p, &schedule, cfg.explore_options())?;
            if cli.json {
                println!("{}", r.trace.to_json());
                return Ok(if r.verdict.is_failure() { ExitCode::from(1) } else { ExitCode::SUCCESS });
            }
            print_detection(&p, &file_name(&file), &r, false)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
