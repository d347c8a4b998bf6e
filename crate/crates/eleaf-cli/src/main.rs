//! `eleaf` — command-line runner for the learnable Gabor audio frontend.
//!
//! Subcommands: `plan` prints the frozen filter-group plan, `analyze` turns a
//! WAV file into a feature file, `compare` checks the grouped pipeline
//! against the dense reference, `bench` measures throughput, and `gradcheck`
//! verifies analytic gradients against central finite differences.
//!
//! Exit codes: 0 on success or a passing check, 1 when a check ran and
//! failed, 2 on usage or configuration errors. Structured output is JSON on
//! standard output with lexicographic keys; progress goes to standard error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eleaf::compression::BnMode;
use eleaf::config::run_pipeline;
use eleaf::gradients::{grad_check, GradCheckConfig, GradCheckReport};
use eleaf::harness::{
    bench_suite, equivalence, BenchConfig, BenchSuite, Direction, PipelineId, EQUIV_TOLERANCE,
};
use eleaf::io::features::write_features;
use eleaf::io::pgm::write_pgm;
use eleaf::io::wav::read_wav;
use eleaf::{Error, Frontend, Head, Result, RunConfig};

const VERSION_LINE: &str = concat!(env!("CARGO_PKG_VERSION"), " (precision modes: f32, f64)");

#[derive(Parser)]
#[command(name = "eleaf", version = VERSION_LINE)]
#[command(about = "Gabor filterbank audio frontend: dense reference and grouped strided variant")]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the filter-group plan for the active configuration as JSON.
    Plan,
    /// Run the frontend on a WAV file and write an EFEA feature file.
    Analyze {
        /// Input WAV (mono, at the configured sample rate).
        wav: PathBuf,
        /// Output feature file.
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
        /// Frontend variant, overriding the configuration.
        #[arg(long, value_parser = parse_frontend)]
        pipeline: Option<Frontend>,
        /// Compression head, overriding the configuration.
        #[arg(long, value_parser = parse_head)]
        compression: Option<Head>,
        /// Also render channel 0 as a PGM image.
        #[arg(long, value_name = "PATH")]
        pgm: Option<PathBuf>,
    },
    /// Compare the grouped pipeline against the dense reference on a WAV file.
    Compare {
        /// Input WAV (mono, at the configured sample rate).
        wav: PathBuf,
        /// Maximum passing relative RMS (defaults to the pinned value).
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Measure throughput of every pipeline variant.
    Bench {
        /// Workload preset: excerpt length with matched batch/repetitions.
        #[arg(long, default_value = "1s", value_parser = parse_preset)]
        preset: u32,
        /// Emit CSV instead of the human-readable table.
        #[arg(long)]
        csv: bool,
    },
    /// Verify analytic parameter gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Input length in seconds.
        #[arg(long, default_value_t = 0.25)]
        seconds: f64,
    },
}

fn parse_frontend(s: &str) -> std::result::Result<Frontend, String> {
    s.parse::<Frontend>().map_err(|e| e.to_string())
}

fn parse_head(s: &str) -> std::result::Result<Head, String> {
    s.parse::<Head>().map_err(|e| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<u32, String> {
    match s {
        "1s" => Ok(1),
        "8s" => Ok(8),
        "16s" => Ok(16),
        other => Err(format!("unknown preset {other:?}; expected 1s, 8s, or 16s")),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let config = load_config(&cli.config)?;
    match cli.command {
        Command::Plan => {
            let (_, plan) = config.build()?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            wav,
            output,
            pipeline,
            compression,
            pgm,
        } => {
            let mut config = config;
            if let Some(p) = pipeline {
                config.pipeline = p;
            }
            if let Some(c) = compression {
                config.compression = c;
            }
            let audio = read_wav(&wav)?.to_precision::<f32>();
            let (mut params, plan) = config.build()?;
            let features = run_pipeline(&audio, &config, &mut params, &plan, BnMode::Train)?;
            write_features(&output, &features)?;
            if let Some(image) = &pgm {
                write_pgm(image, &features, 0, 0)?;
            }
            println!(
                "wrote {}: {} channel(s) x {} bands x {} frames (f32, hop {})",
                output.display(),
                features.channels,
                features.bands,
                features.frames,
                features.frame_hop
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { wav, tolerance } => {
            let audio = read_wav(&wav)?;
            if audio.sample_rate != config.sample_rate {
                return Err(Error::Config(format!(
                    "audio is {} Hz but the run expects {} Hz",
                    audio.sample_rate, config.sample_rate
                )));
            }
            let (params, plan) = config.build()?;
            let tolerance = tolerance.unwrap_or(EQUIV_TOLERANCE);
            let report = equivalence(&audio, &params.bank, &plan, tolerance)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(check_outcome(report.pass))
        }
        Command::Bench { preset, csv } => {
            let mut bench = BenchConfig::preset(preset)?;
            bench.seed = config.seed;
            bench.sample_rate = config.sample_rate;
            eprintln!(
                "benchmarking {}s excerpts, batch {}, {} thread(s), {} repetitions per direction",
                bench.excerpt_secs, bench.batch, bench.threads, bench.repetitions
            );
            let forward = bench_suite(&bench, Direction::Forward)?;
            let training = bench_suite(&bench, Direction::ForwardBackward)?;
            if csv {
                print_bench_csv(&[&forward, &training]);
            } else {
                print_bench_table(&[&forward, &training]);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seed, seconds } => {
            let mut reports = Vec::new();
            for frontend in [Frontend::Leaf, Frontend::Eleaf] {
                for head in [Head::Pcen, Head::Lmtbn] {
                    let cfg = GradCheckConfig {
                        seed,
                        seconds,
                        ..GradCheckConfig::default()
                    };
                    let report = grad_check(frontend, head, &cfg)?;
                    eprintln!(
                        "{}/{}: max relative error {:.3e} ({})",
                        frontend,
                        head,
                        report.max_rel_error,
                        if report.pass { "pass" } else { "FAIL" }
                    );
                    reports.push(report);
                }
            }
            println!("{}", serde_json::to_string_pretty(&reports)?);
            let all_pass = reports.iter().all(|r: &GradCheckReport| r.pass);
            Ok(check_outcome(all_pass))
        }
    }
}

fn check_outcome(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_bench_csv(suites: &[&BenchSuite]) {
    println!("pipeline,direction,precision,excerpt_secs,batch,threads,repetitions,median_secs,examples_per_sec");
    for suite in suites {
        for r in &suite.results {
            println!(
                "{},{},{},{},{},{},{},{:.9},{:.3}",
                r.pipeline,
                r.direction,
                r.precision,
                r.excerpt_secs,
                r.batch,
                r.threads,
                r.repetitions,
                r.median_secs,
                r.examples_per_sec
            );
        }
    }
}

fn print_bench_table(suites: &[&BenchSuite]) {
    println!(
        "{:<12} {:<17} {:<9} {:>6} {:>6} {:>12} {:>14}",
        "pipeline", "direction", "precision", "batch", "reps", "median_s", "examples/s"
    );
    for suite in suites {
        for r in &suite.results {
            println!(
                "{:<12} {:<17} {:<9} {:>6} {:>6} {:>12.6} {:>14.2}",
                r.pipeline,
                r.direction,
                r.precision,
                r.batch,
                r.repetitions,
                r.median_secs,
                r.examples_per_sec
            );
        }
    }
    for suite in suites {
        let direction = match suite.results.first() {
            Some(r) => r.direction.clone(),
            None => continue,
        };
        for (num, den) in [
            (PipelineId::EleafPcen, PipelineId::LeafPcen),
            (PipelineId::EleafLmtbn, PipelineId::LeafPcen),
        ] {
            if let Some(ratio) = suite.speedup(num, den) {
                println!("{direction} speedup {num} / {den}: {ratio:.2}x");
            }
        }
    }
}
