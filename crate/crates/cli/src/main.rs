//! `scorefollow` command-line tool.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 when input data cannot
//! be read or processed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use scorefollow::bench::{bench_decode, to_csv, BenchConfig, DEFAULT_SIZES, DEFAULT_WINDOWS};
use scorefollow::hmm::{
    baum_welch, compile, CompileOptions, ModelFile, ObservationSeq, TrainOptions,
};
use scorefollow::perf::{group_onsets, read_events, DEFAULT_CHORD_WINDOW};
use scorefollow::pipeline::{accompany, follow, to_ndjson, FollowMode, Model, PipelineOptions};
use scorefollow::score::{parse_score, quantize, QuantizedScore, ScoreFormat};
use scorefollow::sim::{simulate, truth_path, ErrorSpec};

#[derive(Debug, Parser)]
#[command(
    name = "scorefollow",
    version,
    about = "HMM score follower and accompanist"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Hands {
    Single,
    Parallel,
}

#[derive(Debug, clap::Args)]
struct FollowArgs {
    /// Decode with one model per hand.
    #[arg(long, value_enum, default_value = "single")]
    hands: Hands,
    /// In parallel mode, leave untagged notes unattributed instead of
    /// splitting them at middle C.
    #[arg(long)]
    no_register_split: bool,
}

impl FollowArgs {
    fn options(&self) -> PipelineOptions {
        PipelineOptions::new(match self.hands {
            Hands::Single => FollowMode::Single,
            Hands::Parallel => FollowMode::Parallel {
                register_split: !self.no_register_split,
            },
        })
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a score (JSON or standard MIDI file) into a model.
    Compile {
        score: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Re-estimate a model from a recorded performance.
    Train {
        model: PathBuf,
        /// Performance file (newline-delimited JSON note events).
        observations: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Print the decoded score position of every performed onset.
    Follow {
        model: PathBuf,
        performance: PathBuf,
        #[command(flatten)]
        args: FollowArgs,
    },
    /// Generate a performance of a score with injected errors.
    Simulate {
        score: PathBuf,
        /// Comma-separated key=value pairs: wrong, skip, extra, drift.
        #[arg(long, default_value = "")]
        errors: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seconds per beat; defaults to the score tempo.
        #[arg(long)]
        tempo: Option<f64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Replay a performance and write the accompaniment it triggers.
    Accompany {
        model: PathBuf,
        performance: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        args: FollowArgs,
    },
    /// Time the banded and dense decoder steps and print CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_WINDOWS)]
        windows: Vec<usize>,
        #[arg(long, default_value_t = BenchConfig::default().fast_steps)]
        steps: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_score(path: &Path) -> Result<QuantizedScore> {
    let bytes = read(path)?;
    let is_midi = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
        || bytes.starts_with(b"MThd");
    let format = if is_midi {
        ScoreFormat::MidiFile
    } else {
        ScoreFormat::ScoreJson
    };
    let score =
        parse_score(&bytes, format).with_context(|| format!("invalid score {}", path.display()))?;
    Ok(quantize(&score)?)
}

fn load_model(path: &Path) -> Result<(ModelFile, Model)> {
    let file = ModelFile::from_json(&read(path)?)
        .with_context(|| format!("invalid model {}", path.display()))?;
    let model =
        Model::from_file(&file).with_context(|| format!("invalid model {}", path.display()))?;
    Ok((file, model))
}

fn load_events(path: &Path) -> Result<Vec<scorefollow::perf::PerformanceEvent>> {
    read_events(&read(path)?).with_context(|| format!("invalid performance {}", path.display()))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Compile { score, output } => {
            let q = load_score(&score)?;
            let (params, layout) = compile(&q, &CompileOptions::default())?;
            write(&output, &ModelFile::new(&params, &layout, &q).to_json())
        }
        Command::Train {
            model,
            observations,
            output,
            max_iters,
            tol,
        } => {
            let (file, m) = load_model(&model)?;
            let events = load_events(&observations)?;
            let symbols = group_onsets(&events, DEFAULT_CHORD_WINDOW)
                .into_iter()
                .map(|o| o.pitches)
                .collect();
            let obs = ObservationSeq::new(symbols)
                .with_context(|| format!("no notes in {}", observations.display()))?;
            let opts = TrainOptions {
                max_iters,
                tol,
                ..Default::default()
            };
            let trained = baum_welch(&m.params, &obs, &opts)?;
            eprintln!(
                "log-likelihood {:.6} -> {:.6} in {} iterations",
                trained.history[0],
                trained.history[trained.history.len() - 1],
                trained.history.len()
            );
            write(
                &output,
                &ModelFile::new(&trained.params, &file.layout, &file.score).to_json(),
            )
        }
        Command::Follow {
            model,
            performance,
            args,
        } => {
            let (_, m) = load_model(&model)?;
            let events = load_events(&performance)?;
            let records = follow(&m, &events, &args.options())
                .with_context(|| format!("cannot follow {}", performance.display()))?;
            print!("{}", to_ndjson(&records));
            Ok(())
        }
        Command::Simulate {
            score,
            errors,
            seed,
            tempo,
            output,
        } => {
            let q = load_score(&score)?;
            let spec = ErrorSpec::parse_pairs(&errors, seed)?;
            let perf = simulate(&q, &spec, tempo.unwrap_or(60.0 / q.bpm))?;
            write(&output, &perf.events_ndjson())?;
            write(&truth_path(&output), &perf.truth_json())
        }
        Command::Accompany {
            model,
            performance,
            output,
            args,
        } => {
            let (_, m) = load_model(&model)?;
            let events = load_events(&performance)?;
            let played = accompany(&m, &events, &args.options())
                .with_context(|| format!("cannot accompany {}", performance.display()))?;
            write(&output, &to_ndjson(&played))
        }
        Command::Bench {
            sizes,
            windows,
            steps,
            output,
        } => {
            let cfg = BenchConfig {
                fast_steps: steps,
                ..Default::default()
            };
            let csv = to_csv(&bench_decode(&sizes, &windows, &cfg));
            match output {
                Some(path) => write(&path, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
