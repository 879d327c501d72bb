//! Subcommands of the `cavity-rc` binary.
//!
//! Exit codes: 0 success, 1 a configured gate failed, 2 usage or
//! validation error, 3 solver instability, 4 any other failure (I/O,
//! numerical breakdown).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use cavity_rc_core::benchmarks::characterize::characterize;
use cavity_rc_core::benchmarks::memory::run_memory_probe;
use cavity_rc_core::benchmarks::report::{self, Artifact, BenchmarkReport};
use cavity_rc_core::benchmarks::sinc::run_sinc_sweep;
use cavity_rc_core::benchmarks::vowels::{resolve_corpus, run_vowel_benchmark};
use cavity_rc_core::benchmarks::Mode;
use cavity_rc_core::config::{RunConfig, TaskKind};
use cavity_rc_core::io::{write_record_wav, write_records_csv};
use cavity_rc_core::manifest::ArtifactWriter;
use cavity_rc_core::wavefield::run_with;
use cavity_rc_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_GATE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INSTABILITY: u8 = 3;
pub const EXIT_FAILURE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "cavity-rc", version, about = "Acoustic cavity reservoir computing: simulations and benchmarks")]
pub struct Cli {
    /// Override the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override the config's worker count (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchTask {
    Sinc,
    Vowel,
    Memory,
    Characterize,
}

impl From<BenchTask> for TaskKind {
    fn from(t: BenchTask) -> Self {
        match t {
            BenchTask::Sinc => TaskKind::Sinc,
            BenchTask::Vowel => TaskKind::Vowel,
            BenchTask::Memory => TaskKind::Memory,
            BenchTask::Characterize => TaskKind::Characterize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Digital,
    Linear,
    Nonlinear,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Digital => Mode::Digital,
            ModeArg::Linear => Mode::Linear,
            ModeArg::Nonlinear => Mode::Nonlinear,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured sources through the cavity and record every probe.
    Simulate { config: PathBuf },
    /// Run a benchmark task and check its gates.
    Benchmark {
        config: PathBuf,
        /// Task to run; defaults to the config's task.kind.
        #[arg(long, value_enum)]
        task: Option<BenchTask>,
        /// Restrict the vowel task to these modes (repeatable).
        #[arg(long, value_enum)]
        mode: Vec<ModeArg>,
    },
    /// Harmonic phasors of one scatterer over a sweep of feedback gains.
    Characterize {
        config: PathBuf,
        #[arg(long)]
        scatterer: Option<usize>,
        #[arg(long)]
        fundamental_hz: Option<f64>,
    },
    /// Check a config without simulating and print its hash.
    ValidateConfig { config: PathBuf },
}

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Instability { .. } => EXIT_INSTABILITY,
            Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::InvalidCavity(_)
            | Error::Placement(_)
            | Error::Dataset(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.into() }
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> Result<u8, Failure> {
    let (path, command) = match &cli.command {
        Command::Simulate { config } => (config, "simulate"),
        Command::Benchmark { config, .. } => (config, "benchmark"),
        Command::Characterize { config, .. } => (config, "characterize"),
        Command::ValidateConfig { config } => (config, "validate-config"),
    };
    let mut config = RunConfig::load(path)?;
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    match &cli.command {
        Command::Simulate { .. } => {
            if config.task.kind != TaskKind::Simulate {
                return Err(usage(format!(
                    "simulate needs task.kind = \"simulate\", the config has \"{}\"",
                    config.task.kind.name()
                )));
            }
        }
        Command::Benchmark { task, mode, .. } => {
            if let Some(t) = task {
                config.task.kind = (*t).into();
            }
            if matches!(config.task.kind, TaskKind::Simulate) {
                return Err(usage("benchmark needs a task: sinc, vowel, memory or characterize"));
            }
            if !mode.is_empty() {
                if config.task.kind != TaskKind::Vowel {
                    return Err(usage("--mode only applies to the vowel task"));
                }
                let mut modes: Vec<Mode> = mode.iter().map(|&m| m.into()).collect();
                modes.dedup();
                config.task.vowel.modes = modes;
            }
        }
        Command::Characterize { scatterer, fundamental_hz, .. } => {
            config.task.kind = TaskKind::Characterize;
            if let Some(s) = scatterer {
                config.task.characterize.scatterer = *s;
            }
            if let Some(f) = fundamental_hz {
                config.task.characterize.fundamental_hz = *f;
            }
        }
        Command::ValidateConfig { .. } => {}
    }

    let layout = config.validate()?;
    let hash = config.hash();
    if let Command::ValidateConfig { .. } = cli.command {
        println!("config ok");
        println!("task: {}", config.task.kind.name());
        println!(
            "grid: {} x {} cells, dx {} m, {} Hz",
            layout.cavity.nx(),
            layout.cavity.ny(),
            layout.cavity.dx,
            layout.cavity.sample_rate_hz
        );
        println!(
            "sources: {}, probes: {}, scatterers: {}",
            if config.task.kind == TaskKind::Simulate { config.sources.len() } else { layout.sources.len() },
            layout.probes.len(),
            layout.scatterers.len()
        );
        println!("hash: {hash}");
        return Ok(EXIT_OK);
    }

    let out_dir = cli.out.clone().unwrap_or_else(|| config.output_path());
    let mut writer = ArtifactWriter::create(&out_dir, command, &hash)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Failure { code: EXIT_FAILURE, message: format!("worker pool: {e}") })?;

    let gate_ok = pool.install(|| -> Result<bool, Failure> {
        if config.task.kind == TaskKind::Simulate {
            simulate(&config, &layout, &mut writer)?;
            return Ok(true);
        }
        let (report, artifacts) = benchmark(&config, &layout, &hash)?;
        for a in &artifacts {
            writer.write(&a.name, &a.bytes)?;
        }
        for g in &report.gates {
            log::info!("gate {}: {} ({})", g.name, if g.passed { "PASS" } else { "FAIL" }, g.detail);
        }
        print_summary(&report, &out_dir);
        Ok(report.gates_pass())
    })?;
    writer.finish()?;
    Ok(if gate_ok { EXIT_OK } else { EXIT_GATE })
}

fn simulate(
    config: &RunConfig,
    layout: &cavity_rc_core::benchmarks::Layout,
    writer: &mut ArtifactWriter,
) -> Result<(), Failure> {
    let rate = layout.cavity.sample_rate_hz;
    let sources = config.sources(rate)?;
    let options = config.run_options(Default::default());
    let records = run_with(
        &layout.cavity,
        &sources,
        &layout.probes,
        &layout.scatterers,
        config.task.simulate.duration_s,
        &options,
    )?;
    let mut csv = Vec::new();
    write_records_csv(&records, &mut csv)?;
    writer.write("records.csv", &csv)?;
    if config.task.simulate.write_wav {
        for r in &records {
            let mut wav = std::io::Cursor::new(Vec::new());
            write_record_wav(r, &mut wav)?;
            writer.write(&format!("probe_{}.wav", file_safe(&r.label)), wav.get_ref())?;
        }
    }
    println!(
        "{} probes, {} samples each, written to {}",
        records.len(),
        records.first().map_or(0, |r| r.samples.len()),
        writer.dir().display()
    );
    Ok(())
}

fn file_safe(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Runs the configured benchmark task and builds its report.
pub fn benchmark(
    config: &RunConfig,
    layout: &cavity_rc_core::benchmarks::Layout,
    hash: &str,
) -> Result<(BenchmarkReport, Vec<Artifact>), Failure> {
    let gates = &config.task.gates;
    let built = match config.task.kind {
        TaskKind::Sinc => report::sinc_report(hash, run_sinc_sweep(layout, &config.sinc_settings())?, gates)?,
        TaskKind::Vowel => {
            let t = &config.task.vowel;
            let corpus = t.corpus.as_ref().map(|c| config.base_dir.join(c));
            let dataset = resolve_corpus(corpus.as_deref(), t.synthetic_fallback)?;
            let bench =
                run_vowel_benchmark(&dataset, layout, &config.vowel_settings(), &t.modes, &config.vowel_seeds())?;
            report::vowel_report(hash, bench, gates)?
        }
        TaskKind::Memory => report::memory_report(hash, run_memory_probe(layout, &config.memory_settings())?, gates)?,
        TaskKind::Characterize => {
            let position = layout.scatterers[config.task.characterize.scatterer].position;
            let ch = characterize(&layout.cavity, position, &config.characterize_settings())?;
            report::characterize_report(hash, ch, gates)?
        }
        TaskKind::Simulate => return Err(usage("simulate is not a benchmark task")),
    };
    Ok(built)
}

fn print_summary(report: &BenchmarkReport, dir: &Path) {
    println!("task: {}", report.task.name());
    if report.synthetic_data {
        println!("data: synthetic corpus");
    }
    for (k, v) in &report.metrics {
        println!("{k}: {v}");
    }
    for g in &report.gates {
        println!("gate {}: {} ({})", g.name, if g.passed { "PASS" } else { "FAIL" }, g.detail);
    }
    println!("artifacts written to {}", dir.display());
}
