use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsp_slp::ddg::{DdgError, Latencies};
use dsp_slp::interp::{equivalent, Equivalence, InterpError};
use dsp_slp::ir::{parse, print, Function};
use dsp_slp::pass::PassError;
use dsp_slp::pipeline::{ddg_report, run_pipeline, PipelineConfig, PipelineError};

const EXIT_PARSE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 3;
const EXIT_INEQUIVALENT: u8 = 4;
const EXIT_ZERO_DISTANCE: u8 = 5;

#[derive(Parser)]
#[command(name = "dsp-slp", version, about = "Pack narrow arithmetic onto DSP slices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Preset {
    /// muladd:4,muladd:8 for kernels with multiplications, else add:12,add:24
    Paper,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a pass pipeline over a .sir file.
    Pack {
        input: PathBuf,
        /// Comma-separated passes: add:12, add:24, sub:12, sub:24, muladd:8, muladd:4
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        passes: Option<String>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Upper bound on DSP cascade length for muladd:8
        #[arg(long)]
        max_chain_len: Option<usize>,
        /// Output file; standard output when omitted
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the statistics as JSON
        #[arg(long)]
        stats_json: Option<PathBuf>,
    },
    /// Check two .sir files for equal observable behavior.
    Verify {
        original: PathBuf,
        packed: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, env = "DSP_SLP_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Report the minimum II and how packing would change it.
    Ddg {
        input: PathBuf,
        /// Latency overrides, e.g. mul=3,load=2
        #[arg(long, default_value = "")]
        latency: String,
        #[arg(long, default_value = "muladd:8,add:12")]
        passes: String,
        #[arg(long)]
        max_chain_len: Option<usize>,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("dsp-slp: {msg}");
    ExitCode::from(code)
}

fn load(path: &Path) -> Result<Function, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn pipeline_exit(e: &PipelineError) -> u8 {
    match e {
        PipelineError::BadSpec(_) | PipelineError::BadChainLen | PipelineError::Empty => EXIT_CONFIG,
        PipelineError::Ddg(DdgError::ZeroDistanceCycle(_)) => EXIT_ZERO_DISTANCE,
        PipelineError::Ddg(DdgError::InvalidAnnotation(_)) => EXIT_PARSE,
        PipelineError::Ddg(DdgError::BadLatency(_)) => EXIT_CONFIG,
        PipelineError::Pass(PassError::InvalidOutput(_) | PassError::NoInsertionPoint(_) | PassError::ChainTooLong { .. }) => {
            EXIT_INTERNAL
        }
    }
}

fn pack(
    input: &Path,
    passes: Option<&str>,
    max_chain_len: Option<usize>,
    output: Option<&Path>,
    stats_json: Option<&Path>,
) -> Result<(), ExitCode> {
    let f = load(input)?;
    let cfg = match passes {
        Some(p) => PipelineConfig::parse(p, max_chain_len),
        None => PipelineConfig::preset(&f, max_chain_len).checked(),
    }
    .map_err(|e| fail(pipeline_exit(&e), e))?;
    let (g, stats) = run_pipeline(&f, &cfg).map_err(|e| fail(pipeline_exit(&e), e))?;
    let text = print(&g);
    match output {
        Some(out) => {
            fs::write(out, text).map_err(|e| fail(EXIT_INTERNAL, format!("{}: {e}", out.display())))?;
            print!("{stats}");
        }
        None => {
            print!("{text}");
            eprint!("{stats}");
        }
    }
    if let Some(path) = stats_json {
        let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
        fs::write(path, json + "\n").map_err(|e| fail(EXIT_INTERNAL, format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn verify(original: &Path, packed: &Path, trials: usize, seed: u64) -> Result<(), ExitCode> {
    let (a, b) = (load(original)?, load(packed)?);
    match equivalent(&a, &b, trials, seed) {
        Ok(Equivalence::Equivalent { runs }) => {
            println!("equivalent on {runs} inputs (seed {seed})");
            Ok(())
        }
        Ok(Equivalence::Differs(cx)) => {
            println!("NOT equivalent; counterexample:");
            print!("{}", cx.env);
            println!("; {}: {:?}", original.display(), cx.left);
            println!("; {}: {:?}", packed.display(), cx.right);
            Err(ExitCode::from(EXIT_INEQUIVALENT))
        }
        Err(e @ InterpError::SignatureMismatch(_)) => Err(fail(EXIT_CONFIG, e)),
        Err(e) => Err(fail(EXIT_INTERNAL, format!("{}: {e}", original.display()))),
    }
}

fn ddg(input: &Path, latency: &str, passes: &str, max_chain_len: Option<usize>) -> Result<(), ExitCode> {
    let f = load(input)?;
    let lat = Latencies::default()
        .with_overrides(latency)
        .map_err(|e| fail(EXIT_CONFIG, e))?;
    let cfg = PipelineConfig::parse(passes, max_chain_len).map_err(|e| fail(pipeline_exit(&e), e))?;
    let report = ddg_report(&f, &cfg, &lat).map_err(|e| fail(pipeline_exit(&e), e))?;
    print!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Pack { input, passes, preset: _, max_chain_len, output, stats_json } => pack(
            input,
            passes.as_deref(),
            *max_chain_len,
            output.as_deref(),
            stats_json.as_deref(),
        ),
        Cmd::Verify { original, packed, trials, seed } => verify(original, packed, *trials, *seed),
        Cmd::Ddg { input, latency, passes, max_chain_len } => ddg(input, latency, passes, *max_chain_len),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
