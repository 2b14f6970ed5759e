//! `streamvox` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streamvox::Error;

#[derive(Debug, Parser)]
#[command(name = "streamvox", version, about = "Streaming speech codec, TTS runtime and latency harness")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; the effective configuration is written here.
    #[arg(long, global = true, default_value = "streamvox-out")]
    out: PathBuf,
    /// Print machine-readable JSON instead of key=value lines.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the codec, or encode and decode with a trained one.
    #[command(subcommand)]
    Codec(CodecCommand),
    /// Train the TTS model or synthesize speech.
    #[command(subcommand)]
    Tts(TtsCommand),
    /// Extract audio-encoder features from a WAV file.
    Features {
        input: PathBuf,
        /// Feature dump to write.
        output: PathBuf,
    },
    /// Measure synthesis latency.
    Bench {
        /// Codec directory holding codec.ckpt and codebooks.afcb.
        #[arg(long)]
        codec: Option<PathBuf>,
        /// TTS checkpoint.
        #[arg(long)]
        tts: Option<PathBuf>,
        /// Use fixed-cost stand-ins on simulated time instead of models.
        #[arg(long)]
        mock: bool,
        /// Analyse a saved event log instead of running synthesis.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Text to synthesize; defaults to a pangram cut to the configured token count.
        #[arg(long)]
        text: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum CodecCommand {
    /// Train on a directory of WAV files, or on synthetic tones when none is given.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// WAV to token file.
    Encode {
        input: PathBuf,
        output: PathBuf,
        /// Codec directory holding codec.ckpt and codebooks.afcb.
        #[arg(long)]
        model: PathBuf,
    },
    /// Token file to WAV.
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum TtsCommand {
    /// Teacher-forced training on text/WAV pairs, or on synthetic pairs.
    Train {
        /// Codec directory used to tokenize the training audio.
        #[arg(long)]
        codec: PathBuf,
        /// Tab-separated lines of `text<TAB>wav path`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Synthesize `text`, writing synth.wav and events.log to the output directory.
    Synth {
        text: String,
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        tts: PathBuf,
        /// Overrides the configured sampling temperature.
        #[arg(long)]
        temperature: Option<f64>,
    },
}

/// Failure with its process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Format(_) => 2,
            Error::ConfigMismatch(_) => 3,
            _ => 1,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl Failure {
    pub fn missing(what: &str) -> Self {
        Failure {
            code: 3,
            message: format!("missing {what}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
