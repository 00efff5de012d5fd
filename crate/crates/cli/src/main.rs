//! `surf`: command-line front end for surfwave.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "surf", version, about = "Spectral wavelet descriptors for triangulated surfaces")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON configuration: pipeline settings, or the cohort definition for `synth-cohort`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Signature cache directory.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for dictionary training, class balancing and fold assignment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mesh size, area and validation report as JSON.
    Info {
        mesh: PathBuf,
        /// Report issues under the pruning policy instead of the strict one.
        #[arg(long)]
        prune: bool,
    },
    /// Smallest Laplace-Beltrami eigenvalues as JSON.
    Spectrum {
        mesh: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        dense: bool,
    },
    /// Area-normalised eigenvalue signature as one CSV row.
    Shapedna {
        mesh: PathBuf,
        #[arg(long)]
        d: usize,
    },
    /// Per-vertex wavelet signatures as a binary store or CSV.
    Sgws {
        mesh: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        level: Option<usize>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Chi-squared signature distance from one vertex to every vertex, as CSV.
    Distmap {
        mesh: PathBuf,
        #[arg(long = "ref")]
        reference: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        level: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Trains a k-means dictionary on signature stores.
    Dict {
        #[arg(required = true)]
        stores: Vec<PathBuf>,
        #[arg(short)]
        k: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Encodes one surface (mesh or signature store) as a pooled histogram.
    Encode {
        input: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        /// Eigenpairs for a mesh input.
        #[arg(long)]
        k: Option<usize>,
        /// Wavelet scales for a mesh input.
        #[arg(long)]
        level: Option<usize>,
        /// Surface area for a signature-store input; required unless `--no-normalize`.
        #[arg(long)]
        area: Option<f64>,
        #[arg(long)]
        no_normalize: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Builds the WaveletBrain matrix for a manifest with a given dictionary.
    Assemble {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        diffs: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cross-validated linear SVM on a feature matrix.
    Classify {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Leave-one-out PLS age regression on a feature matrix.
    Regress {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        ncomp: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "scatter.csv")]
        scatter: PathBuf,
    },
    /// Paired t-test between the fold accuracies of two classification reports.
    Compare { a: PathBuf, b: PathBuf },
    /// Writes one synthetic mesh.
    Synth {
        #[arg(long, value_enum, default_value_t = Family::BumpSphere)]
        family: Family,
        #[arg(long, default_value_t = 4)]
        sub: u32,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 30)]
        bumps: usize,
        #[arg(long, default_value_t = 0.3)]
        width: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Writes a synthetic cohort (meshes plus manifest) from `--config`.
    SynthCohort {
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Full pipeline and experiments for a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Binary task such as AD-NC; overrides the config.
        #[arg(long)]
        task: Option<String>,
        /// Also run age regression.
        #[arg(long)]
        regress: bool,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Icosphere,
    BumpSphere,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("surf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
