use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use wienerpath::config::{ExperimentConfig, OutputFormat};
use wienerpath::harness::{develop_file, persist, resolve_out_dir, run, Command, Context, RunOutput};
use wienerpath::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "wienerpath", version, about = "Path-integral experiments on compact manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Heat-kernel values with normalization and semigroup residuals
    Kernel(Common),
    /// Draw skeletons from the cylinder measure
    Sample(Common),
    /// Expectation of a functional at one partition
    Estimate(Common),
    /// Limit table and co-Cauchy diagnostics along a refinement chain
    Converge(Common),
    /// Midpoint sums and exact-form residuals along a chain
    Stratonovich(Common),
    /// Flat path file to curved path file, or back
    Develop(DevelopArgs),
    /// Geometric-scheme limit table, optionally next to the cylinder scheme
    Geometric(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides WIENERPATH_OUT_DIR and the config file)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct DevelopArgs {
    /// Optional config supplying `[develop]` paths and output settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

fn install_pool(workers: usize) {
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        log::warn!("worker pool already initialized: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
}

fn emit(out: &RunOutput, dir: Option<PathBuf>, stem: &str, format: OutputFormat, plot: bool) -> Result<()> {
    if let Some(dir) = dir {
        for path in persist(out, &dir, stem, format, plot)? {
            info!("wrote {}", path.display());
        }
    }
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&out.json)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn configured(command: Command, args: Common) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let ctx = Context::new(config, args.seed, args.workers)?;
    install_pool(ctx.exec.workers);
    info!("{} with seed {} on {} workers", command.name(), ctx.seed, ctx.exec.workers);
    let out = run(command, &ctx)?;
    let output = &ctx.config.output;
    let stem = output.stem.clone().unwrap_or_else(|| command.name().to_string());
    let format = args.format.unwrap_or(output.format);
    emit(&out, resolve_out_dir(args.out, Some(output)), &stem, format, args.plot || output.plot)
}

fn develop(args: DevelopArgs) -> Result<()> {
    let config = args.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let from_config = config.as_ref().and_then(|c| c.develop.as_ref());
    let input = args.input.or_else(|| from_config.map(|d| d.input.clone()));
    let output = args.output.or_else(|| from_config.map(|d| d.output.clone()));
    let (Some(input), Some(output)) = (input, output) else {
        return Err(Error::Config("develop needs --input and --output (or a [develop] section)".into()));
    };
    let out = develop_file(&input, &output)?;
    let output_cfg = config.as_ref().map(|c| &c.output);
    let stem = output_cfg.and_then(|o| o.stem.clone()).unwrap_or_else(|| "develop".into());
    let format = args.format.or(output_cfg.map(|o| o.format)).unwrap_or_default();
    emit(&out, resolve_out_dir(args.out, output_cfg), &stem, format, false)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Sub::Kernel(a) => configured(Command::Kernel, a),
        Sub::Sample(a) => configured(Command::Sample, a),
        Sub::Estimate(a) => configured(Command::Estimate, a),
        Sub::Converge(a) => configured(Command::Converge, a),
        Sub::Stratonovich(a) => configured(Command::Stratonovich, a),
        Sub::Geometric(a) => configured(Command::Geometric, a),
        Sub::Develop(a) => develop(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
