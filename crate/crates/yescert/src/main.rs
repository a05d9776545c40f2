use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use yescert::runlog::to_json;
use yescert::{
    bind, exit, read_run_log, render_svg, spawn, Overrides, PlotOptions, RecordSink, Result, RunError, RunLogWriter,
    RunSummary, ServeOptions, Session, SessionConfig,
};

#[derive(Parser)]
#[command(name = "yescert", version, about = "Train small networks under live YES-bound certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session headless and print a JSON summary.
    Run {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Render a run log as an SVG cloud plot.
    Plot {
        /// Path to run.jsonl.
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Logarithmic loss axis.
        #[arg(long)]
        log_scale: bool,
        /// Shade the running minimum of the cloud over epochs.
        #[arg(long)]
        envelope: bool,
        #[arg(long)]
        title: Option<String>,
    },
    /// Run a session behind the HTTP monitor until Stop or Ctrl-C.
    Serve {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Args)]
struct SessionArgs {
    /// JSON session config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// phase_retrieval, denoising, quadratic_image, mnist or mnist_synthetic.
    #[arg(long)]
    task: Option<String>,
    /// Comma separated widths including input and output, e.g. 20,20,20,20,20,20.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    bound_cadence: Option<u64>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long)]
    guidance: Option<bool>,
    /// Directory for run.jsonl and run.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl SessionArgs {
    fn load(&self) -> Result<SessionConfig> {
        let mut config = match &self.config {
            Some(path) => SessionConfig::load(path)?,
            None => SessionConfig::default(),
        };
        config.apply(&Overrides {
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            task: self.task.clone(),
            layers: self.layers.clone(),
            bound_cadence: self.bound_cadence,
            max_degree: self.max_degree,
            guidance: self.guidance,
            out_dir: self.out_dir.clone(),
        })?;
        config.validate()?;
        Ok(config)
    }
}

fn log_writer(config: &SessionConfig) -> Result<Option<RunLogWriter>> {
    match (config.output.jsonl_path(), config.output.csv_path()) {
        (Some(j), Some(c)) => RunLogWriter::create(&j, &c, config).map(Some),
        _ => Ok(None),
    }
}

fn print_summary(summary: &RunSummary) -> i32 {
    println!("{}", to_json(summary));
    if summary.diverged {
        exit::DIVERGED
    } else {
        exit::OK
    }
}

fn run(args: &SessionArgs) -> Result<i32> {
    let config = args.load()?;
    let mut writer = log_writer(&config)?;
    let mut session = Session::new(config)?;
    let summary = match writer.as_mut() {
        Some(w) => session.run(&mut [w as &mut dyn RecordSink])?,
        None => session.run(&mut [])?,
    };
    Ok(print_summary(&summary))
}

fn plot(log: &Path, out: &Path, log_scale: bool, envelope: bool, title: Option<String>) -> Result<i32> {
    let run = read_run_log(log)?;
    let mut opts = PlotOptions { log_scale, envelope, ..Default::default() };
    if let Some(t) = title {
        opts.title = t;
    }
    fs::write(out, render_svg(&run.records, &opts)).map_err(|e| RunError::io(out, e))?;
    Ok(exit::OK)
}

fn serve(args: &SessionArgs, host: &str, port: u16) -> Result<i32> {
    let config = args.load()?;
    let listener = bind(host, port)?;
    let writer = log_writer(&config)?;
    let session = Session::new(config)?;
    let log = writer.map(|w| Box::new(w) as Box<dyn RecordSink + Send>);
    let handle = spawn(session, log, listener, ServeOptions { handle_signals: true, ..Default::default() })?;
    eprintln!("yescert: serving on http://{}", handle.local_addr());
    let summary = handle.join()?;
    Ok(print_summary(&summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { session } => run(session),
        Command::Plot { log, out, log_scale, envelope, title } => plot(log, out, *log_scale, *envelope, title.clone()),
        Command::Serve { session, port, host } => serve(session, host, *port),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("yescert: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
