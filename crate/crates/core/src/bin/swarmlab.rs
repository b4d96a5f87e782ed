use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use swarmlab::harness::report::{appendix_table, estimator_table, ReportFiles};
use swarmlab::harness::svg::psi_chart;
use swarmlab::harness::{
    load_runlogs, persist_runlog, run_ensemble, run_single, EnsembleReport, ExperimentConfig, ExperimentKind,
    HarnessError, InitConfig, RunLog,
};
use swarmlab::lemma_checks::{stay_negative_probability, tail_bound_check, write_tail_csv, IncrementDistribution, SyntheticIncrementSpec};
use swarmlab::objectives::ObjectiveId;

#[derive(Parser)]
#[command(name = "swarmlab", version, about = "Arbitrary-precision PSO stagnation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write its run log.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write an SVG chart of Ψ next to the log (implies keeping the trace).
        #[arg(long)]
        svg: bool,
    },
    /// Drift of stagnating dimensions.
    Exp1(EnsembleArgs),
    /// Increment decomposition and Brownian approximation.
    Exp2(EnsembleArgs),
    /// Stagnation phase statistics.
    Exp3(EnsembleArgs),
    /// Recompute a report from stored run logs.
    Analyze {
        /// Directory written by an `exp*` command.
        #[arg(long)]
        input: PathBuf,
        /// Where to write the report (default: the input directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo checks of the moment tail bound.
    Lemmas {
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine the reports of several experiment directories into one table.
    Tables {
        #[arg(long, value_enum)]
        experiment: TableKind,
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit step-function and series CSVs for plotting.
    Plotdata {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render Ψ charts for runs with stored traces.
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TableKind {
    Exp1,
    Exp3,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Desk scale: 50 runs, a fifth of the iterations.
    #[arg(long)]
    desk: bool,
    #[arg(long, env = "SWARMLAB_THREADS")]
    threads: Option<usize>,
    /// Keep full traces next to the run logs.
    #[arg(long)]
    keep_traces: bool,
    #[arg(long)]
    quiet: bool,
}

/// Overrides applied on top of a preset or a JSON config file.
#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<ObjectiveId>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    dims: Option<usize>,
    /// Number of initially stagnating dimensions (selects the special initialization).
    #[arg(long)]
    stagnating: Option<usize>,
    /// 1-based first stagnating dimension.
    #[arg(long)]
    dstar: Option<usize>,
    /// Initial scale of the stagnating dimensions, in bits.
    #[arg(long)]
    scale: Option<u32>,
    #[arg(long)]
    auto_scale: Option<bool>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    delta_t: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed (single run: the seed itself).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    c0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    cs: Option<f64>,
    #[arg(long)]
    t_m: Option<u64>,
    #[arg(long)]
    t_e: Option<u64>,
    #[arg(long)]
    initial_bits: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self, kind: ExperimentKind, desk: bool) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::preset(kind),
        };
        cfg.experiment = kind;
        if desk {
            cfg = cfg.desk();
        }
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set!(
            objective => cfg.objective,
            particles => cfg.particles,
            dims => cfg.dims,
            auto_scale => cfg.auto_scale,
            iters => cfg.iterations,
            delta_t => cfg.delta_t,
            runs => cfg.runs,
            seed => cfg.base_seed,
            n0 => cfg.stagnation.n0,
            c0 => cfg.stagnation.c0,
            cs => cfg.stagnation.cs,
            initial_bits => cfg.precision.initial_bits,
        );
        if self.t_m.is_some() {
            cfg.horizons.t_m = self.t_m;
        }
        if self.t_e.is_some() {
            cfg.horizons.t_e = self.t_e;
        }
        if self.stagnating.is_some() || self.dstar.is_some() || self.scale.is_some() {
            let (scale, stagnating, dstar) = match cfg.init {
                InitConfig::Special { scale, stagnating, dstar } => (scale, stagnating, dstar),
                InitConfig::Usual => (500, 1, 1),
            };
            cfg.init = InitConfig::Special {
                scale: self.scale.unwrap_or(scale),
                stagnating: self.stagnating.unwrap_or(stagnating),
                dstar: self.dstar.unwrap_or(dstar),
            };
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprint!("{e}");
            eprintln!("error: kind=usage code=1 message={first}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} code={code} message={message}", e.kind());
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config, svg } => single(&config, svg),
        Command::Exp1(args) => ensemble(ExperimentKind::Exp1, &args),
        Command::Exp2(args) => ensemble(ExperimentKind::Exp2, &args),
        Command::Exp3(args) => ensemble(ExperimentKind::Exp3, &args),
        Command::Analyze { input, out } => analyze(&input, out.as_deref().unwrap_or(&input)),
        Command::Lemmas { samples, seed, out } => lemmas(samples, seed, out.as_deref()),
        Command::Tables { experiment, input, out } => tables(experiment, &input, out.as_deref()),
        Command::Plotdata { input, out, svg } => plotdata(&input, &out, svg),
    }
}

fn default_out(kind: ExperimentKind) -> PathBuf {
    Path::new("swarmlab-out").join(kind.name())
}

fn single(args: &ConfigArgs, svg: bool) -> Result<(), HarnessError> {
    let mut cfg = args.resolve(ExperimentKind::SingleRun, false)?;
    cfg.keep_traces |= svg;
    let out = cfg.output_dir.clone().unwrap_or_else(|| default_out(ExperimentKind::SingleRun));
    let outcome = run_single(&cfg, 0)?;
    let trace = outcome.trace.clone();
    let log = RunLog::new(&cfg, outcome);
    persist_runlog(&log, &out)?;
    if let (true, Some(trace)) = (svg, trace) {
        fs::write(out.join("run_00000.svg"), psi_chart(&trace, 900, 500))?;
    }
    std::io::stdout().write_all(&log.to_json()?)?;
    Ok(())
}

fn ensemble(kind: ExperimentKind, args: &EnsembleArgs) -> Result<(), HarnessError> {
    let mut cfg = args.config.resolve(kind, args.desk)?;
    cfg.keep_traces |= args.keep_traces;
    let out = cfg.output_dir.clone().unwrap_or_else(|| default_out(kind));
    let runs = cfg.runs;
    let quiet = args.quiet;
    let outcomes = run_ensemble(&cfg, args.threads, |done| {
        if !quiet {
            eprintln!("[{}] {done}/{runs} runs finished", kind.name());
        }
    })?;
    let run_dir = out.join("runs");
    for outcome in &outcomes {
        persist_runlog(&RunLog::new(&cfg, outcome.clone()), &run_dir)?;
    }
    let report = EnsembleReport::build(&cfg, &outcomes)?;
    ReportFiles { dir: &out }.write_all(&cfg, &report, &outcomes)?;
    print_summary(&report)
}

fn print_summary(report: &EnsembleReport) -> Result<(), HarnessError> {
    let stdout = std::io::stdout();
    match report.experiment {
        ExperimentKind::Exp3 => appendix_table(stdout.lock(), std::slice::from_ref(report)),
        _ => estimator_table(stdout.lock(), std::slice::from_ref(report)),
    }
}

fn analyze(input: &Path, out: &Path) -> Result<(), HarnessError> {
    let logs = load_runlogs(&input.join("runs"))?;
    let first = logs.first().ok_or_else(|| HarnessError::Config(format!("no run logs under {}", input.display())))?;
    let cfg = first.config.clone();
    if let Some(other) = logs.iter().find(|l| l.fingerprint != first.fingerprint) {
        return Err(HarnessError::CorruptLog(format!(
            "run {} belongs to a different configuration",
            other.outcome.run_index
        )));
    }
    let outcomes: Vec<_> = logs.into_iter().map(|l| l.outcome).collect();
    let report = EnsembleReport::build(&cfg, &outcomes)?;
    ReportFiles { dir: out }.write_all(&cfg, &report, &outcomes)?;
    print_summary(&report)
}

fn lemmas(samples: u64, seed: u64, out: Option<&Path>) -> Result<(), HarnessError> {
    let distributions = [
        IncrementDistribution::Gaussian { mu: -0.5, sigma2: 1.0 },
        IncrementDistribution::RademacherShifted { mu: -0.5 },
        IncrementDistribution::UniformShifted { mu: -0.5, width: 2.0 },
    ];
    let mut tables = Vec::new();
    for distribution in distributions {
        let spec = SyntheticIncrementSpec { distribution, horizon: 100, samples, seed };
        tables.push((distribution, tail_bound_check(&spec)?));
    }
    let mut csv = Vec::new();
    write_tail_csv(&mut csv, &tables)?;
    let stay = stay_negative_probability(&SyntheticIncrementSpec {
        distribution: distributions[0],
        horizon: 1000,
        samples: (samples / 10).max(1000),
        seed,
    })?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("lemmas.csv"), &csv)?;
        let rows = stay.curve.iter().map(|(t, p, se)| vec![t.to_string(), p.to_string(), se.to_string()]);
        fs::write(
            dir.join("stay_negative.csv"),
            swarmlab::harness::report::csv_bytes(&["T", "probability", "std_error"], rows)?,
        )?;
    }
    std::io::stdout().write_all(&csv)?;
    if tables.iter().flat_map(|(_, rows)| rows).any(|r| !r.ok) {
        return Err(HarnessError::Lemma(swarmlab::lemma_checks::LemmaError::InvalidSpec(
            "an empirical tail probability exceeds its bound".into(),
        )));
    }
    Ok(())
}

fn read_report(dir: &Path) -> Result<EnsembleReport, HarnessError> {
    let bytes = fs::read(dir.join("report.json"))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn tables(kind: TableKind, inputs: &[PathBuf], out: Option<&Path>) -> Result<(), HarnessError> {
    let reports = inputs.iter().map(|d| read_report(d)).collect::<Result<Vec<_>, _>>()?;
    let mut bytes = Vec::new();
    match kind {
        TableKind::Exp1 => estimator_table(&mut bytes, &reports)?,
        TableKind::Exp3 => appendix_table(&mut bytes, &reports)?,
    }
    match out {
        Some(path) => fs::write(path, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn plotdata(input: &Path, out: &Path, svg: bool) -> Result<(), HarnessError> {
    let logs = load_runlogs(&input.join("runs"))?;
    let outcomes: Vec<_> = logs.iter().map(|l| l.outcome.clone()).collect();
    let files = ReportFiles { dir: out };
    let mut written = files.write_distributions(&outcomes)?;
    if let Some(first) = logs.first() {
        let report = EnsembleReport::build(&first.config, &outcomes)?;
        if let Some(row) = report.estimator_row() {
            let path = out.join("estimator_bars.csv");
            fs::write(&path, swarmlab::harness::report::csv_bytes(&EnsembleReport::ESTIMATOR_HEADER, [row])?)?;
            written.push(path);
        }
        written.extend(ReportFiles { dir: out }.write_all(&first.config, &report, &outcomes)?);
    }
    for outcome in &outcomes {
        let Some(trace) = &outcome.trace else { continue };
        let rows = trace.psi.iter().enumerate().flat_map(|(k, row)| {
            let t = (trace.first_sample + k as u64) * trace.delta_t;
            row.iter().enumerate().map(move |(d, p)| vec![t.to_string(), (d + 1).to_string(), p.to_string()])
        });
        let path = out.join(format!("psi_series_{:05}.csv", outcome.run_index));
        fs::write(&path, swarmlab::harness::report::csv_bytes(&["t", "d", "psi"], rows)?)?;
        written.push(path);
        if svg {
            let path = out.join(format!("psi_series_{:05}.svg", outcome.run_index));
            fs::write(&path, psi_chart(trace, 900, 500))?;
            written.push(path);
        }
    }
    let mut stdout = std::io::stdout().lock();
    for path in written {
        writeln!(stdout, "{}", path.display())?;
    }
    Ok(())
}
