use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowdiv_core::combining::CombinerKind;
use flowdiv_core::link::{full_rate_traces, realize, SimConfig};
use flowdiv_core::modem::ModScheme;
use flowdiv_sim::config::{parse_combiners, parse_config, serialize_config};
use flowdiv_sim::experiments::{self, DEFAULT_SCAN_TRIALS, DEFAULT_SNR_GRID, DEFAULT_Y_GRID};
use flowdiv_sim::output::{self, write_output, Provenance};
use flowdiv_sim::{Result, SimError};

/// Monte Carlo link simulator for pulse-based particle communication with
/// transverse receiver diversity.
#[derive(Parser)]
#[command(name = "flowdiv", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file; missing keys take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Frames per error-rate point (Monte Carlo runs for structured-scan).
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated subset of sc,egc,dgc,pgc.
    #[arg(long)]
    combiners: Option<String>,
    /// Overrides link.snr_db (accepts `inf`).
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Detection at one SNR with every configured receiver.
    SingleRun {
        #[command(flatten)]
        common: Common,
        /// Also write the channel-rate noisy traces of trial 0 (large).
        #[arg(long)]
        dump_trace: bool,
        /// Also write the matched-filter outputs of trial 0.
        #[arg(long)]
        dump_observations: bool,
    },
    /// Error rates over an SNR grid.
    SweepSnr {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr_grid: Option<Vec<f64>>,
        /// Modulations as NxM, e.g. 2x4,3x3; default is the configured one.
        #[arg(long, value_delimiter = ',')]
        modulations: Option<Vec<String>>,
    },
    /// Error rates versus the number of symmetric side receivers.
    SweepNrx {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        nrx: Vec<usize>,
        /// Receiver spacing, m.
        #[arg(long, default_value_t = 0.001)]
        delta_y: f64,
    },
    /// Probability that a probe receiver is structured, versus transverse offset.
    StructuredScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.7)]
        eta: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Equalized data-symbol vectors of one combiner in one frame.
    Constellation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "egc")]
        combiner: String,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Prints the effective configuration.
    PrintConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<SimConfig> {
    let mut c = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = common.seed {
        c.master_seed = s;
    }
    if let Some(n) = common.trials {
        c.n_trials = n;
    }
    if let Some(list) = &common.combiners {
        c.combiners = parse_combiners(list)?;
    }
    if let Some(snr) = common.snr {
        c.snr_db = snr;
    }
    c.validate()?;
    Ok(c)
}

fn parse_modulation(s: &str, t_sym: f64) -> Result<ModScheme> {
    let bad = || SimError::Config(format!("modulation {s:?} is not of the form NxM"));
    let (n, m) = s.trim().split_once('x').ok_or_else(bad)?;
    let n = n.parse().map_err(|_| bad())?;
    let m = m.parse().map_err(|_| bad())?;
    Ok(ModScheme::new(n, m, t_sym)?)
}

fn emit(dir: &Path, name: &str, contents: String) -> Result<()> {
    let path = write_output(dir, name, &contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let threads = match &cli.cmd {
        Cmd::SingleRun { common, .. }
        | Cmd::SweepSnr { common, .. }
        | Cmd::SweepNrx { common, .. }
        | Cmd::StructuredScan { common, .. }
        | Cmd::Constellation { common, .. }
        | Cmd::PrintConfig { common } => common.threads,
    };
    if let Some(n) = threads {
        // only fails if a global pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    match cli.cmd {
        Cmd::SingleRun {
            common,
            dump_trace,
            dump_observations,
        } => {
            let c = load(&common)?;
            let prov = Provenance::new(&c, "single-run");
            let run = experiments::single_run(&c, false)?;
            emit(&common.out, "detection.csv", output::detection_csv(&prov, &run.rows())?)?;
            emit(&common.out, "trials.csv", output::trials_csv(&prov, &run)?)?;
            emit(&common.out, "weights.csv", output::weights_csv(&prov, &run)?)?;
            emit(&common.out, "paired.csv", output::paired_csv(&prov, &run.paired_tests(CombinerKind::Sc))?)?;
            if dump_observations {
                let r = realize(&c, 0)?;
                let (_, obs) = r.observations(&c, c.snr_db, c.geometry.rx_pos.len())?;
                emit(&common.out, "observations.csv", output::observations_csv(&prov, &obs)?)?;
            }
            if dump_trace {
                let traces = full_rate_traces(&c, 0)?;
                emit(&common.out, "trace.csv", output::trace_csv(&prov, &traces)?)?;
            }
        }
        Cmd::SweepSnr {
            common,
            snr_grid,
            modulations,
        } => {
            let base = load(&common)?;
            let grid = snr_grid.unwrap_or_else(|| DEFAULT_SNR_GRID.to_vec());
            if grid.is_empty() {
                return Err(SimError::Config("empty SNR grid".into()));
            }
            let schemes = match modulations {
                Some(list) => list
                    .iter()
                    .map(|s| parse_modulation(s, base.scheme.t_sym))
                    .collect::<Result<Vec<_>>>()?,
                None => vec![base.scheme],
            };
            let prov = Provenance::new(&base, "sweep-snr");
            let (mut rows, mut paired) = (Vec::new(), Vec::new());
            for scheme in schemes {
                let mut c = base.clone();
                c.scheme = scheme;
                let run = experiments::sweep_snr(&c, &grid)?;
                rows.extend(run.rows());
                paired.extend(run.paired_tests(CombinerKind::Sc));
            }
            emit(&common.out, "sweep_snr.csv", output::detection_csv(&prov, &rows)?)?;
            emit(&common.out, "paired_snr.csv", output::paired_csv(&prov, &paired)?)?;
        }
        Cmd::SweepNrx { common, nrx, delta_y } => {
            let c = load(&common)?;
            let prov = Provenance::new(&c, "sweep-nrx");
            let run = experiments::sweep_nrx(&c, &nrx, delta_y)?;
            emit(&common.out, "sweep_nrx.csv", output::detection_csv(&prov, &run.rows())?)?;
            emit(&common.out, "paired_nrx.csv", output::paired_csv(&prov, &run.paired_tests(CombinerKind::Sc))?)?;
        }
        Cmd::StructuredScan {
            common,
            y_grid,
            eta,
            delta,
        } => {
            let c = load(&common)?;
            let n_mc = common.trials.unwrap_or(DEFAULT_SCAN_TRIALS);
            let grid = y_grid.unwrap_or_else(|| DEFAULT_Y_GRID.to_vec());
            let prov = Provenance::new(&c, "structured-scan");
            let scan = experiments::structured_scan(&c, &grid, eta, delta, n_mc)?;
            emit(&common.out, "structured_scan.csv", output::scan_csv(&prov, &scan)?)?;
            emit(&common.out, "critical_distance.csv", output::critical_distance_csv(&prov, &scan)?)?;
        }
        Cmd::Constellation { common, combiner, trial } => {
            let c = load(&common)?;
            let kind: CombinerKind = combiner.parse()?;
            let prov = Provenance::new(&c, "constellation");
            let dump = experiments::constellation(&c, kind, trial)?;
            emit(
                &common.out,
                &format!("constellation_{kind}.csv"),
                output::constellation_csv(&prov, &dump)?,
            )?;
        }
        Cmd::PrintConfig { common } => {
            print!("{}", serialize_config(&load(&common)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
