use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cpo_core::dressed::{dressed_coordinates, integrate_dressed, integrate_reduced, PopulationState};
use cpo_core::scan::write_sweep_csv;
use cpo_core::{
    auto_initial_guess, auto_truncation, eigen_frame, fit_composite, integrate_full, linspace, scan_delta,
    solve_harmonic_balance, sweep_power, CompositeFit, DensityState, Error, FitOptions, ModelSpec,
    ResonanceShape, ScanOptions, Spectrum, SweepOptions, SystemParams, Tier,
};
use serde::Serialize;

mod plot;

/// Composite resonances of a bichromatically driven open two-level system.
#[derive(Parser)]
#[command(name = "cpo", version, allow_negative_numbers = true)]
struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time evolution from the equilibrium state.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        tier: SimTier,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        out: PathBuf,
        /// Local error tolerance of the integrator.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Samples of the periodic solution written by the harmonic tier.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Period-averaged population difference against the beat detuning.
    #[command(allow_negative_numbers = true)]
    Scan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        tier: ScanTier,
        #[arg(long)]
        delta_min: f64,
        #[arg(long)]
        delta_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        /// Standard deviation of additive Gaussian noise.
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Closed-form amplitudes and widths on a logarithmic S grid.
    Analytic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        s_min: f64,
        #[arg(long)]
        s_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Composite Lorentzian fit of a two-column spectrum.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// `auto` or a JSON file holding a previous fit or a hand-made guess.
        #[arg(long, default_value = "auto")]
        guess: String,
        /// Model for `--guess auto`.
        #[arg(long, value_enum, default_value_t = FitModel::Experimental)]
        model: FitModel,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        max_iterations: usize,
    },
    /// Resonance parameters for a list of saturation values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        tier: ScanTier,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        s_values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Scan points per fitted spectrum.
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// Writes a standalone matplotlib script plotting a CSV produced here.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        emit: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimTier {
    Full,
    Reduced,
    Harmonic,
    Dressed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanTier {
    Full,
    Harmonic,
    Reduced,
    Dressed,
    Analytic,
}

impl From<ScanTier> for Tier {
    fn from(t: ScanTier) -> Self {
        match t {
            ScanTier::Full => Tier::Full,
            ScanTier::Harmonic => Tier::Harmonic,
            ScanTier::Reduced => Tier::Reduced,
            ScanTier::Dressed => Tier::Dressed,
            ScanTier::Analytic => Tier::Analytic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    /// Two Lorentzians on a flat background, centered at zero.
    Theory,
    /// Theory model plus a broad component for the coherence hole.
    Hole,
    /// Three Lorentzians on a Gaussian background with a free center.
    Experimental,
}

impl From<FitModel> for ModelSpec {
    fn from(m: FitModel) -> Self {
        match m {
            FitModel::Theory => ModelSpec::theory(),
            FitModel::Hole => ModelSpec::theory_with_hole(),
            FitModel::Experimental => ModelSpec::experimental(),
        }
    }
}

enum Failure {
    Core(Error),
    /// Output was written but a fit did not converge.
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_config_error() => 2,
            Failure::Core(_) => 3,
            Failure::NotConverged(_) => 4,
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|_| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::NotConverged(msg) => eprintln!("fit did not converge: {msg}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

/// Honors `CPO_THREADS` by sizing the global pool that scans and sweeps use.
fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("CPO_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::param("CPO_THREADS", format!("must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::param("CPO_THREADS", e.to_string()))?;
    Ok(())
}

fn load_params(path: &Path) -> Result<SystemParams, Error> {
    let text = fs::read_to_string(path)?;
    SystemParams::from_json(&text)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Simulate {
            config,
            tier,
            t_end,
            out,
            tol,
            samples,
        } => simulate(&load_params(&config)?, tier, t_end, tol, samples, &out),
        Command::Scan {
            config,
            tier,
            delta_min,
            delta_max,
            points,
            out,
            noise,
            seed,
        } => {
            let params = load_params(&config)?;
            if points < 2 || !(delta_max > delta_min) {
                return Err(Error::param("grid", "need --points >= 2 and --delta-max > --delta-min").into());
            }
            let grid = linspace(delta_min, delta_max, points);
            let mut spectrum = scan_delta(&params, &grid, tier.into(), &ScanOptions::default())?;
            if let Some(sigma) = noise {
                spectrum = spectrum.with_noise(sigma, seed)?;
            }
            spectrum.write_csv(create(&out)?)?;
            Ok(())
        }
        Command::Analytic {
            config,
            s_min,
            s_max,
            points,
            out,
        } => {
            let params = load_params(&config)?;
            if !(s_min > 0.0) || !(s_max > s_min) || points < 2 {
                return Err(Error::param("S", "need 0 < --s-min < --s-max and --points >= 2").into());
            }
            let grid: Vec<f64> = linspace(s_min.log10(), s_max.log10(), points)
                .into_iter()
                .map(|e| 10f64.powf(e))
                .collect();
            let rows = sweep_power(&params, &grid, Tier::Analytic, &SweepOptions::default())?;
            write_sweep_csv(&rows, create(&out)?)?;
            Ok(())
        }
        Command::Fit {
            data,
            guess,
            model,
            out,
            max_iterations,
        } => {
            let mut opts = FitOptions::default();
            opts.lm.max_iterations = max_iterations;
            fit(&data, &guess, model.into(), &opts, &out)
        }
        Command::Sweep {
            config,
            tier,
            s_values,
            out,
            points,
        } => {
            let params = load_params(&config)?;
            let opts = SweepOptions {
                points,
                ..SweepOptions::default()
            };
            let rows = sweep_power(&params, &s_values, tier.into(), &opts)?;
            write_sweep_csv(&rows, create(&out)?)?;
            let failed: Vec<String> = rows
                .iter()
                .filter(|r| r.shape.is_none())
                .map(|r| format!("S = {}", r.saturation))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::NotConverged(format!("rows flagged at {}", failed.join(", "))))
            }
        }
        Command::Plot { input, emit } => {
            let script = plot::script_for(&input)?;
            fs::write(&emit, script)?;
            Ok(())
        }
    }
}

fn simulate(params: &SystemParams, tier: SimTier, t_end: f64, tol: f64, samples: usize, out: &Path) -> Outcome {
    let w = create(out)?;
    match tier {
        SimTier::Full => integrate_full(params, DensityState::equilibrium(params), t_end, tol)?.write_csv(w)?,
        SimTier::Reduced => {
            let r = params.reduced()?;
            integrate_reduced(&r, PopulationState::equilibrium(&r), t_end, tol)?.write_csv(w)?
        }
        SimTier::Dressed => {
            let r = params.reduced()?;
            let (e1, e0) = dressed_coordinates(&PopulationState::equilibrium(&r), &eigen_frame(&r)?);
            integrate_dressed(&r, [e1, e0], t_end, tol)?.write_csv(w)?
        }
        SimTier::Harmonic => {
            // the harmonic tier only knows the periodic regime, so this is
            // the steady state sampled over [0, t_end]
            if !(t_end > 0.0) || samples < 2 {
                return Err(Error::param("t_end", "need --t-end > 0 and --samples >= 2").into());
            }
            let sol = solve_harmonic_balance(params, auto_truncation(params, 1e-10)?)?;
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["t", "n1", "n0"]).map_err(Error::from)?;
            for t in linspace(0.0, t_end, samples) {
                let (n1, n0) = sol.populations_at(t);
                csv.write_record([t, n1, n0].map(|v| v.to_string())).map_err(Error::from)?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: &'a CompositeFit,
    /// Normalized form `B(1 + A₀L₀ + A₁L₁)` when the model allows it.
    resonance: Option<ResonanceShape>,
}

fn fit(data: &Path, guess: &str, model: ModelSpec, opts: &FitOptions, out: &Path) -> Outcome {
    let spectrum = Spectrum::read_csv(BufReader::new(File::open(data)?), &data.display().to_string())?;
    let init = if guess == "auto" {
        auto_initial_guess(&spectrum, &model)?
    } else {
        let text = fs::read_to_string(guess)?;
        serde_json::from_str::<CompositeFit>(&text).map_err(Error::from)?
    };
    let result = fit_composite(&spectrum, &init, opts)?;
    let report = FitReport {
        fit: &result,
        resonance: result.to_resonance_shape().ok(),
    };
    let mut w = create(out)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    if result.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(result.status.clone()))
    }
}
