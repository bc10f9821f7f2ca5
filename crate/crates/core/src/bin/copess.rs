//! Command-line front end: calibrate, simulate, metrics, localize, optimize, sweep.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use copess::dynamics::{simulate, sweep, write_sweep, InitialState, Scenario, TiltSchedule, DEFAULT_IMPULSE_MM_S};
use copess::guidance::{optimize, write_trace, SearchSpace};
use copess::map::{cell_center, StiffnessMap};
use copess::pipeline::{
    characterize, localize_all, read_force_log, simulate_compression_cycle, write_force_log, write_track, CycleSettings,
    DEFAULT_NOISE_FLOOR_UH, DEFAULT_SAMPLE_HZ,
};
use copess::scenario_io::{
    load_calibration, load_scenario, OutputDir, RunManifest, DEFAULT_OUT_DIR, OUT_DIR_ENV,
};
use copess::sensing::{read_frames, write_frames};
use copess::{Error, Result};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "copess", version, about = "Lattice-cushioned inductive sensing tile toolkit")]
struct Cli {
    /// Seed recorded in the manifest and used by stochastic steps; overrides
    /// a seed given in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice anchor CSV replacing the built-in table.
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit density scaling laws and friction, write laws.json.
    Calibrate,
    /// Run a scenario file, or a single-cell compression cycle.
    Simulate {
        scenario: Option<PathBuf>,
        /// Simulate a 0 → 6 mm → 0 stroke at this density instead.
        #[arg(long, conflicts_with = "scenario")]
        cycle: Option<f64>,
    },
    /// Pad metrics from force and frame logs of one cycle.
    Metrics {
        #[arg(long)]
        force: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        density: f64,
    },
    /// Object track from a frame log.
    Localize {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NOISE_FLOOR_UH)]
        noise_floor: f64,
    },
    /// Search stiffness maps for the scenario's goal.
    Optimize {
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum)]
        space: Option<Space>,
        #[arg(long)]
        contiguous: bool,
    },
    /// Uniform-map runs over a density × constant-tilt grid.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.07,0.10,0.20")]
        densities: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        tilts: Vec<f64>,
        /// Initial speed along +x in mm/s.
        #[arg(long, default_value_t = DEFAULT_IMPULSE_MM_S)]
        impulse: f64,
        #[arg(long, default_value_t = cell_center((1, 0)).0)]
        x0: f64,
        #[arg(long, default_value_t = 5.0)]
        duration: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Space {
    Banded,
    Split,
    Full,
}

impl From<Space> for SearchSpace {
    fn from(s: Space) -> Self {
        match s {
            Space::Banded => SearchSpace::BandedColumns,
            Space::Split => SearchSpace::SplitColumns,
            Space::Full => SearchSpace::Full,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn as_parse_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Csv(_) | Error::Json(_) => Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        other => other,
    }
}

fn run(cli: Cli) -> Result<()> {
    let (calibration, source) = load_calibration(cli.calibration.as_deref())?;
    let manifest = |name: &str| RunManifest::new(name, source.clone(), cli.seed.unwrap_or(0));
    match cli.command {
        Command::Calibrate => {
            let mut out = OutputDir::create(&cli.out, manifest("calibrate"))?;
            let laws = serde_json::json!({
                "fits": calibration.lattice.fits,
                "anchors": calibration.lattice.anchors,
                "stiffening_exponent": calibration.lattice.stiffening_exponent,
                "gap": calibration.gap,
                "friction": calibration.friction,
            });
            let path = out.write_json("laws.json", &laws)?;
            out.finish()?;
            println!("{}", path.display());
        }
        Command::Simulate { scenario: None, cycle: None } => {
            return Err(Error::Validation(vec!["simulate needs a scenario file or --cycle <density>".into()]));
        }
        Command::Simulate { cycle: Some(density), .. } => {
            let logs = simulate_compression_cycle(&calibration, &CycleSettings::full_stroke(density))?;
            let mut out = OutputDir::create(&cli.out, manifest("simulate --cycle"))?;
            out.write_with("force.csv", |w| write_force_log(w, &logs.force))?;
            out.write_with("frames.csv", |w| write_frames(w, &logs.frames))?;
            out.finish()?;
            println!("{} cycle samples written to {}", logs.frames.len(), cli.out.display());
        }
        Command::Simulate { scenario: Some(path), .. } => {
            let file = load_scenario(&path)?;
            let result = simulate(&file.scenario(), &calibration)?;
            let mut m = manifest("simulate");
            m.scenario_digest = Some(file.digest());
            let mut out = OutputDir::create(&cli.out, m)?;
            out.write_bytes("scenario.resolved.json", file.canonical_json().as_bytes())?;
            out.write_with("trajectory.csv", |w| result.trajectory.write_csv(w))?;
            out.write_with("frames.csv", |w| write_frames(w, &result.frames))?;
            out.write_json("termination.json", &result.termination)?;
            out.finish()?;
            println!("{}", serde_json::to_string(&result.termination)?);
        }
        Command::Metrics { force, frames, density } => {
            let force_log = read_force_log(open(&force)?, DEFAULT_SAMPLE_HZ).map_err(|e| as_parse_error(&force, e))?;
            let frame_log = read_frames(open(&frames)?).map_err(|e| as_parse_error(&frames, e))?;
            let metrics = characterize(&force_log, &frame_log, density, &calibration.gap)?;
            let mut out = OutputDir::create(&cli.out, manifest("metrics"))?;
            out.write_json("metrics.json", &metrics)?;
            out.finish()?;
            println!("{}", serde_json::to_string(&metrics)?);
        }
        Command::Localize { frames, noise_floor } => {
            let frame_log = read_frames(open(&frames)?).map_err(|e| as_parse_error(&frames, e))?;
            let track = localize_all(&frame_log, &calibration.array, noise_floor);
            let mut out = OutputDir::create(&cli.out, manifest("localize"))?;
            out.write_with("track.csv", |w| write_track(w, &track))?;
            out.finish()?;
            println!("{} frames localized", track.len());
        }
        Command::Optimize { scenario, budget, space, contiguous } => {
            let file = load_scenario(&scenario)?;
            let goal = file
                .goal
                .clone()
                .ok_or_else(|| Error::Validation(vec![format!("{} has no `goal`", scenario.display())]))?;
            let mut settings = file.optimizer.unwrap_or_default();
            if let Some(seed) = cli.seed {
                settings.seed = seed;
            }
            if let Some(b) = budget {
                settings.budget = b;
            }
            if let Some(s) = space {
                settings.space = s.into();
            }
            settings.contiguous |= contiguous;
            let template = file.scenario();
            let result = optimize(&goal, &template, &calibration, &settings)?;
            let winner = simulate(&Scenario { map: result.best.map, ..template }, &calibration)?;
            let mut m = manifest("optimize");
            m.scenario_digest = Some(file.digest());
            m.seed = settings.seed;
            let mut out = OutputDir::create(&cli.out, m)?;
            out.write_json("best_map.json", &result.best.map)?;
            out.write_json("evaluation.json", &result.evaluation)?;
            out.write_with("cost_trace.csv", |w| write_trace(w, &result.trace))?;
            out.write_with("trajectory.csv", |w| winner.trajectory.write_csv(w))?;
            out.finish()?;
            println!(
                "{} (cost {}, {} evaluations{})",
                serde_json::to_string(&result.best.map)?,
                result.evaluation.cost,
                result.trace.len(),
                if result.exhaustive { ", exhaustive" } else { "" }
            );
        }
        Command::Sweep { densities, tilts, impulse, x0, duration } => {
            let mut template = Scenario::new(StiffnessMap::uniform(densities.first().copied().unwrap_or(0.1)));
            template.tilt_schedule = TiltSchedule::flat();
            template.initial = InitialState {
                x_mm: x0,
                y_mm: cell_center((1, 0)).1,
                vx_mm_s: impulse,
                vy_mm_s: 0.0,
            };
            template.sim.duration_s = duration;
            let rows = sweep(&template, &densities, &tilts, &calibration)?;
            let mut out = OutputDir::create(&cli.out, manifest("sweep"))?;
            out.write_with("sweep.csv", |w| write_sweep(w, &rows))?;
            out.finish()?;
            for r in &rows {
                println!(
                    "density {:.2} tilt {:5.2}°: travel {:7.2} mm, {}",
                    r.density, r.tilt_deg, r.travel_mm, r.termination
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::ValueValidation | ErrorKind::InvalidValue => EXIT_VALIDATION,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
