//! Argument handling and subcommands for the `mdiqkd` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use mdiqkd::decoy::{estimate_bounds, gains_from_counts, CountsDataset};
use mdiqkd::finitesize::{merge_bell, FluctuationPolicy};
use mdiqkd::io::{self, RunConfig};
use mdiqkd::keyrate::{distill, DistillOptions, KeyRateReport};
use mdiqkd::optics::{linspace, mean_visibility, visibility_grid, JitterModel, PulseInterferenceModel};
use mdiqkd::simulator::{bell_breakdown, CampaignLength, SimulationMode};
use mdiqkd::Error;

#[derive(Debug, Parser)]
#[command(name = "mdiqkd", version, about = "MDI-QKD decoy-state post-processing and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the secret key rate of a coincidence dataset.
    Distill(DistillArgs),
    /// Simulate a campaign and write its coincidence table.
    Simulate(SimulateArgs),
    /// Mean two-photon interference visibility, single value or grid.
    Visibility(VisibilityArgs),
    /// Decoy-state bounds on the single-photon yield and error rate.
    Bounds(BoundsArgs),
    /// Rate against attenuation and equivalent fibre distance.
    RateCurve(RateCurveArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Dataset CSV file.
    #[arg(long, conflicts_with = "bundled")]
    pub counts: Option<PathBuf>,
    /// Name of a bundled table, e.g. 2.33dB or fibre_50km.
    #[arg(long)]
    pub bundled: Option<String>,
}

impl Source {
    fn load(&self) -> Result<CountsDataset, Failure> {
        match (&self.counts, &self.bundled) {
            (Some(p), _) => Ok(io::load_dataset(p)?),
            (None, Some(n)) => Ok(io::load_bundled(n)?),
            (None, None) => Err(Failure::Usage("one of --counts or --bundled is required".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Apply finite-size fluctuations.
    #[arg(long)]
    pub finite_size: bool,
    /// Standard deviations for the finite-size loosening.
    #[arg(long, default_value_t = 7.0)]
    pub sigmas: f64,
    /// Pool singlet and triplet events before bounding.
    #[arg(long)]
    pub merge_bell: bool,
    /// Photon-number truncation.
    #[arg(long, default_value_t = mdiqkd::decoy::DEFAULT_TRUNCATION)]
    pub k: usize,
}

impl StatsArgs {
    fn policy(&self) -> Result<Option<FluctuationPolicy>, Failure> {
        if self.finite_size {
            Ok(Some(FluctuationPolicy::new(self.sigmas)?))
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub stats: StatsArgs,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output dataset CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expected tallies instead of Monte Carlo sampling.
    #[arg(long)]
    pub expected: bool,
    /// Override the campaign length in rounds.
    #[arg(long)]
    pub rounds: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VisibilityArgs {
    /// Timing jitter standard deviation (ps).
    #[arg(long, required_unless_present = "grid")]
    pub jitter_ps: Option<f64>,
    /// Spectral FWHM (GHz).
    #[arg(long, required_unless_present = "grid")]
    pub bandwidth_ghz: Option<f64>,
    /// Pulse FWHM (ps).
    #[arg(long, default_value_t = 35.0)]
    pub fwhm_ps: f64,
    /// Emit a CSV grid over jitter and bandwidth instead.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, default_value_t = 0.0)]
    pub jitter_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub jitter_max: f64,
    #[arg(long, default_value_t = 10.0)]
    pub bandwidth_min: f64,
    #[arg(long, default_value_t = 80.0)]
    pub bandwidth_max: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 41)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub stats: StatsArgs,
}

#[derive(Debug, Args)]
pub struct RateCurveArgs {
    /// Dataset files; all bundled tables when omitted.
    #[arg(long = "counts")]
    pub counts: Vec<PathBuf>,
    #[command(flatten)]
    pub stats: StatsArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

/// Parse `args` (including the program name) and run, writing results to
/// `out` and diagnostics to `err`. Returns the process exit code.
pub fn run_cli_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Distill(a) => cmd_distill(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Visibility(a) => cmd_visibility(a, out),
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::RateCurve(a) => cmd_rate_curve(a, out),
    }
}

fn options(stats: &StatsArgs) -> Result<DistillOptions, Failure> {
    Ok(DistillOptions {
        merge_bell: stats.merge_bell,
        finite_size: stats.policy()?,
        truncation: stats.k,
        ..DistillOptions::default()
    })
}

fn print_report(r: &KeyRateReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "channel: {} ({} dB)", r.channel_label, r.attenuation_db)?;
    for s in &r.states {
        let e11 = s.bounds.e11_upper.map_or("n/a".to_string(), |e| format!("{e:.4}"));
        writeln!(
            out,
            "{:<8} Q_ZZ {:.4e}  E_ZZ {:.4}%  y11 >= {:.4e}  e11 <= {}  rate {:.4e} bit/s",
            s.bell,
            s.q_zz_per_clock,
            s.e_zz.unwrap_or(0.0) * 100.0,
            s.bounds.y11_lower,
            e11,
            s.terms.bits_per_s
        )?;
        if let Some(note) = &s.note {
            writeln!(out, "         note: {note}")?;
        }
    }
    writeln!(out, "total rate: {:.1} kbit/s", r.rate_total / 1e3)
}

fn cmd_distill(a: DistillArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let data = a.source.load()?;
    let report = distill(&data, &options(&a.stats)?)?;
    print_report(&report, out)?;
    if let Some(path) = a.json {
        let f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(f, &report).map_err(Error::from)?;
        info!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(n) = a.rounds {
        cfg.simulation.rounds = Some(n);
        cfg.simulation.duration_s = None;
    }
    if a.expected {
        cfg.simulation.mode = SimulationMode::Expected;
    }
    let seed = a.seed.unwrap_or(cfg.simulation.seed);
    let sim = cfg.simulator()?;
    let length: CampaignLength = cfg.simulation.length()?;
    info!("simulating {} rounds, overlap {:.4}", sim.rounds_for(length)?, sim.overlap);
    let data = sim.run_campaign(length, seed, cfg.simulation.mode)?;
    io::save_dataset(&data, &a.out)?;
    let (s, t) = bell_breakdown(&data);
    writeln!(out, "wrote {} records to {}", data.records.len(), a.out.display())?;
    writeln!(out, "singlet share {:.4}, triplet share {:.4}", s, t)?;
    Ok(())
}

fn cmd_visibility(a: VisibilityArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.grid {
        if a.steps < 2 {
            return Err(Failure::Usage("--steps must be at least 2".into()));
        }
        let jitters = linspace(a.jitter_min, a.jitter_max, a.steps);
        let bandwidths = linspace(a.bandwidth_min, a.bandwidth_max, a.steps);
        let grid = visibility_grid(&jitters, &bandwidths, a.fwhm_ps)?;
        writeln!(out, "jitter_ps,bandwidth_ghz,visibility")?;
        for p in grid {
            let v = p.visibility.map_or(String::new(), |v| format!("{v:.6}"));
            writeln!(out, "{},{},{}", p.jitter_ps, p.bandwidth_ghz, v)?;
        }
        return Ok(());
    }
    let (Some(j), Some(bw)) = (a.jitter_ps, a.bandwidth_ghz) else {
        return Err(Failure::Usage("--jitter-ps and --bandwidth-ghz are required".into()));
    };
    let model = PulseInterferenceModel::new(a.fwhm_ps, bw, 0.0)?;
    let v = mean_visibility(&JitterModel::new(j)?, &model);
    writeln!(out, "{v:.4}")?;
    Ok(())
}

fn cmd_bounds(a: BoundsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut data = a.source.load()?;
    if a.stats.merge_bell {
        data = merge_bell(&data)?;
    }
    let policy = a.stats.policy()?;
    writeln!(out, "bell,y11_lower,e11_upper,consistency_sigmas,active,dropped")?;
    for bell in data.bell_groups() {
        if data.require_complete(bell).is_err() {
            continue;
        }
        let gains = gains_from_counts(&data, bell)?;
        let b = estimate_bounds(&gains, a.stats.k, policy.as_ref())?;
        writeln!(
            out,
            "{},{:.6e},{},{:.4},{},{}",
            bell,
            b.y11_lower,
            b.e11_upper.map_or(String::new(), |e| format!("{e:.6}")),
            b.consistency_sigmas,
            b.active_constraints.join(";"),
            b.dropped_constraints.join(";"),
        )?;
    }
    Ok(())
}

fn cmd_rate_curve(a: RateCurveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let datasets: Vec<CountsDataset> = if a.counts.is_empty() {
        io::bundled_names().map(io::load_bundled).collect::<Result<_, _>>()?
    } else {
        a.counts.iter().map(io::load_dataset).collect::<Result<_, _>>()?
    };
    let opts = options(&a.stats)?;
    let finite =
        DistillOptions { merge_bell: true, finite_size: Some(FluctuationPolicy::new(a.stats.sigmas)?), ..opts };
    let runs = datasets.iter().map(|d| {
        let is_finite = d.channel_label.contains("finite");
        (d, if is_finite { finite } else { opts })
    });
    let points = io::rate_curve(runs)?;
    match a.out {
        Some(p) => write_curve(&points, &p)?,
        None => io::emit_rate_curve(&points, out)?,
    }
    Ok(())
}

fn write_curve(points: &[io::RatePoint], path: &Path) -> Result<(), Failure> {
    io::emit_rate_curve(points, BufWriter::new(File::create(path)?))?;
    Ok(())
}
