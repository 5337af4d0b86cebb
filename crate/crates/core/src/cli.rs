//! Command-line front end. Parameters are layered as preset, then JSON
//! config file, then flags; everything is validated before any output is
//! written.

use std::ffi::OsString;
use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::solve_equilibrium;
use crate::asep::{simulate_asep, AsepMetadata, LatticeState, MCConfig};
use crate::consensus::{consensus_horizon, run_consensus, DEFAULT_EPSILON};
use crate::entrainment::{
    analytic_periodic_n2, detect_entrainment_with, EntrainmentOptions, PeriodicVerdict, TwoSiteDrive,
};
use crate::error::{Error, Result};
use crate::export::{json_string, site_columns, table_string};
use crate::formation::{formation_horizon, simulate_formation, FormationState};
use crate::integrator::{integrate, IntegrationConfig, Method};
use crate::model::{OccupancyState, RateComponent, RateSchedule};

#[derive(Debug, Parser)]
#[command(name = "rfmr", version, about = "Simulate and analyse the ribosome flow model on a ring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate trajectories from one or more initial states
    Simulate(SimulateArgs),
    /// Solve for the equilibrium on a level set, or sweep all level sets
    Equilibrium(EquilibriumArgs),
    /// Detect convergence to a periodic limit under periodic rates
    Entrain(EntrainArgs),
    /// Run the homogeneous ring as an average-consensus protocol
    Consensus(ConsensusArgs),
    /// Drive agents on a circle to a balanced configuration
    Formation(FormationArgs),
    /// Monte Carlo exclusion process on the ring with a mean-field comparison
    Asep(AsepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig5,
    Fig6,
    Fig7,
    Example5,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON file with command parameters (overrides the preset)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, default_value = "rfmr-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Final time
    #[arg(long)]
    pub tend: Option<f64>,
    /// Sample interval of the output
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// Use fixed-step RK4 with this step instead of adaptive RK45
    #[arg(long)]
    pub rk4_step: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub n: Option<usize>,
    /// Constant rates, comma separated
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    /// Initial state, comma separated; repeat for several trajectories
    #[arg(long)]
    pub x0: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    /// Level set `1'x = s`
    #[arg(long)]
    pub s: Option<f64>,
    /// Number of equally spaced levels in [0, n] to solve
    #[arg(long)]
    pub sweep_s: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EntrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Constant rates, comma separated (periodic schedules come from --config)
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    /// Period assumed for constant rates
    #[arg(long)]
    pub period: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda_c: Option<f64>,
    /// Threshold on max-minus-min for the settle time
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FormationArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Initial angles in radians, comma separated and nondecreasing in [0, 2 pi)
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Angular-velocity offset added to every control
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AsepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Ring size for homogeneous rates (with --rate)
    #[arg(long)]
    pub n: Option<usize>,
    /// Common hop rate used with --n
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sweeps: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Number of interior densities for a flux-density sweep
    #[arg(long)]
    pub sweep_density: Option<usize>,
}

/// Rates given either as a plain list (constant) or as a full schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatesSpec {
    List(Vec<f64>),
    Schedule(RateSchedule),
}

impl RatesSpec {
    fn schedule(&self) -> Result<RateSchedule> {
        match self {
            RatesSpec::List(r) => RateSchedule::constant(r.clone()),
            RatesSpec::Schedule(s) => {
                s.validate()?;
                Ok(s.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// `None` selects a command-specific horizon.
    pub t_end: Option<f64>,
    pub sample_interval: f64,
    pub method: Method,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = IntegrationConfig::default();
        SolverConfig {
            t_end: None,
            sample_interval: d.sample_interval,
            method: d.method,
            max_steps: d.max_steps,
        }
    }
}

impl SolverConfig {
    fn apply(&mut self, a: &SolverArgs) {
        if a.tend.is_some() {
            self.t_end = a.tend;
        }
        if let Some(dt) = a.dt {
            self.sample_interval = dt;
        }
        if let Some(step) = a.rk4_step {
            self.method = Method::Rk4 { step };
        } else if a.rtol.is_some() || a.atol.is_some() {
            let (r0, a0) = match self.method {
                Method::Rk45 { rtol, atol } => (rtol, atol),
                Method::Rk4 { .. } => (1e-9, 1e-12),
            };
            self.method = Method::Rk45 {
                rtol: a.rtol.unwrap_or(r0),
                atol: a.atol.unwrap_or(a0),
            };
        }
        if let Some(m) = a.max_steps {
            self.max_steps = m;
        }
    }

    fn integration(&self, default_t_end: f64) -> Result<IntegrationConfig> {
        let cfg = IntegrationConfig {
            method: self.method,
            t_end: self.t_end.unwrap_or(default_t_end),
            sample_interval: self.sample_interval,
            max_steps: self.max_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn tight_solver(t_end: Option<f64>, sample_interval: f64) -> SolverConfig {
    SolverConfig {
        t_end,
        sample_interval,
        method: Method::Rk45 {
            rtol: 1e-11,
            atol: 1e-13,
        },
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: Option<usize>,
    pub rates: Option<RatesSpec>,
    pub x0: Vec<Vec<f64>>,
    pub solver: SolverConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: None,
            rates: None,
            x0: Vec::new(),
            solver: SolverConfig {
                t_end: Some(10.0),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub n: Option<usize>,
    pub rates: Option<RatesSpec>,
    pub s: Option<f64>,
    pub sweep_s: Option<usize>,
    pub tol: f64,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig {
            n: None,
            rates: None,
            s: None,
            sweep_s: None,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntrainConfig {
    pub rates: Option<RatesSpec>,
    /// Two-site drive with a closed-form solution; replaces `rates`.
    pub two_site_drive: Option<TwoSiteDrive>,
    pub x0: Vec<f64>,
    pub tol: f64,
    pub max_cycles: usize,
    pub constant_period: f64,
    pub method: Method,
    /// Horizon of the closed-form comparison for the two-site drive.
    pub compare_t_end: f64,
}

impl Default for EntrainConfig {
    fn default() -> Self {
        let opts = EntrainmentOptions::default();
        EntrainConfig {
            rates: Some(RatesSpec::Schedule(sinusoid_ring_schedule())),
            two_site_drive: None,
            x0: vec![0.5, 0.01, 0.9],
            tol: opts.tol,
            max_cycles: opts.max_cycles,
            constant_period: opts.constant_period,
            method: opts.method,
            compare_t_end: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub x0: Vec<f64>,
    pub lambda_c: f64,
    pub epsilon: f64,
    pub solver: SolverConfig,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            x0: vec![1.0, 0.0, 0.0, 0.0],
            lambda_c: 1.0,
            epsilon: DEFAULT_EPSILON,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormationConfig {
    pub thetas: Vec<f64>,
    pub radius: f64,
    pub v: f64,
    pub solver: SolverConfig,
}

impl Default for FormationConfig {
    fn default() -> Self {
        FormationConfig {
            thetas: vec![0.9 * PI, PI, 1.1 * PI, 1.2 * PI],
            radius: 1.0,
            v: 3.0 / 16.0,
            solver: tight_solver(Some(200.0), 0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsepConfig {
    pub n: Option<usize>,
    pub rate: f64,
    pub rates: Option<Vec<f64>>,
    /// Defaults to half the ring.
    pub particles: Option<usize>,
    pub seed: u64,
    pub sweeps: u64,
    pub burn_in: u64,
    pub replicas: usize,
    pub sweep_density: Option<usize>,
}

impl Default for AsepConfig {
    fn default() -> Self {
        AsepConfig {
            n: None,
            rate: 1.0,
            rates: None,
            particles: None,
            seed: 0,
            sweeps: 10_000,
            burn_in: 1_000,
            replicas: 4,
            sweep_density: None,
        }
    }
}

fn sinusoid_ring_schedule() -> RateSchedule {
    RateSchedule::periodic(
        TAU,
        vec![
            RateComponent::constant(3.0),
            RateComponent::sinusoid(3.0, 2.0, 1.0, 0.5),
            // 4 - 2 cos(2t) written as a sine
            RateComponent::sinusoid(4.0, 2.0, 2.0, -PI / 2.0),
        ],
    )
    .expect("static schedule is valid")
}

fn preset_mismatch(preset: Preset, command: &str) -> Error {
    Error::config(format!("preset {preset:?} does not apply to `{command}`").to_lowercase())
}

fn simulate_preset(p: Preset) -> Result<SimulateConfig> {
    let mut cfg = SimulateConfig::default();
    match p {
        Preset::Fig2 => {
            cfg.rates = Some(RatesSpec::List(vec![2.0, 1.0]));
            cfg.x0 = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.2, 0.9]];
        }
        Preset::Fig3 => {
            cfg.rates = Some(RatesSpec::List(vec![2.0, 3.0, 1.0]));
            cfg.x0 = vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        }
        _ => return Err(preset_mismatch(p, "simulate")),
    }
    Ok(cfg)
}

fn equilibrium_preset(p: Preset) -> Result<EquilibriumConfig> {
    match p {
        Preset::Fig3 => Ok(EquilibriumConfig {
            rates: Some(RatesSpec::List(vec![2.0, 3.0, 1.0])),
            s: Some(2.0),
            ..Default::default()
        }),
        _ => Err(preset_mismatch(p, "equilibrium")),
    }
}

fn entrain_preset(p: Preset) -> Result<EntrainConfig> {
    match p {
        Preset::Fig5 => Ok(EntrainConfig::default()),
        Preset::Example5 => Ok(EntrainConfig {
            rates: None,
            two_site_drive: Some(TwoSiteDrive::default()),
            x0: vec![0.3, 0.5],
            ..Default::default()
        }),
        _ => Err(preset_mismatch(p, "entrain")),
    }
}

fn consensus_preset(p: Preset) -> Result<ConsensusConfig> {
    match p {
        Preset::Fig6 => Ok(ConsensusConfig {
            solver: SolverConfig {
                t_end: Some(10.0),
                ..Default::default()
            },
            ..Default::default()
        }),
        _ => Err(preset_mismatch(p, "consensus")),
    }
}

fn formation_preset(p: Preset) -> Result<FormationConfig> {
    match p {
        Preset::Fig7 => Ok(FormationConfig::default()),
        _ => Err(preset_mismatch(p, "formation")),
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Overlays the JSON object in `file` onto `base`.
fn layered<T: Serialize + DeserializeOwned>(base: T, file: Option<&Path>) -> Result<T> {
    let Some(path) = file else {
        return Ok(base);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let overlay: Value = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("config {} is not valid JSON: {e}", path.display())))?;
    if !overlay.is_object() {
        return Err(Error::config("config file must hold a JSON object"));
    }
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, overlay);
    serde_json::from_value(value).map_err(|e| Error::config(format!("config {}: {e}", path.display())))
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("cannot parse {t:?} as a number")))
        })
        .collect()
}

fn check_n(n: Option<usize>, rates: &RateSchedule) -> Result<()> {
    match n {
        Some(n) if n != rates.n() => Err(Error::config(format!(
            "--n {n} does not match {} rates",
            rates.n()
        ))),
        _ => Ok(()),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Files produced by a command, written only after everything succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    fn write(self) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        for (name, contents) in self.files {
            fs::write(self.dir.join(name), contents)?;
        }
        Ok(())
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let base = match args.common.preset {
        Some(p) => simulate_preset(p)?,
        None => SimulateConfig::default(),
    };
    let mut cfg = layered(base, args.common.config.as_deref())?;
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(r) = &args.rates {
        cfg.rates = Some(RatesSpec::List(r.clone()));
    }
    if !args.x0.is_empty() {
        cfg.x0 = args.x0.iter().map(|s| parse_list(s)).collect::<Result<_>>()?;
    }
    cfg.solver.apply(&args.solver);

    let rates = cfg
        .rates
        .as_ref()
        .ok_or_else(|| Error::config("missing rates (use --rates, --config or --preset)"))?
        .schedule()?;
    check_n(cfg.n, &rates)?;
    if cfg.x0.is_empty() {
        return Err(Error::config("missing initial state (use --x0)"));
    }
    let starts = cfg
        .x0
        .iter()
        .map(|x| {
            if x.len() != rates.n() {
                return Err(Error::config(format!(
                    "initial state {x:?} has {} entries, expected {}",
                    x.len(),
                    rates.n()
                )));
            }
            OccupancyState::new(x.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let integration = cfg.solver.integration(10.0)?;

    let mut out = Outputs::new(&args.common.out_dir);
    let mut finals = Vec::new();
    let mut drift: f64 = 0.0;
    for (k, a) in starts.iter().enumerate() {
        let traj = integrate(a, &rates, &integration)?;
        drift = drift.max(traj.conservation_drift());
        finals.push(fmt_vec(traj.last_state().as_slice()));
        out.add(format!("trajectory_{}.csv", k + 1), traj.to_csv_string()?);
        out.add(format!("trajectory_{}.json", k + 1), traj.to_json_string()?);
    }
    out.write()?;
    Ok(format!(
        "simulate: trajectories {}, n={}, t_end={}, final states {}, max drift {:.1e}",
        starts.len(),
        rates.n(),
        integration.t_end,
        finals.join(" "),
        drift
    ))
}

fn cmd_equilibrium(args: &EquilibriumArgs) -> Result<String> {
    let base = match args.common.preset {
        Some(p) => equilibrium_preset(p)?,
        None => EquilibriumConfig::default(),
    };
    let mut cfg = layered(base, args.common.config.as_deref())?;
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(r) = &args.rates {
        cfg.rates = Some(RatesSpec::List(r.clone()));
    }
    if args.s.is_some() {
        cfg.s = args.s;
    }
    if args.sweep_s.is_some() {
        cfg.sweep_s = args.sweep_s;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }

    let rates = cfg
        .rates
        .as_ref()
        .ok_or_else(|| Error::config("missing rates (use --rates, --config or --preset)"))?
        .schedule()?;
    check_n(cfg.n, &rates)?;
    if rates.constant_rates().is_none() {
        return Err(Error::config("equilibria need constant rates"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::config(format!("tolerance {} must be positive", cfg.tol)));
    }
    let n = rates.n();
    let mut out = Outputs::new(&args.common.out_dir);
    let summary = match (cfg.s, cfg.sweep_s) {
        (_, Some(k)) => {
            if k < 2 {
                return Err(Error::config("--sweep-s needs at least 2 levels"));
            }
            let mut rows = Vec::with_capacity(k);
            for j in 0..k {
                let s = n as f64 * j as f64 / (k - 1) as f64;
                let sol = solve_equilibrium(&rates, s, cfg.tol)?;
                let mut row = vec![s];
                row.extend_from_slice(sol.point.e.as_slice());
                row.push(sol.point.r);
                rows.push(row);
            }
            let mut header = vec!["s".to_string()];
            header.extend(site_columns("e", n));
            header.push("r".into());
            out.add("equilibrium_sweep.csv", table_string(&header, &rows)?);
            format!("equilibrium: {k} levels on n={n}, s in [0, {n}]")
        }
        (Some(s), None) => {
            let sol = solve_equilibrium(&rates, s, cfg.tol)?;
            out.add("equilibrium.json", json_string(&sol.report())?);
            format!(
                "equilibrium: n={n}, s={s}, e={}, r={:.6}, residual {:.1e}",
                fmt_vec(sol.point.e.as_slice()),
                sol.point.r,
                sol.residual
            )
        }
        (None, None) => return Err(Error::config("missing level (use --s or --sweep-s)")),
    };
    out.write()?;
    Ok(summary)
}

#[derive(Serialize)]
struct EntrainOutput<'a> {
    verdict: &'a PeriodicVerdict,
    closed_form_max_error: Option<f64>,
}

fn cmd_entrain(args: &EntrainArgs) -> Result<String> {
    let base = match args.common.preset {
        Some(p) => entrain_preset(p)?,
        None => EntrainConfig::default(),
    };
    let mut cfg = layered(base, args.common.config.as_deref())?;
    if let Some(r) = &args.rates {
        cfg.rates = Some(RatesSpec::List(r.clone()));
        cfg.two_site_drive = None;
    }
    if let Some(x) = &args.x0 {
        cfg.x0 = x.clone();
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(m) = args.max_cycles {
        cfg.max_cycles = m;
    }
    if let Some(p) = args.period {
        cfg.constant_period = p;
    }

    let rates = match (&cfg.rates, &cfg.two_site_drive) {
        (Some(_), Some(_)) => return Err(Error::config("give either rates or two_site_drive, not both")),
        (Some(r), None) => r.schedule()?,
        (None, Some(d)) => d.schedule()?,
        (None, None) => return Err(Error::config("missing rates")),
    };
    if cfg.x0.len() != rates.n() {
        return Err(Error::config(format!(
            "initial state has {} entries, expected {}",
            cfg.x0.len(),
            rates.n()
        )));
    }
    let a = OccupancyState::new(cfg.x0.clone())?;
    let opts = EntrainmentOptions {
        tol: cfg.tol,
        max_cycles: cfg.max_cycles,
        method: cfg.method,
        constant_period: cfg.constant_period,
        ..Default::default()
    };
    let compare = match cfg.two_site_drive {
        Some(drive) => {
            // checks the closed-form precondition before any integration
            analytic_periodic_n2(&a, &drive, 0.0)?;
            if !(cfg.compare_t_end > 0.0) {
                return Err(Error::config("compare_t_end must be positive"));
            }
            Some(drive)
        }
        None => None,
    };

    let verdict = detect_entrainment_with(&a, &rates, &opts)?;
    let mut out = Outputs::new(&args.common.out_dir);
    let period = verdict.period;
    let traj_cfg = IntegrationConfig::new(period * verdict.cycles_used as f64, period / 64.0).with_method(cfg.method);
    let traj = integrate(&a, &rates, &traj_cfg)?;
    out.add("trajectory.csv", traj.to_csv_string()?);

    let mut closed_form_max_error = None;
    if let Some(drive) = compare {
        let cmp_cfg = IntegrationConfig::new(cfg.compare_t_end, 0.1).with_method(Method::Rk45 {
            rtol: 1e-11,
            atol: 1e-13,
        });
        let numeric = integrate(&a, &rates, &cmp_cfg)?;
        let mut rows = Vec::with_capacity(numeric.len());
        let mut worst: f64 = 0.0;
        for (t, x) in numeric.iter() {
            let exact = analytic_periodic_n2(&a, &drive, t)?.as_slice()[0];
            let err = (x.as_slice()[0] - exact).abs();
            worst = worst.max(err);
            rows.push([t, x.as_slice()[0], exact, err]);
        }
        let header = ["t", "x1", "x1_exact", "abs_error"].map(String::from);
        out.add("closed_form.csv", table_string(&header, &rows)?);
        closed_form_max_error = Some(worst);
    }

    let mut buf = Vec::new();
    verdict.write_limit_cycle_csv(&mut buf)?;
    out.add("limit_cycle.csv", String::from_utf8(buf).expect("csv output is ascii"));
    out.add(
        "entrain.json",
        json_string(&EntrainOutput {
            verdict: &verdict,
            closed_form_max_error,
        })?,
    );
    out.write()?;
    let mut summary = format!(
        "entrain: converged={} after {} cycles, period residual {:.2e} (tol {:.0e})",
        verdict.converged, verdict.cycles_used, verdict.period_residual, verdict.tol
    );
    if let Some(e) = closed_form_max_error {
        summary.push_str(&format!(", closed-form max error {e:.1e}"));
    }
    Ok(summary)
}

fn cmd_consensus(args: &ConsensusArgs) -> Result<String> {
    let base = match args.common.preset {
        Some(p) => consensus_preset(p)?,
        None => ConsensusConfig::default(),
    };
    let mut cfg = layered(base, args.common.config.as_deref())?;
    if let Some(x) = &args.x0 {
        cfg.x0 = x.clone();
    }
    if let Some(l) = args.lambda_c {
        cfg.lambda_c = l;
    }
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    cfg.solver.apply(&args.solver);

    let a = OccupancyState::new(cfg.x0.clone())?;
    RateSchedule::homogeneous(a.len(), cfg.lambda_c)?;
    if !(cfg.epsilon > 0.0) {
        return Err(Error::config(format!("epsilon {} must be positive", cfg.epsilon)));
    }
    let integration = cfg.solver.integration(consensus_horizon(a.len(), cfg.lambda_c))?;

    let report = run_consensus(&a, cfg.lambda_c, &integration, cfg.epsilon)?;
    let mut out = Outputs::new(&args.common.out_dir);
    out.add("consensus.json", json_string(&report)?);
    let mut buf = Vec::new();
    report.write_lyapunov_csv(&mut buf)?;
    out.add("lyapunov.csv", String::from_utf8(buf).expect("csv output is ascii"));
    let mut buf = Vec::new();
    report.write_decay_csv(&mut buf)?;
    out.add("decay.csv", String::from_utf8(buf).expect("csv output is ascii"));
    out.write()?;
    let settle = report
        .settle_time
        .map_or_else(|| "not reached".to_string(), |t| format!("{t:.4}"));
    Ok(format!(
        "consensus: n={}, average {:.6}, error {:.1e} at t={:.4}, settle time {settle}, steady flow {:.6}",
        a.len(),
        report.initial_average,
        report.consensus_error,
        integration.t_end,
        report.steady_flow
    ))
}

fn cmd_formation(args: &FormationArgs) -> Result<String> {
    let base = match args.common.preset {
        Some(p) => formation_preset(p)?,
        None => FormationConfig::default(),
    };
    let mut cfg = layered(base, args.common.config.as_deref())?;
    if let Some(t) = &args.thetas {
        cfg.thetas = t.clone();
    }
    if let Some(r) = args.radius {
        cfg.radius = r;
    }
    if let Some(v) = args.v {
        cfg.v = v;
    }
    cfg.solver.apply(&args.solver);

    let initial = FormationState::new(cfg.thetas.clone(), cfg.radius, cfg.v)?;
    let integration = cfg.solver.integration(formation_horizon(initial.thetas.len()))?;

    let run = simulate_formation(&initial, &integration)?;
    let mut out = Outputs::new(&args.common.out_dir);
    let mut buf = Vec::new();
    run.write_angles_csv(&mut buf)?;
    out.add("angles.csv", String::from_utf8(buf).expect("csv output is ascii"));
    let mut buf = Vec::new();
    run.write_positions_csv(&mut buf)?;
    out.add("positions.csv", String::from_utf8(buf).expect("csv output is ascii"));
    let n = initial.thetas.len();
    let mut header = vec!["t".to_string()];
    header.extend(site_columns("x", n));
    let rows = run.times.iter().zip(run.gap_trajectory()).map(|(&t, g)| {
        let mut row = vec![t];
        row.extend(g);
        row
    });
    out.add("gaps.csv", table_string(&header, rows)?);
    out.add("formation.json", json_string(&run.verdict)?);
    out.write()?;
    let over_pi: Vec<f64> = run.verdict.terminal_angles.iter().map(|a| a / PI).collect();
    Ok(format!(
        "formation: n={n}, balanced={}, order preserved={}, max gap error {:.1e}, terminal angles/pi {}",
        run.verdict.balanced,
        run.verdict.order_preserved,
        run.verdict.max_gap_error,
        fmt_vec(&over_pi)
    ))
}

fn cmd_asep(args: &AsepArgs) -> Result<String> {
    if let Some(p) = args.common.preset {
        return Err(preset_mismatch(p, "asep"));
    }
    let mut cfg = layered(AsepConfig::default(), args.common.config.as_deref())?;
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(r) = args.rate {
        cfg.rate = r;
    }
    if let Some(r) = &args.rates {
        cfg.rates = Some(r.clone());
    }
    if args.particles.is_some() {
        cfg.particles = args.particles;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.sweeps {
        cfg.sweeps = s;
    }
    if let Some(b) = args.burn_in {
        cfg.burn_in = b;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    if args.sweep_density.is_some() {
        cfg.sweep_density = args.sweep_density;
    }

    let rates = match (&cfg.rates, cfg.n) {
        (Some(r), n) => {
            if n.is_some_and(|n| n != r.len()) {
                return Err(Error::config(format!("--n does not match {} rates", r.len())));
            }
            r.clone()
        }
        (None, Some(n)) => vec![cfg.rate; n],
        (None, None) => return Err(Error::config("missing rates (use --rates, or --n with --rate)")),
    };
    let schedule = RateSchedule::constant(rates.clone())?;
    let n = rates.len();
    let mc = MCConfig {
        seed: cfg.seed,
        sweeps: cfg.sweeps,
        burn_in: cfg.burn_in,
        hop_rates: rates.clone(),
        replicas: cfg.replicas,
    };
    mc.validate()?;
    let mut out = Outputs::new(&args.common.out_dir);

    if let Some(k) = cfg.sweep_density {
        if k == 0 {
            return Err(Error::config("--sweep-density needs at least one point"));
        }
        let mut rows = Vec::with_capacity(k);
        for j in 1..=k {
            let particles = (2 * n * j + k + 1) / (2 * (k + 1));
            let result = simulate_asep(&LatticeState::spread(n, particles)?, &mc)?;
            let density = particles as f64 / n as f64;
            let mean_field = solve_equilibrium(&schedule, particles as f64, 1e-12)?.point.r;
            rows.push([density, result.flux, mean_field]);
        }
        let header = ["density", "mc_flux", "mean_field_flux"].map(String::from);
        out.add("fundamental_diagram.csv", table_string(&header, &rows)?);
        out.write()?;
        let peak = rows.iter().cloned().fold([0.0, f64::NEG_INFINITY, 0.0], |best, r| {
            if r[1] > best[1] {
                r
            } else {
                best
            }
        });
        return Ok(format!(
            "asep: {k}-point density sweep on n={n}, peak MC flux {:.5} at density {:.3}",
            peak[1], peak[0]
        ));
    }

    let particles = cfg.particles.unwrap_or(n / 2);
    let lattice = LatticeState::spread(n, particles)?;
    let result = simulate_asep(&lattice, &mc)?;
    let mean_field = solve_equilibrium(&schedule, particles as f64, 1e-12)?;
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            [
                (i + 1) as f64,
                result.density[i],
                mean_field.point.e.as_slice()[i],
            ]
        })
        .collect();
    let header = ["site", "mc_density", "mean_field_density"].map(String::from);
    let mut buf = Vec::new();
    result.write_profile_csv(&mut buf)?;
    out.add("profile.csv", String::from_utf8(buf).expect("csv output is ascii"));
    out.add("mean_field.csv", table_string(&header, &rows)?);
    out.add("asep.json", json_string(&AsepMetadata::new(&mc, &result))?);
    out.write()?;
    Ok(format!(
        "asep: n={n}, {particles} particles, MC flux {:.5}, mean-field flux {:.5}",
        result.flux, mean_field.point.r
    ))
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Equilibrium(a) => cmd_equilibrium(a),
        Command::Entrain(a) => cmd_entrain(a),
        Command::Consensus(a) => cmd_consensus(a),
        Command::Formation(a) => cmd_formation(a),
        Command::Asep(a) => cmd_asep(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on numerical failure, 2 on usage or validation errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
