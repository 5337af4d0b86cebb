//! Continuous-time totally asymmetric exclusion process on a ring, the
//! stochastic model whose mean-field limit is the ring ODE.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::write_table;

pub const RNG_NAME: &str = "ChaCha8 (rand_chacha), stream = replica index";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeState {
    pub occupancy: Vec<bool>,
}

impl LatticeState {
    pub fn new(occupancy: Vec<bool>) -> Self {
        LatticeState { occupancy }
    }

    pub fn empty(n: usize) -> Self {
        LatticeState::new(vec![false; n])
    }

    /// `count` particles packed on sites `1..=count`.
    pub fn packed(n: usize, count: usize) -> Result<Self> {
        if count > n {
            return Err(Error::config(format!("{count} particles do not fit on {n} sites")));
        }
        Ok(LatticeState::new((0..n).map(|i| i < count).collect()))
    }

    /// `count` particles spread as evenly as possible.
    pub fn spread(n: usize, count: usize) -> Result<Self> {
        if count > n {
            return Err(Error::config(format!("{count} particles do not fit on {n} sites")));
        }
        let mut occ = vec![false; n];
        for j in 0..count {
            occ[j * n / count] = true;
        }
        Ok(LatticeState::new(occ))
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn particle_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub seed: u64,
    /// Total simulated time; one sweep is one time unit.
    pub sweeps: u64,
    pub burn_in: u64,
    /// Exit rate of each site.
    pub hop_rates: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
}

fn default_replicas() -> usize {
    1
}

impl MCConfig {
    pub fn new(seed: u64, sweeps: u64, burn_in: u64, hop_rates: Vec<f64>) -> Self {
        MCConfig {
            seed,
            sweeps,
            burn_in,
            hop_rates,
            replicas: 1,
        }
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_rates.len() < 2 {
            return Err(Error::config(format!(
                "need at least 2 sites, got {}",
                self.hop_rates.len()
            )));
        }
        if let Some(i) = self.hop_rates.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::config(format!(
                "hop rate {} at site {} must be positive",
                self.hop_rates[i],
                i + 1
            )));
        }
        if self.sweeps <= self.burn_in {
            return Err(Error::config(format!(
                "sweeps ({}) must exceed burn_in ({})",
                self.sweeps, self.burn_in
            )));
        }
        if self.replicas == 0 {
            return Err(Error::config("need at least one replica"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub density: Vec<f64>,
    pub flux: f64,
    pub hops: u64,
    pub final_state: LatticeState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsepResult {
    /// Replica-averaged time-averaged occupancy per site after burn-in.
    pub density: Vec<f64>,
    /// Hops per site per unit time after burn-in, averaged over replicas.
    pub flux: f64,
    pub particle_count: usize,
    pub replicas: Vec<ReplicaResult>,
}

impl AsepResult {
    /// Standard error of each site density across replicas; `None` for a single replica.
    pub fn density_standard_errors(&self) -> Option<Vec<f64>> {
        let m = self.replicas.len();
        if m < 2 {
            return None;
        }
        let errors = (0..self.density.len())
            .map(|i| {
                let mean = self.density[i];
                let var = self
                    .replicas
                    .iter()
                    .map(|r| (r.density[i] - mean).powi(2))
                    .sum::<f64>()
                    / (m - 1) as f64;
                (var / m as f64).sqrt()
            })
            .collect();
        Some(errors)
    }

    pub fn write_profile_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header = ["site".to_string(), "density".to_string()];
        let rows = self.density.iter().enumerate().map(|(i, &d)| [(i + 1) as f64, d]);
        write_table(writer, &header, rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsepMetadata {
    pub rng: String,
    pub seed: u64,
    pub sweeps: u64,
    pub burn_in: u64,
    pub replicas: usize,
    pub rates: Vec<f64>,
    pub n: usize,
    pub particle_count: usize,
    pub flux: f64,
    pub density: Vec<f64>,
    /// Across replicas; absent for a single replica.
    pub density_stderr: Option<Vec<f64>>,
}

impl AsepMetadata {
    pub fn new(cfg: &MCConfig, result: &AsepResult) -> Self {
        AsepMetadata {
            rng: RNG_NAME.to_string(),
            seed: cfg.seed,
            sweeps: cfg.sweeps,
            burn_in: cfg.burn_in,
            replicas: cfg.replicas,
            rates: cfg.hop_rates.clone(),
            n: cfg.hop_rates.len(),
            particle_count: result.particle_count,
            flux: result.flux,
            density: result.density.clone(),
            density_stderr: result.density_standard_errors(),
        }
    }
}

/// Fenwick tree over per-site event rates.
struct RateTree {
    tree: Vec<f64>,
    weights: Vec<f64>,
}

impl RateTree {
    fn new(weights: Vec<f64>) -> Self {
        let mut t = RateTree {
            tree: vec![0.0; weights.len() + 1],
            weights,
        };
        t.rebuild();
        t
    }

    fn rebuild(&mut self) {
        let n = self.weights.len();
        self.tree.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..=n {
            self.tree[i] += self.weights[i - 1];
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
    }

    fn set(&mut self, i: usize, w: f64) {
        let delta = w - self.weights[i];
        if delta == 0.0 {
            return;
        }
        self.weights[i] = w;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut j = self.weights.len();
        let mut sum = 0.0;
        while j > 0 {
            sum += self.tree[j];
            j &= j - 1;
        }
        sum
    }

    /// Index whose cumulative-rate interval contains `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.weights.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            if pos + step <= n && self.tree[pos + step] <= target {
                pos += step;
                target -= self.tree[pos];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

fn run_replica(initial: &LatticeState, cfg: &MCConfig, stream: u64) -> ReplicaResult {
    let n = initial.len();
    let lam = &cfg.hop_rates;
    let mut occ = initial.occupancy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let active = |occ: &[bool], i: usize| occ[i] && !occ[(i + 1) % n];
    let mut rates = RateTree::new((0..n).map(|i| if active(&occ, i) { lam[i] } else { 0.0 }).collect());

    let (start, end) = (cfg.burn_in as f64, cfg.sweeps as f64);
    let mut occupied_time = vec![0.0; n];
    let mut last_change = vec![0.0; n];
    let credit = |occupied_time: &mut [f64], last_change: &mut [f64], occ: &[bool], i: usize, now: f64| {
        if occ[i] {
            let overlap = now.min(end) - last_change[i].max(start);
            if overlap > 0.0 {
                occupied_time[i] += overlap;
            }
        }
        last_change[i] = now;
    };

    let mut t = 0.0;
    let mut hops = 0u64;
    let mut events = 0u64;
    loop {
        let total = rates.total();
        if total <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample(Exp1);
        t += wait / total;
        if t >= end {
            break;
        }
        let i = loop {
            let i = rates.find(rng.random::<f64>() * total);
            if rates.weights[i] > 0.0 {
                break i;
            }
        };
        let j = (i + 1) % n;
        credit(&mut occupied_time, &mut last_change, &occ, i, t);
        credit(&mut occupied_time, &mut last_change, &occ, j, t);
        occ[i] = false;
        occ[j] = true;
        for k in [(i + n - 1) % n, i, j] {
            rates.set(k, if active(&occ, k) { lam[k] } else { 0.0 });
        }
        if t >= start {
            hops += 1;
        }
        events += 1;
        if events.is_multiple_of(4096) {
            rates.rebuild();
        }
    }
    for i in 0..n {
        credit(&mut occupied_time, &mut last_change, &occ, i, end);
    }
    let window = end - start;
    ReplicaResult {
        density: occupied_time.iter().map(|v| v / window).collect(),
        flux: hops as f64 / (n as f64 * window),
        hops,
        final_state: LatticeState::new(occ),
    }
}

/// Runs `cfg.replicas` independent lattices in parallel and averages them.
pub fn simulate_asep(initial: &LatticeState, cfg: &MCConfig) -> Result<AsepResult> {
    cfg.validate()?;
    if initial.len() != cfg.hop_rates.len() {
        return Err(Error::config(format!(
            "lattice has {} sites but {} hop rates were given",
            initial.len(),
            cfg.hop_rates.len()
        )));
    }
    let replicas: Vec<ReplicaResult> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|k| run_replica(initial, cfg, k))
        .collect();
    let particle_count = initial.particle_count();
    if let Some(r) = replicas.iter().find(|r| r.final_state.particle_count() != particle_count) {
        return Err(Error::Numerical {
            message: "particle count changed during the run".into(),
            residual: (r.final_state.particle_count() as f64 - particle_count as f64).abs(),
        });
    }
    let m = replicas.len() as f64;
    let n = initial.len();
    let density = (0..n)
        .map(|i| replicas.iter().map(|r| r.density[i]).sum::<f64>() / m)
        .collect();
    let flux = replicas.iter().map(|r| r.flux).sum::<f64>() / m;
    Ok(AsepResult {
        density,
        flux,
        particle_count,
        replicas,
    })
}
