//! Convergence of periodically forced rings to a periodic limit solution.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{site_columns, write_table};
use crate::integrator::{Method, RingSystem, Stepper, CONSERVATION_TOL_PER_SITE};
use crate::model::{clamp_into_cube, OccupancyState, RateComponent, RateSchedule};

pub const SAMPLES_PER_PERIOD: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_CYCLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    /// Time within the period, in `[0, T)`.
    pub phase: f64,
    pub x: OccupancyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicVerdict {
    pub converged: bool,
    /// Largest sup-norm difference between corresponding samples of the last
    /// two periods.
    pub period_residual: f64,
    pub cycles_used: usize,
    pub period: f64,
    pub tol: f64,
    pub limit_cycle_samples: Vec<CycleSample>,
}

impl PeriodicVerdict {
    pub fn write_limit_cycle_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.limit_cycle_samples.first().map_or(0, |s| s.x.len());
        let mut header = vec!["phase".to_string()];
        header.extend(site_columns("x", n));
        let rows = self.limit_cycle_samples.iter().map(|s| {
            let mut row = Vec::with_capacity(n + 1);
            row.push(s.phase);
            row.extend_from_slice(s.x.as_slice());
            row
        });
        write_table(writer, &header, rows)
    }

    /// Sup-norm distance between two sampled cycles of equal length.
    pub fn cycle_distance(&self, other: &PeriodicVerdict) -> f64 {
        self.limit_cycle_samples
            .iter()
            .zip(&other.limit_cycle_samples)
            .flat_map(|(a, b)| a.x.as_slice().iter().zip(b.x.as_slice()).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntrainmentOptions {
    pub tol: f64,
    pub max_cycles: usize,
    pub method: Method,
    /// Period used for constant schedules, which are periodic for every `T`.
    pub constant_period: f64,
    pub max_steps_per_cycle: usize,
}

impl Default for EntrainmentOptions {
    fn default() -> Self {
        EntrainmentOptions {
            tol: DEFAULT_TOL,
            max_cycles: DEFAULT_MAX_CYCLES,
            method: Method::Rk45 {
                rtol: 1e-10,
                atol: 1e-12,
            },
            constant_period: TAU,
            max_steps_per_cycle: 1_000_000,
        }
    }
}

/// Integrates period after period until two consecutive sampled periods
/// agree to `tol` or `max_cycles` periods have been simulated.
pub fn detect_entrainment(
    a: &OccupancyState,
    rates: &RateSchedule,
    tol: f64,
    max_cycles: usize,
) -> Result<PeriodicVerdict> {
    let opts = EntrainmentOptions {
        tol,
        max_cycles,
        ..Default::default()
    };
    detect_entrainment_with(a, rates, &opts)
}

pub fn detect_entrainment_with(
    a: &OccupancyState,
    rates: &RateSchedule,
    opts: &EntrainmentOptions,
) -> Result<PeriodicVerdict> {
    rates.validate()?;
    let n = a.len();
    if rates.n() != n {
        return Err(Error::config(format!(
            "initial state has {n} sites but the schedule has {} rates",
            rates.n()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::config(format!("tolerance {} must be positive", opts.tol)));
    }
    if opts.max_cycles < 2 {
        return Err(Error::config("at least two cycles are needed for a period comparison"));
    }
    let period = match rates.period() {
        Some(p) => p,
        None if opts.constant_period > 0.0 && opts.constant_period.is_finite() => opts.constant_period,
        None => return Err(Error::config("constant_period must be positive")),
    };
    let total0 = a.total();
    let drift_tol = CONSERVATION_TOL_PER_SITE * n as f64;
    let dt = period / SAMPLES_PER_PERIOD as f64;

    let mut stepper = Stepper::new(
        RingSystem::new(rates),
        opts.method,
        0.0,
        a.as_slice().to_vec(),
        opts.max_steps_per_cycle.saturating_mul(opts.max_cycles),
    );
    let mut previous: Vec<Vec<f64>> = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::with_capacity(SAMPLES_PER_PERIOD);
    let mut residual = f64::INFINITY;
    let mut cycles = 0;
    for cycle in 0..opts.max_cycles {
        current.clear();
        for k in 0..SAMPLES_PER_PERIOD {
            let t = cycle as f64 * period + k as f64 * dt;
            stepper.advance_to(t).map_err(|reason| Error::Integration {
                time: stepper.time(),
                reason,
                partial: None,
            })?;
            let mut y = stepper.state().to_vec();
            let drift = (y.iter().sum::<f64>() - total0).abs();
            if drift > drift_tol {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("total occupancy drifted by {drift:e} (limit {drift_tol:e})"),
                    partial: None,
                });
            }
            clamp_into_cube(&mut y)?;
            current.push(y);
        }
        cycles = cycle + 1;
        if !previous.is_empty() {
            residual = previous
                .iter()
                .zip(&current)
                .flat_map(|(p, c)| p.iter().zip(c).map(|(u, v)| (u - v).abs()))
                .fold(0.0, f64::max);
            if residual <= opts.tol {
                break;
            }
        }
        std::mem::swap(&mut previous, &mut current);
    }
    // on a non-converged exit the latest cycle sits in `previous` after the swap
    let last = if residual <= opts.tol { current } else { previous };
    let limit_cycle_samples = last
        .into_iter()
        .enumerate()
        .map(|(k, y)| {
            Ok(CycleSample {
                phase: k as f64 * dt,
                x: OccupancyState::new(y)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodicVerdict {
        converged: residual <= opts.tol,
        period_residual: residual,
        cycles_used: cycles,
        period,
        tol: opts.tol,
        limit_cycle_samples,
    })
}

/// Two-site drive `lam_1 = 3q/2`, `lam_2 = q/2` with `q(t) = offset + amplitude sin t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSiteDrive {
    pub offset: f64,
    pub amplitude: f64,
}

impl Default for TwoSiteDrive {
    fn default() -> Self {
        TwoSiteDrive {
            offset: 2.0,
            amplitude: 1.0,
        }
    }
}

impl TwoSiteDrive {
    fn validate(&self) -> Result<()> {
        if !(self.offset.is_finite() && self.amplitude.is_finite() && self.offset > self.amplitude.abs()) {
            return Err(Error::config(format!(
                "drive q = {} + {} sin t must stay strictly positive",
                self.offset, self.amplitude
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<RateSchedule> {
        self.validate()?;
        RateSchedule::periodic(
            TAU,
            vec![
                RateComponent::sinusoid(1.5 * self.offset, 1.5 * self.amplitude, 1.0, 0.0),
                RateComponent::sinusoid(0.5 * self.offset, 0.5 * self.amplitude, 1.0, 0.0),
            ],
        )
    }

    /// `int_0^t q`.
    pub fn integral(&self, t: f64) -> f64 {
        self.offset * t + self.amplitude * (1.0 - t.cos())
    }

    /// Constant limit `x_1` on the level set `s`.
    pub fn limit_x1(s: f64) -> f64 {
        s / 2.0 - 1.0 + half_root(s)
    }
}

fn half_root(s: f64) -> f64 {
    (3.0 + (s - 1.0) * (s - 1.0)).sqrt() / 2.0
}

/// Closed-form two-site solution under [`TwoSiteDrive`]. Requires
/// `x_1(0)^2 < s/2`.
pub fn analytic_periodic_n2(a: &OccupancyState, drive: &TwoSiteDrive, t: f64) -> Result<OccupancyState> {
    drive.validate()?;
    if a.len() != 2 {
        return Err(Error::domain(format!("closed form needs n = 2, got n = {}", a.len())));
    }
    let x = a.as_slice();
    let s = x[0] + x[1];
    if x[0] * x[0] >= s / 2.0 {
        return Err(Error::domain(format!(
            "x1(0)^2 = {} must be below s/2 = {}",
            x[0] * x[0],
            s / 2.0
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time {t} must be nonnegative")));
    }
    let z = half_root(s);
    // y = x1 - (s/2 - 1) obeys dy/dt = q (z^2 - y^2); y(0) > 0 always
    let y0 = x[0] + 1.0 - s / 2.0;
    let tau = z * drive.integral(t);
    let ratio = y0 / z;
    let y = if ratio < 1.0 {
        z * (ratio.atanh() + tau).tanh()
    } else if ratio > 1.0 {
        let k = 0.5 * ((ratio + 1.0) / (ratio - 1.0)).ln();
        z / (k + tau).tanh()
    } else {
        z
    };
    let x1 = s / 2.0 - 1.0 + y;
    OccupancyState::new(vec![x1, s - x1])
}
