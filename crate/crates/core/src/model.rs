//! The ring flow model: state space, transition-rate schedules, the vector
//! field, its Jacobian and the conserved total occupancy.
//!
//! Site `i` (0-based here, 1-based in every file format) receives particles
//! from site `i-1` and passes them on to site `i+1`, indices taken modulo `n`:
//!
//! ```text
//! dx_i/dt = lam_{i-1} x_{i-1} (1 - x_i) - lam_i x_i (1 - x_{i+1})
//! ```

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries within this distance outside `[0, 1]` are clamped on ingestion.
pub const CLAMP_EPS: f64 = 1e-12;

/// A point of the closed unit cube `C^n`, `n >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OccupancyState(Vec<f64>);

impl OccupancyState {
    /// Validates and clamps `values` per the round-off policy: entries in
    /// `[-CLAMP_EPS, 1 + CLAMP_EPS]` are clamped, anything further out is rejected.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::config(format!(
                "a ring needs at least 2 sites, got {}",
                values.len()
            )));
        }
        let mut values = values;
        clamp_into_cube(&mut values)?;
        Ok(OccupancyState(values))
    }

    pub fn uniform(n: usize, level: f64) -> Result<Self> {
        Self::new(vec![level; n])
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::uniform(n, 0.0)
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::uniform(n, 1.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Total occupancy `1' x`.
    pub fn total(&self) -> f64 {
        total_occupancy(self)
    }

    /// Coordinate average, the consensus value of the homogeneous ring.
    /// Shifted by the first entry so constant states average exactly.
    pub fn average(&self) -> f64 {
        let x0 = self.0[0];
        x0 + self.0.iter().map(|v| v - x0).sum::<f64>() / self.len() as f64
    }
}

impl TryFrom<Vec<f64>> for OccupancyState {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        OccupancyState::new(values)
    }
}

impl From<OccupancyState> for Vec<f64> {
    fn from(state: OccupancyState) -> Self {
        state.0
    }
}

impl AsRef<[f64]> for OccupancyState {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn clamp_into_cube(values: &mut [f64]) -> Result<()> {
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() || *v < -CLAMP_EPS || *v > 1.0 + CLAMP_EPS {
            return Err(Error::domain(format!(
                "site {} has occupancy {} outside [0, 1]",
                i + 1,
                v
            )));
        }
        *v = v.clamp(0.0, 1.0);
    }
    Ok(())
}

/// One time-varying rate of a periodic schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RateComponent {
    /// `offset + amplitude * sin(angular_frequency * t + phase)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    /// `values[k]` on `[breakpoints[k], breakpoints[k+1])` within each period;
    /// `breakpoints[0]` must be 0.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl RateComponent {
    pub fn constant(value: f64) -> Self {
        RateComponent::Sinusoid {
            offset: value,
            amplitude: 0.0,
            angular_frequency: 0.0,
            phase: 0.0,
        }
    }

    pub fn sinusoid(offset: f64, amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        RateComponent::Sinusoid {
            offset,
            amplitude,
            angular_frequency,
            phase,
        }
    }

    pub fn eval(&self, t: f64, period: f64) -> f64 {
        match self {
            RateComponent::Sinusoid {
                offset,
                amplitude,
                angular_frequency,
                phase,
            } => offset + amplitude * (angular_frequency * t + phase).sin(),
            RateComponent::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let tau = t.rem_euclid(period);
                let k = breakpoints.partition_point(|&b| b <= tau);
                values[k.saturating_sub(1)]
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            RateComponent::Sinusoid {
                offset, amplitude, ..
            } => (offset - amplitude.abs(), offset + amplitude.abs()),
            RateComponent::PiecewiseConstant { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }

    fn validate(&self, site: usize, period: f64) -> Result<()> {
        match self {
            RateComponent::Sinusoid {
                offset,
                amplitude,
                angular_frequency,
                phase,
            } => {
                if ![offset, amplitude, angular_frequency, phase]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::config(format!("rate {site}: non-finite parameter")));
                }
                if *amplitude != 0.0 && *angular_frequency != 0.0 {
                    let cycles = angular_frequency.abs() * period / TAU;
                    if (cycles - cycles.round()).abs() > 1e-9 * cycles.max(1.0) || cycles < 0.5 {
                        return Err(Error::config(format!(
                            "rate {site}: angular frequency {angular_frequency} is not a multiple of 2*pi/{period}"
                        )));
                    }
                }
            }
            RateComponent::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return Err(Error::config(format!(
                        "rate {site}: piecewise table needs matching, non-empty breakpoints and values"
                    )));
                }
                if breakpoints[0] != 0.0 {
                    return Err(Error::config(format!(
                        "rate {site}: first breakpoint must be 0"
                    )));
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0])
                    || breakpoints.last().is_some_and(|&b| b >= period)
                {
                    return Err(Error::config(format!(
                        "rate {site}: breakpoints must increase strictly within [0, {period})"
                    )));
                }
            }
        }
        let (lo, hi) = self.bounds();
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::config(format!(
                "rate {site} must stay strictly positive (lower bound {lo})"
            )));
        }
        Ok(())
    }
}

/// Transition rates `lam_1..lam_n`, either constant or sharing a period `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSchedule {
    Constant { rates: Vec<f64> },
    Periodic {
        period: f64,
        components: Vec<RateComponent>,
    },
}

impl RateSchedule {
    pub fn constant(rates: Vec<f64>) -> Result<Self> {
        let schedule = RateSchedule::Constant { rates };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn homogeneous(n: usize, rate: f64) -> Result<Self> {
        Self::constant(vec![rate; n])
    }

    pub fn periodic(period: f64, components: Vec<RateComponent>) -> Result<Self> {
        let schedule = RateSchedule::Periodic { period, components };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RateSchedule::Constant { rates } => {
                if rates.len() < 2 {
                    return Err(Error::config("a ring needs at least 2 rates"));
                }
                if let Some((i, r)) = rates
                    .iter()
                    .enumerate()
                    .find(|(_, r)| !(r.is_finite() && **r > 0.0))
                {
                    return Err(Error::config(format!(
                        "rate {} = {} is not strictly positive",
                        i + 1,
                        r
                    )));
                }
            }
            RateSchedule::Periodic { period, components } => {
                if components.len() < 2 {
                    return Err(Error::config("a ring needs at least 2 rates"));
                }
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::config(format!("period {period} must be positive")));
                }
                for (i, c) in components.iter().enumerate() {
                    c.validate(i + 1, *period)?;
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        match self {
            RateSchedule::Constant { rates } => rates.len(),
            RateSchedule::Periodic { components, .. } => components.len(),
        }
    }

    /// Declared common period; `None` for constant schedules.
    pub fn period(&self) -> Option<f64> {
        match self {
            RateSchedule::Constant { .. } => None,
            RateSchedule::Periodic { period, .. } => Some(*period),
        }
    }

    pub fn constant_rates(&self) -> Option<&[f64]> {
        match self {
            RateSchedule::Constant { rates } => Some(rates),
            RateSchedule::Periodic { .. } => None,
        }
    }

    /// The common rate when all constant rates are equal.
    pub fn homogeneous_rate(&self) -> Option<f64> {
        let rates = self.constant_rates()?;
        rates.iter().all(|&r| r == rates[0]).then_some(rates[0])
    }

    /// Lower and upper bounds `(delta1, delta2)` over all sites and times.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            RateSchedule::Constant { rates } => rates
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
            RateSchedule::Periodic { components, .. } => components
                .iter()
                .map(RateComponent::bounds)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (l, h)| {
                    (lo.min(l), hi.max(h))
                }),
        }
    }

    pub fn fill_rates(&self, t: f64, out: &mut [f64]) {
        match self {
            RateSchedule::Constant { rates } => out.copy_from_slice(rates),
            RateSchedule::Periodic { period, components } => {
                for (o, c) in out.iter_mut().zip(components) {
                    *o = c.eval(t, *period);
                }
            }
        }
    }

    pub fn rates_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.fill_rates(t, &mut out);
        out
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::config(format!(
                "state has {} sites but the schedule has {} rates",
                n,
                self.n()
            )));
        }
        Ok(())
    }
}

/// Per-edge particle fluxes `r_{i,i+1} = lam_i x_i (1 - x_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowProfile(Vec<f64>);

impl FlowProfile {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[inline]
fn edge_flow(x: &[f64], rates: &[f64], i: usize) -> f64 {
    let next = if i + 1 == x.len() { 0 } else { i + 1 };
    rates[i] * x[i] * (1.0 - x[next])
}

/// Allocation-free right-hand side on raw slices; all lengths must agree.
pub(crate) fn field_into(x: &[f64], rates: &[f64], out: &mut [f64]) {
    let n = x.len();
    let mut inflow = edge_flow(x, rates, n - 1);
    for i in 0..n {
        let outflow = edge_flow(x, rates, i);
        out[i] = inflow - outflow;
        inflow = outflow;
    }
}

pub fn vector_field(x: &OccupancyState, rates: &RateSchedule, t: f64) -> Result<Vec<f64>> {
    rates.check_dim(x.len())?;
    let lam = rates.rates_at(t);
    let mut out = vec![0.0; x.len()];
    field_into(x.as_slice(), &lam, &mut out);
    Ok(out)
}

pub fn total_occupancy(x: &OccupancyState) -> f64 {
    x.as_slice().iter().sum()
}

pub fn flow_profile(x: &OccupancyState, rates: &RateSchedule, t: f64) -> Result<FlowProfile> {
    rates.check_dim(x.len())?;
    let lam = rates.rates_at(t);
    let x = x.as_slice();
    Ok(FlowProfile((0..x.len()).map(|i| edge_flow(x, &lam, i)).collect()))
}

pub(crate) fn jacobian_of(x: &[f64], lam: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    // d(edge flow i)/dx_i and d(edge flow i)/dx_{i+1}, scattered into rows i and i+1.
    for i in 0..n {
        let next = (i + 1) % n;
        let d_own = lam[i] * (1.0 - x[next]);
        let d_next = -lam[i] * x[i];
        jac[(i, i)] -= d_own;
        jac[(i, next)] -= d_next;
        jac[(next, i)] += d_own;
        jac[(next, next)] += d_next;
    }
    jac
}

/// Jacobian of the vector field; every column sums to zero and the
/// off-diagonal part is nonnegative on `C^n`.
pub fn jacobian(x: &OccupancyState, rates: &RateSchedule, t: f64) -> Result<DMatrix<f64>> {
    rates.check_dim(x.len())?;
    Ok(jacobian_of(x.as_slice(), &rates.rates_at(t)))
}
