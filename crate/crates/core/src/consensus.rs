//! The homogeneous ring as a nonlinear average-consensus protocol.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::linearized_rate;
use crate::error::{Error, Result};
use crate::export::write_table;
use crate::integrator::{integrate, IntegrationConfig};
use crate::model::{flow_profile, vector_field, OccupancyState, RateSchedule};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub lambda_c: f64,
    pub initial_average: f64,
    pub terminal_state: OccupancyState,
    /// `max_i |x_i(T_end) - Ave(a)|`.
    pub consensus_error: f64,
    pub epsilon: f64,
    /// First time with `V <= epsilon`, interpolated log-linearly between samples.
    pub settle_time: Option<f64>,
    /// `lambda_c Ave(a) (1 - Ave(a))`.
    pub steady_flow: f64,
    pub terminal_flows: Vec<f64>,
    pub times: Vec<f64>,
    pub lyapunov_trace: Vec<f64>,
    /// Euclidean distance to `Ave(a) 1_n` at each sample.
    pub deviation_trace: Vec<f64>,
}

impl ConsensusReport {
    /// `(log e(T) - log e(0)) / T` for the Euclidean deviation `e`; `None`
    /// when the start is already a consensus state.
    pub fn mean_decay_exponent(&self) -> Option<f64> {
        let e0 = *self.deviation_trace.first()?;
        let (t, e) = (self.times.last()?, self.deviation_trace.last()?);
        if e0 == 0.0 || *e == 0.0 || *t == 0.0 {
            return None;
        }
        Some((e.ln() - e0.ln()) / t)
    }

    pub fn write_lyapunov_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header = ["t".to_string(), "V".to_string()];
        let rows = self.times.iter().zip(&self.lyapunov_trace).map(|(&t, &v)| [t, v]);
        write_table(writer, &header, rows)
    }

    /// `t,log_error,bound` where `bound` is the line through the initial
    /// deviation with the linearized slope `lambda_c * linearized_rate(n)`.
    pub fn write_decay_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header = ["t", "log_error", "bound"].map(String::from);
        let slope = self.lambda_c * linearized_rate(self.terminal_state.len());
        let start = self.deviation_trace.first().map_or(0.0, |e| e.ln());
        let rows = self
            .times
            .iter()
            .zip(&self.deviation_trace)
            .map(|(&t, &e)| [t, e.ln(), start + slope * t]);
        write_table(writer, &header, rows)
    }
}

/// Max-minus-min Lyapunov function; zero exactly on consensus states.
pub fn lyapunov_v(x: &OccupancyState) -> f64 {
    let (lo, hi) = x
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Horizon long enough for the slowest linear mode to decay by `e^-20`.
pub fn consensus_horizon(n: usize, lambda_c: f64) -> f64 {
    20.0 / linearized_rate(n).abs() / lambda_c
}

pub fn run_consensus(
    a: &OccupancyState,
    lambda_c: f64,
    cfg: &IntegrationConfig,
    epsilon: f64,
) -> Result<ConsensusReport> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon {epsilon} must be positive")));
    }
    let n = a.len();
    let rates = RateSchedule::homogeneous(n, lambda_c)?;
    let traj = integrate(a, &rates, cfg)?;
    let average = a.average();
    let deviation = |x: &OccupancyState| {
        x.as_slice()
            .iter()
            .map(|v| (v - average) * (v - average))
            .sum::<f64>()
            .sqrt()
    };
    let lyapunov_trace: Vec<f64> = traj.states.iter().map(lyapunov_v).collect();
    let deviation_trace = traj.states.iter().map(deviation).collect();
    let settle_time = settle_time(&traj.times, &lyapunov_trace, epsilon);
    let terminal_state = traj.last_state().clone();
    let consensus_error = terminal_state
        .as_slice()
        .iter()
        .map(|v| (v - average).abs())
        .fold(0.0, f64::max);
    let terminal_flows = flow_profile(&terminal_state, &rates, traj.last_time())?.into_vec();
    Ok(ConsensusReport {
        lambda_c,
        initial_average: average,
        terminal_state,
        consensus_error,
        epsilon,
        settle_time,
        steady_flow: lambda_c * average * (1.0 - average),
        terminal_flows,
        times: traj.times,
        lyapunov_trace,
        deviation_trace,
    })
}

fn settle_time(times: &[f64], v: &[f64], epsilon: f64) -> Option<f64> {
    let k = v.iter().position(|&x| x <= epsilon)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (t0, t1, v0, v1) = (times[k - 1], times[k], v[k - 1], v[k]);
    if v1 <= 0.0 {
        return Some(t1);
    }
    let frac = (v0.ln() - epsilon.ln()) / (v0.ln() - v1.ln());
    Some(t0 + frac * (t1 - t0))
}

/// Time derivatives at the extremal coordinates of `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalDerivatives {
    /// Largest derivative over the indices attaining the maximum.
    pub at_max: f64,
    /// Smallest derivative over the indices attaining the minimum.
    pub at_min: f64,
}

impl ExtremalDerivatives {
    pub fn signs(&self) -> (Ordering, Ordering) {
        (
            self.at_max.partial_cmp(&0.0).unwrap_or(Ordering::Equal),
            self.at_min.partial_cmp(&0.0).unwrap_or(Ordering::Equal),
        )
    }
}

pub fn extremal_derivative_check(x: &OccupancyState, lambda_c: f64) -> Result<ExtremalDerivatives> {
    let rates = RateSchedule::homogeneous(x.len(), lambda_c)?;
    let dx = vector_field(x, &rates, 0.0)?;
    let v = x.as_slice();
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let pick = |target: f64| v.iter().zip(&dx).filter(move |(&xi, _)| xi == target).map(|(_, &d)| d);
    Ok(ExtremalDerivatives {
        at_max: pick(hi).fold(f64::NEG_INFINITY, f64::max),
        at_min: pick(lo).fold(f64::INFINITY, f64::min),
    })
}
