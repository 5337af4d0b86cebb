//! Explicit Runge-Kutta integration of the ring model and of any other
//! [`OdeSystem`].
//!
//! Two methods are provided: classical fixed-step RK4 and the Dormand-Prince
//! 5(4) embedded pair with standard step-size control. Output is sampled on
//! a fixed grid `0, dt, 2 dt, ..., t_end`; the adaptive method shortens the
//! step that would overshoot a sample time, so samples are exact grid points.
//!
//! Runge-Kutta methods preserve linear first integrals, so the total
//! occupancy is conserved up to round-off. The drift is monitored on every
//! sample and a run fails if it exceeds `CONSERVATION_TOL_PER_SITE * n`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export;
use crate::model::{clamp_into_cube, field_into, OccupancyState, RateSchedule};

pub const CONSERVATION_TOL_PER_SITE: f64 = 1e-9;
pub const DEFAULT_SETTLE_TOL: f64 = 1e-10;

/// Right-hand side `dy/dt = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]);
}

/// The ring model driven by a rate schedule.
pub struct RingSystem<'a> {
    rates: &'a RateSchedule,
    lam: Vec<f64>,
}

impl<'a> RingSystem<'a> {
    pub fn new(rates: &'a RateSchedule) -> Self {
        RingSystem {
            rates,
            lam: vec![0.0; rates.n()],
        }
    }
}

impl OdeSystem for RingSystem<'_> {
    fn dim(&self) -> usize {
        self.lam.len()
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.rates.fill_rates(t, &mut self.lam);
        field_into(y, &self.lam, dy);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4 { step: f64 },
    /// Dormand-Prince 5(4) with relative and absolute error tolerances.
    Rk45 { rtol: f64, atol: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Rk45 {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub method: Method,
    pub t_end: f64,
    /// Spacing of the stored samples.
    pub sample_interval: f64,
    /// Upper bound on accepted plus rejected steps.
    pub max_steps: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            method: Method::default(),
            t_end: 10.0,
            sample_interval: 0.01,
            max_steps: 10_000_000,
        }
    }
}

impl IntegrationConfig {
    pub fn new(t_end: f64, sample_interval: f64) -> Self {
        IntegrationConfig {
            t_end,
            sample_interval,
            ..Default::default()
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.t_end) {
            return Err(Error::config(format!("horizon {} must be positive", self.t_end)));
        }
        if !positive(self.sample_interval) {
            return Err(Error::config(format!(
                "sample interval {} must be positive",
                self.sample_interval
            )));
        }
        match self.method {
            Method::Rk4 { step } if !positive(step) => {
                Err(Error::config(format!("step {step} must be positive")))
            }
            Method::Rk45 { rtol, atol } if !positive(rtol) || !positive(atol) => Err(
                Error::config(format!("tolerances rtol={rtol}, atol={atol} must be positive")),
            ),
            _ => Ok(()),
        }
    }

    /// `0, dt, 2 dt, ...` followed by `t_end` itself.
    pub fn sample_times(&self) -> Vec<f64> {
        let m = (self.t_end / self.sample_interval - 1e-9).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..m).map(|k| k as f64 * self.sample_interval).collect();
        times.push(self.t_end);
        times
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Incremental integrator that can be advanced to successive target times
/// while keeping its adaptive step size between calls.
pub struct Stepper<S> {
    system: S,
    method: Method,
    t: f64,
    y: Vec<f64>,
    /// Derivative at `(t, y)`, reused as the first stage (FSAL).
    f: Vec<f64>,
    h: Option<f64>,
    k: [Vec<f64>; 6],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    steps: usize,
    max_steps: usize,
}

impl<S: OdeSystem> Stepper<S> {
    pub fn new(mut system: S, method: Method, t0: f64, y0: Vec<f64>, max_steps: usize) -> Self {
        let n = system.dim();
        assert_eq!(y0.len(), n, "initial state has the wrong dimension");
        let mut f = vec![0.0; n];
        system.rhs(t0, &y0, &mut f);
        Stepper {
            system,
            method,
            t: t0,
            y: y0,
            f,
            h: None,
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            steps: 0,
            max_steps,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Derivative at the current time and state.
    pub fn derivative(&self) -> &[f64] {
        &self.f
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Integrates forward to exactly `t_target`; the error string explains
    /// why the run had to stop.
    pub fn advance_to(&mut self, t_target: f64) -> std::result::Result<(), String> {
        if t_target <= self.t {
            return Ok(());
        }
        match self.method {
            Method::Rk4 { step } => self.advance_rk4(t_target, step),
            Method::Rk45 { rtol, atol } => self.advance_dopri(t_target, rtol, atol),
        }
    }

    fn count_step(&mut self) -> std::result::Result<(), String> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(format!("step budget of {} exhausted", self.max_steps));
        }
        Ok(())
    }

    fn advance_rk4(&mut self, t_target: f64, step: f64) -> std::result::Result<(), String> {
        let span = t_target - self.t;
        let m = (span / step - 1e-9).ceil().max(1.0) as usize;
        let h = span / m as f64;
        let t_start = self.t;
        let n = self.y.len();
        for j in 0..m {
            self.count_step()?;
            let t = t_start + j as f64 * h;
            // k[0] = f(t, y) is already in self.f
            for i in 0..n {
                self.stage[i] = self.y[i] + 0.5 * h * self.f[i];
            }
            self.system.rhs(t + 0.5 * h, &self.stage, &mut self.k[1]);
            for i in 0..n {
                self.stage[i] = self.y[i] + 0.5 * h * self.k[1][i];
            }
            self.system.rhs(t + 0.5 * h, &self.stage, &mut self.k[2]);
            for i in 0..n {
                self.stage[i] = self.y[i] + h * self.k[2][i];
            }
            self.system.rhs(t + h, &self.stage, &mut self.k[3]);
            for i in 0..n {
                self.y[i] += h / 6.0
                    * (self.f[i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
            }
            self.t = if j + 1 == m { t_target } else { t + h };
            self.system.rhs(self.t, &self.y, &mut self.f);
            if self.y.iter().any(|v| !v.is_finite()) {
                return Err("state became non-finite".into());
            }
        }
        Ok(())
    }

    fn weighted_rms(&self, v: &[f64], rtol: f64, atol: f64) -> f64 {
        let sum: f64 = v
            .iter()
            .zip(&self.y)
            .map(|(vi, yi)| (vi / (atol + rtol * yi.abs())).powi(2))
            .sum();
        (sum / v.len() as f64).sqrt()
    }

    fn initial_step(&mut self, rtol: f64, atol: f64) -> f64 {
        let d0 = self.weighted_rms(&self.y, rtol, atol);
        let d1 = self.weighted_rms(&self.f, rtol, atol);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        for i in 0..self.y.len() {
            self.stage[i] = self.y[i] + h0 * self.f[i];
        }
        self.system.rhs(self.t + h0, &self.stage, &mut self.k[1]);
        let diff: Vec<f64> = self.k[1].iter().zip(&self.f).map(|(a, b)| a - b).collect();
        let d2 = self.weighted_rms(&diff, rtol, atol) / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// One Dormand-Prince trial step of size `h`; writes the fifth-order
    /// solution into `y_new`, the last stage into `k[5]` and returns the
    /// scaled error norm.
    fn dopri_trial(&mut self, h: f64, rtol: f64, atol: f64) -> f64 {
        let n = self.y.len();
        let t = self.t;
        let (y, f) = (&self.y, &self.f);
        let [k2, k3, k4, k5, k6, k7] = &mut self.k;
        let stage = &mut self.stage;
        for i in 0..n {
            stage[i] = y[i] + h * A21 * f[i];
        }
        self.system.rhs(t + C2 * h, stage, k2);
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * f[i] + A32 * k2[i]);
        }
        self.system.rhs(t + C3 * h, stage, k3);
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * f[i] + A42 * k2[i] + A43 * k3[i]);
        }
        self.system.rhs(t + C4 * h, stage, k4);
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * f[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        self.system.rhs(t + C5 * h, stage, k5);
        for i in 0..n {
            stage[i] = y[i]
                + h * (A61 * f[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        self.system.rhs(t + h, stage, k6);
        for i in 0..n {
            self.y_new[i] =
                y[i] + h * (B1 * f[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        self.system.rhs(t + h, &self.y_new, k7);
        let mut sum = 0.0;
        for i in 0..n {
            let err = h
                * (E1 * f[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = atol + rtol * y[i].abs().max(self.y_new[i].abs());
            sum += (err / scale).powi(2);
        }
        (sum / n as f64).sqrt()
    }

    fn advance_dopri(
        &mut self,
        t_target: f64,
        rtol: f64,
        atol: f64,
    ) -> std::result::Result<(), String> {
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(rtol, atol),
        };
        while self.t < t_target {
            self.count_step()?;
            let remaining = t_target - self.t;
            let clipped = h >= remaining;
            let h_try = if clipped { remaining } else { h };
            let err = self.dopri_trial(h_try, rtol, atol);
            if err.is_finite() && err <= 1.0 {
                self.t = if clipped { t_target } else { self.t + h_try };
                std::mem::swap(&mut self.y, &mut self.y_new);
                std::mem::swap(&mut self.f, &mut self.k[5]);
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let proposal = h_try * factor;
                h = if clipped { h.max(proposal) } else { proposal };
            } else {
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
                } else {
                    0.2
                };
                h = h_try * factor;
                if h < 1e-14 * self.t.abs().max(1.0) {
                    self.h = Some(h);
                    return Err(format!("step size underflow (h = {h:e})"));
                }
            }
        }
        self.h = Some(h);
        Ok(())
    }
}

/// A sampled solution of the ring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<OccupancyState>,
    pub rates: RateSchedule,
    pub config: IntegrationConfig,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.rates.n()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &OccupancyState {
        self.states.last().expect("trajectory always holds its initial state")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory always holds its initial time")
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &OccupancyState)> {
        self.times.iter().copied().zip(&self.states)
    }

    /// Largest deviation of the total occupancy from its initial value.
    pub fn conservation_drift(&self) -> f64 {
        let h0 = self.states[0].total();
        self.states
            .iter()
            .map(|s| (s.total() - h0).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x1,...,xn`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(export::site_columns("x", self.n()));
        let rows = self.iter().map(|(t, s)| {
            let mut row = Vec::with_capacity(s.len() + 1);
            row.push(t);
            row.extend_from_slice(s.as_slice());
            row
        });
        export::write_table(writer, &header, rows)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        export::json_string(self)
    }
}

fn check_inputs(a: &OccupancyState, rates: &RateSchedule, cfg: &IntegrationConfig) -> Result<()> {
    rates.validate()?;
    cfg.validate()?;
    if rates.n() != a.len() {
        return Err(Error::config(format!(
            "state has {} sites but the schedule has {} rates",
            a.len(),
            rates.n()
        )));
    }
    Ok(())
}

/// Integrates the ring model from `a`, sampling every `cfg.sample_interval`.
pub fn integrate(
    a: &OccupancyState,
    rates: &RateSchedule,
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    check_inputs(a, rates, cfg)?;
    let n = a.len();
    let total0 = a.total();
    let drift_tol = CONSERVATION_TOL_PER_SITE * n as f64;
    let times = cfg.sample_times();

    let mut traj = Trajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        rates: rates.clone(),
        config: cfg.clone(),
    };
    traj.times.push(0.0);
    traj.states.push(a.clone());

    let mut stepper = Stepper::new(
        RingSystem::new(rates),
        cfg.method,
        0.0,
        a.as_slice().to_vec(),
        cfg.max_steps,
    );
    for &t in &times[1..] {
        let outcome = stepper.advance_to(t).and_then(|()| {
            let y = stepper.state();
            let drift = (y.iter().sum::<f64>() - total0).abs();
            if drift > drift_tol {
                return Err(format!(
                    "total occupancy drifted by {drift:e} (limit {drift_tol:e})"
                ));
            }
            let mut y = y.to_vec();
            clamp_into_cube(&mut y).map_err(|e| e.to_string())?;
            Ok(y)
        });
        match outcome {
            Ok(y) => {
                traj.times.push(t);
                traj.states.push(OccupancyState::new(y)?);
            }
            Err(reason) => {
                return Err(Error::Integration {
                    time: stepper.time(),
                    reason,
                    partial: Some(Box::new(traj)),
                })
            }
        }
    }
    Ok(traj)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Integrates an autonomous ring until the sup-norm of the vector field drops
/// below `settle_tol` at a sample point; returns that state and its time.
pub fn integrate_to_equilibrium(
    a: &OccupancyState,
    rates: &RateSchedule,
    cfg: &IntegrationConfig,
    settle_tol: f64,
) -> Result<(OccupancyState, f64)> {
    check_inputs(a, rates, cfg)?;
    if rates.constant_rates().is_none() {
        return Err(Error::config(
            "equilibrium search needs constant rates (time-varying schedule given)",
        ));
    }
    if !(settle_tol > 0.0) {
        return Err(Error::config(format!(
            "settle tolerance {settle_tol} must be positive"
        )));
    }
    let n = a.len();
    let total0 = a.total();
    let drift_tol = CONSERVATION_TOL_PER_SITE * n as f64;

    let mut stepper = Stepper::new(
        RingSystem::new(rates),
        cfg.method,
        0.0,
        a.as_slice().to_vec(),
        cfg.max_steps,
    );
    let mut best = (sup_norm(stepper.derivative()), a.clone(), 0.0);
    if best.0 < settle_tol {
        return Ok((a.clone(), 0.0));
    }
    for &t in &cfg.sample_times()[1..] {
        if let Err(reason) = stepper.advance_to(t) {
            return Err(Error::Integration {
                time: stepper.time(),
                reason,
                partial: None,
            });
        }
        let drift = (stepper.state().iter().sum::<f64>() - total0).abs();
        if drift > drift_tol {
            return Err(Error::Integration {
                time: t,
                reason: format!("total occupancy drifted by {drift:e} (limit {drift_tol:e})"),
                partial: None,
            });
        }
        let norm = sup_norm(stepper.derivative());
        if norm < best.0 {
            best = (norm, OccupancyState::new(stepper.state().to_vec())?, t);
        }
        if norm < settle_tol {
            return Ok((best.1, t));
        }
    }
    Err(Error::Timeout {
        best: best.1,
        elapsed: cfg.t_end,
        field_norm: best.0,
    })
}

/// Samples an arbitrary system on the grid of `cfg`; returns the sample
/// times and states.
pub fn sample_system<S: OdeSystem>(
    system: S,
    y0: &[f64],
    cfg: &IntegrationConfig,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if system.dim() != y0.len() {
        return Err(Error::config(format!(
            "initial state has {} entries, system has dimension {}",
            y0.len(),
            system.dim()
        )));
    }
    let times = cfg.sample_times();
    let mut states = Vec::with_capacity(times.len());
    states.push(y0.to_vec());
    let mut stepper = Stepper::new(system, cfg.method, 0.0, y0.to_vec(), cfg.max_steps);
    for &t in &times[1..] {
        stepper.advance_to(t).map_err(|reason| Error::Integration {
            time: stepper.time(),
            reason,
            partial: None,
        })?;
        states.push(stepper.state().to_vec());
    }
    Ok((times, states))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -y[0];
        }
    }

    fn rates(v: &[f64]) -> RateSchedule {
        RateSchedule::constant(v.to_vec()).unwrap()
    }

    #[test]
    fn sample_grid_ends_on_horizon() {
        let cfg = IntegrationConfig::new(1.0, 0.25);
        assert_eq!(cfg.sample_times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let cfg = IntegrationConfig::new(1.0, 0.3);
        let times = cfg.sample_times();
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(IntegrationConfig::new(0.0, 0.1).validate().is_err());
        assert!(IntegrationConfig::new(1.0, -0.1).validate().is_err());
        let cfg = IntegrationConfig::new(1.0, 0.1).with_method(Method::Rk4 { step: 0.0 });
        assert!(cfg.validate().is_err());
        let cfg = IntegrationConfig::new(1.0, 0.1).with_method(Method::Rk45 {
            rtol: 1e-9,
            atol: 0.0,
        });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dopri_solves_exponential_decay() {
        let cfg = IntegrationConfig::new(5.0, 0.5);
        let (times, states) = sample_system(Decay, &[1.0], &cfg).unwrap();
        for (t, y) in times.iter().zip(&states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let cfg = IntegrationConfig::new(2.0, 2.0).with_method(Method::Rk4 { step: h });
            let (_, states) = sample_system(Decay, &[1.0], &cfg).unwrap();
            (states.last().unwrap()[0] - (-2.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn equilibrium_start_gives_constant_trajectory() {
        let zero = OccupancyState::zeros(5).unwrap();
        let traj = integrate(&zero, &rates(&[1.0, 2.0, 3.0, 4.0, 5.0]), &IntegrationConfig::default())
            .unwrap();
        assert!(traj.states.iter().all(|s| s == &zero));
        assert_eq!(traj.times[0], 0.0);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn settled_start_returns_immediately() {
        let a = OccupancyState::uniform(4, 0.3).unwrap();
        let (e, elapsed) = integrate_to_equilibrium(
            &a,
            &RateSchedule::homogeneous(4, 2.0).unwrap(),
            &IntegrationConfig::default(),
            DEFAULT_SETTLE_TOL,
        )
        .unwrap();
        assert_eq!(e, a);
        assert_eq!(elapsed, 0.0);
    }

    #[test]
    fn timeout_carries_best_state() {
        let a = OccupancyState::new(vec![1.0, 0.0, 0.0]).unwrap();
        let cfg = IntegrationConfig::new(0.1, 0.05);
        match integrate_to_equilibrium(&a, &rates(&[1.0, 1.0, 1.0]), &cfg, 1e-10) {
            Err(Error::Timeout { best, field_norm, .. }) => {
                assert!(field_norm > 1e-10);
                assert!((best.total() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn periodic_rates_rejected_for_equilibrium_search() {
        use crate::model::RateComponent;
        let sched = RateSchedule::periodic(
            std::f64::consts::TAU,
            vec![RateComponent::constant(1.0), RateComponent::sinusoid(2.0, 1.0, 1.0, 0.0)],
        )
        .unwrap();
        let a = OccupancyState::new(vec![0.2, 0.4]).unwrap();
        let err = integrate_to_equilibrium(&a, &sched, &IntegrationConfig::default(), 1e-10);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn step_budget_failure_keeps_partial_trajectory() {
        let a = OccupancyState::new(vec![1.0, 0.0]).unwrap();
        let mut cfg = IntegrationConfig::new(10.0, 0.5);
        cfg.max_steps = 30;
        match integrate(&a, &rates(&[2.0, 1.0]), &cfg) {
            Err(Error::Integration { partial: Some(p), .. }) => {
                assert!(!p.is_empty());
                assert_eq!(p.states[0], a);
            }
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn csv_and_json_are_deterministic() {
        let a = OccupancyState::new(vec![1.0, 0.0, 0.5]).unwrap();
        let cfg = IntegrationConfig::new(1.0, 0.25);
        let r = rates(&[2.0, 3.0, 1.0]);
        let t1 = integrate(&a, &r, &cfg).unwrap();
        let t2 = integrate(&a, &r, &cfg).unwrap();
        assert_eq!(t1.to_csv_string().unwrap(), t2.to_csv_string().unwrap());
        assert_eq!(t1.to_json_string().unwrap(), t2.to_json_string().unwrap());
        let csv = t1.to_csv_string().unwrap();
        assert!(csv.starts_with("t,x1,x2,x3\n0,1,0,0.5\n"));
        let back: Trajectory = serde_json::from_str(&t1.to_json_string().unwrap()).unwrap();
        assert_eq!(back, t1);
    }
}
