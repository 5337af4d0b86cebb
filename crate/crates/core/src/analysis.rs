//! Equilibria on level sets, closed-form two-site solutions, contraction
//! diagnostics and the spectrum of the linearized homogeneous ring.

use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate_to_equilibrium, IntegrationConfig};
use crate::model::{OccupancyState, RateSchedule, CLAMP_EPS};

/// An equilibrium `e` on the level set `1' e = s` with its common edge flux `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub e: OccupancyState,
    pub s: f64,
    pub r: f64,
    pub rates: RateSchedule,
}

/// Serialized form of a solved equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub n: usize,
    pub rates: Vec<f64>,
    pub s: f64,
    pub e: Vec<f64>,
    pub r: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub point: EquilibriumPoint,
    /// Sup-norm of the Newton residual at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

impl EquilibriumSolution {
    pub fn report(&self) -> EquilibriumReport {
        let p = &self.point;
        EquilibriumReport {
            n: p.e.len(),
            rates: p.rates.constant_rates().unwrap_or_default().to_vec(),
            s: p.s,
            e: p.e.as_slice().to_vec(),
            r: p.r,
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

/// Two-phase equilibrium solver: integrate towards the level set's attractor
/// for a warm start, then polish with damped Newton on
/// `F(e) = [r_1 - r_2, ..., r_{n-1} - r_n, 1'e - s]`.
#[derive(Debug, Clone)]
pub struct EquilibriumSolver {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Field norm at which the warm-start integration hands over to Newton.
    pub warm_start_settle: f64,
}

impl Default for EquilibriumSolver {
    fn default() -> Self {
        EquilibriumSolver {
            tol: 1e-12,
            max_iterations: 50,
            max_halvings: 30,
            warm_start_settle: 1e-6,
        }
    }
}

struct NewtonOutcome {
    e: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn level_residual(e: &[f64], lam: &[f64], s: f64, out: &mut [f64]) {
    let n = e.len();
    let flux = |i: usize| lam[i] * e[i] * (1.0 - e[(i + 1) % n]);
    for i in 0..n - 1 {
        out[i] = flux(i) - flux(i + 1);
    }
    out[n - 1] = e.iter().sum::<f64>() - s;
}

fn level_residual_jacobian(e: &[f64], lam: &[f64]) -> DMatrix<f64> {
    let n = e.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        let (i1, i2) = (i + 1, (i + 2) % n);
        jac[(i, i)] += lam[i] * (1.0 - e[i1]);
        jac[(i, i1)] += -lam[i] * e[i] - lam[i1] * (1.0 - e[i2]);
        jac[(i, i2)] += lam[i1] * e[i1];
    }
    for j in 0..n {
        jac[(n - 1, j)] = 1.0;
    }
    jac
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl EquilibriumSolver {
    pub fn new(tol: f64) -> Self {
        EquilibriumSolver {
            tol,
            ..Default::default()
        }
    }

    fn newton(&self, start: &[f64], lam: &[f64], s: f64) -> NewtonOutcome {
        let n = start.len();
        let mut e = start.to_vec();
        let mut res = vec![0.0; n];
        let mut trial_res = vec![0.0; n];
        level_residual(&e, lam, s, &mut res);
        let mut norm = sup(&res);
        let target = self.tol * 1e-2;
        let mut iterations = 0;
        while norm > target && iterations < self.max_iterations {
            iterations += 1;
            let jac = level_residual_jacobian(&e, lam);
            let rhs = -DVector::from_column_slice(&res);
            let Some(step) = jac.lu().solve(&rhs) else {
                break;
            };
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=self.max_halvings {
                let trial: Vec<f64> = e.iter().zip(step.iter()).map(|(x, d)| x + alpha * d).collect();
                let inside = trial.iter().all(|v| (-CLAMP_EPS..=1.0 + CLAMP_EPS).contains(v));
                if inside {
                    level_residual(&trial, lam, s, &mut trial_res);
                    let trial_norm = sup(&trial_res);
                    if trial_norm < norm {
                        e = trial;
                        std::mem::swap(&mut res, &mut trial_res);
                        norm = trial_norm;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        NewtonOutcome {
            e,
            residual: norm,
            iterations,
            converged: norm <= self.tol,
        }
    }

    fn warm_start(&self, start: &OccupancyState, rates: &RateSchedule, horizon: f64) -> Result<Vec<f64>> {
        let cfg = IntegrationConfig::new(horizon, horizon / 1000.0);
        match integrate_to_equilibrium(start, rates, &cfg, self.warm_start_settle) {
            Ok((state, _)) => Ok(state.into_vec()),
            Err(Error::Timeout { best, .. }) => Ok(best.into_vec()),
            Err(e) => Err(e),
        }
    }

    /// Equilibrium on the level set `1'e = s`.
    pub fn solve(&self, rates: &RateSchedule, s: f64) -> Result<EquilibriumSolution> {
        let n = rates.n();
        let start = OccupancyState::uniform(n, (s / n as f64).clamp(0.0, 1.0))?;
        self.solve_inner(rates, s, start)
    }

    /// Equilibrium on the level set through `start`, warm-started from `start`.
    pub fn solve_from(&self, rates: &RateSchedule, start: &OccupancyState) -> Result<EquilibriumSolution> {
        self.solve_inner(rates, start.total(), start.clone())
    }

    fn solve_inner(&self, rates: &RateSchedule, s: f64, start: OccupancyState) -> Result<EquilibriumSolution> {
        rates.validate()?;
        let lam = rates
            .constant_rates()
            .ok_or_else(|| Error::config("equilibria need constant rates"))?
            .to_vec();
        let n = lam.len();
        if start.len() != n {
            return Err(Error::config(format!(
                "warm start has {} sites but the schedule has {} rates",
                start.len(),
                n
            )));
        }
        if !(s.is_finite() && (0.0..=n as f64).contains(&s)) {
            return Err(Error::domain(format!("level {s} outside [0, {n}]")));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("tolerance {} must be positive", self.tol)));
        }
        if s == 0.0 || s == n as f64 {
            return Ok(EquilibriumSolution {
                point: EquilibriumPoint {
                    e: OccupancyState::uniform(n, s / n as f64)?,
                    s,
                    r: 0.0,
                    rates: rates.clone(),
                },
                residual: 0.0,
                iterations: 0,
            });
        }

        let slowest = lam.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut iterations = 0;
        let mut outcome = None;
        for horizon in [200.0 / slowest, 5000.0 / slowest] {
            let warm = self.warm_start(&start, rates, horizon)?;
            let attempt = self.newton(&warm, &lam, s);
            iterations += attempt.iterations;
            let done = attempt.converged;
            outcome = Some(attempt);
            if done {
                break;
            }
        }
        let outcome = outcome.expect("at least one attempt");
        if !outcome.converged {
            return Err(Error::Numerical {
                message: format!("Newton did not converge on level {s} after extended integration"),
                residual: outcome.residual,
            });
        }
        let e = OccupancyState::new(outcome.e)?;
        let point = equilibrium_point(e, s, rates.clone(), &lam);
        check_equilibrium(&point, &lam, self.tol)?;
        Ok(EquilibriumSolution {
            point,
            residual: outcome.residual,
            iterations,
        })
    }
}

fn equilibrium_point(e: OccupancyState, s: f64, rates: RateSchedule, lam: &[f64]) -> EquilibriumPoint {
    let x = e.as_slice();
    let n = x.len();
    let r = (0..n).map(|i| lam[i] * x[i] * (1.0 - x[(i + 1) % n])).sum::<f64>() / n as f64;
    EquilibriumPoint { e, s, r, rates }
}

fn check_equilibrium(p: &EquilibriumPoint, lam: &[f64], tol: f64) -> Result<()> {
    let x = p.e.as_slice();
    let n = x.len();
    let sum_err = (p.e.total() - p.s).abs();
    let flux_err = (0..n)
        .map(|i| (lam[i] * x[i] * (1.0 - x[(i + 1) % n]) - p.r).abs())
        .fold(0.0, f64::max);
    let worst = sum_err.max(flux_err);
    if worst > tol {
        return Err(Error::Numerical {
            message: "equilibrium conditions violated after solve".into(),
            residual: worst,
        });
    }
    Ok(())
}

/// Unique equilibrium of an autonomous ring on the level set `1'e = s`.
pub fn solve_equilibrium(rates: &RateSchedule, s: f64, tol: f64) -> Result<EquilibriumSolution> {
    EquilibriumSolver::new(tol).solve(rates, s)
}

/// True iff `e_s` lies strictly below `e_p` in every coordinate, by more than `tol`.
pub fn equilibrium_ordering_check(rates: &RateSchedule, s: f64, p: f64, tol: f64) -> Result<bool> {
    if !(s < p) {
        return Err(Error::domain(format!("ordering check needs s < p, got s={s}, p={p}")));
    }
    let solver = EquilibriumSolver::default();
    let low = solver.solve(rates, s)?;
    let high = solver.solve(rates, p)?;
    Ok(low
        .point
        .e
        .as_slice()
        .iter()
        .zip(high.point.e.as_slice())
        .all(|(a, b)| b - a > tol))
}

/// Which closed form applies to a two-site Riccati solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiccatiBranch {
    /// `|2 alpha2 x1(0) + alpha1| > sqrt(delta)`: the coth form with real `t0`.
    Coth,
    /// `|2 alpha2 x1(0) + alpha1| < sqrt(delta)`: the tanh form.
    Tanh,
    /// Initial state already on the equilibrium.
    Stationary,
}

/// Coefficients of the two-site Riccati equation
/// `dx1/dt = alpha2 x1^2 + alpha1 x1 + alpha0` and its integration constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Riccati2Params {
    pub alpha2: f64,
    pub alpha1: f64,
    pub alpha0: f64,
    pub discriminant: f64,
    pub t0: f64,
    pub s: f64,
    pub x1_initial: f64,
    pub branch: RiccatiBranch,
}

/// `|sqrt(delta) (t - t0)|` below this switches to the exponential form.
const SINGULAR_ARG: f64 = 1e-6;

impl Riccati2Params {
    pub fn new(a: &OccupancyState, lambda1: f64, lambda2: f64) -> Result<Self> {
        check_two_site(a, lambda1, lambda2)?;
        if lambda1 == lambda2 {
            return Err(Error::domain("equal rates give a linear equation, not a Riccati equation"));
        }
        let x = a.as_slice();
        let s = x[0] + x[1];
        let alpha2 = lambda2 - lambda1;
        let alpha1 = (lambda1 - lambda2) * s - lambda1 - lambda2;
        let alpha0 = s * lambda2;
        let discriminant = alpha1 * alpha1 - 4.0 * alpha2 * alpha0;
        let root = discriminant.sqrt();
        let y = (2.0 * x[0] * alpha2 + alpha1) / root;
        let (branch, t0) = if y.abs() > 1.0 {
            (RiccatiBranch::Coth, 2.0 / root * arcoth(y))
        } else if y.abs() < 1.0 {
            (RiccatiBranch::Tanh, 2.0 / root * y.atanh())
        } else {
            (RiccatiBranch::Stationary, 0.0)
        };
        Ok(Riccati2Params {
            alpha2,
            alpha1,
            alpha0,
            discriminant,
            t0,
            s,
            x1_initial: x[0],
            branch,
        })
    }

    /// Attracting root `(-alpha1 - sqrt(delta)) / (2 alpha2)`, written in a
    /// cancellation-free form.
    pub fn limit_x1(&self) -> f64 {
        2.0 * self.alpha0 / (self.discriminant.sqrt() - self.alpha1)
    }

    pub fn x1(&self, t: f64) -> f64 {
        let root = self.discriminant.sqrt();
        let arg = root * (t - self.t0) / 2.0;
        let ill_conditioned = self.alpha2.abs() < 1e-6 * root;
        match self.branch {
            RiccatiBranch::Stationary => self.x1_initial,
            RiccatiBranch::Coth if arg.abs() >= SINGULAR_ARG / 2.0 && !ill_conditioned => {
                (-self.alpha1 - root / arg.tanh()) / (2.0 * self.alpha2)
            }
            RiccatiBranch::Tanh if !ill_conditioned => {
                (-self.alpha1 - root * arg.tanh()) / (2.0 * self.alpha2)
            }
            _ => self.x1_exponential(t),
        }
    }

    /// Same solution written as `x* + w0 E / (1 - alpha2 w0 (1 - E) / sqrt(delta))`
    /// with `E = exp(-sqrt(delta) t)`; finite wherever the state stays in the cube.
    pub fn x1_exponential(&self, t: f64) -> f64 {
        let root = self.discriminant.sqrt();
        let limit = self.limit_x1();
        let w0 = self.x1_initial - limit;
        let decay = (-root * t).exp();
        limit + w0 * decay / (1.0 - self.alpha2 * w0 * (1.0 - decay) / root)
    }
}

fn arcoth(y: f64) -> f64 {
    0.5 * ((y + 1.0) / (y - 1.0)).ln()
}

fn check_two_site(a: &OccupancyState, lambda1: f64, lambda2: f64) -> Result<()> {
    if a.len() != 2 {
        return Err(Error::domain(format!("closed forms need n = 2, got n = {}", a.len())));
    }
    if !(lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return Err(Error::config(format!(
            "rates ({lambda1}, {lambda2}) must be strictly positive"
        )));
    }
    let x = a.as_slice();
    if (x[0] == 0.0 && x[1] == 0.0) || (x[0] == 1.0 && x[1] == 1.0) {
        return Err(Error::domain("closed forms exclude the corner equilibria 0 and 1"));
    }
    Ok(())
}

/// Exact two-site solution at time `t >= 0`.
pub fn closed_form_n2(a: &OccupancyState, lambda1: f64, lambda2: f64, t: f64) -> Result<OccupancyState> {
    check_two_site(a, lambda1, lambda2)?;
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time {t} must be nonnegative")));
    }
    let x = a.as_slice();
    let s = x[0] + x[1];
    let x1 = if lambda1 == lambda2 {
        let decay = (-2.0 * lambda1 * t).exp();
        s / 2.0 * (1.0 - decay) + x[0] * decay
    } else {
        Riccati2Params::new(a, lambda1, lambda2)?.x1(t)
    };
    OccupancyState::new(vec![x1, s - x1])
}

/// Analytic L1 distance at time `t` between the two-site solutions from `a`
/// and `b` on a common level set.
pub fn pair_distance_n2(
    a: &OccupancyState,
    b: &OccupancyState,
    lambda1: f64,
    lambda2: f64,
    t: f64,
) -> Result<f64> {
    check_two_site(a, lambda1, lambda2)?;
    check_two_site(b, lambda1, lambda2)?;
    if (a.total() - b.total()).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "states on different level sets ({} vs {})",
            a.total(),
            b.total()
        )));
    }
    let (xa, xb) = (a.as_slice(), b.as_slice());
    let d0 = 2.0 * (xa[0] - xb[0]).abs();
    if d0 == 0.0 {
        return Ok(0.0);
    }
    if lambda1 == lambda2 {
        return Ok(d0 * (-2.0 * lambda1 * t).exp());
    }
    let s = a.total();
    let alpha1 = (lambda1 - lambda2) * s - lambda1 - lambda2;
    let discriminant = alpha1 * alpha1 - 4.0 * (lambda2 - lambda1) * s * lambda2;
    let root = discriminant.sqrt();
    let q = |z: &[f64]| ((lambda2 - lambda1) * (z[0] - z[1]) - (lambda1 + lambda2)) / root;
    let (qa, qb) = (q(xa), q(xb));
    let gamma = 0.25 * (root * t).exp() * (qa * qb + 1.0 - qa - qb)
        + 0.25 * (-root * t).exp() * (qa * qb + 1.0 + qa + qb)
        + 0.5 * (1.0 - qa * qb);
    Ok(d0 / gamma.abs())
}

/// Linearization of the unit-rate homogeneous ring around `c 1_n` and its
/// circulant spectrum, indexed `l = 1..n` as `eigenvalues[l - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub q: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
}

pub fn hrfmr_linearization(n: usize, c: f64) -> Result<Linearization> {
    if n < 2 {
        return Err(Error::domain(format!("ring size {n} must be at least 2")));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::domain(format!("level {c} outside [0, 1]")));
    }
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        q[(i, i)] += -1.0;
        q[(i, (i + 1) % n)] += c;
        q[(i, (i + n - 1) % n)] += 1.0 - c;
    }
    let w = |k: usize| Complex::from_polar(1.0, TAU * (k % n) as f64 / n as f64);
    let eigenvalues = (0..n)
        .map(|l| Complex::new(-1.0, 0.0) + w(l) * c + w(l * (n - 1)) * (1.0 - c))
        .collect();
    Ok(Linearization { q, eigenvalues })
}

/// `cos(2 pi (n-1) / n) - 1`: real part of the slowest nonzero mode of the
/// unit-rate homogeneous ring. Requires `n >= 2`.
pub fn linearized_rate(n: usize) -> f64 {
    (TAU * (n as f64 - 1.0) / n as f64).cos() - 1.0
}

/// Matrix measure induced by the L1 norm: the largest column sum with
/// off-diagonal entries taken in absolute value.
pub fn l1_matrix_measure(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "matrix measure needs a square matrix");
    (0..m.ncols())
        .map(|j| {
            (0..m.nrows())
                .map(|i| if i == j { m[(i, j)] } else { m[(i, j)].abs() })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
