//! Agents on a circle steered to equal spacing by a local control law whose
//! normalized gaps evolve as a homogeneous ring with rate `1/(2 pi)`.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::linearized_rate;
use crate::error::{Error, Result};
use crate::export::{site_columns, write_table};
use crate::integrator::{sample_system, IntegrationConfig, OdeSystem};
use crate::model::OccupancyState;

/// Rate of the homogeneous ring followed by the gap variables.
pub const GAP_RATE: f64 = 1.0 / TAU;

/// Slack allowed on gap bounds when checking that agents kept their order.
const ORDER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationState {
    pub thetas: Vec<f64>,
    pub radius: f64,
    /// Common angular-velocity offset added to every control.
    pub v: f64,
}

impl FormationState {
    pub fn new(thetas: Vec<f64>, radius: f64, v: f64) -> Result<Self> {
        let s = FormationState { thetas, radius, v };
        s.validate()?;
        Ok(s)
    }

    /// Equally spaced agents `theta_k = 2 pi (k-1) / n`.
    pub fn balanced(n: usize, radius: f64, v: f64) -> Result<Self> {
        Self::new((0..n).map(|k| TAU * k as f64 / n as f64).collect(), radius, v)
    }

    pub fn validate(&self) -> Result<()> {
        check_ordering(&self.thetas)?;
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config(format!("radius {} must be positive", self.radius)));
        }
        if !self.v.is_finite() {
            return Err(Error::config("velocity offset must be finite"));
        }
        Ok(())
    }
}

fn check_ordering(thetas: &[f64]) -> Result<()> {
    if thetas.len() < 2 {
        return Err(Error::config(format!("need at least 2 agents, got {}", thetas.len())));
    }
    if !thetas.iter().all(|t| t.is_finite()) {
        return Err(Error::domain("angles must be finite"));
    }
    let ordered = thetas.windows(2).all(|w| w[0] <= w[1]);
    if !ordered || thetas[0] < 0.0 || thetas[thetas.len() - 1] >= TAU {
        return Err(Error::domain("angles must satisfy 0 <= theta_1 <= ... <= theta_n < 2 pi"));
    }
    Ok(())
}

fn gaps_into(thetas: &[f64], out: &mut [f64]) {
    let n = thetas.len();
    for k in 1..n {
        out[k] = (thetas[k] - thetas[k - 1]) / TAU;
    }
    out[0] = (thetas[0] - thetas[n - 1] + TAU) / TAU;
}

/// Normalized gaps `x_1 = (theta_1 - theta_n + 2 pi) / 2 pi`,
/// `x_k = (theta_k - theta_{k-1}) / 2 pi`.
pub fn gaps_from_angles(thetas: &[f64]) -> Result<OccupancyState> {
    check_ordering(thetas)?;
    let mut x = vec![0.0; thetas.len()];
    gaps_into(thetas, &mut x);
    OccupancyState::new(x)
}

fn control_into(thetas: &[f64], v: f64, gaps: &mut [f64], u: &mut [f64]) {
    let n = thetas.len();
    gaps_into(thetas, gaps);
    for k in 0..n {
        u[k] = gaps[k] * (gaps[(k + 1) % n] - 1.0) + v;
    }
}

/// `u_k = x_k (x_{k+1} - 1) + v`; each `u_k` uses only agent `k` and its two
/// neighbours.
pub fn control_law(thetas: &[f64], v: f64) -> Vec<f64> {
    let n = thetas.len();
    let mut gaps = vec![0.0; n];
    let mut u = vec![0.0; n];
    control_into(thetas, v, &mut gaps, &mut u);
    u
}

struct FormationSystem {
    v: f64,
    gaps: Vec<f64>,
}

impl OdeSystem for FormationSystem {
    fn dim(&self) -> usize {
        self.gaps.len()
    }

    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) {
        control_into(y, self.v, &mut self.gaps, dy);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceVerdict {
    /// `max_i |2 pi x_i(T_end) - 2 pi / n|` in radians.
    pub max_gap_error: f64,
    pub order_preserved: bool,
    pub terminal_velocities: Vec<f64>,
    /// Terminal angles wrapped into `[0, 2 pi)`.
    pub terminal_angles: Vec<f64>,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationRun {
    pub initial: FormationState,
    pub times: Vec<f64>,
    /// Unwrapped angles at each sample.
    pub thetas: Vec<Vec<f64>>,
    pub verdict: BalanceVerdict,
}

impl FormationRun {
    /// Normalized gaps at each sample.
    pub fn gap_trajectory(&self) -> Vec<Vec<f64>> {
        self.thetas
            .iter()
            .map(|th| {
                let mut x = vec![0.0; th.len()];
                gaps_into(th, &mut x);
                x
            })
            .collect()
    }

    pub fn write_angles_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.initial.thetas.len();
        let mut header = vec!["t".to_string()];
        header.extend(site_columns("theta", n));
        let rows = self.times.iter().zip(&self.thetas).map(|(&t, th)| {
            let mut row = vec![t];
            row.extend_from_slice(th);
            row
        });
        write_table(writer, &header, rows)
    }

    /// `t,px1,py1,...,pxn,pyn` with positions on the circle of the configured radius.
    pub fn write_positions_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.initial.thetas.len();
        let r = self.initial.radius;
        let mut header = vec!["t".to_string()];
        for k in 1..=n {
            header.push(format!("px{k}"));
            header.push(format!("py{k}"));
        }
        let rows = self.times.iter().zip(&self.thetas).map(|(&t, th)| {
            let mut row = vec![t];
            for &a in th {
                let w = a.rem_euclid(TAU);
                row.push(r * w.cos());
                row.push(r * w.sin());
            }
            row
        });
        write_table(writer, &header, rows)
    }
}

/// Horizon over which the slowest linear gap mode decays by `e^-20`; a
/// planning heuristic only.
pub fn formation_horizon(n: usize) -> f64 {
    20.0 / (GAP_RATE * linearized_rate(n).abs())
}

pub fn simulate_formation(initial: &FormationState, cfg: &IntegrationConfig) -> Result<FormationRun> {
    initial.validate()?;
    let n = initial.thetas.len();
    let system = FormationSystem {
        v: initial.v,
        gaps: vec![0.0; n],
    };
    let (times, thetas) = sample_system(system, &initial.thetas, cfg)?;

    let mut gaps = vec![0.0; n];
    let order_preserved = thetas.iter().all(|th| {
        gaps_into(th, &mut gaps);
        gaps.iter().all(|&g| (-ORDER_SLACK..=1.0 + ORDER_SLACK).contains(&g))
    });
    let last = thetas.last().expect("sample grid starts at 0");
    gaps_into(last, &mut gaps);
    let target = TAU / n as f64;
    let max_gap_error = gaps.iter().map(|g| (TAU * g - target).abs()).fold(0.0, f64::max);
    let verdict = BalanceVerdict {
        max_gap_error,
        order_preserved,
        terminal_velocities: control_law(last, initial.v),
        terminal_angles: last.iter().map(|a| a.rem_euclid(TAU)).collect(),
        balanced: max_gap_error <= 1e-6 * TAU,
    };
    Ok(FormationRun {
        initial: initial.clone(),
        times,
        thetas,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use crate::integrator::{integrate, Method};
    use crate::model::RateSchedule;

    fn staggered_six(v: f64) -> FormationState {
        FormationState::new(vec![0.9 * PI, PI, 1.1 * PI, 1.2 * PI], 1.0, v).unwrap()
    }

    fn tight(t_end: f64, dt: f64) -> IntegrationConfig {
        IntegrationConfig::new(t_end, dt).with_method(Method::Rk45 {
            rtol: 1e-12,
            atol: 1e-14,
        })
    }

    #[test]
    fn balanced_gaps_are_uniform() {
        for n in 2..9 {
            let s = FormationState::balanced(n, 1.0, 0.0).unwrap();
            let x = gaps_from_angles(&s.thetas).unwrap();
            for g in x.as_slice() {
                assert!((g - 1.0 / n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn staggered_six_initial_gaps() {
        let x = gaps_from_angles(&staggered_six(0.0).thetas).unwrap();
        for (g, e) in x.as_slice().iter().zip([0.85, 0.05, 0.05, 0.05]) {
            assert!((g - e).abs() < 1e-15);
        }
        assert!((x.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ordering_violations_are_domain_errors() {
        assert!(matches!(gaps_from_angles(&[1.0, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(gaps_from_angles(&[-0.1, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(gaps_from_angles(&[0.1, TAU]), Err(Error::Domain(_))));
        // ties are admitted
        let x = gaps_from_angles(&[0.5, 0.5, 2.0]).unwrap();
        assert_eq!(x.as_slice()[1], 0.0);
    }

    #[test]
    fn control_law_examples() {
        for n in 2..7 {
            let th = FormationState::balanced(n, 1.0, 0.0).unwrap().thetas;
            let c = 1.0 / n as f64;
            for u in control_law(&th, 0.0) {
                assert!((u - c * (c - 1.0)).abs() < 1e-15);
            }
            for u in control_law(&th, (1.0 - c) * c) {
                assert!(u.abs() < 1e-15);
            }
        }
        let u = control_law(&staggered_six(0.0).thetas, 0.0);
        let expected = [0.85 * (0.05 - 1.0), 0.05 * (0.05 - 1.0), 0.05 * (0.05 - 1.0), 0.05 * (0.85 - 1.0)];
        for (a, b) in u.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
            assert!(*a <= 0.0);
        }
    }

    #[test]
    fn balanced_start_with_cancelling_offset_is_stationary() {
        let s = FormationState::balanced(5, 2.0, 0.16).unwrap();
        let run = simulate_formation(&s, &IntegrationConfig::new(10.0, 1.0)).unwrap();
        for (a, b) in run.thetas.last().unwrap().iter().zip(&s.thetas) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(run.verdict.balanced && run.verdict.order_preserved);
    }

    #[test]
    fn staggered_six_reaches_reference_angles() {
        let run = simulate_formation(&staggered_six(3.0 / 16.0), &tight(200.0, 0.5)).unwrap();
        let v = &run.verdict;
        assert!(v.balanced, "{}", v.max_gap_error);
        assert!(v.order_preserved);
        for (a, k) in v.terminal_angles.iter().zip(0..) {
            let expected = (0.2768 + 0.5 * k as f64) * PI;
            assert!((a - expected).abs() < 1e-2 * PI, "{a} vs {expected}");
        }
        for u in &v.terminal_velocities {
            assert!(u.abs() < 1e-6);
        }
    }

    #[test]
    fn zero_offset_still_balances_and_drifts() {
        let run = simulate_formation(&staggered_six(0.0), &tight(200.0, 1.0)).unwrap();
        assert!(run.verdict.balanced);
        for u in &run.verdict.terminal_velocities {
            assert!((u + 3.0 / 16.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gaps_follow_the_homogeneous_ring() {
        let run = simulate_formation(&staggered_six(0.7), &tight(40.0, 0.25)).unwrap();
        let x0 = gaps_from_angles(&run.initial.thetas).unwrap();
        let rates = RateSchedule::homogeneous(4, GAP_RATE).unwrap();
        let ring = integrate(&x0, &rates, &tight(40.0, 0.25)).unwrap();
        for (g, x) in run.gap_trajectory().iter().zip(&ring.states) {
            for (a, b) in g.iter().zip(x.as_slice()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn csv_layouts() {
        let s = FormationState::balanced(2, 2.0, 0.25).unwrap();
        let run = simulate_formation(&s, &IntegrationConfig::new(1.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        run.write_angles_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,theta1,theta2\n0,0,3.14159"));
        let mut buf = Vec::new();
        run.write_positions_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,px1,py1,px2,py2\n0,2,0,-2,"));
    }
}
