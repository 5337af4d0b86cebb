//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfmr_core::analysis::{
    closed_form_n2, equilibrium_ordering_check, hrfmr_linearization, linearized_rate, solve_equilibrium,
};
use rfmr_core::asep::{simulate_asep, LatticeState, MCConfig};
use rfmr_core::consensus::{consensus_horizon, run_consensus};
use rfmr_core::entrainment::{analytic_periodic_n2, detect_entrainment, TwoSiteDrive};
use rfmr_core::formation::{gaps_from_angles, simulate_formation, FormationState, GAP_RATE};
use rfmr_core::integrator::{integrate, integrate_to_equilibrium, IntegrationConfig, Method};
use rfmr_core::model::{OccupancyState, RateComponent, RateSchedule};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.2} s exceeds {limit_s} s", elapsed.as_secs_f64())
    })
}

fn state(v: &[f64]) -> OccupancyState {
    OccupancyState::new(v.to_vec()).unwrap()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn random_rates(rng: &mut ChaCha8Rng, n: usize) -> RateSchedule {
    RateSchedule::constant((0..n).map(|_| rng.random_range(0.2..5.0)).collect()).unwrap()
}

fn two_site_agreement() -> Check {
    let start = Instant::now();
    let a = state(&[1.0, 0.0]);
    let cfg = IntegrationConfig::new(10.0, 0.01);
    let mut errors = Vec::new();
    for (lam, limit) in [([1.0, 1.0], 1e-8), ([2.0, 1.0], 1e-7)] {
        let traj = integrate(&a, &RateSchedule::constant(lam.to_vec()).unwrap(), &cfg).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for (t, x) in traj.iter() {
            let exact = closed_form_n2(&a, lam[0], lam[1], t).map_err(|e| e.to_string())?;
            worst = worst.max(l1(exact.as_slice(), x.as_slice()) / 2.0);
        }
        ensure(worst <= limit, || format!("lambda={lam:?}: sup error {worst:e} > {limit:e}"))?;
        errors.push(worst);
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "sup error {:.1e} (equal rates), {:.1e} (Riccati)",
        errors[0], errors[1]
    ))
}

fn equilibrium_reproduction() -> Check {
    let start = Instant::now();
    let reference = [0.5380, 0.6528, 0.8091];
    let rates = RateSchedule::constant(vec![2.0, 3.0, 1.0]).unwrap();
    let close = |e: &[f64]| e.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let sol = solve_equilibrium(&rates, 2.0, 1e-12).map_err(|e| e.to_string())?;
    let mut worst = close(sol.point.e.as_slice());
    let cfg = IntegrationConfig::new(200.0, 0.1);
    for a in [[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]] {
        let (e, _) = integrate_to_equilibrium(&state(&a), &rates, &cfg, 1e-10).map_err(|e| e.to_string())?;
        worst = worst.max(close(e.as_slice()));
    }
    ensure(worst <= 1e-3, || format!("deviation {worst:e} from the stated equilibrium"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "e = ({:.4}, {:.4}, {:.4}), max deviation {worst:.1e}",
        sol.point.e.as_slice()[0],
        sol.point.e.as_slice()[1],
        sol.point.e.as_slice()[2]
    ))
}

fn property_suite() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 200;
    let tol = 1e-9;
    let cfg = IntegrationConfig::new(8.0, 0.25);
    for case in 0..cases {
        let n = rng.random_range(2..=8);
        let rates = random_rates(&mut rng, n);
        let a = random_state(&mut rng, n);
        let run = |x: &[f64]| integrate(&state(x), &rates, &cfg).map_err(|e| format!("case {case}: {e}"));

        let ta = run(&a)?;
        let drift = ta.conservation_drift();
        ensure(drift <= 1e-9 * n as f64, || format!("case {case}: drift {drift:e}"))?;

        // ordered pair a <= b
        let b: Vec<f64> = a.iter().map(|&x| x + rng.random::<f64>() * (1.0 - x)).collect();
        let tb = run(&b)?;
        for (xa, xb) in ta.states.iter().zip(&tb.states) {
            let ok = xa.as_slice().iter().zip(xb.as_slice()).all(|(p, q)| *p <= q + tol);
            ensure(ok, || format!("case {case}: order lost"))?;
        }

        // arbitrary pair: L1 distance never increases
        let c = random_state(&mut rng, n);
        let tc = run(&c)?;
        let dist: Vec<f64> = ta.states.iter().zip(&tc.states).map(|(p, q)| l1(p.as_slice(), q.as_slice())).collect();
        ensure(dist.windows(2).all(|w| w[1] <= w[0] + tol), || format!("case {case}: L1 distance grew"))?;

        // monotone approach to the level-set equilibrium
        let e = solve_equilibrium(&rates, ta.states[0].total(), 1e-12).map_err(|e| format!("case {case}: {e}"))?;
        let gap: Vec<f64> = ta.states.iter().map(|x| l1(x.as_slice(), e.point.e.as_slice())).collect();
        ensure(gap.windows(2).all(|w| w[1] <= w[0] + tol), || {
            format!("case {case}: distance to equilibrium grew")
        })?;

        // strict ordering of equilibria across level sets
        let s = rng.random_range(0.0..n as f64 - 0.05);
        let p = rng.random_range(s + 0.05..=n as f64);
        let ordered = equilibrium_ordering_check(&rates, s, p, 0.0).map_err(|e| format!("case {case}: {e}"))?;
        ensure(ordered, || format!("case {case}: e(L_{s}) not below e(L_{p})"))?;
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "{cases} cases x 5 properties (conservation, order, L1 non-expansion, L1 approach, equilibrium order)"
    ))
}

fn spectral_checks() -> Check {
    let mut worst: f64 = 0.0;
    for n in 2..=12 {
        for &c in &[0.0, 0.1, 0.25, 0.5, 0.8, 1.0] {
            let lin = hrfmr_linearization(n, c).map_err(|e| e.to_string())?;
            ensure(lin.eigenvalues[0].norm() < 1e-14, || format!("n={n}, c={c}: lambda_1 != 0"))?;
            let mut numeric: Vec<Complex<f64>> = lin.q.clone().complex_eigenvalues().iter().cloned().collect();
            for ev in &lin.eigenvalues {
                let (k, d) = numeric
                    .iter()
                    .enumerate()
                    .map(|(k, z)| (k, (z - ev).norm()))
                    .fold((0, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best });
                numeric.swap_remove(k);
                worst = worst.max(d);
            }
        }
    }
    ensure(worst <= 1e-10, || format!("formula vs eigensolver mismatch {worst:e}"))?;
    let re = |n: usize| hrfmr_linearization(n, 0.5).map(|l| l.eigenvalues[1].re).map_err(|e| e.to_string());
    let (r2, r4, r10) = (re(2)?, re(4)?, re(10)?);
    ensure((r2 + 2.0).abs() < 1e-12, || format!("n=2: Re = {r2}"))?;
    ensure((r4 + 1.0).abs() < 1e-12, || format!("n=4: Re = {r4}"))?;
    ensure((r10 + 0.191).abs() <= 1e-3, || format!("n=10: Re = {r10}"))?;
    ensure((linearized_rate(10) - r10).abs() < 1e-14, || "linearized_rate disagrees".into())?;
    Ok(format!(
        "Re(lambda_2) = {r2:.3}, {r4:.3}, {r10:.4}; max eigensolver gap {worst:.1e}"
    ))
}

fn consensus() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = rng.random_range(2..=12);
        let a = state(&random_state(&mut rng, n));
        let lambda_c = rng.random_range(0.2..5.0);
        let horizon = consensus_horizon(n, lambda_c);
        let cfg = IntegrationConfig::new(horizon, horizon / 200.0);
        let r = run_consensus(&a, lambda_c, &cfg, 1e-6).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max(r.consensus_error);
        ensure(r.consensus_error <= 1e-6, || format!("case {case}: error {:e}", r.consensus_error))?;
        let monotone = r.lyapunov_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10);
        ensure(monotone, || format!("case {case}: V increased"))?;
    }
    let a = state(&[1.0, 0.0, 0.0, 0.0]);
    let mut exponents = Vec::new();
    for t_end in [4.0, 6.0, 8.0, 10.0, 12.0] {
        let r = run_consensus(&a, 1.0, &IntegrationConfig::new(t_end, 0.01), 1e-6).map_err(|e| e.to_string())?;
        let k = r.mean_decay_exponent().ok_or("no decay measured")?;
        ensure(k <= -1.0, || format!("decay exponent {k} over [0, {t_end}] slower than -1"))?;
        exponents.push(k);
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "200 draws, max error {worst:.1e}; n=4 decay exponent {:.5} over [0, 10]",
        exponents[3]
    ))
}

fn sinusoid_ring() -> RateSchedule {
    RateSchedule::periodic(
        TAU,
        vec![
            RateComponent::constant(3.0),
            RateComponent::sinusoid(3.0, 2.0, 1.0, 0.5),
            RateComponent::sinusoid(4.0, 2.0, 2.0, -PI / 2.0),
        ],
    )
    .unwrap()
}

fn entrainment() -> Check {
    let rates = sinusoid_ring();
    let a = detect_entrainment(&state(&[0.5, 0.01, 0.9]), &rates, 1e-6, 200).map_err(|e| e.to_string())?;
    ensure(a.converged, || format!("residual {:e} after {} cycles", a.period_residual, a.cycles_used))?;
    let b = detect_entrainment(&state(&[0.9, 0.5, 0.01]), &rates, 1e-6, 200).map_err(|e| e.to_string())?;
    ensure(b.converged, || "second start did not converge".into())?;
    let gap = a.cycle_distance(&b);
    ensure(gap <= 1e-5, || format!("limit cycles differ by {gap:e}"))?;

    let drive = TwoSiteDrive::default();
    let x0 = state(&[0.3, 0.5]);
    let mut worst: f64 = 0.0;
    for t in [1.0, 5.0, 20.0] {
        let traj = integrate(&x0, &drive.schedule().unwrap(), &IntegrationConfig::new(t, t)).map_err(|e| e.to_string())?;
        let exact = analytic_periodic_n2(&x0, &drive, t).map_err(|e| e.to_string())?;
        worst = worst.max((traj.last_state().as_slice()[0] - exact.as_slice()[0]).abs());
    }
    ensure(worst <= 1e-6, || format!("closed form mismatch {worst:e}"))?;
    Ok(format!(
        "residual {:.1e} after {} cycles; cycle gap {gap:.1e}; closed-form error {worst:.1e}",
        a.period_residual, a.cycles_used
    ))
}

fn formation() -> Check {
    let cfg = IntegrationConfig::new(200.0, 0.5).with_method(Method::Rk45 {
        rtol: 1e-12,
        atol: 1e-14,
    });
    let initial = FormationState::new(vec![0.9 * PI, PI, 1.1 * PI, 1.2 * PI], 1.0, 3.0 / 16.0).map_err(|e| e.to_string())?;
    let run = simulate_formation(&initial, &cfg).map_err(|e| e.to_string())?;
    let expected = [0.2768, 0.7768, 1.2768, 1.7768];
    let angle_err = run
        .verdict
        .terminal_angles
        .iter()
        .zip(expected)
        .map(|(a, e)| (a - e * PI).abs())
        .fold(0.0, f64::max);
    ensure(angle_err <= 1e-2 * PI, || format!("terminal angles off by {angle_err}"))?;
    ensure(run.verdict.max_gap_error <= 1e-6 * TAU, || {
        format!("gap error {:e}", run.verdict.max_gap_error)
    })?;
    ensure(run.verdict.order_preserved, || "agent order changed".into())?;

    let x0 = gaps_from_angles(&initial.thetas).map_err(|e| e.to_string())?;
    let ring = integrate(&x0, &RateSchedule::homogeneous(4, GAP_RATE).unwrap(), &cfg).map_err(|e| e.to_string())?;
    let gap_dev = run
        .gap_trajectory()
        .iter()
        .zip(&ring.states)
        .flat_map(|(g, x)| g.iter().zip(x.as_slice()).map(|(p, q)| (p - q).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    ensure(gap_dev <= 1e-8, || format!("gap trajectory differs from ring by {gap_dev:e}"))?;
    let over_pi: Vec<String> = run.verdict.terminal_angles.iter().map(|a| format!("{:.4}", a / PI)).collect();
    Ok(format!(
        "angles/pi ({}), gap error {:.1e}, ring match {gap_dev:.1e}",
        over_pi.join(", "),
        run.verdict.max_gap_error
    ))
}

fn asep_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let n = rng.random_range(2..=30);
        let occ: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let lattice = LatticeState::new(occ);
        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let cfg = MCConfig::new(case, 200, 20, rates).with_replicas(3);
        let r = simulate_asep(&lattice, &cfg).map_err(|e| e.to_string())?;
        for rep in &r.replicas {
            ensure(rep.final_state.particle_count() == lattice.particle_count(), || {
                format!("case {case}: particle count changed")
            })?;
        }
        let again = simulate_asep(&lattice, &cfg).map_err(|e| e.to_string())?;
        ensure(r == again, || format!("case {case}: fixed seed not reproducible"))?;
    }

    let n = 100;
    let mut fluxes = Vec::new();
    for j in 1..=9 {
        let cfg = MCConfig::new(2024, 6000, 500, vec![1.0; n]).with_replicas(4);
        let r = simulate_asep(&LatticeState::spread(n, 10 * j).unwrap(), &cfg).map_err(|e| e.to_string())?;
        let rho = j as f64 / 10.0;
        let mean_field = rho * (1.0 - rho);
        ensure((r.flux - mean_field).abs() <= 0.1 * mean_field, || {
            format!("density {rho}: MC flux {} outside 10% of {mean_field}", r.flux)
        })?;
        fluxes.push((rho, r.flux));
    }
    let peak = fluxes.iter().cloned().fold((0.0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
    ensure((peak.0 - 0.5f64).abs() <= 0.1 + 1e-12, || format!("flux peaks at density {}", peak.0))?;

    let cfg = MCConfig::new(7, 20_000, 1_000, vec![2.0, 3.0, 1.0]).with_replicas(4);
    let r = simulate_asep(&LatticeState::packed(3, 2).unwrap(), &cfg).map_err(|e| e.to_string())?;
    let d = &r.density;
    ensure(d[2] > d[0] && d[2] > d[1], || format!("site 3 not densest: {d:?}"))?;
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "flux peak {:.4} at density {:.1}; n=3 profile ({:.3}, {:.3}, {:.3})",
        peak.1, peak.0, d[0], d[1], d[2]
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 8] = [
        ("n=2 analytic agreement", two_site_agreement),
        ("equilibrium reproduction", equilibrium_reproduction),
        ("property suite", property_suite),
        ("spectral checks", spectral_checks),
        ("consensus", consensus),
        ("entrainment", entrainment),
        ("formation", formation),
        ("ASEP oracle", asep_oracle),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.2} s]", k + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {reason} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
