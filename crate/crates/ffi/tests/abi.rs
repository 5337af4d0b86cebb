use std::ffi::CStr;
use std::ptr;

use rfmr_ffi::*;

fn last_error() -> String {
    let p = rfmr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn constant(rates: &[f64]) -> *mut RfmrModel {
    let mut m = ptr::null_mut();
    let status = unsafe { rfmr_model_new_constant(rates.as_ptr(), rates.len(), &mut m) };
    assert_eq!(status, RfmrStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn vector_field_and_jacobian_round_trip() {
    let m = constant(&[2.0, 3.0, 1.0]);
    assert_eq!(unsafe { rfmr_model_size(m) }, 3);
    let x = [0.2, 0.5, 0.9];
    let mut dx = [0.0; 3];
    assert_eq!(unsafe { rfmr_vector_field(m, x.as_ptr(), 3, 0.0, dx.as_mut_ptr()) }, RfmrStatus::Ok);
    // flows: 2*.2*.5, 3*.5*.1, 1*.9*.8
    let f = [0.2, 0.15, 0.72];
    let expected = [f[2] - f[0], f[0] - f[1], f[1] - f[2]];
    for (a, b) in dx.iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    let mut flows = [0.0; 3];
    assert_eq!(unsafe { rfmr_flow_profile(m, x.as_ptr(), 3, 0.0, flows.as_mut_ptr()) }, RfmrStatus::Ok);
    for (a, b) in flows.iter().zip(f) {
        assert!((a - b).abs() < 1e-15);
    }
    let mut jac = [0.0; 9];
    assert_eq!(unsafe { rfmr_jacobian(m, x.as_ptr(), 3, 0.0, jac.as_mut_ptr()) }, RfmrStatus::Ok);
    for j in 0..3 {
        let col: f64 = (0..3).map(|i| jac[i * 3 + j]).sum();
        assert!(col.abs() < 1e-14);
    }
    unsafe { rfmr_model_free(m) };
}

#[test]
fn integrate_returns_a_conserving_trajectory() {
    let m = constant(&[2.0, 1.0]);
    let x0 = [1.0, 0.0];
    let mut traj = ptr::null_mut();
    let status = unsafe { rfmr_integrate(m, x0.as_ptr(), 2, 4.0, 0.5, 1e-10, 1e-12, &mut traj) };
    assert_eq!(status, RfmrStatus::Ok);
    let len = unsafe { rfmr_trajectory_len(traj) };
    assert_eq!(len, 9);
    let mut times = vec![0.0; len];
    assert_eq!(unsafe { rfmr_trajectory_times(traj, times.as_mut_ptr(), len) }, RfmrStatus::Ok);
    assert_eq!(times[0], 0.0);
    assert!((times[len - 1] - 4.0).abs() < 1e-12);

    let mut x = [0.0; 2];
    let mut exact = [0.0; 2];
    assert_eq!(unsafe { rfmr_trajectory_state(traj, len - 1, x.as_mut_ptr(), 2) }, RfmrStatus::Ok);
    assert_eq!(unsafe { rfmr_closed_form_n2(x0.as_ptr(), 2.0, 1.0, 4.0, exact.as_mut_ptr()) }, RfmrStatus::Ok);
    assert!((x[0] - exact[0]).abs() + (x[1] - exact[1]).abs() < 1e-8);
    let mut total = 0.0;
    assert_eq!(unsafe { rfmr_total_occupancy(x.as_ptr(), 2, &mut total) }, RfmrStatus::Ok);
    assert!((total - 1.0).abs() < 1e-9);

    assert_eq!(unsafe { rfmr_trajectory_state(traj, len, x.as_mut_ptr(), 2) }, RfmrStatus::Domain);
    assert_eq!(unsafe { rfmr_trajectory_times(traj, times.as_mut_ptr(), 1) }, RfmrStatus::BufferTooSmall);
    unsafe {
        rfmr_trajectory_free(traj);
        rfmr_model_free(m);
    }
}

#[test]
fn equilibrium_solver_and_integration_agree() {
    let m = constant(&[2.0, 3.0, 1.0]);
    let mut e = [0.0; 3];
    let mut r = 0.0;
    assert_eq!(unsafe { rfmr_solve_equilibrium(m, 2.0, 1e-12, e.as_mut_ptr(), 3, &mut r) }, RfmrStatus::Ok);
    assert!((e.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    assert!((2.0 * e[0] * (1.0 - e[1]) - r).abs() < 1e-12);

    let x0 = [1.0, 1.0, 0.0];
    let mut settled = [0.0; 3];
    let mut t = 0.0;
    let status = unsafe { rfmr_integrate_to_equilibrium(m, x0.as_ptr(), 3, 500.0, 1e-10, settled.as_mut_ptr(), &mut t) };
    assert_eq!(status, RfmrStatus::Ok);
    assert!(t > 0.0 && t <= 500.0);
    for (a, b) in settled.iter().zip(e) {
        assert!((a - b).abs() < 1e-8);
    }

    let status = unsafe { rfmr_integrate_to_equilibrium(m, x0.as_ptr(), 3, 0.01, 1e-10, settled.as_mut_ptr(), &mut t) };
    assert_eq!(status, RfmrStatus::Timeout);
    assert!((settled.iter().sum::<f64>() - 2.0).abs() < 1e-9);
    unsafe { rfmr_model_free(m) };
}

#[test]
fn scalar_helpers() {
    assert!((rfmr_linearized_rate(4) + 1.0).abs() < 1e-15);
    assert!(rfmr_linearized_rate(1).is_nan());
    let x = [0.1, 0.7, 0.4];
    let mut v = 0.0;
    assert_eq!(unsafe { rfmr_lyapunov_v(x.as_ptr(), 3, &mut v) }, RfmrStatus::Ok);
    assert!((v - 0.6).abs() < 1e-15);
}

#[test]
fn periodic_model_from_sinusoids() {
    let offsets = [3.0, 2.0];
    let amps = [1.0, 0.5];
    let freqs = [1.0, 2.0];
    let phases = [0.0, 0.3];
    let mut m = ptr::null_mut();
    let status = unsafe {
        rfmr_model_new_sinusoidal(
            std::f64::consts::TAU,
            offsets.as_ptr(),
            amps.as_ptr(),
            freqs.as_ptr(),
            phases.as_ptr(),
            2,
            &mut m,
        )
    };
    assert_eq!(status, RfmrStatus::Ok);
    let x = [0.5, 0.5];
    let mut dx = [0.0; 2];
    let t = 1.0;
    assert_eq!(unsafe { rfmr_vector_field(m, x.as_ptr(), 2, t, dx.as_mut_ptr()) }, RfmrStatus::Ok);
    let l1 = 3.0 + t.sin();
    let l2 = 2.0 + 0.5 * (2.0 * t + 0.3).sin();
    assert!((dx[0] - 0.25 * (l2 - l1)).abs() < 1e-14);
    unsafe { rfmr_model_free(m) };
}

#[test]
fn asep_is_reproducible() {
    let occ = [1u8, 1, 0, 0, 0, 0];
    let rates = [1.0; 6];
    let run = || {
        let mut density = [0.0; 6];
        let mut flux = 0.0;
        let status = unsafe {
            rfmr_simulate_asep(occ.as_ptr(), rates.as_ptr(), 6, 7, 2000, 200, 2, density.as_mut_ptr(), &mut flux)
        };
        assert_eq!(status, RfmrStatus::Ok);
        (density, flux)
    };
    let (d1, f1) = run();
    let (d2, f2) = run();
    assert_eq!(d1, d2);
    assert_eq!(f1, f2);
    assert!((d1.iter().sum::<f64>() - 2.0).abs() < 1e-9);
    // homogeneous ring, k=2 of n=6: exact flux k(n-k)/(n(n-1)) = 4/15
    assert!((f1 - 4.0 / 15.0).abs() < 0.02, "flux {f1}");
}

#[test]
fn errors_carry_status_and_message() {
    let mut m = ptr::null_mut();
    let bad = [1.0, -2.0];
    assert_eq!(unsafe { rfmr_model_new_constant(bad.as_ptr(), 2, &mut m) }, RfmrStatus::Config);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { rfmr_model_new_constant(ptr::null(), 2, &mut m) }, RfmrStatus::NullPointer);
    assert!(last_error().contains("rates"));

    let m = constant(&[1.0, 1.0]);
    let outside = [1.5, 0.0];
    let mut dx = [0.0; 2];
    assert_eq!(unsafe { rfmr_vector_field(m, outside.as_ptr(), 2, 0.0, dx.as_mut_ptr()) }, RfmrStatus::Domain);
    let three = [0.1, 0.2, 0.3];
    let mut dx3 = [0.0; 3];
    assert_eq!(unsafe { rfmr_vector_field(m, three.as_ptr(), 3, 0.0, dx3.as_mut_ptr()) }, RfmrStatus::Config);

    let ok = [0.5, 0.5];
    assert_eq!(unsafe { rfmr_vector_field(m, ok.as_ptr(), 2, 0.0, dx.as_mut_ptr()) }, RfmrStatus::Ok);
    assert!(rfmr_last_error_message().is_null());
    unsafe {
        rfmr_model_free(m);
        rfmr_model_free(ptr::null_mut());
        rfmr_trajectory_free(ptr::null_mut());
    }
    assert_eq!(unsafe { rfmr_model_size(ptr::null()) }, 0);
}
