//! C ABI over `rfmr-core`.
//!
//! Every fallible function returns an [`RfmrStatus`]; on failure the message
//! is available from [`rfmr_last_error_message`] on the same thread. Objects
//! are opaque handles created by `*_new`/producer functions and released with
//! the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rfmr_core::analysis::{closed_form_n2, linearized_rate, solve_equilibrium};
use rfmr_core::asep::{simulate_asep, LatticeState, MCConfig};
use rfmr_core::consensus::lyapunov_v;
use rfmr_core::integrator::{integrate, integrate_to_equilibrium, IntegrationConfig, Method};
use rfmr_core::model::{flow_profile, jacobian, vector_field, OccupancyState, RateComponent, RateSchedule};
use rfmr_core::{Error, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfmrStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Domain = 3,
    Integration = 4,
    Timeout = 5,
    Numerical = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Rate schedule of a ring.
pub struct RfmrModel {
    rates: RateSchedule,
}

/// Sampled solution of a ring.
pub struct RfmrTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RfmrStatus {
    match err {
        Error::Config(_) => RfmrStatus::Config,
        Error::Domain(_) => RfmrStatus::Domain,
        Error::Integration { .. } => RfmrStatus::Integration,
        Error::Timeout { .. } => RfmrStatus::Timeout,
        Error::Numerical { .. } => RfmrStatus::Numerical,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => RfmrStatus::Io,
    }
}

struct Failure(RfmrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RfmrStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any error or panic for `rfmr_last_error_message`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RfmrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RfmrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RfmrStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const RfmrModel) -> Result<&'a RfmrModel, Failure> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn check_len(model: &RfmrModel, n: usize) -> Result<(), Failure> {
    if model.rates.n() != n {
        return Err(Failure(
            RfmrStatus::Config,
            format!("state has {n} entries but the model has {} sites", model.rates.n()),
        ));
    }
    Ok(())
}

fn state(x: &[f64]) -> Result<OccupancyState, Failure> {
    Ok(OccupancyState::new(x.to_vec())?)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `rfmr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rfmr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a model with constant rates `rates[0..n]`.
///
/// # Safety
/// `rates` must point to `n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_model_new_constant(
    rates: *const f64,
    n: usize,
    out: *mut *mut RfmrModel,
) -> RfmrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rates = RateSchedule::constant(input(rates, n, "rates")?.to_vec())?;
        *out = Box::into_raw(Box::new(RfmrModel { rates }));
        Ok(())
    })
}

/// Creates a model with `rate_i(t) = offsets[i] + amplitudes[i] sin(frequencies[i] t + phases[i])`
/// sharing the common period `period`.
///
/// # Safety
/// The four arrays must each hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_model_new_sinusoidal(
    period: f64,
    offsets: *const f64,
    amplitudes: *const f64,
    frequencies: *const f64,
    phases: *const f64,
    n: usize,
    out: *mut *mut RfmrModel,
) -> RfmrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (o, a) = (input(offsets, n, "offsets")?, input(amplitudes, n, "amplitudes")?);
        let (f, p) = (input(frequencies, n, "frequencies")?, input(phases, n, "phases")?);
        let components = (0..n).map(|i| RateComponent::sinusoid(o[i], a[i], f[i], p[i])).collect();
        let rates = RateSchedule::periodic(period, components)?;
        *out = Box::into_raw(Box::new(RfmrModel { rates }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `rfmr_model_new_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfmr_model_free(model: *mut RfmrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of sites, or 0 for a null model.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfmr_model_size(model: *const RfmrModel) -> usize {
    model.as_ref().map_or(0, |m| m.rates.n())
}

/// Writes the vector field at `(t, x)` into `out[0..n]`.
///
/// # Safety
/// `x` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rfmr_vector_field(
    model: *const RfmrModel,
    x: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(m, n)?;
        let dx = vector_field(&state(input(x, n, "x")?)?, &m.rates, t)?;
        output(out, n, "out")?.copy_from_slice(&dx);
        Ok(())
    })
}

/// Writes the edge flows at `(t, x)` into `out[0..n]`.
///
/// # Safety
/// `x` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rfmr_flow_profile(
    model: *const RfmrModel,
    x: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(m, n)?;
        let flows = flow_profile(&state(input(x, n, "x")?)?, &m.rates, t)?;
        output(out, n, "out")?.copy_from_slice(flows.as_slice());
        Ok(())
    })
}

/// Writes the Jacobian at `(t, x)` into `out[0..n*n]` in row-major order.
///
/// # Safety
/// `x` must hold `n` doubles and `out` `n * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rfmr_jacobian(
    model: *const RfmrModel,
    x: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(m, n)?;
        let jac = jacobian(&state(input(x, n, "x")?)?, &m.rates, t)?;
        let out = output(out, n * n, "out")?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = jac[(i, j)];
            }
        }
        Ok(())
    })
}

/// Sum of the occupancies `x[0..n]`.
///
/// # Safety
/// `x` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_total_occupancy(x: *const f64, n: usize, out: *mut f64) -> RfmrStatus {
    guard(|| {
        let total = state(input(x, n, "x")?)?.total();
        *output(out, 1, "out")?.first_mut().expect("one slot") = total;
        Ok(())
    })
}

/// Max minus min of `x[0..n]`.
///
/// # Safety
/// `x` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_lyapunov_v(x: *const f64, n: usize, out: *mut f64) -> RfmrStatus {
    guard(|| {
        let v = lyapunov_v(&state(input(x, n, "x")?)?);
        *output(out, 1, "out")?.first_mut().expect("one slot") = v;
        Ok(())
    })
}

/// `cos(2 pi (n-1)/n) - 1`, the slowest linear decay rate of the unit-rate
/// homogeneous ring; NaN for `n < 2`.
#[no_mangle]
pub extern "C" fn rfmr_linearized_rate(n: usize) -> f64 {
    if n < 2 {
        f64::NAN
    } else {
        linearized_rate(n)
    }
}

/// Integrates from `x0` to `t_end`, sampling every `sample_interval`, with
/// adaptive RK45 at the given tolerances.
///
/// # Safety
/// `x0` must hold `n` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_integrate(
    model: *const RfmrModel,
    x0: *const f64,
    n: usize,
    t_end: f64,
    sample_interval: f64,
    rtol: f64,
    atol: f64,
    out: *mut *mut RfmrTrajectory,
) -> RfmrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = model_ref(model)?;
        check_len(m, n)?;
        let cfg = IntegrationConfig::new(t_end, sample_interval).with_method(Method::Rk45 { rtol, atol });
        let inner = integrate(&state(input(x0, n, "x0")?)?, &m.rates, &cfg)?;
        *out = Box::into_raw(Box::new(RfmrTrajectory { inner }));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from `rfmr_integrate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rfmr_trajectory_free(traj: *mut RfmrTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rfmr_trajectory_len(traj: *const RfmrTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies the sample times into `out[0..len]`; `len` must equal the sample count.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rfmr_trajectory_times(traj: *const RfmrTrajectory, out: *mut f64, len: usize) -> RfmrStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        if len < t.inner.len() {
            return Err(Failure(
                RfmrStatus::BufferTooSmall,
                format!("need {} slots, got {len}", t.inner.len()),
            ));
        }
        output(out, t.inner.len(), "out")?.copy_from_slice(&t.inner.times);
        Ok(())
    })
}

/// Copies sample `index` into `out[0..n]`.
///
/// # Safety
/// `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rfmr_trajectory_state(
    traj: *const RfmrTrajectory,
    index: usize,
    out: *mut f64,
    n: usize,
) -> RfmrStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        let x = t.inner.states.get(index).ok_or_else(|| {
            Failure(
                RfmrStatus::Domain,
                format!("sample {index} out of range (len {})", t.inner.len()),
            )
        })?;
        if n < x.len() {
            return Err(Failure(RfmrStatus::BufferTooSmall, format!("need {} slots, got {n}", x.len())));
        }
        output(out, x.len(), "out")?.copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// Solves for the equilibrium on the level set `1'e = s`; writes `e` into
/// `out_e[0..n]` and the common flux into `out_r`.
///
/// # Safety
/// `out_e` must hold `n` doubles and `out_r` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_solve_equilibrium(
    model: *const RfmrModel,
    s: f64,
    tol: f64,
    out_e: *mut f64,
    n: usize,
    out_r: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(m, n)?;
        let sol = solve_equilibrium(&m.rates, s, tol)?;
        output(out_e, n, "out_e")?.copy_from_slice(sol.point.e.as_slice());
        *output(out_r, 1, "out_r")?.first_mut().expect("one slot") = sol.point.r;
        Ok(())
    })
}

/// Integrates until the field sup-norm drops below `settle_tol` or `t_end`
/// passes. On `Timeout` the best state seen is still written to `out_e`.
///
/// # Safety
/// `x0` and `out_e` must hold `n` doubles and `out_time` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_integrate_to_equilibrium(
    model: *const RfmrModel,
    x0: *const f64,
    n: usize,
    t_end: f64,
    settle_tol: f64,
    out_e: *mut f64,
    out_time: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        check_len(m, n)?;
        let out_e = output(out_e, n, "out_e")?;
        let out_time = output(out_time, 1, "out_time")?;
        let cfg = IntegrationConfig::new(t_end, t_end / 1000.0);
        match integrate_to_equilibrium(&state(input(x0, n, "x0")?)?, &m.rates, &cfg, settle_tol) {
            Ok((e, t)) => {
                out_e.copy_from_slice(e.as_slice());
                out_time[0] = t;
                Ok(())
            }
            Err(err @ Error::Timeout { .. }) => {
                if let Error::Timeout { best, elapsed, .. } = &err {
                    out_e.copy_from_slice(best.as_slice());
                    out_time[0] = *elapsed;
                }
                Err(err.into())
            }
            Err(err) => Err(err.into()),
        }
    })
}

/// Exact two-site solution at time `t` from `x0[0..2]` into `out[0..2]`.
///
/// # Safety
/// `x0` and `out` must hold 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn rfmr_closed_form_n2(
    x0: *const f64,
    lambda1: f64,
    lambda2: f64,
    t: f64,
    out: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let x = closed_form_n2(&state(input(x0, 2, "x0")?)?, lambda1, lambda2, t)?;
        output(out, 2, "out")?.copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// Monte Carlo exclusion process. `occupancy[i]` nonzero marks a particle
/// at site `i`; writes the time-averaged density into `out_density[0..n]`
/// and hops per site per unit time into `out_flux`.
///
/// # Safety
/// `occupancy`, `rates` and `out_density` must hold `n` elements and
/// `out_flux` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rfmr_simulate_asep(
    occupancy: *const u8,
    rates: *const f64,
    n: usize,
    seed: u64,
    sweeps: u64,
    burn_in: u64,
    replicas: usize,
    out_density: *mut f64,
    out_flux: *mut f64,
) -> RfmrStatus {
    guard(|| {
        let lattice = LatticeState::new(input(occupancy, n, "occupancy")?.iter().map(|&o| o != 0).collect());
        let cfg = MCConfig::new(seed, sweeps, burn_in, input(rates, n, "rates")?.to_vec()).with_replicas(replicas);
        let result = simulate_asep(&lattice, &cfg)?;
        output(out_density, n, "out_density")?.copy_from_slice(&result.density);
        *output(out_flux, 1, "out_flux")?.first_mut().expect("one slot") = result.flux;
        Ok(())
    })
}
