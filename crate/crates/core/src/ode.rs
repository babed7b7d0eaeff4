//! Time integrators: an adaptive embedded Runge-Kutta 4(5) pair
//! (Dormand-Prince) with fourth-order dense output, and a fixed-step
//! implicit trapezoidal method with Newton inner solves for stiff cases.
//!
//! Systems may declare auxiliary quadrature components (running integrals of
//! power fluxes and supply flows). These are integrated alongside the state
//! but excluded from the error norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{as_f64, lit, Scalar};

/// Right-hand side plus the metadata the integrators need.
pub trait OdeSystem<T: Scalar> {
    /// Number of dynamic state components.
    fn dim(&self) -> usize;

    /// Writes dy/dt into `dydt` (length `dim()`).
    fn rhs(&self, t: T, y: &[T], dydt: &mut [T]) -> Result<()>;

    /// Scale of one component used by the error norm; pressure components
    /// return 1e5 so that tolerances act on bar instead of Pa.
    fn error_scale(&self, _component: usize) -> T {
        T::one()
    }

    /// Number of auxiliary quadrature components.
    fn quad_dim(&self) -> usize {
        0
    }

    /// Writes the quadrature integrands into `out` (length `quad_dim()`).
    fn quadrature_rates(&self, _t: T, _y: &[T], _out: &mut [T]) -> Result<()> {
        Ok(())
    }

    /// Validity guard evaluated on every accepted point; an error aborts the
    /// integration and is reported to the caller.
    fn check_state(&self, _t: T, _y: &[T]) -> Result<()> {
        Ok(())
    }

    /// Times strictly inside (t0, t_end) where the right-hand side loses
    /// smoothness (e.g. load-profile knots); accepted steps land on them.
    fn breakpoints(&self, _t0: T, _t_end: T) -> Vec<T> {
        Vec::new()
    }
}

/// Integration method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Adaptive Dormand-Prince 4(5) with dense output.
    Rk45,
    /// Implicit trapezoidal rule with Newton inner solves.
    Trapezoidal,
}

/// Counters accumulated during one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
    pub newton_iterations: usize,
}

/// Sampled result of one integration.
#[derive(Debug, Clone)]
pub struct Solution<T: Scalar> {
    /// Requested sample times.
    pub times: Vec<T>,
    /// Dynamic state at each sample.
    pub states: Vec<Vec<T>>,
    /// Accumulated quadrature components at each sample.
    pub quadratures: Vec<Vec<T>>,
    pub stats: SolverStats,
}

/// Integration controls. `max_step` bounds the adaptive step and doubles as
/// the base step of the trapezoidal method.
#[derive(Debug, Clone, Copy)]
pub struct Controls<T: Scalar> {
    pub rtol: T,
    pub atol: T,
    pub max_step: Option<T>,
}

/// Integrates `system` from `t0` to the last entry of `sample_times`,
/// returning the state at every requested sample time.
///
/// `sample_times` must be strictly increasing; entries at or before `t0`
/// reproduce the initial state.
pub fn integrate<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    t0: T,
    y0: &[T],
    sample_times: &[T],
    method: Method,
    controls: &Controls<T>,
) -> Result<Solution<T>> {
    if sample_times.is_empty() {
        return Err(Error::Scenario("no sample times requested".into()));
    }
    if y0.len() != system.dim() {
        return Err(Error::Scenario(format!(
            "initial state has {} components, system has {}",
            y0.len(),
            system.dim()
        )));
    }
    if !(controls.rtol > T::zero() && controls.atol > T::zero()) {
        return Err(Error::Scenario("rtol and atol must be positive".into()));
    }
    match method {
        Method::Rk45 => rk45(system, t0, y0, sample_times, controls),
        Method::Trapezoidal => trapezoidal(system, t0, y0, sample_times, controls),
    }
}

// Dormand-Prince coefficients.
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// embedded error weights (5th order minus 4th order solution)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense-output weights
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Merged, sorted list of hard stop times: breakpoints plus the final time.
fn stop_times<T: Scalar, S: OdeSystem<T>>(system: &S, t0: T, t_end: T) -> Vec<T> {
    let span = (t_end - t0).abs();
    let mut stops = system.breakpoints(t0, t_end);
    stops.retain(|&t| t > t0 && t < t_end);
    stops.push(t_end);
    stops.sort_by(|a, b| a.partial_cmp(b).expect("stop times must be ordered"));
    stops.dedup_by(|a, b| (*a - *b).abs() <= lit::<T>(1e-12) * span);
    stops
}

fn rk45<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    t0: T,
    y0: &[T],
    sample_times: &[T],
    controls: &Controls<T>,
) -> Result<Solution<T>> {
    let nd = system.dim();
    let nq = system.quad_dim();
    let n = nd + nq;
    let t_end = *sample_times.last().unwrap();
    let span = t_end - t0;
    if !(span > T::zero()) {
        return Err(Error::Scenario("integration span must be positive".into()));
    }

    let mut stats = SolverStats::default();
    let eval = |t: T, y: &[T], out: &mut [T], stats: &mut SolverStats| -> Result<()> {
        stats.rhs_evaluations += 1;
        let (out_dyn, out_quad) = out.split_at_mut(nd);
        system.rhs(t, &y[..nd], out_dyn)?;
        system.quadrature_rates(t, &y[..nd], out_quad)
    };

    let mut y = vec![T::zero(); n];
    y[..nd].copy_from_slice(y0);
    system.check_state(t0, &y[..nd])?;

    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());
    let mut quads = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0usize;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        times.push(sample_times[next_sample]);
        states.push(y[..nd].to_vec());
        quads.push(y[nd..].to_vec());
        next_sample += 1;
    }

    let stops = stop_times(system, t0, t_end);
    let mut stop_idx = 0usize;

    let weight = |y_a: &[T], y_b: &[T], i: usize| -> T {
        let s = system.error_scale(i);
        controls.atol + controls.rtol * (y_a[i].abs().max(y_b[i].abs())) / s
    };

    // initial step from the scaled state/derivative magnitudes
    let mut f0 = vec![T::zero(); n];
    eval(t0, &y, &mut f0, &mut stats)?;
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for i in 0..nd {
        let w = weight(&y, &y, i);
        let s = system.error_scale(i);
        d0 += (y[i] / s / w).powi(2);
        d1 += (f0[i] / s / w).powi(2);
    }
    let nd_t = lit::<T>(nd as f64);
    d0 = (d0 / nd_t).sqrt();
    d1 = (d1 / nd_t).sqrt();
    let mut h_free = if d1 > lit(1e-12) {
        (lit::<T>(0.01) * d0 / d1).min(span / lit(100.0))
    } else {
        span / lit(100.0)
    };
    if let Some(hmax) = controls.max_step {
        h_free = h_free.min(hmax);
    }
    h_free = h_free.max(span * lit(1e-12));

    let mut t = t0;
    let mut k: Vec<Vec<T>> = (0..7).map(|_| vec![T::zero(); n]).collect();
    let mut y_stage = vec![T::zero(); n];
    let mut y_next = vec![T::zero(); n];
    let mut consecutive_failures = 0usize;
    let snap = lit::<T>(1e-9) * span;

    while t < t_end {
        if h_free < (t.abs().max(T::one())) * lit(1e-14) {
            return Err(Error::StepSizeUnderflow {
                time: as_f64(t),
                step: as_f64(h_free),
            });
        }
        let mut h = h_free;
        if let Some(hmax) = controls.max_step {
            h = h.min(hmax);
        }
        let stop = stops[stop_idx];
        let mut hit_stop = false;
        if t + h >= stop - snap {
            h = stop - t;
            hit_stop = true;
        }

        let stage_result: Result<T> = (|| {
            eval(t, &y, &mut k[0], &mut stats)?;
            combine(&mut y_stage, &y, &k, &[A21], h);
            eval(t + lit::<T>(C2) * h, &y_stage, &mut k[1], &mut stats)?;
            combine(&mut y_stage, &y, &k, &[A31, A32], h);
            eval(t + lit::<T>(C3) * h, &y_stage, &mut k[2], &mut stats)?;
            combine(&mut y_stage, &y, &k, &[A41, A42, A43], h);
            eval(t + lit::<T>(C4) * h, &y_stage, &mut k[3], &mut stats)?;
            combine(&mut y_stage, &y, &k, &[A51, A52, A53, A54], h);
            eval(t + lit::<T>(C5) * h, &y_stage, &mut k[4], &mut stats)?;
            combine(&mut y_stage, &y, &k, &[A61, A62, A63, A64, A65], h);
            eval(t + h, &y_stage, &mut k[5], &mut stats)?;
            combine(&mut y_next, &y, &k, &[A71, 0.0, A73, A74, A75, A76], h);
            eval(t + h, &y_next, &mut k[6], &mut stats)?;

            let mut err_sq = T::zero();
            for i in 0..nd {
                let e = h
                    * (lit::<T>(E1) * k[0][i]
                        + lit::<T>(E3) * k[2][i]
                        + lit::<T>(E4) * k[3][i]
                        + lit::<T>(E5) * k[4][i]
                        + lit::<T>(E6) * k[5][i]
                        + lit::<T>(E7) * k[6][i]);
                let s = system.error_scale(i);
                let w = weight(&y, &y_next, i);
                err_sq += (e / s / w).powi(2);
            }
            Ok((err_sq / nd_t).sqrt())
        })();

        let err = match stage_result {
            Ok(err) => {
                consecutive_failures = 0;
                err
            }
            Err(source) => {
                // a stage left the admissible region; retry with a smaller step
                consecutive_failures += 1;
                if consecutive_failures > 40 {
                    return Err(source);
                }
                stats.steps_rejected += 1;
                h_free = h * lit(0.5);
                continue;
            }
        };

        let safety = lit::<T>(0.9);
        let order_exp = lit::<T>(-0.2);
        if err <= T::one() {
            let t_new = if hit_stop { stop } else { t + h };
            system.check_state(t_new, &y_next[..nd])?;

            while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                let ts = sample_times[next_sample];
                if ts > t {
                    let theta = ((ts - t) / h).min(T::one()).max(T::zero());
                    let mut sampled = vec![T::zero(); n];
                    dense_eval(&y, &y_next, &k, h, theta, &mut sampled);
                    system.check_state(ts, &sampled[..nd])?;
                    times.push(ts);
                    states.push(sampled[..nd].to_vec());
                    quads.push(sampled[nd..].to_vec());
                }
                next_sample += 1;
            }

            t = t_new;
            y.copy_from_slice(&y_next);
            if hit_stop && stop_idx + 1 < stops.len() {
                stop_idx += 1;
            }
            stats.steps_accepted += 1;
            let factor = if err == T::zero() {
                lit(5.0)
            } else {
                (safety * err.powf(order_exp)).min(lit(5.0)).max(lit(0.2))
            };
            // grow from the free step after a stop-clamped accept, so one
            // short landing step does not stall the controller
            h_free = if hit_stop { h_free.max(h * factor) } else { h * factor };
        } else {
            stats.steps_rejected += 1;
            let factor = (safety * err.powf(order_exp)).min(T::one()).max(lit(0.1));
            h_free = h * factor;
        }
    }

    Ok(Solution {
        times,
        states,
        quadratures: quads,
        stats,
    })
}

fn combine<T: Scalar>(out: &mut [T], y: &[T], k: &[Vec<T>], coeffs: &[f64], h: T) {
    for i in 0..out.len() {
        let mut acc = T::zero();
        for (j, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                acc += lit::<T>(c) * k[j][i];
            }
        }
        out[i] = y[i] + h * acc;
    }
}

/// Fourth-order dense output of the Dormand-Prince pair.
fn dense_eval<T: Scalar>(y: &[T], y_next: &[T], k: &[Vec<T>], h: T, theta: T, out: &mut [T]) {
    let theta1 = T::one() - theta;
    for i in 0..out.len() {
        let ydiff = y_next[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        let r4 = ydiff - h * k[6][i] - bspl;
        let r5 = h
            * (lit::<T>(D1) * k[0][i]
                + lit::<T>(D3) * k[2][i]
                + lit::<T>(D4) * k[3][i]
                + lit::<T>(D5) * k[4][i]
                + lit::<T>(D6) * k[5][i]
                + lit::<T>(D7) * k[6][i]);
        out[i] = y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
    }
}

fn trapezoidal<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    t0: T,
    y0: &[T],
    sample_times: &[T],
    controls: &Controls<T>,
) -> Result<Solution<T>> {
    let nd = system.dim();
    let nq = system.quad_dim();
    let t_end = *sample_times.last().unwrap();
    let span = t_end - t0;
    if !(span > T::zero()) {
        return Err(Error::Scenario("integration span must be positive".into()));
    }
    let base_step = controls.max_step.unwrap_or(span / lit(200.0));
    if !(base_step > T::zero()) {
        return Err(Error::Scenario("trapezoidal step must be positive".into()));
    }

    let mut stats = SolverStats::default();
    let mut y = y0.to_vec();
    let mut quad = vec![T::zero(); nq];
    system.check_state(t0, &y)?;

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut quads = Vec::new();
    let mut next_sample = 0usize;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        times.push(sample_times[next_sample]);
        states.push(y.clone());
        quads.push(quad.clone());
        next_sample += 1;
    }

    // targets: every remaining sample time and every breakpoint, in order
    let mut targets: Vec<T> = sample_times[next_sample..].to_vec();
    targets.extend(stop_times(system, t0, t_end));
    targets.sort_by(|a, b| a.partial_cmp(b).expect("target times must be ordered"));
    targets.dedup_by(|a, b| (*a - *b).abs() <= lit::<T>(1e-12) * span);

    let mut t = t0;
    let mut f_old = vec![T::zero(); nd];
    let mut q_old = vec![T::zero(); nq];
    system.rhs(t, &y, &mut f_old)?;
    system.quadrature_rates(t, &y, &mut q_old)?;
    stats.rhs_evaluations += 1;

    for &target in &targets {
        if target <= t {
            continue;
        }
        let interval = target - t;
        let n_sub = (as_f64(interval / base_step)).ceil().max(1.0) as usize;
        let h_nominal = interval / lit(n_sub as f64);
        for piece in 0..n_sub {
            let h = if piece + 1 == n_sub { target - t } else { h_nominal };
            let (y_new, f_new) =
                trapezoidal_step(system, t, &y, &f_old, h, controls, &mut stats)?;
            if nq > 0 {
                let mut q_rate = vec![T::zero(); nq];
                system.quadrature_rates(t + h, &y_new, &mut q_rate)?;
                for i in 0..nq {
                    quad[i] += h * lit::<T>(0.5) * (q_old[i] + q_rate[i]);
                }
                q_old.copy_from_slice(&q_rate);
            }
            t = t + h;
            y = y_new;
            f_old = f_new;
            system.check_state(t, &y)?;
            stats.steps_accepted += 1;
        }
        t = target;
        if next_sample < sample_times.len()
            && (sample_times[next_sample] - target).abs() <= lit::<T>(1e-12) * span
        {
            times.push(sample_times[next_sample]);
            states.push(y.clone());
            quads.push(quad.clone());
            next_sample += 1;
        }
        // refresh the left-hand rates; the rhs may kink at a landed target
        system.rhs(t, &y, &mut f_old)?;
        system.quadrature_rates(t, &y, &mut q_old)?;
        stats.rhs_evaluations += 1;
    }

    Ok(Solution {
        times,
        states,
        quadratures: quads,
        stats,
    })
}

/// One implicit trapezoidal step solved by a Newton iteration with a
/// forward-difference Jacobian; splits the step on non-convergence.
fn trapezoidal_step<T: Scalar, S: OdeSystem<T>>(
    system: &S,
    t: T,
    y: &[T],
    f_old: &[T],
    h: T,
    controls: &Controls<T>,
    stats: &mut SolverStats,
) -> Result<(Vec<T>, Vec<T>)> {
    let nd = system.dim();

    let scaled_norm = |v: &[T], reference: &[T]| -> T {
        let mut acc = T::zero();
        for i in 0..nd {
            let s = system.error_scale(i);
            let w = controls.atol + controls.rtol * reference[i].abs() / s;
            acc += (v[i] / s / w).powi(2);
        }
        (acc / lit(nd as f64)).sqrt()
    };

    let mut attempt_h = h;
    let mut splits = 0usize;
    'attempts: loop {
        let pieces = (as_f64(h / attempt_h)).round().max(1.0) as usize;
        let mut t_cursor = t;
        let mut y_cursor = y.to_vec();
        let mut f_cursor = f_old.to_vec();
        for piece in 0..pieces {
            let hp = if piece + 1 == pieces {
                t + h - t_cursor
            } else {
                attempt_h
            };
            let mut y_new = y_cursor.clone();
            for i in 0..nd {
                y_new[i] = y_cursor[i] + hp * f_cursor[i];
            }
            let mut f_new = vec![T::zero(); nd];
            let mut converged = false;
            for _ in 0..25 {
                stats.newton_iterations += 1;
                if system.rhs(t_cursor + hp, &y_new, &mut f_new).is_err() {
                    splits += 1;
                    if splits > 12 {
                        return Err(Error::NonConvergence {
                            what: "trapezoidal Newton iteration",
                            iterations: 25,
                            residual: f64::NAN,
                        });
                    }
                    attempt_h = attempt_h * lit(0.5);
                    continue 'attempts;
                }
                stats.rhs_evaluations += 1;
                let mut residual = vec![T::zero(); nd];
                for i in 0..nd {
                    residual[i] =
                        y_new[i] - y_cursor[i] - hp * lit::<T>(0.5) * (f_cursor[i] + f_new[i]);
                }
                if scaled_norm(&residual, &y_new) < lit(0.05) {
                    converged = true;
                    break;
                }
                let mut jac = DMatrix::<T>::identity(nd, nd);
                let mut perturbed = vec![T::zero(); nd];
                let mut jacobian_ok = true;
                for j in 0..nd {
                    let s = system.error_scale(j);
                    let delta = lit::<T>(1.49e-8) * (y_new[j].abs() + s);
                    let saved = y_new[j];
                    y_new[j] = saved + delta;
                    let status = system.rhs(t_cursor + hp, &y_new, &mut perturbed);
                    y_new[j] = saved;
                    stats.rhs_evaluations += 1;
                    if status.is_err() {
                        jacobian_ok = false;
                        break;
                    }
                    for i in 0..nd {
                        let df = (perturbed[i] - f_new[i]) / delta;
                        jac[(i, j)] = if i == j { T::one() } else { T::zero() };
                        jac[(i, j)] -= hp * lit::<T>(0.5) * df;
                    }
                }
                if !jacobian_ok {
                    break;
                }
                let minus_residual = DVector::from_iterator(nd, residual.iter().map(|&r| -r));
                let Some(delta) = jac.lu().solve(&minus_residual) else {
                    return Err(Error::SingularJacobian {
                        what: "trapezoidal step",
                    });
                };
                for i in 0..nd {
                    y_new[i] += delta[i];
                }
            }
            if !converged {
                splits += 1;
                if splits > 12 {
                    return Err(Error::NonConvergence {
                        what: "trapezoidal Newton iteration",
                        iterations: 25,
                        residual: f64::NAN,
                    });
                }
                attempt_h = attempt_h * lit(0.5);
                continue 'attempts;
            }
            t_cursor = t_cursor + hp;
            y_cursor = y_new;
            f_cursor = f_new;
        }
        return Ok((y_cursor, f_cursor));
    }
}
