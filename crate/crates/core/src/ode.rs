//! Adaptive Runge-Kutta integration for the oscillatory mode systems.
//!
//! One embedded pair, Dormand-Prince 5(4) with the FSAL economization, is
//! enough for everything this crate integrates: the systems are small,
//! non-stiff, highly oscillatory, and need tight tolerances. The caller
//! supplies a hard step ceiling when the oscillation frequency is known
//! (`h <= 0.1 / omega` keeps the local error model honest); the controller
//! otherwise runs the standard PI-free step-halving/growing scheme on the
//! embedded error estimate.
//!
//! The trace is decimated on the fly to a bounded sample count by stride
//! doubling, so million-step runs return evenly thinned histories without
//! unbounded memory.

use crate::error::{Error, Result};
use crate::{cst, Real};

/// Integration controls. `rtol`/`atol` enter the standard mixed error norm
/// `|e_i| / (atol + rtol * max(|y_i|, |y_new_i|))`.
#[derive(Debug, Clone, Copy)]
pub struct StepperOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Hard ceiling on the step size; oscillatory callers set this to
    /// resolve the fastest period.
    pub h_max: Option<T>,
    /// Initial step; defaults to the ceiling or a small fraction of the span.
    pub h_init: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Default for StepperOptions<T> {
    fn default() -> Self {
        StepperOptions {
            rtol: cst(1.0e-10),
            atol: cst(1.0e-12),
            h_max: None,
            h_init: None,
            max_steps: 50_000_000,
        }
    }
}

/// A finished integration: the decimated trace, the exact final state, and
/// the solver statistics the verification layers report.
#[derive(Debug, Clone)]
pub struct OdeRun<T, const N: usize> {
    /// Thinned `(t, y)` history; first entry is the initial state, last is
    /// the final one, times strictly increasing.
    pub samples: Vec<(T, [T; N])>,
    pub final_time: T,
    pub final_state: [T; N],
    pub steps: usize,
    pub rejected: usize,
    /// Largest accepted value of the scaled local error (at most 1 by
    /// construction).
    pub max_error_ratio: T,
    /// Largest accepted step.
    pub max_step: T,
}

const STAGES: usize = 7;

/// Dormand-Prince coefficients. `A` is strictly lower triangular with the
/// seventh row equal to `B` (first-same-as-last), `E` is the difference
/// between the fifth- and fourth-order weights.
const DP_C: [f64; STAGES] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; STAGES] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; STAGES] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Bounded-memory trace collector: once `cap` samples are held, every other
/// one is dropped and the keep stride doubles.
struct Decimator<T, const N: usize> {
    samples: Vec<(T, [T; N])>,
    cap: usize,
    stride: usize,
    seen: usize,
}

impl<T: Real, const N: usize> Decimator<T, N> {
    fn new(cap: usize) -> Self {
        Decimator { samples: Vec::new(), cap: cap.max(8), stride: 1, seen: 0 }
    }

    fn push(&mut self, t: T, y: [T; N]) {
        if self.seen % self.stride == 0 {
            if self.samples.len() == self.cap {
                let mut keep = 0;
                self.samples.retain(|_| {
                    keep += 1;
                    (keep - 1) % 2 == 0
                });
                self.stride *= 2;
            }
            if self.seen % self.stride == 0 {
                self.samples.push((t, y));
            }
        }
        self.seen += 1;
    }

    fn finish(mut self, t: T, y: [T; N]) -> Vec<(T, [T; N])> {
        if let Some(last) = self.samples.last() {
            if last.0 < t {
                self.samples.push((t, y));
            } else {
                *self.samples.last_mut().expect("nonempty") = (t, y);
            }
        } else {
            self.samples.push((t, y));
        }
        self.samples
    }
}

#[inline]
fn axpy<T: Real, const N: usize>(y: &[T; N], h: T, ks: &[[T; N]], weights: &[f64]) -> [T; N] {
    let mut out = *y;
    for (k, &w) in ks.iter().zip(weights) {
        if w != 0.0 {
            let w: T = cst(w);
            for i in 0..N {
                out[i] += h * w * k[i];
            }
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`, recording a decimated
/// trace of at most roughly `store_cap` samples.
pub fn integrate_dp54<T: Real, const N: usize, F>(
    f: F,
    t0: T,
    t1: T,
    y0: [T; N],
    opts: &StepperOptions<T>,
    store_cap: usize,
) -> Result<OdeRun<T, N>>
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    if !(t1 > t0) {
        return Err(Error::domain(format!("integration span [{t0}, {t1}] is empty")));
    }
    if !(opts.rtol > T::zero()) || !(opts.atol > T::zero()) {
        return Err(Error::domain("tolerances must be positive".to_string()));
    }
    let span = t1 - t0;
    let h_cap = opts.h_max.unwrap_or(span).min(span);
    if !(h_cap > T::zero()) {
        return Err(Error::domain("step ceiling must be positive".to_string()));
    }

    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h_init.unwrap_or(h_cap).min(h_cap);
    let mut k: [[T; N]; STAGES] = [[T::zero(); N]; STAGES];
    k[0] = f(t, &y);

    let mut trace = Decimator::new(store_cap);
    trace.push(t, y);

    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut max_error_ratio = T::zero();
    let mut max_step = T::zero();
    let order_scale = cst::<T>(0.2); // error ~ h^5, so h scales by err^(-1/5)

    while t < t1 {
        if steps + rejected >= opts.max_steps {
            return Err(Error::NonConvergence(format!(
                "step budget {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        let h_floor = t.abs().max(T::one()) * T::epsilon() * cst(32.0);
        if h < h_floor {
            return Err(Error::StepUnderflow {
                t_reached: t.to_f64().unwrap_or(f64::NAN),
                detail: format!("step {h:e} fell under the roundoff floor {h_floor:e}"),
            });
        }
        let h_here = h.min(t1 - t);

        for s in 1..STAGES {
            let ys = axpy(&y, h_here, &k[..s], &DP_A[s][..s]);
            k[s] = f(t + h_here * cst(DP_C[s]), &ys);
        }
        let y_new = axpy(&y, h_here, &k, &DP_B);

        // Scaled RMS of the embedded error.
        let mut err_sq = T::zero();
        for i in 0..N {
            let mut e = T::zero();
            for (ks, &w) in k.iter().zip(&DP_E) {
                if w != 0.0 {
                    e += cst::<T>(w) * ks[i];
                }
            }
            e *= h_here;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            err_sq += r * r;
        }
        let err = (err_sq / cst(N as f64)).sqrt();

        if err <= T::one() || h_here <= h_floor {
            t += h_here;
            y = y_new;
            k[0] = k[STAGES - 1]; // first-same-as-last
            steps += 1;
            max_error_ratio = max_error_ratio.max(err);
            max_step = max_step.max(h_here);
            trace.push(t, y);
        } else {
            rejected += 1;
        }
        let grow = if err > T::zero() {
            (cst::<T>(0.9) * err.powf(-order_scale)).max(cst(0.2)).min(cst(5.0))
        } else {
            cst(5.0)
        };
        h = (h_here * grow).min(h_cap);
    }

    Ok(OdeRun {
        samples: trace.finish(t, y),
        final_time: t,
        final_state: y,
        steps,
        rejected,
        max_error_ratio,
        max_step,
    })
}
