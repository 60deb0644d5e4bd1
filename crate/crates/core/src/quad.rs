//! Quadrature toolkit.
//!
//! Three layers, from generic to specialized:
//!
//! * fixed Gauss-Legendre rules ([`GaussRule`]) plus bisection-adaptive
//!   drivers with per-panel error estimates;
//! * a Levin collocation path ([`levin_panel`], [`osc_integral`]) for
//!   integrands of the form `w(u) * exp(i * phase(u))` where the phase sweeps
//!   thousands (or 10^15) of radians across the window while `w` stays
//!   smooth; node-based rules are hopeless there, solving the collocated ODE
//!   `F' + i * phase' * F = w` is not;
//! * slow reference rules ([`composite_simpson`]) kept around so tests can
//!   check the fast paths against an independent implementation.
//!
//! The adaptive drivers report `(value, error, evals)` and never panic on
//! hard integrands; callers compare the reported error against their own
//! budget and escalate to [`crate::Error::Quadrature`] if unsatisfied.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::{cst, Real};

/// Phase span (radians) below which a panel is handed to plain adaptive
/// Gauss-Legendre instead of Levin collocation. Adaptive GL resolves a few
/// dozen radians in two or three bisections; Levin conditioning degrades
/// when the phase term no longer dominates the differentiation matrix.
const GL_PHASE_LIMIT: f64 = 24.0;

/// Fixed Gauss-Legendre rule on the reference interval `[-1, 1]`.
///
/// Nodes are computed at construction by Newton iteration on the Legendre
/// polynomial, so rules of any order are available without tables. An
/// `n`-point rule integrates polynomials of degree `2n - 1` exactly.
#[derive(Debug, Clone)]
pub struct GaussRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

/// Legendre polynomial `P_n` and its derivative at `x`, by the three-term
/// recurrence. `x` must be strictly inside `(-1, 1)`.
fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    let mut below = T::one();
    let mut p = x;
    for k in 1..n {
        let kf = cst::<T>(k as f64);
        let two_k1 = cst::<T>(2.0) * kf + T::one();
        let next = (two_k1 * x * p - kf * below) / (kf + T::one());
        below = p;
        p = next;
    }
    let d = cst::<T>(n as f64) * (x * p - below) / (x * x - T::one());
    (p, d)
}

impl<T: Real> GaussRule<T> {
    /// Builds the `n`-point rule, `n >= 2`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "a Gauss rule needs at least two nodes");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = cst::<T>(n as f64);
        for i in 0..n {
            // Chebyshev angle seed, then Newton; converges in 3-5 steps.
            let theta = T::PI() * (cst::<T>(i as f64) + cst(0.75)) / (nf + cst(0.5));
            let mut x = theta.cos();
            for _ in 0..64 {
                let (p, d) = legendre_with_derivative(n, x);
                let delta = p / d;
                x = x - delta;
                if delta.abs() <= T::epsilon() * cst(4.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            nodes[i] = x;
            weights[i] = cst::<T>(2.0) / ((T::one() - x * x) * d * d);
        }
        GaussRule { nodes, weights }
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True only for a degenerate rule, which the constructor forbids.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Single application of the rule on `[a, b]`.
    pub fn integrate(&self, f: &impl Fn(T) -> T, a: T, b: T) -> T {
        let half = (b - a) * cst::<T>(0.5);
        let mid = (a + b) * cst::<T>(0.5);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += *w * f(mid + half * *x);
        }
        acc * half
    }

    /// Single application for complex-valued integrands.
    pub fn integrate_complex(&self, f: &impl Fn(T) -> Complex<T>, a: T, b: T) -> Complex<T> {
        let half = (b - a) * cst::<T>(0.5);
        let mid = (a + b) * cst::<T>(0.5);
        let mut acc = Complex::new(T::zero(), T::zero());
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * *x) * *w;
        }
        acc * half
    }
}

/// Outcome of an adaptive pass: the value, a (conservative) error estimate
/// from comparing each panel against its bisection, and the number of
/// integrand evaluations spent.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<V, T> {
    pub value: V,
    pub error: T,
    pub evals: usize,
}

/// Bisection-adaptive integration of a real integrand.
///
/// The absolute error budget `tol` is split between halves at every
/// subdivision; the returned estimate is the sum of accepted panel
/// discrepancies and usually overstates the true error by a wide margin.
pub fn adaptive<T: Real>(
    rule: &GaussRule<T>,
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    tol: T,
    max_depth: u32,
) -> Quadrature<T, T> {
    if !(b > a) {
        return Quadrature { value: T::zero(), error: T::zero(), evals: 0 };
    }
    let whole = rule.integrate(f, a, b);
    let mut evals = rule.len();
    let (value, error) = adapt_real(rule, f, a, b, whole, tol, max_depth, &mut evals);
    Quadrature { value, error, evals }
}

#[allow(clippy::too_many_arguments)]
fn adapt_real<T: Real>(
    rule: &GaussRule<T>,
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    whole: T,
    tol: T,
    depth: u32,
    evals: &mut usize,
) -> (T, T) {
    let mid = (a + b) * cst::<T>(0.5);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    *evals += 2 * rule.len();
    let sum = left + right;
    let diff = (sum - whole).abs();
    if diff <= tol || depth == 0 || !(mid > a && mid < b) {
        return (sum, diff);
    }
    let half_tol = tol * cst::<T>(0.5);
    let (lv, le) = adapt_real(rule, f, a, mid, left, half_tol, depth - 1, evals);
    let (rv, re) = adapt_real(rule, f, mid, b, right, half_tol, depth - 1, evals);
    (lv + rv, le + re)
}

/// Bisection-adaptive integration of a complex integrand.
pub fn adaptive_complex<T: Real>(
    rule: &GaussRule<T>,
    f: &impl Fn(T) -> Complex<T>,
    a: T,
    b: T,
    tol: T,
    max_depth: u32,
) -> Quadrature<Complex<T>, T> {
    if !(b > a) {
        return Quadrature {
            value: Complex::new(T::zero(), T::zero()),
            error: T::zero(),
            evals: 0,
        };
    }
    let whole = rule.integrate_complex(f, a, b);
    let mut evals = rule.len();
    let (value, error) = adapt_complex(rule, f, a, b, whole, tol, max_depth, &mut evals);
    Quadrature { value, error, evals }
}

#[allow(clippy::too_many_arguments)]
fn adapt_complex<T: Real>(
    rule: &GaussRule<T>,
    f: &impl Fn(T) -> Complex<T>,
    a: T,
    b: T,
    whole: Complex<T>,
    tol: T,
    depth: u32,
    evals: &mut usize,
) -> (Complex<T>, T) {
    let mid = (a + b) * cst::<T>(0.5);
    let left = rule.integrate_complex(f, a, mid);
    let right = rule.integrate_complex(f, mid, b);
    *evals += 2 * rule.len();
    let sum = left + right;
    let diff = (sum - whole).norm();
    if diff <= tol || depth == 0 || !(mid > a && mid < b) {
        return (sum, diff);
    }
    let half_tol = tol * cst::<T>(0.5);
    let (lv, le) = adapt_complex(rule, f, a, mid, left, half_tol, depth - 1, evals);
    let (rv, re) = adapt_complex(rule, f, mid, b, right, half_tol, depth - 1, evals);
    (lv + rv, le + re)
}

/// Adaptive integration with known awkward points (kinks, clamp boundaries)
/// promoted to panel edges so the subdivision never straddles them.
///
/// Breakpoints outside `(a, b)` are ignored; the budget is shared equally
/// between the resulting segments.
pub fn adaptive_with_breakpoints<T: Real>(
    rule: &GaussRule<T>,
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    breakpoints: &[T],
    tol: T,
    max_depth: u32,
) -> Quadrature<T, T> {
    if !(b > a) {
        return Quadrature { value: T::zero(), error: T::zero(), evals: 0 };
    }
    let mut cuts: Vec<T> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    cuts.sort_by(|p, q| p.partial_cmp(q).expect("breakpoints must be ordered"));
    cuts.dedup_by(|p, q| p == q);
    let segments = cuts.len() + 1;
    let share = tol / cst::<T>(segments as f64);
    let mut lo = a;
    let mut out = Quadrature { value: T::zero(), error: T::zero(), evals: 0 };
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let q = adaptive(rule, f, lo, hi, share, max_depth);
        out.value += q.value;
        out.error += q.error;
        out.evals += q.evals;
        lo = hi;
    }
    out
}

/// Chebyshev-Gauss-Lobatto grid on `[-1, 1]` with its spectral
/// differentiation matrix, stored row-major.
///
/// The diagonal uses the negative-sum trick, which keeps the matrix exact on
/// constants and is noticeably better conditioned than the closed-form
/// corner entries.
#[derive(Debug, Clone)]
pub struct ChebDiff<T> {
    n: usize,
    x: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> ChebDiff<T> {
    /// Builds the `n`-point grid, `n >= 2`. Nodes descend from `+1` to `-1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "collocation needs at least two nodes");
        let nm1 = cst::<T>((n - 1) as f64);
        let x: Vec<T> = (0..n).map(|j| (T::PI() * cst::<T>(j as f64) / nm1).cos()).collect();
        let corner = |j: usize| -> T {
            if j == 0 || j == n - 1 {
                cst(2.0)
            } else {
                T::one()
            }
        };
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            let mut diag = T::zero();
            for j in 0..n {
                if i == j {
                    continue;
                }
                let sign = if (i + j) % 2 == 0 { T::one() } else { -T::one() };
                let entry = corner(i) / corner(j) * sign / (x[i] - x[j]);
                d[i * n + j] = entry;
                diag -= entry;
            }
            d[i * n + i] = diag;
        }
        ChebDiff { n, x, d }
    }

    /// Number of collocation nodes.
    pub fn len(&self) -> usize {
        self.n
    }

    /// True only for a degenerate grid, which the constructor forbids.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Dense complex linear solve by Gaussian elimination with partial
/// pivoting; `None` when a pivot vanishes or goes non-finite.
fn solve_complex_inplace<T: Real>(m: &mut [Complex<T>], rhs: &mut [Complex<T>]) -> Option<()> {
    let n = rhs.len();
    debug_assert_eq!(m.len(), n * n);
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].norm_sqr();
        for r in col + 1..n {
            let v = m[r * n + col].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > T::zero()) || !best.is_finite() {
            return None;
        }
        if piv != col {
            for c in col..n {
                m.swap(piv * n + c, col * n + c);
            }
            rhs.swap(piv, col);
        }
        let inv = m[col * n + col].inv();
        for r in col + 1..n {
            let factor = m[r * n + col] * inv;
            if factor.norm_sqr() == T::zero() {
                continue;
            }
            for c in col + 1..n {
                m[r * n + c] = m[r * n + c] - factor * m[col * n + c];
            }
            rhs[r] = rhs[r] - factor * rhs[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for c in col + 1..n {
            acc = acc - m[col * n + c] * rhs[c];
        }
        rhs[col] = acc * m[col * n + col].inv();
    }
    Some(())
}

/// One Levin collocation panel for `int_a^b w(u) exp(i phase(u)) du`.
///
/// Finds `F` with `F' + i phase' F = w` on the Chebyshev grid and returns
/// the boundary difference `F(b) e^{i phase(b)} - F(a) e^{i phase(a)}`.
/// Only `phase'` enters the linear system, so the phase itself may hold
/// astronomically many radians without hurting conditioning; `None` means
/// the collocation system was singular and the caller should subdivide.
pub fn levin_panel<T: Real>(
    cd: &ChebDiff<T>,
    w: &(dyn Fn(T) -> T + Sync),
    phase: &(dyn Fn(T) -> T + Sync),
    rate: &(dyn Fn(T) -> T + Sync),
    a: T,
    b: T,
) -> Option<Complex<T>> {
    let n = cd.n;
    let half = (b - a) * cst::<T>(0.5);
    let mid = (a + b) * cst::<T>(0.5);
    let scale = cst::<T>(2.0) / (b - a);
    let mut mat = vec![Complex::new(T::zero(), T::zero()); n * n];
    let mut rhs = vec![Complex::new(T::zero(), T::zero()); n];
    for i in 0..n {
        let u = mid + half * cd.x[i];
        for j in 0..n {
            mat[i * n + j] = Complex::new(scale * cd.d[i * n + j], T::zero());
        }
        mat[i * n + i] = mat[i * n + i] + Complex::new(T::zero(), rate(u));
        rhs[i] = Complex::new(w(u), T::zero());
    }
    solve_complex_inplace(&mut mat, &mut rhs)?;
    let at_b = Complex::from_polar(T::one(), phase(b));
    let at_a = Complex::from_polar(T::one(), phase(a));
    // Node 0 sits at +1 (= b), node n-1 at -1 (= a).
    Some(rhs[0] * at_b - rhs[n - 1] * at_a)
}

/// Monotone-phase description of an oscillatory factor `exp(i * phase(u))`.
///
/// `rate` must be the derivative of `phase`; both are assumed monotone on
/// any interval they are integrated over (the adaptive driver survives mild
/// violations by falling back to subdivision, but makes no promises).
pub struct Oscillator<'f, T> {
    pub phase: &'f (dyn Fn(T) -> T + Sync),
    pub rate: &'f (dyn Fn(T) -> T + Sync),
}

/// Reusable rule set: one adaptive Gauss rule plus the coarse/fine Levin
/// grids. Construction costs a few microseconds; hold one per long-lived
/// consumer instead of rebuilding per integral.
#[derive(Debug, Clone)]
pub struct QuadEngine<T> {
    pub gl: GaussRule<T>,
    pub cheb_lo: ChebDiff<T>,
    pub cheb_hi: ChebDiff<T>,
}

impl<T: Real> QuadEngine<T> {
    pub fn new() -> Self {
        QuadEngine {
            gl: GaussRule::new(15),
            cheb_lo: ChebDiff::new(12),
            cheb_hi: ChebDiff::new(24),
        }
    }
}

impl<T: Real> Default for QuadEngine<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `int_a^b w(u) exp(i phase(u)) du` for smooth `w` and monotone phase.
///
/// The window is first cut into chunks no wider than half of
/// `smooth_scale` (the scale on which `w` genuinely varies, e.g. the
/// mollifier width), then each chunk goes to adaptive Gauss-Legendre when
/// its phase span is modest and to a Levin pair (12 vs 24 nodes, their
/// difference is the error estimate) when it is not. Chunks whose Levin
/// pair disagrees are bisected, re-deciding the route each time.
pub fn osc_integral<T: Real>(
    engine: &QuadEngine<T>,
    w: &(dyn Fn(T) -> T + Sync),
    osc: &Oscillator<'_, T>,
    a: T,
    b: T,
    smooth_scale: T,
    tol: T,
) -> Quadrature<Complex<T>, T> {
    let mut out =
        Quadrature { value: Complex::new(T::zero(), T::zero()), error: T::zero(), evals: 0 };
    if !(b > a) {
        return out;
    }
    let width = b - a;
    let min_chunk = width / cst::<T>(4096.0);
    let chunk = (smooth_scale * cst::<T>(0.5)).max(min_chunk).min(width);
    let n_chunks = (width / chunk).to_f64().map(f64::ceil).unwrap_or(1.0) as usize;
    let n_chunks = n_chunks.clamp(1, 4096);
    let share = tol / cst::<T>(n_chunks as f64);
    for k in 0..n_chunks {
        let ca = a + width * cst::<T>(k as f64 / n_chunks as f64);
        let cb = if k + 1 == n_chunks {
            b
        } else {
            a + width * cst::<T>((k + 1) as f64 / n_chunks as f64)
        };
        osc_panel(engine, w, osc, ca, cb, share, 24, &mut out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn osc_panel<T: Real>(
    engine: &QuadEngine<T>,
    w: &(dyn Fn(T) -> T + Sync),
    osc: &Oscillator<'_, T>,
    a: T,
    b: T,
    share: T,
    depth: u32,
    out: &mut Quadrature<Complex<T>, T>,
) {
    if !(b > a) {
        return;
    }
    let span = ((osc.phase)(b) - (osc.phase)(a)).abs();
    if span <= cst(GL_PHASE_LIMIT) {
        let g = |u: T| Complex::from_polar(w(u), (osc.phase)(u));
        let q = adaptive_complex(&engine.gl, &g, a, b, share, 18);
        out.value = out.value + q.value;
        out.error += q.error;
        out.evals += q.evals;
        return;
    }
    let lo = levin_panel(&engine.cheb_lo, w, osc.phase, osc.rate, a, b);
    let hi = levin_panel(&engine.cheb_hi, w, osc.phase, osc.rate, a, b);
    if let (Some(coarse), Some(fine)) = (lo, hi) {
        let diff = (fine - coarse).norm();
        out.evals += engine.cheb_lo.len() + engine.cheb_hi.len();
        if diff <= share || depth == 0 {
            out.value = out.value + fine;
            out.error += diff;
            return;
        }
    } else if depth == 0 {
        // Singular collocation with no subdivision budget left: surface a
        // large error estimate rather than a wrong value silently.
        out.error += share * cst(1.0e6);
        return;
    }
    let mid = (a + b) * cst::<T>(0.5);
    if !(mid > a && mid < b) {
        out.error += share;
        return;
    }
    let half_share = share * cst::<T>(0.5);
    osc_panel(engine, w, osc, a, mid, half_share, depth - 1, out);
    osc_panel(engine, w, osc, mid, b, half_share, depth - 1, out);
}

/// Composite Simpson rule with compensated summation. Slow by design; this
/// is the independent oracle the fast paths are tested against.
pub fn composite_simpson<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, intervals: usize) -> T {
    let n = intervals.max(2) & !1usize;
    let h = (b - a) / cst::<T>(n as f64);
    let mut acc = f(a) + f(b);
    let mut comp = T::zero();
    let add = |acc: &mut T, comp: &mut T, x: T| {
        // Kahan update keeps millions of terms from eroding the tail.
        let y = x - *comp;
        let t = *acc + y;
        *comp = (t - *acc) - y;
        *acc = t;
    };
    for k in 1..n {
        let weight = if k % 2 == 1 { cst::<T>(4.0) } else { cst::<T>(2.0) };
        add(&mut acc, &mut comp, weight * f(a + h * cst::<T>(k as f64)));
    }
    acc * h / cst(3.0)
}

/// Average of `|c + m sin(theta)|` over a full period, in closed form.
///
/// Used to integrate the modulus of a locally sinusoidal field against a
/// slowly varying envelope without resolving individual oscillations.
pub fn mean_abs_offset_sin<T: Real>(c: T, m: T) -> T {
    let c = c.abs();
    let m = m.abs();
    if m <= c {
        return c;
    }
    let s = (c / m).min(T::one());
    let beta = s.asin();
    cst::<T>(2.0) / T::PI() * (c * beta + m * (T::one() - s * s).sqrt())
}

/// Root of `f` in the bracket `[a, b]`, by bisection with secant
/// acceleration (Illinois update). Requires a sign change on the bracket.
pub fn root_bracketed<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    xtol: T,
    max_iter: usize,
) -> Result<T> {
    let mut lo = a;
    let mut hi = b;
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo * fhi > T::zero() {
        return Err(Error::NonConvergence(format!("no sign change on bracket [{lo:e}, {hi:e}]")));
    }
    let mut stale_lo = false;
    let mut stale_hi = false;
    for _ in 0..max_iter {
        if (hi - lo).abs() <= xtol {
            return Ok((lo + hi) * cst(0.5));
        }
        // Illinois: halve the function value on the side that keeps losing,
        // so the secant cannot stall against one bracket end.
        let wlo = if stale_lo { flo * cst(0.5) } else { flo };
        let whi = if stale_hi { fhi * cst(0.5) } else { fhi };
        let mut x = lo - wlo * (hi - lo) / (whi - wlo);
        let margin = (hi - lo) * cst(1.0e-3);
        if !(x > lo + margin && x < hi - margin) {
            x = (lo + hi) * cst(0.5);
        }
        let fx = f(x);
        if fx == T::zero() {
            return Ok(x);
        }
        if (fx > T::zero()) == (fhi > T::zero()) {
            hi = x;
            fhi = fx;
            stale_hi = false;
            stale_lo = true;
        } else {
            lo = x;
            flo = fx;
            stale_lo = false;
            stale_hi = true;
        }
    }
    Err(Error::NonConvergence(format!("bracket [{lo:e}, {hi:e}] did not shrink below {xtol:e}")))
}
