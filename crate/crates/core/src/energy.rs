//! Mode energies for the regularized problem and the growth budget that
//! controls them.
//!
//! For a fixed frequency `xi` the mode `v(t) = u_hat(t, xi)` solves
//!
//! ```text
//!     v'' + a(t, xi) |xi|^2 v = 0
//! ```
//!
//! with the exact, possibly singular symbol `a`. The approximate energy uses
//! the mollified symbol `a_eps` instead:
//!
//! ```text
//!     E_eps(t) = a_eps(t, xi) |xi|^2 |v|^2 + |v'|^2 ,
//! ```
//!
//! and differentiating along solutions gives `E_eps' <= g E_eps` with the
//! growth integrand
//!
//! ```text
//!     g(t) = |a_eps'| / a_eps + |xi| |a_eps - a| / sqrt(a_eps) .
//! ```
//!
//! [`integrate_mode`] produces the trace `(v, v', E_eps, G)` over the time
//! domain, [`gronwall_bound`] and [`gronwall_cumulative`] integrate `g`, and
//! [`ExponentModel`] packages the closed-form exponents the theory predicts
//! for the two singular regimes, with `eps = min(1/|xi|, tau1)` tying the
//! mollification width to the frequency (see [`coupled_eps`]).
//!
//! # Integrating the growth integrand
//!
//! `g` oscillates with the symbol phase, and near the singular instant the
//! period collapses faster than any fixed grid. The integrator therefore
//! splits the domain into three bands by the local phase rate `phi'`:
//!
//! * **attenuated band** (`eps * phi' >= 60`): the convolution kills the
//!   oscillation of `a_eps` entirely, so `a_eps` and `a_eps'` are smooth in
//!   `t` while the exact symbol still spins. The term `|a_eps - a|` is
//!   replaced by its average over the equidistributed phase,
//!   `mean_abs_offset_sin(a_eps - offset, amp)`.
//! * **carrier band** (`t * phi' >= 130`, oscillation resolved by the kernel
//!   but still fast relative to the envelope): `a_eps`, `a_eps'`, and
//!   `a_eps - a` are locally pure tones. Three samples a quarter-period
//!   apart, combined with the exactly known phase values, recover each
//!   tone's offset and quadrature components by a linear solve, and the
//!   integrand is replaced by its one-period average.
//! * **direct band** (everything else, and all of it for the blow-up-clock
//!   families, whose total phase is only a handful of radians): pointwise
//!   adaptive quadrature in logarithmic time, with the clamp boundaries
//!   promoted to panel edges.
//!
//! The band replacements are exact in the limit of infinitely many periods
//! per envelope scale; at the thresholds above their bias is below a percent
//! of the affected band's contribution, far inside the slack of every bound
//! consumer. Pieces narrower than two periods fall back to the direct rule,
//! which keeps dense checkpoint grids exact. Phase arguments beyond
//! `~1e12 rad` lose pointwise meaning in `f64`; the attenuated band never
//! consumes pointwise phases, so the scheme stays distribution-valid
//! arbitrarily close to the singular instant (see the discussion in
//! [`crate::coefficients`]).

use std::cell::RefCell;

use num_complex::Complex;

use crate::coefficients::{CoefficientField, Phase, SymbolOscillation};
use crate::error::{Error, Result};
use crate::moduli::PsiSpec;
use crate::mollify::MollifiedCoefficient;
use crate::ode::{integrate_dp54, StepperOptions};
use crate::quad::{
    adaptive_complex, adaptive_with_breakpoints, mean_abs_offset_sin, GaussRule, Quadrature,
};
use crate::{cst, Real};

/// Snapshot of one Fourier mode: position, velocity, time, frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState<T> {
    pub t: T,
    pub u: Complex<T>,
    pub u_t: Complex<T>,
    pub xi: Vec<T>,
}

/// One stored point of a mode trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceSample<T> {
    pub t: T,
    pub u: Complex<T>,
    pub u_t: Complex<T>,
    /// Approximate energy `a_eps |xi|^2 |u|^2 + |u_t|^2` at `t`.
    pub energy: T,
    /// Cumulative growth budget `G(t) = int_0^t g`, measured from the
    /// singular instant, not from the start of integration.
    pub gronwall: T,
}

/// Thinned history of one integrated mode together with its energies and
/// growth budget.
///
/// Invariants (enforced by construction, reasserted by the test suite):
/// energies are strictly positive for nonzero states, `gronwall` is
/// non-decreasing, times increase strictly, and the first sample sits at
/// `start_time`.
#[derive(Debug, Clone)]
pub struct EnergyTrace<T> {
    pub xi: Vec<T>,
    pub xi_norm: T,
    /// Mollification width the energies were evaluated with.
    pub eps: T,
    pub start_time: T,
    pub samples: Vec<TraceSample<T>>,
    pub steps: usize,
    pub rejected: usize,
    pub max_error_ratio: T,
}

impl<T: Real> EnergyTrace<T> {
    pub fn initial_energy(&self) -> T {
        self.samples.first().map(|s| s.energy).unwrap_or_else(T::zero)
    }

    pub fn final_energy(&self) -> T {
        self.samples.last().map(|s| s.energy).unwrap_or_else(T::zero)
    }

    /// `ln(E(T) / E(0))`; the quantity the growth fits consume.
    pub fn log_energy_ratio(&self) -> T {
        (self.final_energy() / self.initial_energy()).ln()
    }

    /// Reassembles the full state at sample index `k`.
    pub fn state_at(&self, k: usize) -> ModeState<T> {
        let s = &self.samples[k];
        ModeState { t: s.t, u: s.u, u_t: s.u_t, xi: self.xi.clone() }
    }
}

/// Knobs for [`integrate_mode`].
#[derive(Debug, Clone)]
pub struct ModeOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Cap on stored samples; the stepper keeps endpoints exact and thins
    /// the interior.
    pub store_cap: usize,
    /// Where to start integrating. `None` picks `0` when the field extends
    /// continuously to the singular instant and [`DEFAULT_SINGULAR_START`]
    /// otherwise; fields without a limit at zero cannot start at `0`.
    pub start_time: Option<T>,
    /// Whether to attach the cumulative growth budget to the samples.
    pub gronwall: bool,
    /// Relative tolerance for the attached growth budget.
    pub gronwall_rel_tol: T,
}

impl<T: Real> Default for ModeOptions<T> {
    fn default() -> Self {
        ModeOptions {
            rtol: cst(1.0e-10),
            atol: cst(1.0e-12),
            store_cap: 1024,
            start_time: None,
            gronwall: true,
            gronwall_rel_tol: cst(1.0e-3),
        }
    }
}

/// Start time used for fields that do not extend continuously to `t = 0`.
///
/// The Cauchy data of the singular families is posed away from the bad
/// instant; `0.05` keeps every bundled family inside the pointwise phase
/// budget while leaving two decades of singular behaviour in view. Override
/// through [`ModeOptions::start_time`] when a run needs to press closer.
pub const DEFAULT_SINGULAR_START: f64 = 0.05;

/// `tau1 = min(tau0, T, 1/e)`: the lag scale that caps admissible
/// mollification widths and seeds the frequency threshold of the log-type
/// exponent model.
pub fn tau1<T: Real>(field: &CoefficientField<T>) -> T {
    let e_inv = T::one().exp().recip();
    let tau0 = field.certificate().map(|c| c.tau0).unwrap_or_else(|| field.horizon());
    tau0.min(field.horizon()).min(e_inv)
}

/// The frequency-coupled mollification width `eps = min(1/|xi|, tau1)`.
pub fn coupled_eps<T: Real>(field: &CoefficientField<T>, xi_norm: T) -> Result<T> {
    if !(xi_norm > T::zero()) {
        return Err(Error::domain(format!("frequency magnitude must be positive, got {xi_norm}")));
    }
    Ok(xi_norm.recip().min(tau1(field)))
}

fn norm<T: Real>(xi: &[T]) -> T {
    xi.iter().map(|&x| x * x).fold(T::zero(), |acc, v| acc + v).sqrt()
}

/// Approximate energy of a state under the given mollified symbol.
pub fn approximate_energy<T: Real>(
    state: &ModeState<T>,
    mc: &MollifiedCoefficient<'_, T>,
) -> Result<T> {
    let xi_sq = state.xi.iter().map(|&x| x * x).fold(T::zero(), |acc, v| acc + v);
    let a_eps = mc.value(state.t, &state.xi)?;
    Ok(a_eps * xi_sq * state.u.norm_sqr() + state.u_t.norm_sqr())
}

/// Integrates one mode of the wave equation with the exact symbol and
/// attaches approximate energies and the cumulative growth budget.
///
/// The step ceiling `0.1 / (|xi| sqrt(Lambda0))` resolves the fastest
/// oscillation period regardless of tolerances. Requires `|xi| >= 1`; below
/// that the mollification coupling and the exponent models are vacuous.
pub fn integrate_mode<T: Real>(
    mc: &MollifiedCoefficient<'_, T>,
    xi: &[T],
    initial: (Complex<T>, Complex<T>),
    opts: &ModeOptions<T>,
) -> Result<EnergyTrace<T>> {
    let field = mc.field();
    let xi_norm = norm(xi);
    if !(xi_norm >= T::one()) {
        return Err(Error::domain(format!(
            "mode integration needs |xi| >= 1, got |xi| = {xi_norm}"
        )));
    }
    let horizon = field.horizon();
    let start = match opts.start_time {
        Some(s) => {
            if !(s >= T::zero()) || s >= horizon {
                return Err(Error::domain(format!("start time {s} outside [0, {horizon})")));
            }
            if s == T::zero() && !field.has_limit_at_zero() {
                return Err(Error::domain(
                    "field has no limit at t = 0; start the mode at a positive time".to_string(),
                ));
            }
            s
        }
        None => {
            if field.has_limit_at_zero() {
                T::zero()
            } else {
                cst::<T>(DEFAULT_SINGULAR_START).min(horizon * cst(0.5))
            }
        }
    };

    let ceiling = cst::<T>(0.1) / (xi_norm * field.big_lambda0().sqrt());
    let sopts = StepperOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        h_max: Some(ceiling),
        h_init: None,
        ..StepperOptions::default()
    };

    let xi_sq = xi_norm * xi_norm;
    let rhs = |t: T, y: &[T; 4]| -> [T; 4] {
        // Stage times stay inside [start, horizon] up to rounding; clamp so
        // the symbol's domain check never fires on a last-ulp overshoot.
        let tc = t.max(start).min(horizon);
        let a = field.symbol(tc, xi).expect("symbol must evaluate inside the integration span");
        let f = a * xi_sq;
        [y[2], y[3], -f * y[0], -f * y[1]]
    };

    let y0 = [initial.0.re, initial.0.im, initial.1.re, initial.1.im];
    let run = integrate_dp54(rhs, start, horizon, y0, &sopts, opts.store_cap.max(8))?;

    let times: Vec<T> = run.samples.iter().map(|&(t, _)| t).collect();
    let budget = if opts.gronwall {
        gronwall_cumulative(mc, xi, &times, opts.gronwall_rel_tol)?
    } else {
        vec![T::zero(); times.len()]
    };

    let mut samples = Vec::with_capacity(run.samples.len());
    for (k, &(t, y)) in run.samples.iter().enumerate() {
        let u = Complex::new(y[0], y[1]);
        let u_t = Complex::new(y[2], y[3]);
        let a_eps = mc.value(t, xi)?;
        let energy = a_eps * xi_sq * u.norm_sqr() + u_t.norm_sqr();
        samples.push(TraceSample { t, u, u_t, energy, gronwall: budget[k] });
    }

    Ok(EnergyTrace {
        xi: xi.to_vec(),
        xi_norm,
        eps: mc.eps(),
        start_time: start,
        samples,
        steps: run.steps,
        rejected: run.rejected,
        max_error_ratio: run.max_error_ratio,
    })
}

/// Pointwise growth integrand `|a_eps'|/a_eps + |xi| |a_eps - a|/sqrt(a_eps)`
/// at a time where the exact symbol itself is evaluable.
pub fn gronwall_integrand<T: Real>(t: T, xi: &[T], mc: &MollifiedCoefficient<'_, T>) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::domain(format!(
            "growth integrand needs t > 0, got {t}; the exact symbol may be singular at 0"
        )));
    }
    let a = mc.field().symbol(t, xi)?;
    let a_eps = mc.value(t, xi)?;
    let da = mc.derivative(t, xi)?;
    Ok(da.abs() / a_eps + norm(xi) * (a_eps - a).abs() / a_eps.sqrt())
}

/// `int_0^T g` for the growth integrand, to relative tolerance `rel_tol`.
pub fn gronwall_bound<T: Real>(
    mc: &MollifiedCoefficient<'_, T>,
    xi: &[T],
    rel_tol: T,
) -> Result<T> {
    let horizon = mc.field().horizon();
    Ok(*gronwall_cumulative(mc, xi, &[horizon], rel_tol)?
        .last()
        .expect("one checkpoint in, one value out"))
}

/// Prefix integrals `G(c_k) = int_0^{c_k} g` at strictly increasing
/// checkpoints in `(0, T]` (a leading checkpoint at exactly `0` is allowed
/// and reports `0`).
///
/// Checkpoints below `~1e-4` combined with an inverse-power phase push the
/// direct rule past the pointwise phase budget; traces never do this, since
/// their start times sit well above it.
pub fn gronwall_cumulative<T: Real>(
    mc: &MollifiedCoefficient<'_, T>,
    xi: &[T],
    checkpoints: &[T],
    rel_tol: T,
) -> Result<Vec<T>> {
    if checkpoints.is_empty() {
        return Err(Error::domain("need at least one checkpoint".to_string()));
    }
    if !(rel_tol > T::zero()) {
        return Err(Error::domain(format!("relative tolerance must be positive, got {rel_tol}")));
    }
    let horizon = mc.field().horizon();
    let mut prev = T::zero();
    for (k, &c) in checkpoints.iter().enumerate() {
        let ok = if k == 0 { c >= T::zero() } else { c > prev };
        if !ok || c > horizon {
            return Err(Error::domain(format!(
                "checkpoints must increase strictly inside [0, {horizon}], violated at index {k}"
            )));
        }
        prev = c;
    }

    let ctx = GronwallCtx::new(mc, xi)?;
    // Absolute budgets come from a crude a-priori scale first; the second
    // pass re-targets them at the measured total. Quadrature error estimates
    // overshoot real errors by wide margins, so one refinement suffices.
    let coarse_abs = (ctx.integrand_bound() * horizon * cst(1.0e-3)).max(cst(1.0e-8));
    let pass1 = ctx.run(checkpoints, coarse_abs)?;
    let total = *pass1.last().expect("nonempty");
    let abs = rel_tol * total.max(cst(1.0e-6));
    if abs >= coarse_abs {
        return Ok(pass1);
    }
    ctx.run(checkpoints, abs)
}

/// Phase-rate threshold below which the mollifier has fully attenuated the
/// carrier: `eps * phi' >= K_ATTENUATED`. Both bundled kernels transfer less
/// than `1e-4` of the tone there.
const K_ATTENUATED: f64 = 60.0;
/// Periods-per-envelope-scale threshold for the tone-extraction band:
/// `t * phi' >= K_CARRIER`.
const K_CARRIER: f64 = 130.0;
/// Minimum phase span (radians) before a piece may use an averaged rule.
const SPAN_FLOOR: f64 = 4.0 * std::f64::consts::PI;
/// Hard floor for the logarithmic substitution; the closure below it is
/// bounded explicitly and added to the result.
const T_FLOOR: f64 = 1.0e-12;
/// Sample count for one-period averages; the kinked integrands converge
/// quadratically in this, giving ~1e-4 relative accuracy.
const MEAN_SAMPLES: usize = 96;
/// Phase magnitude beyond which the 2 pi lattice is no longer resolvable in
/// f64 and edge snapping is skipped; the local period there is so short that
/// the unsnapped partial-period residual is below the quadrature tolerance.
const PHASE_SNAP_MAX: f64 = 1.0e9;

#[derive(Clone, Copy, PartialEq)]
enum Band {
    Attenuated,
    Carrier,
    Direct,
}

struct GronwallCtx<'m, 'a, T> {
    mc: &'m MollifiedCoefficient<'a, T>,
    xi: &'m [T],
    xi_norm: T,
    osc: Option<SymbolOscillation<T>>,
    /// Upper ends of the attenuated and carrier bands.
    attenuated_end: T,
    carrier_end: T,
    rule: GaussRule<T>,
    stash: RefCell<Option<Error>>,
}

impl<'m, 'a, T: Real> GronwallCtx<'m, 'a, T> {
    fn new(mc: &'m MollifiedCoefficient<'a, T>, xi: &'m [T]) -> Result<Self> {
        let field = mc.field();
        let xi_norm = norm(xi);
        if !(xi_norm > T::zero()) {
            return Err(Error::domain("growth bound needs a nonzero frequency".to_string()));
        }
        let osc = field.symbol_oscillation(xi)?.filter(|o| o.amp != T::zero());
        let horizon = field.horizon();
        // Averaged bands exist only for the inverse-power phase. The clock
        // phases spin a few radians over the whole domain, so equidistribution
        // never kicks in, while their pointwise values stay exact down to the
        // representation floor; direct integration is both correct and cheap.
        let (attenuated_end, carrier_end) = match osc.as_ref().map(|o| &o.phase) {
            Some(Phase::InversePower { q }) => {
                let a1 = Phase::InversePower { q: *q }
                    .time_at_rate_magnitude(cst::<T>(K_ATTENUATED) / mc.eps())
                    .unwrap_or_else(T::zero)
                    .min(horizon);
                // t * phi' = q t^-q falls through K_CARRIER at (q/K)^(1/q).
                let a2 = (*q / cst(K_CARRIER)).powf(q.recip()).min(horizon).max(a1);
                (a1, a2)
            }
            _ => (T::zero(), T::zero()),
        };
        Ok(GronwallCtx {
            mc,
            xi,
            xi_norm,
            osc,
            attenuated_end,
            carrier_end,
            rule: GaussRule::new(15),
            stash: RefCell::new(None),
        })
    }

    fn field(&self) -> &'a CoefficientField<T> {
        self.mc.field()
    }

    /// Crude uniform bound on the integrand, for budget scaling and floor
    /// closures: `|a_eps'| <= |rho'|_1 osc(a) / (2 eps)` and
    /// `|a_eps - a| <= osc(a)`.
    fn integrand_bound(&self) -> T {
        let field = self.field();
        let osc_width = field.big_lambda0() - field.lambda0();
        let half = cst::<T>(0.5);
        let q1 =
            self.mc.kernel().rho_prime_l1() * osc_width * half / (self.mc.eps() * field.lambda0());
        let q2 = self.xi_norm * osc_width / field.lambda0().sqrt();
        q1 + q2
    }

    fn stash_err(&self, e: Error) {
        let mut slot = self.stash.borrow_mut();
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    fn take_err(&self) -> Result<()> {
        match self.stash.borrow_mut().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn run(&self, checkpoints: &[T], abs_tol: T) -> Result<Vec<T>> {
        let total_span = *checkpoints.last().expect("nonempty");
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut acc = T::zero();
        let mut prev = T::zero();
        for &c in checkpoints {
            if c > prev {
                let share = abs_tol * ((c - prev) / total_span.max(c)).max(cst(1.0e-3));
                acc += self.interval(prev, c, share)?;
                prev = c;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Integral over one checkpoint interval: split at the band edges and at
    /// the clamp-free limits of the carrier transform, then dispatch each
    /// piece.
    fn interval(&self, lo: T, hi: T, tol: T) -> Result<T> {
        let eps = self.mc.eps();
        let horizon = self.field().horizon();
        let mut edges = vec![lo];
        for &cut in &[self.attenuated_end, self.carrier_end, eps + eps, horizon - eps] {
            if cut > lo && cut < hi {
                edges.push(cut);
            }
        }
        edges.sort_by(|p, q| p.partial_cmp(q).expect("finite edges"));
        edges.push(hi);
        let width = hi - lo;
        let mut acc = T::zero();
        for w in edges.windows(2) {
            let (l, h) = (w[0], w[1]);
            let band = if self.osc.is_none() {
                Band::Direct
            } else if h <= self.attenuated_end {
                Band::Attenuated
            } else if h <= self.carrier_end && l >= eps + eps && h <= horizon - eps {
                // The carrier transform assumes a clamp-free window.
                Band::Carrier
            } else {
                Band::Direct
            };
            let share = tol * ((h - l) / width).max(cst(1.0e-3));
            acc += self.piece(l, h, band, share)?;
        }
        Ok(acc)
    }

    fn piece(&self, lo: T, hi: T, band: Band, tol: T) -> Result<T> {
        let band = match band {
            Band::Direct => Band::Direct,
            averaged => {
                let osc = self.osc.as_ref().expect("averaged bands imply oscillation");
                let lo_eff = lo.max(cst::<T>(T_FLOOR).min(hi * cst(1.0e-6)));
                let span = (osc.phase.value(lo_eff)? - osc.phase.value(hi)?).abs();
                if span >= cst(SPAN_FLOOR) {
                    averaged
                } else {
                    Band::Direct
                }
            }
        };
        if band == Band::Direct {
            let q = self.direct(lo, hi, tol);
            self.take_err()?;
            return Ok(q.value);
        }
        // The averaged rules replace the oscillation by its one-period mean,
        // which is exact over whole periods but carries a partial-period
        // residual at each edge. Snapping the piece inward to the global
        // 2 pi lattice and integrating the end slivers directly makes every
        // partition of the domain share one lattice, so those residuals
        // cancel identically between a cumulative run and a single-shot one.
        let (c_lo, c_hi) = self.snap_to_periods(lo, hi);
        let extract = band == Band::Carrier;
        let mut acc = T::zero();
        if c_lo > lo {
            acc += self.direct(lo, c_lo, tol * cst(0.2)).value;
        }
        if c_hi > c_lo {
            acc += self.log_time_quadrature(c_lo, c_hi, tol * cst(0.6), extract, 18).value;
        }
        if hi > c_hi {
            acc += self.direct(c_hi, hi, tol * cst(0.2)).value;
        }
        self.take_err()?;
        Ok(acc)
    }

    /// Largest `[c_lo, c_hi]` inside `[lo, hi]` whose endpoint phases are
    /// whole multiples of `2 pi`. An edge whose phase exceeds the
    /// representability cap is left in place; snapping there would be
    /// meaningless and unnecessary at once, since the lattice cannot be
    /// resolved and the local period is already far below any piece width.
    fn snap_to_periods(&self, lo: T, hi: T) -> (T, T) {
        let Some(osc) = self.osc.as_ref() else {
            return (lo, hi);
        };
        let Phase::InversePower { q } = &osc.phase else {
            return (lo, hi);
        };
        let q = *q;
        let two_pi = cst::<T>(2.0 * std::f64::consts::PI);
        let cap = cst::<T>(PHASE_SNAP_MAX);
        let time_of = |n: T| (two_pi * n).powf(-q.recip());
        let mut c_lo = lo;
        if lo > T::zero() {
            let phi = lo.powf(-q);
            if phi <= cap {
                c_lo = time_of((phi / two_pi).floor()).max(lo);
            }
        }
        let mut c_hi = hi;
        let phi = hi.powf(-q);
        if phi <= cap {
            c_hi = time_of((phi / two_pi).ceil()).min(hi);
        }
        (c_lo, c_hi.max(c_lo))
    }

    /// Floor for a piece touching `t = 0` plus the bounded closure of the
    /// skipped sliver, which is added to the value so the result stays an
    /// upper budget.
    fn floored(&self, lo: T, hi: T) -> (T, T) {
        if lo > T::zero() {
            return (lo, T::zero());
        }
        let floor = cst::<T>(T_FLOOR).min(hi * cst(1.0e-6));
        (floor, self.integrand_bound() * floor)
    }

    fn direct(&self, lo: T, hi: T, tol: T) -> Quadrature<T, T> {
        let (lo_eff, closure) = self.floored(lo, hi);
        let f = |u: T| {
            let t = u.exp();
            self.pointwise(t) * t
        };
        let eps = self.mc.eps();
        let horizon = self.field().horizon();
        let e_inv = T::one().exp().recip();
        let cuts: Vec<T> = [eps, eps + eps, e_inv, horizon - eps]
            .iter()
            .filter(|&&c| c > lo_eff && c < hi)
            .map(|&c| c.ln())
            .collect();
        let mut q = adaptive_with_breakpoints(&self.rule, &f, lo_eff.ln(), hi.ln(), &cuts, tol, 22);
        q.value += closure;
        q
    }

    fn log_time_quadrature(
        &self,
        lo: T,
        hi: T,
        tol: T,
        extract: bool,
        depth: u32,
    ) -> Quadrature<T, T> {
        let (lo_eff, closure) = self.floored(lo, hi);
        let f = |u: T| {
            let t = u.exp();
            self.mean_field(t, extract) * t
        };
        let mut q =
            adaptive_with_breakpoints(&self.rule, &f, lo_eff.ln(), hi.ln(), &[], tol, depth);
        q.value += closure;
        q
    }

    fn pointwise(&self, t: T) -> T {
        match self.try_pointwise(t) {
            Ok(v) => v,
            Err(e) => {
                self.stash_err(e);
                T::zero()
            }
        }
    }

    fn try_pointwise(&self, t: T) -> Result<T> {
        let a = self.field().symbol(t, self.xi)?;
        let a_eps = self.mc.value(t, self.xi)?;
        let da = self.mc.derivative(t, self.xi)?;
        Ok(da.abs() / a_eps + self.xi_norm * (a_eps - a).abs() / a_eps.sqrt())
    }

    fn mean_field(&self, t: T, extract: bool) -> T {
        match self.try_mean_field(t, extract) {
            Ok(v) => v,
            Err(e) => {
                self.stash_err(e);
                T::zero()
            }
        }
    }

    /// Phase-averaged integrand at `t`.
    ///
    /// Attenuated form: `a_eps` carries no tone, so only the exact symbol
    /// oscillates and its offset average has a closed form.
    ///
    /// Carrier form: inside a clamp-free window the identity
    ///
    /// ```text
    ///     a_eps(t) = offset + amp * Im( W(t) e^{i phi(t)} ),
    ///     W(t)     = int rho_eps(s) e^{i (phi(t - s) - phi(t))} ds ,
    /// ```
    ///
    /// holds exactly, with `W` (and its sibling `W1` against `rho'`) varying
    /// on the envelope scale. Both transforms are computed by complex
    /// quadrature, the difference tone picks up the exact symbol's `(0, -amp)`
    /// quadrature part, and the assembled expression is averaged over one
    /// period of the shared phase.
    fn try_mean_field(&self, t: T, extract: bool) -> Result<T> {
        let osc = self.osc.as_ref().expect("mean-field requires oscillation");
        if !extract {
            let a_eps = self.mc.value(t, self.xi)?;
            let da = self.mc.derivative(t, self.xi)?;
            let q1 = da.abs() / a_eps;
            let q2 = mean_abs_offset_sin(a_eps - osc.offset, osc.amp) / a_eps.sqrt();
            return Ok(q1 + self.xi_norm * q2);
        }

        let eps = self.mc.eps();
        let kernel = self.mc.kernel();
        let phase = &osc.phase;
        let phi_t = phase.value(t)?;
        let chirp = |s: T| {
            let dphi = phase.value(t - s).expect("window stays positive") - phi_t;
            Complex::from_polar(T::one(), dphi)
        };
        let tol = cst::<T>(1.0e-8);
        let w = adaptive_complex(
            &self.rule,
            &|s| chirp(s) * kernel.rho_eps(eps, s),
            -eps,
            eps,
            tol,
            16,
        )
        .value;
        let w1 = adaptive_complex(
            &self.rule,
            &|s| chirp(s) * kernel.rho_prime_eps(eps, s),
            -eps,
            eps,
            tol,
            16,
        )
        .value;

        // Tones in the basis c + x cos(phi) - y sin(phi). The kernel has
        // unit mass and odd derivative, so the offsets are exactly `offset`
        // and `0`.
        let tone_a = ToneEnvelope { c: osc.offset, x: osc.amp * w.im, y: -osc.amp * w.re };
        let tone_d = ToneEnvelope { c: T::zero(), x: osc.amp * w1.im, y: -osc.amp * w1.re };
        let diff = ToneEnvelope { c: T::zero(), x: tone_a.x, y: tone_a.y + osc.amp };

        let floor = self.field().lambda0() * cst(0.25);
        let n = MEAN_SAMPLES;
        let step = cst::<T>(2.0) * T::PI() / cst(n as f64);
        let mut acc = T::zero();
        for k in 0..n {
            let u = step * (cst::<T>(k as f64) + cst(0.5));
            let (cu, su) = (u.cos(), u.sin());
            let den = tone_a.eval(cu, su).max(floor);
            let q1 = tone_d.eval(cu, su).abs() / den;
            let q2 = self.xi_norm * diff.eval(cu, su).abs() / den.sqrt();
            acc += q1 + q2;
        }
        Ok(acc / cst(n as f64))
    }
}

/// Local tone `c + x cos(phi) - y sin(phi)`.
#[derive(Clone, Copy)]
struct ToneEnvelope<T> {
    c: T,
    x: T,
    y: T,
}

impl<T: Real> ToneEnvelope<T> {
    fn eval(&self, cos_phi: T, sin_phi: T) -> T {
        self.c + self.x * cos_phi - self.y * sin_phi
    }
}

/// Which closed-form exponent family a run is compared against.
#[derive(Debug, Clone)]
pub enum ExponentShape<T> {
    /// Power-law loss: exponent grows like `|xi|^((p - alpha)/p)`.
    Gevrey { p: T, alpha: T },
    /// Logarithmic loss: exponent grows like `1 + log |xi|`.
    LogPsi { psi: PsiSpec<T> },
}

/// Closed-form growth exponent `log(E(T)/E(0)) <= exponent(|xi|)` predicted
/// for a regularity class, with the constant `m` either fitted empirically
/// or assembled from the proof constants.
#[derive(Debug, Clone)]
pub struct ExponentModel<T> {
    shape: ExponentShape<T>,
    m: T,
    /// `(m', m'')` when assembled from proof constants: the pieces paired
    /// with the approximation and derivative bounds respectively.
    parts: Option<(T, T)>,
    xi_floor: T,
}

impl<T: Real> ExponentModel<T> {
    /// Power-law model with a given constant.
    pub fn gevrey(p: T, alpha: T, m: T) -> Result<Self> {
        if !(alpha > T::zero()) || !(p > alpha) {
            return Err(Error::domain(format!(
                "power-law exponent needs p > alpha > 0, got p = {p}, alpha = {alpha}"
            )));
        }
        if !(m >= T::zero()) {
            return Err(Error::domain(format!("exponent constant must be nonnegative, got {m}")));
        }
        Ok(ExponentModel {
            shape: ExponentShape::Gevrey { p, alpha },
            m,
            parts: None,
            xi_floor: T::one(),
        })
    }

    /// Logarithmic model with a given constant, valid for `|xi| >= 1/tau1`.
    pub fn log_psi(psi: PsiSpec<T>, m: T, tau1: T) -> Result<Self> {
        if !(tau1 > T::zero()) {
            return Err(Error::domain(format!("tau1 must be positive, got {tau1}")));
        }
        if !(m >= T::zero()) {
            return Err(Error::domain(format!("exponent constant must be nonnegative, got {m}")));
        }
        Ok(ExponentModel {
            shape: ExponentShape::LogPsi { psi },
            m,
            parts: None,
            xi_floor: tau1.recip().max(T::one()),
        })
    }

    /// Power-law constant assembled from the proof chain:
    /// `M = max(2 Lambda0 / sqrt(lambda0), C'' c_p / lambda0, C' c_p / sqrt(lambda0))`
    /// with `c_p = max(1, 1/(p-1))`.
    pub fn gevrey_from_constants(
        p: T,
        alpha: T,
        c_prime: T,
        c_double_prime: T,
        lambda0: T,
        big_lambda0: T,
    ) -> Result<Self> {
        if !(p > T::one()) {
            return Err(Error::domain(format!("the proof constants need p > 1, got p = {p}")));
        }
        if !(lambda0 > T::zero()) || !(big_lambda0 >= lambda0) {
            return Err(Error::domain("hyperbolicity constants out of order".to_string()));
        }
        let c_p = T::one().max((p - T::one()).recip());
        let sqrt_l = lambda0.sqrt();
        let m_prime = c_prime * c_p / sqrt_l;
        let m_double = c_double_prime * c_p / lambda0;
        let m = (cst::<T>(2.0) * big_lambda0 / sqrt_l).max(m_double).max(m_prime);
        let mut model = Self::gevrey(p, alpha, m)?;
        model.parts = Some((m_prime, m_double));
        Ok(model)
    }

    /// Logarithmic constant assembled from the proof chain. The factor
    /// `1 + e psi'(1) (T - 1/e)_+ / psi(1)` extends the budget across the
    /// frozen-rate region above `1/e`.
    pub fn log_psi_from_constants(
        psi: PsiSpec<T>,
        c_prime: T,
        c_double_prime: T,
        lambda0: T,
        big_lambda0: T,
        horizon: T,
        tau1: T,
    ) -> Result<Self> {
        if !(lambda0 > T::zero()) || !(big_lambda0 >= lambda0) {
            return Err(Error::domain("hyperbolicity constants out of order".to_string()));
        }
        let e = T::one().exp();
        let tail = (horizon - e.recip()).max(T::zero());
        let factor = T::one() + e * psi.psi_prime(T::one())? * tail / psi.psi(T::one())?;
        let sqrt_l = lambda0.sqrt();
        let m_double = c_double_prime / lambda0 * factor;
        let m_prime = c_prime / sqrt_l * factor + cst::<T>(2.0) * big_lambda0 / sqrt_l;
        let mut model = Self::log_psi(psi, m_prime + m_double, tau1)?;
        model.parts = Some((m_prime, m_double));
        Ok(model)
    }

    pub fn shape(&self) -> &ExponentShape<T> {
        &self.shape
    }

    pub fn m(&self) -> T {
        self.m
    }

    /// Replaces the constant, keeping the shape; the fitting pipeline uses
    /// this to report an empirical model next to the analytic one.
    pub fn with_constant(&self, m: T) -> Result<Self> {
        if !(m >= T::zero()) {
            return Err(Error::domain(format!("exponent constant must be nonnegative, got {m}")));
        }
        Ok(ExponentModel { m, parts: None, ..self.clone() })
    }

    pub fn parts(&self) -> Option<(T, T)> {
        self.parts
    }

    /// Smallest frequency magnitude the model speaks about.
    pub fn xi_floor(&self) -> T {
        self.xi_floor
    }

    /// Gevrey well-posedness order `sigma* = p / (p - alpha)`; `None` for
    /// the logarithmic shape, which sits in the smooth category.
    pub fn sigma_star(&self) -> Option<T> {
        match &self.shape {
            ExponentShape::Gevrey { p, alpha } => Some(*p / (*p - *alpha)),
            ExponentShape::LogPsi { .. } => None,
        }
    }

    /// The frequency shape the exponent is linear in: `|xi|^((p-alpha)/p)`
    /// or `1 + log |xi|`.
    pub fn shape_value(&self, xi_norm: T) -> Result<T> {
        if !(xi_norm >= self.xi_floor) {
            return Err(Error::domain(format!(
                "exponent model valid for |xi| >= {}, got {xi_norm}",
                self.xi_floor
            )));
        }
        Ok(match &self.shape {
            ExponentShape::Gevrey { p, alpha } => xi_norm.powf((*p - *alpha) / *p),
            ExponentShape::LogPsi { .. } => T::one() + xi_norm.ln(),
        })
    }

    /// The predicted bound on `log(E(T)/E(0))`.
    pub fn theoretical_exponent(&self, xi_norm: T) -> Result<T> {
        let shape = self.shape_value(xi_norm)?;
        Ok(match &self.shape {
            ExponentShape::Gevrey { .. } => self.m + cst::<T>(4.0) * self.m * shape,
            ExponentShape::LogPsi { .. } => self.m * shape,
        })
    }
}

/// Two-sided energy comparison factor: `E(T)/E(0)` is bounded by
/// `(Lambda0/lambda0) exp(exponent)`, reported in both linear and log form
/// since the linear one overflows for large frequencies.
#[derive(Debug, Clone, Copy)]
pub struct RatioBound<T> {
    pub log_value: T,
    /// `exp(log_value)`; `+inf` when it does not fit the scalar.
    pub value: T,
}

/// Bound on the energy ratio across the whole time domain.
pub fn energy_ratio_bound<T: Real>(
    model: &ExponentModel<T>,
    lambda0: T,
    big_lambda0: T,
    xi_norm: T,
) -> Result<RatioBound<T>> {
    if !(lambda0 > T::zero()) || !(big_lambda0 >= lambda0) {
        return Err(Error::domain("hyperbolicity constants out of order".to_string()));
    }
    let log_value = model.theoretical_exponent(xi_norm)? + (big_lambda0 / lambda0).ln();
    Ok(RatioBound { log_value, value: log_value.exp() })
}
