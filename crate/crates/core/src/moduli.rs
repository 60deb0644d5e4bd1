//! Moduli of continuity, blow-up rates, and the scale functions that tie
//! them together.
//!
//! A singular coefficient is described by two one-dimensional gauges:
//!
//! * a modulus of continuity `mu` (concave, strictly increasing,
//!   `mu(0) = 0`) measuring how much the coefficient may move over a time
//!   lag `tau`;
//! * a blow-up rate `nu` (non-decreasing, positive) dividing that bound, so
//!   the allowed oscillation grows like `mu(tau) / nu(t)` as `t` approaches
//!   the singular instant.
//!
//! The interesting pairs are generated by a single scale function `psi` on
//! `[1, oo)` with `psi' > 0` non-increasing and `r -> e^r psi'(r)`
//! non-decreasing:
//!
//! ```text
//!     mu(tau) = tau |log tau| / psi(|log tau|),
//!     nu(t)   = t / psi'(|log t|)        (frozen above t = 1/e).
//! ```
//!
//! The limits `chi = lim psi` and `eta = lim psi'` decide the flavour of
//! well-posedness downstream: finite `chi` keeps infinitely smooth data
//! solvable, infinite `chi` with `eta = 0` costs a `psi`-dependent amount of
//! regularity, and `eta > 0` (the identity scale) marks the Lipschitz edge.
//!
//! Every constructor validates its invariants on a deterministic grid; the
//! property tests in this module re-check them on random inputs.

use crate::error::{Error, Result};
use crate::{cst, Real};

/// Scale function families. Each entry is a closed-form `psi` with the
/// monotonicity properties required above.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiFamily<T> {
    /// `psi(r) = r`: the Lipschitz edge, `eta = 1`.
    Identity,
    /// `psi(r) = 1 - exp(-alpha r)`, `0 < alpha <= 1`: bounded scale,
    /// `chi = 1`; pairs with Hoelder-type moduli.
    OneMinusExp { alpha: T },
    /// `psi(r) = 1 + log r`: unbounded but slowly varying scale; the
    /// canonical example of a non-Hoelder admissible modulus.
    OnePlusLog,
    /// `psi(r) = r^beta`, `0 < beta <= 1`.
    Power { beta: T },
}

/// A validated scale function together with its limits.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSpec<T> {
    family: PsiFamily<T>,
    chi: T,
    eta: T,
}

impl<T: Real> PsiSpec<T> {
    /// `psi(r) = r`.
    pub fn identity() -> Self {
        PsiSpec { family: PsiFamily::Identity, chi: T::infinity(), eta: T::one() }
    }

    /// `psi(r) = 1 - exp(-alpha r)` for `0 < alpha <= 1`. Larger `alpha`
    /// would make `e^r psi'(r)` decreasing, which the theory forbids.
    pub fn one_minus_exp(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::spec(format!(
                "one_minus_exp scale needs alpha in (0, 1], got {alpha}"
            )));
        }
        Ok(PsiSpec { family: PsiFamily::OneMinusExp { alpha }, chi: T::one(), eta: T::zero() })
    }

    /// `psi(r) = 1 + log r`.
    pub fn one_plus_log() -> Self {
        PsiSpec { family: PsiFamily::OnePlusLog, chi: T::infinity(), eta: T::zero() }
    }

    /// `psi(r) = r^beta` for `0 < beta <= 1`.
    pub fn power(beta: T) -> Result<Self> {
        if !(beta > T::zero() && beta <= T::one()) {
            return Err(Error::spec(format!("power scale needs beta in (0, 1], got {beta}")));
        }
        Ok(PsiSpec { family: PsiFamily::Power { beta }, chi: T::infinity(), eta: T::zero() })
    }

    /// The underlying family.
    pub fn family(&self) -> &PsiFamily<T> {
        &self.family
    }

    /// `psi(r)` for `r >= 1`.
    pub fn psi(&self, r: T) -> Result<T> {
        if !(r >= T::one()) {
            return Err(Error::domain(format!("psi is defined on [1, oo), got r = {r}")));
        }
        Ok(match &self.family {
            PsiFamily::Identity => r,
            PsiFamily::OneMinusExp { alpha } => T::one() - (-*alpha * r).exp(),
            PsiFamily::OnePlusLog => T::one() + r.ln(),
            PsiFamily::Power { beta } => r.powf(*beta),
        })
    }

    /// `psi'(r)` for `r >= 1`.
    pub fn psi_prime(&self, r: T) -> Result<T> {
        if !(r >= T::one()) {
            return Err(Error::domain(format!("psi' is defined on [1, oo), got r = {r}")));
        }
        Ok(match &self.family {
            PsiFamily::Identity => T::one(),
            PsiFamily::OneMinusExp { alpha } => *alpha * (-*alpha * r).exp(),
            PsiFamily::OnePlusLog => r.recip(),
            PsiFamily::Power { beta } => *beta * r.powf(*beta - T::one()),
        })
    }

    /// `chi = lim psi(r)`; infinite for the unbounded families.
    pub fn chi(&self) -> T {
        self.chi
    }

    /// `eta = lim psi'(r)`; positive only at the Lipschitz edge.
    pub fn eta(&self) -> T {
        self.eta
    }

    /// Grid check of the defining monotonicity properties. Constructors
    /// only admit closed forms that satisfy them, so a failure here means a
    /// bug, not bad input; the check exists so tests can say that loudly.
    pub fn validate(&self) -> Result<()> {
        let n = 160;
        let mut prev_psi = T::neg_infinity();
        let mut prev_dpsi = T::infinity();
        let mut prev_log_growth = T::neg_infinity();
        for k in 0..n {
            // Log-spaced r from 1 to 40: far enough out to expose any
            // monotonicity defect, close enough in that psi' has not
            // underflowed for the steep exponential family.
            let r = (cst::<T>(40.0f64.ln()) * cst::<T>(k as f64 / (n - 1) as f64)).exp();
            let p = self.psi(r)?;
            let dp = self.psi_prime(r)?;
            let slack = cst::<T>(1.0e-12);
            if !(dp > T::zero()) {
                return Err(Error::spec(format!("psi'({r}) = {dp} is not positive")));
            }
            if p < prev_psi {
                return Err(Error::spec(format!("psi is not non-decreasing at r = {r}")));
            }
            if dp > prev_dpsi * (T::one() + slack) {
                return Err(Error::spec(format!("psi' increases at r = {r}")));
            }
            // e^r psi' non-decreasing, compared in log form to dodge
            // overflow of the bare exponential.
            let log_growth = r + dp.ln();
            if log_growth < prev_log_growth - cst(1.0e-9) {
                return Err(Error::spec(format!("e^r psi'(r) decreases at r = {r}")));
            }
            prev_psi = p;
            prev_dpsi = dp;
            prev_log_growth = log_growth;
        }
        Ok(())
    }
}

/// Modulus of continuity families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModulusFamily<T> {
    /// `mu(tau) = tau^alpha`, `0 < alpha <= 1`.
    Holder { alpha: T },
    /// `mu(tau) = tau |log tau| / psi(|log tau|)`.
    PsiDerived { psi: PsiSpec<T> },
    /// Piecewise-linear interpolation of a concave increasing table
    /// starting at `(0, 0)`.
    Custom { points: Vec<(T, T)> },
}

/// A validated modulus of continuity on `[0, tau0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusSpec<T> {
    family: ModulusFamily<T>,
    tau0: T,
}

/// Largest `c` in `(lo, hi]` with `pred(c)` true, assuming `pred` is true
/// near `lo` and monotone in `c`; plain predicate bisection.
fn bisect_largest<T: Real>(pred: &impl Fn(T) -> bool, lo: T, hi: T, iters: usize) -> T {
    if pred(hi) {
        return hi;
    }
    let mut good = lo;
    let mut bad = hi;
    for _ in 0..iters {
        let mid = (good + bad) * cst::<T>(0.5);
        if !(mid > good && mid < bad) {
            break;
        }
        if pred(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

impl<T: Real> ModulusSpec<T> {
    /// Hoelder modulus `tau^alpha` on `[0, 1]`.
    pub fn holder(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::spec(format!("Hoelder modulus needs alpha in (0, 1], got {alpha}")));
        }
        Ok(ModulusSpec { family: ModulusFamily::Holder { alpha }, tau0: T::one() })
    }

    /// Modulus generated by a scale function.
    ///
    /// The closed form is concave only up to some lag; the constructor
    /// finds the largest domain `tau0 <= 1/e` on which midpoint concavity
    /// holds (for `1 + log r` that is near `0.2437`, for the identity it is
    /// `1/e` itself) by predicate bisection against a deterministic grid.
    pub fn psi_derived(psi: PsiSpec<T>) -> Result<Self> {
        psi.validate()?;
        let e_inv = T::one().exp().recip();
        let spec = ModulusSpec { family: ModulusFamily::PsiDerived { psi }, tau0: e_inv };
        let concave_up_to = |c: T| spec.concave_on_grid(c).is_ok();
        let tau0 = bisect_largest(&concave_up_to, e_inv * cst(1.0e-3), e_inv, 60);
        if !(tau0 > T::zero()) || !concave_up_to(tau0) {
            return Err(Error::spec(
                "derived modulus is not concave on any usable domain".to_string(),
            ));
        }
        Ok(ModulusSpec { tau0, ..spec })
    }

    /// Modulus given by a table of `(tau, mu)` points, linearly
    /// interpolated. The table must start at `(0, 0)`, increase strictly in
    /// both coordinates, and have non-increasing slopes.
    pub fn custom(points: Vec<(T, T)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::spec("custom modulus needs at least two points".to_string()));
        }
        if points[0].0 != T::zero() || points[0].1 != T::zero() {
            return Err(Error::spec("custom modulus must start at (0, 0)".to_string()));
        }
        let slack = T::one() + cst(1.0e-12);
        let mut prev_slope = T::infinity();
        for w in points.windows(2) {
            let (x0, y0) = w[0];
            let (x1, y1) = w[1];
            if !(x1 > x0) || !(y1 > y0) {
                return Err(Error::spec(format!(
                    "custom modulus must increase strictly, violated near tau = {x1}"
                )));
            }
            let slope = (y1 - y0) / (x1 - x0);
            if slope > prev_slope * slack {
                return Err(Error::spec(format!(
                    "custom modulus must be concave, slope rises near tau = {x1}"
                )));
            }
            prev_slope = slope;
        }
        let tau0 = points.last().expect("nonempty").0;
        Ok(ModulusSpec { family: ModulusFamily::Custom { points }, tau0 })
    }

    /// Shrinks the domain; growing it is not allowed because validity was
    /// only established up to the constructed `tau0`.
    pub fn with_domain(mut self, tau0: T) -> Result<Self> {
        if !(tau0 > T::zero() && tau0 <= self.tau0) {
            return Err(Error::domain(format!(
                "domain cap must lie in (0, {}], got {tau0}",
                self.tau0
            )));
        }
        self.tau0 = tau0;
        Ok(self)
    }

    /// Right end of the validated domain.
    pub fn tau0(&self) -> T {
        self.tau0
    }

    /// The underlying family.
    pub fn family(&self) -> &ModulusFamily<T> {
        &self.family
    }

    /// Hoelder exponent when this is a Hoelder modulus.
    pub fn holder_alpha(&self) -> Option<T> {
        match &self.family {
            ModulusFamily::Holder { alpha } => Some(*alpha),
            _ => None,
        }
    }

    /// Scale function when this modulus is derived from one.
    pub fn psi(&self) -> Option<&PsiSpec<T>> {
        match &self.family {
            ModulusFamily::PsiDerived { psi } => Some(psi),
            _ => None,
        }
    }

    /// `mu(tau)` for `tau` in `[0, tau0]`.
    pub fn eval(&self, tau: T) -> Result<T> {
        if !(tau >= T::zero()) || tau > self.tau0 {
            return Err(Error::domain(format!(
                "modulus evaluated at tau = {tau} outside [0, {}]",
                self.tau0
            )));
        }
        if tau == T::zero() {
            return Ok(T::zero());
        }
        Ok(match &self.family {
            ModulusFamily::Holder { alpha } => tau.powf(*alpha),
            ModulusFamily::PsiDerived { psi } => {
                // tau0 <= 1/e, so r >= 1 up to roundoff at the endpoint.
                let r = (-tau.ln()).max(T::one());
                tau * r / psi.psi(r).expect("r >= 1")
            }
            ModulusFamily::Custom { points } => {
                let idx = points.partition_point(|&(x, _)| x < tau).max(1);
                let (x0, y0) = points[idx - 1];
                let (x1, y1) = points[idx.min(points.len() - 1)];
                if x1 == x0 {
                    y1
                } else {
                    y0 + (y1 - y0) * (tau - x0) / (x1 - x0)
                }
            }
        })
    }

    /// Human-readable closed form, used in classification notes.
    pub fn describe(&self) -> String {
        match &self.family {
            ModulusFamily::Holder { alpha } => format!("tau^{alpha}"),
            ModulusFamily::PsiDerived { psi } => match psi.family() {
                PsiFamily::Identity => "tau".to_string(),
                PsiFamily::OnePlusLog => "tau |log tau| / (1 + log |log tau|)".to_string(),
                PsiFamily::OneMinusExp { alpha } => {
                    format!("tau |log tau| / (1 - |log tau|-exp decay, alpha = {alpha})")
                }
                PsiFamily::Power { beta } => format!("tau |log tau|^(1 - {beta})"),
            },
            ModulusFamily::Custom { points } => format!("table({} points)", points.len()),
        }
    }

    /// Checks `mu(0) = 0`, strict increase, and midpoint concavity on a
    /// deterministic grid over `(0, cap]`.
    fn concave_on_grid(&self, cap: T) -> Result<()> {
        let n = 64usize;
        let lo = cap * cst::<T>(1.0e-6);
        let ratio = (cap / lo).powf(cst::<T>(1.0 / (n - 1) as f64));
        let mut taus = Vec::with_capacity(n);
        let mut x = lo;
        for _ in 0..n {
            taus.push(x.min(cap));
            x = x * ratio;
        }
        let mu = |t: T| -> Result<T> { self.eval(t) };
        let slack = cst::<T>(1.0e-11);
        let mut prev = T::zero();
        for &t in &taus {
            let v = mu(t)?;
            if !(v > prev) {
                return Err(Error::spec(format!("modulus fails to increase at tau = {t}")));
            }
            prev = v;
        }
        // Tight triples catch local convexity that wide pairs smear out.
        // Convexity of the derived closed forms sets in from the right end,
        // so the probe centers cluster there: the log grid plus a linear
        // comb over the top 15 percent of the domain.
        let delta_rel = cst::<T>(1.0e-3);
        let top = cap / (T::one() + delta_rel * cst(2.0));
        let mut centers: Vec<T> = taus.iter().map(|&t| t.min(top)).collect();
        for m in 0..16 {
            centers.push(top * (cst::<T>(0.85) + cst::<T>(0.15 * m as f64 / 15.0)));
        }
        for &t in &centers {
            let delta = t * delta_rel;
            let mid = mu(t)?;
            let lo_v = mu(t - delta)?;
            let hi_v = mu(t + delta)?;
            if mid * cst::<T>(2.0) < (lo_v + hi_v) * (T::one() - slack) {
                return Err(Error::spec(format!("modulus is convex near tau = {t}")));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let a = taus[i];
                let b = taus[j];
                let mid = (a + b) * cst::<T>(0.5);
                let lhs = mu(mid)? * cst::<T>(2.0);
                let rhs = mu(a)? + mu(b)?;
                if lhs < rhs * (T::one() - slack) {
                    return Err(Error::spec(format!(
                        "modulus violates midpoint concavity on [{a}, {b}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Public validation entry point: re-runs the grid checks on the full
    /// domain.
    pub fn validate(&self) -> Result<()> {
        if self.eval(T::zero())? != T::zero() {
            return Err(Error::spec("modulus must vanish at 0".to_string()));
        }
        self.concave_on_grid(self.tau0)
    }
}

/// Blow-up rate families.
#[derive(Debug, Clone, PartialEq)]
pub enum BlowupFamily<T> {
    /// `nu = 1`: no degeneracy, the classical setting.
    Constant,
    /// `nu(t) = t^p`, `p > 0`.
    Power { p: T },
    /// `nu(t) = t / psi'(|log t|)` below `1/e`, frozen at its value there
    /// above.
    PsiDerived { psi: PsiSpec<T> },
}

/// A validated blow-up rate with its doubling constant `kappa`, the largest
/// factor guaranteed in `nu(t/2) >= kappa nu(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupSpec<T> {
    family: BlowupFamily<T>,
    kappa: T,
}

impl<T: Real> BlowupSpec<T> {
    /// The non-degenerate rate `nu = 1`.
    pub fn constant() -> Self {
        BlowupSpec { family: BlowupFamily::Constant, kappa: T::one() }
    }

    /// `nu(t) = t^p`; doubling constant `2^-p`.
    pub fn power(p: T) -> Result<Self> {
        if !(p > T::zero()) {
            return Err(Error::spec(format!("power blow-up needs p > 0, got {p}")));
        }
        Ok(BlowupSpec { family: BlowupFamily::Power { p }, kappa: cst::<T>(2.0).powf(-p) })
    }

    /// `nu(t) = t / psi'(|log t|)`; doubling constant `1/2` because `psi'`
    /// is non-increasing.
    pub fn psi_derived(psi: PsiSpec<T>) -> Result<Self> {
        psi.validate()?;
        Ok(BlowupSpec { family: BlowupFamily::PsiDerived { psi }, kappa: cst(0.5) })
    }

    /// The underlying family.
    pub fn family(&self) -> &BlowupFamily<T> {
        &self.family
    }

    /// Power exponent when this is a pure power rate.
    pub fn power_exponent(&self) -> Option<T> {
        match &self.family {
            BlowupFamily::Power { p } => Some(*p),
            BlowupFamily::Constant => Some(T::zero()),
            _ => None,
        }
    }

    /// Scale function when this rate is derived from one.
    pub fn psi(&self) -> Option<&PsiSpec<T>> {
        match &self.family {
            BlowupFamily::PsiDerived { psi } => Some(psi),
            _ => None,
        }
    }

    /// Guaranteed doubling constant.
    pub fn kappa(&self) -> T {
        self.kappa
    }

    /// `nu(t)` for `t > 0`.
    pub fn eval(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return Err(Error::domain(format!("blow-up rate evaluated at t = {t} <= 0")));
        }
        Ok(match &self.family {
            BlowupFamily::Constant => T::one(),
            BlowupFamily::Power { p } => t.powf(*p),
            BlowupFamily::PsiDerived { psi } => {
                let e_inv = T::one().exp().recip();
                if t <= e_inv {
                    let r = (-t.ln()).max(T::one());
                    t / psi.psi_prime(r).expect("r >= 1")
                } else {
                    e_inv / psi.psi_prime(T::one()).expect("r = 1")
                }
            }
        })
    }

    /// Human-readable closed form.
    pub fn describe(&self) -> String {
        match &self.family {
            BlowupFamily::Constant => "1".to_string(),
            BlowupFamily::Power { p } => format!("t^{p}"),
            BlowupFamily::PsiDerived { psi } => match psi.family() {
                PsiFamily::Identity => "t".to_string(),
                PsiFamily::OnePlusLog => "t |log t|".to_string(),
                PsiFamily::OneMinusExp { alpha } => format!("t^(1 - {alpha}) / {alpha}"),
                PsiFamily::Power { beta } => format!("t |log t|^(1 - {beta}) / {beta}"),
            },
        }
    }
}

/// Matched modulus / blow-up pair generated by one scale function.
pub fn matched_pair<T: Real>(psi: PsiSpec<T>) -> Result<(ModulusSpec<T>, BlowupSpec<T>)> {
    let modulus = ModulusSpec::psi_derived(psi.clone())?;
    let blowup = BlowupSpec::psi_derived(psi)?;
    Ok((modulus, blowup))
}

/// Empirical doubling constant: the minimum of `nu(t/2) / nu(t)` over a
/// log-spaced grid of `n` points in `[t_lo, t_hi]`.
///
/// Takes the rate as a closure so candidate rates can be probed before they
/// are blessed as a [`BlowupSpec`]; rates like `exp(-1/t)` reveal themselves
/// here by a minimum that heads to zero as `t_lo` does.
pub fn doubling_ratio_min<T: Real>(nu: &dyn Fn(T) -> T, t_lo: T, t_hi: T, n: usize) -> T {
    assert!(t_lo > T::zero() && t_hi > t_lo && n >= 2, "need a positive grid");
    let ratio = (t_hi / t_lo).powf(cst::<T>(1.0 / (n - 1) as f64));
    let mut t = t_lo;
    let mut min = T::infinity();
    for _ in 0..n {
        let r = nu(t * cst(0.5)) / nu(t);
        if r < min {
            min = r;
        }
        t = t * ratio;
    }
    min
}
