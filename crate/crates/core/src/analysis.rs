//! Growth-law fitting, spectral decay profiles, and classification verdicts.
//!
//! This is the final stage of the pipeline. [`fit_growth`] regresses measured
//! log energy ratios against a closed-form exponent shape and issues a
//! one-sided consistency verdict; [`check_decay`] fits Fourier decay laws to
//! data or solution magnitudes; [`classify`] merges both into a
//! well-posedness report.
//!
//! The growth laws are one-sided bounds, not equalities, so consistency is a
//! bounded-sup test: an observation may fall arbitrarily far below the model
//! but must not exceed the fitted line by more than a slack factor. A plain
//! regression alone could hide a diverging tail behind a good average, which
//! is why the verdict and the empirical constant both come from the supremum
//! rather than the slope.
//!
//! All fitting happens in log magnitude. Spectral decay of interesting data
//! (`exp(-|xi|^(1/sigma))` and friends) underflows `f64` halfway through the
//! frequency grids of interest, so the linear-magnitude entry points convert
//! once and delegate to the log-domain ones, which the sweep pipeline calls
//! directly with exactly representable log magnitudes.

use crate::energy::{ExponentModel, ExponentShape};
use crate::error::{Error, Result};
use crate::moduli::ModulusSpec;
use crate::{cst, Real};

/// Tunables for the growth-law consistency test.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions<T> {
    /// Allowed one-sided excess of an observation over the fitted line;
    /// the verdict is consistent iff `sup_ratio <= 1 + slack`.
    pub slack: T,
    /// Minimum number of grid points.
    pub min_points: usize,
    /// Minimum base-10 decades between the smallest and largest frequency.
    /// Narrower grids cannot separate the power-law shape from the
    /// logarithmic one.
    pub min_decades: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions { slack: cst(0.25), min_points: 8, min_decades: cst(2.0) }
    }
}

/// One sweep observation: a frequency magnitude and the measured
/// `log(E(T)/E(0))` of its mode.
#[derive(Debug, Clone, Copy)]
pub struct GrowthSample<T> {
    pub xi_norm: T,
    pub log_ratio: T,
}

/// Result of regressing observed growth against an exponent model.
#[derive(Debug, Clone)]
pub struct GrowthFit<T> {
    model: ExponentModel<T>,
    samples: Vec<GrowthSample<T>>,
    shapes: Vec<T>,
    fitted: Vec<T>,
    residuals: Vec<T>,
    ratios: Vec<T>,
    slope: T,
    intercept: T,
    m_regression: T,
    m_sup: T,
    sup_ratio: T,
    slack: T,
    consistent: bool,
}

impl<T: Real> GrowthFit<T> {
    pub fn model(&self) -> &ExponentModel<T> {
        &self.model
    }

    pub fn samples(&self) -> &[GrowthSample<T>] {
        &self.samples
    }

    /// Shape values `x_i` the regression ran against.
    pub fn shape_values(&self) -> &[T] {
        &self.shapes
    }

    /// Fitted line evaluated at each grid point.
    pub fn fitted(&self) -> &[T] {
        &self.fitted
    }

    /// `y_i - fitted_i`, one per grid point.
    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    /// `y_i` divided by the fitted line's grid supremum (floored for
    /// degenerate lines), one per grid point.
    pub fn ratios(&self) -> &[T] {
        &self.ratios
    }

    pub fn slope(&self) -> T {
        self.slope
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    /// Constant recovered from the regression slope: `slope / 4` for the
    /// power-law shape (whose exponent is `M + 4 M x`), the slope itself for
    /// the logarithmic shape (`M x`).
    pub fn m_regression(&self) -> T {
        self.m_regression
    }

    /// Smallest constant making the one-sided exponent bound hold across the
    /// whole grid, clamped at zero. This is the constant the verdict trusts;
    /// the regression value is reported next to it for diagnostics.
    pub fn m_sup(&self) -> T {
        self.m_sup
    }

    /// Largest per-point ratio; the verdict compares it to `1 + slack`.
    pub fn sup_ratio(&self) -> T {
        self.sup_ratio
    }

    pub fn slack(&self) -> T {
        self.slack
    }

    pub fn consistent(&self) -> bool {
        self.consistent
    }

    /// The model with its constant replaced by the empirical sup constant.
    pub fn empirical_model(&self) -> Result<ExponentModel<T>> {
        self.model.with_constant(self.m_sup)
    }
}

/// Decay-law hypothesis for [`check_decay`].
#[derive(Debug, Clone)]
pub enum DecayKind<T> {
    /// `K exp(-delta |xi|^(1/sigma))`, the Paley-Wiener profile of
    /// compactly supported Gevrey data.
    Gevrey { sigma: T },
    /// `K_zeta |xi|^(-zeta)` for every requested order, the profile of
    /// compactly supported smooth data. `xi_floor` is the smallest frequency
    /// the hypothesis speaks about (the caller passes `1/tau1` when checking
    /// against the logarithmic growth law).
    Polynomial { zetas: Vec<T>, xi_floor: T },
}

/// One spectral sample in log magnitude.
#[derive(Debug, Clone, Copy)]
pub struct DecaySample<T> {
    pub xi_norm: T,
    /// `ln(|u0| + |u1|)` of the mode pair.
    pub log_magnitude: T,
}

/// Fitted decay law.
#[derive(Debug, Clone)]
pub enum DecayLaw<T> {
    Gevrey {
        sigma: T,
        log_k: T,
        /// `exp(log_k)`; may round to infinity for extreme intercepts.
        k: T,
        delta: T,
        r_squared: T,
    },
    Polynomial {
        constants: Vec<PolyBound<T>>,
    },
}

/// Smallest constant for one polynomial order: `m <= k |xi|^(-zeta)` holds
/// with equality at the binding sample.
#[derive(Debug, Clone, Copy)]
pub struct PolyBound<T> {
    pub zeta: T,
    pub log_k: T,
    pub k: T,
}

/// Fitted decay profile of a spectral sample set.
#[derive(Debug, Clone)]
pub struct DecayProfile<T> {
    law: DecayLaw<T>,
    samples: Vec<DecaySample<T>>,
    used: usize,
    dropped: usize,
}

impl<T: Real> DecayProfile<T> {
    pub fn law(&self) -> &DecayLaw<T> {
        &self.law
    }

    pub fn samples(&self) -> &[DecaySample<T>] {
        &self.samples
    }

    /// Number of samples that entered the regression (the Gevrey fit
    /// excludes the constant-regime head of the grid).
    pub fn used(&self) -> usize {
        self.used
    }

    /// Zero-magnitude rows removed by the linear-domain entry point.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn delta(&self) -> Option<T> {
        match &self.law {
            DecayLaw::Gevrey { delta, .. } => Some(*delta),
            DecayLaw::Polynomial { .. } => None,
        }
    }

    pub fn log_k(&self) -> Option<T> {
        match &self.law {
            DecayLaw::Gevrey { log_k, .. } => Some(*log_k),
            DecayLaw::Polynomial { .. } => None,
        }
    }

    pub fn r_squared(&self) -> Option<T> {
        match &self.law {
            DecayLaw::Gevrey { r_squared, .. } => Some(*r_squared),
            DecayLaw::Polynomial { .. } => None,
        }
    }
}

/// Well-posedness class a run lands in.
#[derive(Debug, Clone, PartialEq)]
pub enum WellPosednessClass<T> {
    /// Data classes of index strictly below `sigma_star` are preserved.
    Gevrey { sigma_star: T },
    /// Infinitely smooth data stays infinitely smooth.
    CInfinity,
}

/// Deterministic classification report: a class plus ordered key/value rows
/// rendered as a JSON-like document.
#[derive(Debug, Clone)]
pub struct Classification<T> {
    class: WellPosednessClass<T>,
    rows: Vec<(String, String)>,
}

impl<T: Real> Classification<T> {
    pub fn class(&self) -> &WellPosednessClass<T> {
        &self.class
    }

    pub fn rows(&self) -> &[(String, String)] {
        &self.rows
    }

    /// First value stored under `key`, if any.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.rows.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Renders the rows in insertion order as a JSON-like document. All
    /// values are quoted strings, so the output is stable regardless of the
    /// value types that produced them.
    pub fn render(&self) -> String {
        let mut out = String::from("{\n");
        for (i, (k, v)) in self.rows.iter().enumerate() {
            out.push_str(&format!("  \"{k}\": \"{v}\""));
            out.push_str(if i + 1 == self.rows.len() { "\n" } else { ",\n" });
        }
        out.push('}');
        out.push('\n');
        out
    }
}

/// Regression uses only samples at or above this frequency when fitting the
/// Gevrey decay tail; below it the data profile is still dominated by its
/// constant prefactor and contaminates the slope.
const DELTA_FIT_XI_MIN: f64 = 10.0;

/// Floor applied to the ratio denominator, relative to the data scale,
/// when the fitted line's supremum is zero to roundoff. A conservation
/// sweep fits such a line, and `0/0` must classify as consistent, not
/// explode.
const FLAT_LINE_FLOOR: f64 = 1.0e-9;

/// Consecutive log-frequency gaps may differ by at most this factor before
/// the grid stops counting as log-spaced. Loose enough for unions of
/// log grids, tight enough to reject clustered junk.
const LOG_SPACING_SLACK: f64 = 8.0;

/// Fits the measured growth against the model shape with default options.
pub fn fit_growth<T: Real>(
    samples: &[GrowthSample<T>],
    model: &ExponentModel<T>,
) -> Result<GrowthFit<T>> {
    fit_growth_with(samples, model, &FitOptions::default())
}

/// Fits `log(E(T)/E(0))` against the model's frequency shape by least
/// squares and issues the one-sided consistency verdict: consistent iff no
/// sample exceeds the fitted line's grid supremum by more than the slack
/// factor.
///
/// Requires at least `min_points` strictly increasing frequencies, all at or
/// above the model's validity floor, spanning at least `min_decades` decades
/// and approximately log-spaced.
pub fn fit_growth_with<T: Real>(
    samples: &[GrowthSample<T>],
    model: &ExponentModel<T>,
    opts: &FitOptions<T>,
) -> Result<GrowthFit<T>> {
    let n = samples.len();
    if n < opts.min_points {
        return Err(Error::fit(format!(
            "growth fit needs at least {} grid points, got {n}",
            opts.min_points
        )));
    }
    for w in samples.windows(2) {
        if !(w[1].xi_norm > w[0].xi_norm) {
            return Err(Error::fit(format!(
                "frequency grid must be strictly increasing, got {} after {}",
                w[1].xi_norm, w[0].xi_norm
            )));
        }
    }
    let lo = samples[0].xi_norm;
    let hi = samples[n - 1].xi_norm;
    if !(lo >= model.xi_floor()) {
        return Err(Error::fit(format!(
            "grid starts at |xi| = {lo}, below the model's validity floor {}",
            model.xi_floor()
        )));
    }
    let decades = (hi / lo).log10();
    if !(decades >= opts.min_decades) {
        return Err(Error::fit(format!(
            "frequency grid spans {decades:.2} decades, need at least {}",
            opts.min_decades
        )));
    }
    let mut min_gap = T::infinity();
    let mut max_gap = T::zero();
    for w in samples.windows(2) {
        let g = (w[1].xi_norm / w[0].xi_norm).ln();
        min_gap = min_gap.min(g);
        max_gap = max_gap.max(g);
    }
    if max_gap > min_gap * cst(LOG_SPACING_SLACK) {
        return Err(Error::fit(format!(
            "grid is not log-spaced: consecutive log gaps range over a factor {:.1}",
            (max_gap / min_gap).to_f64().unwrap_or(f64::NAN)
        )));
    }

    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for s in samples {
        if !s.log_ratio.is_finite() {
            return Err(Error::fit(format!(
                "non-finite log energy ratio {} at |xi| = {}",
                s.log_ratio, s.xi_norm
            )));
        }
        xs.push(model.shape_value(s.xi_norm)?);
        ys.push(s.log_ratio);
    }
    let (slope, intercept) = least_squares_line(&xs, &ys);

    let fitted: Vec<T> = xs.iter().map(|&x| intercept + slope * x).collect();
    let residuals: Vec<T> = ys.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
    // One-sided comparison at the line's own scale: every sample is
    // measured against the fitted line's grid supremum. A growth line
    // legitimately passes near zero at the bottom of the grid, and
    // oscillation about it there must not read as a violated law; data
    // that genuinely outgrows the law shows up against the line's top,
    // which the regression cannot keep up with. Flat sweeps fit a line
    // that is zero to roundoff, hence the conservation-grade floor.
    let scale = ys.iter().fold(T::one(), |acc, &y| acc.max(y.abs()));
    let line_top = fitted.iter().fold(T::neg_infinity(), |acc, &f| acc.max(f));
    let denom = line_top.max(cst::<T>(FLAT_LINE_FLOOR) * scale);
    let ratios: Vec<T> = ys.iter().map(|&y| y / denom).collect();
    let sup_ratio = ratios.iter().fold(T::neg_infinity(), |acc, &r| acc.max(r));
    let slack = opts.slack;
    let consistent = sup_ratio <= T::one() + slack;

    // The bound the sup constant inverts is `m * factor(x)` with
    // `factor = 1 + 4x` for the power shape and `factor = x` for the log
    // shape (where x >= 1 on the model's domain).
    let mut m_sup = T::zero();
    let four = cst::<T>(4.0);
    for (&x, &y) in xs.iter().zip(&ys) {
        let factor = match model.shape() {
            ExponentShape::Gevrey { .. } => T::one() + four * x,
            ExponentShape::LogPsi { .. } => x,
        };
        m_sup = m_sup.max(y / factor);
    }
    let m_regression = match model.shape() {
        ExponentShape::Gevrey { .. } => slope / four,
        ExponentShape::LogPsi { .. } => slope,
    };

    Ok(GrowthFit {
        model: model.clone(),
        samples: samples.to_vec(),
        shapes: xs,
        fitted,
        residuals,
        ratios,
        slope,
        intercept,
        m_regression,
        m_sup,
        sup_ratio,
        slack,
        consistent,
    })
}

/// Fits a decay law to linear-domain magnitudes `(|xi|, |u0|, |u1|)`.
///
/// The magnitude is `|u0| + |u1|`. Rejects all-zero sample sets; rows whose
/// magnitude falls below the smallest normal number are dropped (they
/// certify decay past the floating-point floor, but a subnormal's logarithm
/// carries almost no precision) and counted in [`DecayProfile::dropped`].
/// Pipelines that must see past that floor use [`check_decay_log`].
pub fn check_decay<T: Real>(rows: &[(T, T, T)], kind: &DecayKind<T>) -> Result<DecayProfile<T>> {
    if rows.is_empty() {
        return Err(Error::fit("decay check needs samples, got none".to_string()));
    }
    let mut samples = Vec::with_capacity(rows.len());
    let mut dropped = 0usize;
    for &(xi, u0, u1) in rows {
        if !(u0 >= T::zero()) || !(u1 >= T::zero()) {
            return Err(Error::fit(format!(
                "magnitudes must be nonnegative, got ({u0}, {u1}) at |xi| = {xi}"
            )));
        }
        let m = u0 + u1;
        if m >= T::min_positive_value() {
            samples.push(DecaySample { xi_norm: xi, log_magnitude: m.ln() });
        } else {
            dropped += 1;
        }
    }
    if samples.is_empty() {
        return Err(Error::fit("all sample magnitudes are zero".to_string()));
    }
    let mut profile = check_decay_log(&samples, kind)?;
    profile.dropped = dropped;
    Ok(profile)
}

/// Fits a decay law to log-domain magnitudes.
///
/// This is the entry point the sweep pipeline uses: solution magnitudes of
/// Gevrey-decaying data underflow `f64` well inside the grids of interest,
/// so the pipeline propagates `ln(|u| + |u_t|)` exactly and never forms the
/// linear value.
pub fn check_decay_log<T: Real>(
    samples: &[DecaySample<T>],
    kind: &DecayKind<T>,
) -> Result<DecayProfile<T>> {
    for s in samples {
        if !s.log_magnitude.is_finite() {
            return Err(Error::fit(format!(
                "non-finite log magnitude {} at |xi| = {}",
                s.log_magnitude, s.xi_norm
            )));
        }
    }
    match kind {
        DecayKind::Gevrey { sigma } => {
            let sigma = *sigma;
            if !(sigma >= T::one()) {
                return Err(Error::fit(format!("Gevrey index must be at least one, got {sigma}")));
            }
            if let Some(s) = samples.iter().find(|s| !(s.xi_norm >= T::one())) {
                return Err(Error::fit(format!(
                    "Gevrey decay fit needs |xi| >= 1, got {}",
                    s.xi_norm
                )));
            }
            let tail: Vec<&DecaySample<T>> =
                samples.iter().filter(|s| s.xi_norm >= cst(DELTA_FIT_XI_MIN)).collect();
            if tail.len() < 3 {
                return Err(Error::fit(format!(
                    "Gevrey tail fit needs at least 3 samples at |xi| >= {DELTA_FIT_XI_MIN}, got {}",
                    tail.len()
                )));
            }
            let ws: Vec<T> = tail.iter().map(|s| s.xi_norm.powf(sigma.recip())).collect();
            let zs: Vec<T> = tail.iter().map(|s| s.log_magnitude).collect();
            let (slope, log_k) = least_squares_line(&ws, &zs);
            let delta = -slope;
            if !(delta > T::zero()) {
                return Err(Error::fit(format!(
                    "no decay at Gevrey index {sigma}: fitted delta = {delta}"
                )));
            }
            let r_squared = r_squared(&ws, &zs, slope, log_k);
            Ok(DecayProfile {
                law: DecayLaw::Gevrey { sigma, log_k, k: log_k.exp(), delta, r_squared },
                samples: samples.to_vec(),
                used: tail.len(),
                dropped: 0,
            })
        }
        DecayKind::Polynomial { zetas, xi_floor } => {
            if zetas.is_empty() {
                return Err(Error::fit(
                    "polynomial decay check needs at least one order".to_string(),
                ));
            }
            if let Some(&z) = zetas.iter().find(|&&z| !(z > T::zero())) {
                return Err(Error::fit(format!("polynomial orders must be positive, got {z}")));
            }
            if let Some(s) = samples.iter().find(|s| !(s.xi_norm >= *xi_floor)) {
                return Err(Error::fit(format!(
                    "polynomial decay fit needs |xi| >= {xi_floor}, got {}",
                    s.xi_norm
                )));
            }
            let constants = zetas
                .iter()
                .map(|&zeta| {
                    let log_k = samples
                        .iter()
                        .map(|s| s.log_magnitude + zeta * s.xi_norm.ln())
                        .fold(T::neg_infinity(), T::max);
                    PolyBound { zeta, log_k, k: log_k.exp() }
                })
                .collect();
            Ok(DecayProfile {
                law: DecayLaw::Polynomial { constants },
                samples: samples.to_vec(),
                used: samples.len(),
                dropped: 0,
            })
        }
    }
}

/// Merges a consistent growth fit and a data decay profile into the final
/// report. Refuses inconsistent fits: a verdict built on a model the data
/// escaped would be meaningless.
pub fn classify<T: Real>(fit: &GrowthFit<T>, decay: &DecayProfile<T>) -> Result<Classification<T>> {
    if !fit.consistent() {
        return Err(Error::fit(format!(
            "classification requires a consistent growth fit; sup ratio {:.6e} exceeds 1 + {:.3}",
            fit.sup_ratio().to_f64().unwrap_or(f64::NAN),
            fit.slack().to_f64().unwrap_or(f64::NAN)
        )));
    }
    let mut rows: Vec<(String, String)> = Vec::new();
    let push = |rows: &mut Vec<(String, String)>, k: &str, v: String| {
        rows.push((k.to_string(), v));
    };
    let num = |v: T| format!("{:.16e}", v.to_f64().unwrap_or(f64::NAN));

    let class = match fit.model().shape() {
        ExponentShape::Gevrey { p, alpha } => {
            let sigma_star = fit.model().sigma_star().expect("power-law shape has a threshold");
            push(&mut rows, "class", "gevrey".to_string());
            push(&mut rows, "sigma_star", num(sigma_star));
            push(&mut rows, "p", num(*p));
            push(&mut rows, "alpha", num(*alpha));
            WellPosednessClass::Gevrey { sigma_star }
        }
        ExponentShape::LogPsi { psi } => {
            push(&mut rows, "class", "c-infinity".to_string());
            let modulus = ModulusSpec::psi_derived(psi.clone())
                .map(|m| m.describe())
                .unwrap_or_else(|_| "scale-derived".to_string());
            push(&mut rows, "modulus", modulus);
            WellPosednessClass::CInfinity
        }
    };

    push(&mut rows, "m_model", num(fit.model().m()));
    push(&mut rows, "m_regression", num(fit.m_regression()));
    push(&mut rows, "m_sup", num(fit.m_sup()));
    push(&mut rows, "sup_ratio", num(fit.sup_ratio()));
    push(&mut rows, "slack", num(fit.slack()));
    push(&mut rows, "verdict", "consistent".to_string());

    match decay.law() {
        DecayLaw::Gevrey { sigma, log_k, delta, r_squared, .. } => {
            push(&mut rows, "data_decay", "gevrey".to_string());
            push(&mut rows, "data_sigma", num(*sigma));
            push(&mut rows, "data_delta", num(*delta));
            push(&mut rows, "data_log_k", num(*log_k));
            push(&mut rows, "data_r_squared", num(*r_squared));
            match &class {
                WellPosednessClass::Gevrey { sigma_star } => {
                    if *sigma < *sigma_star {
                        push(&mut rows, "preserved_class", format!("gevrey({})", num(*sigma)));
                        push(
                            &mut rows,
                            "preservation",
                            "guaranteed: the solution keeps the data's decay index with new constants"
                                .to_string(),
                        );
                    } else {
                        push(
                            &mut rows,
                            "preservation",
                            format!(
                                "not guaranteed: data index {} is not below the threshold {}",
                                num(*sigma),
                                num(*sigma_star)
                            ),
                        );
                    }
                }
                WellPosednessClass::CInfinity => {
                    push(&mut rows, "preserved_class", "c-infinity".to_string());
                    push(
                        &mut rows,
                        "preservation",
                        "guaranteed: smooth decay is preserved; index-level preservation is not claimed"
                            .to_string(),
                    );
                }
            }
        }
        DecayLaw::Polynomial { constants } => {
            push(&mut rows, "data_decay", "polynomial".to_string());
            match &class {
                WellPosednessClass::Gevrey { sigma_star } => {
                    push(
                        &mut rows,
                        "preservation",
                        format!(
                            "not guaranteed: the power-law budget requires data of Gevrey index below {}",
                            num(*sigma_star)
                        ),
                    );
                }
                WellPosednessClass::CInfinity => {
                    // The logarithmic budget costs a fixed number of
                    // polynomial orders: data of order zeta emerges with
                    // order theta = zeta - M.
                    for b in constants {
                        let theta = b.zeta - fit.model().m();
                        push(&mut rows, &format!("theta[zeta={}]", num(b.zeta)), num(theta));
                    }
                    push(
                        &mut rows,
                        "theta_note",
                        "positive theta orders survive; the growth budget consumes M orders of polynomial decay"
                            .to_string(),
                    );
                    push(
                        &mut rows,
                        "preservation",
                        "guaranteed: every polynomial order above M survives, so smoothness is preserved"
                            .to_string(),
                    );
                }
            }
        }
    }

    if let WellPosednessClass::Gevrey { .. } = &class {
        push(
            &mut rows,
            "limit_note",
            "as (p, alpha) -> (1, 1) the threshold sigma* diverges and the classification upgrades to c-infinity"
                .to_string(),
        );
    }

    Ok(Classification { class, rows })
}

/// Ordinary least squares for `y = intercept + slope * x`; returns
/// `(slope, intercept)`. Callers guarantee at least two distinct abscissae.
fn least_squares_line<T: Real>(xs: &[T], ys: &[T]) -> (T, T) {
    let n = cst::<T>(xs.len() as f64);
    let mean = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a + b) / n;
    let xbar = mean(xs);
    let ybar = mean(ys);
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - xbar;
        sxx += dx * dx;
        sxy += dx * (y - ybar);
    }
    let slope = sxy / sxx;
    (slope, ybar - slope * xbar)
}

/// Coefficient of determination of the fitted line. A degenerate sample
/// (zero variance) scores 1 when the line reproduces it and 0 otherwise.
fn r_squared<T: Real>(xs: &[T], ys: &[T], slope: T, intercept: T) -> T {
    let n = cst::<T>(ys.len() as f64);
    let ybar = ys.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut ss_tot = T::zero();
    let mut ss_res = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dy = y - ybar;
        ss_tot += dy * dy;
        let r = y - (intercept + slope * x);
        ss_res += r * r;
    }
    let tiny = cst::<T>(1.0e-300);
    if ss_tot <= tiny {
        return if ss_res <= tiny { T::one() } else { T::zero() };
    }
    T::one() - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli::PsiSpec;
    use proptest::prelude::*;

    fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
        (0..n).map(|k| lo * ratio.powi(k as i32)).collect()
    }

    fn gevrey_model(m: f64) -> ExponentModel<f64> {
        ExponentModel::gevrey(2.0, 0.5, m).unwrap()
    }

    fn log_model(m: f64) -> ExponentModel<f64> {
        ExponentModel::log_psi(PsiSpec::one_plus_log(), m, (-1.0f64).exp()).unwrap()
    }

    #[test]
    fn growth_fit_recovers_an_exact_power_law() {
        let m = 0.7;
        let model = gevrey_model(0.5);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| {
                let x = xi.powf(0.75);
                GrowthSample { xi_norm: xi, log_ratio: m * (1.0 + 4.0 * x) }
            })
            .collect();
        let fit = fit_growth(&samples, &model).unwrap();
        println!(
            "slope {:.12}, intercept {:.12}, m_reg {:.12}, m_sup {:.12}, sup_ratio {:.6}",
            fit.slope(),
            fit.intercept(),
            fit.m_regression(),
            fit.m_sup(),
            fit.sup_ratio()
        );
        assert!((fit.m_regression() / m - 1.0).abs() <= 1.0e-8);
        assert!((fit.intercept() / m - 1.0).abs() <= 1.0e-6);
        assert!((fit.m_sup() / m - 1.0).abs() <= 1.0e-10);
        assert!(fit.consistent());
        assert!((fit.sup_ratio() - 1.0).abs() <= 1.0e-8);
        assert_eq!(fit.residuals().len(), samples.len());
    }

    #[test]
    fn growth_fit_recovers_an_exact_log_law() {
        let m = 1.9;
        let model = log_model(1.0);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| GrowthSample { xi_norm: xi, log_ratio: m * (1.0 + xi.ln()) })
            .collect();
        let fit = fit_growth(&samples, &model).unwrap();
        assert!((fit.m_regression() / m - 1.0).abs() <= 1.0e-8);
        assert!((fit.m_sup() / m - 1.0).abs() <= 1.0e-10);
        assert!(fit.consistent());
    }

    #[test]
    fn growth_fit_flags_power_data_against_the_log_shape() {
        // Power-law growth regressed against the logarithmic shape: the
        // best-fit line undershoots the top of the grid badly enough for the
        // one-sided test to reject.
        let model = log_model(1.0);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| GrowthSample { xi_norm: xi, log_ratio: 0.3 * (1.0 + 4.0 * xi.powf(0.75)) })
            .collect();
        let fit = fit_growth(&samples, &model).unwrap();
        println!("log-shape sup ratio on power data: {:.4}", fit.sup_ratio());
        assert!(!fit.consistent());
        assert!(fit.sup_ratio() > 1.25);
    }

    #[test]
    fn growth_fit_accepts_flat_conservation_sweeps() {
        let model = gevrey_model(0.0);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .enumerate()
            .map(|(k, xi)| GrowthSample {
                xi_norm: xi,
                log_ratio: if k % 2 == 0 { 1.0e-12 } else { -1.0e-12 },
            })
            .collect();
        let fit = fit_growth(&samples, &model).unwrap();
        assert!(fit.consistent(), "flat ratios must classify as consistent");
        assert!(fit.m_regression().abs() <= 1.0e-6);
        assert!(fit.m_sup() <= 1.0e-6);
    }

    #[test]
    fn growth_fit_rejects_bad_grids() {
        let model = gevrey_model(1.0);
        let mk = |xis: &[f64]| -> Vec<GrowthSample<f64>> {
            xis.iter().map(|&xi| GrowthSample { xi_norm: xi, log_ratio: xi.sqrt() }).collect()
        };
        // Too few points.
        let seven = mk(&log_grid(10.0, 1.0e4, 7));
        assert!(fit_growth(&seven, &model).is_err());
        // Too narrow.
        let narrow = mk(&log_grid(10.0, 900.0, 16));
        assert!(fit_growth(&narrow, &model).is_err());
        // Not sorted.
        let mut unsorted = mk(&log_grid(10.0, 1.0e4, 16));
        unsorted.swap(3, 4);
        assert!(fit_growth(&unsorted, &model).is_err());
        // Below the model floor.
        let low = mk(&log_grid(0.5, 1.0e3, 16));
        assert!(fit_growth(&low, &model).is_err());
        // Clustered, not log-spaced.
        let mut clustered = log_grid(10.0, 1.0e4, 8);
        clustered.extend_from_slice(&[1.0e4 + 1.0, 1.0e4 + 2.0, 1.0e4 + 3.0]);
        assert!(fit_growth(&mk(&clustered), &model).is_err());
    }

    #[test]
    fn decay_fit_recovers_exact_exponentials() {
        // u0 = exp(-xi), sigma = 1: delta = 1, K = 1.
        let rows: Vec<(f64, f64, f64)> =
            log_grid(1.0, 1.0e3, 24).into_iter().map(|xi| (xi, (-xi).exp(), 0.0)).collect();
        let profile = check_decay(&rows, &DecayKind::Gevrey { sigma: 1.0 }).unwrap();
        let delta = profile.delta().unwrap();
        let log_k = profile.log_k().unwrap();
        println!("sigma 1 fit: delta {delta:.12}, log K {log_k:.3e}, used {}", profile.used());
        assert!((delta - 1.0).abs() <= 1.0e-9);
        assert!(log_k.abs() <= 1.0e-8);
        assert!((profile.r_squared().unwrap() - 1.0).abs() <= 1.0e-12);
        // The two rows past the underflow edge drop out instead of poisoning
        // the fit with subnormal logarithms.
        assert_eq!(profile.dropped(), 2);

        // u0 = exp(-sqrt(xi)), sigma = 2: delta = 1.
        let rows: Vec<(f64, f64, f64)> =
            log_grid(1.0, 1.0e4, 24).into_iter().map(|xi| (xi, (-xi.sqrt()).exp(), 0.0)).collect();
        let profile = check_decay(&rows, &DecayKind::Gevrey { sigma: 2.0 }).unwrap();
        assert!((profile.delta().unwrap() - 1.0).abs() <= 1.0e-9);
    }

    #[test]
    fn decay_fit_works_below_the_underflow_floor() {
        // ln m = -xi^(1/1.2): linear magnitudes underflow above xi ~ 2000,
        // the log-domain fit does not notice.
        let sigma = 1.2;
        let samples: Vec<DecaySample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| DecaySample { xi_norm: xi, log_magnitude: -xi.powf(1.0 / sigma) })
            .collect();
        let profile = check_decay_log(&samples, &DecayKind::Gevrey { sigma }).unwrap();
        assert!((profile.delta().unwrap() - 1.0).abs() <= 1.0e-10);
        assert!((profile.r_squared().unwrap() - 1.0).abs() <= 1.0e-12);
        assert_eq!(profile.used(), 16);
    }

    #[test]
    fn decay_fit_is_scale_equivariant() {
        let sigma = 1.2;
        let base: Vec<DecaySample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| DecaySample {
                xi_norm: xi,
                // Imperfect decay so the fit has real residuals.
                log_magnitude: -0.8 * xi.powf(1.0 / sigma) + 0.05 * xi.ln().sin(),
            })
            .collect();
        let kind = DecayKind::Gevrey { sigma };
        let p0 = check_decay_log(&base, &kind).unwrap();
        let c: f64 = 37.5;
        let scaled: Vec<DecaySample<f64>> = base
            .iter()
            .map(|s| DecaySample { xi_norm: s.xi_norm, log_magnitude: s.log_magnitude + c.ln() })
            .collect();
        let p1 = check_decay_log(&scaled, &kind).unwrap();
        assert!((p1.delta().unwrap() - p0.delta().unwrap()).abs() <= 1.0e-10);
        assert!((p1.log_k().unwrap() - p0.log_k().unwrap() - c.ln()).abs() <= 1.0e-10);
        assert!((p1.r_squared().unwrap() - p0.r_squared().unwrap()).abs() <= 1.0e-10);
    }

    #[test]
    fn gaussian_data_passes_every_polynomial_order() {
        let samples: Vec<DecaySample<f64>> = log_grid(1.0, 1.0e4, 32)
            .into_iter()
            .map(|xi| DecaySample { xi_norm: xi, log_magnitude: -xi * xi })
            .collect();
        let zetas: Vec<f64> = (1..=12).map(|z| z as f64).collect();
        let kind = DecayKind::Polynomial { zetas: zetas.clone(), xi_floor: 1.0 };
        let profile = check_decay_log(&samples, &kind).unwrap();
        let DecayLaw::Polynomial { constants } = profile.law() else {
            panic!("polynomial kind must produce polynomial law");
        };
        assert_eq!(constants.len(), 12);
        for b in constants {
            assert!(b.k > 0.0 && b.k.is_finite(), "K_zeta positive and finite");
            // The constant is the sup, so the bound holds at every sample.
            for s in profile.samples() {
                assert!(s.log_magnitude <= b.log_k - b.zeta * s.xi_norm.ln() + 1.0e-12);
            }
        }
    }

    #[test]
    fn decay_fit_rejects_degenerate_inputs() {
        let kind = DecayKind::Gevrey { sigma: 1.0 };
        // All-zero magnitudes.
        let zero_rows: Vec<(f64, f64, f64)> =
            log_grid(1.0, 100.0, 10).into_iter().map(|xi| (xi, 0.0, 0.0)).collect();
        assert!(check_decay(&zero_rows, &kind).is_err());
        // Too few tail points above the fit floor.
        let head: Vec<(f64, f64, f64)> = vec![(1.0, 0.5, 0.0), (2.0, 0.4, 0.0), (4.0, 0.3, 0.0)];
        assert!(check_decay(&head, &kind).is_err());
        // Growth instead of decay.
        let growing: Vec<(f64, f64, f64)> =
            log_grid(10.0, 1.0e3, 10).into_iter().map(|xi| (xi, xi, 0.0)).collect();
        assert!(check_decay(&growing, &kind).is_err());
        // Frequencies below the Gevrey domain.
        let low: Vec<(f64, f64, f64)> =
            log_grid(0.1, 100.0, 10).into_iter().map(|xi| (xi, (-xi).exp(), 0.0)).collect();
        assert!(check_decay(&low, &kind).is_err());
    }

    fn consistent_gevrey_fit() -> GrowthFit<f64> {
        let model = gevrey_model(0.5);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| GrowthSample { xi_norm: xi, log_ratio: 0.5 * (1.0 + 4.0 * xi.powf(0.75)) })
            .collect();
        fit_growth(&samples, &model).unwrap()
    }

    fn gevrey_decay_profile(sigma: f64) -> DecayProfile<f64> {
        let samples: Vec<DecaySample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| DecaySample { xi_norm: xi, log_magnitude: -xi.powf(1.0 / sigma) })
            .collect();
        check_decay_log(&samples, &DecayKind::Gevrey { sigma }).unwrap()
    }

    #[test]
    fn classification_reports_the_power_law_threshold() {
        let fit = consistent_gevrey_fit();
        let decay = gevrey_decay_profile(1.2);
        let report = classify(&fit, &decay).unwrap();
        let WellPosednessClass::Gevrey { sigma_star } = report.class() else {
            panic!("power-law model must classify as gevrey");
        };
        assert_eq!(*sigma_star, 4.0 / 3.0);
        assert_eq!(report.get("sigma_star").unwrap(), format!("{:.16e}", 4.0 / 3.0));
        assert_eq!(report.get("preserved_class").unwrap(), format!("gevrey({:.16e})", 1.2));
        assert!(report.get("preservation").unwrap().starts_with("guaranteed"));
        assert!(report.get("limit_note").unwrap().contains("c-infinity"));
        println!("{}", report.render());
    }

    #[test]
    fn classification_reports_the_smooth_class_with_theta_bookkeeping() {
        let m = 1.5;
        let model = log_model(m);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| GrowthSample { xi_norm: xi, log_ratio: m * (1.0 + xi.ln()) })
            .collect();
        let fit = fit_growth(&samples, &model).unwrap();
        let decay_samples: Vec<DecaySample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| DecaySample { xi_norm: xi, log_magnitude: -xi * xi })
            .collect();
        let kind = DecayKind::Polynomial { zetas: vec![1.0, 2.0, 5.0], xi_floor: 1.0 };
        let decay = check_decay_log(&decay_samples, &kind).unwrap();
        let report = classify(&fit, &decay).unwrap();
        assert_eq!(*report.class(), WellPosednessClass::CInfinity);
        assert_eq!(report.get("modulus").unwrap(), "tau |log tau| / (1 + log |log tau|)");
        let theta_key = format!("theta[zeta={:.16e}]", 5.0);
        let theta: f64 = report.get(&theta_key).unwrap().parse().unwrap();
        assert!((theta - (5.0 - m)).abs() <= 1.0e-12);
        println!("{}", report.render());
    }

    #[test]
    fn classification_is_deterministic_and_refuses_inconsistent_fits() {
        let fit = consistent_gevrey_fit();
        let decay = gevrey_decay_profile(1.2);
        let a = classify(&fit, &decay).unwrap().render();
        let b = classify(&fit, &decay).unwrap().render();
        assert_eq!(a, b);

        let model = log_model(1.0);
        let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 16)
            .into_iter()
            .map(|xi| GrowthSample { xi_norm: xi, log_ratio: 0.3 * (1.0 + 4.0 * xi.powf(0.75)) })
            .collect();
        let bad = fit_growth(&samples, &model).unwrap();
        assert!(!bad.consistent());
        assert!(classify(&bad, &decay).is_err());
    }

    proptest! {
        #[test]
        fn sup_ratio_dominates_every_per_point_ratio(
            m in 0.05f64..2.0,
            wiggle in 0.0f64..0.2,
            seed in 0u64..1000,
        ) {
            let model = gevrey_model(m);
            let samples: Vec<GrowthSample<f64>> = log_grid(10.0, 1.0e4, 12)
                .into_iter()
                .enumerate()
                .map(|(k, xi)| {
                    let x = xi.powf(0.75);
                    let jitter = ((seed.wrapping_mul(2654435761).wrapping_add(k as u64 * 97) % 1000) as f64
                        / 1000.0
                        - 0.5)
                        * 2.0
                        * wiggle;
                    GrowthSample { xi_norm: xi, log_ratio: m * (1.0 + 4.0 * x) * (1.0 + jitter) }
                })
                .collect();
            let fit = fit_growth(&samples, &model).unwrap();
            prop_assert_eq!(fit.ratios().len(), samples.len());
            prop_assert_eq!(fit.residuals().len(), samples.len());
            for &r in fit.ratios() {
                prop_assert!(fit.sup_ratio() >= r);
            }
        }

        #[test]
        fn gevrey_decay_fit_is_shift_equivariant(shift in -50.0f64..50.0) {
            let sigma = 1.5;
            let base: Vec<DecaySample<f64>> = log_grid(10.0, 1.0e4, 12)
                .into_iter()
                .map(|xi| DecaySample {
                    xi_norm: xi,
                    log_magnitude: -0.6 * xi.powf(1.0 / sigma) + 0.02 * (3.0 * xi.ln()).cos(),
                })
                .collect();
            let kind = DecayKind::Gevrey { sigma };
            let p0 = check_decay_log(&base, &kind).unwrap();
            let shifted: Vec<DecaySample<f64>> = base
                .iter()
                .map(|s| DecaySample { xi_norm: s.xi_norm, log_magnitude: s.log_magnitude + shift })
                .collect();
            let p1 = check_decay_log(&shifted, &kind).unwrap();
            prop_assert!((p1.delta().unwrap() - p0.delta().unwrap()).abs() <= 1.0e-10);
            prop_assert!(
                (p1.log_k().unwrap() - p0.log_k().unwrap() - shift).abs() <= 1.0e-9
            );
        }
    }
}
