//! Time-dependent coefficient matrices, their normalized symbols, and
//! empirically certified regularity.
//!
//! A [`CoefficientField`] is the symmetric matrix `a_ij(t)` on `(0, T]`
//! together with guaranteed two-sided bounds on its quadratic form and an
//! optional regularity certificate stating, with evidence, that
//!
//! ```text
//!     |a(t + tau, xi) - a(t, xi)| <= C mu(tau) / nu(t)
//! ```
//!
//! holds on the sampled grid. The singular test families
//! ([`make_test_coefficient`]) oscillate ever faster as `t` heads to zero
//! while staying uniformly bounded, which is exactly the regime the rest of
//! the crate exists to study.
//!
//! Phase arithmetic is exposed deliberately ([`Phase`],
//! [`CoefficientField::symbol_oscillation`]): downstream quadrature switches
//! algorithms based on the local oscillation rate, and reconstructing that
//! information by differencing would be both slow and ill-conditioned.
//!
//! A precision note for the singular families: the phase `t^-q` is computed
//! in working precision, so its absolute roundoff is about `t^-q * eps`.
//! Below `t ~ 1e-4` (at `q = 3`, in `f64`) the phase carries an error of a
//! good fraction of a radian and pointwise values of `sin` lose meaning,
//! while sup-type statistics (hyperbolicity scans, certificate estimators)
//! remain valid because they only need the value distribution, not the
//! phase alignment.

use crate::error::{Error, Result};
use crate::moduli::{BlowupSpec, ModulusSpec, PsiFamily, PsiSpec};
use crate::quad::root_bracketed;
use crate::{cst, Real};

/// Oscillation phase of a singular entry; the entry value is
/// `base + amp * sin(phase(t))`.
#[derive(Debug, Clone, PartialEq)]
pub enum Phase<T> {
    /// `phase(t) = t^-q`, `q > 0`; rate `-q t^-(q+1)`.
    InversePower { q: T },
    /// `phase(t) = F(t) - offset` where `F' = 1 / nu` for the blow-up rate
    /// derived from `psi`; ticks exactly as fast as the regularity budget
    /// allows. `offset` pins the phase to zero at a chosen reference time.
    BlowupClock { psi: PsiSpec<T>, offset: T },
}

/// Reciprocal of the frozen blow-up rate above `1/e`: `e * psi'(1)`.
fn clock_top_rate<T: Real>(psi: &PsiSpec<T>) -> T {
    T::one().exp() * psi.psi_prime(T::one()).expect("r = 1")
}

/// Antiderivative of `1 / nu` for the psi-derived blow-up rate, continuous
/// across the freeze at `t = 1/e`. Closed form per family.
fn clock_value<T: Real>(psi: &PsiSpec<T>, t: T) -> T {
    let e_inv = T::one().exp().recip();
    if t <= e_inv {
        let r = (-t.ln()).max(T::one());
        match psi.family() {
            PsiFamily::Identity => -r,
            PsiFamily::OneMinusExp { alpha } => (-*alpha * r).exp(),
            PsiFamily::OnePlusLog => -r.ln(),
            PsiFamily::Power { beta } => -r.powf(*beta),
        }
    } else {
        let at_split = match psi.family() {
            PsiFamily::Identity => -T::one(),
            PsiFamily::OneMinusExp { alpha } => (-*alpha).exp(),
            PsiFamily::OnePlusLog => T::zero(),
            PsiFamily::Power { beta: _ } => -T::one(),
        };
        at_split + (t - e_inv) * clock_top_rate(psi)
    }
}

impl<T: Real> Phase<T> {
    /// Phase value at `t > 0`.
    pub fn value(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return Err(Error::domain(format!("phase undefined at t = {t} <= 0")));
        }
        Ok(match self {
            Phase::InversePower { q } => t.powf(-*q),
            Phase::BlowupClock { psi, offset } => clock_value(psi, t) - *offset,
        })
    }

    /// Signed rate `d(phase)/dt` at `t > 0`.
    pub fn rate(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return Err(Error::domain(format!("phase rate undefined at t = {t} <= 0")));
        }
        Ok(match self {
            Phase::InversePower { q } => -*q * t.powf(-*q - T::one()),
            Phase::BlowupClock { psi, offset: _ } => {
                let e_inv = T::one().exp().recip();
                if t <= e_inv {
                    let r = (-t.ln()).max(T::one());
                    psi.psi_prime(r).expect("r >= 1") / t
                } else {
                    clock_top_rate(psi)
                }
            }
        })
    }

    /// The unique `t` where `|rate(t)| = target`, if one exists. Rates fall
    /// monotonically away from the singular instant, so this is the boundary
    /// between the frequency-resolved and unresolved regions for a given
    /// sampling budget. `None` means the rate never drops to `target`.
    pub fn time_at_rate_magnitude(&self, target: T) -> Option<T> {
        if !(target > T::zero()) {
            return None;
        }
        match self {
            Phase::InversePower { q } => Some((*q / target).powf((*q + T::one()).recip())),
            Phase::BlowupClock { psi, offset: _ } => {
                let e_inv = T::one().exp().recip();
                if target <= clock_top_rate(psi) {
                    return None;
                }
                // rate(t) = 1/nu(t); solve nu(t) = 1/target by bisection on
                // the monotone blow-up rate.
                let nu = |t: T| {
                    let r = (-t.ln()).max(T::one());
                    t / psi.psi_prime(r).expect("r >= 1")
                };
                let goal = target.recip();
                let mut lo = e_inv;
                let mut guard = 0;
                while nu(lo) > goal {
                    lo = lo * cst(0.5);
                    guard += 1;
                    if guard > 4000 {
                        return None;
                    }
                }
                let f = |t: T| nu(t) - goal;
                root_bracketed(&f, lo, e_inv, lo * cst(1.0e-14), 300).ok()
            }
        }
    }
}

/// Cubic Hermite interpolant of a sampled entry, with Catmull-Rom
/// tangents. The grid must increase strictly; log-spaced grids accumulating
/// at the singular end are the intended use.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedEntry<T> {
    ts: Vec<T>,
    vals: Vec<T>,
    tangents: Vec<T>,
}

impl<T: Real> TabulatedEntry<T> {
    /// Builds the interpolant from `(t, value)` samples.
    pub fn new(samples: Vec<(T, T)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::spec("tabulated entry needs at least two samples".to_string()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::spec(format!(
                    "tabulated entry grid must increase strictly, violated near t = {}",
                    w[1].0
                )));
            }
        }
        let n = samples.len();
        let ts: Vec<T> = samples.iter().map(|s| s.0).collect();
        let vals: Vec<T> = samples.iter().map(|s| s.1).collect();
        let mut tangents = vec![T::zero(); n];
        tangents[0] = (vals[1] - vals[0]) / (ts[1] - ts[0]);
        tangents[n - 1] = (vals[n - 1] - vals[n - 2]) / (ts[n - 1] - ts[n - 2]);
        for k in 1..n - 1 {
            tangents[k] = (vals[k + 1] - vals[k - 1]) / (ts[k + 1] - ts[k - 1]);
        }
        Ok(TabulatedEntry { ts, vals, tangents })
    }

    /// Parses a two-column whitespace-separated `(t, value)` table; `#`
    /// starts a comment, blank lines are skipped.
    pub fn from_table_text(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<T> {
                let s = s.ok_or_else(|| {
                    Error::spec(format!("table line {} needs two columns", lineno + 1))
                })?;
                let v: f64 = s.parse().map_err(|_| {
                    Error::spec(format!("table line {}: bad number {s:?}", lineno + 1))
                })?;
                Ok(cst(v))
            };
            let t = parse(cols.next())?;
            let v = parse(cols.next())?;
            if cols.next().is_some() {
                return Err(Error::spec(format!(
                    "table line {} has more than two columns",
                    lineno + 1
                )));
            }
            samples.push((t, v));
        }
        TabulatedEntry::new(samples)
    }

    fn domain(&self) -> (T, T) {
        (self.ts[0], *self.ts.last().expect("nonempty"))
    }

    fn segment(&self, t: T) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::domain(format!(
                "tabulated entry evaluated at t = {t} outside [{lo}, {hi}]"
            )));
        }
        Ok(self.ts.partition_point(|&x| x < t).clamp(1, self.ts.len() - 1) - 1)
    }

    fn value(&self, t: T) -> Result<T> {
        let k = self.segment(t)?;
        let h = self.ts[k + 1] - self.ts[k];
        let s = (t - self.ts[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let three = cst::<T>(3.0);
        let two = cst::<T>(2.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        Ok(h00 * self.vals[k]
            + h10 * h * self.tangents[k]
            + h01 * self.vals[k + 1]
            + h11 * h * self.tangents[k + 1])
    }

    fn derivative(&self, t: T) -> Result<T> {
        let k = self.segment(t)?;
        let h = self.ts[k + 1] - self.ts[k];
        let s = (t - self.ts[k]) / h;
        let s2 = s * s;
        let six = cst::<T>(6.0);
        let three = cst::<T>(3.0);
        let four = cst::<T>(4.0);
        let two = cst::<T>(2.0);
        let d00 = (six * s2 - six * s) / h;
        let d10 = three * s2 - four * s + T::one();
        let d01 = (-six * s2 + six * s) / h;
        let d11 = three * s2 - two * s;
        Ok(d00 * self.vals[k]
            + d10 * self.tangents[k]
            + d01 * self.vals[k + 1]
            + d11 * self.tangents[k + 1])
    }

    fn bounds(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for w in self.ts.windows(2) {
            for m in 0..=16 {
                let t = w[0] + (w[1] - w[0]) * cst::<T>(m as f64 / 16.0);
                let v = self.value(t).expect("inside domain");
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// One scalar time-function: an entry of the coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarEntry<T> {
    /// Constant in time.
    Constant(T),
    /// Affine in time, `value0 + slope * t`; a smooth non-constant control.
    Linear { value0: T, slope: T },
    /// `base + amp * sin(phase(t))`: bounded, smooth away from `t = 0`,
    /// with no limit at `t = 0`.
    Oscillatory { base: T, amp: T, phase: Phase<T> },
    /// Interpolated sample table.
    Tabulated(TabulatedEntry<T>),
}

impl<T: Real> ScalarEntry<T> {
    /// Entry value. Singular entries reject `t <= 0`; `t = 0` succeeds only
    /// for families with a continuous extension there.
    pub fn value(&self, t: T) -> Result<T> {
        match self {
            ScalarEntry::Constant(c) => Ok(*c),
            ScalarEntry::Linear { value0, slope } => Ok(*value0 + *slope * t),
            ScalarEntry::Oscillatory { base, amp, phase } => {
                let p = phase.value(t).map_err(|_| {
                    Error::domain(format!(
                        "oscillatory entry has no limit at t = 0 (asked at t = {t})"
                    ))
                })?;
                Ok(*base + *amp * p.sin())
            }
            ScalarEntry::Tabulated(tab) => tab.value(t),
        }
    }

    /// Entry time-derivative, where defined.
    pub fn derivative(&self, t: T) -> Result<T> {
        match self {
            ScalarEntry::Constant(_) => Ok(T::zero()),
            ScalarEntry::Linear { slope, .. } => Ok(*slope),
            ScalarEntry::Oscillatory { amp, phase, .. } => {
                Ok(*amp * phase.value(t)?.cos() * phase.rate(t)?)
            }
            ScalarEntry::Tabulated(tab) => tab.derivative(t),
        }
    }

    /// Whether `value(0)` is meaningful by continuous extension.
    pub fn has_limit_at_zero(&self) -> bool {
        match self {
            ScalarEntry::Constant(_) | ScalarEntry::Linear { .. } => true,
            ScalarEntry::Oscillatory { amp, .. } => *amp == T::zero(),
            ScalarEntry::Tabulated(tab) => tab.domain().0 <= T::zero(),
        }
    }

    /// Guaranteed range of the entry over `(0, horizon]`.
    fn bounds(&self, horizon: T) -> (T, T) {
        match self {
            ScalarEntry::Constant(c) => (*c, *c),
            ScalarEntry::Linear { value0, slope } => {
                let end = *value0 + *slope * horizon;
                (value0.min(end), value0.max(end))
            }
            ScalarEntry::Oscillatory { base, amp, .. } => (*base - amp.abs(), *base + amp.abs()),
            ScalarEntry::Tabulated(tab) => tab.bounds(),
        }
    }
}

/// Oscillation structure of the symbol along a fixed direction:
/// `symbol(t) = offset + amp * sin(phase(t))` with a signed amplitude.
#[derive(Debug, Clone)]
pub struct SymbolOscillation<T> {
    pub offset: T,
    pub amp: T,
    pub phase: Phase<T>,
}

/// Evidence that the field obeys a `(mu, nu)` regularity bound: the
/// empirical constant, the gauges it was measured against, and the sample
/// count behind it. `analytic_floor` carries the closed-form bound for the
/// generated families; the stored constant is never below it.
#[derive(Debug, Clone)]
pub struct RegularityCertificate<T> {
    pub constant: T,
    pub modulus: ModulusSpec<T>,
    pub blowup: BlowupSpec<T>,
    pub tau0: T,
    pub samples: usize,
    pub analytic_floor: Option<T>,
}

/// Sampling plan for the regularity estimator: log-spaced time and lag
/// grids plus a cap on how many unit directions to probe.
#[derive(Debug, Clone, Copy)]
pub struct CertificateGrid<T> {
    pub t_min: T,
    pub t_count: usize,
    pub tau_min: T,
    pub tau_count: usize,
    pub max_directions: usize,
}

impl<T: Real> CertificateGrid<T> {
    /// Default plan. `t_min = 1e-3` keeps the singular families inside the
    /// phase-precision budget discussed in the module docs.
    pub fn standard() -> Self {
        CertificateGrid {
            t_min: cst(1.0e-3),
            t_count: 120,
            tau_min: cst(1.0e-9),
            tau_count: 120,
            max_directions: 5,
        }
    }

    /// One refinement doubling, for stability checks.
    pub fn refined(&self) -> Self {
        CertificateGrid { t_count: self.t_count * 2, tau_count: self.tau_count * 2, ..*self }
    }
}

/// Deterministic probe set on the unit sphere: axes, two-axis diagonals,
/// the all-ones direction, and the alternating-sign direction.
pub fn standard_directions<T: Real>(dim: usize) -> Vec<Vec<T>> {
    let mut dirs: Vec<Vec<T>> = Vec::new();
    for i in 0..dim {
        let mut v = vec![T::zero(); dim];
        v[i] = T::one();
        dirs.push(v);
    }
    let inv_sqrt2 = cst::<T>(0.5).sqrt();
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut v = vec![T::zero(); dim];
            v[i] = inv_sqrt2;
            v[j] = inv_sqrt2;
            dirs.push(v.clone());
            v[j] = -inv_sqrt2;
            dirs.push(v);
        }
    }
    if dim > 2 {
        let scale = (cst::<T>(dim as f64)).sqrt().recip();
        dirs.push(vec![scale; dim]);
        dirs.push((0..dim).map(|i| if i % 2 == 0 { scale } else { -scale }).collect());
    }
    dirs
}

/// The symmetric coefficient matrix `a_ij(t)` on `(0, T]` with guaranteed
/// hyperbolicity bounds and an optional regularity certificate.
#[derive(Debug, Clone)]
pub struct CoefficientField<T> {
    dim: usize,
    entries: Vec<ScalarEntry<T>>,
    horizon: T,
    lambda0: T,
    big_lambda0: T,
    certificate: Option<RegularityCertificate<T>>,
}

impl<T: Real> CoefficientField<T> {
    /// Builds and validates a field from a row-major `dim x dim` entry
    /// matrix. Symmetry is structural (mirror entries must be equal), and
    /// the quadratic form must be provably positive: the constructor
    /// computes interval bounds per entry and a Gershgorin-type enclosure
    /// of the eigenvalue range, exact for diagonal fields and conservative
    /// otherwise.
    pub fn new(dim: usize, entries: Vec<ScalarEntry<T>>, horizon: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::spec("space dimension must be positive".to_string()));
        }
        if !(horizon > T::zero()) {
            return Err(Error::spec(format!("time horizon must be positive, got {horizon}")));
        }
        if entries.len() != dim * dim {
            return Err(Error::spec(format!(
                "need {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::spec(format!(
                        "entries ({i},{j}) and ({j},{i}) differ; the matrix must be symmetric"
                    )));
                }
            }
        }
        let bounds: Vec<(T, T)> = entries.iter().map(|e| e.bounds(horizon)).collect();
        let mut lambda0 = T::infinity();
        let mut big_lambda0 = T::neg_infinity();
        for i in 0..dim {
            let (dlo, dhi) = bounds[i * dim + i];
            let mut radius = T::zero();
            for j in 0..dim {
                if j != i {
                    let (lo, hi) = bounds[i * dim + j];
                    radius += lo.abs().max(hi.abs());
                }
            }
            lambda0 = lambda0.min(dlo - radius);
            big_lambda0 = big_lambda0.max(dhi + radius);
        }
        if !(lambda0 > T::zero()) {
            return Err(Error::spec(format!(
                "field is not provably strictly hyperbolic: eigenvalue lower bound {lambda0}"
            )));
        }
        Ok(CoefficientField { dim, entries, horizon, lambda0, big_lambda0, certificate: None })
    }

    /// Attaches a regularity certificate (builder style).
    pub fn with_certificate(mut self, certificate: RegularityCertificate<T>) -> Self {
        self.certificate = Some(certificate);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// Guaranteed lower bound on the quadratic form.
    pub fn lambda0(&self) -> T {
        self.lambda0
    }

    /// Guaranteed upper bound on the quadratic form.
    pub fn big_lambda0(&self) -> T {
        self.big_lambda0
    }

    /// Sup norm of the symbol; equals the upper hyperbolicity bound because
    /// the form is positive.
    pub fn sup_norm(&self) -> T {
        self.big_lambda0
    }

    pub fn certificate(&self) -> Option<&RegularityCertificate<T>> {
        self.certificate.as_ref()
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarEntry<T> {
        &self.entries[i * self.dim + j]
    }

    /// Entry value with the field's time-domain rules.
    pub fn value(&self, i: usize, j: usize, t: T) -> Result<T> {
        self.check_time(t)?;
        self.entry(i, j).value(t)
    }

    /// Whether every entry extends continuously to `t = 0`.
    pub fn has_limit_at_zero(&self) -> bool {
        self.entries.iter().all(|e| e.has_limit_at_zero())
    }

    /// Whether the matrix is independent of time (all entries constant).
    pub fn is_constant_in_time(&self) -> bool {
        self.entries.iter().all(|e| matches!(e, ScalarEntry::Constant(_)))
    }

    fn check_time(&self, t: T) -> Result<()> {
        if !(t >= T::zero()) || t > self.horizon {
            return Err(Error::domain(format!(
                "time {t} outside the field domain [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Normalized symbol `sum a_ij(t) xi_i xi_j / |xi|^2`; degree-0
    /// homogeneous in `xi`.
    pub fn symbol(&self, t: T, xi: &[T]) -> Result<T> {
        self.check_time(t)?;
        if xi.len() != self.dim {
            return Err(Error::domain(format!(
                "direction has {} components, field has dimension {}",
                xi.len(),
                self.dim
            )));
        }
        let norm_sq = xi.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if !(norm_sq > T::zero()) {
            return Err(Error::domain("symbol is undefined at xi = 0".to_string()));
        }
        let mut acc = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let aij = self.entry(i, j).value(t)?;
                acc += aij * xi[i] * xi[j];
            }
        }
        Ok(acc / norm_sq)
    }

    /// Min/max of the symbol over the product of the given grids. Passing
    /// means the sampled form stayed positive; the error names the first
    /// offending sample point.
    pub fn check_hyperbolicity(&self, t_grid: &[T], xi_grid: &[Vec<T>]) -> Result<(T, T)> {
        if t_grid.is_empty() || xi_grid.is_empty() {
            return Err(Error::domain("hyperbolicity check needs non-empty grids".to_string()));
        }
        let mut min = T::infinity();
        let mut max = T::neg_infinity();
        let mut argmin = (T::zero(), 0usize);
        for &t in t_grid {
            for (k, xi) in xi_grid.iter().enumerate() {
                let s = self.symbol(t, xi)?;
                if s < min {
                    min = s;
                    argmin = (t, k);
                }
                max = max.max(s);
            }
        }
        if !(min > T::zero()) {
            return Err(Error::spec(format!(
                "hyperbolicity violated: symbol = {min} at t = {}, direction index {}",
                argmin.0, argmin.1
            )));
        }
        Ok((min, max))
    }

    /// Log-spaced time grid accumulating at the singular end, for scans.
    pub fn standard_time_grid(&self, n: usize) -> Vec<T> {
        let n = n.max(2);
        let lo = self.horizon * cst::<T>(1.0e-8);
        let ratio = cst::<T>(8.0 * std::f64::consts::LN_10 / (n - 1) as f64).exp();
        let mut grid = Vec::with_capacity(n);
        let mut t = lo;
        for _ in 0..n {
            grid.push(t.min(self.horizon));
            t = t * ratio;
        }
        grid
    }

    /// Empirical regularity constant: the sup over the sampling plan of
    /// `|a(t + tau, xi) - a(t, xi)| nu(t) / mu(tau)`.
    ///
    /// Sup-valued by design; it cannot fail, it can only grow under grid
    /// refinement, and unbounded growth is precisely the diagnostic that
    /// the proposed `(mu, nu)` pair does not control this field.
    pub fn estimate_regularity_constant(
        &self,
        modulus: &ModulusSpec<T>,
        blowup: &BlowupSpec<T>,
        grid: &CertificateGrid<T>,
    ) -> Result<T> {
        if !(grid.t_min > T::zero()) || grid.t_count < 2 || grid.tau_count < 2 {
            return Err(Error::domain(
                "estimator grid must be positive and non-trivial".to_string(),
            ));
        }
        let dirs = {
            let mut d = standard_directions::<T>(self.dim);
            d.truncate(grid.max_directions.max(1));
            d
        };
        let t_hi = self.horizon * cst::<T>(0.999);
        if t_hi <= grid.t_min {
            return Err(Error::domain("estimator grid starts past the horizon".to_string()));
        }
        let t_ratio = (t_hi / grid.t_min).powf(cst::<T>(1.0 / (grid.t_count - 1) as f64));
        let mut sup = T::zero();
        let mut t = grid.t_min;
        for _ in 0..grid.t_count {
            let tau_max = modulus.tau0().min(self.horizon - t);
            if tau_max > grid.tau_min {
                let tau_ratio =
                    (tau_max / grid.tau_min).powf(cst::<T>(1.0 / (grid.tau_count - 1) as f64));
                let nu_t = blowup.eval(t)?;
                let mut tau = grid.tau_min;
                for _ in 0..grid.tau_count {
                    let mu_tau = modulus.eval(tau)?;
                    for xi in &dirs {
                        let delta = (self.symbol(t + tau, xi)? - self.symbol(t, xi)?).abs();
                        let ratio = delta * nu_t / mu_tau;
                        if ratio > sup {
                            sup = ratio;
                        }
                    }
                    tau = (tau * tau_ratio).min(tau_max);
                }
            }
            t = (t * t_ratio).min(t_hi);
        }
        Ok(sup)
    }

    /// Oscillation structure of the symbol along `xi`, when the field has
    /// one: every entry constant or oscillating with one shared phase. The
    /// quadratic form then collapses to `offset + amp * sin(phase(t))`,
    /// which is what the oscillation-aware integrators consume. Fields
    /// outside that shape report `None` and take the generic slow paths.
    pub fn symbol_oscillation(&self, xi: &[T]) -> Result<Option<SymbolOscillation<T>>> {
        if xi.len() != self.dim {
            return Err(Error::domain(format!(
                "direction has {} components, field has dimension {}",
                xi.len(),
                self.dim
            )));
        }
        let norm_sq = xi.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if !(norm_sq > T::zero()) {
            return Err(Error::domain("direction must be nonzero".to_string()));
        }
        let mut shared: Option<&Phase<T>> = None;
        for e in &self.entries {
            match e {
                ScalarEntry::Constant(_) => {}
                ScalarEntry::Oscillatory { phase, .. } => match shared {
                    None => shared = Some(phase),
                    Some(p) if p == phase => {}
                    Some(_) => return Ok(None),
                },
                _ => return Ok(None),
            }
        }
        let Some(phase) = shared else { return Ok(None) };
        let mut offset = T::zero();
        let mut amp = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let w = xi[i] * xi[j] / norm_sq;
                match self.entry(i, j) {
                    ScalarEntry::Constant(c) => offset += *c * w,
                    ScalarEntry::Oscillatory { base, amp: a, .. } => {
                        offset += *base * w;
                        amp += *a * w;
                    }
                    _ => unreachable!("filtered above"),
                }
            }
        }
        Ok(Some(SymbolOscillation { offset, amp, phase: phase.clone() }))
    }
}

/// Generator input for the bundled test families.
#[derive(Debug, Clone)]
pub enum TestCoefficientKind<T> {
    /// `a(t) = value`: the classical, perfectly regular control case.
    Constant { value: T },
    /// `a(t) = base + amp sin(t^-q)` with `q = p/alpha - 1`: oscillates
    /// exactly hard enough to saturate a Hoelder-`alpha` modulus against a
    /// `t^p` blow-up rate. The lag interpolation
    /// `|da| <= min(2 amp, amp q t^-(q+1) tau)` gives the closed-form
    /// certificate constant `2^(1-alpha) amp q^alpha`.
    HolderSingular { base: T, amp: T, alpha: T, p: T },
    /// `a(t) = base + amp sin(phase(t))` with `phase' = 1/nu` for the
    /// psi-derived blow-up rate and `phase(T) = 0`. Since `tau <= mu(tau)`
    /// on the derived modulus's domain, the certificate constant is `amp`
    /// itself.
    PsiSingular { base: T, amp: T, psi: PsiSpec<T> },
}

/// Relative certificate drift tolerated between one grid refinement and the
/// next before the generator refuses to bless the family.
const CERTIFICATE_STABILITY: f64 = 0.05;

/// Builds a `dim`-dimensional scalar field `a(t) * I` from a test family,
/// with hyperbolicity bounds and a refinement-checked regularity
/// certificate attached.
pub fn make_test_coefficient<T: Real>(
    kind: TestCoefficientKind<T>,
    dim: usize,
    horizon: T,
) -> Result<CoefficientField<T>> {
    let (entry, modulus, blowup, analytic) = match kind {
        TestCoefficientKind::Constant { value } => {
            if !(value > T::zero()) {
                return Err(Error::spec(format!(
                    "constant coefficient must be positive, got {value}"
                )));
            }
            (
                ScalarEntry::Constant(value),
                ModulusSpec::holder(T::one())?,
                BlowupSpec::constant(),
                Some(T::zero()),
            )
        }
        TestCoefficientKind::HolderSingular { base, amp, alpha, p } => {
            if !(amp > T::zero()) || !(base > amp) {
                return Err(Error::spec(format!(
                    "need base > amp > 0 for strict hyperbolicity, got base {base}, amp {amp}"
                )));
            }
            if !(alpha > T::zero() && alpha <= T::one()) || !(p > alpha) {
                return Err(Error::spec(format!(
                    "need 0 < alpha <= 1 and p > alpha, got alpha {alpha}, p {p}"
                )));
            }
            let q = p / alpha - T::one();
            let analytic = cst::<T>(2.0).powf(T::one() - alpha) * amp * q.powf(alpha);
            (
                ScalarEntry::Oscillatory { base, amp, phase: Phase::InversePower { q } },
                ModulusSpec::holder(alpha)?,
                BlowupSpec::power(p)?,
                Some(analytic),
            )
        }
        TestCoefficientKind::PsiSingular { base, amp, psi } => {
            if !(amp > T::zero()) || !(base > amp) {
                return Err(Error::spec(format!(
                    "need base > amp > 0 for strict hyperbolicity, got base {base}, amp {amp}"
                )));
            }
            let offset = clock_value(&psi, horizon);
            (
                ScalarEntry::Oscillatory {
                    base,
                    amp,
                    phase: Phase::BlowupClock { psi: psi.clone(), offset },
                },
                ModulusSpec::psi_derived(psi.clone())?,
                BlowupSpec::psi_derived(psi)?,
                Some(amp),
            )
        }
    };

    let mut entries = vec![ScalarEntry::Constant(T::zero()); dim * dim];
    for i in 0..dim {
        entries[i * dim + i] = entry.clone();
    }
    let field = CoefficientField::new(dim, entries, horizon)?;

    let grid = CertificateGrid::standard();
    let coarse = field.estimate_regularity_constant(&modulus, &blowup, &grid)?;
    let fine_grid = grid.refined();
    let fine = field.estimate_regularity_constant(&modulus, &blowup, &fine_grid)?;
    let scale = fine.max(coarse).max(T::epsilon());
    if (fine - coarse).abs() > cst::<T>(CERTIFICATE_STABILITY) * scale {
        return Err(Error::NonConvergence(format!(
            "certificate unstable under refinement: {coarse:e} -> {fine:e}"
        )));
    }
    let constant = match analytic {
        Some(floor) => fine.max(floor),
        None => fine,
    };
    let tau0 = modulus.tau0();
    let samples = fine_grid.t_count
        * fine_grid.tau_count
        * fine_grid.max_directions.min(standard_directions::<T>(dim).len());
    Ok(field.with_certificate(RegularityCertificate {
        constant,
        modulus,
        blowup,
        tau0,
        samples,
        analytic_floor: analytic,
    }))
}
