//! Run descriptions and the staged pipeline behind the command line.
//!
//! A TOML config names a coefficient field, a mollifier kernel, a frequency
//! grid, an initial-data profile and tolerances. The stages consume it in
//! order: [`prepare`] parses and cross-validates, [`certify`] assembles the
//! regularity certificate and the proof constants into an exponent model,
//! [`verify_smoothing`] grid-checks the mollification bounds, [`sweep`]
//! integrates one mode per frequency against its growth budget, and the
//! fit, decay and classification stages turn the sweep into a verdict.
//!
//! Emitters write CSV or JSONL tables with floats at 17 significant digits
//! and nothing volatile (no timestamps, no machine identifiers, no map
//! iteration), so a run reproduces byte for byte given the same config,
//! independent of the worker count: parallel sweeps collect through an
//! indexed iterator that preserves grid order.
//!
//! The module is `f64`-concrete. Configs describe production runs and the
//! shipped binary integrates in double precision; the generic core stays
//! available for callers that want another scalar.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_decay_log, classify, fit_growth, Classification, DecayKind, DecayProfile, DecaySample,
    GrowthFit, GrowthSample,
};
use crate::coefficients::{
    make_test_coefficient, CertificateGrid, CoefficientField, RegularityCertificate, ScalarEntry,
    TabulatedEntry, TestCoefficientKind,
};
use crate::energy::{
    coupled_eps, gronwall_bound, integrate_mode, tau1, ExponentModel, ExponentShape, ModeOptions,
};
use crate::error::{Error, Result};
use crate::moduli::{BlowupSpec, ModulusSpec, PsiSpec};
use crate::mollify::{
    default_eps_grid, default_t_grid, verify_prop23, MollifiedCoefficient, MollifierKernel,
    Prop23Report,
};

/// Table serialization format. CSV carries a header row; JSONL carries one
/// object per line with the same keys in the same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            other => Err(Error::config(format!(
                "unknown output format \"{other}\"; expected \"csv\" or \"jsonl\""
            ))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Top-level run description, one TOML document.
///
/// Parsing is strict (unknown keys are errors, so typos surface instead of
/// silently deserializing to defaults) and serialization drops unset
/// optional keys, so `parse(to_toml(parse(text)))` preserves every
/// semantic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Coefficient field selector: a named family with its parameters, or a
/// sample table loaded from disk. Cross-field requirements (which optional
/// keys each family needs and which it must not carry) are enforced by
/// [`prepare`], with errors naming the offending key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub family: FieldFamily,
    pub horizon: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Constant family only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// Singular families: `a(t) = base + amp * sin(phase(t))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amp: Option<f64>,
    /// Power-type family: modulus exponent in `]0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Power-type family: blowup exponent, `p > alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Log-type family: the weight shaping both the oscillation and the
    /// regularity scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiConfig>,
    /// Table family: whitespace-separated `t a` samples, resolved relative
    /// to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Table family: the regularity scale the samples are claimed to obey.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<ModulusConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup: Option<BlowupConfig>,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    Constant,
    HolderSingular,
    PsiSingular,
    Table,
}

impl FieldFamily {
    pub fn name(self) -> &'static str {
        match self {
            FieldFamily::Constant => "constant",
            FieldFamily::HolderSingular => "holder_singular",
            FieldFamily::PsiSingular => "psi_singular",
            FieldFamily::Table => "table",
        }
    }
}

/// Weight selector: `kind` plus the parameter that kind requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    pub kind: PsiKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiKind {
    Identity,
    OneMinusExp,
    OnePlusLog,
    Power,
}

impl PsiKind {
    fn name(self) -> &'static str {
        match self {
            PsiKind::Identity => "identity",
            PsiKind::OneMinusExp => "one-minus-exp",
            PsiKind::OnePlusLog => "one-plus-log",
            PsiKind::Power => "power",
        }
    }
}

impl PsiConfig {
    fn build(&self, at: &str) -> Result<PsiSpec<f64>> {
        let kind = self.kind.name();
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::config(format!("{at}.{key} is required for kind = \"{kind}\"")))
        };
        let refuse = |v: Option<f64>, key: &str| {
            if v.is_some() {
                Err(Error::config(format!("{at}.{key} does not apply to kind = \"{kind}\"")))
            } else {
                Ok(())
            }
        };
        match self.kind {
            PsiKind::Identity => {
                refuse(self.alpha, "alpha")?;
                refuse(self.beta, "beta")?;
                Ok(PsiSpec::identity())
            }
            PsiKind::OneMinusExp => {
                refuse(self.beta, "beta")?;
                PsiSpec::one_minus_exp(need(self.alpha, "alpha")?)
            }
            PsiKind::OnePlusLog => {
                refuse(self.alpha, "alpha")?;
                refuse(self.beta, "beta")?;
                Ok(PsiSpec::one_plus_log())
            }
            PsiKind::Power => {
                refuse(self.alpha, "alpha")?;
                PsiSpec::power(need(self.beta, "beta")?)
            }
        }
    }
}

/// Modulus selector for table fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusConfig {
    pub kind: ModulusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulusKind {
    Holder,
    PsiDerived,
}

impl ModulusConfig {
    fn build(&self, at: &str) -> Result<ModulusSpec<f64>> {
        match self.kind {
            ModulusKind::Holder => {
                if self.psi.is_some() {
                    return Err(Error::config(format!(
                        "{at}.psi does not apply to kind = \"holder\""
                    )));
                }
                let alpha = self.alpha.ok_or_else(|| {
                    Error::config(format!("{at}.alpha is required for kind = \"holder\""))
                })?;
                ModulusSpec::holder(alpha)
            }
            ModulusKind::PsiDerived => {
                if self.alpha.is_some() {
                    return Err(Error::config(format!(
                        "{at}.alpha does not apply to kind = \"psi-derived\""
                    )));
                }
                let psi = self.psi.as_ref().ok_or_else(|| {
                    Error::config(format!("{at}.psi is required for kind = \"psi-derived\""))
                })?;
                ModulusSpec::psi_derived(psi.build(&format!("{at}.psi"))?)
            }
        }
    }
}

/// Blowup-rate selector for table fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    pub kind: BlowupKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupKind {
    Constant,
    Power,
    PsiDerived,
}

impl BlowupConfig {
    fn build(&self, at: &str) -> Result<BlowupSpec<f64>> {
        let refuse_p = || {
            if self.p.is_some() {
                Err(Error::config(format!("{at}.p does not apply to this kind")))
            } else {
                Ok(())
            }
        };
        let refuse_psi = || {
            if self.psi.is_some() {
                Err(Error::config(format!("{at}.psi does not apply to this kind")))
            } else {
                Ok(())
            }
        };
        match self.kind {
            BlowupKind::Constant => {
                refuse_p()?;
                refuse_psi()?;
                Ok(BlowupSpec::constant())
            }
            BlowupKind::Power => {
                refuse_psi()?;
                let p = self.p.ok_or_else(|| {
                    Error::config(format!("{at}.p is required for kind = \"power\""))
                })?;
                BlowupSpec::power(p)
            }
            BlowupKind::PsiDerived => {
                refuse_p()?;
                let psi = self.psi.as_ref().ok_or_else(|| {
                    Error::config(format!("{at}.psi is required for kind = \"psi-derived\""))
                })?;
                BlowupSpec::psi_derived(psi.build(&format!("{at}.psi"))?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub profile: KernelProfile,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { profile: KernelProfile::Bump }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelProfile {
    Bump,
    Polynomial,
}

impl KernelProfile {
    pub fn name(self) -> &'static str {
        match self {
            KernelProfile::Bump => "bump",
            KernelProfile::Polynomial => "polynomial",
        }
    }

    fn build(self) -> Result<MollifierKernel<f64>> {
        match self {
            KernelProfile::Bump => MollifierKernel::bump(),
            KernelProfile::Polynomial => MollifierKernel::polynomial(),
        }
    }
}

/// Log-spaced frequency grid, `count` points from `xi_min` to `xi_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    pub count: usize,
}

/// Spectral profile of the initial data. The pipeline integrates unit
/// modes and keeps the profile symbolic, so the energy columns never
/// underflow no matter how fast the data decays; the profile enters only
/// through the decay-classification stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub profile: DataProfile,
    /// Decay order for `gevrey-decay`, at least 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Decay rate for `gevrey-decay`, positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataProfile {
    Constant,
    GevreyDecay,
    Gaussian,
}

impl DataProfile {
    pub fn name(self) -> &'static str {
        match self {
            DataProfile::Constant => "constant",
            DataProfile::GevreyDecay => "gevrey-decay",
            DataProfile::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolerancesConfig {
    /// Relative tolerance of the mode stepper.
    pub solver_rtol: f64,
    /// Absolute tolerance of the mode stepper.
    pub solver_atol: f64,
    /// Mollification quadrature tolerance.
    pub quad_tol: f64,
    /// Relative tolerance of the growth-budget quadrature.
    pub gronwall_rel_tol: f64,
}

impl Default for TolerancesConfig {
    fn default() -> Self {
        TolerancesConfig {
            solver_rtol: 1.0e-10,
            solver_atol: 1.0e-12,
            quad_tol: 1.0e-8,
            gronwall_rel_tol: 1.0e-3,
        }
    }
}

/// Grid sizes for the smoothing-bound verification stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub eps_count: usize,
    pub t_count: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { eps_count: 24, t_count: 24 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the command line and the `MODEWELL_OUT`
    /// environment variable both override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Sweep worker threads; 0 means one per core. Results are identical
    /// for any value, only wall time changes.
    pub workers: usize,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, workers: 1, format: OutputFormat::Csv }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))
}

/// Reads and parses a config file, returning it together with its parent
/// directory (table paths resolve against that directory).
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    let cfg = parse_config(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let base = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok((cfg, base))
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// A validated run: typed config plus the constructed field, kernel and
/// frequency grid. Table fields come out of `prepare` already certified
/// (the estimator runs against the configured modulus and blowup), so
/// every later stage can rely on `field.certificate()`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub field: CoefficientField<f64>,
    pub kernel: MollifierKernel<f64>,
    pub xi_grid: Vec<f64>,
    /// Whether the exponent model attached at certify time is log-type.
    pub log_type: bool,
}

/// Validates a parsed config and builds the run objects. `base_dir` is
/// where table paths resolve; pass the config file's directory.
pub fn prepare(config: &ExperimentConfig, base_dir: &Path) -> Result<Prepared> {
    let tol = &config.tolerances;
    for (v, key) in [
        (tol.solver_rtol, "tolerances.solver_rtol"),
        (tol.solver_atol, "tolerances.solver_atol"),
        (tol.quad_tol, "tolerances.quad_tol"),
        (tol.gronwall_rel_tol, "tolerances.gronwall_rel_tol"),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(format!("{key} must be positive and finite, got {v}")));
        }
    }
    if config.verify.eps_count < 2 || config.verify.t_count < 2 {
        return Err(Error::config(format!(
            "verify.eps_count and verify.t_count must be at least 2, got {} and {}",
            config.verify.eps_count, config.verify.t_count
        )));
    }

    let grid = &config.grid;
    if grid.count < 8 {
        return Err(Error::config(format!(
            "grid.count must be at least 8 for the growth fit, got {}",
            grid.count
        )));
    }
    if !(grid.xi_min >= 1.0) {
        return Err(Error::config(format!("grid.xi_min must be at least 1, got {}", grid.xi_min)));
    }
    if !(grid.xi_max > grid.xi_min) {
        return Err(Error::config(format!(
            "grid.xi_max must exceed grid.xi_min, got [{}, {}]",
            grid.xi_min, grid.xi_max
        )));
    }

    let data = &config.data;
    match data.profile {
        DataProfile::GevreyDecay => {
            let sigma = data.sigma.ok_or_else(|| {
                Error::config("data.sigma is required for profile = \"gevrey-decay\"")
            })?;
            let delta = data.delta.ok_or_else(|| {
                Error::config("data.delta is required for profile = \"gevrey-decay\"")
            })?;
            if !(sigma >= 1.0) {
                return Err(Error::config(format!("data.sigma must be at least 1, got {sigma}")));
            }
            if !(delta > 0.0) {
                return Err(Error::config(format!("data.delta must be positive, got {delta}")));
            }
        }
        DataProfile::Constant | DataProfile::Gaussian => {
            for (set, key) in
                [(data.sigma.is_some(), "data.sigma"), (data.delta.is_some(), "data.delta")]
            {
                if set {
                    return Err(Error::config(format!(
                        "{key} does not apply to profile = \"{}\"",
                        data.profile.name()
                    )));
                }
            }
        }
    }

    let field = build_field(&config.field, base_dir)?;
    let log_type = matches!(config.field.family, FieldFamily::PsiSingular)
        || matches!(
            &config.field.modulus,
            Some(ModulusConfig { kind: ModulusKind::PsiDerived, .. })
        );
    if log_type {
        let floor = (1.0f64).max(tau1(&field).recip());
        if !(grid.xi_min >= floor) {
            return Err(Error::config(format!(
                "grid.xi_min must be at least {floor:.6} (the log-type model floor 1/tau1), got {}",
                grid.xi_min
            )));
        }
    }

    let kernel = config.kernel.profile.build()?;
    let xi_grid = log_grid(grid.xi_min, grid.xi_max, grid.count);
    Ok(Prepared { config: config.clone(), field, kernel, xi_grid, log_type })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..n).map(|k| lo * ratio.powf(k as f64 / (n - 1) as f64)).collect()
}

fn build_field(fc: &FieldConfig, base_dir: &Path) -> Result<CoefficientField<f64>> {
    if !(fc.horizon > 0.0) || !fc.horizon.is_finite() {
        return Err(Error::config(format!(
            "field.horizon must be positive and finite, got {}",
            fc.horizon
        )));
    }
    if fc.dim == 0 {
        return Err(Error::config("field.dim must be at least 1"));
    }

    let family = fc.family.name();
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| Error::config(format!("field.{key} is required for family = \"{family}\"")))
    };
    // Keys a family does not consume are rejected, not ignored; a stray
    // parameter usually means the family line itself is wrong.
    let refuse = |set: bool, key: &str| {
        if set {
            Err(Error::config(format!("field.{key} does not apply to family = \"{family}\"")))
        } else {
            Ok(())
        }
    };

    match fc.family {
        FieldFamily::Constant => {
            for (set, key) in [
                (fc.base.is_some(), "base"),
                (fc.amp.is_some(), "amp"),
                (fc.alpha.is_some(), "alpha"),
                (fc.p.is_some(), "p"),
                (fc.psi.is_some(), "psi"),
                (fc.path.is_some(), "path"),
                (fc.modulus.is_some(), "modulus"),
                (fc.blowup.is_some(), "blowup"),
            ] {
                refuse(set, key)?;
            }
            let value = need(fc.value, "value")?;
            make_test_coefficient(TestCoefficientKind::Constant { value }, fc.dim, fc.horizon)
        }
        FieldFamily::HolderSingular => {
            for (set, key) in [
                (fc.value.is_some(), "value"),
                (fc.psi.is_some(), "psi"),
                (fc.path.is_some(), "path"),
                (fc.modulus.is_some(), "modulus"),
                (fc.blowup.is_some(), "blowup"),
            ] {
                refuse(set, key)?;
            }
            make_test_coefficient(
                TestCoefficientKind::HolderSingular {
                    base: need(fc.base, "base")?,
                    amp: need(fc.amp, "amp")?,
                    alpha: need(fc.alpha, "alpha")?,
                    p: need(fc.p, "p")?,
                },
                fc.dim,
                fc.horizon,
            )
        }
        FieldFamily::PsiSingular => {
            for (set, key) in [
                (fc.value.is_some(), "value"),
                (fc.alpha.is_some(), "alpha"),
                (fc.p.is_some(), "p"),
                (fc.path.is_some(), "path"),
                (fc.modulus.is_some(), "modulus"),
                (fc.blowup.is_some(), "blowup"),
            ] {
                refuse(set, key)?;
            }
            let psi = fc
                .psi
                .as_ref()
                .ok_or_else(|| {
                    Error::config(format!("field.psi is required for family = \"{family}\""))
                })?
                .build("field.psi")?;
            make_test_coefficient(
                TestCoefficientKind::PsiSingular {
                    base: need(fc.base, "base")?,
                    amp: need(fc.amp, "amp")?,
                    psi,
                },
                fc.dim,
                fc.horizon,
            )
        }
        FieldFamily::Table => {
            for (set, key) in [
                (fc.value.is_some(), "value"),
                (fc.base.is_some(), "base"),
                (fc.amp.is_some(), "amp"),
                (fc.alpha.is_some(), "alpha"),
                (fc.p.is_some(), "p"),
                (fc.psi.is_some(), "psi"),
            ] {
                refuse(set, key)?;
            }
            if fc.dim != 1 {
                return Err(Error::config(format!(
                    "field.dim must be 1 for family = \"table\" (one sample table, one entry), got {}",
                    fc.dim
                )));
            }
            let rel = fc.path.as_ref().ok_or_else(|| {
                Error::config(format!("field.path is required for family = \"{family}\""))
            })?;
            let modulus = fc
                .modulus
                .as_ref()
                .ok_or_else(|| {
                    Error::config(format!("field.modulus is required for family = \"{family}\""))
                })?
                .build("field.modulus")?;
            let blowup = fc
                .blowup
                .as_ref()
                .ok_or_else(|| {
                    Error::config(format!("field.blowup is required for family = \"{family}\""))
                })?
                .build("field.blowup")?;

            let path = base_dir.join(rel);
            let text = fs::read_to_string(&path).map_err(|e| io_at(&path, e))?;
            let entry = TabulatedEntry::from_table_text(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            let field = CoefficientField::new(1, vec![ScalarEntry::Tabulated(entry)], fc.horizon)?;

            // Tables carry no analytic certificate; estimate the constant
            // against the configured scale and attach the result so the
            // downstream stages see the same interface as the built-in
            // families.
            let grid = CertificateGrid::standard();
            let constant = field.estimate_regularity_constant(&modulus, &blowup, &grid)?;
            if !(constant > 0.0) {
                return Err(Error::config(
                    "field.path: the sampled coefficient shows no variation against the \
                     configured modulus; the regularity constant estimated to zero",
                ));
            }
            let tau0 = modulus.tau0();
            let cert = RegularityCertificate {
                constant,
                modulus,
                blowup,
                tau0,
                samples: grid.t_count * grid.tau_count,
                analytic_floor: None,
            };
            Ok(field.with_certificate(cert))
        }
    }
}

/// Proof constants assembled from the certificate, plus the exponent model
/// they induce. `rows` is the rendered report in emission order.
#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub regularity_constant: f64,
    pub kappa: f64,
    pub c_prime: f64,
    pub c_double_prime: f64,
    pub tau1: f64,
    pub model: ExponentModel<f64>,
    pub rows: Vec<(String, String)>,
}

/// Assembles the smoothing constants and the growth-exponent model from
/// the field's certificate.
///
/// `C' = max(C, C/kappa, 2 sup|a|)` bounds the mollification error against
/// the modulus; `C'' = |rho'|_1 max(C, C/kappa, sup|a|)` bounds the
/// mollified derivative. Both feed the model constant.
pub fn certify(prep: &Prepared) -> Result<CertifyOutcome> {
    let field = &prep.field;
    let cert = field.certificate().ok_or_else(|| Error::spec("certify needs a certified field"))?;
    let c = cert.constant;
    let kappa = cert.blowup.kappa();
    let sup = field.sup_norm();
    let c_over = c.max(c / kappa);
    let c_prime = c_over.max(2.0 * sup);
    let c_double_prime = prep.kernel.rho_prime_l1() * c_over.max(sup);
    let t1 = tau1(field);

    let fc = &prep.config.field;
    let model = match fc.family {
        FieldFamily::HolderSingular => ExponentModel::gevrey_from_constants(
            fc.p.expect("validated at prepare time"),
            fc.alpha.expect("validated at prepare time"),
            c_prime,
            c_double_prime,
            field.lambda0(),
            field.big_lambda0(),
        )?,
        FieldFamily::PsiSingular => {
            let psi = fc.psi.as_ref().expect("validated at prepare time").build("field.psi")?;
            ExponentModel::log_psi_from_constants(
                psi,
                c_prime,
                c_double_prime,
                field.lambda0(),
                field.big_lambda0(),
                field.horizon(),
                t1,
            )?
        }
        // A flat field satisfies every growth law; the default power-type
        // shape keeps the downstream columns well defined.
        FieldFamily::Constant => ExponentModel::gevrey_from_constants(
            2.0,
            0.5,
            c_prime,
            c_double_prime,
            field.lambda0(),
            field.big_lambda0(),
        )?,
        FieldFamily::Table => {
            let mc = fc.modulus.as_ref().expect("validated at prepare time");
            let bc = fc.blowup.as_ref().expect("validated at prepare time");
            match (mc.kind, bc.kind) {
                (ModulusKind::Holder, BlowupKind::Power) => ExponentModel::gevrey_from_constants(
                    bc.p.expect("validated at prepare time"),
                    mc.alpha.expect("validated at prepare time"),
                    c_prime,
                    c_double_prime,
                    field.lambda0(),
                    field.big_lambda0(),
                )?,
                (ModulusKind::PsiDerived, _) => {
                    let psi = mc
                        .psi
                        .as_ref()
                        .expect("validated at prepare time")
                        .build("field.modulus.psi")?;
                    ExponentModel::log_psi_from_constants(
                        psi,
                        c_prime,
                        c_double_prime,
                        field.lambda0(),
                        field.big_lambda0(),
                        field.horizon(),
                        t1,
                    )?
                }
                (ModulusKind::Holder, _) => {
                    return Err(Error::config(
                        "field.blowup must be kind = \"power\" when field.modulus is \
                         kind = \"holder\"; no exponent model covers that combination",
                    ));
                }
            }
        }
    };

    let fmt = |v: f64| format!("{v:.16e}");
    let mut rows: Vec<(String, String)> = vec![
        ("family".into(), fc.family.name().into()),
        ("dim".into(), field.dim().to_string()),
        ("horizon".into(), fmt(field.horizon())),
        ("lambda0".into(), fmt(field.lambda0())),
        ("big_lambda0".into(), fmt(field.big_lambda0())),
        ("sup_norm".into(), fmt(sup)),
        ("modulus".into(), cert.modulus.describe()),
        ("blowup".into(), cert.blowup.describe()),
        ("regularity_constant".into(), fmt(c)),
        ("tau0".into(), fmt(cert.tau0)),
        ("tau1".into(), fmt(t1)),
        ("certificate_samples".into(), cert.samples.to_string()),
        ("analytic_floor".into(), cert.analytic_floor.map(fmt).unwrap_or_else(|| "none".into())),
        ("kappa".into(), fmt(kappa)),
        ("kernel".into(), prep.config.kernel.profile.name().into()),
        ("rho_prime_l1".into(), fmt(prep.kernel.rho_prime_l1())),
        ("c_prime".into(), fmt(c_prime)),
        ("c_double_prime".into(), fmt(c_double_prime)),
    ];
    match model.shape() {
        ExponentShape::Gevrey { p, alpha } => {
            rows.push(("model".into(), "gevrey".into()));
            rows.push(("model_p".into(), fmt(*p)));
            rows.push(("model_alpha".into(), fmt(*alpha)));
            rows.push((
                "sigma_star".into(),
                fmt(model.sigma_star().expect("power shape has a threshold")),
            ));
        }
        ExponentShape::LogPsi { .. } => {
            rows.push(("model".into(), "log-psi".into()));
        }
    }
    rows.push(("model_m".into(), fmt(model.m())));

    Ok(CertifyOutcome {
        regularity_constant: c,
        kappa,
        c_prime,
        c_double_prime,
        tau1: t1,
        model,
        rows,
    })
}

/// Grid check of the two smoothing bounds on the default verification
/// grids, sized by the config.
pub fn verify_smoothing(prep: &Prepared) -> Result<Prop23Report<f64>> {
    let eps_grid = default_eps_grid(&prep.field, prep.config.verify.eps_count);
    let t_grid = default_t_grid(&prep.field, prep.config.verify.t_count);
    let mut xi = vec![0.0; prep.field.dim()];
    xi[0] = 1.0;
    with_pool(prep.config.output.workers, || {
        verify_prop23(
            &prep.field,
            &prep.kernel,
            &eps_grid,
            &t_grid,
            &xi,
            prep.config.tolerances.quad_tol,
        )
    })?
}

/// One frequency of the sweep table. Energies are those of the unit-data
/// mode (`u = 1`, `u_t = 0` at the start time); the configured data profile
/// is applied symbolically downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub xi: f64,
    /// Mollification width, exactly `min(1/xi, tau1)`.
    pub eps: f64,
    pub e0: f64,
    pub e_t: f64,
    pub log_ratio: f64,
    /// Growth-budget integral over the full window.
    pub gronwall_total: f64,
    /// Model-predicted bound on `log_ratio`.
    pub model_exponent: f64,
    /// Budget per unit of frequency shape; bounded iff the budget obeys
    /// the model's growth law.
    pub ratio_statistic: f64,
    /// `E(T) <= E(0) exp(G) (1 + 1e-5)`.
    pub budget_ok: bool,
    /// Whether the width rule hit the `tau1` ceiling.
    pub eps_clamped: bool,
}

/// Headroom factor of the per-row budget flag.
pub const BUDGET_SLACK: f64 = 1.0e-5;

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Successful rows, in grid order.
    pub rows: Vec<ResultRow>,
    /// Failed frequencies with their errors, in grid order.
    pub failures: Vec<(f64, String)>,
}

/// Integrates one mode per grid frequency and scores it against its growth
/// budget. Rows come back in grid order regardless of the worker count.
pub fn sweep(prep: &Prepared, cert: &CertifyOutcome) -> Result<SweepOutcome> {
    let results: Vec<Result<ResultRow>> = with_pool(prep.config.output.workers, || {
        prep.xi_grid.par_iter().map(|&xi| sweep_one(prep, cert, xi)).collect()
    })?;

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (xi, res) in prep.xi_grid.iter().zip(results) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((*xi, e.to_string())),
        }
    }
    Ok(SweepOutcome { rows, failures })
}

fn sweep_one(prep: &Prepared, cert: &CertifyOutcome, xi_norm: f64) -> Result<ResultRow> {
    let tol = &prep.config.tolerances;
    let eps = coupled_eps(&prep.field, xi_norm)?;
    let eps_clamped = xi_norm.recip() > cert.tau1;
    let mc = MollifiedCoefficient::new(&prep.field, eps, prep.kernel.clone(), tol.quad_tol)?;

    let mut xi = vec![0.0; prep.field.dim()];
    xi[0] = xi_norm;
    let opts = ModeOptions {
        rtol: tol.solver_rtol,
        atol: tol.solver_atol,
        store_cap: 8,
        start_time: None,
        gronwall: false,
        gronwall_rel_tol: tol.gronwall_rel_tol,
    };
    let trace = integrate_mode(&mc, &xi, (Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)), &opts)?;
    let gronwall_total = gronwall_bound(&mc, &xi, tol.gronwall_rel_tol)?;

    let log_ratio = trace.log_energy_ratio();
    let model_exponent = cert.model.theoretical_exponent(xi_norm)?;
    let shape = cert.model.shape_value(xi_norm)?;
    // The log shape already carries the "+1"; the power shape does not.
    let denom = match cert.model.shape() {
        ExponentShape::Gevrey { .. } => 1.0 + shape,
        ExponentShape::LogPsi { .. } => shape,
    };
    Ok(ResultRow {
        xi: xi_norm,
        eps,
        e0: trace.initial_energy(),
        e_t: trace.final_energy(),
        log_ratio,
        gronwall_total,
        model_exponent,
        ratio_statistic: gronwall_total / denom,
        budget_ok: log_ratio <= gronwall_total + BUDGET_SLACK.ln_1p(),
        eps_clamped,
    })
}

fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Fits the sweep's measured growth against the certified model shape.
pub fn fit_stage(cert: &CertifyOutcome, rows: &[ResultRow]) -> Result<GrowthFit<f64>> {
    let samples: Vec<GrowthSample<f64>> =
        rows.iter().map(|r| GrowthSample { xi_norm: r.xi, log_ratio: r.log_ratio }).collect();
    fit_growth(&samples, &cert.model)
}

/// Spectral log magnitude `ln(|u0| + |u1|)` of the configured data profile.
pub fn data_log_magnitude(data: &DataConfig, xi_norm: f64) -> f64 {
    match data.profile {
        DataProfile::Constant => 0.0,
        DataProfile::GevreyDecay => {
            let sigma = data.sigma.expect("validated at prepare time");
            let delta = data.delta.expect("validated at prepare time");
            -delta * xi_norm.powf(sigma.recip())
        }
        DataProfile::Gaussian => -xi_norm * xi_norm,
    }
}

/// Orders checked when a profile claims polynomial (smooth-data) decay.
pub const POLYNOMIAL_ORDERS: std::ops::RangeInclusive<u32> = 1..=12;

/// Fits the configured data profile's decay law on the sweep grid, in the
/// log domain so fast-decaying profiles never underflow.
pub fn decay_stage(prep: &Prepared, cert: &CertifyOutcome) -> Result<DecayProfile<f64>> {
    let samples: Vec<DecaySample<f64>> = prep
        .xi_grid
        .iter()
        .map(|&xi| DecaySample {
            xi_norm: xi,
            log_magnitude: data_log_magnitude(&prep.config.data, xi),
        })
        .collect();
    let kind = match prep.config.data.profile {
        DataProfile::GevreyDecay => {
            DecayKind::Gevrey { sigma: prep.config.data.sigma.expect("validated at prepare time") }
        }
        DataProfile::Constant | DataProfile::Gaussian => DecayKind::Polynomial {
            zetas: POLYNOMIAL_ORDERS.map(f64::from).collect(),
            xi_floor: if prep.log_type { 1.0f64.max(cert.tau1.recip()) } else { 1.0 },
        },
    };
    check_decay_log(&samples, &kind)
}

/// Joint verdict from the growth fit and the data decay profile.
pub fn classify_stage(
    fit: &GrowthFit<f64>,
    decay: &DecayProfile<f64>,
) -> Result<Classification<f64>> {
    classify(fit, decay)
}

fn fmt_cell(v: f64) -> String {
    format!("{v:.16e}")
}

fn ensure_rows(count: usize, path: &Path) -> Result<()> {
    if count == 0 {
        return Err(Error::spec(format!(
            "no rows to write; refusing to create {}",
            path.display()
        )));
    }
    Ok(())
}

/// Writes a rendered report or table, wrapping I/O errors with the path.
pub fn write_text_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_at(path, e))
}

/// Column order of the sweep table; emitters never reorder it.
pub const SWEEP_COLUMNS: [&str; 10] = [
    "xi",
    "eps",
    "e0",
    "e_t",
    "log_ratio",
    "gronwall_total",
    "model_exponent",
    "ratio_statistic",
    "budget_ok",
    "eps_clamped",
];

pub fn write_sweep(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    ensure_rows(rows.len(), path)?;
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            out.push_str(&SWEEP_COLUMNS.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    fmt_cell(r.xi),
                    fmt_cell(r.eps),
                    fmt_cell(r.e0),
                    fmt_cell(r.e_t),
                    fmt_cell(r.log_ratio),
                    fmt_cell(r.gronwall_total),
                    fmt_cell(r.model_exponent),
                    fmt_cell(r.ratio_statistic),
                    r.budget_ok,
                    r.eps_clamped,
                ));
            }
        }
        OutputFormat::Jsonl => {
            for r in rows {
                out.push_str(&format!(
                    "{{\"xi\":{},\"eps\":{},\"e0\":{},\"e_t\":{},\"log_ratio\":{},\
                     \"gronwall_total\":{},\"model_exponent\":{},\"ratio_statistic\":{},\
                     \"budget_ok\":{},\"eps_clamped\":{}}}\n",
                    fmt_cell(r.xi),
                    fmt_cell(r.eps),
                    fmt_cell(r.e0),
                    fmt_cell(r.e_t),
                    fmt_cell(r.log_ratio),
                    fmt_cell(r.gronwall_total),
                    fmt_cell(r.model_exponent),
                    fmt_cell(r.ratio_statistic),
                    r.budget_ok,
                    r.eps_clamped,
                ));
            }
        }
    }
    write_text_file(path, &out)
}

/// Column order of the per-frequency ratio table.
pub const RATIO_COLUMNS: [&str; 6] =
    ["xi", "log_ratio", "shape_value", "fitted", "ratio", "residual"];

pub fn write_ratios(fit: &GrowthFit<f64>, format: OutputFormat, path: &Path) -> Result<()> {
    let samples = fit.samples();
    ensure_rows(samples.len(), path)?;
    let mut out = String::new();
    if format == OutputFormat::Csv {
        out.push_str(&RATIO_COLUMNS.join(","));
        out.push('\n');
    }
    for (i, s) in samples.iter().enumerate() {
        let cells = [
            fmt_cell(s.xi_norm),
            fmt_cell(s.log_ratio),
            fmt_cell(fit.shape_values()[i]),
            fmt_cell(fit.fitted()[i]),
            fmt_cell(fit.ratios()[i]),
            fmt_cell(fit.residuals()[i]),
        ];
        match format {
            OutputFormat::Csv => {
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            OutputFormat::Jsonl => {
                let mut line = String::from("{");
                for (k, c) in RATIO_COLUMNS.iter().zip(&cells) {
                    line.push_str(&format!("\"{k}\":{c},"));
                }
                line.pop();
                line.push_str("}\n");
                out.push_str(&line);
            }
        }
    }
    write_text_file(path, &out)
}

pub fn write_prop23(report: &Prop23Report<f64>, format: OutputFormat, path: &Path) -> Result<()> {
    ensure_rows(report.rows.len(), path)?;
    let out = match format {
        OutputFormat::Csv => report.to_csv(),
        OutputFormat::Jsonl => {
            let mut s = String::new();
            for r in &report.rows {
                s.push_str(&format!(
                    "{{\"eps\":{},\"t\":{},\"lhs1\":{},\"rhs1\":{},\"lhs2\":{},\"rhs2\":{},\
                     \"pass1\":{},\"pass2\":{}}}\n",
                    fmt_cell(r.eps),
                    fmt_cell(r.t),
                    fmt_cell(r.lhs1),
                    fmt_cell(r.rhs1),
                    fmt_cell(r.lhs2),
                    fmt_cell(r.rhs2),
                    r.pass1,
                    r.pass2,
                ));
            }
            s
        }
    };
    write_text_file(path, &out)
}

/// Renders key/value rows as the same JSON-like document the
/// classification report uses.
pub fn render_rows(rows: &[(String, String)]) -> String {
    let mut out = String::from("{\n");
    for (i, (k, v)) in rows.iter().enumerate() {
        out.push_str(&format!("  \"{k}\": \"{v}\""));
        out.push_str(if i + 1 == rows.len() { "\n" } else { ",\n" });
    }
    out.push('}');
    out.push('\n');
    out
}

/// What a full run produced, plus one human-readable line per stage.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub lines: Vec<String>,
    pub clamped: usize,
    pub sweep_failures: usize,
    pub smoothing_pass: bool,
    pub fit_consistent: bool,
}

/// Runs every stage in order, writing all tables and reports under
/// `out_dir`. Stage outputs already written survive a later stage's error.
pub fn run_all(prep: &Prepared, out_dir: &Path, format: OutputFormat) -> Result<RunSummary> {
    fs::create_dir_all(out_dir).map_err(|e| io_at(out_dir, e))?;
    let ext = format.extension();
    let mut lines = Vec::new();

    let cert = certify(prep)?;
    write_text_file(&out_dir.join("certificate.txt"), &render_rows(&cert.rows))?;
    lines.push(format!(
        "certify: C = {:.6e}, C' = {:.6e}, C'' = {:.6e}, M = {:.6e}",
        cert.regularity_constant,
        cert.c_prime,
        cert.c_double_prime,
        cert.model.m()
    ));

    let report = verify_smoothing(prep)?;
    write_prop23(&report, format, &out_dir.join(format!("prop23.{ext}")))?;
    let (p1, p2) = report.pass_counts();
    let n = report.rows.len();
    lines.push(format!(
        "mollify-verify: {p1}/{n} smoothing and {p2}/{n} derivative rows pass, \
         worst margins {:.3e} and {:.3e}",
        report.worst_margin1, report.worst_margin2
    ));

    let outcome = sweep(prep, &cert)?;
    write_sweep(&outcome.rows, format, &out_dir.join(format!("sweep.{ext}")))?;
    if !outcome.failures.is_empty() {
        let mut manifest = String::new();
        for (xi, msg) in &outcome.failures {
            manifest.push_str(&format!("xi = {}: {msg}\n", fmt_cell(*xi)));
        }
        write_text_file(&out_dir.join("errors.txt"), &manifest)?;
    }
    let clamped = outcome.rows.iter().filter(|r| r.eps_clamped).count();
    let budget_violations = outcome.rows.iter().filter(|r| !r.budget_ok).count();
    lines.push(format!(
        "sweep: {} rows, {} clamped, {} budget violations, {} failures",
        outcome.rows.len(),
        clamped,
        budget_violations,
        outcome.failures.len()
    ));

    let fit = fit_stage(&cert, &outcome.rows)?;
    write_ratios(&fit, format, &out_dir.join(format!("ratios.{ext}")))?;
    lines.push(format!(
        "fit: m_regression = {:.6e}, m_sup = {:.6e}, sup_ratio = {:.4}, consistent = {}",
        fit.m_regression(),
        fit.m_sup(),
        fit.sup_ratio(),
        fit.consistent()
    ));

    let decay = decay_stage(prep, &cert)?;
    let classification = classify_stage(&fit, &decay)?;
    write_text_file(&out_dir.join("classification.txt"), &classification.render())?;
    let class_line = match classification.class() {
        crate::analysis::WellPosednessClass::Gevrey { sigma_star } => {
            format!("power-type loss: data classes below sigma* = {sigma_star} are preserved")
        }
        crate::analysis::WellPosednessClass::CInfinity => {
            "log-type loss: smooth data stays smooth".to_string()
        }
    };
    lines.push(format!("classify: {class_line}"));

    Ok(RunSummary {
        lines,
        clamped,
        sweep_failures: outcome.failures.len(),
        smoothing_pass: report.all_pass(),
        fit_consistent: fit.consistent(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const HOLDER_CONFIG: &str = r#"
[field]
family = "holder_singular"
horizon = 1.0
base = 2.0
amp = 1.0
alpha = 0.5
p = 2.0

[kernel]
profile = "bump"

[grid]
xi_min = 10.0
xi_max = 1.0e4
count = 16

[data]
profile = "gevrey-decay"
sigma = 1.2
delta = 1.0
"#;

    const CONSTANT_CONFIG: &str = r#"
[field]
family = "constant"
horizon = 1.0
value = 1.0

[grid]
xi_min = 2.0
xi_max = 512.0
count = 8

[data]
profile = "constant"

[verify]
eps_count = 6
t_count = 6
"#;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = parse_config(HOLDER_CONFIG).unwrap();
        let text = cfg.to_toml();
        let again = parse_config(&text).unwrap();
        assert_eq!(cfg, again);

        let cfg = parse_config(CONSTANT_CONFIG).unwrap();
        assert_eq!(cfg, parse_config(&cfg.to_toml()).unwrap());
    }

    #[test]
    fn config_errors_name_the_offending_field() {
        // Unknown key: the parser names it.
        let bad = HOLDER_CONFIG.replace("amp = 1.0", "amplitude = 1.0");
        let err = parse_config(&bad).unwrap_err().to_string();
        assert!(err.contains("amplitude"), "{err}");

        // Semantic misuse: the validator names the full path.
        let bad = HOLDER_CONFIG.replace("[kernel]", "value = 3.0\n[kernel]");
        let cfg = parse_config(&bad).unwrap();
        let err = prepare(&cfg, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("field.value"), "{err}");

        let bad = HOLDER_CONFIG.replace("count = 16", "count = 4");
        let cfg = parse_config(&bad).unwrap();
        let err = prepare(&cfg, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("grid.count"), "{err}");

        let bad = HOLDER_CONFIG.replace("sigma = 1.2", "sigma = 0.5");
        let cfg = parse_config(&bad).unwrap();
        let err = prepare(&cfg, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("data.sigma"), "{err}");

        // Missing required family parameter.
        let bad = HOLDER_CONFIG.replace("alpha = 0.5\n", "");
        let cfg = parse_config(&bad).unwrap();
        let err = prepare(&cfg, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("field.alpha"), "{err}");
    }

    #[test]
    fn log_type_configs_enforce_the_frequency_floor() {
        let text = r#"
[field]
family = "psi_singular"
horizon = 1.0
base = 2.0
amp = 1.0
psi = { kind = "one-plus-log" }

[grid]
xi_min = 2.0
xi_max = 1.0e3
count = 12

[data]
profile = "gaussian"
"#;
        let cfg = parse_config(text).unwrap();
        let err = prepare(&cfg, Path::new(".")).unwrap_err().to_string();
        // The floor is 1/tau1 > e here, so xi_min = 2 is below it.
        assert!(err.contains("grid.xi_min"), "{err}");

        let cfg = parse_config(&text.replace("xi_min = 2.0", "xi_min = 5.0")).unwrap();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        assert!(prep.log_type);
    }

    #[test]
    fn prepared_grid_is_log_spaced_and_inclusive() {
        let cfg = parse_config(HOLDER_CONFIG).unwrap();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        assert_eq!(prep.xi_grid.len(), 16);
        assert_eq!(prep.xi_grid[0], 10.0);
        assert!((prep.xi_grid[15] - 1.0e4).abs() < 1.0e-9);
        for w in prep.xi_grid.windows(3) {
            let r1 = w[1] / w[0];
            let r2 = w[2] / w[1];
            assert!((r1 / r2 - 1.0).abs() < 1.0e-12, "grid must be geometric");
        }
    }

    #[test]
    fn sweep_couples_width_to_frequency_exactly() {
        let cfg = parse_config(CONSTANT_CONFIG).unwrap();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        let cert = certify(&prep).unwrap();
        let outcome = sweep(&prep, &cert).unwrap();
        assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
        assert_eq!(outcome.rows.len(), 8);

        let t1 = tau1(&prep.field);
        for r in &outcome.rows {
            // Bitwise, not approximate: the column is the rule itself.
            assert_eq!(r.eps, r.xi.recip().min(t1));
            assert_eq!(r.eps_clamped, r.xi.recip() > t1);
            assert!(r.budget_ok);
            // Flat field: conservation to solver tolerance.
            assert!(r.log_ratio.abs() < 1.0e-6, "log ratio {}", r.log_ratio);
            assert!(r.gronwall_total.abs() < 1.0e-9);
            // Default power shape on a flat field.
            let shape = r.xi.powf(0.75);
            let expect = r.gronwall_total / (1.0 + shape);
            assert!((r.ratio_statistic - expect).abs() <= 1.0e-15 * expect.abs().max(1.0));
        }
        // The grid starts below 1/tau1 = e, so the clamp binds there.
        assert!(outcome.rows[0].eps_clamped);
        assert!(!outcome.rows[7].eps_clamped);
    }

    #[test]
    fn emitters_refuse_empty_tables_and_round_trip_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let err = write_sweep(&[], OutputFormat::Csv, &path).unwrap_err();
        assert!(matches!(err, Error::Spec(_)));
        assert!(!path.exists(), "refused writes must not create files");

        let row = ResultRow {
            xi: 10.0,
            eps: 0.1,
            e0: 1.0 / 3.0,
            e_t: 2.0e-300,
            log_ratio: -0.5,
            gronwall_total: 1.25,
            model_exponent: 3.5,
            ratio_statistic: 0.2,
            budget_ok: true,
            eps_clamped: false,
        };
        let csv_path = dir.path().join("rows.csv");
        let jsonl_path = dir.path().join("rows.jsonl");
        write_sweep(&[row], OutputFormat::Csv, &csv_path).unwrap();
        write_sweep(&[row], OutputFormat::Jsonl, &jsonl_path).unwrap();

        let csv = fs::read_to_string(&csv_path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_COLUMNS.join(","));
        let cells: Vec<&str> = lines.next().unwrap().split(',').collect();
        // 17 significant digits reproduce every f64 bit for bit.
        assert_eq!(cells[2].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(cells[3].parse::<f64>().unwrap(), 2.0e-300);
        assert_eq!(cells[8], "true");

        let jsonl = fs::read_to_string(&jsonl_path).unwrap();
        let value: serde_json::Value = serde_json::from_str(jsonl.trim()).unwrap();
        assert_eq!(value["e0"].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(value["budget_ok"], serde_json::Value::Bool(true));
        assert_eq!(value["eps_clamped"], serde_json::Value::Bool(false));
    }

    #[test]
    fn full_runs_are_byte_identical() {
        let cfg = parse_config(CONSTANT_CONFIG).unwrap();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let sum_a = run_all(&prep, dir_a.path(), OutputFormat::Csv).unwrap();
        let sum_b = run_all(&prep, dir_b.path(), OutputFormat::Csv).unwrap();
        assert!(sum_a.smoothing_pass);
        assert!(sum_a.fit_consistent);
        assert_eq!(sum_a.sweep_failures, 0);
        assert_eq!(sum_a.lines, sum_b.lines);

        for name in
            ["certificate.txt", "prop23.csv", "sweep.csv", "ratios.csv", "classification.txt"]
        {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert!(!a.is_empty());
            assert_eq!(a, b, "{name} must reproduce byte for byte");
        }
        assert!(!dir_a.path().join("errors.txt").exists());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = parse_config(CONSTANT_CONFIG).unwrap();
        cfg.output.workers = 1;
        let prep1 = prepare(&cfg, Path::new(".")).unwrap();
        cfg.output.workers = 4;
        let prep4 = prepare(&cfg, Path::new(".")).unwrap();

        let cert1 = certify(&prep1).unwrap();
        let cert4 = certify(&prep4).unwrap();
        let rows1 = sweep(&prep1, &cert1).unwrap().rows;
        let rows4 = sweep(&prep4, &cert4).unwrap().rows;
        assert_eq!(rows1, rows4);
    }

    #[test]
    fn table_fields_are_estimated_and_certified() {
        let dir = tempdir().unwrap();
        let mut table = String::from("# t  a\n");
        let n = 400;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            table.push_str(&format!("{t} {}\n", 1.0 + 0.5 * t));
        }
        fs::write(dir.path().join("a.table"), &table).unwrap();

        let text = r#"
[field]
family = "table"
horizon = 1.0
path = "a.table"
modulus = { kind = "holder", alpha = 1.0 }
blowup = { kind = "power", p = 2.0 }

[grid]
xi_min = 4.0
xi_max = 64.0
count = 8

[data]
profile = "constant"
"#;
        let cfg = parse_config(text).unwrap();
        let prep = prepare(&cfg, dir.path()).unwrap();
        let cert = prep.field.certificate().expect("prepare certifies tables");
        assert!(cert.analytic_floor.is_none());
        // Lipschitz slope 0.5 against nu(t) = t^{-2}-style weights stays
        // bounded; the estimate must be positive and finite.
        assert!(cert.constant > 0.0 && cert.constant.is_finite());

        let out = certify(&prep).unwrap();
        assert!(out.c_prime >= 2.0 * prep.field.sup_norm());
        assert_eq!(out.model.sigma_star(), Some(2.0 / 1.0));
    }

    #[test]
    fn gevrey_decay_stage_recovers_the_configured_law() {
        let cfg = parse_config(HOLDER_CONFIG).unwrap();
        let prep = prepare(&cfg, Path::new(".")).unwrap();
        let cert = certify(&prep).unwrap();
        let decay = decay_stage(&prep, &cert).unwrap();
        let delta = decay.delta().expect("gevrey law has a rate");
        assert!((delta - 1.0).abs() < 1.0e-9, "delta = {delta}");
        assert!((decay.r_squared().unwrap() - 1.0).abs() < 1.0e-12);
    }
}
