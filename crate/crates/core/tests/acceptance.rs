//! Acceptance gate. Nine numbered end-to-end checks: smoothing-bound
//! certification at scale, energy conservation, growth-budget dominance,
//! both exponent laws with their stability-under-extension guards, decay
//! preservation, independent quadrature oracles, derived-scale identities,
//! and rerun determinism. Every tolerance is pinned in this file; each
//! check prints one `criterion N ... pass|FAIL` line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use modewell::analysis::{check_decay_log, DecayKind, DecaySample};
use modewell::coefficients::{make_test_coefficient, CoefficientField, TestCoefficientKind};
use modewell::energy::{
    coupled_eps, gronwall_bound, gronwall_cumulative, integrate_mode, ModeOptions,
};
use modewell::experiment::{certify, load_config, prepare, run_all, OutputFormat};
use modewell::moduli::{BlowupSpec, ModulusSpec, PsiSpec};
use modewell::mollify::{verify_prop23, MollifiedCoefficient, MollifierKernel};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn holder_field() -> CoefficientField<f64> {
    make_test_coefficient(
        TestCoefficientKind::HolderSingular { base: 2.0, amp: 1.0, alpha: 0.5, p: 2.0 },
        1,
        1.0,
    )
    .expect("holder family is valid")
}

fn psi_field() -> CoefficientField<f64> {
    make_test_coefficient(
        TestCoefficientKind::PsiSingular { base: 2.0, amp: 1.0, psi: PsiSpec::one_plus_log() },
        1,
        1.0,
    )
    .expect("log family is valid")
}

fn bump() -> MollifierKernel<f64> {
    MollifierKernel::bump().expect("bump kernel is valid")
}

fn unit_data() -> (Complex<f64>, Complex<f64>) {
    (Complex::new(1.0, 0.0), Complex::new(0.0, 0.0))
}

fn bundled_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
}

fn verdict(n: usize, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} ({name}): {} [{detail}]", if ok { "pass" } else { "FAIL" });
}

#[test]
fn criterion_1_smoothing_bounds_hold_on_the_full_grid() {
    let started = Instant::now();
    let field = holder_field();
    let eps_grid = log_grid(1.0e-3, 1.0e-1, 64);
    let t_grid = log_grid(1.0e-5, field.horizon(), 64);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("single-worker pool");
    let report = pool
        .install(|| verify_prop23(&field, &bump(), &eps_grid, &t_grid, &[1.0], 1.0e-8))
        .expect("verification runs");
    let elapsed = started.elapsed().as_secs_f64();

    let (value_pass, derivative_pass) = report.pass_counts();
    let rows = eps_grid.len() * t_grid.len();
    let ok = report.all_pass() && elapsed < 120.0;
    verdict(
        1,
        "mollifier certification",
        ok,
        &format!(
            "{value_pass}/{rows} and {derivative_pass}/{rows} rows, {elapsed:.1}s single-worker"
        ),
    );
    assert!(ok, "{value_pass}/{rows}, {derivative_pass}/{rows} passing in {elapsed:.1}s");
}

#[test]
fn criterion_2_constant_coefficient_conserves_energy() {
    let field = make_test_coefficient(TestCoefficientKind::Constant { value: 1.0 }, 1, 1.0)
        .expect("constant field is valid");
    let kernel = bump();
    let opts = ModeOptions {
        rtol: 1.0e-12,
        atol: 1.0e-14,
        store_cap: 8,
        start_time: None,
        gronwall: false,
        gronwall_rel_tol: 1.0e-3,
    };

    let mut worst = 0.0f64;
    for &xi in &[1.0, 10.0, 100.0, 1000.0] {
        let eps = coupled_eps(&field, xi).expect("positive frequency");
        let mc = MollifiedCoefficient::new(&field, eps, kernel.clone(), 1.0e-10)
            .expect("admissible width");
        let trace = integrate_mode(&mc, &[xi], unit_data(), &opts).expect("mode integrates");
        worst = worst.max((trace.final_energy() / trace.initial_energy() - 1.0).abs());
    }

    let ok = worst < 1.0e-8;
    verdict(2, "conservation", ok, &format!("worst |E(T)/E(0) - 1| = {worst:.3e}"));
    assert!(ok, "energy drift {worst:e} exceeds 1e-8");
}

#[test]
fn criterion_3_growth_budget_dominates_stored_energies() {
    let kernel = bump();
    let opts = ModeOptions {
        rtol: 1.0e-10,
        atol: 1.0e-12,
        store_cap: 64,
        start_time: None,
        gronwall: false,
        gronwall_rel_tol: 1.0e-3,
    };
    let slack = 1.0e-5f64.ln_1p();

    // Signed margin ln(E/E0) - G - ln(1 + 1e-5); dominance is margin <= 0.
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for field in [holder_field(), psi_field()] {
        for &xi in &[10.0f64, 100.0, 1000.0] {
            let mc = MollifiedCoefficient::new(&field, xi.recip(), kernel.clone(), 1.0e-10)
                .expect("admissible width");
            let trace = integrate_mode(&mc, &[xi], unit_data(), &opts).expect("mode integrates");
            let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
            let budgets =
                gronwall_cumulative(&mc, &[xi], &times, 1.0e-4).expect("budget quadrature");
            let e0 = trace.initial_energy();
            for (sample, budget) in trace.samples.iter().zip(&budgets) {
                worst = worst.max((sample.energy / e0).ln() - budget - slack);
                checked += 1;
            }
        }
    }

    let ok = worst <= 0.0;
    verdict(
        3,
        "growth-budget dominance",
        ok,
        &format!("{checked} stored samples, worst log margin = {worst:.3e}"),
    );
    assert!(ok, "a stored sample exceeds its budget by e^{worst:e}");
}

/// Budget-to-shape ratios over a frequency grid, with the width coupled as
/// `eps = 1/xi`. The budget tolerance is the pipeline default; the law
/// statistics carry an order of magnitude of slack against it.
fn shape_ratios(
    field: &CoefficientField<f64>,
    grid: &[f64],
    shape: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let kernel = bump();
    grid.iter()
        .map(|&xi| {
            let mc = MollifiedCoefficient::new(field, xi.recip(), kernel.clone(), 1.0e-8)
                .expect("admissible width");
            let budget = gronwall_bound(&mc, &[xi], 1.0e-3).expect("budget quadrature");
            budget / shape(xi)
        })
        .collect()
}

/// Shared body of the two exponent-law criteria: bounded spread on the base
/// grid, and a ratio level that does not deteriorate when the grid gains a
/// decade (21 points at the same density, the first 16 coinciding).
fn exponent_law_statistics(
    field: &CoefficientField<f64>,
    shape: impl Fn(f64) -> f64 + Copy,
) -> (f64, f64) {
    let base = shape_ratios(field, &log_grid(10.0, 1.0e4, 16), shape);
    let extended = shape_ratios(field, &log_grid(10.0, 1.0e5, 21), shape);
    let spread = max_of(&base) / median(&base);
    let growth = max_of(&extended) / max_of(&base);
    (spread, growth)
}

#[test]
fn criterion_4_power_growth_law_is_stable() {
    let (spread, growth) = exponent_law_statistics(&holder_field(), |xi| 1.0 + xi.powf(0.75));

    let (config, base_dir) =
        load_config(&bundled_config("gevrey_a05_p2.toml")).expect("bundled config loads");
    let prep = prepare(&config, &base_dir).expect("bundled config prepares");
    let sigma_star = certify(&prep).expect("certification runs").model.sigma_star();

    let ok = spread < 3.0 && growth <= 1.1 && sigma_star == Some(4.0 / 3.0);
    verdict(
        4,
        "power exponent law",
        ok,
        &format!(
            "max/median = {spread:.3}, extension growth = {growth:.3}, sigma* = {sigma_star:?}"
        ),
    );
    assert!(ok, "spread {spread}, extension growth {growth}, sigma* {sigma_star:?}");
}

#[test]
fn criterion_5_log_growth_law_is_stable() {
    let (spread, growth) = exponent_law_statistics(&psi_field(), |xi| 1.0 + xi.ln());

    let ok = spread < 3.0 && growth <= 1.1;
    verdict(
        5,
        "log exponent law",
        ok,
        &format!("max/median = {spread:.3}, extension growth = {growth:.3}"),
    );
    assert!(ok, "spread {spread}, extension growth {growth}");
}

#[test]
fn criterion_6_gevrey_decay_survives_the_evolution() {
    let field = holder_field();
    let kernel = bump();
    let opts = ModeOptions {
        rtol: 1.0e-10,
        atol: 1.0e-12,
        store_cap: 8,
        start_time: None,
        gronwall: false,
        gronwall_rel_tol: 1.0e-3,
    };
    let sigma = 1.2f64;

    // Data exp(-|xi|^(1/sigma)) with zero velocity; the mode response is
    // linear, so the data profile composes with the unit trace in log space.
    let samples: Vec<DecaySample<f64>> = log_grid(10.0, 1.0e4, 16)
        .iter()
        .map(|&xi| {
            let eps = coupled_eps(&field, xi).expect("positive frequency");
            let mc = MollifiedCoefficient::new(&field, eps, kernel.clone(), 1.0e-10)
                .expect("admissible width");
            let trace = integrate_mode(&mc, &[xi], unit_data(), &opts).expect("mode integrates");
            let end = trace.samples.last().expect("endpoint stored");
            let response = end.u.norm() + end.u_t.norm();
            DecaySample { xi_norm: xi, log_magnitude: -xi.powf(sigma.recip()) + response.ln() }
        })
        .collect();

    let profile = check_decay_log(&samples, &DecayKind::Gevrey { sigma }).expect("decay law fits");
    let delta = profile.delta().expect("Gevrey law carries a rate");
    let r_squared = profile.r_squared().expect("Gevrey law carries a residual score");

    let ok = delta > 0.0 && r_squared > 0.99;
    verdict(6, "decay preservation", ok, &format!("delta' = {delta:.4}, R^2 = {r_squared:.6}"));
    assert!(ok, "delta' {delta}, R^2 {r_squared}");
}

/// Composite Simpson over the kernel window, split at the extension's clamp
/// kinks, one million intervals distributed by segment length.
fn simpson_value(
    field: &CoefficientField<f64>,
    kernel: &MollifierKernel<f64>,
    eps: f64,
    t: f64,
) -> f64 {
    let horizon = field.horizon();
    let integrand = |s: f64| {
        let clamped = field
            .symbol(s.max(eps).min(horizon), &[1.0])
            .expect("clamped time is inside the domain");
        kernel.rho_eps(eps, t - s) * clamped
    };

    let (lo, hi) = (t - eps, t + eps);
    let mut cuts = vec![lo];
    for kink in [eps, horizon] {
        if kink > lo && kink < hi {
            cuts.push(kink);
        }
    }
    cuts.push(hi);

    let mut sum = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mut n = ((b - a) / (hi - lo) * 1.0e6).ceil() as usize;
        n += n % 2;
        n = n.max(2);
        let h = (b - a) / n as f64;
        let mut acc = integrand(a) + integrand(b);
        for k in 1..n {
            let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += weight * integrand(a + h * k as f64);
        }
        sum += acc * h / 3.0;
    }
    sum
}

#[test]
fn criterion_7_quadrature_matches_independent_oracles() {
    let field = holder_field();
    let kernel = bump();
    let mut rng = StdRng::seed_from_u64(0x5eed_2026);

    // Values against brute-force Simpson. The window keeps the integrand's
    // oscillation resolvable by one million equispaced intervals.
    let mut worst_value = 0.0f64;
    for _ in 0..100 {
        let t = rng.gen_range(0.05..0.95);
        let eps = 10.0f64.powf(rng.gen_range(-3.0..-1.0));
        let mc = MollifiedCoefficient::new(&field, eps, kernel.clone(), 1.0e-10)
            .expect("admissible width");
        let lib = mc.value(t, &[1.0]).expect("smoothed value");
        let oracle = simpson_value(&field, &kernel, eps, t);
        worst_value = worst_value.max((lib - oracle).abs());
    }

    // Derivatives against a centered difference of the smoothed value. The
    // time window keeps |a_eps'| well above the difference quotient's own
    // noise floor, where the oracle itself is trustworthy.
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let t = rng.gen_range(0.3..0.95);
        let eps = 10.0f64.powf(rng.gen_range(-3.0..-1.0));
        let mc = MollifiedCoefficient::new(&field, eps, kernel.clone(), 1.0e-12)
            .expect("admissible width");
        let lib = mc.derivative(t, &[1.0]).expect("smoothed derivative");
        let h = 1.0e-5;
        let right = mc.value(t + h, &[1.0]).expect("smoothed value");
        let left = mc.value(t - h, &[1.0]).expect("smoothed value");
        let oracle = (right - left) / (2.0 * h);
        worst_rel = worst_rel.max((lib - oracle).abs() / oracle.abs().max(lib.abs()));
    }

    let ok = worst_value <= 1.0e-8 && worst_rel <= 1.0e-4;
    verdict(
        7,
        "quadrature oracles",
        ok,
        &format!("worst |value - simpson| = {worst_value:.3e}, worst relative derivative gap = {worst_rel:.3e}"),
    );
    assert!(ok, "value gap {worst_value:e}, derivative gap {worst_rel:e}");
}

#[test]
fn criterion_8_derived_scale_identities_hold() {
    let e_inv = (-1.0f64).exp();

    // Identity scale: the derived modulus and rate are both the identity.
    let mu = ModulusSpec::psi_derived(PsiSpec::identity()).expect("identity scale");
    let nu = BlowupSpec::psi_derived(PsiSpec::identity()).expect("identity scale");
    let mut worst_identity = 0.0f64;
    for &tau in &log_grid(1.0e-8, mu.tau0(), 64) {
        worst_identity = worst_identity.max((mu.eval(tau).expect("inside the domain") - tau).abs());
    }
    for &t in &log_grid(1.0e-8, e_inv, 64) {
        worst_identity = worst_identity.max((nu.eval(t).expect("t > 0") - t).abs());
    }

    // One-plus-log scale: the derived rate is t |log t| up to 1/e.
    let nu_log = BlowupSpec::psi_derived(PsiSpec::one_plus_log()).expect("log scale");
    let mut worst_log = 0.0f64;
    for &t in &log_grid(1.0e-8, e_inv, 64) {
        worst_log = worst_log.max((nu_log.eval(t).expect("t > 0") - t * t.ln().abs()).abs());
    }

    let ok = worst_identity <= 1.0e-12 && worst_log <= 1.0e-12;
    verdict(
        8,
        "derived-scale identities",
        ok,
        &format!("identity gap = {worst_identity:.3e}, t|log t| gap = {worst_log:.3e}"),
    );
    assert!(ok, "identity gap {worst_identity:e}, log gap {worst_log:e}");
}

#[test]
fn criterion_9_full_runs_are_byte_identical() {
    let (config, base_dir) =
        load_config(&bundled_config("gevrey_a05_p2.toml")).expect("bundled config loads");
    let tmp = tempfile::tempdir().expect("tempdir");

    let mut dirs = Vec::new();
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let prep = prepare(&config, &base_dir).expect("bundled config prepares");
        run_all(&prep, &out, OutputFormat::Csv).expect("full run succeeds");
        dirs.push(out);
    }

    let files = ["prop23.csv", "sweep.csv", "ratios.csv", "certificate.txt", "classification.txt"];
    let mut differing = Vec::new();
    for name in files {
        let first = std::fs::read(dirs[0].join(name)).expect("first run wrote the file");
        let second = std::fs::read(dirs[1].join(name)).expect("second run wrote the file");
        if first != second {
            differing.push(name);
        }
    }

    let ok = differing.is_empty();
    verdict(9, "determinism", ok, &format!("{} output files compared byte for byte", files.len()));
    assert!(ok, "reruns differ in {differing:?}");
}
