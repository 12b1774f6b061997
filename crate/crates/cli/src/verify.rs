//! The verify pipeline: a fixed sequence of checks against one config.

use serde::Serialize;
use serde_json::{json, Value};

use dhlab_core::arcs::{direct_sum_i, integrate_regions, partition, ArcIntegrand, Cutoff};
use dhlab_core::exact::RatioStatus;
use dhlab_core::exponent_opt::{Affine, ExponentProgram};
use dhlab_core::model::{theorem_exponent_exact, validate_instance, window_at_scale, ProblemInstance, DEFAULT_U};
use dhlab_core::oscillatory::{euler_gap_sup, integration_step, kernel_integral, kernel_k, AlphaGrid};
use dhlab_core::prime_tables::{is_prime_u64, PrimeTables};
use dhlab_core::rational::{lambda_ratio_convergents, legendre_counterexample, plan_windows, recurrence_holds};
use dhlab_core::search::{brute_force_solutions, enumerate_solutions, verify_record, DEFAULT_BUDGET};
use dhlab_core::sieve_weight::SieveWeightTable;
use num_rational::BigRational;

use crate::args::VerifyArgs;
use crate::error::{CliResult, EXIT_CHECK, EXIT_OK};
use crate::input::{self, prime_limit, Env};
use crate::manifest::Run;

pub const SIEVE_X: f64 = 1e6;
pub const PARSEVAL_X: f64 = 400.0;
pub const EULER_FIT_X: f64 = 1e4;
pub const EULER_CHECK_X: f64 = 1e5;
pub const LEGENDRE_MAX_Q: u128 = 10_000;
pub const SEARCH_X: f64 = 1e4;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: Value,
}

fn check(name: &'static str, f: impl FnOnce() -> dhlab_core::Result<(bool, Value)>) -> CheckResult {
    match f() {
        Ok((pass, detail)) => CheckResult { name, pass, detail },
        Err(e) => CheckResult {
            name,
            pass: false,
            detail: json!({"error": {"code": e.code(), "message": e.to_string()}}),
        },
    }
}

/// ρ(m) ≤ [m prime], ρ = 1 on primes, Σρ > 0.
pub fn sieve_invariants(x: f64, delta: f64, tables: &PrimeTables) -> dhlab_core::Result<(bool, Value)> {
    let t = SieveWeightTable::build(x, delta, tables)?;
    let mut above = 0u64;
    let mut prime_not_one = 0u64;
    for (i, &r) in t.rho.iter().enumerate() {
        let m = t.m_lo + i as u64;
        let prime = is_prime_u64(m);
        if r as i32 > prime as i32 {
            above += 1;
        }
        if prime && r != 1 {
            prime_not_one += 1;
        }
    }
    let sum = t.sum();
    Ok((
        above == 0 && prime_not_one == 0 && sum > 0,
        json!({"X": x, "m_lo": t.m_lo, "m_hi": t.m_hi, "sum_rho": sum,
               "exceeding_indicator": above, "primes_not_one": prime_not_one}),
    ))
}

/// ∫K_η = η with a proved tail, K_η(0) = η², and the pointwise envelope.
pub fn kernel_checks(eta: f64) -> (bool, Value) {
    let cutoff = 2.0 / (std::f64::consts::PI.powi(2) * 5e-7 * eta);
    let ki = kernel_integral(eta, cutoff);
    // the truncated integral is below η by exactly the tail
    let missing = eta - ki.value;
    let integral_ok = missing >= -ki.quadrature_error
        && missing <= ki.tail_bound + ki.quadrature_error
        && ki.tail_bound + ki.quadrature_error <= 1e-6 * eta;
    let at_zero = kernel_k(0.0, eta);
    let grid = AlphaGrid::log_spaced(1e-6 / eta, 1e6 / eta, 10_000).expect("valid grid");
    let violations = grid
        .points
        .iter()
        .filter(|&&a| {
            let env = (eta * eta).min((std::f64::consts::PI * a).powi(-2));
            kernel_k(a, eta) > env * (1.0 + 1e-12)
        })
        .count();
    (
        integral_ok && at_zero == eta * eta && violations == 0,
        json!({"eta": eta, "integral": ki.value, "quadrature_error": ki.quadrature_error,
               "tail_bound": ki.tail_bound, "k_at_zero": at_zero, "envelope_violations": violations}),
    )
}

/// Parseval at a small scale with η = 1.
pub fn parseval(inst: &ProblemInstance, x: f64, tables: &PrimeTables) -> dhlab_core::Result<(bool, Value)> {
    let w = window_at_scale(inst, x, inst.u)?.with_eta(1.0)?;
    let f = ArcIntegrand::new(inst, &w, tables)?;
    let part = partition(&w)?;
    let r = integrate_regions(&f, &part, integration_step(x, inst.max_abs_lambda()), Cutoff::Auto)?;
    let direct = direct_sum_i(&f)?.value;
    let real = &r.real;
    let gap = (real.value_re - direct).abs();
    let bound = real.err + real.tail.unwrap_or(f64::INFINITY);
    Ok((
        gap <= bound && real.value_im.abs() <= real.err,
        json!({"X": x, "direct": direct, "integral": real.value_re, "imaginary": real.value_im,
               "gap": gap, "err": real.err, "tail": real.tail, "relative_bound": bound / direct.abs()}),
    ))
}

/// `count` log-spaced α with αX from 1e-3 to 1e3.
pub fn euler_grid(x: f64, count: usize) -> Vec<f64> {
    AlphaGrid::log_spaced(1e-3 / x, 1e3 / x, count)
        .expect("valid grid")
        .points
}

/// sup |T_k − U_k|/(1+|α|X) fitted at one scale and rechecked at others.
pub fn euler_stability(k: f64, delta: f64, fit_x: f64, check_xs: &[f64]) -> dhlab_core::Result<(bool, Value)> {
    let fit = euler_gap_sup(k, fit_x, delta, &euler_grid(fit_x, 1000))?;
    let mut ratios = Vec::new();
    for &x in check_xs {
        ratios.push(euler_gap_sup(k, x, delta, &euler_grid(x, 1000))? / fit);
    }
    let pass = fit > 0.0 && ratios.iter().all(|r| (0.5..=2.0).contains(r));
    Ok((pass, json!({"k": k, "fit_X": fit_x, "fitted": fit, "check_X": check_xs, "ratios": ratios})))
}

pub fn exponent_program(inst: &ProblemInstance) -> dhlab_core::Result<(bool, Value)> {
    let p = ExponentProgram::default_system();
    let s = p.solve()?;
    let rat = |a: i64, b: i64| BigRational::new(a.into(), b.into());
    let single = s.pieces.len() == 1;
    let u_ok = single && s.variable(0, "u") == Some(&Affine::constant(rat(1, 14)));
    let w = s.variable(0, "w").cloned();
    let w_text = s.pieces.first().map(|pc| pc.objective.in_reciprocal("k"));
    let w_ok = single && w_text.as_deref() == Some("(7-6k)/(14k)");
    let interval_ok = s.x_interval() == (Some(rat(6, 7)), Some(rat(1, 1)));
    let at_k = match (inst.k_rational(), &w) {
        (Some(k), Some(w)) => Some(w.at(&k.recip()) == theorem_exponent_exact(&k)),
        _ => None,
    };
    let pass = u_ok && w_ok && interval_ok && p.verify(&s) && at_k != Some(false);
    Ok((
        pass,
        json!({"u_star": s.variable(0, "u").map(|u| u.to_string()), "w_expr": w_text,
               "x_interval": [s.x_interval().0.map(|r| r.to_string()), s.x_interval().1.map(|r| r.to_string())],
               "config_k_matches": at_k}),
    ))
}

/// Convergents of λ₁/λ₂ up to `max_q`: recurrence, Legendre, and X^{1−8u} = q.
pub fn convergent_checks(inst: &ProblemInstance, max_q: u128) -> dhlab_core::Result<(bool, Value)> {
    if inst.lambda_ratio == RatioStatus::Rational {
        return Ok((false, json!({"reason": "lambda1/lambda2 is rational"})));
    }
    let mut n = 8;
    let convergents = loop {
        let c = lambda_ratio_convergents(inst, n)?;
        if c.last().is_some_and(|c| c.q > max_q) || c.len() < n {
            break c;
        }
        n *= 2;
    };
    let within: Vec<_> = convergents.iter().filter(|c| c.q <= max_q).copied().collect();
    let ratio = inst.lambda_dd[0] / inst.lambda_dd[1];
    let counterexamples: Vec<Value> = within
        .iter()
        .filter_map(|c| legendre_counterexample(ratio, c).map(|(a, q)| json!({"q_n": c.q as u64, "a": a as i64, "q": q as u64})))
        .collect();
    let denominators: Vec<u64> = within.iter().map(|c| c.q as u64).collect();
    let distinct = denominators.iter().filter(|&&q| q >= 2).count();
    let windows = plan_windows(inst, distinct.max(1), DEFAULT_U, true)?;
    let worst_coupling = windows
        .iter()
        .filter_map(|w| w.coupling_residual().map(|r| r / w.q.unwrap_or(1) as f64))
        .fold(0.0, f64::max);
    let pass = recurrence_holds(&convergents) && counterexamples.is_empty() && worst_coupling <= 1e-12;
    Ok((
        pass,
        json!({"denominators": denominators, "legendre_counterexamples": counterexamples,
               "windows": windows.len(), "worst_relative_coupling_residual": worst_coupling}),
    ))
}

/// Meet-in-the-middle output equals exhaustive enumeration, and every record re-verifies.
pub fn search_oracle(inst: &ProblemInstance, x: f64, tables: &PrimeTables) -> dhlab_core::Result<(bool, Value)> {
    let fast = enumerate_solutions(inst, x, DEFAULT_BUDGET, tables)?;
    let slow = brute_force_solutions(inst, x, tables)?;
    let keys = |v: &[dhlab_core::search::SolutionRecord]| v.iter().map(|r| r.key()).collect::<Vec<_>>();
    let same = keys(&fast.records) == keys(&slow);
    let sound = fast.records.iter().all(|r| verify_record(inst, x, r));
    Ok((
        same && sound && fast.summary.complete,
        json!({"X": x, "solutions": fast.records.len(), "exhaustive": slow.len(), "sound": sound}),
    ))
}

pub fn run(a: &VerifyArgs, env: &Env) -> CliResult<i32> {
    let cfg = input::load_config(&a.config)?;
    let run = Run::new("verify", Some(cfg.hash.clone()), None, json!({}));
    let mut checks = Vec::new();
    match validate_instance(&cfg.raw) {
        Err(e) => checks.push(CheckResult {
            name: "validate_instance",
            pass: false,
            detail: json!({"error": {"code": e.code(), "message": e.to_string()}}),
        }),
        Ok(inst) => {
            checks.push(CheckResult {
                name: "validate_instance",
                pass: true,
                detail: serde_json::to_value(inst.summary()).expect("summary serializes"),
            });
            let limit = prime_limit(SEARCH_X.max(SIEVE_X), inst.k).max(prime_limit(PARSEVAL_X, inst.k));
            let tables = env.tables(limit)?;
            checks.push(check("sieve_weights", || sieve_invariants(SIEVE_X, inst.delta, &tables)));
            let eta = window_at_scale(&inst, EULER_FIT_X, inst.u).map(|w| w.eta).unwrap_or(1.0);
            checks.push(check("kernel_plancherel", || {
                let (a, da) = kernel_checks(1.0);
                let (b, db) = kernel_checks(eta);
                Ok((a && b, json!([da, db])))
            }));
            checks.push(check("parseval_oracle", || parseval(&inst, PARSEVAL_X, &tables)));
            checks.push(check("euler_bound_stability", || {
                euler_stability(inst.k, inst.delta, EULER_FIT_X, &[EULER_CHECK_X])
            }));
            checks.push(check("exponent_program", || exponent_program(&inst)));
            checks.push(check("convergents_legendre", || convergent_checks(&inst, LEGENDRE_MAX_Q)));
            checks.push(check("search_oracle", || search_oracle(&inst, SEARCH_X, &tables)));
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let report = json!({
        "schema": "verify_report",
        "passed": failed.is_empty(),
        "failed": failed,
        "checks": checks,
    });
    match &a.out {
        Some(path) => run.write_json(path, report)?,
        None => run.print(report),
    }
    run.finish()?;
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_CHECK })
}
