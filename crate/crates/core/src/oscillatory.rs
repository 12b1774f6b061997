//! Exponential sums S_k, U_k, S̃₂, the integral T_k, and the kernel pair.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::{reduced_phase, Dd};
use crate::prime_tables::PrimeTables;
use crate::quadrature::{gk15_complex, gl8};
use crate::sieve_weight::SieveWeightTable;
use crate::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// e(θ) = exp(2πiθ).
#[inline]
pub fn e(theta: f64) -> Complex64 {
    let (s, c) = (TWO_PI * theta).sin_cos();
    Complex64::new(c, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SumKind {
    #[serde(rename = "sk")]
    Sk,
    #[serde(rename = "uk")]
    Uk,
    #[serde(rename = "tk")]
    Tk,
    #[serde(rename = "s2t")]
    S2Tilde,
}

impl std::str::FromStr for SumKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sk" => Ok(SumKind::Sk),
            "uk" => Ok(SumKind::Uk),
            "tk" => Ok(SumKind::Tk),
            "s2t" => Ok(SumKind::S2Tilde),
            _ => Err(Error::Parse {
                input: s.to_string(),
                reason: "expected one of sk, uk, tk, s2t".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepPolicy {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub start: f64,
    pub stop: f64,
    pub policy: StepPolicy,
    pub points: Vec<f64>,
    /// Set when the spacing is at most 0.1/(X·max|λ|) for the recorded X.
    pub integration_grade_for: Option<f64>,
}

impl AlphaGrid {
    /// `count` equally spaced points including both ends.
    pub fn uniform(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count == 0 || !(stop >= start) || (count == 1 && stop != start) {
            return Err(Error::Grid(format!("bad grid {start}:{stop}:{count}")));
        }
        let points = if count == 1 {
            vec![start]
        } else {
            let step = (stop - start) / (count - 1) as f64;
            (0..count).map(|i| start + step * i as f64).collect()
        };
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Grid("points not strictly increasing".into()));
        }
        Ok(AlphaGrid {
            start,
            stop,
            policy: StepPolicy::Uniform,
            points,
            integration_grade_for: None,
        })
    }

    /// Uniform grid with step 0.1/(X·max|λ|) or finer.
    pub fn integration_grade(start: f64, stop: f64, x: f64, max_lambda: f64) -> Result<Self> {
        let step = integration_step(x, max_lambda);
        let count = ((stop - start) / step).ceil() as usize + 1;
        let mut g = AlphaGrid::uniform(start, stop, count.max(2))?;
        g.integration_grade_for = Some(x);
        Ok(g)
    }

    /// Logarithmically spaced positive points.
    pub fn log_spaced(start: f64, stop: f64, count: usize) -> Result<Self> {
        if !(start > 0.0) || !(stop > start) || count < 2 {
            return Err(Error::Grid(format!("bad log grid {start}:{stop}:{count}")));
        }
        let (a, b) = (start.ln(), stop.ln());
        let points = (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect();
        Ok(AlphaGrid {
            start,
            stop,
            policy: StepPolicy::Adaptive,
            points,
            integration_grade_for: None,
        })
    }

    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn check_integration_grade(&self, x: f64, max_lambda: f64) -> Result<()> {
        let limit = integration_step(x, max_lambda) * (1.0 + 1e-9);
        if self.max_step() > limit {
            return Err(Error::Grid(format!(
                "step {:e} exceeds {:e} = 0.1/(X max|lambda|)",
                self.max_step(),
                limit
            )));
        }
        Ok(())
    }
}

pub fn integration_step(x: f64, max_lambda: f64) -> f64 {
    0.1 / (x * max_lambda)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumEvaluation {
    pub alpha: f64,
    pub value: Complex64,
    pub kind: SumKind,
    pub k: f64,
    #[serde(rename = "X")]
    pub x: f64,
    pub delta: f64,
    pub lambda: f64,
}

/// A finite sum Σ w_j e(f_j α) with frequencies kept in paired-word precision.
#[derive(Debug, Clone, Default)]
pub struct PhaseSum {
    pub freqs: Vec<Dd>,
    pub weights: Vec<f64>,
}

/// n^k in paired-word precision; exact for k ∈ {1, 2}.
pub fn power_dd(n: u64, k: f64) -> Dd {
    if k == 1.0 {
        Dd::from_u128(n as u128)
    } else if k == 2.0 {
        Dd::from_u128(n as u128 * n as u128)
    } else {
        Dd::from_f64(n as f64).powd(Dd::from_f64(k))
    }
}

/// Integers n ≥ 1 with lo ≤ n^k ≤ hi.
pub fn power_range(lo: f64, hi: f64, k: f64) -> std::ops::RangeInclusive<u64> {
    let inv = 1.0 / k;
    let mut a = lo.max(1.0).powf(inv).floor().max(1.0) as u64;
    while (a as f64).powf(k) < lo {
        a += 1;
    }
    while a > 1 && ((a - 1) as f64).powf(k) >= lo {
        a -= 1;
    }
    let mut b = hi.max(0.0).powf(inv).floor() as u64 + 1;
    while b > 0 && (b as f64).powf(k) > hi {
        b -= 1;
    }
    if b < a {
        // empty, expressed with a > b
        return 1..=0;
    }
    a..=b
}

impl PhaseSum {
    /// Σ_{δX ≤ p^k ≤ X} log p · e(p^k α).
    pub fn primes(k: f64, x: f64, delta: f64, tables: &PrimeTables) -> Result<Self> {
        tables.require(x.powf(1.0 / k))?;
        let range = power_range(delta * x, x, k);
        let (lo, hi) = (*range.start(), *range.end());
        let mut s = PhaseSum::default();
        if hi < lo {
            return Ok(s);
        }
        for i in tables.prime_range(lo as f64, hi as f64) {
            s.freqs.push(power_dd(tables.primes[i] as u64, k));
            s.weights.push(tables.log_p[i]);
        }
        Ok(s)
    }

    /// Σ_{δX ≤ n^k ≤ X} e(n^k α).
    pub fn integers(k: f64, x: f64, delta: f64) -> Self {
        let mut s = PhaseSum::default();
        for n in power_range(delta * x, x, k) {
            s.freqs.push(power_dd(n, k));
            s.weights.push(1.0);
        }
        s
    }

    /// Σ_{m} ρ(m) e(m² α) over the table's range.
    pub fn sieve_squares(table: &SieveWeightTable) -> Self {
        let mut s = PhaseSum::default();
        for (m, r) in table.support() {
            s.freqs.push(power_dd(m, 2.0));
            s.weights.push(r as f64);
        }
        s
    }

    /// Same sum evaluated at λα.
    pub fn scaled(&self, lambda: Dd) -> Self {
        PhaseSum {
            freqs: self.freqs.iter().map(|&f| f * lambda).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn at_zero(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn abs_weight(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn max_abs_freq(&self) -> f64 {
        self.freqs.iter().map(|f| f.hi.abs()).fold(0.0, f64::max)
    }

    pub fn eval(&self, alpha: f64) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (f, w) in self.freqs.iter().zip(&self.weights) {
            let (s, c) = (TWO_PI * reduced_phase(*f, alpha, 1.0)).sin_cos();
            re += w * c;
            im += w * s;
        }
        Complex64::new(re, im)
    }

    /// Values at each grid point; order-preserving parallel map.
    pub fn eval_many(&self, alphas: &[f64]) -> Vec<Complex64> {
        alphas.par_iter().map(|&a| self.eval(a)).collect()
    }
}

pub fn eval_s_k(alpha: f64, k: f64, x: f64, delta: f64, tables: &PrimeTables) -> Result<Complex64> {
    Ok(PhaseSum::primes(k, x, delta, tables)?.eval(alpha))
}

pub fn eval_u_k(alpha: f64, k: f64, x: f64, delta: f64) -> Complex64 {
    PhaseSum::integers(k, x, delta).eval(alpha)
}

pub fn eval_s2_tilde(alpha: f64, x: f64, delta: f64, table: &SieveWeightTable) -> Result<Complex64> {
    if table.x != x || table.delta != delta {
        return Err(Error::Mismatch(format!(
            "weight table built for X={}, delta={}; requested X={x}, delta={delta}",
            table.x, table.delta
        )));
    }
    Ok(PhaseSum::sieve_squares(table).eval(alpha))
}

const TK_RELATIVE_TARGET: f64 = 1e-8;
const TK_MAX_PANELS: usize = 1 << 22;

/// T_k(α) = ∫_{(δX)^{1/k}}^{X^{1/k}} e(α t^k) dt, returned with its error estimate.
///
/// Evaluated as (1/k)∫_{δX}^{X} u^{1/k−1} e(αu) du on panels no wider than half
/// a period, 15-point Kronrod rule per panel; the panel count is doubled until
/// the summed |K15 − G7| falls below 1e-8 · max(|T_k|, 1e-6 · T_k(0)). The
/// floor only matters where the endpoint terms cancel to (near) zero.
pub fn eval_t_k_with_error(alpha: f64, k: f64, x: f64, delta: f64) -> Result<(Complex64, f64)> {
    if !(k >= 1.0) || !(x > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange {
            what: "T_k arguments",
            detail: format!("k={k}, X={x}, delta={delta}"),
        });
    }
    let inv_k = 1.0 / k;
    let (lo, hi) = (delta * x, x);
    let full = hi.powf(inv_k) - lo.powf(inv_k);
    if alpha == 0.0 {
        return Ok((Complex64::new(full, 0.0), 0.0));
    }
    let amp = |u: f64| u.powf(inv_k - 1.0) * inv_k;
    let span = hi - lo;
    let base = (span * 2.0 * alpha.abs()).ceil().max(8.0) as usize;
    let mut panels = base;
    let mut last_err = f64::INFINITY;
    while panels <= TK_MAX_PANELS {
        let width = span / panels as f64;
        let mut total = Complex64::new(0.0, 0.0);
        let mut err = 0.0;
        for i in 0..panels {
            let a = lo + width * i as f64;
            let b = if i + 1 == panels { hi } else { a + width };
            // panel-local phase keeps α·u rounding out of the integrand
            let base = e(Dd::from_f64(alpha).mul_f64(a).frac_centered());
            let (v, e_est) = gk15_complex(|s| e(alpha * s) * amp(a + s), 0.0, b - a);
            total += v * base;
            err += e_est;
        }
        let target = TK_RELATIVE_TARGET * total.norm().max(1e-6 * full);
        if err <= target {
            return Ok((total, err));
        }
        last_err = err / total.norm().max(1e-300);
        panels *= 2;
    }
    Err(Error::Accuracy {
        achieved: last_err,
        target: TK_RELATIVE_TARGET,
    })
}

pub fn eval_t_k(alpha: f64, k: f64, x: f64, delta: f64) -> Result<Complex64> {
    Ok(eval_t_k_with_error(alpha, k, x, delta)?.0)
}

/// First-derivative bound |T_k(α)| ≤ 1/(π|α| k a^{k−1}) with a = (δX)^{1/k},
/// together with the trivial bound T_k(0).
pub fn t_k_derivative_bound(alpha: f64, k: f64, x: f64, delta: f64) -> f64 {
    let a = (delta * x).powf(1.0 / k);
    let trivial = x.powf(1.0 / k) - a;
    if alpha == 0.0 {
        return trivial;
    }
    trivial.min(1.0 / (PI * alpha.abs() * k * a.powf(k - 1.0)))
}

/// K_η(α) = (sin(παη)/(πα))², with K_η(0) = η².
pub fn kernel_k(alpha: f64, eta: f64) -> f64 {
    if alpha == 0.0 {
        return eta * eta;
    }
    let s = (PI * alpha * eta).sin() / (PI * alpha);
    s * s
}

/// K̂_η(v) = max(0, η − |v|).
pub fn kernel_khat(v: f64, eta: f64) -> f64 {
    (eta - v.abs()).max(0.0)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelIntegral {
    pub value: f64,
    pub quadrature_error: f64,
    /// Proved bound 2/(π²A) on ∫_{|α|>A} K_η.
    pub tail_bound: f64,
}

/// ∫_{−A}^{A} K_η with GK15 on panels of half the period 1/η.
pub fn kernel_integral(eta: f64, cutoff: f64) -> KernelIntegral {
    let width = 0.5 / eta;
    let panels = (cutoff / width).ceil() as usize;
    let width = cutoff / panels as f64;
    let mut value = 0.0;
    let mut err = 0.0;
    for i in 0..panels {
        let a = width * i as f64;
        let (v, e_est) = crate::quadrature::gk15(|t| kernel_k(t, eta), a, a + width);
        value += v;
        err += e_est;
    }
    KernelIntegral {
        value: 2.0 * value,
        quadrature_error: 2.0 * err + 1e-15 * value.abs() * panels as f64,
        tail_bound: 2.0 / (PI * PI * cutoff),
    }
}

/// sup over `alphas` of |T_k(α) − U_k(α)| / (1 + |α| X).
pub fn euler_gap_sup(k: f64, x: f64, delta: f64, alphas: &[f64]) -> Result<f64> {
    let uk = PhaseSum::integers(k, x, delta);
    let gaps: Vec<Result<f64>> = alphas
        .par_iter()
        .map(|&a| {
            let t = eval_t_k(a, k, x, delta)?;
            Ok((t - uk.eval(a)).norm() / (1.0 + a.abs() * x))
        })
        .collect();
    let mut sup: f64 = 0.0;
    for g in gaps {
        sup = sup.max(g?);
    }
    Ok(sup)
}

/// ∫₀¹ |Σ_{δX ≤ p² ≤ X} log p e(p² α)|⁴ dα, exactly as Σ_n c_n² where
/// c_n = Σ_{p₁²+p₂²=n} log p₁ log p₂.
pub fn fourth_moment_squares(x: f64, delta: f64, tables: &PrimeTables) -> Result<f64> {
    let s = PhaseSum::primes(2.0, x, delta, tables)?;
    let mut pairs: Vec<(u64, f64)> = Vec::with_capacity(s.len() * s.len());
    for (fa, wa) in s.freqs.iter().zip(&s.weights) {
        for (fb, wb) in s.freqs.iter().zip(&s.weights) {
            pairs.push((fa.hi as u64 + fb.hi as u64, wa * wb));
        }
    }
    pairs.sort_by_key(|p| p.0);
    let mut total = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut c = 0.0;
        let n = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == n {
            c += pairs[i].1;
            i += 1;
        }
        total += c * c;
    }
    Ok(total)
}

/// ∫_{lo}^{hi} |f(α)|² dα by composite 8-point Gauss with panels of at most a
/// quarter period of the highest frequency difference.
pub fn mean_square(sum: &PhaseSum, lo: f64, hi: f64) -> f64 {
    let spread = 2.0 * sum.max_abs_freq();
    let panels = (((hi - lo) * spread * 4.0).ceil() as usize).max(1);
    let width = (hi - lo) / panels as f64;
    let (nodes, weights) = gl8();
    let partial: Vec<f64> = (0..panels)
        .into_par_iter()
        .map(|i| {
            let c = lo + width * (i as f64 + 0.5);
            let mut acc = 0.0;
            for (t, w) in nodes.iter().zip(weights) {
                acc += w * sum.eval(c + 0.5 * width * t).norm_sqr();
            }
            acc * 0.5 * width
        })
        .collect();
    partial.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prime_tables::build_tables;
    use num_bigint::BigInt;
    use num_traits::{Signed, Zero};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn s_k_at_zero_is_theta_difference() {
        let t = build_tables(10_000, 0).unwrap();
        let (k, x, delta) = (1.1, 5000.0, 0.1);
        let v = eval_s_k(0.0, k, x, delta, &t).unwrap();
        let r = power_range(delta * x, x, k);
        let expect = t.theta(*r.end() as f64).unwrap() - t.theta(*r.start() as f64 - 1.0).unwrap();
        assert!((v.re - expect).abs() < 1e-9 && v.im == 0.0);
    }

    #[test]
    fn s_k_two_term_example() {
        let t = build_tables(100, 0).unwrap();
        let v = eval_s_k(0.25, 2.0, 100.0, 0.1, &t).unwrap();
        let expect = Complex64::new(0.0, 5f64.ln() + 7f64.ln());
        assert!(close(v, expect, 1e-12), "{v}");
    }

    #[test]
    fn s_k_requires_tables() {
        let t = build_tables(100, 0).unwrap();
        assert!(matches!(
            eval_s_k(0.1, 1.05, 1e4, 0.1, &t),
            Err(Error::TableTooSmall { .. })
        ));
    }

    #[test]
    fn u_k_count_and_closed_form() {
        let (k, x, delta): (f64, f64, f64) = (1.05, 1e4, 0.1);
        let n_hi = x.powf(1.0 / k).floor();
        let n_lo = (delta * x).powf(1.0 / k).ceil();
        assert_eq!(eval_u_k(0.0, k, x, delta).re, n_hi - n_lo + 1.0);
        // k = 1: geometric series over 10..=50
        let (alpha, x, delta) = (0.3, 50.0, 0.2);
        let ratio = e(alpha);
        let closed = e(10.0 * alpha) * (Complex64::new(1.0, 0.0) - ratio.powu(41))
            / (Complex64::new(1.0, 0.0) - ratio);
        assert!(close(eval_u_k(alpha, 1.0, x, delta), closed, 1e-12));
    }

    #[test]
    fn conjugate_symmetry_all_kinds() {
        let t = build_tables(20_000, 200).unwrap();
        let w = SieveWeightTable::build(1e4, 0.1, &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (k, x, delta) = (1.1, 1e4, 0.1);
        let sk = PhaseSum::primes(k, x, delta, &t).unwrap();
        let uk = PhaseSum::integers(k, x, delta);
        let s2 = PhaseSum::sieve_squares(&w);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-0.5..0.5);
            for s in [&sk, &uk, &s2] {
                assert!(close(s.eval(-a), s.eval(a).conj(), 1e-9));
            }
        }
        for _ in 0..20 {
            let a: f64 = rng.gen_range(-0.01..0.01);
            let p = eval_t_k(a, k, x, delta).unwrap();
            let m = eval_t_k(-a, k, x, delta).unwrap();
            assert!(close(m, p.conj(), 1e-8 * p.norm().max(1.0)));
        }
    }

    #[test]
    fn s2_tilde_consistency() {
        let t = build_tables(20_000, 200).unwrap();
        let w = SieveWeightTable::build(1e4, 0.1, &t).unwrap();
        let v = eval_s2_tilde(0.0, 1e4, 0.1, &w).unwrap();
        assert_eq!(v.re, w.sum() as f64);
        let (sum, _) = w.interval_sum(w.m_lo, w.m_hi).unwrap();
        assert_eq!(v.re, sum);
        assert!(matches!(eval_s2_tilde(0.0, 2e4, 0.1, &w), Err(Error::Mismatch(_))));
        let bound = w.abs_sum() as f64;
        let s2 = PhaseSum::sieve_squares(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-1.0..1.0);
            assert!(s2.eval(a).norm() <= bound + 1e-9);
        }
    }

    #[test]
    fn t_k_closed_forms() {
        let (x, delta) = (1e4, 0.1);
        let v = eval_t_k(0.0, 1.05, x, delta).unwrap();
        assert_eq!(v.re, x.powf(1.0 / 1.05) - (delta * x).powf(1.0 / 1.05));
        for &alpha in &[1e-4, 3.7e-3, 0.2, -0.05] {
            let closed = (e(alpha * x) - e(alpha * delta * x)) / Complex64::new(0.0, TWO_PI * alpha);
            let v = eval_t_k(alpha, 1.0, x, delta).unwrap();
            assert!(close(v, closed, 1e-10 * closed.norm().max(1.0)), "alpha={alpha}: {v} vs {closed}");
        }
    }

    // Fixed-point (2^-400) evaluation of ∫_a^b e(αt²) dt via its power series.
    fn fresnel_series(alpha_num: i64, alpha_den: i64, a_sq: u64, b_sq: u64) -> Complex64 {
        let bits = 400u32;
        let one = BigInt::from(1) << bits;
        let atan_inv = |n: i64| {
            let n = BigInt::from(n);
            let n2 = &n * &n;
            let mut term = &one / &n;
            let mut sum = term.clone();
            let mut k = 1i64;
            while !term.is_zero() {
                term = -term / &n2;
                sum += &term / BigInt::from(2 * k + 1);
                k += 1;
            }
            sum
        };
        let pi = atan_inv(5) * 16 - atan_inv(239) * 4;
        let c = pi * 2 * alpha_num / alpha_den;
        let sqrt_fixed = |v: u64| (BigInt::from(v) << (2 * bits)).sqrt();
        let series = |t_sq: u64| -> (BigInt, BigInt) {
            let t = sqrt_fixed(t_sq);
            let t2 = BigInt::from(t_sq) << bits;
            let mut term = t.clone();
            let (mut re, mut im) = (t, BigInt::zero());
            let mut n = 1u64;
            loop {
                term = ((term * &c >> bits) * &t2 >> bits) / BigInt::from(n);
                if term.abs() < BigInt::from(1) {
                    break;
                }
                let piece = &term / BigInt::from(2 * n + 1);
                match n % 4 {
                    0 => re += piece,
                    1 => im += piece,
                    2 => re -= piece,
                    _ => im -= piece,
                }
                n += 1;
            }
            (re, im)
        };
        let to_f64 = |v: BigInt| {
            let shift = v.bits().saturating_sub(60);
            let top: i64 = (&v >> shift).try_into().unwrap();
            top as f64 * 2f64.powi(shift as i32 - bits as i32)
        };
        let (rb, ib) = series(b_sq);
        let (ra, ia) = series(a_sq);
        Complex64::new(to_f64(rb - ra), to_f64(ib - ia))
    }

    #[test]
    fn t_k_matches_fresnel_series() {
        let (x, delta) = (1e4, 0.1);
        let oracle = fresnel_series(1, 1000, 1000, 10_000);
        let v = eval_t_k(1e-3, 2.0, x, delta).unwrap();
        assert!((v - oracle).norm() <= 1e-6 * oracle.norm(), "{v} vs {oracle}");
        let (_, err) = eval_t_k_with_error(1e-3, 2.0, x, delta).unwrap();
        assert!(err <= 1e-8 * oracle.norm());
    }

    #[test]
    fn t_k_first_derivative_bound_holds() {
        for &k in &[1.05, 1.1] {
            for &a in &[1e-4, 1e-3, 3e-3, 0.01, 0.1] {
                let v = eval_t_k(a, k, 1e4, 0.1).unwrap().norm();
                assert!(v <= t_k_derivative_bound(a, k, 1e4, 0.1) * (1.0 + 1e-8), "k={k} a={a}");
            }
        }
    }

    #[test]
    fn kernel_values() {
        let eta = 0.7;
        assert_eq!(kernel_k(0.0, eta), eta * eta);
        assert_eq!(kernel_khat(2.0 * eta, eta), 0.0);
        assert_eq!(kernel_khat(eta / 2.0, eta), eta / 2.0);
        assert!((kernel_k(1e-9, eta) - eta * eta).abs() < 1e-12);
    }

    #[test]
    fn kernel_bound_on_log_grid() {
        let g = AlphaGrid::log_spaced(1e-6, 1e6, 10_000).unwrap();
        for &eta in &[1e-3, 0.5, 1.0, 30.0] {
            for &a in &g.points {
                for s in [a, -a] {
                    let k = kernel_k(s, eta);
                    assert!(k >= 0.0);
                    assert!(k <= (eta * eta).min(1.0 / (PI * s).powi(2)), "eta={eta} a={s}");
                }
            }
        }
    }

    #[test]
    fn kernel_integrates_to_width() {
        for &eta in &[1.0, 0.25] {
            let r = kernel_integral(eta, 5e5 / eta);
            assert!(r.tail_bound + r.quadrature_error <= 1e-6 * eta);
            assert!((r.value - eta).abs() <= r.tail_bound + r.quadrature_error, "{r:?}");
        }
    }

    #[test]
    fn grids() {
        let g = AlphaGrid::uniform(0.0, 1.0, 11).unwrap();
        assert_eq!(g.points.len(), 11);
        assert!(g.check_integration_grade(1.0, 1.0).is_ok());
        assert!(matches!(g.check_integration_grade(100.0, 1.0), Err(Error::Grid(_))));
        let ig = AlphaGrid::integration_grade(-0.01, 0.01, 400.0, 2f64.sqrt()).unwrap();
        assert!(ig.check_integration_grade(400.0, 2f64.sqrt()).is_ok());
        assert!(AlphaGrid::uniform(1.0, 0.0, 3).is_err());
        assert_eq!("s2t".parse::<SumKind>().unwrap(), SumKind::S2Tilde);
        assert!("zz".parse::<SumKind>().is_err());
    }

    #[test]
    fn power_range_edges() {
        assert_eq!(power_range(10.0, 100.0, 2.0), 4..=10);
        assert_eq!(power_range(16.0, 16.0, 2.0), 4..=4);
        assert!(power_range(17.0, 24.0, 2.0).is_empty());
    }

    #[test]
    fn fourth_moment_matches_grid() {
        let t = build_tables(1000, 0).unwrap();
        let (x, delta) = (1e4, 0.1);
        let exact = fourth_moment_squares(x, delta, &t).unwrap();
        let s = PhaseSum::primes(2.0, x, delta, &t).unwrap();
        let n = 2 * x as usize + 1;
        let grid: f64 = (0..n)
            .map(|j| s.eval(j as f64 / n as f64).norm_sqr().powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((exact - grid).abs() <= 1e-9 * exact);
    }

    proptest! {
        #[test]
        fn s_k_trivial_bound(alpha in -1.0f64..1.0) {
            let t = build_tables(5000, 0).unwrap();
            let s = PhaseSum::primes(1.05, 4000.0, 0.1, &t).unwrap();
            prop_assert!(s.eval(alpha).norm() <= s.at_zero() + 1e-9);
        }
    }
}
