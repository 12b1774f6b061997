//! Continued fractions, convergent-driven window planning and the
//! rational-approximation witness test.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::exact::{floor_rational, ExactNumber, RatioStatus, ENCLOSURE_BITS};
use crate::model::{derive_window, ProblemInstance, WindowParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergent {
    pub a: i128,
    pub q: u128,
    pub index: usize,
}

impl Convergent {
    pub fn value(&self) -> BigRational {
        BigRational::new(BigInt::from(self.a), BigInt::from(self.q))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RationalApproxWitness {
    pub alpha: f64,
    pub a: i128,
    pub q: u128,
    /// |qα − a|
    pub defect: f64,
    pub q_bound: f64,
    pub defect_bound: f64,
}

fn to_i128(v: &BigInt) -> Result<i128> {
    v.to_i128()
        .ok_or_else(|| Error::Precision(format!("convergent term {v} exceeds 128 bits")))
}

/// Expansion of any real known to lie in `[lo, hi]`. Stops when the enclosure
/// no longer determines the next partial quotient, or at an exact rational.
fn expand(mut lo: BigRational, mut hi: BigRational, n: usize) -> Result<(Vec<Convergent>, bool)> {
    let mut out = Vec::with_capacity(n);
    let (mut a_prev, mut q_prev) = (BigInt::zero(), BigInt::one());
    let (mut a_cur, mut q_cur) = (BigInt::one(), BigInt::zero());
    while out.len() < n {
        let t = floor_rational(&lo);
        if floor_rational(&hi) != t {
            return Ok((out, false));
        }
        let a_next = &t * &a_cur + &a_prev;
        let q_next = &t * &q_cur + &q_prev;
        out.push(Convergent {
            a: to_i128(&a_next)?,
            q: to_i128(&q_next)?.try_into().expect("denominators are positive"),
            index: out.len(),
        });
        a_prev = std::mem::replace(&mut a_cur, a_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
        let tr = BigRational::from_integer(t);
        let (flo, fhi) = (&lo - &tr, &hi - &tr);
        if flo.is_zero() {
            if fhi.is_zero() {
                // exact rational reached
                return Ok((out, true));
            }
            return Ok((out, false));
        }
        lo = fhi.recip();
        hi = flo.recip();
    }
    Ok((out, false))
}

/// First `n` convergents of `x`. Rationals terminate early with their exact
/// value; irrationals whose enclosure is too coarse give [`Error::Precision`].
pub fn continued_fraction(x: &ExactNumber, n: usize) -> Result<Vec<Convergent>> {
    let (lo, hi) = x.trusted_enclosure(ENCLOSURE_BITS);
    continued_fraction_enclosed(lo, hi, n)
}

pub fn continued_fraction_enclosed(lo: BigRational, hi: BigRational, n: usize) -> Result<Vec<Convergent>> {
    let (out, exact) = expand(lo, hi, n)?;
    if out.len() < n && !exact {
        return Err(Error::Precision(format!(
            "input determines only {} of {n} convergents",
            out.len()
        )));
    }
    Ok(out)
}

/// Convergents of the exact binary value of `alpha` with q ≤ `max_q`.
pub fn convergents_of_f64(alpha: f64, max_q: f64) -> Vec<Convergent> {
    let Some(r) = BigRational::from_float(alpha) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut lo = r.clone();
    let (mut a_prev, mut q_prev) = (BigInt::zero(), BigInt::one());
    let (mut a_cur, mut q_cur) = (BigInt::one(), BigInt::zero());
    loop {
        let t = floor_rational(&lo);
        let a_next = &t * &a_cur + &a_prev;
        let q_next = &t * &q_cur + &q_prev;
        let (Some(a), Some(q)) = (a_next.to_i128(), q_next.to_u128()) else {
            break;
        };
        if q as f64 > max_q {
            break;
        }
        out.push(Convergent {
            a,
            q,
            index: out.len(),
        });
        a_prev = std::mem::replace(&mut a_cur, a_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
        let f = lo - BigRational::from_integer(t);
        if f.is_zero() {
            break;
        }
        lo = f.recip();
    }
    out
}

/// Enclosure of λ₁/λ₂.
fn ratio_enclosure(num: &ExactNumber, den: &ExactNumber) -> Result<(BigRational, BigRational)> {
    let (a, b) = num.trusted_enclosure(ENCLOSURE_BITS);
    let (c, d) = den.trusted_enclosure(ENCLOSURE_BITS);
    if c.signum() != d.signum() || c.is_zero() {
        return Err(Error::Precision("denominator enclosure contains zero".into()));
    }
    let qs = [&a / &c, &a / &d, &b / &c, &b / &d];
    let lo = qs.iter().min().expect("nonempty").clone();
    let hi = qs.iter().max().expect("nonempty").clone();
    Ok((lo, hi))
}

/// Convergents of `num/den` for exact inputs.
pub fn ratio_convergents(num: &ExactNumber, den: &ExactNumber, n: usize) -> Result<Vec<Convergent>> {
    if den.is_zero() {
        return Err(Error::OutOfRange {
            what: "denominator",
            detail: "zero".into(),
        });
    }
    let (lo, hi) = ratio_enclosure(num, den)?;
    continued_fraction_enclosed(lo, hi, n)
}

/// Convergents of λ₁/λ₂.
pub fn lambda_ratio_convergents(instance: &ProblemInstance, n: usize) -> Result<Vec<Convergent>> {
    let (lo, hi) = ratio_enclosure(&instance.lambda_exact[0], &instance.lambda_exact[1])?;
    continued_fraction_enclosed(lo, hi, n)
}

/// Windows X = q^{7/3} for the convergent denominators q ≥ 2 of λ₁/λ₂.
///
/// An `UnverifiedIrrational` ratio is only accepted with `acknowledge_unverified`.
pub fn plan_windows(
    instance: &ProblemInstance,
    count: usize,
    u: f64,
    acknowledge_unverified: bool,
) -> Result<Vec<WindowParams>> {
    match instance.lambda_ratio {
        RatioStatus::Rational => {
            return Err(Error::Irrational(
                "lambda1/lambda2 is rational; no convergent sequence exists".into(),
            ))
        }
        RatioStatus::UnverifiedIrrational if !acknowledge_unverified => {
            return Err(Error::Irrational(
                "lambda1/lambda2 is a truncated decimal; acknowledge to plan anyway".into(),
            ))
        }
        _ => {}
    }
    let mut want = count + 2;
    loop {
        let convergents = lambda_ratio_convergents(instance, want)?;
        let mut windows = Vec::with_capacity(count);
        let mut last_q = 1u128;
        for c in &convergents {
            if c.q <= last_q {
                continue;
            }
            last_q = c.q;
            let q = u64::try_from(c.q)
                .map_err(|_| Error::Precision(format!("denominator {} exceeds 64 bits", c.q)))?;
            windows.push(derive_window(instance, q, u)?);
            if windows.len() == count {
                return Ok(windows);
            }
        }
        want += count;
    }
}

/// (X^{1/2+ε}/Z)⁴ and C·X^{−1}·(X^{1/2+ε}/Z)⁴.
pub fn witness_bounds(z: f64, x: f64, epsilon: f64, constant: f64) -> (f64, f64) {
    let q_bound = (x.powf(0.5 + epsilon) / z).powi(4);
    (q_bound, constant * q_bound / x)
}

fn check_z(z: f64, x: f64, epsilon: f64) -> Result<()> {
    let hi = x.sqrt();
    let lo = x.powf(0.5 - 1.0 / 14.0 + epsilon);
    let slack = 1e-12;
    if z > hi * (1.0 + slack) || z < lo * (1.0 - slack) {
        return Err(Error::OutOfRange {
            what: "Z",
            detail: format!("{z} not in [X^(1/2-1/14+eps), X^(1/2)] = [{lo}, {hi}]"),
        });
    }
    Ok(())
}

/// Convergents of α with q ≤ the q-bound, each as a candidate witness.
fn candidates(alpha: f64, z: f64, x: f64, epsilon: f64, constant: f64) -> Result<Vec<RationalApproxWitness>> {
    check_z(z, x, epsilon)?;
    let (q_bound, defect_bound) = witness_bounds(z, x, epsilon, constant);
    let exact = BigRational::from_float(alpha).ok_or_else(|| Error::OutOfRange {
        what: "alpha",
        detail: format!("{alpha} is not finite"),
    })?;
    Ok(convergents_of_f64(alpha, q_bound)
        .into_iter()
        .map(|c| {
            let qa = &exact * BigRational::from_integer(BigInt::from(c.q));
            let defect = (qa - BigRational::from_integer(BigInt::from(c.a)))
                .abs()
                .to_f64()
                .unwrap_or(f64::INFINITY);
            RationalApproxWitness {
                alpha,
                a: c.a,
                q: c.q,
                defect,
                q_bound,
                defect_bound,
            }
        })
        .collect())
}

/// Smallest-q coprime (a, q) with q ≤ (X^{1/2+ε}/Z)⁴ and
/// |qα − a| ≤ C X^{−1} (X^{1/2+ε}/Z)⁴, or `None`.
///
/// Convergents are best approximations, so the first convergent meeting the
/// defect bound is also the smallest admissible q overall.
pub fn best_rational_test(
    alpha: f64,
    z: f64,
    x: f64,
    epsilon: f64,
    constant: f64,
) -> Result<Option<RationalApproxWitness>> {
    Ok(candidates(alpha, z, x, epsilon, constant)?
        .into_iter()
        .find(|w| w.defect <= w.defect_bound))
}

/// The convergent with q inside the bound and the smallest defect, whether or
/// not it meets the defect bound. Used to report near misses.
pub fn nearest_candidate(
    alpha: f64,
    z: f64,
    x: f64,
    epsilon: f64,
    constant: f64,
) -> Result<Option<RationalApproxWitness>> {
    Ok(candidates(alpha, z, x, epsilon, constant)?
        .into_iter()
        .min_by(|a, b| a.defect.total_cmp(&b.defect)))
}

/// a_n q_{n−1} − a_{n−1} q_n = ±1 along the list.
pub fn recurrence_holds(convergents: &[Convergent]) -> bool {
    convergents.windows(2).all(|w| {
        let d = BigInt::from(w[1].a) * BigInt::from(w[0].q) - BigInt::from(w[0].a) * BigInt::from(w[1].q);
        d.abs().is_one()
    })
}

/// Scans every q' < q_n for an approximation at least as good as the
/// convergent; returns the first offender.
pub fn legendre_counterexample(x: Dd, c: &Convergent) -> Option<(i128, u128)> {
    let err = |a: i128, q: u128| (x.mul_f64(q as f64) - Dd::from_f64(a as f64)).abs();
    let own = err(c.a, c.q);
    (1..c.q).find_map(|q| {
        let a = x.mul_f64(q as f64).round().to_f64() as i128;
        if err(a, q) <= own {
            Some((a, q))
        } else {
            None
        }
    })
}
