//! Problem instances, run windows and the parameter formulas tying them together.
//!
//! An instance fixes the form `λ₁p₁² + λ₂p₂² + λ₃p₃² + λ₄p₄^k − ω`, the target
//! exponent slack `ε` and the window ratio `δ`. A window fixes a scale `X` and
//! the arc cutoffs derived from it.

use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::exact::{ExactNumber, RatioStatus, ENCLOSURE_BITS};

pub const DEFAULT_DELTA: &str = "1/100";
pub const DEFAULT_EPSILON: &str = "1/1000";
pub const DEFAULT_U: f64 = 1.0 / 14.0;

/// Config file record. Every numeric field is a string parsed exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub lambda: [String; 4],
    pub k: String,
    pub omega: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: String,
    #[serde(default = "default_delta")]
    pub delta: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
}

fn default_epsilon() -> String {
    DEFAULT_EPSILON.to_string()
}

fn default_delta() -> String {
    DEFAULT_DELTA.to_string()
}

impl RawConfig {
    /// The instance used throughout the examples: λ = (1, √2, −1, −1), k = 21/20, ω = 0.
    pub fn default_instance() -> Self {
        RawConfig {
            lambda: ["1".into(), "sqrt(2)".into(), "-1".into(), "-1".into()],
            k: "21/20".into(),
            omega: "0".into(),
            epsilon: default_epsilon(),
            delta: default_delta(),
            u: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            input: "config".into(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub lambda_exact: [ExactNumber; 4],
    pub lambda: [f64; 4],
    pub lambda_dd: [Dd; 4],
    pub k_exact: ExactNumber,
    pub k: f64,
    pub omega_exact: ExactNumber,
    pub omega: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub u: f64,
    /// What is known about λ₁/λ₂.
    pub lambda_ratio: RatioStatus,
}

/// Serializable view of an instance, used in reports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceSummary {
    pub lambda: [String; 4],
    pub lambda_f64: [f64; 4],
    pub k: f64,
    pub omega: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub u: f64,
    pub lambda_ratio: RatioStatus,
}

fn parse(field: &str, s: &str) -> Result<ExactNumber> {
    s.parse::<ExactNumber>().map_err(|e| match e {
        Error::Parse { reason, .. } => Error::Parse {
            input: format!("{field}={s}"),
            reason,
        },
        other => other,
    })
}

/// Compares an exact input against a rational bound, using the enclosure.
fn cmp_exact(x: &ExactNumber, bound: &BigRational) -> Ordering {
    let (lo, hi) = x.enclosure(ENCLOSURE_BITS);
    if &lo > bound {
        Ordering::Greater
    } else if &hi < bound {
        Ordering::Less
    } else if lo == hi && &lo == bound {
        Ordering::Equal
    } else {
        // Enclosure straddles the bound; only possible for surds within 2^-256.
        let mid = (lo + hi) / BigRational::from_integer(2.into());
        mid.cmp(bound)
    }
}

fn ratio(p: i64, q: i64) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// Validates a raw config against the theorem hypotheses.
pub fn validate_instance(raw: &RawConfig) -> Result<ProblemInstance> {
    let mut lambda_exact = Vec::with_capacity(4);
    for (i, s) in raw.lambda.iter().enumerate() {
        lambda_exact.push(parse(&format!("lambda{}", i + 1), s)?);
    }
    let lambda_exact: [ExactNumber; 4] = lambda_exact.try_into().expect("four entries");
    for (i, l) in lambda_exact.iter().enumerate() {
        if l.is_zero() {
            return Err(Error::InvalidInstance(format!("lambda{} is zero", i + 1)));
        }
    }
    let signs: Vec<i32> = lambda_exact.iter().map(|l| l.signum()).collect();
    if signs.iter().all(|&s| s == signs[0]) {
        return Err(Error::InvalidInstance(
            "coefficients lambda1..lambda4 all have the same sign".into(),
        ));
    }

    let k_exact = parse("k", &raw.k)?;
    if cmp_exact(&k_exact, &ratio(1, 1)) != Ordering::Greater
        || cmp_exact(&k_exact, &ratio(7, 6)) != Ordering::Less
    {
        return Err(Error::InvalidInstance(format!(
            "k = {} must satisfy 1 < k < 7/6",
            raw.k
        )));
    }

    let omega_exact = parse("omega", &raw.omega)?;
    let epsilon = parse("epsilon", &raw.epsilon)?;
    if cmp_exact(&epsilon, &ratio(0, 1)) != Ordering::Greater
        || cmp_exact(&epsilon, &ratio(1, 100)) != Ordering::Less
    {
        return Err(Error::InvalidInstance(format!(
            "epsilon = {} must satisfy 0 < epsilon < 1/100",
            raw.epsilon
        )));
    }
    let delta = parse("delta", &raw.delta)?;
    if cmp_exact(&delta, &ratio(0, 1)) != Ordering::Greater
        || cmp_exact(&delta, &ratio(1, 4)) != Ordering::Less
    {
        return Err(Error::InvalidInstance(format!(
            "delta = {} must satisfy 0 < delta < 1/4",
            raw.delta
        )));
    }
    let u = match &raw.u {
        None => DEFAULT_U,
        Some(s) => {
            let u = parse("u", s)?;
            if cmp_exact(&u, &ratio(0, 1)) != Ordering::Greater
                || cmp_exact(&u, &ratio(1, 14)) == Ordering::Greater
            {
                return Err(Error::InvalidInstance(format!("u = {s} must lie in (0, 1/14]")));
            }
            u.to_f64()
        }
    };

    let lambda_ratio = lambda_exact[0].ratio_status(&lambda_exact[1]);
    Ok(ProblemInstance {
        lambda: [0, 1, 2, 3].map(|i| lambda_exact[i].to_f64()),
        lambda_dd: [0, 1, 2, 3].map(|i| lambda_exact[i].to_dd()),
        lambda_exact,
        k: k_exact.to_f64(),
        k_exact,
        omega: omega_exact.to_f64(),
        omega_exact,
        epsilon: epsilon.to_f64(),
        delta: delta.to_f64(),
        u,
        lambda_ratio,
    })
}

impl ProblemInstance {
    pub fn summary(&self) -> InstanceSummary {
        InstanceSummary {
            lambda: [0, 1, 2, 3].map(|i| self.lambda_exact[i].to_string()),
            lambda_f64: self.lambda,
            k: self.k,
            omega: self.omega,
            epsilon: self.epsilon,
            delta: self.delta,
            u: self.u,
            lambda_ratio: self.lambda_ratio,
        }
    }

    pub fn max_abs_lambda(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    /// Exponents (2, 2, 2, k) of the four variables.
    pub fn exponents(&self) -> [f64; 4] {
        [2.0, 2.0, 2.0, self.k]
    }

    /// Exponent of η as a power of max pⱼ: `−(7−6k)/(14k) + ε`.
    pub fn eta_exponent(&self) -> f64 {
        -theorem_exponent(self.k) + self.epsilon
    }

    /// Per-quadruple tolerance `(max pⱼ)^{−(7−6k)/(14k)+ε}`.
    pub fn eta_for_max_prime(&self, max_p: f64) -> f64 {
        max_p.powf(self.eta_exponent())
    }

    /// Same, in paired-word precision.
    pub fn eta_for_max_prime_dd(&self, max_p: u64) -> Dd {
        let e = Dd::from_f64(self.epsilon) - theorem_exponent_dd(&self.k_exact);
        Dd::from_f64(max_p as f64).powd(e)
    }

    /// Exact rational `k` when the input was rational or decimal.
    pub fn k_rational(&self) -> Option<BigRational> {
        self.k_exact.as_rational().cloned()
    }
}

/// `(7 − 6k) / (14k)`, the theorem's saving exponent.
pub fn theorem_exponent(k: f64) -> f64 {
    (7.0 - 6.0 * k) / (14.0 * k)
}

fn theorem_exponent_dd(k: &ExactNumber) -> Dd {
    let k = k.to_dd();
    (Dd::from_f64(7.0) - k.mul_f64(6.0)) / k.mul_f64(14.0)
}

/// Exact `(7 − 6k) / (14k)` for rational `k`.
pub fn theorem_exponent_exact(k: &BigRational) -> BigRational {
    (ratio(7, 1) - ratio(6, 1) * k) / (ratio(14, 1) * k)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct WindowParams {
    pub x: f64,
    pub p: f64,
    pub r: f64,
    pub eta: f64,
    pub u: f64,
    /// Convergent denominator when the window came from one.
    pub q: Option<u64>,
    pub delta: f64,
    pub k: f64,
    pub epsilon: f64,
}

impl WindowParams {
    pub fn major_cutoff(&self) -> f64 {
        self.p / self.x
    }

    pub fn log_x(&self) -> f64 {
        self.x.ln()
    }

    /// `|q − X^{1−8u}|`, zero for u = 1/14.
    pub fn coupling_residual(&self) -> Option<f64> {
        self.q.map(|q| (q as f64 - self.x.powf(1.0 - 8.0 * self.u)).abs())
    }

    /// Replaces η and recomputes the trivial-arc cutoff from it.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidWindow(format!("eta must be positive, got {eta}")));
        }
        self.eta = eta;
        self.r = trivial_cutoff(self.x, self.k, eta);
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.u > 0.0 && self.u <= DEFAULT_U * (1.0 + 1e-15)) {
            return Err(Error::InvalidWindow(format!("u = {} outside (0, 1/14]", self.u)));
        }
        if let Some(q) = self.q {
            let want = (q as f64).powf(7.0 / 3.0);
            if ((self.x - want) / want).abs() > 1e-12 {
                return Err(Error::InvalidWindow(format!("X = {} is not q^(7/3) for q = {q}", self.x)));
            }
        }
        if self.p > self.x.powf(1.0 / 3.0 - self.epsilon) * (1.0 + 1e-12) {
            return Err(Error::InvalidWindow(format!("P = {} exceeds X^(1/3-eps)", self.p)));
        }
        if self.major_cutoff() >= self.r {
            return Err(Error::EmptyMinorArc {
                p_over_x: self.major_cutoff(),
                r: self.r,
            });
        }
        Ok(())
    }
}

/// `R = X^{1/2−1/(2k)} (log X)⁴ / η²`.
pub fn trivial_cutoff(x: f64, k: f64, eta: f64) -> f64 {
    x.powf(0.5 - 0.5 / k) * x.ln().powi(4) / (eta * eta)
}

/// X-form η: `X^{−(7−6k)/(14k)+ε}`.
pub fn eta_x_form(x: f64, k: f64, epsilon: f64) -> f64 {
    x.powf(-theorem_exponent(k) + epsilon)
}

fn check_u(u: f64) -> Result<()> {
    if !(u > 0.0 && u <= DEFAULT_U * (1.0 + 1e-15)) {
        return Err(Error::OutOfRange {
            what: "u",
            detail: format!("{u} not in (0, 1/14]"),
        });
    }
    Ok(())
}

/// Window at an arbitrary scale `X` (not tied to a convergent).
pub fn window_at_scale(instance: &ProblemInstance, x: f64, u: f64) -> Result<WindowParams> {
    check_u(u)?;
    if !(x > 1.0) {
        return Err(Error::OutOfRange {
            what: "X",
            detail: format!("{x} must exceed 1"),
        });
    }
    let eta = eta_x_form(x, instance.k, instance.epsilon);
    let w = WindowParams {
        x,
        p: x.powf(1.0 / 3.0 - instance.epsilon),
        r: trivial_cutoff(x, instance.k, eta),
        eta,
        u,
        q: None,
        delta: instance.delta,
        k: instance.k,
        epsilon: instance.epsilon,
    };
    w.check()?;
    Ok(w)
}

/// Window for convergent denominator `q`: `X = q^{7/3}`.
pub fn derive_window(instance: &ProblemInstance, q: u64, u: f64) -> Result<WindowParams> {
    if q < 2 {
        return Err(Error::OutOfRange {
            what: "q",
            detail: format!("{q} < 2"),
        });
    }
    check_u(u)?;
    let x = x_of_q_exact(q);
    let mut w = window_at_scale(instance, x, u)?;
    w.q = Some(q);
    w.check()?;
    Ok(w)
}

/// `X = q^{7/3}` evaluated exactly enough to certify the 1e-12 invariant.
pub fn x_of_q_exact(q: u64) -> f64 {
    let q7 = num_bigint::BigInt::from(q).pow(7);
    // X = cbrt(q^7); refine the f64 cube root with one Newton step in rationals.
    let guess = q7.to_f64().unwrap_or(f64::INFINITY).cbrt();
    let g = BigRational::from_float(guess).expect("finite");
    let q7r = BigRational::from_integer(q7);
    let three = BigRational::from_integer(3.into());
    let two = BigRational::from_integer(2.into());
    let refined = (&two * &g + &q7r / (&g * &g)) / three;
    debug_assert!(!refined.is_negative());
    refined.to_f64().unwrap_or(guess)
}
