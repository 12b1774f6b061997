//! Arc partition of ℝ, the integral I(η, ω, ·) per region, its brute-force
//! counterpart, the main-term volume and minor-arc level-set sampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::model::{ProblemInstance, WindowParams};
use crate::oscillatory::{
    e, eval_t_k_with_error, integration_step, kernel_k, kernel_khat, t_k_derivative_bound, PhaseSum,
};
use crate::prime_tables::PrimeTables;
use crate::quadrature::{gl8, CompensatedSum};
use crate::rational::{best_rational_test, RationalApproxWitness};
use crate::sieve_weight::SieveWeightTable;
use crate::{Error, Result};

/// Largest X accepted by the quadruple enumeration.
pub const DIRECT_SUM_MAX_X: f64 = 1e5;
/// Quadruple count above which the frequency-resolved tail bound is skipped.
pub const RESOLVED_TAIL_MAX_TERMS: f64 = 5e8;
/// Grid points allowed when choosing the truncation point automatically.
pub const MAX_GRID_POINTS: f64 = 4e8;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Major,
    Minor,
    Trivial,
    /// All of ℝ, truncated at the cutoff.
    Real,
}

impl std::str::FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "major" => Ok(Region::Major),
            "minor" => Ok(Region::Minor),
            "trivial" => Ok(Region::Trivial),
            "real" => Ok(Region::Real),
            _ => Err(Error::Parse {
                input: s.into(),
                reason: "expected major, minor, trivial or real".into(),
            }),
        }
    }
}

/// Major `|α| ≤ P/X`, minor `P/X < |α| ≤ R`, trivial `|α| > R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArcPartition {
    pub major_cutoff: f64,
    pub minor_cutoff: f64,
    pub window: WindowParams,
}

impl ArcPartition {
    pub fn region_of(&self, alpha: f64) -> Region {
        let a = alpha.abs();
        if a <= self.major_cutoff {
            Region::Major
        } else if a <= self.minor_cutoff {
            Region::Minor
        } else {
            Region::Trivial
        }
    }

    pub fn contains(&self, region: Region, alpha: f64) -> bool {
        region == Region::Real || self.region_of(alpha) == region
    }
}

pub fn partition(window: &WindowParams) -> Result<ArcPartition> {
    let major_cutoff = window.p / window.x;
    if major_cutoff >= window.r {
        return Err(Error::EmptyMinorArc {
            p_over_x: major_cutoff,
            r: window.r,
        });
    }
    Ok(ArcPartition {
        major_cutoff,
        minor_cutoff: window.r,
        window: *window,
    })
}

/// S̃₂(λ₁α)S₂(λ₂α)S₂(λ₃α)S_k(λ₄α)K_η(α)e(−ωα) with all four sums tabulated.
#[derive(Debug, Clone)]
pub struct ArcIntegrand {
    pub window: WindowParams,
    pub eta: f64,
    pub omega: Dd,
    pub lambda: [Dd; 4],
    /// Unscaled sums: sieve squares, prime squares twice, prime k-th powers.
    pub base: [PhaseSum; 4],
    scaled: Vec<PhaseSum>,
}

impl ArcIntegrand {
    pub fn new(instance: &ProblemInstance, window: &WindowParams, tables: &PrimeTables) -> Result<Self> {
        let weights = SieveWeightTable::build(window.x, window.delta, tables)?;
        let squares = PhaseSum::primes(2.0, window.x, window.delta, tables)?;
        let powers = PhaseSum::primes(instance.k, window.x, window.delta, tables)?;
        let base = [PhaseSum::sieve_squares(&weights), squares.clone(), squares, powers];
        Ok(Self::from_sums(instance, window, base))
    }

    pub fn from_sums(instance: &ProblemInstance, window: &WindowParams, base: [PhaseSum; 4]) -> Self {
        let lambda = instance.lambda_dd;
        let omega = Dd::from_f64(instance.omega);
        let mut scaled: Vec<PhaseSum> = base.iter().zip(lambda).map(|(s, l)| s.scaled(l)).collect();
        if instance.omega != 0.0 {
            scaled.push(PhaseSum {
                freqs: vec![-omega],
                weights: vec![1.0],
            });
        }
        ArcIntegrand {
            window: *window,
            eta: window.eta,
            omega,
            lambda,
            base,
            scaled,
        }
    }

    /// Pointwise value, used for spot checks and report grids.
    pub fn eval(&self, alpha: f64) -> Complex64 {
        let g: Complex64 = self.scaled.iter().map(|s| s.eval(alpha)).product();
        g * kernel_k(alpha, self.eta)
    }

    /// Bound on every |v| in the expansion Σ c_v e(vα) of the sum product.
    pub fn max_frequency(&self) -> f64 {
        self.scaled.iter().map(|s| s.max_abs_freq()).sum()
    }

    /// Bound on sup |Π sums|.
    pub fn sup_product(&self) -> f64 {
        self.base.iter().map(|s| s.abs_weight()).product()
    }

    pub fn term_count(&self) -> f64 {
        self.base.iter().map(|s| s.len() as f64).product()
    }

    fn triples(&self) -> Vec<(Dd, f64)> {
        let [s1, s2, s3, _] = &self.base;
        let [l1, l2, l3, _] = self.lambda;
        let mut out = Vec::with_capacity(s1.len() * s2.len() * s3.len());
        for (f1, w1) in s1.freqs.iter().zip(&s1.weights) {
            for (f2, w2) in s2.freqs.iter().zip(&s2.weights) {
                for (f3, w3) in s3.freqs.iter().zip(&s3.weights) {
                    let a = l1 * *f1 + l2 * *f2 + l3 * *f3 - self.omega;
                    out.push((a, w1 * w2 * w3));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// Per-frequency Abel bound over every quadruple.
    FrequencyResolved,
    /// sup |Π sums| · ∫ (πα)⁻².
    SupProduct,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralReport {
    pub tag: Region,
    pub value_re: f64,
    pub value_im: f64,
    pub err: f64,
    /// Proved bound on the discarded tail; trivial and real regions only.
    pub tail: Option<f64>,
    pub step: f64,
    pub cutoff: f64,
    pub points: u64,
}

impl IntegralReport {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArcIntegrals {
    pub major: IntegralReport,
    pub minor: IntegralReport,
    pub trivial: IntegralReport,
    pub real: IntegralReport,
    pub tail_method: TailMethod,
}

impl ArcIntegrals {
    pub fn get(&self, region: Region) -> &IntegralReport {
        match region {
            Region::Major => &self.major,
            Region::Minor => &self.minor,
            Region::Trivial => &self.trivial,
            Region::Real => &self.real,
        }
    }

    pub fn regions(&self) -> [&IntegralReport; 4] {
        [&self.major, &self.minor, &self.trivial, &self.real]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Doubled until the tail bound is under 1% of the major-arc value.
    Auto,
    Fixed(f64),
}

#[derive(Default, Clone, Copy)]
struct Buckets {
    fine: [Complex64; 3],
    coarse: [Complex64; 3],
    kernel_mass: f64,
}

impl Buckets {
    fn merge(mut self, other: &Buckets) -> Buckets {
        for i in 0..3 {
            self.fine[i] += other.fine[i];
            self.coarse[i] += other.coarse[i];
        }
        self.kernel_mass += other.kernel_mass;
        self
    }
}

fn region_index(r: Region) -> usize {
    match r {
        Region::Major => 0,
        Region::Minor => 1,
        _ => 2,
    }
}

/// Trapezoid sums h·Σ F(nh) for n in [lo, hi], bucketed by region, with
/// the ratio-2 subgrid (even n, weight 2h) alongside.
fn grid_sums(f: &ArcIntegrand, part: &ArcPartition, h: f64, lo: i64, hi: i64) -> Buckets {
    let hd = Dd::from_f64(h);
    let steps: Vec<Vec<Complex64>> = f
        .scaled
        .iter()
        .map(|s| s.freqs.iter().map(|&fr| e((fr * hd).frac_centered())).collect())
        .collect();
    let starts: Vec<i64> = (lo..=hi).step_by(CHUNK).collect();
    let parts: Vec<Buckets> = starts
        .par_iter()
        .map(|&n0| {
            let len = ((hi - n0 + 1) as usize).min(CHUNK);
            let mut prod = vec![Complex64::new(1.0, 0.0); len];
            let mut g = vec![Complex64::new(0.0, 0.0); len];
            for (s, step) in f.scaled.iter().zip(&steps) {
                g.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for ((&fr, &w), &r) in s.freqs.iter().zip(&s.weights).zip(step) {
                    // reseeded directly at each chunk start
                    let mut z = e((fr * hd).mul_f64(n0 as f64).frac_centered()) * w;
                    for v in g.iter_mut() {
                        *v += z;
                        z *= r;
                    }
                }
                for (p, v) in prod.iter_mut().zip(&g) {
                    *p *= v;
                }
            }
            let mut b = Buckets::default();
            for (i, p) in prod.iter().enumerate() {
                let n = n0 + i as i64;
                let alpha = n as f64 * h;
                let k = kernel_k(alpha, f.eta);
                let val = p * k * h;
                let r = region_index(part.region_of(alpha));
                b.fine[r] += val;
                if n % 2 == 0 {
                    b.coarse[r] += val * 2.0;
                }
                b.kernel_mass += k * h;
            }
            b
        })
        .collect();
    parts.iter().fold(Buckets::default(), |acc, b| acc.merge(b))
}

/// Histogram of Σ|c_v| over |v|, |v ± η| in geometric bins, for the tail bound.
struct FrequencyHistogram {
    bins: Vec<f64>,
    base: f64,
    ln_ratio: f64,
}

impl FrequencyHistogram {
    const BASE: f64 = 1e-9;
    const RATIO: f64 = 1.01;

    fn index(&self, u: f64, len: usize) -> usize {
        let a = u.abs();
        if a < self.base {
            0
        } else {
            (1 + ((a / self.base).ln() / self.ln_ratio) as usize).min(len - 1)
        }
    }

    fn lower_edge(&self, b: usize) -> f64 {
        if b == 0 {
            0.0
        } else {
            self.base * ((b - 1) as f64 * self.ln_ratio).exp()
        }
    }

    fn build(f: &ArcIntegrand) -> Self {
        let ln_ratio = Self::RATIO.ln();
        let top = f.max_frequency() + f.eta;
        let len = 2 + ((top / Self::BASE).ln() / ln_ratio).ceil() as usize;
        let shell = FrequencyHistogram {
            bins: Vec::new(),
            base: Self::BASE,
            ln_ratio,
        };
        let s4 = &f.base[3];
        let l4 = f.lambda[3].to_f64();
        let b4: Vec<f64> = s4.freqs.iter().map(|x| l4 * x.to_f64()).collect();
        let eta = f.eta;
        let parts: Vec<Vec<f64>> = f
            .triples()
            .par_chunks(64)
            .map(|chunk| {
                let mut h = vec![0.0; len];
                for &(a, c3) in chunk {
                    let a = a.to_f64();
                    for (b, w4) in b4.iter().zip(&s4.weights) {
                        let v = a + b;
                        let c = (c3 * w4).abs();
                        h[shell.index(v, len)] += c;
                        h[shell.index(v + eta, len)] += 0.5 * c;
                        h[shell.index(v - eta, len)] += 0.5 * c;
                    }
                }
                h
            })
            .collect();
        let mut bins = vec![0.0; len];
        for p in &parts {
            for (b, v) in bins.iter_mut().zip(p) {
                *b += v;
            }
        }
        FrequencyHistogram { bins, ..shell }
    }

    /// (1/π²) Σ_b H_b · B(u_b) with B the one-sided Abel bound for step h
    /// and first discarded abscissa `a1`.
    fn tail(&self, h: f64, a1: f64) -> f64 {
        let flat = 1.0 / a1 + h / (a1 * a1);
        let mut total = 0.0;
        for (b, &mass) in self.bins.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let u = self.lower_edge(b);
            let s = (PI * u * h).sin();
            let bound = if s > 0.0 { flat.min(h / (a1 * a1 * s)) } else { flat };
            total += mass * bound;
        }
        total / (PI * PI)
    }
}

enum TailBound {
    Resolved(FrequencyHistogram),
    Sup(f64),
}

impl TailBound {
    fn new(f: &ArcIntegrand, h: f64) -> Self {
        // monotonicity of |sin πuh| on the histogram needs |u|h ≤ 1/2
        let monotone = (f.max_frequency() + f.eta) * h <= 0.5;
        if monotone && f.term_count() <= RESOLVED_TAIL_MAX_TERMS {
            TailBound::Resolved(FrequencyHistogram::build(f))
        } else {
            TailBound::Sup(f.sup_product())
        }
    }

    /// Bound on h·Σ_{|n|>N} F(nh), both sides.
    fn at(&self, h: f64, n: i64) -> f64 {
        let a1 = (n + 1) as f64 * h;
        match self {
            TailBound::Resolved(hist) => hist.tail(h, a1),
            TailBound::Sup(sup) => sup * 2.0 * (1.0 / a1 + h / (a1 * a1)) / (PI * PI),
        }
    }

    fn method(&self) -> TailMethod {
        match self {
            TailBound::Resolved(_) => TailMethod::FrequencyResolved,
            TailBound::Sup(_) => TailMethod::SupProduct,
        }
    }
}

/// Integrates over every region at once on the uniform grid of step `h`.
///
/// The trapezoid sum over the full lattice hℤ equals the integral over ℝ
/// whenever 1/h exceeds every |v| + η, so only the truncation at the cutoff
/// and rounding separate the result from the exact value.
pub fn integrate_regions(f: &ArcIntegrand, part: &ArcPartition, step: f64, cutoff: Cutoff) -> Result<ArcIntegrals> {
    let x = f.window.x;
    let max_lambda = f.lambda.iter().map(|l| l.to_f64().abs()).fold(0.0, f64::max);
    let grade = integration_step(x, max_lambda);
    if !(step > 0.0 && step <= grade * (1.0 + 1e-12)) {
        return Err(Error::Grid(format!(
            "step {step} is coarser than the integration grade {grade}"
        )));
    }
    if 2.0 * step * (f.max_frequency() + f.eta) >= 1.0 {
        return Err(Error::Grid(format!("step {step} aliases frequencies up to {}", f.max_frequency())));
    }
    let tail = TailBound::new(f, step);
    let n_of = |a: f64| (a / step).floor() as i64;
    let n_max = match cutoff {
        Cutoff::Fixed(a) => {
            if !(a > 0.0) {
                return Err(Error::Grid(format!("cutoff {a} must be positive")));
            }
            n_of(a)
        }
        Cutoff::Auto => {
            let nm = n_of(part.major_cutoff);
            let major = grid_sums(f, part, step, -nm, nm).fine[0].norm();
            let cap = (MAX_GRID_POINTS / 2.0) as i64;
            let mut a = (4.0 / f.eta).max(2.0 * part.major_cutoff);
            let mut n = n_of(a).min(cap);
            while tail.at(step, n) > 0.01 * major && n < cap {
                a *= 2.0;
                n = n_of(a).min(cap);
            }
            n
        }
    };
    let sums = grid_sums(f, part, step, -n_max, n_max);
    let bound = tail.at(step, n_max);
    let cutoff_value = n_max as f64 * step;
    // rounding in the chunked rotations, relative to sup |Π sums| · ∫K
    let rounding = (f.scaled.len() * CHUNK) as f64 * f64::EPSILON * f.sup_product() * sums.kernel_mass;
    let points_in = |r: Region| -> u64 {
        let nm = n_of(part.major_cutoff).min(n_max);
        let nr = n_of(part.minor_cutoff).min(n_max);
        match r {
            Region::Major => (2 * nm + 1) as u64,
            Region::Minor => (2 * (nr - nm)) as u64,
            Region::Trivial => (2 * (n_max - nr)) as u64,
            Region::Real => (2 * n_max + 1) as u64,
        }
    };
    let report = |r: Region, fine: Complex64, coarse: Complex64, tail: Option<f64>| IntegralReport {
        tag: r,
        value_re: fine.re,
        value_im: fine.im,
        err: (fine - coarse).norm() + rounding,
        tail,
        step,
        cutoff: cutoff_value,
        points: points_in(r),
    };
    let real_fine: Complex64 = sums.fine.iter().sum();
    let real_coarse: Complex64 = sums.coarse.iter().sum();
    let out = ArcIntegrals {
        major: report(Region::Major, sums.fine[0], sums.coarse[0], None),
        minor: report(Region::Minor, sums.fine[1], sums.coarse[1], None),
        trivial: report(Region::Trivial, sums.fine[2], sums.coarse[2], Some(bound)),
        real: report(Region::Real, real_fine, real_coarse, Some(bound)),
        tail_method: tail.method(),
    };
    let scale = out.real.value_re.abs();
    if bound > 0.1 * scale {
        return Err(Error::Accuracy {
            achieved: bound / scale,
            target: 0.1,
        });
    }
    Ok(out)
}

/// One region of [`integrate_regions`].
pub fn integrate_i(f: &ArcIntegrand, part: &ArcPartition, region: Region, step: f64) -> Result<IntegralReport> {
    Ok(integrate_regions(f, part, step, Cutoff::Auto)?.get(region).clone())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DirectSum {
    pub value: f64,
    /// Quadruples with K̂ > 0 and ρ(m₁) = 1.
    pub positive_terms: u64,
}

/// Σ ρ(m₁) log p₂ log p₃ log p₄ · K̂_η(λ₁m₁² + λ₂p₂² + λ₃p₃² + λ₄p₄^k − ω).
pub fn direct_sum_i(f: &ArcIntegrand) -> Result<DirectSum> {
    if f.window.x > DIRECT_SUM_MAX_X {
        return Err(Error::Budget(format!(
            "quadruple enumeration limited to X <= {DIRECT_SUM_MAX_X}, got {}",
            f.window.x
        )));
    }
    let s4 = &f.base[3];
    let l4 = f.lambda[3];
    let mut fourth: Vec<(f64, Dd, f64)> = s4
        .freqs
        .iter()
        .zip(&s4.weights)
        .map(|(&fr, &w)| {
            let b = l4 * fr;
            (b.to_f64(), b, w)
        })
        .collect();
    fourth.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eta = f.eta;
    let mut value = CompensatedSum::new();
    let mut positive_terms = 0u64;
    for (a, c3) in f.triples() {
        let af = a.to_f64();
        let margin = eta + 1e-9 * (1.0 + af.abs());
        let lo = fourth.partition_point(|t| t.0 < -af - margin);
        for &(bf, b, w4) in &fourth[lo..] {
            if bf > -af + margin {
                break;
            }
            let k = kernel_khat((a + b).to_f64(), eta);
            if k > 0.0 {
                value.add(c3 * w4 * k);
                if c3 > 0.0 {
                    positive_terms += 1;
                }
            }
        }
    }
    Ok(DirectSum {
        value: value.value(),
        positive_terms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MainTermVolume {
    pub value: f64,
    pub mc_error: f64,
    pub samples: usize,
    pub hits: usize,
    pub note: Option<String>,
}

/// ∫ over `[s_lo, s_hi]` of max(0, η − |c + λ s|)·(1/k)s^{1/k−1} ds, the
/// t₄-integral after substituting s = t₄^k.
fn inner_volume(c: f64, lambda: f64, eta: f64, k: f64, s_lo: f64, s_hi: f64) -> f64 {
    let centre = -c / lambda;
    let half = eta / lambda.abs();
    let gl = gl8();
    let weight = |s: f64| s.powf(1.0 / k - 1.0) / k;
    let mut total = 0.0;
    for (a, b) in [(centre - half, centre), (centre, centre + half)] {
        let (a, b) = (a.max(s_lo), b.min(s_hi));
        if b <= a {
            continue;
        }
        let (mid, rad) = (0.5 * (a + b), 0.5 * (b - a));
        for (t, w) in gl.0.iter().zip(&gl.1) {
            let s = mid + rad * t;
            total += rad * w * (eta - (c + lambda * s).abs()).max(0.0) * weight(s);
        }
    }
    total
}

struct VolumeDomain {
    lo: f64,
    hi: f64,
    s_lo: f64,
    s_hi: f64,
    lambda: [f64; 4],
    omega: f64,
    eta: f64,
    k: f64,
}

impl VolumeDomain {
    fn new(instance: &ProblemInstance, window: &WindowParams) -> Result<Self> {
        if instance.lambda[3] == 0.0 {
            return Err(Error::InvalidInstance("lambda_4 must be nonzero".into()));
        }
        Ok(VolumeDomain {
            lo: (window.delta * window.x).sqrt(),
            hi: window.x.sqrt(),
            s_lo: window.delta * window.x,
            s_hi: window.x,
            lambda: instance.lambda,
            omega: instance.omega,
            eta: window.eta,
            k: instance.k,
        })
    }

    fn inner(&self, t1: f64, t2: f64, t3: f64) -> f64 {
        let [l1, l2, l3, l4] = self.lambda;
        let c = l1 * t1 * t1 + l2 * t2 * t2 + l3 * t3 * t3 - self.omega;
        inner_volume(c, l4, self.eta, self.k, self.s_lo, self.s_hi)
    }
}

/// Monte Carlo over t₁, t₂, t₃ with the t₄-integral done exactly per sample.
pub fn main_term_volume(
    instance: &ProblemInstance,
    window: &WindowParams,
    samples: usize,
    seed: u64,
) -> Result<MainTermVolume> {
    if samples < 10_000 {
        return Err(Error::OutOfRange {
            what: "samples",
            detail: format!("{samples} < 10000"),
        });
    }
    let dom = VolumeDomain::new(instance, window)?;
    let blocks: Vec<usize> = (0..samples.div_ceil(CHUNK)).collect();
    let parts: Vec<(f64, f64, usize)> = blocks
        .par_iter()
        .map(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = (samples - b * CHUNK).min(CHUNK);
            let (mut s, mut s2, mut hits) = (0.0, 0.0, 0);
            for _ in 0..n {
                let t: [f64; 3] = std::array::from_fn(|_| rng.gen_range(dom.lo..dom.hi));
                let v = dom.inner(t[0], t[1], t[2]);
                s += v;
                s2 += v * v;
                hits += usize::from(v > 0.0);
            }
            (s, s2, hits)
        })
        .collect();
    let (s, s2, hits) = parts
        .iter()
        .fold((0.0, 0.0, 0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    let n = samples as f64;
    let vol = (dom.hi - dom.lo).powi(3);
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    let note = (hits == 0).then(|| {
        "no sample reached the support of the kernel; 0 is only a lower bound".to_string()
    });
    Ok(MainTermVolume {
        value: vol * mean,
        mc_error: vol * (var / n).sqrt(),
        samples,
        hits,
        note,
    })
}

/// Nested composite Gauss–Legendre over t₁, t₂, t₃ of the same exact t₄-integral.
pub fn nested_volume(instance: &ProblemInstance, window: &WindowParams, panels: usize) -> Result<f64> {
    let dom = VolumeDomain::new(instance, window)?;
    let gl = gl8();
    let width = (dom.hi - dom.lo) / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let mid = dom.lo + (p as f64 + 0.5) * width;
            gl.0
                .iter()
                .zip(&gl.1)
                .map(move |(t, w)| (mid + 0.5 * width * t, 0.5 * width * w))
        })
        .collect();
    let total: f64 = nodes
        .par_iter()
        .map(|&(t1, w1)| {
            let mut acc = 0.0;
            for &(t2, w2) in &nodes {
                for &(t3, w3) in &nodes {
                    acc += w2 * w3 * dom.inner(t1, t2, t3);
                }
            }
            w1 * acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}

/// T₂(λ₁α)T₂(λ₂α)T₂(λ₃α)T_k(λ₄α)K_η(α)e(−ωα) with its quadrature error.
pub fn t_product(instance: &ProblemInstance, window: &WindowParams, alpha: f64) -> Result<(Complex64, f64)> {
    let mut value = Complex64::new(1.0, 0.0);
    let mut rel = 0.0;
    for (j, &l) in instance.lambda.iter().enumerate() {
        let k = if j == 3 { instance.k } else { 2.0 };
        let (t, err) = eval_t_k_with_error(l * alpha, k, window.x, window.delta)?;
        value *= t;
        rel += err / t.norm().max(f64::MIN_POSITIVE);
    }
    let w = kernel_k(alpha, window.eta) * e(-instance.omega * alpha);
    Ok((value * w, (value * w).norm() * rel))
}

/// sup-type bound on |t_product| from the first-derivative estimates.
pub fn t_product_bound(instance: &ProblemInstance, window: &WindowParams, alpha: f64) -> f64 {
    let mut b = 1.0;
    for (j, &l) in instance.lambda.iter().enumerate() {
        let k = if j == 3 { instance.k } else { 2.0 };
        b *= t_k_derivative_bound(l * alpha, k, window.x, window.delta);
    }
    let eta = window.eta;
    let kernel = if alpha == 0.0 {
        eta * eta
    } else {
        (eta * eta).min(1.0 / (PI * alpha).powi(2))
    };
    b * kernel
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TProductSplit {
    /// ∫ over the major arc (real by conjugate symmetry).
    pub major: f64,
    pub major_err: f64,
    /// Upper bound on ∫_{|α| > P/X} |T-product|.
    pub outside_bound: f64,
}

fn t_major_integral(instance: &ProblemInstance, window: &WindowParams, panels: usize) -> Result<(f64, f64)> {
    let cut = window.p / window.x;
    let gl = gl8();
    let width = cut / panels as f64;
    let pieces: Vec<Result<(f64, f64)>> = (0..panels)
        .into_par_iter()
        .map(|p| {
            let mid = (p as f64 + 0.5) * width;
            let mut v = 0.0;
            let mut err = 0.0;
            for (t, w) in gl.0.iter().zip(&gl.1) {
                let (val, e_val) = t_product(instance, window, mid + 0.5 * width * t)?;
                v += 0.5 * width * w * val.re;
                err += 0.5 * width * w * e_val;
            }
            Ok((v, err))
        })
        .collect();
    let mut v = 0.0;
    let mut err = 0.0;
    for p in pieces {
        let (a, b) = p?;
        v += a;
        err += b;
    }
    Ok((2.0 * v, 2.0 * err))
}

/// Major-arc value of the T-product and a bound on the rest of ℝ.
pub fn t_product_split(instance: &ProblemInstance, window: &WindowParams) -> Result<TProductSplit> {
    let cut = window.p / window.x;
    let lmax = instance.lambda.iter().map(|l| l.abs()).sum::<f64>();
    // panels no wider than a quarter period of the fastest phase
    let panels = ((cut * window.x * lmax * 4.0).ceil() as usize).max(16);
    let (fine, e_fine) = t_major_integral(instance, window, panels)?;
    let (coarse, _) = t_major_integral(instance, window, panels / 2)?;
    // the bound is nonincreasing in |α|: left-endpoint sums on a geometric grid
    let ratio: f64 = 1.001;
    let mut a = cut;
    let mut outside = 0.0;
    let stop = cut * 1e8;
    while a < stop {
        let next = a * ratio;
        outside += (next - a) * t_product_bound(instance, window, a);
        a = next;
    }
    // beyond `stop` the bound decays at least like α⁻², so ∫ ≤ f(stop)·stop
    outside += t_product_bound(instance, window, a) * a;
    Ok(TProductSplit {
        major: fine,
        major_err: (fine - coarse).abs() + e_fine,
        outside_bound: 2.0 * outside,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSetHit {
    pub alpha: f64,
    pub s1_abs: f64,
    pub s2_abs: f64,
    pub witness1: Option<RationalApproxWitness>,
    pub witness2: Option<RationalApproxWitness>,
}

impl LevelSetHit {
    /// Both witnesses found and both numerators nonzero.
    pub fn witnessed(&self) -> bool {
        matches!((&self.witness1, &self.witness2), (Some(a), Some(b)) if a.a != 0 && b.a != 0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSetReport {
    pub z1: f64,
    pub z2: f64,
    pub y: f64,
    pub samples: usize,
    pub hit_count: usize,
    /// Hit fraction times the band length y.
    pub measure: f64,
    pub lemma_bound: f64,
    pub ratio: f64,
    pub hits: Vec<LevelSetHit>,
}

/// Samples α uniformly on [y, 2y] and estimates the measure of
/// {Z₁ < |S̃₂(λ₁α)| ≤ 2Z₁, Z₂ < |S̃₂(λ₂α)| ≤ 2Z₂}.
pub fn level_set_diagnostic(
    f: &ArcIntegrand,
    part: &ArcPartition,
    (z1, z2): (f64, f64),
    y: f64,
    samples: usize,
    seed: u64,
    witness_constant: f64,
) -> Result<LevelSetReport> {
    let w = &f.window;
    if samples < 1000 {
        return Err(Error::OutOfRange {
            what: "samples",
            detail: format!("{samples} < 1000"),
        });
    }
    let z_min = w.x.powf(0.5 - w.u + w.epsilon);
    if z1 < z_min || z2 < z_min {
        return Err(Error::OutOfRange {
            what: "Z",
            detail: format!("Z1 = {z1}, Z2 = {z2} must be at least X^(1/2-u+eps) = {z_min}"),
        });
    }
    if y < part.major_cutoff || 2.0 * y > part.minor_cutoff {
        return Err(Error::OutOfRange {
            what: "y",
            detail: format!(
                "band [{y}, {}] not inside the minor arc [{}, {}]",
                2.0 * y,
                part.major_cutoff,
                part.minor_cutoff
            ),
        });
    }
    let sieve = &f.base[0];
    let s1 = sieve.scaled(f.lambda[0]);
    let s2 = sieve.scaled(f.lambda[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas: Vec<f64> = (0..samples).map(|_| rng.gen_range(y..2.0 * y)).collect();
    let vals: Vec<(f64, f64, f64)> = alphas
        .par_iter()
        .map(|&a| (a, s1.eval(a).norm(), s2.eval(a).norm()))
        .collect();
    let l1 = f.lambda[0].to_f64();
    let l2 = f.lambda[1].to_f64();
    let mut hits = Vec::new();
    for (a, v1, v2) in vals {
        if z1 < v1 && v1 <= 2.0 * z1 && z2 < v2 && v2 <= 2.0 * z2 {
            hits.push(LevelSetHit {
                alpha: a,
                s1_abs: v1,
                s2_abs: v2,
                witness1: best_rational_test(l1 * a, z1, w.x, w.epsilon, witness_constant)?,
                witness2: best_rational_test(l2 * a, z2, w.x, w.epsilon, witness_constant)?,
            });
        }
    }
    let measure = hits.len() as f64 / samples as f64 * y;
    let lemma_bound = y * w.x.powf(2.0 + 8.0 * w.u + 3.0 * w.epsilon) * z1.powi(-4) * z2.powi(-4);
    Ok(LevelSetReport {
        z1,
        z2,
        y,
        samples,
        hit_count: hits.len(),
        measure,
        lemma_bound,
        ratio: measure / lemma_bound,
        hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, window_at_scale, RawConfig, DEFAULT_U};
    use crate::prime_tables::build_tables;

    fn instance(k: &str, delta: &str) -> ProblemInstance {
        let mut raw = RawConfig::default_instance();
        raw.k = k.into();
        raw.delta = delta.into();
        validate_instance(&raw).unwrap()
    }

    #[test]
    fn partition_endpoints() {
        let inst = instance("21/20", "1/10");
        let w = window_at_scale(&inst, 1e6, DEFAULT_U).unwrap();
        let p = partition(&w).unwrap();
        let want = 1e6f64.powf(-2.0 / 3.0 - inst.epsilon);
        assert!((p.major_cutoff - want).abs() <= 1e-12 * want);
        let r = 1e6f64.powf(0.5 - 0.5 / inst.k) * 1e6f64.ln().powi(4) / (w.eta * w.eta);
        assert!((p.minor_cutoff - r).abs() <= 1e-12 * r);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-2.0 * r..2.0 * r);
            let inside = [Region::Major, Region::Minor, Region::Trivial]
                .iter()
                .filter(|&&g| p.contains(g, a))
                .count();
            assert_eq!(inside, 1);
        }
    }

    #[test]
    fn empty_minor_arc_is_rejected() {
        let inst = instance("21/20", "1/10");
        let mut w = window_at_scale(&inst, 1e6, DEFAULT_U).unwrap();
        w.r = w.p / w.x;
        assert!(matches!(partition(&w), Err(Error::EmptyMinorArc { .. })));
    }

    #[test]
    fn inner_volume_matches_quadrature() {
        let (c, l, eta, k) = (-1500.3, 1.0, 2.0, 1.1);
        let got = inner_volume(c, l, eta, k, 1000.0, 10000.0);
        let n = 200_000;
        let (a, b) = (1490.0, 1510.0);
        let h = (b - a) / n as f64;
        let mid: f64 = (0..n)
            .map(|i| {
                let s = a + (i as f64 + 0.5) * h;
                (eta - (c + l * s).abs()).max(0.0) * s.powf(1.0 / k - 1.0) / k * h
            })
            .sum();
        assert!((got - mid).abs() < 1e-7 * mid, "{got} vs {mid}");
        // support partly outside [s_lo, s_hi]
        let edge = inner_volume(-1000.5, 1.0, 2.0, 1.1, 1000.0, 10000.0);
        assert!(edge > 0.0 && edge < got);
        assert_eq!(inner_volume(5.0, 1.0, 1.0, 1.1, 1000.0, 10000.0), 0.0);
    }

    #[test]
    fn positive_coefficients_give_zero_volume() {
        // validation rejects same-sign coefficients, so flip them afterwards
        let mut inst = instance("21/20", "1/10");
        inst.lambda[2] = 1.0;
        inst.lambda[3] = 1.0;
        let w = window_at_scale(&inst, 1e4, DEFAULT_U).unwrap().with_eta(1.0).unwrap();
        let v = main_term_volume(&inst, &w, 10_000, 1).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.note.is_some());
    }

    #[test]
    fn direct_sum_small_cases() {
        let inst = instance("11/10", "1/10");
        let tables = build_tables(1000, 1000).unwrap();
        let w = window_at_scale(&inst, 400.0, DEFAULT_U).unwrap().with_eta(5.0).unwrap();
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        let d = direct_sum_i(&f).unwrap();
        assert!(d.value > 0.0);
        let log_x = 400f64.ln();
        assert!(d.value <= f.eta * log_x.powi(3) * d.positive_terms as f64);

        // brute force over every quadruple
        let mut brute = 0.0;
        let [s1, s2, s3, s4] = &f.base;
        for (a, wa) in s1.freqs.iter().zip(&s1.weights) {
            for (b, wb) in s2.freqs.iter().zip(&s2.weights) {
                for (c, wc) in s3.freqs.iter().zip(&s3.weights) {
                    for (d4, wd) in s4.freqs.iter().zip(&s4.weights) {
                        let l = inst.lambda;
                        let v = l[0] * a.to_f64() + l[1] * b.to_f64() + l[2] * c.to_f64() + l[3] * d4.to_f64();
                        brute += wa * wb * wc * wd * kernel_khat(v, f.eta);
                    }
                }
            }
        }
        assert!((brute - d.value).abs() <= 1e-9 * brute);

        // η above every |form value|: K̂ = η − |v| for all terms
        // R is meaningless at this η, so the window is built directly
        let wide = WindowParams { eta: 1e6, ..w };
        let f = ArcIntegrand::new(&inst, &wide, &tables).unwrap();
        let d = direct_sum_i(&f).unwrap();
        let mut expect = 0.0;
        let [s1, s2, s3, s4] = &f.base;
        for (a, wa) in s1.freqs.iter().zip(&s1.weights) {
            for (b, wb) in s2.freqs.iter().zip(&s2.weights) {
                for (c, wc) in s3.freqs.iter().zip(&s3.weights) {
                    for (d4, wd) in s4.freqs.iter().zip(&s4.weights) {
                        let l = inst.lambda;
                        let v = l[0] * a.to_f64() + l[1] * b.to_f64() + l[2] * c.to_f64() + l[3] * d4.to_f64();
                        expect += wa * wb * wc * wd * (1e6 - v.abs());
                    }
                }
            }
        }
        assert!((expect - d.value).abs() <= 1e-9 * expect.abs());
    }

    #[test]
    fn empty_window_sums_to_zero() {
        let inst = instance("11/10", "1/10");
        let tables = build_tables(1000, 1000).unwrap();
        // no prime square below X = 3
        let base = window_at_scale(&inst, 400.0, DEFAULT_U).unwrap();
        let w = WindowParams { x: 3.0, ..base };
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        assert!(f.base[1].is_empty());
        assert_eq!(direct_sum_i(&f).unwrap().value, 0.0);
    }

    #[test]
    fn parseval_at_tiny_scale() {
        let inst = instance("11/10", "1/10");
        let tables = build_tables(1000, 1000).unwrap();
        let w = window_at_scale(&inst, 400.0, DEFAULT_U).unwrap().with_eta(1.0).unwrap();
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        let part = partition(&w).unwrap();
        let step = integration_step(w.x, inst.max_abs_lambda());
        let r = integrate_regions(&f, &part, step, Cutoff::Auto).unwrap();
        let direct = direct_sum_i(&f).unwrap().value;
        let real = &r.real;
        let gap = (real.value_re - direct).abs();
        let allowed = real.err + real.tail.unwrap();
        assert!(gap <= allowed, "gap {gap} allowed {allowed}");
        assert!(real.value_im.abs() <= real.err);
        // regions add up to the whole line
        let sum: Complex64 = [&r.major, &r.minor, &r.trivial].iter().map(|x| x.value()).sum();
        let errs = r.major.err + r.minor.err + r.trivial.err;
        assert!((sum - real.value()).norm() <= errs);
        assert_eq!(r.tail_method, TailMethod::FrequencyResolved);
    }

    #[test]
    fn small_eta_shrinks_the_integral() {
        let inst = instance("11/10", "1/10");
        let tables = build_tables(1000, 1000).unwrap();
        let w = window_at_scale(&inst, 400.0, DEFAULT_U).unwrap().with_eta(1e-6).unwrap();
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        let d = direct_sum_i(&f).unwrap();
        let count_bound = f.base.iter().map(|s| s.abs_weight()).product::<f64>();
        assert!(d.value.abs() <= 1e-6 * count_bound);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let inst = instance("11/10", "1/10");
        let tables = build_tables(1000, 1000).unwrap();
        let w = window_at_scale(&inst, 400.0, DEFAULT_U).unwrap().with_eta(1.0).unwrap();
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        let part = partition(&w).unwrap();
        let step = 2.0 * integration_step(w.x, inst.max_abs_lambda());
        assert!(matches!(
            integrate_regions(&f, &part, step, Cutoff::Auto),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn level_set_preconditions() {
        let inst = instance("21/20", "1/10");
        let tables = build_tables(200_000, 2000).unwrap();
        let w = window_at_scale(&inst, 1e5, DEFAULT_U).unwrap();
        let f = ArcIntegrand::new(&inst, &w, &tables).unwrap();
        let part = partition(&w).unwrap();
        let z = 1e5f64.powf(0.5 - DEFAULT_U + 2.0 * inst.epsilon);
        let y = 10.0 * part.major_cutoff;
        assert!(level_set_diagnostic(&f, &part, (z, z), y, 999, 1, 1.0).is_err());
        assert!(level_set_diagnostic(&f, &part, (1.0, z), y, 1000, 1, 1.0).is_err());
        assert!(level_set_diagnostic(&f, &part, (z, z), part.major_cutoff / 2.0, 1000, 1, 1.0).is_err());
        // maximal Z = X^(1/2) is above Σ|ρ|, so nothing can hit
        let zmax = 1e5f64.sqrt();
        assert!(zmax > f.base[0].abs_weight());
        let r = level_set_diagnostic(&f, &part, (zmax, zmax), y, 1000, 1, 1.0).unwrap();
        assert_eq!(r.hit_count, 0);
        assert!(r.measure <= r.lemma_bound);
    }
}
