//! Prime quadruples with |λ₁p₁² + λ₂p₂² + λ₃p₃² + λ₄p₄^k − ω| ≤ (max pⱼ)^{−w(k)+ε}.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::model::{eta_x_form, ProblemInstance};
use crate::oscillatory::power_dd;
use crate::prime_tables::{is_prime_u64, PrimeTables};
use crate::{Error, Result};

/// Work units allowed by default: pair-list entries plus streamed (p₃, p₄) pairs.
pub const DEFAULT_BUDGET: u64 = 10_000_000_000;
/// Largest X accepted by [`brute_force_solutions`].
pub const BRUTE_FORCE_MAX_X: f64 = 1e5;
const ROW_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub p1: u64,
    pub p2: u64,
    pub p3: u64,
    pub p4: u64,
    #[serde(rename = "value")]
    pub form_value: f64,
    pub residual: f64,
    #[serde(rename = "eta")]
    pub eta_used: f64,
}

impl SolutionRecord {
    pub fn key(&self) -> (u64, u64, u64, u64) {
        (self.p4, self.p3, self.p2, self.p1)
    }

    pub fn max_prime(&self) -> u64 {
        self.p1.max(self.p2).max(self.p3).max(self.p4)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub square_primes: usize,
    pub power_primes: usize,
    pub pair_count: u64,
    /// (p₃, p₄) pairs scanned against the pair list.
    pub streamed: u64,
    /// Pair-list entries inside the η_max band that were checked exactly.
    pub candidates: u64,
    pub work: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    #[serde(rename = "X")]
    pub x: f64,
    pub count: u64,
    pub predicted_order: f64,
    pub complete: bool,
    pub eta_max: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub k: f64,
    pub lambda: [f64; 4],
    pub omega: f64,
    pub stats: SearchStats,
}

/// The prime lists of 𝒫(X): δX < p² < X and δX < p^k < X.
struct Window {
    squares: Vec<u64>,
    powers: Vec<u64>,
    power_values: Vec<Dd>,
}

impl Window {
    fn new(instance: &ProblemInstance, x: f64, tables: &PrimeTables) -> Result<Self> {
        let lo = instance.delta * x;
        tables.require(x.sqrt())?;
        tables.require(x.powf(1.0 / instance.k))?;
        let squares: Vec<u64> = tables
            .primes
            .iter()
            .map(|&p| p as u64)
            .take_while(|&p| ((p * p) as f64) < x)
            .filter(|&p| ((p * p) as f64) > lo)
            .collect();
        let mut powers = Vec::new();
        let mut power_values = Vec::new();
        for i in tables.prime_range(lo.powf(1.0 / instance.k).floor(), x.powf(1.0 / instance.k).ceil()) {
            let p = tables.primes[i] as u64;
            let v = power_dd(p, instance.k);
            if v > Dd::from_f64(lo) && v < Dd::from_f64(x) {
                powers.push(p);
                power_values.push(v);
            }
        }
        Ok(Window {
            squares,
            powers,
            power_values,
        })
    }

    fn is_empty(&self) -> bool {
        self.squares.is_empty() || self.powers.is_empty()
    }

    /// Largest per-quadruple η anywhere in the window.
    fn eta_max(&self, instance: &ProblemInstance) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let least_max = self.squares[0].max(self.powers[0]) as f64;
        let most = *self.squares.last().unwrap().max(self.powers.last().unwrap()) as f64;
        // η is monotone in max p; take the larger end for either sign of the exponent
        instance.eta_for_max_prime(least_max).max(instance.eta_for_max_prime(most)) * (1.0 + 1e-12)
    }
}

fn omega_dd(instance: &ProblemInstance) -> Dd {
    instance.omega_exact.to_dd()
}

/// Exact check of one quadruple; `None` when it is not a solution.
fn check_quadruple(instance: &ProblemInstance, omega: Dd, p: [u64; 4], p4_power: Dd) -> Option<SolutionRecord> {
    let l = instance.lambda_dd;
    let sq = |q: u64| Dd::from_u128(q as u128 * q as u128);
    let form = l[0] * sq(p[0]) + l[1] * sq(p[1]) + l[2] * sq(p[2]) + l[3] * p4_power - omega;
    let max_p = p.iter().copied().max().unwrap_or(0);
    // cheap rejection; the paired-word η only decides near the boundary
    if form.abs().to_f64() > instance.eta_for_max_prime(max_p as f64) * (1.0 + 1e-9) {
        return None;
    }
    let eta = instance.eta_for_max_prime_dd(max_p);
    // closed inequality: ties count as solutions
    (form.abs() <= eta).then(|| SolutionRecord {
        p1: p[0],
        p2: p[1],
        p3: p[2],
        p4: p[3],
        form_value: form.to_f64(),
        residual: form.abs().to_f64(),
        eta_used: eta.to_f64(),
    })
}

/// `η·X^{1/k+1/2}/(log X)⁴` with the X-form η; order of magnitude only.
pub fn predicted_count(instance: &ProblemInstance, x: f64) -> f64 {
    let eta = eta_x_form(x, instance.k, instance.epsilon);
    eta * x.powf(1.0 / instance.k + 0.5) / x.ln().powi(4)
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub records: Vec<SolutionRecord>,
    pub summary: SearchSummary,
}

fn summary(instance: &ProblemInstance, x: f64, eta_max: f64, stats: SearchStats, count: u64, complete: bool) -> SearchSummary {
    SearchSummary {
        x,
        count,
        predicted_order: predicted_count(instance, x),
        complete,
        eta_max,
        delta: instance.delta,
        epsilon: instance.epsilon,
        k: instance.k,
        lambda: instance.lambda,
        omega: instance.omega,
        stats,
    }
}

/// Meet-in-the-middle search: sorted λ₁p₁² + λ₂p₂² list, streamed (p₃, p₄).
///
/// Rows of p₄ are consumed in increasing order until the budget runs out,
/// so a truncated run is a deterministic prefix of the full one.
pub fn enumerate_solutions(instance: &ProblemInstance, x: f64, budget: u64, tables: &PrimeTables) -> Result<SearchOutcome> {
    if !(x > 1.0) {
        return Err(Error::OutOfRange {
            what: "X",
            detail: format!("{x} must exceed 1"),
        });
    }
    let win = Window::new(instance, x, tables)?;
    let eta_max = win.eta_max(instance);
    let mut stats = SearchStats {
        square_primes: win.squares.len(),
        power_primes: win.powers.len(),
        budget,
        ..Default::default()
    };
    if win.is_empty() {
        return Ok(SearchOutcome {
            records: Vec::new(),
            summary: summary(instance, x, eta_max, stats, 0, true),
        });
    }
    let n = win.squares.len();
    stats.pair_count = (n * n) as u64;
    if stats.pair_count > budget {
        stats.work = 0;
        return Ok(SearchOutcome {
            records: Vec::new(),
            summary: summary(instance, x, eta_max, stats, 0, false),
        });
    }
    let l = instance.lambda;
    let sq: Vec<f64> = win.squares.iter().map(|&p| (p * p) as f64).collect();
    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push((l[0] * sq[i] + l[1] * sq[j], i as u32, j as u32));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let row_cost = n as u64;
    let rows = (((budget - stats.pair_count) / row_cost) as usize).min(win.powers.len());
    let complete = rows == win.powers.len();
    let omega = omega_dd(instance);
    let scale = l.iter().map(|v| v.abs()).sum::<f64>() * x + instance.omega.abs();
    let margin = eta_max + 64.0 * f64::EPSILON * scale;

    let blocks: Vec<usize> = (0..rows).step_by(ROW_BLOCK).collect();
    let found: Vec<(Vec<SolutionRecord>, u64)> = blocks
        .par_iter()
        .map(|&start| {
            let mut out = Vec::new();
            let mut candidates = 0u64;
            for r in start..(start + ROW_BLOCK).min(rows) {
                let p4 = win.powers[r];
                let b = win.power_values[r];
                let b_f = b.to_f64();
                for (i3, &p3) in win.squares.iter().enumerate() {
                    let target = instance.omega - l[2] * sq[i3] - l[3] * b_f;
                    let lo = pairs.partition_point(|t| t.0 < target - margin);
                    for &(v, i1, i2) in &pairs[lo..] {
                        if v > target + margin {
                            break;
                        }
                        candidates += 1;
                        let quad = [win.squares[i1 as usize], win.squares[i2 as usize], p3, p4];
                        if let Some(rec) = check_quadruple(instance, omega, quad, b) {
                            out.push(rec);
                        }
                    }
                }
            }
            (out, candidates)
        })
        .collect();
    let mut records = Vec::new();
    for (recs, c) in found {
        records.extend(recs);
        stats.candidates += c;
    }
    records.sort_by_key(SolutionRecord::key);
    records.dedup_by_key(|r| r.key());
    stats.streamed = rows as u64 * row_cost;
    stats.work = stats.pair_count + stats.streamed;
    let count = records.len() as u64;
    Ok(SearchOutcome {
        records,
        summary: summary(instance, x, eta_max, stats, count, complete),
    })
}

/// Every quadruple of 𝒫(X) checked directly; the oracle for small X.
pub fn brute_force_solutions(instance: &ProblemInstance, x: f64, tables: &PrimeTables) -> Result<Vec<SolutionRecord>> {
    if x > BRUTE_FORCE_MAX_X {
        return Err(Error::Budget(format!("brute force limited to X <= {BRUTE_FORCE_MAX_X}")));
    }
    let win = Window::new(instance, x, tables)?;
    let omega = omega_dd(instance);
    let mut out = Vec::new();
    for (&p4, &b) in win.powers.iter().zip(&win.power_values) {
        for &p3 in &win.squares {
            for &p2 in &win.squares {
                for &p1 in &win.squares {
                    if let Some(r) = check_quadruple(instance, omega, [p1, p2, p3, p4], b) {
                        out.push(r);
                    }
                }
            }
        }
    }
    out.sort_by_key(SolutionRecord::key);
    Ok(out)
}

/// Independent recheck: primality, window membership and the inequality.
pub fn verify_record(instance: &ProblemInstance, x: f64, rec: &SolutionRecord) -> bool {
    let primes = [rec.p1, rec.p2, rec.p3, rec.p4].iter().all(|&p| is_prime_u64(p));
    let lo = instance.delta * x;
    let in_window = [rec.p1, rec.p2, rec.p3].iter().all(|&p| {
        let s = (p * p) as f64;
        lo < s && s < x
    }) && {
        let v = power_dd(rec.p4, instance.k);
        v > Dd::from_f64(lo) && v < Dd::from_f64(x)
    };
    let again = check_quadruple(
        instance,
        omega_dd(instance),
        [rec.p1, rec.p2, rec.p3, rec.p4],
        power_dd(rec.p4, instance.k),
    );
    primes && in_window && again.is_some_and(|r| r.residual <= r.eta_used)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedWindow {
    #[serde(rename = "X")]
    pub x: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub summaries: Vec<SearchSummary>,
    pub skipped: Vec<SkippedWindow>,
    /// Windows at or above the floor with no solution.
    pub failures: Vec<f64>,
    /// Heuristic trend flag, not a theorem.
    pub nondecreasing: bool,
}

/// Searches each window; those below `floor` or with empty 𝒫(X) are skipped.
pub fn window_sweep(
    instance: &ProblemInstance,
    windows: &[f64],
    budget: u64,
    floor: f64,
    tables: &PrimeTables,
) -> Result<SweepReport> {
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for &x in windows {
        if x < floor {
            skipped.push(SkippedWindow {
                x,
                reason: format!("below the floor {floor}"),
            });
            continue;
        }
        let win = Window::new(instance, x, tables)?;
        if win.is_empty() {
            skipped.push(SkippedWindow {
                x,
                reason: "no prime quadruples in the window".into(),
            });
            continue;
        }
        let out = enumerate_solutions(instance, x, budget, tables)?;
        if out.summary.count == 0 {
            failures.push(x);
        }
        summaries.push(out.summary);
    }
    let nondecreasing = summaries.windows(2).all(|w| w[0].count <= w[1].count);
    Ok(SweepReport {
        summaries,
        skipped,
        failures,
        nondecreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_instance, RawConfig};
    use crate::prime_tables::build_tables;

    fn default() -> ProblemInstance {
        validate_instance(&RawConfig::default_instance()).unwrap()
    }

    #[test]
    fn planted_solution_is_found() {
        let tables = build_tables(20_000, 100).unwrap();
        let x = 1e4;
        let mut inst = default();
        // with k near 1 no single prime has both p² and p^k in the window,
        // so p₄ is planted separately
        let p = tables.primes.iter().map(|&p| p as u64).find(|&p| (p * p) as f64 > 0.1 * x).unwrap();
        let q = tables
            .primes
            .iter()
            .map(|&p| p as u64)
            .find(|&q| power_dd(q, inst.k).to_f64() > 0.1 * x)
            .unwrap();
        let sq = Dd::from_u128((p * p) as u128);
        let l = inst.lambda_dd;
        let omega = l[0] * sq + l[1] * sq + l[2] * sq + l[3] * power_dd(q, inst.k);
        inst.omega = omega.to_f64();
        let exact = num_rational::BigRational::from_float(omega.hi).unwrap()
            + num_rational::BigRational::from_float(omega.lo).unwrap();
        inst.omega_exact = crate::exact::ExactNumber::Rational(exact);
        let out = enumerate_solutions(&inst, x, DEFAULT_BUDGET, &tables).unwrap();
        let hit = out.records.iter().find(|r| (r.p1, r.p2, r.p3, r.p4) == (p, p, p, q)).unwrap();
        assert!(hit.residual <= 1e-20, "{}", hit.residual);
    }

    #[test]
    fn matches_brute_force_at_1e4() {
        let tables = build_tables(20_000, 100).unwrap();
        let inst = default();
        let out = enumerate_solutions(&inst, 1e4, DEFAULT_BUDGET, &tables).unwrap();
        let brute = brute_force_solutions(&inst, 1e4, &tables).unwrap();
        assert_eq!(out.records, brute);
        assert!(out.summary.complete);
        assert!(out.records.iter().all(|r| verify_record(&inst, 1e4, r)));
        let keys: Vec<_> = out.records.iter().map(SolutionRecord::key).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn tiny_window_is_empty() {
        let tables = build_tables(100, 10).unwrap();
        let out = enumerate_solutions(&default(), 3.0, DEFAULT_BUDGET, &tables).unwrap();
        assert_eq!(out.summary.count, 0);
        assert!(out.summary.complete);
    }

    #[test]
    fn budget_zero_and_prefix() {
        let tables = build_tables(20_000, 100).unwrap();
        let inst = default();
        let none = enumerate_solutions(&inst, 1e4, 0, &tables).unwrap();
        assert!(!none.summary.complete);
        assert!(none.records.is_empty());
        let full = enumerate_solutions(&inst, 1e4, DEFAULT_BUDGET, &tables).unwrap();
        let half_budget = full.summary.stats.work / 2;
        let part = enumerate_solutions(&inst, 1e4, half_budget, &tables).unwrap();
        assert!(!part.summary.complete);
        assert!(part.summary.stats.work <= half_budget);
        assert!(part.records.iter().all(|r| full.records.contains(r)));
    }

    #[test]
    fn prediction_scales_by_formula() {
        let inst = default();
        let x = 1e6;
        let ratio = predicted_count(&inst, 2.0 * x) / predicted_count(&inst, x);
        let eta_ratio = eta_x_form(2.0 * x, inst.k, inst.epsilon) / eta_x_form(x, inst.k, inst.epsilon);
        let want = 2f64.powf(1.0 / inst.k + 0.5) * eta_ratio * (x.ln() / (2.0 * x).ln()).powi(4);
        assert!((ratio - want).abs() < 1e-12 * want);
    }

    #[test]
    fn sweep_skips_below_floor() {
        let tables = build_tables(20_000, 100).unwrap();
        let inst = default();
        let xs: Vec<f64> = [2u64, 5, 12].iter().map(|&q| crate::model::x_of_q_exact(q)).collect();
        let r = window_sweep(&inst, &xs, DEFAULT_BUDGET, 1e4, &tables).unwrap();
        assert_eq!(r.skipped.len(), 3);
        assert!(r.summaries.is_empty());
        let r = window_sweep(&inst, &[], 0, 1e4, &tables).unwrap();
        assert!(r.failures.is_empty());
    }
}
