//! Lower-bound sieve weight ρ(m) built from ψ(m, z) and the piecewise z(p).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prime_tables::PrimeTables;
use crate::{Error, Result};

const CHUNK: usize = 4096;

/// 1 iff every prime factor of `m` is at least `z`; ψ(1, z) = 1.
pub fn psi(m: u64, z: f64, tables: &PrimeTables) -> u8 {
    if m <= 1 {
        return 1;
    }
    (tables.smallest_factor(m) as f64 >= z) as u8
}

pub fn z_of_p(p: f64, x: f64) -> f64 {
    let lx = x.ln();
    if p < (lx / 7.0).exp() {
        (lx * 5.0 / 28.0).exp() / p.sqrt()
    } else if p <= (lx * 3.0 / 14.0).exp() {
        p
    } else {
        (lx * 5.0 / 14.0).exp() / p
    }
}

/// Sieve thresholds X^{5/42} and X^{1/4}.
#[derive(Debug, Clone, Copy)]
struct Thresholds {
    x: f64,
    lower: f64,
    upper: f64,
}

impl Thresholds {
    fn new(x: f64) -> Self {
        let lx = x.ln();
        Thresholds {
            x,
            lower: (lx * 5.0 / 42.0).exp(),
            upper: (lx / 4.0).exp(),
        }
    }

    fn rho(&self, m: u64, tables: &PrimeTables) -> i32 {
        let factors = tables.distinct_factors(m);
        let mut value = match factors.first() {
            Some(&p) => (p as f64 >= self.lower) as i32,
            None => 1,
        };
        for &p in &factors {
            let pf = p as f64;
            if pf < self.lower {
                continue;
            }
            if pf >= self.upper {
                break;
            }
            value -= psi(m / p, z_of_p(pf, self.x), tables) as i32;
        }
        value
    }
}

/// Largest integer m with m² ≤ y.
pub fn isqrt_floor(y: f64) -> u64 {
    let mut r = y.max(0.0).sqrt() as u64;
    while (r as f64 + 1.0).powi(2) <= y {
        r += 1;
    }
    while r > 0 && (r as f64).powi(2) > y {
        r -= 1;
    }
    r
}

/// Smallest integer m with m² ≥ y.
pub fn isqrt_ceil(y: f64) -> u64 {
    let f = isqrt_floor(y);
    if (f as f64).powi(2) >= y {
        f
    } else {
        f + 1
    }
}

fn check_tables(tables: &PrimeTables, m_hi: u64) -> Result<()> {
    let covered = tables.spf_limit as u64 >= m_hi || (tables.limit as f64).powi(2) >= m_hi as f64;
    if covered {
        Ok(())
    } else {
        Err(Error::TableTooSmall {
            needed: (m_hi as f64).sqrt(),
            have: tables.limit as f64,
        })
    }
}

/// ρ(m) at scale X with the subtracted sum restricted to primes dividing m.
pub fn rho(m: u64, x: f64, tables: &PrimeTables) -> Result<i32> {
    let m_hi = isqrt_floor(x);
    if m == 0 || m > m_hi {
        return Err(Error::OutOfRange {
            what: "m",
            detail: format!("{m} not in [1, {m_hi}]"),
        });
    }
    check_tables(tables, m)?;
    Ok(Thresholds::new(x).rho(m, tables))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SieveWeightTable {
    pub x: f64,
    pub delta: f64,
    pub m_lo: u64,
    pub m_hi: u64,
    pub rho: Vec<i8>,
    pub ell_hat: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SieveSummary {
    #[serde(rename = "X")]
    pub x: f64,
    pub m_lo: u64,
    pub m_hi: u64,
    pub sum_rho: i64,
    pub ell_hat: f64,
}

impl SieveWeightTable {
    /// ρ(m) for every m in [⌈√(δX)⌉, ⌊√X⌋].
    pub fn build(x: f64, delta: f64, tables: &PrimeTables) -> Result<Self> {
        if !(x > 1.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::OutOfRange {
                what: "weight table scale",
                detail: format!("X={x}, delta={delta}"),
            });
        }
        let m_lo = isqrt_ceil(delta * x).max(1);
        let m_hi = isqrt_floor(x);
        check_tables(tables, m_hi)?;
        let th = Thresholds::new(x);
        let ms: Vec<u64> = (m_lo..=m_hi).collect();
        let rho: Vec<i8> = ms
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| chunk.iter().map(|&m| th.rho(m, tables) as i8).collect::<Vec<_>>())
            .collect();
        let mut table = SieveWeightTable {
            x,
            delta,
            m_lo,
            m_hi,
            rho,
            ell_hat: 0.0,
        };
        if m_hi >= m_lo {
            table.ell_hat = table.interval_sum(m_lo, m_hi)?.1;
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn get(&self, m: u64) -> Option<i32> {
        if m < self.m_lo || m > self.m_hi {
            return None;
        }
        Some(self.rho[(m - self.m_lo) as usize] as i32)
    }

    /// (m, ρ(m)) pairs with ρ(m) ≠ 0.
    pub fn support(&self) -> impl Iterator<Item = (u64, i32)> + '_ {
        self.rho
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != 0)
            .map(move |(i, &r)| (self.m_lo + i as u64, r as i32))
    }

    pub fn sum(&self) -> i64 {
        self.rho.iter().map(|&r| r as i64).sum()
    }

    pub fn abs_sum(&self) -> i64 {
        self.rho.iter().map(|&r| (r as i64).abs()).sum()
    }

    /// (Σ_{m∈[lo,hi]} ρ(m), that sum · log X / |I|).
    pub fn interval_sum(&self, lo: u64, hi: u64) -> Result<(f64, f64)> {
        if hi < lo {
            return Err(Error::OutOfRange {
                what: "interval",
                detail: format!("empty interval [{lo}, {hi}]"),
            });
        }
        if lo < self.m_lo || hi > self.m_hi {
            return Err(Error::OutOfRange {
                what: "interval",
                detail: format!("[{lo}, {hi}] not inside [{}, {}]", self.m_lo, self.m_hi),
            });
        }
        let a = (lo - self.m_lo) as usize;
        let b = (hi - self.m_lo) as usize;
        let sum: i64 = self.rho[a..=b].iter().map(|&r| r as i64).sum();
        let len = (hi - lo + 1) as f64;
        Ok((sum as f64, sum as f64 * self.x.ln() / len))
    }

    pub fn summary(&self) -> SieveSummary {
        SieveSummary {
            x: self.x,
            m_lo: self.m_lo,
            m_hi: self.m_hi,
            sum_rho: self.sum(),
            ell_hat: self.ell_hat,
        }
    }
}

pub fn rho_interval_sum(lo: u64, hi: u64, table: &SieveWeightTable) -> Result<(f64, f64)> {
    table.interval_sum(lo, hi)
}
