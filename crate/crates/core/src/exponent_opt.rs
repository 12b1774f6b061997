//! Exact parametric linear programs in a handful of exponent variables.
//!
//! Variables are optimized for each value of a single parameter `x`; the
//! optimum is returned as affine functions of `x` on maximal intervals.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::exact::ExactNumber;
use crate::{Error, Result};

pub const MAX_VARIABLES: usize = 4;
pub const MAX_CONSTRAINTS: usize = 8;

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Artificial box used to detect unboundedness.
fn big() -> BigRational {
    rat(1_000_000, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// `Σ coeffs[j]·v_j + param_coeff·x (sense) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub id: String,
    pub coeffs: Vec<BigRational>,
    pub param_coeff: BigRational,
    pub sense: Sense,
    pub rhs: BigRational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentProgram {
    pub variables: Vec<String>,
    pub parameter: String,
    /// Index of the variable to maximize.
    pub objective: usize,
    pub constraints: Vec<Constraint>,
}

/// `constant + slope·x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Affine {
    pub constant: BigRational,
    pub slope: BigRational,
}

impl Affine {
    pub fn constant(c: BigRational) -> Self {
        Affine {
            constant: c,
            slope: BigRational::zero(),
        }
    }

    pub fn at(&self, x: &BigRational) -> BigRational {
        &self.constant + &self.slope * x
    }

    pub fn is_constant(&self) -> bool {
        self.slope.is_zero()
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.slope.is_zero()
    }

    /// Same form written in `k = 1/x`, e.g. `(7-6k)/(14k)` for `x/2 - 3/7`.
    pub fn in_reciprocal(&self, name: &str) -> String {
        // c + s/k = (c k + s)/k, cleared of denominators
        let lcm = num_integer::lcm(self.constant.denom().clone(), self.slope.denom().clone());
        let c = (&self.constant * BigRational::from_integer(lcm.clone())).to_integer();
        let s = (&self.slope * BigRational::from_integer(lcm.clone())).to_integer();
        let numer = match (s.is_zero(), c.is_zero()) {
            (_, true) => format!("{s}"),
            (true, false) => format!("{c}{name}"),
            (false, false) => {
                if c.is_negative() {
                    format!("{s}-{}{name}", -c)
                } else {
                    format!("{s}+{c}{name}")
                }
            }
        };
        if lcm.is_one() {
            format!("({numer})/{name}")
        } else {
            format!("({numer})/({lcm}{name})")
        }
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let term = |r: &BigRational| {
            if r.is_one() {
                "x".to_string()
            } else if r.denom().is_one() {
                format!("{}*x", r.numer())
            } else if r.numer().is_one() {
                format!("x/{}", r.denom())
            } else {
                format!("{}*x/{}", r.numer(), r.denom())
            }
        };
        match (self.slope.is_zero(), self.constant.is_zero()) {
            (true, _) => write!(f, "{}", self.constant),
            (false, true) => {
                if self.slope.is_negative() {
                    write!(f, "-{}", term(&-self.slope.clone()))
                } else {
                    write!(f, "{}", term(&self.slope))
                }
            }
            (false, false) => {
                let head = if self.slope.is_negative() {
                    format!("-{}", term(&-self.slope.clone()))
                } else {
                    term(&self.slope)
                };
                if self.constant.is_negative() {
                    write!(f, "{head} - {}", -self.constant.clone())
                } else {
                    write!(f, "{head} + {}", self.constant)
                }
            }
        }
    }
}

impl Serialize for Affine {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPiece {
    /// Parameter interval, `None` meaning unbounded on that side.
    #[serde(serialize_with = "ser_opt_rat")]
    pub x_lo: Option<BigRational>,
    #[serde(serialize_with = "ser_opt_rat")]
    pub x_hi: Option<BigRational>,
    pub values: Vec<Affine>,
    pub objective: Affine,
}

fn ser_opt_rat<S: serde::Serializer>(v: &Option<BigRational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentSolution {
    pub variables: Vec<String>,
    pub pieces: Vec<SolutionPiece>,
}

impl ExponentSolution {
    pub fn variable(&self, piece: usize, name: &str) -> Option<&Affine> {
        let i = self.variables.iter().position(|v| v == name)?;
        self.pieces.get(piece).map(|p| &p.values[i])
    }

    /// Overall feasibility interval of the parameter.
    pub fn x_interval(&self) -> (Option<BigRational>, Option<BigRational>) {
        let lo = self.pieces.first().and_then(|p| p.x_lo.clone());
        let hi = self.pieces.last().and_then(|p| p.x_hi.clone());
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintStatus {
    pub id: String,
    pub binding: bool,
    /// Slack as a function of x on the piece (zero when binding).
    pub slack: Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BindingReport {
    pub piece: usize,
    pub constraints: Vec<ConstraintStatus>,
}

impl BindingReport {
    pub fn binding_ids(&self) -> Vec<&str> {
        self.constraints
            .iter()
            .filter(|c| c.binding)
            .map(|c| c.id.as_str())
            .collect()
    }

    pub fn status(&self, id: &str) -> Option<&ConstraintStatus> {
        self.constraints.iter().find(|c| c.id == id)
    }
}

/// Row in `a·v ≤ b − c·x` form.
#[derive(Debug, Clone)]
struct Row {
    a: Vec<BigRational>,
    b: BigRational,
    c: BigRational,
    artificial: bool,
}

impl Constraint {
    fn row(&self) -> Row {
        let flip = |r: &BigRational| match self.sense {
            Sense::Le => r.clone(),
            Sense::Ge => -r.clone(),
        };
        Row {
            a: self.coeffs.iter().map(flip).collect(),
            b: flip(&self.rhs),
            c: flip(&self.param_coeff),
            artificial: false,
        }
    }
}

impl Row {
    /// Slack b − c x − a·v(x) as an affine function of x.
    fn slack(&self, vertex: &[Affine]) -> Affine {
        let mut constant = self.b.clone();
        let mut slope = -self.c.clone();
        for (aj, v) in self.a.iter().zip(vertex) {
            constant -= aj * &v.constant;
            slope -= aj * &v.slope;
        }
        Affine { constant, slope }
    }
}

/// Solve A v = r0 + r1 x exactly; `None` when singular.
fn solve_affine(a: &[Vec<BigRational>], r0: &[BigRational], r1: &[BigRational]) -> Option<Vec<Affine>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            let mut row = a[i].clone();
            row.push(r0[i].clone());
            row.push(r1[i].clone());
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col].clone();
        for j in col..n + 2 {
            m[col][j] = &m[col][j] / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for j in col..n + 2 {
                    let t = &f * &m[col][j];
                    m[r][j] -= t;
                }
            }
        }
    }
    Some(
        (0..n)
            .map(|i| Affine {
                constant: m[i][n].clone(),
                slope: m[i][n + 1].clone(),
            })
            .collect(),
    )
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Interval of x (within ±big) on which every slack is nonnegative.
fn feasible_interval(slacks: &[Affine]) -> Option<(BigRational, BigRational)> {
    let mut lo = -big();
    let mut hi = big();
    for s in slacks {
        // constant + slope x ≥ 0
        if s.slope.is_zero() {
            if s.constant.is_negative() {
                return None;
            }
        } else {
            let root = -&s.constant / &s.slope;
            if s.slope.is_positive() {
                lo = lo.max(root);
            } else {
                hi = hi.min(root);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

struct Vertex {
    values: Vec<Affine>,
    lo: BigRational,
    hi: BigRational,
}

impl ExponentProgram {
    /// The closing system in (x; w, u): maximize w subject to x ≤ 1, w ≥ 0,
    /// u ≤ 1/14, −w ≥ 1/2 − x/2 − u and −w ≥ 1/4 − x/2 + 2u.
    pub fn default_system() -> Self {
        let c = |id: &str, w: i64, u: i64, x: BigRational, sense: Sense, rhs: BigRational| Constraint {
            id: id.to_string(),
            coeffs: vec![rat(w, 1), rat(u, 1)],
            param_coeff: x,
            sense,
            rhs,
        };
        ExponentProgram {
            variables: vec!["w".into(), "u".into()],
            parameter: "x".into(),
            objective: 0,
            constraints: vec![
                c("x_le_1", 0, 0, rat(1, 1), Sense::Le, rat(1, 1)),
                c("w_nonneg", 1, 0, rat(0, 1), Sense::Ge, rat(0, 1)),
                c("u_le_1_14", 0, 1, rat(0, 1), Sense::Le, rat(1, 14)),
                // −w + u + x/2 ≥ 1/2
                c("minor_arc", -1, 1, rat(1, 2), Sense::Ge, rat(1, 2)),
                // −w − 2u + x/2 ≥ 1/4
                c("level_set", -1, -2, rat(1, 2), Sense::Ge, rat(1, 4)),
            ],
        }
    }

    /// Adds `var = value` as a pair of inequalities.
    pub fn with_pinned(&self, var: &str, value: BigRational) -> Result<Self> {
        let idx = self
            .variables
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| Error::Infeasible(format!("unknown variable {var}")))?;
        let mut p = self.clone();
        let mut coeffs = vec![BigRational::zero(); self.variables.len()];
        coeffs[idx] = BigRational::one();
        for (sense, tag) in [(Sense::Le, "le"), (Sense::Ge, "ge")] {
            p.constraints.push(Constraint {
                id: format!("pin_{var}_{tag}"),
                coeffs: coeffs.clone(),
                param_coeff: BigRational::zero(),
                sense,
                rhs: value.clone(),
            });
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        if n == 0 || n > MAX_VARIABLES {
            return Err(Error::Infeasible(format!("{n} variables; 1..={MAX_VARIABLES} supported")));
        }
        if self.constraints.len() > MAX_CONSTRAINTS + 2 {
            return Err(Error::Infeasible(format!(
                "{} constraints; at most {MAX_CONSTRAINTS} supported",
                self.constraints.len()
            )));
        }
        if self.objective >= n {
            return Err(Error::Infeasible("objective index out of range".into()));
        }
        if self.constraints.iter().any(|c| c.coeffs.len() != n) {
            return Err(Error::Infeasible("constraint width differs from variable count".into()));
        }
        Ok(())
    }

    fn rows(&self) -> Vec<Row> {
        let n = self.variables.len();
        let mut rows: Vec<Row> = self.constraints.iter().map(Constraint::row).collect();
        for j in 0..n {
            for sign in [1, -1] {
                let mut a = vec![BigRational::zero(); n];
                a[j] = rat(sign, 1);
                rows.push(Row {
                    a,
                    b: big(),
                    c: BigRational::zero(),
                    artificial: true,
                });
            }
        }
        rows
    }

    fn vertices(&self, rows: &[Row]) -> Vec<Vertex> {
        let n = self.variables.len();
        let mut out: Vec<Vertex> = Vec::new();
        for combo in combinations(rows.len(), n) {
            let a: Vec<Vec<BigRational>> = combo.iter().map(|&i| rows[i].a.clone()).collect();
            let r0: Vec<BigRational> = combo.iter().map(|&i| rows[i].b.clone()).collect();
            let r1: Vec<BigRational> = combo.iter().map(|&i| -rows[i].c.clone()).collect();
            let Some(values) = solve_affine(&a, &r0, &r1) else {
                continue;
            };
            let slacks: Vec<Affine> = rows.iter().map(|r| r.slack(&values)).collect();
            if let Some((lo, hi)) = feasible_interval(&slacks) {
                if !out.iter().any(|v| v.values == values) {
                    out.push(Vertex { values, lo, hi });
                }
            }
        }
        out
    }

    /// Exact parametric optimum by vertex enumeration.
    pub fn solve(&self) -> Result<ExponentSolution> {
        self.validate()?;
        let rows = self.rows();
        let verts = self.vertices(&rows);
        if verts.is_empty() {
            return Err(Error::Infeasible("no feasible point for any parameter value".into()));
        }
        let obj = self.objective;
        let mut points: Vec<BigRational> = Vec::new();
        for v in &verts {
            points.push(v.lo.clone());
            points.push(v.hi.clone());
        }
        for (i, a) in verts.iter().enumerate() {
            for b in &verts[i + 1..] {
                let ds = &a.values[obj].slope - &b.values[obj].slope;
                if !ds.is_zero() {
                    points.push((&b.values[obj].constant - &a.values[obj].constant) / ds);
                }
            }
        }
        let (gmin, gmax) = (
            verts.iter().map(|v| v.lo.clone()).min().expect("nonempty"),
            verts.iter().map(|v| v.hi.clone()).max().expect("nonempty"),
        );
        points.retain(|p| *p >= gmin && *p <= gmax);
        points.sort();
        points.dedup();

        let best_at = |x: &BigRational| -> Option<usize> {
            let mut best: Option<usize> = None;
            for (i, v) in verts.iter().enumerate() {
                if v.lo <= *x && *x <= v.hi {
                    let val = v.values[obj].at(x);
                    // ties go to the vertex valid on the widest interval
                    let better = best.map_or(true, |b| {
                        let bv = verts[b].values[obj].at(x);
                        val > bv || (val == bv && &v.hi - &v.lo > &verts[b].hi - &verts[b].lo)
                    });
                    if better {
                        best = Some(i);
                    }
                }
            }
            best
        };

        let mut raw: Vec<(BigRational, BigRational, usize)> = Vec::new();
        if points.len() == 1 {
            if let Some(i) = best_at(&points[0]) {
                raw.push((points[0].clone(), points[0].clone(), i));
            }
        }
        for w in points.windows(2) {
            let mid = (&w[0] + &w[1]) / rat(2, 1);
            if let Some(i) = best_at(&mid) {
                raw.push((w[0].clone(), w[1].clone(), i));
            }
        }
        let mut pieces: Vec<(BigRational, BigRational, usize)> = Vec::new();
        for (lo, hi, i) in raw {
            if let Some(last) = pieces.last_mut() {
                if last.1 == lo && verts[last.2].values == verts[i].values {
                    last.1 = hi;
                    continue;
                }
            }
            pieces.push((lo, hi, i));
        }
        if pieces.is_empty() {
            return Err(Error::Infeasible("feasible set has no interior in the parameter".into()));
        }
        let limit = big();
        let mut out = Vec::new();
        for (lo, hi, i) in pieces {
            let v = &verts[i];
            let mid = (&lo + &hi) / rat(2, 1);
            if v.values.iter().any(|a| a.at(&mid).abs() >= limit) {
                return Err(Error::Unbounded(format!(
                    "objective {} grows without bound",
                    self.variables[obj]
                )));
            }
            out.push(SolutionPiece {
                x_lo: (lo > -limit.clone()).then_some(lo),
                x_hi: (hi < limit).then_some(hi),
                objective: v.values[obj].clone(),
                values: v.values.clone(),
            });
        }
        Ok(ExponentSolution {
            variables: self.variables.clone(),
            pieces: out,
        })
    }

    /// Active and slack constraints on one piece of the solution.
    pub fn binding_analysis(&self, solution: &ExponentSolution, piece: usize) -> Result<BindingReport> {
        let p = solution
            .pieces
            .get(piece)
            .ok_or_else(|| Error::Infeasible(format!("no piece {piece}")))?;
        let rows = self.rows();
        let constraints = self
            .constraints
            .iter()
            .zip(&rows)
            .filter(|(_, r)| !r.artificial)
            .map(|(c, r)| {
                let slack = r.slack(&p.values);
                ConstraintStatus {
                    id: c.id.clone(),
                    binding: slack.is_zero(),
                    slack,
                }
            })
            .collect();
        Ok(BindingReport { piece, constraints })
    }

    /// Substitutes every piece back into every constraint at both interval ends.
    pub fn verify(&self, solution: &ExponentSolution) -> bool {
        let rows = self.rows();
        solution.pieces.iter().all(|p| {
            rows.iter().filter(|r| !r.artificial).all(|r| {
                let s = r.slack(&p.values);
                // an affine slack is nonnegative on an interval iff it is at
                // each finite end and does not decrease toward an open end
                let lo_ok = match &p.x_lo {
                    Some(x) => !s.at(x).is_negative(),
                    None => !s.slope.is_positive(),
                };
                let hi_ok = match &p.x_hi {
                    Some(x) => !s.at(x).is_negative(),
                    None => !s.slope.is_negative(),
                };
                let free_ok = p.x_lo.is_some() || p.x_hi.is_some() || !s.constant.is_negative();
                lo_ok && hi_ok && free_ok
            })
        })
    }
}

/// JSON program file: `{"variables": [...], "parameter": "x", "objective": "w",
/// "constraints": [{"id", "coeffs": {name: "p/q"}, "sense": "<=", "rhs": "p/q"}]}`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramFile {
    pub variables: Vec<String>,
    #[serde(default = "default_parameter")]
    pub parameter: String,
    pub objective: String,
    pub constraints: Vec<ConstraintFile>,
}

fn default_parameter() -> String {
    "x".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    pub id: String,
    pub coeffs: BTreeMap<String, String>,
    pub sense: Sense,
    pub rhs: String,
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let n: ExactNumber = s.parse()?;
    match n {
        ExactNumber::Rational(r) => Ok(r),
        ExactNumber::Decimal { value, .. } => Ok(value),
        ExactNumber::Surd { .. } => Err(Error::Parse {
            input: s.into(),
            reason: "program coefficients must be rational".into(),
        }),
    }
}

impl ProgramFile {
    pub fn into_program(self) -> Result<ExponentProgram> {
        let objective = self
            .variables
            .iter()
            .position(|v| *v == self.objective)
            .ok_or_else(|| Error::Infeasible(format!("objective {} is not a variable", self.objective)))?;
        let mut constraints = Vec::new();
        for c in self.constraints {
            let mut coeffs = vec![BigRational::zero(); self.variables.len()];
            let mut param_coeff = BigRational::zero();
            for (name, value) in &c.coeffs {
                let v = parse_rational(value)?;
                if *name == self.parameter {
                    param_coeff = v;
                } else if let Some(i) = self.variables.iter().position(|x| x == name) {
                    coeffs[i] = v;
                } else {
                    return Err(Error::Infeasible(format!("constraint {} names unknown {name}", c.id)));
                }
            }
            constraints.push(Constraint {
                id: c.id,
                coeffs,
                param_coeff,
                sense: c.sense,
                rhs: parse_rational(&c.rhs)?,
            });
        }
        let p = ExponentProgram {
            variables: self.variables,
            parameter: self.parameter,
            objective,
            constraints,
        };
        p.validate()?;
        Ok(p)
    }
}
