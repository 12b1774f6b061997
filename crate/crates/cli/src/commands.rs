use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use dhlab_core::arcs::{
    direct_sum_i, integrate_regions, level_set_diagnostic, partition, ArcIntegrand, Cutoff, DIRECT_SUM_MAX_X,
};
use dhlab_core::exponent_opt::{Affine, ExponentProgram, ExponentSolution, ProgramFile};
use dhlab_core::oscillatory::{eval_t_k, integration_step, AlphaGrid, PhaseSum, SumKind};
use dhlab_core::rational::{plan_windows, ratio_convergents};
use dhlab_core::search::{enumerate_solutions, window_sweep};
use dhlab_core::sieve_weight::SieveWeightTable;

use crate::args::*;
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::input::{self, exact, int_value, number, number_dd, prime_limit, read_text, Env};
use crate::manifest::Run;
use crate::{report, verify};

pub fn dispatch(cmd: &Command, env: &Env) -> CliResult<i32> {
    match cmd {
        Command::Cf(a) => cf(a),
        Command::Plan(a) => plan(a),
        Command::Weights(a) => weights(a, env),
        Command::Expsum(a) => expsum(a, env),
        Command::Arcs(a) => arcs(a, env),
        Command::Levelset(a) => levelset(a, env),
        Command::Optimize(a) => optimize(a),
        Command::Search(a) => search(a, env),
        Command::Verify(a) => verify::run(a, env),
        Command::Report(a) => report::run(a),
    }
}

/// JSON goes to `out` when given, stdout otherwise.
fn emit_json(run: &Run, out: Option<&std::path::Path>, value: Value) -> CliResult<()> {
    match out {
        Some(path) => run.write_json(path, value),
        None => {
            run.print(value);
            Ok(())
        }
    }
}

fn with_schema(schema: &str, value: impl Serialize) -> Value {
    let mut v = serde_json::to_value(value).expect("serializable");
    if let Value::Object(map) = &mut v {
        map.insert("schema".into(), schema.into());
    }
    v
}

fn cf(a: &CfArgs) -> CliResult<i32> {
    let l1 = exact("lambda1", &a.lambda1)?;
    let l2 = exact("lambda2", &a.lambda2)?;
    let convergents = ratio_convergents(&l1, &l2, a.count)?;
    let list: Vec<Value> = convergents
        .iter()
        .map(|c| json!({"a": int_value(c.a), "q": int_value(c.q as i128)}))
        .collect();
    let run = Run::new("cf", None, None, json!({"lambda1": a.lambda1, "lambda2": a.lambda2, "count": a.count}));
    emit_json(&run, a.out.as_deref(), Value::Array(list))?;
    run.finish()?;
    Ok(EXIT_OK)
}

fn plan(a: &PlanArgs) -> CliResult<i32> {
    let (cfg, inst) = input::instance(&a.config)?;
    let u = match &a.u {
        Some(s) => number("u", s)?,
        None => inst.u,
    };
    let windows = plan_windows(&inst, a.count, u, a.acknowledge_unverified)?;
    let run = Run::new(
        "plan",
        Some(cfg.hash),
        None,
        json!({"count": a.count, "u": u, "acknowledge_unverified": a.acknowledge_unverified}),
    );
    emit_json(&run, a.out.as_deref(), serde_json::to_value(&windows).expect("windows serialize"))?;
    run.finish()?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct WeightRow {
    m: u64,
    rho: i8,
}

fn weights(a: &WeightsArgs, env: &Env) -> CliResult<i32> {
    let x = number("x", &a.x)?;
    let delta = number("delta", &a.delta)?;
    let tables = env.tables(x.sqrt().sqrt())?;
    let table = SieveWeightTable::build(x, delta, &tables)?;
    let run = Run::new("weights", None, None, json!({"x": a.x, "delta": a.delta}));
    run.write_csv(
        &a.out,
        table
            .rho
            .iter()
            .enumerate()
            .map(|(i, &rho)| WeightRow { m: table.m_lo + i as u64, rho }),
    )?;
    run.print(with_schema("weights_summary", table.summary()));
    run.finish()?;
    Ok(EXIT_OK)
}

fn parse_alpha_grid(text: &str) -> CliResult<AlphaGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err(CliError::usage(format!("--alphas expects start:stop:count, got {text}")));
    };
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("bad grid count {count}")))?;
    Ok(AlphaGrid::uniform(number("alpha start", start)?, number("alpha stop", stop)?, count)?)
}

#[derive(Serialize)]
struct GridRow {
    alpha: f64,
    re: f64,
    im: f64,
}

fn expsum(a: &ExpsumArgs, env: &Env) -> CliResult<i32> {
    let kind: SumKind = a.kind.parse()?;
    let k = number("k", &a.k)?;
    let x = number("x", &a.x)?;
    let delta = number("delta", &a.delta)?;
    let lambda = number_dd("lambda", &a.lambda)?;
    let grid = parse_alpha_grid(&a.alphas)?;
    if !(k >= 1.0) {
        return Err(CliError::usage(format!("k = {k} must be at least 1")));
    }
    let values = match kind {
        SumKind::Sk => {
            let tables = env.tables(prime_limit(x, k))?;
            PhaseSum::primes(k, x, delta, &tables)?.scaled(lambda).eval_many(&grid.points)
        }
        SumKind::Uk => PhaseSum::integers(k, x, delta).scaled(lambda).eval_many(&grid.points),
        SumKind::S2Tilde => {
            let tables = env.tables(x.sqrt().sqrt())?;
            let table = SieveWeightTable::build(x, delta, &tables)?;
            PhaseSum::sieve_squares(&table).scaled(lambda).eval_many(&grid.points)
        }
        SumKind::Tk => {
            let l = lambda.to_f64();
            grid.points
                .par_iter()
                .map(|&al| eval_t_k(l * al, k, x, delta))
                .collect::<dhlab_core::Result<Vec<_>>>()?
        }
    };
    let run = Run::new(
        "expsum",
        None,
        None,
        json!({"kind": a.kind, "k": a.k, "x": a.x, "delta": a.delta, "lambda": a.lambda, "alphas": a.alphas}),
    );
    run.write_csv(
        &a.out,
        grid.points.iter().zip(&values).map(|(&alpha, v)| GridRow {
            alpha,
            re: v.re,
            im: v.im,
        }),
    )?;
    let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    run.print(json!({
        "schema": "expsum_summary",
        "kind": kind,
        "points": values.len(),
        "max_abs": max_abs,
    }));
    run.finish()?;
    Ok(EXIT_OK)
}

#[derive(Serialize, Clone, Copy)]
pub struct MagnitudePoint {
    pub alpha: f64,
    pub abs: f64,
}

fn magnitudes(f: &ArcIntegrand, grid: &AlphaGrid) -> Vec<MagnitudePoint> {
    grid.points
        .par_iter()
        .map(|&alpha| MagnitudePoint {
            alpha,
            abs: f.eval(alpha).norm(),
        })
        .collect()
}

fn arcs(a: &ArcsArgs, env: &Env) -> CliResult<i32> {
    let (cfg, inst) = input::instance(&a.config)?;
    let mut w = input::window(&inst, &a.window)?;
    if let Some(eta) = &a.eta {
        w = w.with_eta(number("eta", eta)?)?;
    }
    if a.grid_points < 2 {
        return Err(CliError::usage("--grid-points must be at least 2"));
    }
    let cutoff = match &a.cutoff {
        Some(c) => Cutoff::Fixed(number("cutoff", c)?),
        None => Cutoff::Auto,
    };
    let tables = env.tables(prime_limit(w.x, inst.k))?;
    let f = ArcIntegrand::new(&inst, &w, &tables)?;
    let part = partition(&w)?;
    let step = integration_step(w.x, inst.max_abs_lambda());
    let r = integrate_regions(&f, &part, step, cutoff)?;

    let parseval = if w.x <= DIRECT_SUM_MAX_X {
        let direct = direct_sum_i(&f)?;
        let real = &r.real;
        let gap = (real.value_re - direct.value).abs();
        let bound = real.err + real.tail.unwrap_or(f64::INFINITY);
        json!({
            "available": true,
            "direct": direct.value,
            "positive_terms": direct.positive_terms,
            "integral": real.value_re,
            "gap": gap,
            "bound": bound,
            "holds": gap <= bound,
            "relative_bound": bound / direct.value.abs(),
        })
    } else {
        json!({"available": false, "reason": format!("direct sum limited to X <= {DIRECT_SUM_MAX_X}")})
    };

    let n = a.grid_points;
    let trivial_end = r.real.cutoff.max(4.0 * part.minor_cutoff);
    let grids = json!({
        "major": magnitudes(&f, &AlphaGrid::uniform(0.0, part.major_cutoff, n)?),
        "minor": magnitudes(&f, &AlphaGrid::log_spaced(part.major_cutoff, part.minor_cutoff, n)?),
        "trivial": magnitudes(&f, &AlphaGrid::log_spaced(part.minor_cutoff, trivial_end, n)?),
    });
    let run = Run::new(
        "arcs",
        Some(cfg.hash),
        None,
        json!({"q": a.window.q, "x": a.window.x, "eta": a.eta, "cutoff": a.cutoff, "grid_points": n}),
    );
    run.write_json(
        &a.out,
        json!({
            "schema": "arcs_report",
            "instance": inst.summary(),
            "window": w,
            "partition": {"major_cutoff": part.major_cutoff, "minor_cutoff": part.minor_cutoff},
            "regions": r.regions(),
            "tail_method": r.tail_method,
            "parseval": parseval,
            "grids": grids,
        }),
    )?;
    run.finish()?;
    Ok(EXIT_OK)
}

fn levelset(a: &LevelsetArgs, env: &Env) -> CliResult<i32> {
    let (cfg, inst) = input::instance(&a.config)?;
    let w = input::window(&inst, &a.window)?;
    let z_default = w.x.powf(0.5 - w.u + 2.0 * w.epsilon);
    let z1 = a.z1.as_deref().map(|s| number("z1", s)).transpose()?.unwrap_or(z_default);
    let z2 = a.z2.as_deref().map(|s| number("z2", s)).transpose()?.unwrap_or(z_default);
    let y = number("y", &a.y)?;
    let c = number("witness_constant", &a.witness_constant)?;
    let tables = env.tables(prime_limit(w.x, inst.k))?;
    let f = ArcIntegrand::new(&inst, &w, &tables)?;
    let part = partition(&w)?;
    let rep = level_set_diagnostic(&f, &part, (z1, z2), y, a.samples, a.seed, c)?;
    let all_witnessed = rep.hits.iter().all(|h| h.witnessed());
    let mut value = with_schema("levelset_report", &rep);
    value["window"] = serde_json::to_value(w).expect("window serializes");
    value["all_witnessed"] = all_witnessed.into();
    let run = Run::new(
        "levelset",
        Some(cfg.hash),
        Some(a.seed),
        json!({"q": a.window.q, "x": a.window.x, "z1": z1, "z2": z2, "y": a.y, "samples": a.samples,
               "witness_constant": a.witness_constant}),
    );
    emit_json(&run, a.out.as_deref(), value)?;
    run.finish()?;
    Ok(EXIT_OK)
}

fn interval_text(lo: Option<&BigRational>, hi: Option<&BigRational>, lo_open: bool, hi_open: bool) -> String {
    let show = |v: Option<&BigRational>, inf: &str| v.map_or(inf.to_string(), |r| r.to_string());
    format!(
        "{}{}, {}{}",
        if lo_open || lo.is_none() { "(" } else { "[" },
        show(lo, "-inf"),
        show(hi, "inf"),
        if hi_open || hi.is_none() { ")" } else { "]" },
    )
}

/// An endpoint of the parameter interval is excluded when the objective
/// vanishes there or a constraint on the parameter alone is tight there;
/// such constraints stand for strict hypotheses on k.
fn endpoint_open(program: &ExponentProgram, objective: &Affine, x: &BigRational) -> bool {
    objective.at(x).is_zero()
        || program
            .constraints
            .iter()
            .filter(|c| c.coeffs.iter().all(Zero::is_zero) && !c.param_coeff.is_zero())
            .any(|c| &c.param_coeff * x == c.rhs)
}

/// k = 1/x over a positive x-interval.
fn k_range(program: &ExponentProgram, sol: &ExponentSolution) -> Value {
    let (x_lo, x_hi) = sol.x_interval();
    let first = &sol.pieces[0].objective;
    let last = &sol.pieces[sol.pieces.len() - 1].objective;
    let lo_open = x_lo.as_ref().is_some_and(|x| endpoint_open(program, first, x));
    let hi_open = x_hi.as_ref().is_some_and(|x| endpoint_open(program, last, x));
    let x_text = interval_text(x_lo.as_ref(), x_hi.as_ref(), lo_open, hi_open);
    let positive = |v: &Option<BigRational>| v.as_ref().is_some_and(|r| r.is_positive());
    if !positive(&x_hi) {
        return json!({"x": x_text, "k": null});
    }
    let k_lo = x_hi.as_ref().map(|r| r.recip());
    let k_hi = if positive(&x_lo) { x_lo.as_ref().map(|r| r.recip()) } else { None };
    json!({
        "x": x_text,
        "k": interval_text(k_lo.as_ref(), k_hi.as_ref(), hi_open, lo_open || k_hi.is_none()),
        "k_lo": k_lo.map(|r| r.to_string()),
        "k_hi": k_hi.map(|r| r.to_string()),
        "k_lo_open": hi_open,
        "k_hi_open": lo_open || !positive(&x_lo),
    })
}

fn optimize(a: &OptimizeArgs) -> CliResult<i32> {
    let (program, source) = match &a.program {
        Some(path) => {
            let text = read_text(path)?;
            let file: ProgramFile = serde_json::from_str(&text).map_err(|e| {
                CliError::new("parse", e.to_string(), crate::error::EXIT_USAGE).with("path", path.display().to_string())
            })?;
            (file.into_program()?, json!({"program_sha256": crate::manifest::sha256_hex(text.as_bytes())}))
        }
        None => (ExponentProgram::default_system(), json!({"program": "default"})),
    };
    let sol = program.solve()?;
    let objective_name = &program.variables[program.objective];
    let mut pieces = Vec::new();
    for (i, piece) in sol.pieces.iter().enumerate() {
        let binding = program.binding_analysis(&sol, i)?;
        let values: serde_json::Map<String, Value> = sol
            .variables
            .iter()
            .zip(&piece.values)
            .map(|(n, v)| (n.clone(), Value::String(v.to_string())))
            .collect();
        let slack: serde_json::Map<String, Value> = binding
            .constraints
            .iter()
            .map(|c| (c.id.clone(), Value::String(c.slack.to_string())))
            .collect();
        pieces.push(json!({
            "x_range": interval_text(piece.x_lo.as_ref(), piece.x_hi.as_ref(), false, false),
            "values": values,
            "w_expr": piece.objective.in_reciprocal("k"),
            "binding": binding.binding_ids(),
            "slack": slack,
        }));
    }
    let single = pieces.len() == 1;
    let top = |key: &str| if single { pieces[0][key].clone() } else { Value::Null };
    let u_star = if single {
        sol.variable(0, "u").map_or(Value::Null, |u| Value::String(u.to_string()))
    } else {
        Value::Null
    };
    let out = json!({
        "schema": "optimize_report",
        "parameter": program.parameter,
        "objective": objective_name,
        "u_star": u_star,
        "w_expr": top("w_expr"),
        "w_affine": if single { Value::String(sol.pieces[0].objective.to_string()) } else { Value::Null },
        "k_range": k_range(&program, &sol),
        "binding": top("binding"),
        "pieces": pieces,
        "verified": program.verify(&sol),
    });
    let run = Run::new("optimize", None, None, source);
    emit_json(&run, a.out.as_deref(), out)?;
    run.finish()?;
    Ok(EXIT_OK)
}

fn search(a: &SearchArgs, env: &Env) -> CliResult<i32> {
    let (cfg, inst) = input::instance(&a.config)?;
    let xs: Vec<f64> = a
        .x
        .split(',')
        .map(|s| number("x", s.trim()))
        .collect::<CliResult<_>>()?;
    let floor = number("floor", &a.floor)?;
    if xs.len() > 1 && a.out.is_some() {
        return Err(CliError::usage("--out needs a single --x; sweeps write summaries only"));
    }
    let top = xs.iter().copied().fold(0.0, f64::max);
    let tables = env.tables(prime_limit(top, inst.k))?;
    let run = Run::new(
        "search",
        Some(cfg.hash),
        None,
        json!({"x": xs, "budget": a.budget, "floor": a.floor}),
    );
    let summary = if let [x] = xs[..] {
        let outcome = enumerate_solutions(&inst, x, a.budget, &tables)?;
        if let Some(path) = &a.out {
            run.write_jsonl(path, &outcome.records)?;
        }
        with_schema("search_summary", &outcome.summary)
    } else {
        with_schema("search_sweep", window_sweep(&inst, &xs, a.budget, floor, &tables)?)
    };
    if let Some(path) = &a.summary {
        run.write_json(path, summary.clone())?;
    }
    run.print(summary);
    run.finish()?;
    Ok(EXIT_OK)
}
