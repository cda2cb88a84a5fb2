use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankone::bss::{self, BssOptions, BssOutcome, ComplexPlant, ComplexSubspace, MeasurementOperator, Plant, SubspaceBasis};
use rankone::linalg::Matrix;
use rankone::rectangle::{self, FactorMatrix, RectangleConfig};
use rankone::sdp::SolverOptions;
use rankone::structure::{StructureConfig, StructureTrace};
use serde_json::{json, Value};

use crate::config::{self, Effective, FileConfig};
use crate::report::{CliError, CmdResult, Outcome, Status};
use crate::{Common, GenKind};

/// grid budget for uncertified farness estimates at n > 3
const GRID_BUDGET: f64 = 1e5;

struct Ctx {
    eff: Effective,
    file: FileConfig,
    start: Instant,
}

fn run<F>(name: &'static str, common: &Common, f: F) -> CmdResult
where
    F: FnOnce(&mut Ctx) -> Result<(Status, Value, Value), CliError>,
{
    let file = match config::load(common.config.as_deref()) {
        Ok(f) => f,
        Err(e) => return (None, name, Err(e)),
    };
    let mut ctx = Ctx { eff: Effective::resolve(common, &file), file, start: Instant::now() };
    let r = f(&mut ctx);
    let eff = ctx.eff.clone();
    let timing = common.timing.then(|| ctx.start.elapsed().as_secs_f64() * 1e3);
    let outcome = r.map(|(status, result, checks)| Outcome {
        command: name,
        config: eff.clone(),
        status,
        result,
        checks,
        timing_ms: timing,
    });
    (Some(eff), name, outcome)
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn header_tag(text: &str) -> &str {
    text.split_whitespace().next().unwrap_or("")
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn quality_bar(eps: f64) -> f64 {
    1.0 - eps * eps
}

pub fn gen(kind: GenKind, n: usize, dim_w: usize, common: &Common) -> CmdResult {
    run("gen", common, |ctx| {
        let prefix = common.out.clone().ok_or_else(|| CliError::Format("gen needs --out PREFIX".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.eff.seed);
        match kind {
            GenKind::PlantedYes => {
                let (w, plant) = bss::planted_instance(n, dim_w, &mut rng)?;
                let (wp, pp) = (with_ext(&prefix, "sub"), with_ext(&prefix, "plant"));
                write(&wp, &w.to_text())?;
                write(&pp, &plant.to_text())?;
                let q = w.quality(&Matrix::outer(&plant.u, &plant.v))?;
                Ok((
                    Status::Ok,
                    json!({ "kind": "planted-yes", "n": n, "dim_w": w.dim(), "files": [wp, pp] }),
                    json!({ "plant_quality": q }),
                ))
            }
            GenKind::RandomNo => {
                let w = bss::random_instance(n, dim_w, &mut rng)?;
                let wp = with_ext(&prefix, "sub");
                write(&wp, &w.to_text())?;
                let certified = n <= 3;
                let step = match n {
                    0..=2 => 0.002,
                    3 => 0.02,
                    _ => {
                        let per_axis = (GRID_BUDGET / n as f64).powf(1.0 / (n - 1) as f64).floor().max(2.0);
                        2.0 / (per_axis - 1.0)
                    }
                };
                let f = bss::grid_farness(&w, step)?;
                Ok((
                    Status::Ok,
                    json!({
                        "kind": "random-no",
                        "n": n,
                        "dim_w": w.dim(),
                        "files": [wp],
                        "farness": {
                            "estimate": f.estimate,
                            "certified_lower": if certified { json!(f.certified_lower) } else { Value::Null },
                            "certified": certified,
                            "grid_step": step,
                            "grid_points": f.grid_points,
                            "cover_radius": f.cover_radius,
                        },
                    }),
                    json!({}),
                ))
            }
            GenKind::ComplexPlanted => {
                let (wc, plant) = bss::planted_complex_instance(n, dim_w, &mut rng)?;
                let (wp, pp) = (with_ext(&prefix, "csub"), with_ext(&prefix, "cplant"));
                write(&wp, &wc.to_text())?;
                write(&pp, &plant.to_text())?;
                let (a, b) = plant.product();
                let y = bss::reduce_complex_to_real(&wc)?;
                let (u, v) = plant.embed();
                let embedded = y.quality(&Matrix::outer(&u, &v))?;
                Ok((
                    Status::Ok,
                    json!({ "kind": "complex-planted", "n": n, "dim_w": wc.dim(), "files": [wp, pp] }),
                    json!({ "membership_residual": wc.residual(&a, &b), "embedded_quality": embedded }),
                ))
            }
        }
    })
}

fn bss_settings(eff: &Effective) -> (StructureConfig, BssOptions) {
    let cfg = StructureConfig { seed: eff.seed, max_iters: eff.max_iters, ..StructureConfig::new(eff.eps) };
    let defaults = BssOptions::default();
    let opts = BssOptions { degree: eff.degree, solver: SolverOptions { tol: eff.tol, ..defaults.solver } };
    (cfg, opts)
}

fn trace_json(trace: Option<&StructureTrace>, eps: f64, n: usize) -> (Value, Value) {
    let Some(t) = trace else {
        return (Value::Null, json!({}));
    };
    let bound = StructureConfig::new(eps).iteration_bound(n.max(2));
    let cross_ok = match (t.cross_frob, t.cross_bound) {
        (Some(f), Some(b)) => json!(f <= b + 1e-9),
        _ => Value::Null,
    };
    (
        json!({
            "iterations": t.iterations,
            "records": t.records,
            "cross_frob": t.cross_frob,
            "cross_bound": t.cross_bound,
        }),
        json!({ "iteration_bound": bound, "within_iteration_bound": t.iterations <= bound, "cross_term_ok": cross_ok }),
    )
}

fn merge(a: &mut Value, b: Value) {
    if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
}

const INFEASIBLE_NOTE: &str =
    "the degree-d relaxation is infeasible, which certifies that W contains no rank-one matrix";

pub fn solve(input: &Path, threshold: Option<f64>, gauge: bool, common: &Common) -> CmdResult {
    run("solve", common, |ctx| {
        let text = read(input)?;
        let (cfg, opts) = bss_settings(&ctx.eff);
        let eps = ctx.eff.eps;
        let bar = quality_bar(eps);
        let tag = header_tag(&text).to_string();
        let (w, m, complex) = match tag.as_str() {
            "SUBSPACE" => (SubspaceBasis::from_text(&text)?, None, None),
            "MEASUREMENT" => {
                let m = MeasurementOperator::from_text(&text)?;
                let t = threshold.or(ctx.file.threshold).unwrap_or_else(|| bss::default_threshold(m.n));
                ctx.eff.threshold = Some(t);
                (bss::measurement_to_subspace(&m, Some(t))?, Some(m), None)
            }
            "CSUBSPACE" => {
                let wc = ComplexSubspace::from_text(&text)?;
                let y = bss::reduce_complex_to_real(&wc)?;
                let y = if gauge { bss::gauge_fix(&y)? } else { y };
                (y, None, Some(wc))
            }
            other => return Err(CliError::Format(format!("unknown input header {other:?}"))),
        };
        let out = bss::solve_bss(&w, eps, &cfg, &opts)?;
        let (trace, mut checks) = trace_json(out.report().trace.as_ref(), eps, w.n);
        let solver = serde_json::to_value(&out.report().solver).expect("serializes");
        match out {
            BssOutcome::Fail { .. } => Ok((
                Status::Fail,
                json!({ "input": tag, "outcome": "infeasible", "degree": opts.degree, "note": INFEASIBLE_NOTE, "solver": solver }),
                checks,
            )),
            BssOutcome::Candidate { candidate, .. } => {
                let ver = bss::verify_candidate(&candidate, &w, m.as_ref())?;
                let mut status = if ver.quality >= bar { Status::Ok } else { Status::Fail };
                let mut result = json!({
                    "input": tag,
                    "outcome": "candidate",
                    "candidate": { "u0": candidate.u0, "v0": candidate.v0, "quality": ver.quality },
                    "solver": solver,
                    "trace": trace,
                });
                merge(&mut checks, json!({ "quality_bar": bar, "quality_ok": ver.quality >= bar }));
                if ver.acceptance.is_some() {
                    result["candidate"]["acceptance"] = json!(ver.acceptance);
                    merge(&mut checks, json!({ "acceptance_floor": ver.acceptance_floor, "acceptance_ok": ver.acceptance_ok }));
                }
                if let Some(wc) = complex {
                    let lift = bss::lift_real_solution(&candidate, &w, &wc)?;
                    let ok = lift.relative_residual() <= eps;
                    if !ok {
                        status = Status::Fail;
                    }
                    result["complex"] = json!({
                        "gauge": gauge,
                        "u": { "re": lift.u_re, "im": lift.u_im },
                        "v": { "re": lift.v_re, "im": lift.v_im },
                        "x": { "re": lift.x_re.data, "im": lift.x_im.data },
                        "relative_residual": lift.relative_residual(),
                        "certified_eps": lift.certified_eps,
                        "membership_residual": lift.membership_residual,
                    });
                    merge(&mut checks, json!({ "complex_residual_ok": ok, "block_residual_sum": lift.block_residual_sum }));
                }
                if status == Status::Fail {
                    result["note"] = json!("candidate falls short of the accuracy bar");
                }
                Ok((status, result, checks))
            }
        }
    })
}

pub fn rectangle(u: &Path, v: Option<&Path>, k: Option<f64>, min_size: Option<usize>, common: &Common) -> CmdResult {
    run("rectangle", common, |ctx| {
        let fu = FactorMatrix::from_text(&read(u)?)?;
        let fv = match v {
            Some(p) => FactorMatrix::from_text(&read(p)?)?,
            None => fu.clone(),
        };
        let mut cfg = RectangleConfig {
            k: k.or(ctx.file.k),
            seed: ctx.eff.seed,
            max_rounds: ctx.eff.max_iters,
            ..RectangleConfig::new(ctx.eff.eps)
        };
        cfg.min_size = min_size.or(ctx.file.min_size).unwrap_or(cfg.min_size);
        ctx.eff.k = Some(cfg.k_for(fu.n()));
        ctx.eff.min_size = Some(cfg.min_size);
        let r = rectangle::find_rectangle(&fu, &fv, &cfg)?;
        let kl = rectangle::flat_reweighting_view(r.indices.len(), fu.len())?;
        let growth_ok = r.log.iter().all(|g| g.frob_after >= (1.0 + cfg.gamma) * g.frob_before);
        let status = if r.passed { Status::Ok } else { Status::Fail };
        Ok((
            status,
            json!({
                "indices": r.indices,
                "distance": r.distance,
                "rounds": r.rounds,
                "densities": r.densities,
                "stop": r.stop,
                "kl_deficiency": kl,
                "log": r.log,
            }),
            json!({ "spectral_test": r.passed, "growth_ok": growth_ok, "size": r.indices.len() }),
        ))
    })
}

pub fn reduce(input: &Path, gauge: bool, answer: Option<&Path>, out_file: Option<&Path>, common: &Common) -> CmdResult {
    run("reduce", common, |_| {
        let wc = ComplexSubspace::from_text(&read(input)?)?;
        let y = bss::reduce_complex_to_real(&wc)?;
        let y = if gauge { bss::gauge_fix(&y)? } else { y };
        if let Some(p) = out_file {
            write(p, &y.to_text())?;
        }
        let mut status = Status::Ok;
        let mut checks = json!({});
        if let Some(a) = answer {
            let plant = ComplexPlant::from_text(&read(a)?)?;
            let plant = if gauge { plant.gauge_normalized() } else { plant };
            let (u, v) = plant.embed();
            let q = y.quality(&Matrix::outer(&u, &v))?;
            let complete = q >= 1.0 - 1e-9;
            if !complete {
                status = Status::Fail;
            }
            checks = json!({ "embedded_quality": q, "completeness": complete });
        }
        Ok((
            status,
            json!({ "n": wc.n, "complex_dim": wc.dim(), "real_n": y.n, "real_dim": y.dim(), "gauge": gauge, "written": out_file }),
            checks,
        ))
    })
}

pub fn check(input: &Path, candidate: &Path, threshold: Option<f64>, common: &Common) -> CmdResult {
    run("check", common, |ctx| {
        let text = read(input)?;
        let ctext = read(candidate)?;
        let bar = quality_bar(ctx.eff.eps);
        let tag = header_tag(&text).to_string();
        let (quality, mut result) = match tag.as_str() {
            "SUBSPACE" | "MEASUREMENT" => {
                let plant = Plant::from_text(&ctext)?;
                let (w, m) = if tag == "SUBSPACE" {
                    (SubspaceBasis::from_text(&text)?, None)
                } else {
                    let m = MeasurementOperator::from_text(&text)?;
                    let t = threshold.or(ctx.file.threshold).unwrap_or_else(|| bss::default_threshold(m.n));
                    ctx.eff.threshold = Some(t);
                    (bss::measurement_to_subspace(&m, Some(t))?, Some(m))
                };
                let cand = bss::RankOneCandidate::new(plant.u, plant.v, &w)?;
                let v = bss::verify_candidate(&cand, &w, m.as_ref())?;
                (v.quality, serde_json::to_value(&v).expect("serializes"))
            }
            "CSUBSPACE" => {
                let wc = ComplexSubspace::from_text(&text)?;
                let plant = ComplexPlant::from_text(&ctext)?;
                let y = bss::reduce_complex_to_real(&wc)?;
                let (u, v) = plant.embed();
                let q = y.quality(&Matrix::outer(&u, &v))?;
                let (a, b) = plant.product();
                (q, json!({ "quality": q, "membership_residual": wc.residual(&a, &b) }))
            }
            other => return Err(CliError::Format(format!("unknown input header {other:?}"))),
        };
        result["input"] = json!(tag);
        let status = if quality >= bar { Status::Ok } else { Status::Fail };
        Ok((status, result, json!({ "quality_bar": bar, "quality_ok": quality >= bar })))
    })
}
