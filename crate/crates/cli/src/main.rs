//! Batch front door: problem configs in, reports and CSV out.
//!
//! Exit codes: 0 all checks passed / run converged, 1 a checked property
//! failed or a solver did not converge, 2 configuration or I/O errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use config::{ProblemConfig, RowSolverChoice, Timing};
use evoform::affine::{build_affine, verify_affine_bounds};
use evoform::forms::{
    check_hypotheses, default_delta_grid, estimate_constants, measure_modulus, Dini,
    FormConstants, ModulusModel, ModulusProfile,
};
use evoform::scalar::to_f64;
use evoform::semigroup::{contour_check, verify_sector_estimates, SectorSpec};
use evoform::solver::at::{at_solve, AtConfig};
use evoform::solver::{oracle_solve, q_norm_estimate, solution_norms, SourceTerm, TimeGrid};
use evoform::study::{
    convergence_study, envelope_dominance, format_sig, rows_to_csv, uniformity_check,
    EnvelopeSpec, RowSolver, StudyConfig,
};
use evoform::{CVector, Cplx, FormPath, Real, SpacePair, Trajectory};

#[derive(Parser)]
#[command(
    name = "evoform",
    version,
    about = "Non-autonomous evolution problems: solve, verify, study"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print structural constants, the modulus profile, and the hypothesis table.
    Inspect {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the sector-estimate sweep, affine bounds, and the Q-norm ladder.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the Cauchy problem and write the trajectory CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the mesh-ladder convergence study and write its CSV.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Oracle,
    At,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let outcome = match &cli.command {
        Command::Inspect { config } => load(config).and_then(cmd_inspect),
        Command::Verify { config } => load(config).and_then(cmd_verify),
        Command::Solve { config, method, out } => {
            load(config).and_then(|cfg| cmd_solve(cfg, *method, out))
        }
        Command::Study { config, out } => load(config).and_then(|cfg| cmd_study(cfg, out)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<ProblemConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

struct Problem {
    space: Arc<SpacePair<Real>>,
    fp: FormPath<Real>,
    f: SourceTerm<Real>,
    u0: CVector,
}

fn build_problem(cfg: &ProblemConfig) -> Result<Problem, String> {
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(format!("gamma must lie in [0, 1), got {}", cfg.gamma));
    }
    if cfg.horizon <= 0.0 {
        return Err(format!("horizon must be positive, got {}", cfg.horizon));
    }
    let space = cfg.build_space()?;
    let fp = cfg.build_form(space.clone())?;
    let f = cfg.build_source()?;
    let u0 = cfg.build_u0();
    Ok(Problem { space, fp, f, u0 })
}

/// Exact profile when the family admits one, measured otherwise.
fn modulus_profile(fp: &FormPath<Real>, gamma: Real) -> Result<ModulusProfile<Real>, String> {
    match fp.exact_modulus(gamma) {
        Some(p) => Ok(p),
        None => {
            let grid = default_delta_grid(fp.horizon(), 12);
            measure_modulus(fp, gamma, &grid).map_err(|e| e.to_string())
        }
    }
}

fn dini_json(d: &Dini<Real>) -> serde_json::Value {
    match d {
        Dini::Finite(v) => json!(v),
        Dini::Infinite => json!("infinite"),
    }
}

fn constants_json(k: &FormConstants<Real>) -> serde_json::Value {
    json!({
        "m": k.m,
        "alpha": k.alpha,
        "beta": k.beta,
        "gamma": k.gamma,
        "theta": k.theta,
    })
}

fn modulus_json(p: &ModulusProfile<Real>) -> serde_json::Value {
    let model = match &p.model {
        ModulusModel::Power { coeff, exponent } => json!({
            "kind": "power", "coeff": coeff, "exponent": exponent,
        }),
        ModulusModel::Table { args, vals } => json!({
            "kind": "table", "points": args.len(),
            "last": [args.last(), vals.last()],
        }),
    };
    json!({
        "model": model,
        "dini_integral": dini_json(&p.dini_integral),
        "sup_ratio": dini_json(&p.sup_ratio),
    })
}

fn hypothesis_ladder(cfg: &ProblemConfig) -> Vec<usize> {
    cfg.study
        .as_ref()
        .map(|s| s.mesh_ladder.clone())
        .filter(|l| !l.is_empty())
        .unwrap_or_else(|| vec![4, 8, 16, 32])
}

fn cmd_inspect(cfg: ProblemConfig) -> Result<bool, String> {
    let problem = build_problem(&cfg)?;
    let fp = &problem.fp;
    let constants = match estimate_constants(fp, 65, 1024.0) {
        Ok(k) => k.with_gamma(cfg.gamma),
        Err(e) => {
            let report = json!({ "error": e.to_string(), "pass": false });
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            return Ok(false);
        }
    };
    let profile = modulus_profile(fp, cfg.gamma)?;

    let ladder = hypothesis_ladder(&cfg);
    let seq: Vec<(usize, FormPath<Real>)> = ladder
        .iter()
        .map(|&m| {
            build_affine(fp, m, 8).map(|afp| (m, afp.as_form_path())).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let report = check_hypotheses(fp, &seq, cfg.gamma).map_err(|e| e.to_string())?;

    println!(
        "constants: M = {:.6}, alpha = {:.6}, beta = {}, theta = {:.6}",
        constants.m, constants.alpha, constants.beta, constants.theta
    );
    let verdicts = [
        ("H0", &report.h0),
        ("H1", &report.h1),
        ("H2", &report.h2),
        ("H3", &report.h3),
        ("H4", &report.h4),
        ("H5", &report.h5),
        ("H6", &report.h6),
    ];
    for (name, v) in &verdicts {
        println!("{name}: {} ({})", if v.pass { "pass" } else { "FAIL" }, v.note);
    }
    let json_report = json!({
        "constants": constants_json(&constants),
        "modulus": modulus_json(&profile),
        "hypotheses": verdicts.iter().map(|(name, v)| {
            (name.to_string(), json!({"pass": v.pass, "note": v.note}))
        }).collect::<serde_json::Map<String, serde_json::Value>>(),
        "members": report.members.iter().map(|m| json!({
            "n": m.n,
            "d_gamma": m.d_gamma,
            "d_vp": m.d_vp,
            "decay_product": m.decay_product,
            "dini_tail": dini_json(&m.dini_tail),
        })).collect::<Vec<_>>(),
        "norm_ordering_ok": report.norm_ordering_ok,
        "pass": report.all_pass(),
    });
    println!("{}", serde_json::to_string_pretty(&json_report).unwrap());
    Ok(report.all_pass())
}

fn cmd_verify(cfg: ProblemConfig) -> Result<bool, String> {
    let problem = build_problem(&cfg)?;
    let fp = &problem.fp;
    let constants =
        estimate_constants(fp, 65, 1024.0).map_err(|e| e.to_string())?.with_gamma(cfg.gamma);
    let mut spec = SectorSpec::from_constants(&constants).map_err(|e| e.to_string())?;
    spec.contour_points = cfg.solver.contour_points;
    let horizon = cfg.horizon;
    let mut pass = true;

    // Ten-estimate sweep at three frozen times.
    let t_grid = [0.0, horizon * 0.5, horizon];
    let reports = verify_sector_estimates(fp, &constants, &spec, &t_grid, 40, 41)
        .map_err(|e| e.to_string())?;
    let sector_json: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            pass &= r.pass();
            json!({
                "item": r.item,
                "name": r.name,
                "constant": r.constant,
                "refined": r.refined_constant,
                "stable": r.stable,
            })
        })
        .collect();

    // Contour self-check of the sectorial calculus.
    let mut contour_json = Vec::new();
    for s in [horizon * 0.5, horizon] {
        match contour_check(&problem.space, &fp.eval(0.0), s, &spec) {
            Ok(dev) => contour_json.push(json!({"s": s, "deviation": dev, "pass": true})),
            Err(e) => {
                pass = false;
                contour_json.push(json!({"s": s, "error": e.to_string(), "pass": false}));
            }
        }
    }

    // Affine-construction bounds.
    let profile = modulus_profile(fp, cfg.gamma)?;
    let mut affine_json = Vec::new();
    for &m in hypothesis_ladder(&cfg).iter().take(3) {
        let afp = build_affine(fp, m, 8).map_err(|e| e.to_string())?;
        let report = verify_affine_bounds(fp, &afp, &profile, 60).map_err(|e| e.to_string())?;
        pass &= report.pass;
        affine_json.push(json!({
            "m": m,
            "max_modulus_ratio": report.max_modulus_ratio,
            "max_deviation_ratio": report.max_deviation_ratio,
            "pass": report.pass,
        }));
    }

    // Q-norm ladder: nonincreasing in mu and below 1/2 once mu is large.
    let q_grid = TimeGrid::uniform(horizon, cfg.solver.grid_cells.min(32), 2)
        .map_err(|e| e.to_string())?;
    let mut q_json = Vec::new();
    let mut prev = f64::INFINITY;
    let mut q_last = f64::INFINITY;
    for mu in [0.0, 10.0, 100.0, 1000.0] {
        let est = q_norm_estimate(fp, mu, &q_grid).map_err(|e| e.to_string())?;
        let monotone = est.value <= prev + 1e-9;
        pass &= monotone;
        q_json.push(json!({
            "mu": mu,
            "q": est.value,
            "coarse": est.coarse,
            "nonincreasing": monotone,
        }));
        prev = est.value;
        q_last = est.value;
    }
    pass &= q_last < 0.5;

    let report = json!({
        "sector_estimates": sector_json,
        "contour": contour_json,
        "affine_bounds": affine_json,
        "q_ladder": q_json,
        "q_final_below_half": q_last < 0.5,
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(pass)
}

fn trajectory_csv(space: &SpacePair<Real>, traj: &Trajectory<Real>) -> String {
    let n = space.dim();
    let mut out = String::from("t");
    for k in 0..n {
        out.push_str(&format!(",re_{k},im_{k}"));
    }
    out.push_str(",norm_H,norm_V\n");
    for (i, &t) in traj.grid.nodes().iter().enumerate() {
        out.push_str(&format_sig(t));
        for k in 0..n {
            out.push(',');
            out.push_str(&format_sig(traj.values[i][k].re));
            out.push(',');
            out.push_str(&format_sig(traj.values[i][k].im));
        }
        out.push(',');
        out.push_str(&format_sig(to_f64(space.h_norm(&traj.values[i]))));
        out.push(',');
        out.push_str(&format_sig(to_f64(space.v_norm(&traj.values[i]))));
        out.push('\n');
    }
    out
}

fn cmd_solve(cfg: ProblemConfig, method: Method, out: &Path) -> Result<bool, String> {
    let problem = build_problem(&cfg)?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.solver.grid_cells, cfg.solver.gauss_order)
        .map_err(|e| e.to_string())?;
    let traj = match method {
        Method::Oracle => {
            oracle_solve(&problem.fp, &problem.f, &problem.u0, &grid, cfg.solver.substeps)
        }
        Method::At => {
            let at_cfg = AtConfig {
                mu_cap: cfg.solver.mu_cap,
                tol: cfg.solver.tol,
                max_iter: cfg.solver.max_iter,
                ..AtConfig::default()
            };
            at_solve(&problem.fp, &problem.f, &problem.u0, &grid, &at_cfg).map(|(t, _)| t)
        }
    };
    let traj = match traj {
        Ok(t) => t,
        Err(e) => {
            let diag = json!({ "error": e.to_string(), "method": format!("{method:?}") });
            eprintln!("{}", serde_json::to_string_pretty(&diag).unwrap());
            return Ok(false);
        }
    };
    std::fs::write(out, trajectory_csv(&problem.space, &traj))
        .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    let norms = solution_norms(&problem.space, &traj);
    let summary = json!({
        "nodes": traj.grid.nodes().len(),
        "sup_h": norms.sup_h,
        "sup_v": norms.sup_v,
        "mr2_vvp": norms.mr2_vvp,
        "mr2_vh": norms.mr2_vh,
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(true)
}

fn cmd_study(cfg: ProblemConfig, out: &Path) -> Result<bool, String> {
    let study = cfg.study.as_ref().ok_or("config has no study block")?;
    let problem = build_problem(&cfg)?;
    let fp = &problem.fp;
    let profile = modulus_profile(fp, cfg.gamma)?;
    let envelope = EnvelopeSpec::new(cfg.gamma, profile);
    let study_cfg = StudyConfig {
        quad_order: study.quad_order,
        eval_cells: study.eval_cells,
        gauss_order: cfg.solver.gauss_order,
        row_solver: match study.row_solver {
            RowSolverChoice::Oracle => RowSolver::Oracle,
            RowSolverChoice::At => RowSolver::At,
        },
        at: AtConfig {
            mu_cap: cfg.solver.mu_cap,
            tol: cfg.solver.tol,
            max_iter: cfg.solver.max_iter,
            ..AtConfig::default()
        },
        ..StudyConfig::default()
    };
    let outcome = convergence_study(
        fp,
        &envelope,
        &study.mesh_ladder,
        &problem.f,
        &problem.u0,
        &study_cfg,
    )
    .map_err(|e| e.to_string())?;
    let csv = rows_to_csv(&outcome.rows, study.timing == Timing::Measured);
    std::fs::write(out, csv).map_err(|e| format!("cannot write {}: {e}", out.display()))?;

    let all_ok = outcome.rows.iter().all(|r| r.ok());
    let dominance = if all_ok {
        Some(envelope_dominance(&outcome.rows).map_err(|e| e.to_string())?)
    } else {
        None
    };

    // Uniformity over a seeded batch of normalized data at the mid ladder.
    let uniformity = if study.batch > 0 && all_ok {
        let mut rng = ChaCha20Rng::seed_from_u64(study.seed);
        let n = problem.space.dim();
        let batch: Vec<(SourceTerm<Real>, CVector)> = (0..study.batch)
            .map(|_| {
                let mut draw =
                    || Cplx::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
                let f = SourceTerm::Constant(CVector::from_fn(n, |_, _| draw()));
                let u0 = CVector::from_fn(n, |_, _| draw());
                (f, u0)
            })
            .collect();
        let m = study.mesh_ladder[study.mesh_ladder.len() / 2];
        Some(uniformity_check(fp, &envelope, m, &batch, &study_cfg).map_err(|e| e.to_string())?)
    } else {
        None
    };

    let pass = all_ok && dominance.as_ref().map(|d| d.pass).unwrap_or(false);
    let summary = json!({
        "rows": outcome.rows.len(),
        "failed_rows": outcome.rows.iter().filter(|r| !r.ok()).count(),
        "reference_drift": to_f64(outcome.reference_drift),
        "reference_ok": outcome.reference_ok,
        "dominance": dominance.map(|d| json!({
            "c_fit": d.c_fit,
            "worst_violation": d.worst_violation,
            "pass": d.pass,
        })),
        "uniformity": uniformity.map(|u| json!({
            "max_ratio": u.max_ratio,
            "median_ratio": u.median_ratio,
            "pass": u.pass,
        })),
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(pass)
}
