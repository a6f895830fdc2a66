use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use surro_core::bench::{self, GenOptions, TEST_FILE, TRAIN_FILE};
use surro_core::io;
use surro_core::milp::{restore_feasibility, solve_milp, MilpOptions};
use surro_core::model::{assemble_cuts, build_surrogate_lp, Theta, ThetaArtifact};
use surro_core::lp::solve_lp;
use surro_core::par::Execution;
use surro_core::problems::{knapsack, Family, FamilyKind};
use surro_core::trainer::{train, TrainingProblem, TrainingStatus};

use crate::config::RunConfig;

pub const PROFILE_POINTS: usize = 100;

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
}

/// Record how to reproduce this run next to its outputs.
pub fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    let m = Manifest {
        command,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
    };
    io::write_json(&cfg.out.join(format!("manifest-{command}.json")), &m)?;
    Ok(())
}

fn exec(cfg: &RunConfig) -> Execution {
    Execution::from_workers(cfg.workers)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

fn require_dataset(dir: &Path, split: &str) -> Result<()> {
    require(&dir.join(bench::FAMILY_FILE), "family file")?;
    require(&dir.join(split), "dataset")
}

pub fn gen(cfg: &RunConfig) -> Result<()> {
    let family = Family::build(cfg.family, &cfg.dims, cfg.seed);
    let label_gap = cfg.label_gap.unwrap_or_else(|| family.default_label_gap());
    let opts = GenOptions {
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        seed: cfg.seed,
        label_gap,
        time_limit_s: cfg.time_limit_s,
    };
    let (train, test) = bench::generate_dataset(&family, &opts, exec(cfg))?;
    let dir = cfg.data_dir();
    bench::save_dataset(&dir, &train, &test, label_gap)?;
    write_manifest(cfg, "gen")?;
    println!(
        "wrote {} training and {} test labels to {}",
        train.items.len(),
        test.items.len(),
        dir.display()
    );
    Ok(())
}

/// Returns whether training converged.
pub fn train_cmd(cfg: &RunConfig) -> Result<bool> {
    let dir = cfg.data_dir();
    require_dataset(&dir, TRAIN_FILE)?;
    let data = bench::load_split(&dir, TRAIN_FILE)?;
    if data.family.kind() != cfg.family {
        log::warn!("dataset family {:?} differs from configured {:?}; using the dataset's", data.family.kind(), cfg.family);
    }
    let mut spec = data.family.spec_with(cfg.surrogate.cuts, cfg.surrogate.degree);
    if let Some(mode) = cfg.surrogate.rhs_mode {
        spec.rhs_mode = mode;
    }
    let problem = TrainingProblem::new(&data, &spec)?;
    let (theta, report) = train(&problem, &cfg.trainer, exec(cfg))?;
    ThetaArtifact::new(&spec, &theta).save(&cfg.theta_path())?;
    io::write_json(&cfg.out.join("report.json"), &report)?;
    write_manifest(cfg, "train")?;
    let converged = report.status == TrainingStatus::Converged;
    println!(
        "{}: best loss {:.6} after {} outer iterations ({:.2} s); theta written to {}",
        if converged { "CONVERGED" } else { "NOT_CONVERGED" },
        report.best_loss,
        report.outer_iterations,
        report.wall_time_s,
        cfg.theta_path().display()
    );
    Ok(converged)
}

fn load_theta(cfg: &RunConfig) -> Result<(surro_core::model::SurrogateSpec, Theta)> {
    let path = cfg.theta_path();
    require(&path, "theta artifact")?;
    Ok(ThetaArtifact::load(&path)?.into_parts()?)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.data_dir();
    require_dataset(&dir, TEST_FILE)?;
    let (spec, theta) = load_theta(cfg)?;
    let test = bench::load_split(&dir, TEST_FILE)?;
    let (records, summary) = bench::evaluate(&theta, &spec, &test, exec(cfg))?;
    io::write_text(&cfg.out.join("eval.csv"), &bench::eval_csv(&records))?;
    io::write_json(&cfg.out.join("eval_summary.json"), &summary)?;
    write_manifest(cfg, "eval")?;
    println!(
        "{} instances ({} failed, {} restored): mean err_discrete {:.3e}, err_continuous {:.3e}, opt_gap {:.3e}",
        summary.n, summary.n_failed, summary.n_restored, summary.mean_err_discrete, summary.mean_err_continuous, summary.mean_opt_gap
    );
    Ok(())
}

pub fn bench_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.data_dir();
    require_dataset(&dir, TEST_FILE)?;
    let (spec, theta) = load_theta(cfg)?;
    let test = bench::load_split(&dir, TEST_FILE)?;
    let inputs: Vec<Vec<f64>> = test.items.into_iter().map(|i| i.u).collect();
    let records = bench::run_benchmark(&theta, &spec, &test.family, &inputs, cfg.time_limit_s)?;
    let profile = bench::performance_profile(&records, PROFILE_POINTS);
    io::write_text(&cfg.out.join("bench.csv"), &bench::bench_csv(&records))?;
    io::write_text(&cfg.out.join("profile.csv"), &bench::profile_csv(&profile))?;
    write_manifest(cfg, "bench")?;
    if let Some(last) = profile.last() {
        println!(
            "{} instances solved: MILP_FULL {}, DFSOM {}, MILP_TO_TARGET {}",
            inputs.len(),
            last.milp_full,
            last.dfsom,
            last.milp_to_target
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct DemoRow {
    u: f64,
    surrogate: Vec<f64>,
    restored: Vec<f64>,
    milp: Vec<f64>,
    milp_objective: f64,
}

/// The three-cut knapsack surrogate with its published coefficients.
pub fn demo(cfg: &RunConfig) -> Result<()> {
    if cfg.family != FamilyKind::Knapsack {
        log::warn!("demo always uses the knapsack family");
    }
    let spec = knapsack::default_spec();
    let theta = Theta::from_nested(&spec, &knapsack::published_theta(), cfg.trainer.theta_max)?;
    let mut rows = Vec::new();
    println!("{:>5}  {:>22}  {:>12}  {:>12}", "u", "surrogate LP", "restored", "MILP");
    for u in [1.45, 0.2, 0.61] {
        let milp = knapsack::instantiate(u);
        let cuts = assemble_cuts(&[u], &theta, &spec)?;
        let sol = solve_lp(&build_surrogate_lp(&milp, &cuts)?, surro_core::lp::DEFAULT_TOL)?;
        if !sol.is_optimal() {
            bail!("surrogate LP at u = {u} is {:?}", sol.status);
        }
        let restored = restore_feasibility(&milp, &sol.x)?;
        let exact = solve_milp(&milp, &MilpOptions::default())?;
        let x = exact.x.context("knapsack MILP has no solution")?;
        println!(
            "{u:>5}  ({:>9.4}, {:>9.4})  ({:>4}, {:>4})  ({:>4}, {:>4})",
            sol.x[0], sol.x[1], restored[0], restored[1], x[0], x[1]
        );
        rows.push(DemoRow {
            u,
            surrogate: sol.x,
            restored,
            milp: x,
            milp_objective: -exact.objective,
        });
    }
    io::write_json(&cfg.out.join("demo.json"), &rows)?;
    write_manifest(cfg, "demo")?;
    Ok(())
}
