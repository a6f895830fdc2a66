//! Dataset generation, held-out evaluation and the three-way timing benchmark.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::lp::{solve_lp, DEFAULT_TOL};
use crate::milp::{restore_feasibility, solve_milp, MilpOptions, MilpStatus, FEAS_TOL, INT_TOL};
use crate::model::{assemble_cuts, build_surrogate_lp, ConcreteMILP, SurrogateSpec, Theta};
use crate::par::{map_indexed, Execution};
use crate::problems::Family;
use crate::trainer::{TrainingItem, TrainingSet};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const FAMILY_FILE: &str = "family.json";

pub const EVAL_HEADER: &str = "instance,err_discrete,err_continuous,opt_gap,restored,pre_restore_delta";
pub const BENCH_HEADER: &str = "instance,method,wall_time_s,objective,status";
pub const PROFILE_HEADER: &str = "t_s,milp_full,dfsom,milp_to_target";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Relative MIP gap accepted for labels.
    pub label_gap: f64,
    pub time_limit_s: f64,
}

/// Family instance plus the label metadata written next to the datasets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(flatten)]
    pub family: Family,
    pub seed: u64,
    pub label_gap: f64,
}

/// Label `n_train + n_test` inputs drawn from `family`. Inputs whose label
/// solve hits the time limit are dropped and replaced by fresh draws; every
/// kept label is checked for integer feasibility.
pub fn generate_dataset(family: &Family, opts: &GenOptions, exec: Execution) -> Result<(TrainingSet, TrainingSet)> {
    if !(opts.label_gap >= 0.0) || !(opts.time_limit_s > 0.0) {
        return Err(Error::Config("label_gap must be >= 0 and time_limit_s > 0".into()));
    }
    let want = opts.n_train + opts.n_test;
    let milp_opts = MilpOptions {
        time_limit_s: opts.time_limit_s,
        ..MilpOptions::with_gap(opts.label_gap)
    };
    let mut items: Vec<TrainingItem> = Vec::with_capacity(want);
    let mut pool = want;
    let mut consumed = 0;
    while items.len() < want {
        // The input sequence is a fixed stream, so a longer draw extends the shorter one.
        let inputs = family.sample_inputs(pool, opts.seed)?;
        let fresh = &inputs[consumed..];
        let labels = map_indexed(exec, fresh.len(), |k| label_input(family, &fresh[k], &milp_opts).map_err(|e| e.at_instance(consumed + k)))?;
        for (k, label) in labels.into_iter().enumerate() {
            match label {
                Some(item) if items.len() < want => items.push(item),
                Some(_) => {}
                None => log::info!("input {} hit the label time limit; resampling", consumed + k),
            }
        }
        consumed = pool;
        if consumed >= 20 * want.max(1) {
            return Err(Error::Config(format!(
                "only {} of {want} labels solved within {} s",
                items.len(),
                opts.time_limit_s
            )));
        }
        pool += (want - items.len().min(want)).max(1);
    }
    let test = items.split_off(opts.n_train);
    let set = |items| TrainingSet {
        family: family.clone(),
        seed: opts.seed,
        items,
    };
    Ok((set(items), set(test)))
}

fn label_input(family: &Family, u: &[f64], opts: &MilpOptions) -> Result<Option<TrainingItem>> {
    let milp = family.instantiate(u)?;
    let sol = solve_milp(&milp, opts)?;
    match (sol.status, sol.x) {
        (MilpStatus::Optimal | MilpStatus::GapReached, Some(x)) => {
            if !milp.is_feasible(&x, INT_TOL, FEAS_TOL) {
                return Err(Error::Internal("label failed integer-feasibility validation".into()));
            }
            Ok(Some(TrainingItem {
                u: u.to_vec(),
                x_star: x,
                obj: sol.objective,
            }))
        }
        (MilpStatus::TimeLimit, _) => Ok(None),
        (status, _) => Err(Error::SolverFailure {
            iterations: sol.nodes,
            reason: format!("label solve ended {}", status.as_str()),
        }),
    }
}

pub fn save_dataset(dir: &Path, train: &TrainingSet, test: &TrainingSet, label_gap: f64) -> Result<()> {
    io::write_jsonl(&dir.join(TRAIN_FILE), &train.items)?;
    io::write_jsonl(&dir.join(TEST_FILE), &test.items)?;
    let meta = DatasetMeta {
        family: train.family.clone(),
        seed: train.seed,
        label_gap,
    };
    io::write_json(&dir.join(FAMILY_FILE), &meta)
}

pub fn load_meta(dir: &Path) -> Result<DatasetMeta> {
    io::read_json(&dir.join(FAMILY_FILE))
}

/// Read one split (`train.jsonl` or `test.jsonl`) with its family.
pub fn load_split(dir: &Path, file: &str) -> Result<TrainingSet> {
    let meta = load_meta(dir)?;
    let items = io::read_jsonl(&dir.join(file))?;
    Ok(TrainingSet {
        family: meta.family,
        seed: meta.seed,
        items,
    })
}

pub fn dataset_paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join(TRAIN_FILE), dir.join(TEST_FILE), dir.join(FAMILY_FILE)]
}

/// Metrics for one held-out input. Failed rows carry NaN metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance: usize,
    pub err_discrete: f64,
    pub err_continuous: f64,
    pub opt_gap: f64,
    pub restored: bool,
    pub pre_restore_delta: f64,
    pub failed: bool,
}

impl EvalRecord {
    fn failure(instance: usize) -> Self {
        EvalRecord {
            instance,
            err_discrete: f64::NAN,
            err_continuous: f64::NAN,
            opt_gap: f64::NAN,
            restored: true,
            pre_restore_delta: f64::NAN,
            failed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub n_failed: usize,
    pub n_restored: usize,
    pub mean_err_discrete: f64,
    pub mean_err_continuous: f64,
    pub mean_opt_gap: f64,
    pub mean_pre_restore_delta: f64,
    /// Share of evaluated inputs whose restored solution equals the label.
    pub exact_fraction: f64,
}

/// Surrogate prediction before and after feasibility restoration.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub raw: Vec<f64>,
    pub x: Vec<f64>,
    pub restored: bool,
}

/// Assemble cuts, solve the surrogate LP, restore if the integer block is fractional.
pub fn predict(milp: &ConcreteMILP, theta: &Theta, spec: &SurrogateSpec) -> Result<Prediction> {
    let cuts = assemble_cuts(&milp.input, theta, spec)?;
    let lp = build_surrogate_lp(milp, &cuts)?;
    let sol = solve_lp(&lp, DEFAULT_TOL)?;
    if !sol.is_optimal() {
        return Err(Error::SolverFailure {
            iterations: sol.iterations,
            reason: format!("surrogate LP is {:?}", sol.status),
        });
    }
    if milp.is_integral(&sol.x, INT_TOL) {
        return Ok(Prediction {
            x: sol.x.clone(),
            raw: sol.x,
            restored: false,
        });
    }
    let x = restore_feasibility(milp, &sol.x)?;
    Ok(Prediction {
        raw: sol.x,
        x,
        restored: true,
    })
}

// `+ 0.0` turns the empty float sum (-0.0) into 0.
fn block_l1(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&j| (a[j] - b[j]).abs()).sum::<f64>() + 0.0
}

fn block_norm(a: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&j| a[j].abs()).sum::<f64>() + 0.0
}

/// Metrics of a (feasible) prediction against its label.
pub fn metrics(instance: usize, milp: &ConcreteMILP, item: &TrainingItem, pred: &Prediction) -> EvalRecord {
    let ints = milp.integer_indices();
    let conts = milp.continuous_indices();
    let x_star = &item.x_star;
    let rel = |idx: &[usize]| block_l1(&pred.x, x_star, idx) / block_norm(x_star, idx).max(1.0);
    let obj_star = milp.lp.objective(x_star);
    let all: Vec<usize> = (0..milp.n_vars()).collect();
    EvalRecord {
        instance,
        err_discrete: rel(&ints),
        err_continuous: rel(&conts),
        opt_gap: (milp.lp.objective(&pred.x) - obj_star) / obj_star.abs().max(1.0),
        restored: pred.restored,
        pre_restore_delta: block_l1(&pred.raw, &pred.x, &all) / block_norm(x_star, &all).max(1.0),
        failed: false,
    }
}

pub fn evaluate(
    theta: &Theta,
    spec: &SurrogateSpec,
    test: &TrainingSet,
    exec: Execution,
) -> Result<(Vec<EvalRecord>, EvalSummary)> {
    let records = map_indexed(exec, test.items.len(), |i| {
        let item = &test.items[i];
        let milp = test.family.instantiate(&item.u).map_err(|e| e.at_instance(i))?;
        match predict(&milp, theta, spec) {
            // Feasibility is rechecked here rather than trusted from restoration.
            Ok(pred) if milp.is_feasible(&pred.x, INT_TOL, FEAS_TOL) => Ok(metrics(i, &milp, item, &pred)),
            Ok(_) | Err(Error::RestorationInfeasible) => {
                log::warn!("instance {i}: no feasible restored solution");
                Ok(EvalRecord::failure(i))
            }
            Err(e) => Err(e.at_instance(i)),
        }
    })?;
    let summary = summarize(&records);
    Ok((records, summary))
}

pub fn summarize(records: &[EvalRecord]) -> EvalSummary {
    let ok: Vec<&EvalRecord> = records.iter().filter(|r| !r.failed).collect();
    let mean = |f: fn(&EvalRecord) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
        }
    };
    EvalSummary {
        n: records.len(),
        n_failed: records.len() - ok.len(),
        n_restored: ok.iter().filter(|r| r.restored).count(),
        mean_err_discrete: mean(|r| r.err_discrete),
        mean_err_continuous: mean(|r| r.err_continuous),
        mean_opt_gap: mean(|r| r.opt_gap),
        mean_pre_restore_delta: mean(|r| r.pre_restore_delta),
        exact_fraction: if ok.is_empty() {
            0.0
        } else {
            ok.iter().filter(|r| r.err_discrete + r.err_continuous <= 1e-9).count() as f64 / ok.len() as f64
        },
    }
}

pub fn eval_csv(records: &[EvalRecord]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance, r.err_discrete, r.err_continuous, r.opt_gap, r.restored, r.pre_restore_delta
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    MilpFull,
    Dfsom,
    MilpToTarget,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MilpFull => "MILP_FULL",
            Method::Dfsom => "DFSOM",
            Method::MilpToTarget => "MILP_TO_TARGET",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance: usize,
    pub method: Method,
    pub wall_time_s: f64,
    pub objective: f64,
    pub status: String,
}

impl BenchRecord {
    pub fn solved(&self) -> bool {
        matches!(self.status.as_str(), "OPTIMAL" | "TARGET_REACHED" | "GAP_REACHED" | "FEASIBLE")
    }
}

/// Time the surrogate pipeline, then the full MILP, then the MILP stopped at
/// the surrogate's objective, one instance and one solve at a time.
pub fn run_benchmark(
    theta: &Theta,
    spec: &SurrogateSpec,
    family: &Family,
    inputs: &[Vec<f64>],
    time_limit_s: f64,
) -> Result<Vec<BenchRecord>> {
    let mut records = Vec::with_capacity(3 * inputs.len());
    for (i, u) in inputs.iter().enumerate() {
        let milp = family.instantiate(u).map_err(|e| e.at_instance(i))?;

        let start = Instant::now();
        let pred = predict(&milp, theta, spec);
        let dfsom_time = start.elapsed().as_secs_f64();
        let (dfsom_obj, dfsom_status) = match pred {
            Ok(p) => (milp.lp.objective(&p.x), "FEASIBLE"),
            Err(Error::RestorationInfeasible) => (f64::NAN, "INFEASIBLE"),
            Err(e) => return Err(e.at_instance(i)),
        };
        records.push(BenchRecord {
            instance: i,
            method: Method::Dfsom,
            wall_time_s: dfsom_time,
            objective: dfsom_obj,
            status: dfsom_status.into(),
        });

        let full = MilpOptions {
            time_limit_s,
            ..MilpOptions::default()
        };
        records.push(timed_milp(i, Method::MilpFull, &milp, &full)?);

        let target = MilpOptions {
            target: dfsom_obj.is_finite().then_some(dfsom_obj),
            ..full
        };
        records.push(timed_milp(i, Method::MilpToTarget, &milp, &target)?);
    }
    Ok(records)
}

fn timed_milp(i: usize, method: Method, milp: &ConcreteMILP, opts: &MilpOptions) -> Result<BenchRecord> {
    let start = Instant::now();
    let sol = solve_milp(milp, opts).map_err(|e| e.at_instance(i))?;
    let wall = start.elapsed().as_secs_f64();
    Ok(BenchRecord {
        instance: i,
        method,
        wall_time_s: wall,
        objective: sol.objective,
        status: sol.status.as_str().into(),
    })
}

pub fn bench_csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.instance,
            r.method.as_str(),
            r.wall_time_s,
            r.objective,
            r.status
        ));
    }
    out
}

/// One row of the performance profile: solved-instance counts at time `t_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfilePoint {
    pub t_s: f64,
    pub milp_full: usize,
    pub dfsom: usize,
    pub milp_to_target: usize,
}

/// Cumulative solved counts on a log-spaced grid of `points` times spanning
/// every recorded wall time.
pub fn performance_profile(records: &[BenchRecord], points: usize) -> Vec<ProfilePoint> {
    let times: Vec<f64> = records.iter().map(|r| r.wall_time_s.max(1e-9)).collect();
    if times.is_empty() || points == 0 {
        return vec![];
    }
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(0.0, f64::max);
    let grid: Vec<f64> = if points == 1 || hi <= lo {
        vec![hi]
    } else {
        let (a, b) = (lo.ln(), hi.ln());
        (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
    };
    let count = |m: Method, t: f64| {
        records
            .iter()
            .filter(|r| r.method == m && r.solved() && r.wall_time_s.max(1e-9) <= t * (1.0 + 1e-12))
            .count()
    };
    grid.into_iter()
        .map(|t| ProfilePoint {
            t_s: t,
            milp_full: count(Method::MilpFull, t),
            dfsom: count(Method::Dfsom, t),
            milp_to_target: count(Method::MilpToTarget, t),
        })
        .collect()
}

pub fn profile_csv(profile: &[ProfilePoint]) -> String {
    let mut out = format!("{PROFILE_HEADER}\n");
    for p in profile {
        out.push_str(&format!("{},{},{},{}\n", p.t_s, p.milp_full, p.dfsom, p.milp_to_target));
    }
    out
}
