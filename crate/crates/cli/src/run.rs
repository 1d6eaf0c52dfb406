//! Task pipelines behind the `spsd` binary.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use spsd_core::cur::{cur_sketch, select_indices, selection_weights, u_fast_cur, u_opt_cur};
use spsd_core::kernel::{calibrate_sigma, Dataset, KernelSource};
use spsd_core::linalg::{orthonormal_basis, pinv, sym_eig_topk, Side, DEFAULT_RANK_TOL};
use spsd_core::oracle_bench::{
    fast_cur_trial, fast_vs_prototype_trial, gaussian_matrix, gaussian_points, lower_bound_rhs,
    lower_bound_trial, misalignment, objective_ratio, rbf_kernel, rel_fro_error, uniform_indices,
    AdversarialSpec, CurInstance, LowerBoundInstance,
};
use spsd_core::rng::derive_seed;
use spsd_core::sketch::{recommended_cur_s, recommended_s, row_coherence, ScaleMode, SizeRecipe, SketchMethod, SketchOp};
use spsd_core::solvers::{eig_lowrank, kpca_fit, spectral_embedding};
use spsd_core::source::{CountingMatrix, EntrySource};
use spsd_core::spsd::{draw_sketch, fast_model, form_c, u_nystrom, u_prototype, FastConfig, LowRankSym};
use spsd_core::DenseMatrix;
use thiserror::Error;

use crate::config::{BenchKind, ConfigError, DataFormat, ExperimentConfig, ModelKind, SigmaSpec, SizeSpec, Task};
use crate::io::{ingest_csv, ingest_grayscale_image, ingest_libsvm, IngestError};
use crate::record::{DatasetInfo, ResultRecord, SweepPoint, TrialMetrics};

/// Tolerance on the spectral share when calibrating sigma.
pub const SIGMA_TOL: f64 = 1e-3;
/// Feature dimension of the synthetic points used by `--bench fast-vs-prototype`.
pub const SYNTHETIC_DIM: usize = 10;

const SUBSAMPLE_STREAM: u64 = 0x5ab5;
const INSTANCE_STREAM: u64 = 0x1257;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] spsd_core::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

type CoreResult<T> = spsd_core::Result<T>;

/// Runs the configured task. Per-trial failures are recorded in the result
/// rather than returned; only setup errors surface as `Err`.
pub fn run(config: &ExperimentConfig) -> Result<ResultRecord, RunError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()?;
    pool.install(|| match config.task {
        Task::Approx | Task::Kpca | Task::Spectral => kernel_task(config),
        Task::Cur => cur_task(config),
        Task::Bench => bench_task(config),
    })
}

#[derive(Default)]
struct Stopwatch(BTreeMap<String, f64>);

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.0.entry(stage.to_string()).or_default() += t.elapsed().as_secs_f64();
        out
    }
}

/// Runs `config.trials` trials concurrently. Trial `i` gets the seed
/// `derive_seed(config.seed, i)` at every sweep point.
fn run_point<F>(config: &ExperimentConfig, trial: F) -> Vec<TrialMetrics>
where
    F: Fn(u64, &mut Stopwatch) -> CoreResult<TrialMetrics> + Sync,
{
    (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, i as u64);
            let mut watch = Stopwatch::default();
            let mut m = trial(seed, &mut watch).unwrap_or_else(|e| TrialMetrics {
                error: Some(e.to_string()),
                ..Default::default()
            });
            m.trial = i;
            m.seed = seed;
            m.timings = (!config.no_timings && m.error.is_none()).then_some(watch.0);
            m
        })
        .collect()
}

fn data_path(config: &ExperimentConfig) -> Result<&Path, ConfigError> {
    config
        .data
        .as_deref()
        .ok_or_else(|| ConfigError("this task needs --data".into()))
}

fn subsample(data: Dataset, config: &ExperimentConfig) -> Result<Dataset, RunError> {
    match config.subsample {
        Some(m) if m < data.n() => {
            let idx = uniform_indices(data.n(), m, derive_seed(config.seed, SUBSAMPLE_STREAM));
            Ok(data.subset(&idx)?)
        }
        _ => Ok(data),
    }
}

/// Points for the kernel tasks.
pub fn load_points(config: &ExperimentConfig) -> Result<Dataset, RunError> {
    let path = data_path(config)?;
    let data = match config.data_format() {
        DataFormat::Libsvm => ingest_libsvm(path)?,
        DataFormat::Csv => ingest_csv(path)?,
        DataFormat::Pgm => return Err(ConfigError("kernel tasks need point data, not an image".into()).into()),
    };
    subsample(data, config)
}

/// Matrix for the CUR task: an image, or the point matrix of a dataset.
pub fn load_matrix(config: &ExperimentConfig) -> Result<DenseMatrix, RunError> {
    let path = data_path(config)?;
    match config.data_format() {
        DataFormat::Pgm => Ok(ingest_grayscale_image(path)?),
        DataFormat::Libsvm => Ok(subsample(ingest_libsvm(path)?, config)?.points().clone()),
        DataFormat::Csv => Ok(subsample(ingest_csv(path)?, config)?.points().clone()),
    }
}

fn resolve_sigma(config: &ExperimentConfig, data: &Arc<Dataset>) -> Result<(f64, bool), RunError> {
    match config.sigma {
        SigmaSpec::Value(v) => Ok((v, false)),
        SigmaSpec::Auto => {
            let k = config.k.ok_or_else(|| ConfigError("--sigma auto needs --k".into()))?;
            Ok((calibrate_sigma(data, k, config.eta_target, SIGMA_TOL)?, true))
        }
    }
}

fn recipe(method: SketchMethod, coherence: f64) -> SizeRecipe {
    match method {
        SketchMethod::Uniform => SizeRecipe::Uniform { coherence },
        SketchMethod::Leverage => SizeRecipe::Leverage,
        SketchMethod::Gaussian => SizeRecipe::Gaussian,
        SketchMethod::Srht => SizeRecipe::Srht,
        SketchMethod::CountSketch => SizeRecipe::CountSketch,
    }
}

fn check_c(c: usize, n: usize, what: &str) -> Result<(), ConfigError> {
    if c > n {
        return Err(ConfigError(format!("{what} = {c} exceeds the matrix order {n}")));
    }
    Ok(())
}

fn kernel_task(config: &ExperimentConfig) -> Result<ResultRecord, RunError> {
    let data = Arc::new(load_points(config)?);
    let n = data.n();
    let c = config.c;
    check_c(c, n, "--c")?;
    if let Some(k) = config.k {
        check_c(k, n, "--k")?;
    }
    let (sigma, calibrated) = resolve_sigma(config, &data)?;
    let kmat = rbf_kernel(&data, sigma)?;

    let reference = match (config.task, config.k) {
        (Task::Spectral, Some(k)) => {
            let exact = LowRankSym::new(DenseMatrix::identity(n), kmat.clone())?;
            Some(orthonormal_basis(&spectral_embedding(&exact, k)?, DEFAULT_RANK_TOL)?)
        }
        (_, Some(k)) => Some(sym_eig_topk(&kmat, k)?.vectors),
        (_, None) => None,
    };
    let trial_p = |seed: u64| SketchOp::select(n, &uniform_indices(n, c, derive_seed(seed, 0)));

    let sizes = match config.model {
        ModelKind::Nystrom => vec![c],
        ModelKind::Prototype => vec![n],
        ModelKind::Fast => match &config.s {
            SizeSpec::Values(v) => v.clone(),
            SizeSpec::Auto => {
                let coherence = match config.sketch {
                    SketchMethod::Uniform => {
                        let p = trial_p(derive_seed(config.seed, 0))?;
                        row_coherence(&form_c(&kmat, &p)?, DEFAULT_RANK_TOL)?
                    }
                    _ => 1.0,
                };
                vec![recommended_s(recipe(config.sketch, coherence), n, c, config.eps)?]
            }
        },
    };

    let points = sizes
        .into_iter()
        .map(|s| {
            let fast = |seed: u64| FastConfig {
                method: config.sketch,
                ..FastConfig::new(s, derive_seed(seed, 1))
            };
            let trials = run_point(config, |seed, watch| {
                let src = KernelSource::new(Arc::clone(&data), sigma)?;
                let p = trial_p(seed)?;
                let model = watch.time("fit", || -> CoreResult<LowRankSym> {
                    match config.model {
                        ModelKind::Nystrom => u_nystrom(&form_c(&src, &p)?, &p),
                        ModelKind::Prototype => u_prototype(&src, &form_c(&src, &p)?),
                        ModelKind::Fast => Ok(fast_model(&src, &p, &fast(seed))?.model),
                    }
                })?;
                let entries = src.entries();
                let s_effective = match config.model {
                    ModelKind::Fast => draw_sketch(model.c(), &p, &fast(seed))?.s(),
                    _ => s,
                };
                let (rel, ratio) = watch.time("evaluate", || -> CoreResult<(f64, f64)> {
                    let proto = u_prototype(&kmat, model.c())?;
                    Ok((rel_fro_error(&kmat, &model)?, objective_ratio(&kmat, &model, &proto)?))
                })?;
                let mis = watch.time("downstream", || -> CoreResult<Option<f64>> {
                    let (Some(u_k), Some(k)) = (&reference, config.k) else {
                        return Ok(None);
                    };
                    let approx = match config.task {
                        Task::Kpca => kpca_fit(&model, k, &src)?.vectors,
                        Task::Spectral => orthonormal_basis(&spectral_embedding(&model, k)?, DEFAULT_RANK_TOL)?,
                        _ => eig_lowrank(&model, k)?.vectors,
                    };
                    misalignment(u_k, &approx).map(Some)
                })?;
                Ok(TrialMetrics {
                    s_effective: Some(s_effective),
                    rel_fro_error: Some(rel),
                    objective_ratio: Some(ratio),
                    misalignment: mis,
                    entries: Some(entries),
                    ..Default::default()
                })
            });
            SweepPoint::new(s, None, n, None, trials)
        })
        .collect();

    let info = DatasetInfo {
        n,
        d: data.d(),
        sigma: Some(sigma),
        sigma_calibrated: calibrated,
    };
    Ok(ResultRecord::new(config.clone(), Some(info), points))
}

fn cur_task(config: &ExperimentConfig) -> Result<ResultRecord, RunError> {
    let a = load_matrix(config)?;
    let (m, n) = a.shape();
    let (c, r) = (config.c, config.rows());
    check_c(c, n, "--c")?;
    check_c(r, m, "--r")?;
    let col_w = selection_weights(&a, config.select, Side::Column)?;
    let row_w = selection_weights(&a, config.select, Side::Row)?;
    let pick = |seed: u64| -> CoreResult<(Vec<usize>, Vec<usize>)> {
        Ok((
            select_indices(&col_w, c, derive_seed(seed, 0))?,
            select_indices(&row_w, r, derive_seed(seed, 1))?,
        ))
    };

    let sizes: Vec<(usize, usize)> = match config.model {
        ModelKind::Nystrom => vec![(r, c)],
        ModelKind::Prototype => vec![(m, n)],
        ModelKind::Fast => match &config.s {
            SizeSpec::Values(v) => v.iter().map(|&s| (s, s)).collect(),
            SizeSpec::Auto => {
                let (mu, nu) = match config.sketch {
                    SketchMethod::Uniform => {
                        let (ci, ri) = pick(derive_seed(config.seed, 0))?;
                        (
                            row_coherence(&a.select_cols(&ci), DEFAULT_RANK_TOL)?,
                            row_coherence(&a.select_rows(&ri).transpose(), DEFAULT_RANK_TOL)?,
                        )
                    }
                    _ => (1.0, 1.0),
                };
                vec![recommended_cur_s(recipe(config.sketch, mu), m, n, c, r, config.eps, Some(nu))?]
            }
        },
    };

    let points = sizes
        .into_iter()
        .map(|(s_c, s_r)| {
            let trials = run_point(config, |seed, watch| {
                let src = CountingMatrix::new(a.clone());
                let (col_idx, row_idx) = pick(seed)?;
                let (cm, rm, u, s_eff) = watch.time("fit", || -> CoreResult<_> {
                    let cm = src.columns(&col_idx)?;
                    let rm = src.rows(&row_idx)?;
                    let (u, s_eff) = match config.model {
                        ModelKind::Nystrom => (pinv(&cm.select_rows(&row_idx), DEFAULT_RANK_TOL)?, r),
                        ModelKind::Prototype => (u_opt_cur(&src.full()?, &cm, &rm)?, m),
                        ModelKind::Fast => {
                            let sc = cur_sketch(&cm, config.sketch, s_c, ScaleMode::Unscaled, &row_idx, derive_seed(seed, 2))?;
                            let sr = cur_sketch(
                                &rm.transpose(),
                                config.sketch,
                                s_r,
                                ScaleMode::Unscaled,
                                &col_idx,
                                derive_seed(seed, 3),
                            )?;
                            (u_fast_cur(&src, &cm, &rm, &sc, &sr)?, sc.s())
                        }
                    };
                    Ok((cm, rm, u, s_eff))
                })?;
                let entries = src.entries();
                let (rel, ratio) = watch.time("evaluate", || -> CoreResult<(f64, f64)> {
                    let obj = |u: &DenseMatrix| a.sub(&cm.matmul(u).matmul(&rm)).frobenius_norm_sq();
                    let total = a.frobenius_norm_sq();
                    let (mine, best) = (obj(&u), obj(&u_opt_cur(&a, &cm, &rm)?));
                    let ratio = if best > 0.0 {
                        mine / best
                    } else if mine == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    };
                    Ok((if total > 0.0 { mine / total } else { mine }, ratio))
                })?;
                Ok(TrialMetrics {
                    s_effective: Some(s_eff),
                    rel_fro_error: Some(rel),
                    objective_ratio: Some(ratio),
                    entries: Some(entries),
                    ..Default::default()
                })
            });
            SweepPoint::new(s_c, Some(s_r), m, None, trials)
        })
        .collect();

    let info = DatasetInfo {
        n: m,
        d: n,
        sigma: None,
        sigma_calibrated: false,
    };
    Ok(ResultRecord::new(config.clone(), Some(info), points))
}

fn bench_task(config: &ExperimentConfig) -> Result<ResultRecord, RunError> {
    let kind = config
        .bench
        .ok_or_else(|| ConfigError("--task bench needs --bench".into()))?;
    let c = config.c;
    let explicit = |fallback: Vec<usize>| match &config.s {
        SizeSpec::Values(v) => v.clone(),
        SizeSpec::Auto => fallback,
    };
    match kind {
        BenchKind::LowerBound => {
            let n = config.n.unwrap_or(600);
            let k = config.k.unwrap_or(6);
            let inst = LowerBoundInstance::new(AdversarialSpec::new(n, k, config.alpha)?)?;
            check_c(c, n, "--c")?;
            let points = explicit(vec![2 * c, 4 * c])
                .into_iter()
                .map(|s| {
                    let rhs = lower_bound_rhs(n, c, s, k).ok();
                    let trials = run_point(config, |seed, watch| {
                        let m = watch.time("trial", || lower_bound_trial(&inst, c, s, seed))?;
                        Ok(TrialMetrics {
                            value: Some(m.ratio),
                            success: Some(m.ratio >= m.rhs),
                            ..Default::default()
                        })
                    });
                    SweepPoint::new(s, None, n, rhs, trials)
                })
                .collect();
            let info = DatasetInfo {
                n,
                d: n,
                sigma: None,
                sigma_calibrated: false,
            };
            Ok(ResultRecord::new(config.clone(), Some(info), points))
        }
        BenchKind::FastVsPrototype => {
            let data = match &config.data {
                Some(_) => Arc::new(load_points(config)?),
                None => gaussian_points(
                    config.n.unwrap_or(500),
                    SYNTHETIC_DIM,
                    derive_seed(config.seed, INSTANCE_STREAM),
                )?,
            };
            let n = data.n();
            check_c(c, n, "--c")?;
            let (sigma, calibrated) = resolve_sigma(config, &data)?;
            let kmat = rbf_kernel(&data, sigma)?;
            let sizes = explicit(vec![recommended_s(SizeRecipe::Leverage, n, c, config.eps)?]);
            let points = sizes
                .into_iter()
                .map(|s| {
                    let trials = run_point(config, |seed, watch| {
                        let o = watch.time("trial", || fast_vs_prototype_trial(&kmat, c, s, config.eps, seed))?;
                        Ok(TrialMetrics {
                            objective_ratio: Some(o.value),
                            value: Some(o.value),
                            success: Some(o.success),
                            ..Default::default()
                        })
                    });
                    SweepPoint::new(s, None, n, Some(1.0 + config.eps), trials)
                })
                .collect();
            let info = DatasetInfo {
                n,
                d: data.d(),
                sigma: Some(sigma),
                sigma_calibrated: calibrated,
            };
            Ok(ResultRecord::new(config.clone(), Some(info), points))
        }
        BenchKind::FastCur => {
            let (m, n) = (config.m.unwrap_or(300), config.n.unwrap_or(400));
            let r = config.rows();
            check_c(c, n, "--c")?;
            check_c(r, m, "--r")?;
            let inst = CurInstance::new(gaussian_matrix(m, n, derive_seed(config.seed, INSTANCE_STREAM)))?;
            let sizes: Vec<(usize, usize)> = match &config.s {
                SizeSpec::Values(v) => v.iter().map(|&s| (s, s)).collect(),
                SizeSpec::Auto => vec![recommended_cur_s(SizeRecipe::Leverage, m, n, c, r, config.eps, None)?],
            };
            let points = sizes
                .into_iter()
                .map(|(s_c, s_r)| {
                    let trials = run_point(config, |seed, watch| {
                        let o = watch.time("trial", || fast_cur_trial(&inst, c, r, s_c, s_r, config.eps, seed))?;
                        Ok(TrialMetrics {
                            objective_ratio: Some(o.value),
                            value: Some(o.value),
                            success: Some(o.success),
                            ..Default::default()
                        })
                    });
                    SweepPoint::new(s_c, Some(s_r), m, Some(1.0 + config.eps), trials)
                })
                .collect();
            let info = DatasetInfo {
                n: m,
                d: n,
                sigma: None,
                sigma_calibrated: false,
            };
            Ok(ResultRecord::new(config.clone(), Some(info), points))
        }
    }
}
