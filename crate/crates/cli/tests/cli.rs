use std::path::{Path, PathBuf};
use std::process::Command;

use spsd_cli::config::{BenchKind, ExperimentConfig, ModelKind, SigmaSpec, SizeSpec, Task};
use spsd_cli::io::{ingest_grayscale_image, ingest_libsvm, write_grayscale_image, write_libsvm};
use spsd_cli::record::SWEEP_COLUMNS;
use spsd_cli::run;
use spsd_core::kernel::Dataset;
use spsd_core::oracle_bench::gaussian_matrix;
use spsd_core::DenseMatrix;
use tempfile::TempDir;

fn spsd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_spsd"))
        .args(args)
        .env_remove("SPSD_THREADS")
        .output()
        .unwrap()
}

/// Gaussian points with about a third of the features zeroed.
fn sparse_points(n: usize, d: usize, seed: u64) -> Dataset {
    let g = gaussian_matrix(n, d, seed);
    let pts = DenseMatrix::from_fn(n, d, |i, j| if (i + 2 * j) % 3 == 0 { 0.0 } else { g[(i, j)] });
    let labels = (0..n).map(|i| (i % 3) as f64).collect();
    Dataset::new(pts, Some(labels)).unwrap()
}

fn write_points(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("points.scale");
    write_libsvm(&path, &sparse_points(n, 6, 3)).unwrap();
    path
}

fn base_config(task: Task) -> ExperimentConfig {
    ExperimentConfig {
        task,
        data: None,
        format: None,
        subsample: None,
        model: ModelKind::Fast,
        sketch: spsd_core::sketch::SketchMethod::Leverage,
        select: spsd_core::cur::SelectionMethod::Leverage,
        c: 5,
        r: None,
        s: SizeSpec::Auto,
        eps: 0.5,
        sigma: SigmaSpec::Value(2.0),
        eta_target: 0.9,
        k: None,
        seed: 7,
        trials: 4,
        bench: None,
        n: None,
        m: None,
        alpha: 0.999,
        out: None,
        csv: None,
        no_timings: false,
        threads: Some(1),
    }
}

#[test]
fn libsvm_round_trip_is_exact() {
    let dir = TempDir::new().unwrap();
    let original = sparse_points(40, 9, 11);
    let path = dir.path().join("rt.scale");
    write_libsvm(&path, &original).unwrap();
    let back = ingest_libsvm(&path).unwrap();
    assert_eq!(back.labels(), original.labels());
    assert!(back.points().max_abs_diff(original.points()) <= 1e-15);
}

#[test]
fn pgm_reading_and_eight_bit_round_trip() {
    let dir = TempDir::new().unwrap();
    let plain = dir.path().join("p2.pgm");
    std::fs::write(&plain, "P2\n# tiny\n3 2\n255\n0 128 255\n255 0 51\n").unwrap();
    let m = ingest_grayscale_image(&plain).unwrap();
    assert_eq!(m.shape(), (2, 3));
    assert_eq!(m[(0, 2)], 1.0);
    assert_eq!(m[(0, 0)], 0.0);
    assert_eq!(m[(1, 2)], 51.0 / 255.0);

    let levels = DenseMatrix::from_fn(17, 23, |i, j| ((i * 31 + j * 7) % 256) as f64 / 255.0);
    let raw = dir.path().join("p5.pgm");
    write_grayscale_image(&raw, &levels).unwrap();
    assert_eq!(ingest_grayscale_image(&raw).unwrap(), levels);

    // off-grid values land on the nearest level
    let noisy = levels.map(|v| (v + 0.3 / 255.0).min(1.0));
    write_grayscale_image(&raw, &noisy).unwrap();
    assert!(ingest_grayscale_image(&raw).unwrap().max_abs_diff(&noisy) <= 0.5 / 255.0);

    std::fs::write(&raw, "P2\n2 1\n255\n0\n").unwrap();
    assert!(ingest_grayscale_image(&raw).is_err());
}

#[test]
fn approx_sweep_writes_one_csv_row_per_size() {
    let dir = TempDir::new().unwrap();
    let data = write_points(dir.path(), 120);
    let csv = dir.path().join("sweep.csv");
    let out = spsd(&[
        "--task", "approx", "--model", "fast", "--data", data.to_str().unwrap(), "--sigma", "2",
        "--c", "5", "--s", "10,20,40", "--trials", "3", "--csv", csv.to_str().unwrap(),
        "--out", dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, SWEEP_COLUMNS);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (row, s) in rows.iter().zip(["10", "20", "40"]) {
        assert_eq!(&row[0], s);
        let err: f64 = row[5].parse().unwrap();
        assert!(err > 0.0 && err < 1.0);
    }
}

#[test]
fn lower_bound_bench_record_clears_the_formula() {
    let mut cfg = base_config(Task::Bench);
    cfg.bench = Some(BenchKind::LowerBound);
    cfg.c = 30;
    cfg.trials = 5;
    let rec = run(&cfg).unwrap();
    assert_eq!(rec.points.len(), 2);
    for p in &rec.points {
        let rhs = p.bound.unwrap();
        for t in &p.trials {
            assert!(t.value.unwrap() >= rhs, "s={} ratio {:?} < {rhs}", p.s, t.value);
        }
        assert_eq!(p.summary.success_rate, Some(1.0));
    }
}

#[test]
fn same_seed_gives_byte_identical_json() {
    let dir = TempDir::new().unwrap();
    let data = write_points(dir.path(), 90);
    let outs: Vec<String> = ["1", "2", "1"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out = dir.path().join(format!("run{i}.json"));
            let st = spsd(&[
                "--task", "kpca", "--data", data.to_str().unwrap(), "--sigma", "auto", "--k", "3",
                "--c", "6", "--s", "12,24", "--trials", "4", "--seed", "5", "--no-timings",
                "--threads", threads, "--out", out.to_str().unwrap(),
            ]);
            assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
            std::fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
    assert!(outs[0].contains("\"schema_version\": 1"));
    assert!(!outs[0].contains("timings\": {"));

    // with timings on, everything but the timings still matches
    let mut cfg = base_config(Task::Spectral);
    cfg.data = Some(data);
    cfg.k = Some(3);
    cfg.s = SizeSpec::Values(vec![15]);
    let a = run(&cfg).unwrap();
    cfg.threads = Some(2);
    let b = run(&cfg).unwrap();
    assert!(a.points[0].trials.iter().all(|t| t.timings.as_ref().unwrap().values().all(|&v| v >= 0.0)));
    assert_eq!(a.without_timings().to_json().unwrap(), b.without_timings().to_json().unwrap());
}

#[test]
fn every_task_and_model_runs() {
    let dir = TempDir::new().unwrap();
    let data = write_points(dir.path(), 80);
    for task in [Task::Approx, Task::Kpca, Task::Spectral, Task::Cur] {
        for model in [ModelKind::Nystrom, ModelKind::Prototype, ModelKind::Fast] {
            let mut cfg = base_config(task);
            cfg.data = Some(data.clone());
            cfg.model = model;
            cfg.k = Some(2);
            cfg.c = 4;
            cfg.trials = 2;
            let rec = run(&cfg).unwrap_or_else(|e| panic!("{task:?} {model:?}: {e}"));
            assert_eq!(rec.failures, 0, "{task:?} {model:?}: {:?}", rec.points[0].trials[0].error);
            for t in &rec.points[0].trials {
                let ratio = t.objective_ratio.unwrap();
                assert!(ratio >= 1.0 - 1e-9, "{task:?} {model:?}: ratio {ratio}");
                if model == ModelKind::Prototype {
                    assert!((ratio - 1.0).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn cur_runs_on_an_image() {
    let dir = TempDir::new().unwrap();
    let img = DenseMatrix::from_fn(40, 50, |i, j| {
        (((i as f64 / 6.0).sin() * (j as f64 / 9.0).cos() + 1.0) * 127.5).round() / 255.0
    });
    let path = dir.path().join("img.pgm");
    write_grayscale_image(&path, &img).unwrap();
    let mut cfg = base_config(Task::Cur);
    cfg.data = Some(path);
    cfg.c = 6;
    cfg.s = SizeSpec::Values(vec![12, 24]);
    let rec = run(&cfg).unwrap();
    assert_eq!(rec.failures, 0);
    let info = rec.dataset.unwrap();
    assert_eq!((info.n, info.d), (40, 50));
    for p in &rec.points {
        for t in &p.trials {
            assert!(t.entries.unwrap() < 40 * 50);
            assert!(t.rel_fro_error.unwrap() < 0.1);
        }
    }
}

#[test]
fn trial_failures_set_a_nonzero_exit_status() {
    let dir = TempDir::new().unwrap();
    let data = write_points(dir.path(), 30);
    let out = dir.path().join("r.json");
    let st = spsd(&[
        "--task", "approx", "--data", data.to_str().unwrap(), "--sigma", "1", "--sketch", "srht",
        "--c", "3", "--s", "10,64", "--trials", "2", "--out", out.to_str().unwrap(),
    ]);
    assert!(!st.status.success());
    let rec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(rec["failures"], 2);
    assert_eq!(rec["points"][0]["summary"]["failed"], 0);
    assert!(rec["points"][1]["trials"][0]["error"].is_string());

    let st = spsd(&["--task", "approx", "--data", "/nonexistent.scale", "--sigma", "1"]);
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("nonexistent"));

    let bad = dir.path().join("bad.scale");
    std::fs::write(&bad, "1 1:2\n1 1:x\n").unwrap();
    let st = spsd(&["--task", "approx", "--data", bad.to_str().unwrap(), "--sigma", "1"]);
    assert!(String::from_utf8_lossy(&st.stderr).contains("line 2"));

    let st = spsd(&["--task", "kpca", "--data", data.to_str().unwrap()]);
    assert!(!st.status.success());
}
