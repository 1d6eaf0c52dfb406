use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use spsd_core::kernel::{Dataset, KernelSource};
use spsd_core::linalg::{inverse, sym_eig_topk};
use spsd_core::oracle_bench::{
    adversarial_matrix, gaussian_matrix, lower_bound_rhs, lower_bound_trial, run_trials, structured_inverse,
    tail_energy, uniform_indices, AdversarialSpec, LowerBoundInstance, TrialOutcome,
};
use spsd_core::rng::seeded;
use spsd_core::sketch::SketchOp;
use spsd_core::solvers::{eig_lowrank, kpca_fit, WoodburySolver};
use spsd_core::source::EntrySource;
use spsd_core::spsd::{form_c, u_prototype, LowRankSym};
use spsd_core::DenseMatrix;

#[test]
fn lower_bound_holds_on_block_matrix() {
    let spec = AdversarialSpec::new(600, 6, 0.999).unwrap();
    let inst = LowerBoundInstance::new(spec).unwrap();
    let closed = (1.0 - 0.999f64).powi(2) * 594.0;
    assert!((inst.tail_energy - closed).abs() <= 1e-6 * closed);
    for s in [60, 120] {
        let rhs = lower_bound_rhs(600, 30, s, 6).unwrap();
        let rep = run_trials(20, s as u64, |seed| {
            let m = lower_bound_trial(&inst, 30, s, seed)?;
            Ok(TrialOutcome {
                value: m.ratio,
                success: m.holds(0.05),
            })
        })
        .unwrap();
        assert_eq!(rep.successes, 20, "s={s}, rhs={rhs}, ratios={:?}", rep.values);
    }
}

#[test]
fn tail_energy_of_small_block_matrices() {
    for (n, k, alpha) in [(12, 3, 0.5), (20, 4, 0.9), (9, 9, 0.3), (30, 5, 0.0)] {
        let spec = AdversarialSpec::new(n, k, alpha).unwrap();
        let a = adversarial_matrix(&spec).unwrap();
        let expected = (1.0 - alpha).powi(2) * (n - k) as f64;
        assert!((tail_energy(&a, k).unwrap() - expected).abs() < 1e-10, "{n} {k} {alpha}");
        assert!((spec.tail_energy() - expected).abs() < 1e-12);
    }
}

#[test]
fn structured_inverse_matches_dense_inverse() {
    let mut rng = seeded(31);
    let mut checked = 0;
    while checked < 100 {
        let a: f64 = rng.random_range(-5.0..5.0);
        let b: f64 = rng.random_range(-5.0..5.0);
        let c: usize = rng.random_range(1..12);
        if a.abs() < 0.1 || (a + b * c as f64).abs() < 0.1 {
            continue;
        }
        let m = DenseMatrix::from_fn(c, c, |i, j| if i == j { a + b } else { b });
        let inv = structured_inverse(a, b, c).unwrap();
        assert!(inv.matmul(&m).max_abs_diff(&DenseMatrix::identity(c)) < 1e-12);
        assert!(inv.max_abs_diff(&inverse(&m).unwrap()) < 1e-12 * inv.max_abs().max(1.0));
        checked += 1;
    }
    assert!(structured_inverse(0.0, 1.0, 3).is_err());
    assert!(structured_inverse(1.0, -0.5, 2).is_err());
}

#[test]
fn eig_lowrank_matches_dense_eigensolver() {
    for seed in 0..20 {
        let c = gaussian_matrix(200, 12, seed);
        let g = gaussian_matrix(12, 12, seed + 100);
        let f = LowRankSym::new(c, g.matmul_tr(&g)).unwrap();
        let fast = eig_lowrank(&f, 12).unwrap();
        let dense = sym_eig_topk(&f.reconstruct(), 12).unwrap();
        let scale = dense.values[0];
        for (x, y) in fast.values.iter().zip(&dense.values) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
        assert!(fast.reconstruct().rel_diff(&f.reconstruct()) < 1e-8);
        assert!(fast.vectors.max_abs_diff(&dense.vectors) < 1e-8);
    }
}

fn median_solve_time(n: usize, c: usize) -> Duration {
    let cm = gaussian_matrix(n, c, 40);
    let g = gaussian_matrix(c, c, 41);
    let f = LowRankSym::new(cm, g.matmul_tr(&g)).unwrap();
    let solver = WoodburySolver::new(&f, 0.5).unwrap();
    let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
    let mut times: Vec<Duration> = (0..25)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(solver.solve(&y).unwrap());
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

#[test]
fn woodbury_solve_time_grows_at_most_linearly() {
    let c = 20;
    let small = median_solve_time(4000, c);
    let large = median_solve_time(8000, c);
    // soft: 2.5x for doubling n, plus slack for timer noise
    assert!(
        large <= small.mul_f64(2.5) + Duration::from_millis(2),
        "n=4000: {small:?}, n=8000: {large:?}"
    );
}

fn clustered(centers: &[Vec<f64>], reps: usize) -> Arc<Dataset> {
    let rows: Vec<Vec<f64>> = centers.iter().flat_map(|c| std::iter::repeat_n(c.clone(), reps)).collect();
    Arc::new(Dataset::new(DenseMatrix::from_rows(&rows).unwrap(), None).unwrap())
}

#[test]
fn kpca_train_and_test_features_agree_on_rank_k_kernels() {
    for seed in 0..20u64 {
        let k = 2 + (seed % 3) as usize;
        let mut rng = seeded(seed);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let data = clustered(&centers, 5);
        let n = data.n();
        let src = KernelSource::new(Arc::clone(&data), 0.8).unwrap();
        let kmat = src.full().unwrap();
        // one column from each cluster spans the kernel's range
        let p_idx: Vec<usize> = (0..k).map(|j| j * 5 + (seed as usize % 5)).collect();
        let p = SketchOp::select(n, &p_idx).unwrap();
        let f = u_prototype(&kmat, &form_c(&kmat, &p).unwrap()).unwrap();
        let model = kpca_fit(&f, k, &src).unwrap();
        assert_eq!(model.k(), k);
        let train = model.train_features();
        for j in uniform_indices(n, 4, seed) {
            let test = model.test_features(data.point(j)).unwrap();
            for (a, b) in test.iter().zip(train.column(j)) {
                assert!((a - b).abs() < 1e-8, "seed {seed}");
            }
        }
    }
}
