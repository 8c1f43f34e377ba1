//! Acceptance suite. Each test prints one `PASS`/`FAIL` line on stderr,
//! written past the test harness capture so the lines always show.
//!
//! Run with `cargo test -p zsl-cli --test acceptance`.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;
use zsl_core::dataset::{generate_splits, ZslDataset};
use zsl_core::dimred::fit_pca;
use zsl_core::experiments::{
    generate_synthetic, run_trials, EmbeddingFidelity, ExperimentConfig, Method, SyntheticSpec,
};
use zsl_core::gmm_em::{fit, init_mixture, m_step, EmOptions, Responsibilities};
use zsl_core::rng::SplitMix64;
use zsl_core::signatures::{default_ridge, estimate_signatures, CovarianceMode, GaussianSignature};
use zsl_core::sparse_synth::{lasso_objective, solve_lasso};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("[{}] {id} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

fn gaussian(rng: &mut SplitMix64) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

// ---------------------------------------------------------------------------
// dense linear-algebra oracles, deliberately naive

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() < 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Gauss-Jordan inverse with partial pivoting, plus ln|det|.
fn inverse_and_logdet(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    let mut logdet = 0.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        m.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let p = m[(col, col)];
        logdet += p.abs().ln();
        for k in 0..n {
            m[(col, k)] /= p;
            inv[(col, k)] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                for k in 0..n {
                    m[(r, k)] -= f * m[(col, k)];
                    inv[(r, k)] -= f * inv[(col, k)];
                }
            }
        }
    }
    (inv, logdet)
}

fn explicit_log_density(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let d = mean.len() as f64;
    let (inv, logdet) = inverse_and_logdet(cov);
    let diff = x - mean;
    let quad = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Least squares through the normal equations.
fn least_squares(d: &DMatrix<f64>, e: &DVector<f64>) -> DVector<f64> {
    let (inv, _) = inverse_and_logdet(&(d.transpose() * d));
    inv * d.transpose() * e
}

fn objective(d: &DMatrix<f64>, e: &DVector<f64>, alpha: &[f64], lambda: f64) -> f64 {
    let a = DVector::from_row_slice(alpha);
    (e - d * a).norm_squared() + lambda * alpha.iter().map(|v| v.abs()).sum::<f64>()
}

/// Minimizes the lasso objective by exhaustive grid search over a box that
/// must contain the minimizer, then repeated local grids with shrinking step.
fn brute_force_lasso(d: &DMatrix<f64>, e: &DVector<f64>, lambda: f64) -> f64 {
    let k = d.ncols();
    // any α with λ‖α‖₁ > ‖e‖² is worse than α = 0
    let bound = e.norm_squared() / lambda + 1e-9;
    let coarse = 60usize;
    let mut best = vec![0.0; k];
    let mut best_f = objective(d, e, &best, lambda);
    let mut idx = vec![0usize; k];
    loop {
        let alpha: Vec<f64> = idx.iter().map(|&i| -bound + 2.0 * bound * i as f64 / coarse as f64).collect();
        let f = objective(d, e, &alpha, lambda);
        if f < best_f {
            best_f = f;
            best = alpha;
        }
        let mut pos = 0;
        while pos < k {
            idx[pos] += 1;
            if idx[pos] <= coarse {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }
    let half = 4i64;
    let mut step = 2.0 * bound / coarse as f64;
    while step > 1e-13 {
        let mut improved = false;
        let width = (2 * half + 1) as usize;
        let total = width.pow(k as u32);
        let center = best.clone();
        for flat in 0..total {
            let mut rem = flat;
            let alpha: Vec<f64> = center
                .iter()
                .map(|&c| {
                    let off = (rem % width) as i64 - half;
                    rem /= width;
                    c + off as f64 * step
                })
                .collect();
            let f = objective(d, e, &alpha, lambda);
            if f < best_f {
                best_f = f;
                best = alpha;
                improved = true;
            }
        }
        // stay at this resolution while the local grid keeps finding descent
        if !improved {
            step /= 2.0;
        }
        // snap coordinates that straddle zero onto the kink
        for (i, a) in best.clone().iter().enumerate() {
            if a.abs() < step {
                let mut t = best.clone();
                t[i] = 0.0;
                let f = objective(d, e, &t, lambda);
                if f <= best_f {
                    best_f = f;
                    best = t;
                }
            }
        }
    }
    best_f
}

// ---------------------------------------------------------------------------

fn em_start(x: &DMatrix<f64>, k: usize, mode: CovarianceMode, ridge: f64, rng: &mut SplitMix64) -> Vec<GaussianSignature> {
    let global = estimate_signatures(x, &vec![0; x.nrows()], 1, mode, ridge).unwrap().remove(0);
    rng.sample_distinct(x.nrows(), k)
        .into_iter()
        .map(|i| global.with_mean(x.row(i).transpose()).unwrap())
        .collect()
}

#[test]
fn em_log_likelihood_never_decreases() {
    let start = Instant::now();
    let dims = [2usize, 10, 50];
    let ks = [2usize, 5, 10];
    let modes = [CovarianceMode::Unit, CovarianceMode::Diagonal, CovarianceMode::Full];
    let mut worst = f64::INFINITY;
    let mut fits = 0;
    let mut steps = 0;
    let mut failures = Vec::new();
    for i in 0..100u64 {
        let d = dims[i as usize % 3];
        let k = ks[(i as usize / 3) % 3];
        let mode = modes[(i as usize / 9) % 3];
        let spec = SyntheticSpec {
            classes: k,
            per_class: 60,
            feature_dim: d,
            embedding_dim: 8,
            separation: 2.5,
            fidelity: EmbeddingFidelity::ExactLinear,
            seed: 1000 + i,
        };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        let x = ds.features();
        let ridge = default_ridge(x);
        let mut rng = SplitMix64::new(i);
        let model = init_mixture(em_start(x, k, mode, ridge, &mut rng)).unwrap();
        let opts = EmOptions { tol: 1e-10, max_iters: 150, ridge };
        let (_, trace) = fit(model, x, &opts).unwrap();
        fits += 1;
        for w in trace.log_likelihood.windows(2) {
            steps += 1;
            let delta = w[1] - w[0];
            worst = worst.min(delta);
            if delta < -1e-9 {
                failures.push(format!("config {i} (d={d}, K={k}, {mode}): drop {delta:e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "EM monotone ascent",
        pass,
        &format!(
            "{fits} fits, {steps} iterations, most negative step {worst:e}, {:.1}s{}",
            elapsed.as_secs_f64(),
            failures.first().map(|f| format!("; first violation {f}")).unwrap_or_default()
        ),
    );
}

#[test]
fn lasso_matches_brute_force_and_least_squares() {
    let start = Instant::now();
    let mut worst_grid: f64 = 0.0;
    for p in 0..25u64 {
        let mut rng = SplitMix64::new(500 + p);
        let rows = 1 + (p as usize % 3);
        let atoms = 1 + (p as usize / 3) % 3;
        let d = random_matrix(&mut rng, rows, atoms);
        let e = DVector::from_fn(rows, |_, _| gaussian(&mut rng));
        let lambda = 0.05 + rng.random::<f64>() * 0.95;
        let code = solve_lasso(&d, &e, lambda, 1e-14, 1_000_000).unwrap();
        let solver = lasso_objective(&d, &e, &code.coefficients, lambda);
        let oracle = brute_force_lasso(&d, &e, lambda);
        worst_grid = worst_grid.max((solver - oracle).abs());
    }
    let mut worst_ls: f64 = 0.0;
    for p in 0..25u64 {
        let mut rng = SplitMix64::new(900 + p);
        let atoms = 1 + (p as usize % 3);
        let rows = atoms + 1 + (p as usize / 3) % 4;
        let d = random_matrix(&mut rng, rows, atoms);
        let e = DVector::from_fn(rows, |_, _| gaussian(&mut rng));
        let code = solve_lasso(&d, &e, 0.0, 1e-15, 1_000_000).unwrap();
        let ls = least_squares(&d, &e);
        for (a, b) in code.coefficients.iter().zip(ls.iter()) {
            worst_ls = worst_ls.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_grid <= 1e-6 && worst_ls <= 1e-6 && elapsed < Duration::from_secs(30);
    verdict(
        2,
        "lasso oracle equivalence",
        pass,
        &format!(
            "max objective gap vs grid {worst_grid:.2e}, max coefficient gap vs least squares {worst_ls:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

fn recovery_benchmark(seed: u64) -> ZslDataset {
    let spec = SyntheticSpec {
        classes: 40,
        per_class: 200,
        feature_dim: 10,
        embedding_dim: 10,
        separation: 6.0,
        fidelity: EmbeddingFidelity::ExactLinear,
        seed,
    };
    generate_synthetic(&spec).unwrap().0
}

fn unit_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        covariance_mode: Some(CovarianceMode::Unit),
        seed,
        ..Default::default()
    }
}

/// (inductive, transductive, baseline) overall accuracy of one 10-unseen trial.
fn one_trial(ds: &ZslDataset, seed: u64, methods: &[Method]) -> (f64, f64, f64) {
    let splits = generate_splits(ds.n_classes(), 10, 1, seed).unwrap();
    let report = run_trials(ds, &splits, &unit_config(seed), methods).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    let t = &report.trials[0];
    let get = |a: Option<zsl_core::experiments::Accuracy>| a.map(|a| a.overall).unwrap_or(f64::NAN);
    (get(t.inductive), get(t.transductive), get(t.baseline))
}

#[test]
fn synthetic_recovery() {
    let start = Instant::now();
    let (mut ind, mut trans) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let ds = recovery_benchmark(seed);
        let (i, t, _) = one_trial(&ds, seed, &[Method::Inductive, Method::Transductive]);
        ind += i;
        trans += t;
    }
    ind /= seeds as f64;
    trans /= seeds as f64;
    let elapsed = start.elapsed();
    let pass = ind >= 0.95 && trans >= 0.99 && elapsed < Duration::from_secs(120);
    verdict(
        3,
        "end-to-end synthetic recovery",
        pass,
        &format!("inductive {ind:.4} (>= 0.95), transductive {trans:.4} (>= 0.99) over {seeds} seeds, {:.1}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn transductive_gain_on_noisy_embeddings() {
    let seeds = 50;
    let (mut ind, mut trans) = (0.0, 0.0);
    let mut ordered = 0;
    for seed in 0..seeds {
        let spec = SyntheticSpec {
            classes: 22,
            per_class: 200,
            feature_dim: 10,
            embedding_dim: 10,
            separation: 4.0,
            fidelity: EmbeddingFidelity::Noisy(0.2),
            seed,
        };
        let (ds, _) = generate_synthetic(&spec).unwrap();
        let (i, t, b) = one_trial(&ds, seed, &[Method::Inductive, Method::Transductive, Method::Baseline]);
        ind += i;
        trans += t;
        if b <= i && i <= t {
            ordered += 1;
        }
    }
    ind /= seeds as f64;
    trans /= seeds as f64;
    let gain = 100.0 * (trans - ind);
    let pass = gain >= 3.0 && ordered * 10 >= seeds * 9;
    verdict(
        4,
        "transductive gain ordering",
        pass,
        &format!(
            "inductive {ind:.4}, transductive {trans:.4}, gain {gain:.2} points (>= 3); baseline <= inductive <= transductive in {ordered}/{seeds} seeds (>= 90%)"
        ),
    );
}

#[test]
fn random_init_baseline_at_chance() {
    let seeds = 50;
    let mut total = 0.0;
    for seed in 0..seeds {
        let ds = recovery_benchmark(seed);
        let (_, _, b) = one_trial(&ds, seed, &[Method::Baseline]);
        total += b;
    }
    let mean = total / seeds as f64;
    verdict(
        5,
        "random-init baseline at chance",
        mean <= 0.30,
        &format!("mean baseline accuracy {mean:.4} over {seeds} seeds (<= 0.30, chance 0.10)"),
    );
}

fn pca_gap(n: usize, d: usize, dim: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    // distinct column scales keep the eigenvalues apart
    let x = DMatrix::from_fn(n, d, |_, j| gaussian(&mut rng) * (1.0 + j as f64));
    let pca = fit_pca(&x, dim).unwrap();
    let mut centered = x.clone();
    for j in 0..d {
        let m: f64 = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= m;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            cov[(a, b)] = (0..n).map(|i| centered[(i, a)] * centered[(i, b)]).sum::<f64>() / (n - 1) as f64;
        }
    }
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut gap: f64 = 0.0;
    for (r, &c) in order[..dim].iter().enumerate() {
        let got = pca.basis().row(r).transpose();
        let want = vecs.column(c).into_owned();
        let diff = (&got - &want).amax().min((&got + &want).amax());
        gap = gap.max(diff);
        gap = gap.max((pca.explained_variance()[r] - vals[c]).abs() / vals[c].abs().max(1.0));
    }
    let z = pca.transform(&x).unwrap();
    for r in 0..dim {
        let want = &centered * pca.basis().row(r).transpose();
        gap = gap.max((z.column(r) - want).amax());
    }
    gap
}

#[test]
fn numerical_kernels_match_oracles() {
    // PCA through the covariance route (D <= N) and the Gram route (D > N)
    let pca = pca_gap(40, 6, 4, 1).max(pca_gap(60, 12, 12, 2)).max(pca_gap(9, 20, 5, 3)).max(pca_gap(15, 40, 10, 4));

    let mut density: f64 = 0.0;
    let mut rng = SplitMix64::new(77);
    for d in [1usize, 3, 6, 12] {
        let a = random_matrix(&mut rng, d, d);
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
        let mean = DVector::from_fn(d, |_, _| gaussian(&mut rng) * 2.0);
        let diag = DVector::from_fn(d, |_, _| 0.2 + rng.random::<f64>() * 3.0);
        let full = GaussianSignature::full(mean.clone(), cov.clone()).unwrap();
        let diagonal = GaussianSignature::diagonal(mean.clone(), diag.clone()).unwrap();
        let unit = GaussianSignature::unit(mean.clone());
        for _ in 0..20 {
            let x = DVector::from_fn(d, |_, _| gaussian(&mut rng) * 3.0);
            let pairs = [
                (full.log_density(x.as_slice()).unwrap(), explicit_log_density(&mean, &cov, &x)),
                (diagonal.log_density(x.as_slice()).unwrap(), explicit_log_density(&mean, &DMatrix::from_diagonal(&diag), &x)),
                (unit.log_density(x.as_slice()).unwrap(), explicit_log_density(&mean, &DMatrix::identity(d, d), &x)),
            ];
            for (got, want) in pairs {
                density = density.max((got - want).abs());
            }
        }
    }

    // four points, two components, fixed fractional responsibilities
    let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 3.0, 4.0]);
    let r1 = [0.9, 0.7, 0.2, 0.1];
    let r = Responsibilities::from_rows(r1.iter().map(|&a| vec![a, 1.0 - a]).collect()).unwrap();
    // N = (1.9, 2.1); π = N/4; μ = (17/19, 3); σ² = (490/361, 10/7), each plus ε
    let eps = 1e-6;
    let want = [(0.475, 17.0 / 19.0, 490.0 / 361.0 + eps), (0.525, 3.0, 10.0 / 7.0 + eps)];
    let mut mstep: f64 = 0.0;
    for mode in [CovarianceMode::Diagonal, CovarianceMode::Full] {
        let sig = |m: f64| match mode {
            CovarianceMode::Full => GaussianSignature::full(DVector::from_element(1, m), DMatrix::identity(1, 1)).unwrap(),
            _ => GaussianSignature::diagonal(DVector::from_element(1, m), DVector::from_element(1, 1.0)).unwrap(),
        };
        let model = init_mixture(vec![sig(0.0), sig(4.0)]).unwrap();
        let updated = m_step(&model, &x, &r, eps).unwrap();
        for (k, &(pi, mu, var)) in want.iter().enumerate() {
            mstep = mstep
                .max((updated.weights()[k] - pi).abs())
                .max((updated.components()[k].mean()[0] - mu).abs())
                .max((updated.components()[k].covariance_matrix()[(0, 0)] - var).abs());
        }
    }

    let pass = pca <= 1e-8 && density <= 1e-9 && mstep <= 1e-12;
    verdict(
        6,
        "numerical kernel oracles",
        pass,
        &format!("PCA {pca:.2e} (<= 1e-8), log-density {density:.2e} (<= 1e-9), M-step {mstep:.2e} (<= 1e-12)"),
    );
}

fn cli_run(dir: &Path, out: &str, workers: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_zsl"))
        .args([
            "run", "--synthetic", "classes=12", "unseen=4", "trials=40", "per_class=80", "noise=0.1",
            "--mode", "diagonal", "--seed", "42", "--workers", workers, "--output", out,
        ])
        .current_dir(dir)
        .output()
        .expect("spawn zsl");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn aggregate_gap(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x.as_f64().unwrap() - y.as_f64().unwrap()).abs(),
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).map(|(p, q)| aggregate_gap(p, q)).fold(0.0, f64::max)
        }
        (Value::Object(x), Value::Object(y)) if x.len() == y.len() => x
            .iter()
            .map(|(k, v)| y.get(k).map(|w| aggregate_gap(v, w)).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max),
        (p, q) if p == q => 0.0,
        _ => f64::INFINITY,
    }
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    cli_run(dir.path(), "a", "1");
    cli_run(dir.path(), "b", "1");
    cli_run(dir.path(), "c", "8");
    let read = |sub: &str, f: &str| std::fs::read(dir.path().join(sub).join(f)).unwrap();
    let identical = ["report.json", "trials.csv", "boxplot.csv"].iter().all(|f| read("a", f) == read("b", f));
    let parse = |sub: &str| -> Value { serde_json::from_slice(&read(sub, "report.json")).unwrap() };
    let gap = aggregate_gap(&parse("a")["aggregates"], &parse("c")["aggregates"]);
    verdict(
        7,
        "determinism",
        identical && gap <= 1e-10,
        &format!("--workers 1 twice byte-identical: {identical}; --workers 8 aggregate gap {gap:.2e} (<= 1e-10)"),
    );
}
