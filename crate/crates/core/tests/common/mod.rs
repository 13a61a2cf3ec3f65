#![allow(dead_code)]

use std::path::Path;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use hits::nalgebra::{DMatrix, DVector};
use hits::{DesignStats, GroupSample, TwoGroupDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// AR(1) columns with unit variance and lag-one correlation `rho`.
pub fn ar_design<R: Rng>(rng: &mut R, n: usize, p: usize, rho: f64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    let s = (1.0 - rho * rho).sqrt();
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = prev;
        for j in 1..p {
            prev = rho * prev + s * rng.sample::<f64, _>(StandardNormal);
            x[(i, j)] = prev;
        }
    }
    x
}

pub fn linear_group<R: Rng>(rng: &mut R, x: DMatrix<f64>, beta: &DVector<f64>, sigma: f64, label: u8) -> GroupSample {
    let n = x.nrows();
    let y = &x * beta + randn(rng, n) * sigma;
    GroupSample::new(x, y, label).unwrap()
}

/// Two arms with sparse coefficients that differ in their first entries.
pub fn random_dataset<R: Rng>(rng: &mut R, n1: usize, n2: usize, p: usize) -> TwoGroupDataset {
    let mut b1 = DVector::zeros(p);
    let mut b2 = DVector::zeros(p);
    for j in 0..3.min(p) {
        b1[j] = 1.0 - 0.4 * j as f64;
        b2[j] = 0.5 * j as f64;
    }
    let x1 = ar_design(rng, n1, p, 0.4);
    let x2 = ar_design(rng, n2, p, 0.4);
    let g1 = linear_group(rng, x1, &b1, 1.0, 1);
    let g2 = linear_group(rng, x2, &b2, 1.0, 2);
    let x_new = randn(rng, p);
    TwoGroupDataset::new(g1, g2, x_new).unwrap()
}

/// Writes `y,arm,x1..xp` with full float precision.
pub fn write_csv(path: &Path, ds: &TwoGroupDataset) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let p = ds.p();
    let mut header = vec!["y".to_string(), "arm".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    w.write_record(&header).unwrap();
    for g in [&ds.group1, &ds.group2] {
        for i in 0..g.n() {
            let mut rec = vec![format!("{:?}", g.y()[i]), g.label().to_string()];
            rec.extend((0..p).map(|j| format!("{:?}", g.x()[(i, j)])));
            w.write_record(&rec).unwrap();
        }
    }
    w.flush().unwrap();
}

pub fn loading_json(x: &DVector<f64>) -> String {
    serde_json::to_string(x.as_slice()).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    Baseline,
    Enhanced,
    /// Enhanced plus `||X u||_inf <= ||x|| tau`.
    Relaxed { tau: f64 },
}

/// Solves the primal direction problem with a generic interior-point QP
/// solver and returns the minimizer and `u'Su`.
pub fn qp_direction(stats: &DesignStats, sample: Option<&GroupSample>, x: &DVector<f64>, lambda: f64, kind: OracleKind) -> (DVector<f64>, f64) {
    let p = x.len();
    let s = &stats.gram;
    let norm = x.norm();
    // Rows c with bounds |c'u - d| <= r.
    let mut rows: Vec<(Vec<f64>, f64, f64)> = (0..p).map(|j| (s.row(j).iter().copied().collect(), x[j], lambda * norm)).collect();
    if kind != OracleKind::Baseline {
        let sx = s * x;
        rows.push((sx.iter().copied().collect(), norm * norm, lambda * norm * norm));
    }
    if let OracleKind::Relaxed { tau } = kind {
        let g = sample.expect("relaxed oracle needs the design");
        for i in 0..g.n() {
            rows.push((g.x().row(i).iter().copied().collect(), 0.0, norm * tau));
        }
    }
    let m = rows.len();
    let mut a = DMatrix::zeros(2 * m, p);
    let mut b = vec![0.0; 2 * m];
    for (k, (c, d, r)) in rows.iter().enumerate() {
        for j in 0..p {
            a[(k, j)] = c[j];
            a[(m + k, j)] = -c[j];
        }
        b[k] = d + r;
        b[m + k] = r - d;
    }
    let p_upper: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| if j >= i { 2.0 * s[(i, j)] } else { 0.0 }).collect()).collect();
    let a_rows: Vec<Vec<f64>> = (0..2 * m).map(|i| a.row(i).iter().copied().collect()).collect();
    let pm = CscMatrix::from(&p_upper);
    let am = CscMatrix::from(&a_rows);
    let q = vec![0.0; p];
    let cones = [SupportedConeT::NonnegativeConeT(2 * m)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-12)
        .tol_feas(1e-12)
        .max_iter(500)
        .build()
        .unwrap();
    let mut solver = DefaultSolver::new(&pm, &q, &am, &b, &cones, settings).unwrap();
    solver.solve();
    assert!(
        matches!(solver.solution.status, SolverStatus::Solved | SolverStatus::AlmostSolved),
        "oracle status {:?}",
        solver.solution.status
    );
    let u = DVector::from_column_slice(&solver.solution.x);
    let obj = (u.transpose() * s * &u)[(0, 0)];
    (u, obj)
}

/// Share of seeds in which a single large tail coefficient is screened into
/// `G1`: p = 40, both arms n = 200, `beta1_j = 10 / sqrt(n)` at a tail index.
pub fn planted_tail_screening_rate(seeds: std::ops::Range<u64>) -> f64 {
    use hits::{sparsity_assisted_test, InferenceConfig, SparsityConfig};
    let (p, n, planted) = (40, 200, 24);
    let total = seeds.end - seeds.start;
    let hits = seeds
        .filter(|&seed| {
            let mut r = rng(seed);
            let mut b1 = DVector::zeros(p);
            b1[0] = 1.0;
            b1[1] = -0.5;
            b1[planted] = 10.0 / (n as f64).sqrt();
            let b2 = DVector::zeros(p);
            let x1 = ar_design(&mut r, n, p, 0.3);
            let g1 = linear_group(&mut r, x1, &b1, 1.0, 1);
            let x2 = ar_design(&mut r, n, p, 0.3);
            let g2 = linear_group(&mut r, x2, &b2, 1.0, 2);
            let x_new = DVector::from_fn(p, |j, _| 1.0 / (j + 1) as f64);
            let ds = TwoGroupDataset::new(g1, g2, x_new).unwrap();
            let res = sparsity_assisted_test(&ds, &SparsityConfig { s_u: 1, q: None, alpha: 0.05 }, &InferenceConfig::default()).unwrap();
            assert!(res.q_used <= planted, "planted index must lie in the tail");
            res.g1.contains(&planted)
        })
        .count();
    hits as f64 / total as f64
}
