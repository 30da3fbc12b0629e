//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use linescan_ad::cube::{normalize_line, DataCube, ScoredLine};
use linescan_ad::erx::ErxConfig;
use linescan_ad::projection::generate_srp;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `M M^T + 0.5 I` for a random square `M`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let m = random_matrix(rng, n, n);
    let mut a = m.dot(&m.t());
    for i in 0..n {
        a[[i, i]] += 0.5;
    }
    a
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    to_na(&random_matrix(rng, n, n)).qr().q()
}

/// `Q diag(values) Q^T` with a random orthogonal `Q`.
pub fn spd_with_spectrum(rng: &mut ChaCha8Rng, values: &[f64]) -> Array2<f64> {
    let q = random_orthogonal(rng, values.len());
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(values));
    let k = &q * d * q.transpose();
    from_na(&((&k + k.transpose()) * 0.5))
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||a - b||_F / ||b||_F`.
pub fn rel_frob(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = a - b;
    frob(&diff) / frob(b).max(f64::MIN_POSITIVE)
}

pub fn dense_inverse(a: &Array2<f64>) -> Array2<f64> {
    from_na(&to_na(a).try_inverse().expect("invertible test matrix"))
}

/// Mean and unbiased covariance of the rows, straight from the definition.
pub fn one_shot_stats(rows: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = rows.nrows();
    let b = rows.ncols();
    let mean: Vec<f64> = (0..b).map(|j| rows.column(j).sum() / n as f64).collect();
    let mut cov = Array2::<f64>::zeros((b, b));
    if n >= 2 {
        for r in rows.rows() {
            for i in 0..b {
                for j in 0..b {
                    cov[[i, j]] += (r[i] - mean[i]) * (r[j] - mean[j]);
                }
            }
        }
        cov /= (n - 1) as f64;
    }
    (mean, cov)
}

/// Scores computed by a reference implementation; `None` marks a line the
/// detector must leave unscored.
pub type OracleScores = Vec<Option<Vec<f64>>>;

/// A small random stream with at least as many pixels as bands: a rotated
/// spectrum whose component scales shrink by 0.4 from one direction to the
/// next, plus a slow drift and sparse spikes along the leading direction.
/// The leading eigenvalues stay well apart, so the principal subspace is well
/// defined.
pub fn random_stream(seed: u64, lines: usize) -> DataCube {
    let mut r = rng(seed);
    let bands = r.random_range(1..=8);
    let pixels = r.random_range(bands.max(2)..=20);
    let q = random_orthogonal(&mut r, bands);
    let base = random_vec(&mut r, bands);
    let period = r.random_range(20.0..80.0);
    let mut data = Vec::with_capacity(lines * pixels * bands);
    for t in 0..lines {
        let drift = (t as f64 / period).sin() * 0.5;
        for _ in 0..pixels {
            let mut g = DVector::from_fn(bands, |j, _| 3.0 * 0.4f64.powi(j as i32) * r.random_range(-1.0..1.0));
            g[0] += drift;
            if r.random_bool(0.01) {
                g[0] += if r.random_bool(0.5) { 6.0 } else { -6.0 };
            }
            let x = &q * g;
            for j in 0..bands {
                data.push((base[j] + x[j]) as f32);
            }
        }
    }
    DataCube::new(lines, pixels, bands, data, format!("stream{seed}")).expect("valid stream")
}

fn line_matrix(cube: &DataCube, t: usize) -> DMatrix<f64> {
    let (p, b) = (cube.pixels(), cube.bands());
    let s = cube.line_slice(t);
    DMatrix::from_fn(p, b, |i, j| f64::from(s[i * b + j]))
}

fn mahalanobis(inv: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * inv * v)[(0, 0)].max(0.0).sqrt()
}

/// Cholesky inverse when every pivot clears the same relative floor the
/// library applies.
fn pd_inverse(k: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let c = k.clone().cholesky()?;
    let floor = linescan_ad::linalg::PIVOT_RTOL * k.diagonal().amax();
    let l = c.l();
    (0..k.nrows()).all(|j| l[(j, j)] * l[(j, j)] > floor).then(|| c.inverse())
}

/// Inverse of `k + eps I`, with `eps` raised tenfold until the factorization
/// succeeds (the same schedule the detectors use).
fn regularized_inverse(k: &DMatrix<f64>, mut eps: f64) -> DMatrix<f64> {
    let n = k.nrows();
    loop {
        let reg = k + DMatrix::identity(n, n) * eps;
        if let Some(inv) = pd_inverse(&reg) {
            return inv;
        }
        eps *= 10.0;
        assert!(eps <= 0.1 * (1.0 + 1e-9), "oracle could not regularize");
    }
}

/// Inverse of `k`, falling back to the regularized schedule when `k` is not
/// positive definite.
fn inverse_or_regularized(k: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    pd_inverse(k).unwrap_or_else(|| regularized_inverse(k, eps))
}

fn row_stats(rows: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(d), |acc, r| acc + r) / n;
    let mut cov = DMatrix::zeros(d, d);
    if rows.len() >= 2 {
        for r in rows {
            let v = r - &mean;
            cov += &v * v.transpose();
        }
        cov /= n - 1.0;
    }
    (mean, cov)
}

/// Unbiased statistics from shifted sums over every row accumulated so far.
struct ShiftedSums {
    shift: Option<DVector<f64>>,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
    n: usize,
}

impl ShiftedSums {
    fn new(d: usize) -> Self {
        Self {
            shift: None,
            sum: DVector::zeros(d),
            outer: DMatrix::zeros(d, d),
            n: 0,
        }
    }

    fn add(&mut self, x: &DVector<f64>) {
        let shift = self.shift.get_or_insert_with(|| x.clone());
        let v = x - &*shift;
        self.outer += &v * v.transpose();
        self.sum += v;
        self.n += 1;
    }

    fn stats(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.sum.len();
        let n = self.n as f64;
        let m = &self.sum / n;
        let mean = &m + self.shift.as_ref().expect("at least one row");
        let cov = if self.n >= 2 {
            (&self.outer - &m * m.transpose() * n) / (n - 1.0)
        } else {
            DMatrix::zeros(d, d)
        };
        (mean, cov)
    }
}

/// ERX from its recurrences: explicit moving averages (or one-shot equal
/// weight statistics) and a dense inverse of `K + eps I`.
pub fn erx_oracle(cube: &DataCube, cfg: &ErxConfig) -> OracleScores {
    let b = cube.bands();
    let w = (!cfg.no_srp).then(|| to_na(generate_srp(b, cfg.dims, cfg.seed).unwrap().weights()));
    let d = w.as_ref().map_or(b, |w| w.ncols());
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    let mut sums = ShiftedSums::new(d);
    let mut out = Vec::with_capacity(cube.lines());
    for t in 0..cube.lines() {
        let x = line_matrix(cube, t);
        let z = match &w {
            Some(w) => &x * w,
            None => x,
        };
        let rows: Vec<DVector<f64>> = z.row_iter().map(|r| r.transpose()).collect();
        let update = |mean: &mut DVector<f64>, cov: &mut DMatrix<f64>, sums: &mut ShiftedSums| {
            if cfg.use_incremental {
                rows.iter().for_each(|r| sums.add(r));
                (*mean, *cov) = sums.stats();
            } else {
                let (mh, kh) = row_stats(&rows);
                if t == 0 {
                    (*mean, *cov) = (mh, kh);
                } else {
                    *mean = &*mean * (1.0 - cfg.alpha) + mh * cfg.alpha;
                    *cov = &*cov * (1.0 - cfg.alpha) + kh * cfg.alpha;
                }
            }
        };
        if t == 0 {
            update(&mut mean, &mut cov, &mut sums);
        }
        let inv = regularized_inverse(&cov, cfg.epsilon);
        out.push(Some(rows.iter().map(|r| mahalanobis(&inv, &(r - &mean))).collect()));
        if t > 0 {
            update(&mut mean, &mut cov, &mut sums);
        }
    }
    out
}

/// Rolling-window RX recomputed from scratch for every centre line.
pub fn rx_baseline_oracle(cube: &DataCube, buffer: usize, eps: f64) -> OracleScores {
    let half = buffer / 2;
    let lines = cube.lines();
    (0..lines)
        .map(|t| {
            if t < half || t - half + buffer > lines {
                return None;
            }
            let rows: Vec<DVector<f64>> = (t - half..t - half + buffer)
                .flat_map(|s| {
                    let x = line_matrix(cube, s);
                    x.row_iter().map(|r| r.transpose()).collect::<Vec<_>>()
                })
                .collect();
            let n = rows.len() as f64;
            let (mean, cov) = row_stats(&rows);
            let cov = cov * ((n - 1.0) / n);
            let inv = inverse_or_regularized(&cov, eps);
            let x = line_matrix(cube, t);
            Some(x.row_iter().map(|r| mahalanobis(&inv, &(r.transpose() - &mean))).collect())
        })
        .collect()
}

/// Pixel-wise causal RX with the covariance recursion carried explicitly and
/// inverted densely before every pixel.
pub fn rtckrxd_oracle(cube: &DataCube, buffer: usize, eps: f64) -> OracleScores {
    let mut out: OracleScores = vec![None; buffer - 1];
    let seed_rows: Vec<DVector<f64>> = (0..buffer)
        .flat_map(|s| line_matrix(cube, s).row_iter().map(|r| r.transpose()).collect::<Vec<_>>())
        .collect();
    let mut n = seed_rows.len() as f64;
    let (mut mean, cov) = row_stats(&seed_rows);
    let mut cov = cov * ((n - 1.0) / n);
    let seed_inv = inverse_or_regularized(&cov, eps);
    // A regularized seed is carried as the matrix that was actually inverted.
    if let Some(c) = seed_inv.clone().try_inverse() {
        cov = c;
    }
    let x = line_matrix(cube, buffer - 1);
    out.push(Some(
        x.row_iter().map(|r| mahalanobis(&seed_inv, &(r.transpose() - &mean))).collect(),
    ));
    for t in buffer..cube.lines() {
        let x = line_matrix(cube, t);
        let mut scores = Vec::with_capacity(x.nrows());
        for r in x.row_iter() {
            let r = r.transpose();
            let inv = cov.clone().try_inverse().expect("recursion stays invertible");
            scores.push(mahalanobis(&inv, &(&r - &mean)));
            n += 1.0;
            mean += (&r - &mean) / n;
            let v = &r - &mean;
            cov = &cov * ((n - 1.0) / n) + &v * v.transpose() / n;
        }
        out.push(Some(scores));
    }
    out
}

/// Correlation RX: the un-normalized sum `S` kept explicitly and inverted
/// densely, with the same retained pixels as the detector.
pub fn rxbil_oracle(cube: &DataCube, eta: f64, seed: u64, eps: f64) -> OracleScores {
    let p = cube.pixels();
    let b = cube.bands();
    let x0 = line_matrix(cube, 0);
    let r0 = x0.transpose() * &x0 / p as f64;
    let r0 = match pd_inverse(&r0) {
        Some(_) => r0,
        None => {
            let inv = regularized_inverse(&r0, eps);
            inv.try_inverse().expect("regularized correlation")
        }
    };
    let mut sum = r0 * p as f64;
    let mut n = p as f64;
    let mut out = Vec::with_capacity(cube.lines());
    for t in 0..cube.lines() {
        let x = line_matrix(cube, t);
        let inv = sum.clone().try_inverse().expect("correlation sum invertible") * n;
        out.push(Some(x.row_iter().map(|r| mahalanobis(&inv, &r.transpose())).collect()));
        if t > 0 {
            for i in linescan_ad::detectors::retained_pixels(seed, t, p, eta) {
                let r = x.row(i).transpose();
                sum += &r * r.transpose();
                n += 1.0;
            }
        }
    }
    debug_assert_eq!(sum.nrows(), b);
    out
}

/// Principal-subspace RX from one-shot statistics of every kept pixel and a
/// full symmetric eigendecomposition.
pub fn lblad_oracle(cube: &DataCube, buffer: usize, components: usize, adaptive: bool) -> OracleScores {
    let b = cube.bands();
    let mut sums = ShiftedSums::new(b);
    let mut excluded: Vec<bool> = Vec::new();
    let mut out = Vec::with_capacity(cube.lines());
    for t in 0..cube.lines() {
        let x = line_matrix(cube, t);
        let rows: Vec<DVector<f64>> = x.row_iter().map(|r| r.transpose()).collect();
        if t + 1 < buffer {
            rows.iter().for_each(|r| sums.add(r));
            out.push(None);
            continue;
        }
        for (i, r) in rows.iter().enumerate() {
            if !(adaptive && excluded.get(i).copied().unwrap_or(false)) {
                sums.add(r);
            }
        }
        let (mean, cov) = sums.stats();
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let scores: Vec<f64> = rows
            .iter()
            .map(|r| {
                let v = r - &mean;
                order[..components]
                    .iter()
                    .map(|&j| {
                        let z = eig.eigenvectors.column(j).dot(&v);
                        z * z / eig.eigenvalues[j].max(1e-10)
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        excluded = normalize_line(&scores).iter().map(|&s| s > 3.0).collect();
        out.push(Some(scores));
    }
    out
}

/// Largest relative deviation between a detector's output and an oracle.
/// Lines the oracle leaves unscored must come back as all zeros.
pub fn max_rel_error(lines: &[ScoredLine], oracle: &OracleScores) -> f64 {
    assert_eq!(lines.len(), oracle.len());
    let mut worst = 0.0f64;
    for (line, expected) in lines.iter().zip(oracle) {
        match expected {
            None => {
                let m = line.raw_scores.iter().fold(0.0f64, |a, s| a.max(s.abs()));
                worst = worst.max(if m == 0.0 { 0.0 } else { f64::INFINITY });
            }
            Some(e) => {
                assert_eq!(line.raw_scores.len(), e.len());
                for (a, o) in line.raw_scores.iter().zip(e) {
                    let err = (a - o).abs() / o.abs().max(1e-9);
                    worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
                }
            }
        }
    }
    worst
}

/// All-pairs Mann-Whitney statistic with ties counted one half.
pub fn mann_whitney(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Target-detectability and background-suppressibility areas from a dense
/// grid of thresholds on min-max normalized scores.
pub fn grid_td_bs(scores: &[f64], labels: &[u8], auc: f64, steps: usize) -> (f64, f64) {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm: Vec<f64> = scores.iter().map(|s| (s - lo) / (hi - lo)).collect();
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let rates = |tau: f64| {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in norm.iter().zip(labels) {
            if s >= tau {
                if l == 1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        (tp / pos, fp / neg)
    };
    let h = 1.0 / (steps - 1) as f64;
    let (mut a_tpr, mut a_fpr) = (0.0, 0.0);
    let mut prev = rates(0.0);
    for k in 1..steps {
        let cur = rates(k as f64 * h);
        a_tpr += 0.5 * h * (prev.0 + cur.0);
        a_fpr += 0.5 * h * (prev.1 + cur.1);
        prev = cur;
    }
    ((auc + a_tpr) / 2.0, (auc - a_fpr + 1.0) / 2.0)
}

/// Worst errors of the numerical kernels over `instances` random cases of
/// size up to 16, each already divided by its tolerance (pass means <= 1).
pub mod kernels {
    use super::*;
    use linescan_ad::linalg::{
        cholesky_lower, forward_substitute, power_deflation_eigs, welford_batch_update, woodbury_block,
        woodbury_rank1, InverseState, LowerTriangular, PowerOptions,
    };
    use ndarray::{concatenate, Array1, Axis};

    pub fn cholesky_reconstruction(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let a = random_spd(&mut r, n);
                let l = cholesky_lower(a.view()).unwrap().into_inner();
                rel_frob(&l.dot(&l.t()), &a) / 1e-10
            })
            .fold(0.0, f64::max)
    }

    pub fn forward_substitution(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let mut l = random_matrix(&mut r, n, n);
                for i in 0..n {
                    for j in (i + 1)..n {
                        l[[i, j]] = 0.0;
                    }
                    l[[i, i]] = r.random_range(0.5..2.0);
                }
                let v = Array1::from(random_vec(&mut r, n));
                let f = LowerTriangular::new(l.clone()).unwrap();
                let m = forward_substitute(&f, v.view()).unwrap();
                let resid = (&l.dot(&m) - &v).iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                resid / scale / 1e-10
            })
            .fold(0.0, f64::max)
    }

    pub fn quadratic_form(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let a = random_spd(&mut r, n);
                let v = random_vec(&mut r, n);
                let l = cholesky_lower(a.view()).unwrap();
                let m = forward_substitute(&l, Array1::from(v.clone()).view()).unwrap();
                let got = m.dot(&m);
                let inv = to_na(&a).try_inverse().unwrap();
                let vv = DVector::from_vec(v);
                let want = (vv.transpose() * inv * &vv)[(0, 0)];
                (got - want).abs() / want.abs() / 1e-8
            })
            .fold(0.0, f64::max)
    }

    pub fn rank1(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let a = random_spd(&mut r, n);
                let u = Array1::from(random_vec(&mut r, n));
                let c = r.random_range(0.1..2.0);
                let state = InverseState::new(dense_inverse(&a), 1);
                let got = woodbury_rank1(&state, u.view(), c).unwrap();
                let outer = u.view().insert_axis(Axis(1)).dot(&u.view().insert_axis(Axis(0)));
                let want = dense_inverse(&(&a + &(outer * c)));
                rel_frob(&got.inv, &want) / 1e-8
            })
            .fold(0.0, f64::max)
    }

    pub fn block(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let k = r.random_range(1..=8);
                let a = random_spd(&mut r, n);
                let x = random_matrix(&mut r, k, n);
                let state = InverseState::new(dense_inverse(&a), 1);
                let got = woodbury_block(&state, x.view()).unwrap();
                let want = dense_inverse(&(&a + &x.t().dot(&x)));
                rel_frob(&got.inv, &want) / 1e-8
            })
            .fold(0.0, f64::max)
    }

    /// Row-by-row rank-one updates against one block update.
    pub fn rank1_chain_vs_block(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let k = r.random_range(1..=8);
                let a = random_spd(&mut r, n);
                let x = random_matrix(&mut r, k, n);
                let start = InverseState::new(dense_inverse(&a), 1);
                let block = woodbury_block(&start, x.view()).unwrap();
                let mut chain = start;
                for row in x.rows() {
                    chain = woodbury_rank1(&chain, row, 1.0).unwrap();
                }
                rel_frob(&chain.inv, &block.inv) / 1e-7
            })
            .fold(0.0, f64::max)
    }

    /// Ten batches folded in one at a time against one-shot statistics.
    pub fn welford(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(1..=16);
                let offset = random_vec(&mut r, n);
                let batches: Vec<Array2<f64>> = (0..10)
                    .map(|_| {
                        let k = r.random_range(1..=12);
                        let mut m = random_matrix(&mut r, k, n);
                        for mut row in m.rows_mut() {
                            row.iter_mut().zip(&offset).for_each(|(v, o)| *v += 3.0 * o);
                        }
                        m
                    })
                    .collect();
                let mut mean = Array1::zeros(n);
                let mut cov = Array2::zeros((n, n));
                let mut seen = 0;
                for bt in &batches {
                    (mean, cov, seen) = welford_batch_update(mean.view(), cov.view(), seen, bt.view()).unwrap();
                }
                let views: Vec<_> = batches.iter().map(|b| b.view()).collect();
                let all = concatenate(Axis(0), &views).unwrap();
                let (m1, c1) = one_shot_stats(&all);
                assert_eq!(seen as usize, all.nrows());
                let m1 = Array1::from(m1);
                let mean_err = (&mean - &m1).iter().map(|x| x * x).sum::<f64>().sqrt()
                    / m1.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                mean_err.max(rel_frob(&cov, &c1)) / 1e-8
            })
            .fold(0.0, f64::max)
    }

    /// Top-3 eigenpairs against a dense symmetric eigensolver, on spectra
    /// whose leading eigenvalues are separated by at least a factor 1.5.
    pub fn power_iteration(instances: usize, seed: u64) -> f64 {
        let mut r = rng(seed);
        (0..instances)
            .map(|_| {
                let n = r.random_range(3..=16);
                let mut values: Vec<f64> = Vec::with_capacity(n);
                let mut v = r.random_range(1.0..10.0);
                for j in 0..n {
                    values.push(v);
                    v *= if j < 3 { r.random_range(0.2..0.66) } else { r.random_range(0.5..1.0) };
                }
                let k = spd_with_spectrum(&mut r, &values);
                let got = power_deflation_eigs(k.view(), 3, None, &PowerOptions::default()).unwrap();
                let eig = SymmetricEigen::new(to_na(&k));
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
                let norm_k = frob(&k);
                let mut worst = 0.0f64;
                for (j, &o) in order.iter().take(3).enumerate() {
                    let e = eig.eigenvalues[o];
                    worst = worst.max((got.values[j] - e).abs() / e.abs() / 1e-5);
                    let dot: f64 = got
                        .vectors
                        .column(j)
                        .iter()
                        .zip(eig.eigenvectors.column(o).iter())
                        .map(|(a, b)| a * b)
                        .sum();
                    worst = worst.max((1.0 - dot.abs()) / 1e-5);
                    let col = got.vectors.column(j);
                    let resid = (&k.dot(&col) - &(&col * got.values[j]))
                        .iter()
                        .map(|x| x * x)
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(resid / norm_k / 1e-6);
                    for i in 0..3 {
                        let g: f64 = got.vectors.column(i).dot(&col);
                        let want = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((g - want).abs() / 1e-8);
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }
}
