//! Dense numerical kernels used by the detectors.
//!
//! Everything here works on small square matrices (projected dimensions or
//! raw bands), stored as row-major `ndarray` arrays of `f64`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor with a strictly positive diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular {
    l: Array2<f64>,
}

impl LowerTriangular {
    /// Wraps an existing factor, checking the triangular structure.
    pub fn new(l: Array2<f64>) -> Result<Self> {
        let n = l.nrows();
        if l.ncols() != n {
            return Err(Error::dim(format!("factor must be square, got {:?}", l.dim())));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if l[[i, j]] != 0.0 {
                    return Err(Error::Data(format!("non-zero above diagonal at ({i}, {j})")));
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.l
    }

    /// Solves `L m = v` into `out`. Both slices have length `n`.
    pub fn solve_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        let l = self.l.as_slice().expect("factor is standard layout");
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let mut acc = v[i];
            for (lij, mj) in row.iter().zip(out.iter()) {
                acc -= lij * mj;
            }
            let diag = l[i * n + i];
            if diag == 0.0 {
                return Err(Error::SingularSolve { index: i });
            }
            out[i] = acc / diag;
        }
        Ok(())
    }

    /// Squared norm of `L^-1 v`, i.e. `v^T (L L^T)^-1 v`.
    pub fn quadratic_form(&self, v: &[f64], scratch: &mut [f64]) -> Result<f64> {
        self.solve_into(v, scratch)?;
        Ok(scratch.iter().map(|m| m * m).sum())
    }

    /// `(L L^T)^-1`, assembled column by column from triangular solves.
    pub fn inverse_of_product(&self) -> Result<Array2<f64>> {
        let n = self.dim();
        // L^-1, lower triangular.
        let mut linv = Array2::<f64>::zeros((n, n));
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            self.solve_into(&e, &mut col)?;
            for i in 0..n {
                linv[[i, j]] = col[i];
            }
        }
        let mut inv = linv.t().dot(&linv);
        symmetrize(&mut inv);
        Ok(inv)
    }
}

/// Pivots at or below this fraction of the largest diagonal entry count as
/// zero, so a rank-deficient matrix is rejected rather than factored from
/// round-off.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Cholesky factorization `A = L L^T` of a symmetric positive definite matrix.
pub fn cholesky_lower(a: ArrayView2<'_, f64>) -> Result<LowerTriangular> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim(format!("matrix must be square, got {:?}", a.dim())));
    }
    let floor = PIVOT_RTOL * (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > floor) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let djj = diag.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(LowerTriangular {
        l: Array2::from_shape_vec((n, n), l).expect("n*n buffer"),
    })
}

/// Solves `L m = v`.
pub fn forward_substitute(l: &LowerTriangular, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if v.len() != l.dim() {
        return Err(Error::dim(format!(
            "vector has length {}, factor is {}x{}",
            v.len(),
            l.dim(),
            l.dim()
        )));
    }
    let v = v.to_vec();
    let mut out = vec![0.0; v.len()];
    l.solve_into(&v, &mut out)?;
    Ok(Array1::from(out))
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    cholesky_lower(a)?.inverse_of_product()
}

/// Cholesky of `A + eps I`, escalating `eps` by x10 until it succeeds or
/// passes `max_eps`. Returns the factor and the regularization actually used.
pub fn regularized_cholesky(
    a: ArrayView2<'_, f64>,
    eps: f64,
    max_eps: f64,
) -> Result<(LowerTriangular, f64)> {
    let mut eps = eps;
    let mut reg = a.to_owned();
    loop {
        reg.assign(&a);
        for i in 0..reg.nrows() {
            reg[[i, i]] += eps;
        }
        match cholesky_lower(reg.view()) {
            Ok(l) => return Ok((l, eps)),
            Err(e) => {
                let next = eps * 10.0;
                if next > max_eps * (1.0 + 1e-9) {
                    return Err(e);
                }
                eps = next;
            }
        }
    }
}

pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// Running inverse of a covariance or correlation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseState {
    pub inv: Array2<f64>,
    /// Number of samples folded into the underlying matrix.
    pub count: u64,
}

impl InverseState {
    pub fn new(inv: Array2<f64>, count: u64) -> Self {
        Self { inv, count }
    }

    pub fn dim(&self) -> usize {
        self.inv.nrows()
    }
}

/// Relative size below which a Woodbury denominator is treated as zero.
pub const WOODBURY_TOL: f64 = 1e-12;

/// In place: `inv <- (A + c u u^T)^-1` given `inv = A^-1`.
/// `scratch` must have the same length as `u`.
pub fn rank1_update_in_place(
    inv: &mut Array2<f64>,
    u: &[f64],
    c: f64,
    scratch: &mut [f64],
) -> Result<()> {
    let n = u.len();
    let a = inv.as_slice_mut().expect("inverse is standard layout");
    // scratch = A^-1 u (A^-1 symmetric so u^T A^-1 is the same vector).
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        scratch[i] = row.iter().zip(u).map(|(x, y)| x * y).sum();
    }
    let quad: f64 = scratch.iter().zip(u).map(|(x, y)| x * y).sum();
    if quad == 0.0 && scratch.iter().all(|&x| x == 0.0) {
        return Ok(());
    }
    let denom = 1.0 / c + quad;
    let scale = (1.0 / c).abs() + quad.abs();
    if !denom.is_finite() || denom.abs() < WOODBURY_TOL * scale {
        return Err(Error::UpdateInstability { denominator: denom });
    }
    let f = 1.0 / denom;
    for i in 0..n {
        let si = scratch[i] * f;
        let row = &mut a[i * n..(i + 1) * n];
        for (x, sj) in row.iter_mut().zip(scratch.iter()) {
            *x -= si * sj;
        }
    }
    Ok(())
}

/// Rank-one Woodbury update: inverse of `A + c u u^T` from `A^-1`.
pub fn woodbury_rank1(
    ainv: &InverseState,
    u: ArrayView1<'_, f64>,
    c: f64,
) -> Result<InverseState> {
    if u.len() != ainv.dim() {
        return Err(Error::dim(format!(
            "update vector has length {}, inverse is {}x{}",
            u.len(),
            ainv.dim(),
            ainv.dim()
        )));
    }
    let u = u.to_vec();
    let mut out = ainv.inv.clone();
    let mut scratch = vec![0.0; u.len()];
    rank1_update_in_place(&mut out, &u, c, &mut scratch)?;
    symmetrize(&mut out);
    Ok(InverseState::new(out, ainv.count + 1))
}

/// In place block update: `inv <- (R + X^T X)^-1` given `inv = R^-1`,
/// with the `k x n` block `x` holding one new sample per row.
pub fn block_update_in_place(inv: &mut Array2<f64>, x: ArrayView2<'_, f64>) -> Result<()> {
    let k = x.nrows();
    if k == 0 {
        return Ok(());
    }
    // B = X R^-1 (k x n); S = I + B X^T (k x k).
    let b = x.dot(&*inv);
    let mut s = b.dot(&x.t());
    for i in 0..k {
        s[[i, i]] += 1.0;
    }
    let l = cholesky_lower(s.view()).map_err(|e| match e {
        Error::NotPositiveDefinite { value, .. } => Error::UpdateInstability { denominator: value },
        other => other,
    })?;
    // C = S^-1 B, solved column by column through L and L^T.
    let n = b.ncols();
    let mut c = Array2::<f64>::zeros((k, n));
    let mut col = vec![0.0; k];
    let mut tmp = vec![0.0; k];
    let lm = l.as_array();
    for j in 0..n {
        for i in 0..k {
            col[i] = b[[i, j]];
        }
        l.solve_into(&col, &mut tmp)?;
        // back substitution with L^T
        for i in (0..k).rev() {
            let mut acc = tmp[i];
            for r in (i + 1)..k {
                acc -= lm[[r, i]] * col[r];
            }
            col[i] = acc / lm[[i, i]];
        }
        for i in 0..k {
            c[[i, j]] = col[i];
        }
    }
    let correction = b.t().dot(&c);
    *inv -= &correction;
    symmetrize(inv);
    Ok(())
}

/// Block Woodbury update: inverse of `R + X^T X` from `R^-1`.
pub fn woodbury_block(rinv: &InverseState, x: ArrayView2<'_, f64>) -> Result<InverseState> {
    if x.nrows() > 0 && x.ncols() != rinv.dim() {
        return Err(Error::dim(format!(
            "block has {} columns, inverse is {}x{}",
            x.ncols(),
            rinv.dim(),
            rinv.dim()
        )));
    }
    let mut out = rinv.inv.clone();
    block_update_in_place(&mut out, x)?;
    Ok(InverseState::new(out, rinv.count + x.nrows() as u64))
}

/// Equal-weight running mean and scatter, merged one batch at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    /// Sum of outer products of deviations from the mean.
    pub scatter: Array2<f64>,
    pub count: u64,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scatter: Array2::zeros((dim, dim)),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Unbiased sample covariance; zero until two samples have been seen.
    pub fn covariance(&self) -> Array2<f64> {
        if self.count < 2 {
            return Array2::zeros(self.scatter.raw_dim());
        }
        &self.scatter / (self.count - 1) as f64
    }

    /// Merges a `k x dim` batch (pairwise combination of batch statistics).
    pub fn update_batch(&mut self, batch: ArrayView2<'_, f64>) {
        let k = batch.nrows();
        if k == 0 {
            return;
        }
        let dim = self.dim();
        let batch_mean = batch.mean_axis(Axis(0)).expect("non-empty batch");
        let mut batch_scatter = Array2::<f64>::zeros((dim, dim));
        let mut dev = vec![0.0; dim];
        for row in batch.rows() {
            for j in 0..dim {
                dev[j] = row[j] - batch_mean[j];
            }
            for i in 0..dim {
                let di = dev[i];
                for j in i..dim {
                    batch_scatter[[i, j]] += di * dev[j];
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                batch_scatter[[i, j]] = batch_scatter[[j, i]];
            }
        }
        self.merge(&batch_mean, &batch_scatter, k as u64);
    }

    pub fn merge(&mut self, batch_mean: &Array1<f64>, batch_scatter: &Array2<f64>, k: u64) {
        if k == 0 {
            return;
        }
        if self.count == 0 {
            self.mean.assign(batch_mean);
            self.scatter.assign(batch_scatter);
            self.count = k;
            return;
        }
        let na = self.count as f64;
        let nb = k as f64;
        let n = na + nb;
        let delta = batch_mean - &self.mean;
        self.mean.scaled_add(nb / n, &delta);
        let w = na * nb / n;
        let dim = self.dim();
        for i in 0..dim {
            for j in 0..dim {
                self.scatter[[i, j]] += batch_scatter[[i, j]] + w * delta[i] * delta[j];
            }
        }
        self.count += k;
    }
}

/// Folds a batch into mean/covariance over `n_seen` previous samples.
/// The covariance uses the unbiased `1/(n-1)` normalization.
pub fn welford_batch_update(
    mean: ArrayView1<'_, f64>,
    cov: ArrayView2<'_, f64>,
    n_seen: u64,
    batch: ArrayView2<'_, f64>,
) -> Result<(Array1<f64>, Array2<f64>, u64)> {
    if batch.nrows() == 0 {
        return Err(Error::config("batch must contain at least one row"));
    }
    if batch.ncols() != mean.len() || cov.dim() != (mean.len(), mean.len()) {
        return Err(Error::dim("batch, mean and covariance dimensions disagree"));
    }
    let scatter = if n_seen >= 2 {
        &cov * (n_seen - 1) as f64
    } else {
        Array2::zeros(cov.raw_dim())
    };
    let mut stats = RunningStats {
        mean: mean.to_owned(),
        scatter,
        count: n_seen,
    };
    stats.update_batch(batch);
    Ok((stats.mean.clone(), stats.covariance(), stats.count))
}

/// Settings for [`power_deflation_eigs`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerOptions {
    /// Iteration cap per eigenpair.
    pub max_iter: usize,
    /// Relative change in successive Rayleigh quotients.
    pub rayleigh_tol: f64,
    /// Residual `||K v - e v||` relative to `||K||_F`.
    pub residual_tol: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rayleigh_tol: 1e-8,
            residual_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs {
    /// Descending eigenvalues.
    pub values: Array1<f64>,
    /// Orthonormal eigenvectors, one per column.
    pub vectors: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Top-`count` eigenpairs of a symmetric PSD matrix by power iteration with
/// Hotelling deflation. Columns of `warm_start` seed the iterations.
pub fn power_deflation_eigs(
    k: ArrayView2<'_, f64>,
    count: usize,
    warm_start: Option<ArrayView2<'_, f64>>,
    opts: &PowerOptions,
) -> Result<EigenPairs> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::dim(format!("matrix must be square, got {:?}", k.dim())));
    }
    if count == 0 || count > n {
        return Err(Error::config(format!(
            "component count {count} must be in 1..={n}"
        )));
    }
    if let Some(ws) = &warm_start {
        if ws.nrows() != n || ws.ncols() < count {
            return Err(Error::dim("warm start must be n x k"));
        }
    }
    let norm_k = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut deflated = k.to_owned();
    let mut values = Array1::<f64>::zeros(count);
    let mut vectors = Array2::<f64>::zeros((n, count));
    let mut all_converged = true;
    let mut total_iter = 0;

    for j in 0..count {
        let mut v: Array1<f64> = match &warm_start {
            Some(ws) => ws.column(j).to_owned(),
            None => default_start(n, j),
        };
        orthogonalize(&mut v, &vectors, j);
        if !normalize(&mut v) {
            v = default_start(n, j);
            orthogonalize(&mut v, &vectors, j);
            if !normalize(&mut v) {
                v = axis_fallback(&vectors, j, n);
            }
        }

        let mut lambda = f64::NAN;
        let mut converged = false;
        for _ in 0..opts.max_iter {
            total_iter += 1;
            let mut w = deflated.dot(&v);
            let rq = v.dot(&w);
            let residual = (&w - &(&v * rq)).iter().map(|x| x * x).sum::<f64>().sqrt();
            let rq_stable = lambda.is_finite()
                && (rq - lambda).abs() <= opts.rayleigh_tol * rq.abs().max(f64::MIN_POSITIVE);
            lambda = rq;
            if residual <= opts.residual_tol * norm_k.max(f64::MIN_POSITIVE)
                && (rq_stable || residual == 0.0)
            {
                converged = true;
                break;
            }
            orthogonalize(&mut w, &vectors, j);
            if !normalize(&mut w) {
                // Remaining spectrum is numerically zero: any orthogonal unit vector works.
                lambda = 0.0;
                converged = true;
                break;
            }
            v = w;
        }
        if !converged {
            all_converged = false;
        }
        fix_sign(&mut v);
        let e = lambda.max(0.0);
        values[j] = e;
        vectors.column_mut(j).assign(&v);
        // Hotelling deflation.
        for r in 0..n {
            for c in 0..n {
                deflated[[r, c]] -= lambda * v[r] * v[c];
            }
        }
    }

    Ok(EigenPairs {
        values,
        vectors,
        converged: all_converged,
        iterations: total_iter,
    })
}

fn default_start(n: usize, j: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| 1.0 + 0.1 * ((i * 7 + j * 13) % 11) as f64)
}

fn axis_fallback(vectors: &Array2<f64>, j: usize, n: usize) -> Array1<f64> {
    for axis in 0..n {
        let mut v = Array1::zeros(n);
        v[axis] = 1.0;
        orthogonalize(&mut v, vectors, j);
        if normalize(&mut v) {
            return v;
        }
    }
    unreachable!("fewer than n orthonormal vectors always leave a free axis")
}

fn orthogonalize(v: &mut Array1<f64>, vectors: &Array2<f64>, upto: usize) {
    for q in 0..upto {
        let col = vectors.column(q);
        let d = col.dot(v);
        v.scaled_add(-d, &col);
    }
}

fn normalize(v: &mut Array1<f64>) -> bool {
    let norm = v.dot(v).sqrt();
    if !(norm > 1e-300) || !norm.is_finite() {
        return false;
    }
    *v /= norm;
    true
}

/// Largest-magnitude entry made positive.
fn fix_sign(v: &mut Array1<f64>) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}
