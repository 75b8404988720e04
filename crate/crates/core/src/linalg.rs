//! Dense real linear-algebra kernels shared by every other module:
//! structured reshapes (vec/vech, duplication and commutation matrices),
//! SVD-based pseudoinverses and null spaces, Lyapunov solves, spectral
//! tests, and the matrix exponential.
//!
//! All operations are pure functions of their inputs.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix, column-major storage.
pub type Matrix = DMatrix<f64>;
/// Dense real vector.
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff for rank decisions on noise-free data.
pub const RANK_TOL: f64 = 1e-8;
/// Eigenvalues with real part above `-HURWITZ_MARGIN` are treated as unstable.
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// Symmetric matrix wrapper. Construction either verifies symmetry or
/// enforces it by averaging, so downstream cone projections and Lyapunov
/// solves never see an asymmetric input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: Matrix,
}

impl SymMatrix {
    /// Wraps `m`, failing if the relative asymmetry exceeds `1e-8 * ||m||`.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape("symmetric matrix must be square".into()));
        }
        let dev = (&m - m.transpose()).norm();
        let scale = m.norm().max(1e-300);
        if dev > 1e-8 * scale {
            return Err(Error::NotSymmetric {
                deviation: dev / scale,
            });
        }
        Ok(Self::symmetrize(m))
    }

    /// Wraps `(m + mᵀ)/2` without checking how asymmetric `m` was.
    pub fn symmetrize(m: Matrix) -> Self {
        let sym = (&m + m.transpose()) * 0.5;
        SymMatrix { m: sym }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            m: Matrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            m: Matrix::zeros(n, n),
        }
    }

    /// Reconstructs a symmetric matrix from its half-vectorization.
    pub fn from_vech(n: usize, v: &Vector) -> Result<Self> {
        if v.len() != n * (n + 1) / 2 {
            return Err(Error::Shape(format!(
                "vech length {} does not match dimension {}",
                v.len(),
                n
            )));
        }
        let mut m = Matrix::zeros(n, n);
        let mut k = 0;
        for j in 0..n {
            for i in j..n {
                m[(i, j)] = v[k];
                m[(j, i)] = v[k];
                k += 1;
            }
        }
        Ok(SymMatrix { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    /// Lower-triangle column-major stacking, length n(n+1)/2.
    pub fn vech(&self) -> Vector {
        let n = self.dim();
        let mut v = Vector::zeros(n * (n + 1) / 2);
        let mut k = 0;
        for j in 0..n {
            for i in j..n {
                v[k] = self.m[(i, j)];
                k += 1;
            }
        }
        v
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vector {
        let (vals, _) = jacobi_eigen(&self.m);
        let mut ev: Vec<f64> = vals.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Vector::from_vec(ev)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Principal square root; requires eigenvalues ≥ `-tol` (clamped to zero).
    pub fn sqrt_psd(&self, tol: f64) -> Result<SymMatrix> {
        let (vals, q) = jacobi_eigen(&self.m);
        let mut d = vals;
        for v in d.iter_mut() {
            if *v < -tol {
                return Err(Error::NotPsd { min_eigenvalue: *v });
            }
            *v = v.max(0.0).sqrt();
        }
        Ok(SymMatrix::symmetrize(
            &q * Matrix::from_diagonal(&d) * q.transpose(),
        ))
    }

    /// Inverse through the eigendecomposition; fails when the condition
    /// number exceeds `1/RANK_TOL`.
    pub fn try_inverse(&self) -> Result<SymMatrix> {
        let (vals, q) = jacobi_eigen(&self.m);
        let max = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut d = vals;
        for v in d.iter_mut() {
            if v.abs() <= RANK_TOL * max.max(1e-300) {
                return Err(Error::Singular("symmetric inverse".into()));
            }
            *v = 1.0 / *v;
        }
        Ok(SymMatrix::symmetrize(
            &q * Matrix::from_diagonal(&d) * q.transpose(),
        ))
    }
}

impl std::ops::Deref for SymMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.m
    }
}

/// Eigenvalue summary of a square matrix.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Largest real part over all eigenvalues.
    pub abscissa: f64,
    /// True iff `abscissa < -margin`.
    pub hurwitz: bool,
    /// Margin threshold used for the Hurwitz decision.
    pub margin: f64,
}

/// Column-major vectorization.
pub fn vec_of(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`]: reshape a length `rows*cols` vector column-major.
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!(
            "cannot reshape length {} into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Half-vectorization of a (checked) symmetric matrix.
pub fn vech(m: &Matrix) -> Result<Vector> {
    Ok(SymMatrix::new(m.clone())?.vech())
}

/// Duplication matrix `D` with `vec(P) = D · vech(P)` for symmetric `P`.
pub fn duplication_matrix(n: usize) -> Matrix {
    let mut d = Matrix::zeros(n * n, n * (n + 1) / 2);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            d[(i + j * n, k)] = 1.0;
            if i != j {
                d[(j + i * n, k)] = 1.0;
            }
            k += 1;
        }
    }
    d
}

/// Commutation matrix `C` with `C · vec(M) = vec(Mᵀ)` for every m×n `M`.
pub fn commutation_matrix(m: usize, n: usize) -> Matrix {
    let mut c = Matrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // vec(M) position of M[i,j] -> vec(Mᵀ) position of Mᵀ[j,i]
            c[(j + i * n, i + j * m)] = 1.0;
        }
    }
    c
}

/// Kronecker product.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Slower than
/// tridiagonal QL but keeps eigenvectors orthogonal to machine precision
/// even for tightly clustered spectra, where the library solvers mispair
/// vectors. Returns (eigenvalues, eigenvectors) with eigenvalues unsorted.
pub fn jacobi_eigen(m: &Matrix) -> (Vector, Matrix) {
    let n = m.nrows();
    assert!(m.is_square(), "jacobi_eigen needs a square symmetric matrix");
    let mut a = SymMatrix::symmetrize(m.clone()).into_matrix();
    let mut v = Matrix::identity(n, n);
    let norm = a.norm().max(1e-300);
    for _sweep in 0..50 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
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
    (a.diagonal(), v)
}

/// One-sided Jacobi SVD of a tall matrix (rows ≥ cols): rotates column
/// pairs to mutual orthogonality, which keeps left/right vectors paired
/// correctly even for tightly clustered or vanishing singular values.
/// Returns (columns-of-U scaled by σ, V) with `a·V = U·Σ`.
fn hestenes_svd(a_tall: &Matrix) -> (Matrix, Matrix) {
    let rows = a_tall.nrows();
    let cols = a_tall.ncols();
    // contiguous per-column storage keeps the rotation loops on slices
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| a_tall.column(j).iter().copied().collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (app, aqq, apq) = {
                    let cp = &a[p];
                    let cq = &a[q];
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if apq.abs() <= 1e-15 * (app * aqq).sqrt().max(1e-300) {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let (left, right) = a.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                let (left, right) = v.split_at_mut(q);
                let vp = &mut left[p];
                let vq = &mut right[0];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let a_out = Matrix::from_fn(rows, cols, |i, j| a[j][i]);
    let v_out = Matrix::from_fn(cols, cols, |i, j| v[j][i]);
    (a_out, v_out)
}

/// Thin singular triplets of `M` (descending), computed by one-sided
/// Jacobi on the tall orientation.
fn singular_triplets(m: &Matrix) -> Vec<(f64, Vector, Vector)> {
    let (rows, cols) = m.shape();
    let wide = cols > rows;
    let work = if wide { m.transpose() } else { m.clone() };
    let (scaled_u, v) = hestenes_svd(&work);
    let k = work.ncols();
    let mut triplets: Vec<(f64, Vector, Vector)> = Vec::with_capacity(k);
    for i in 0..k {
        let col = scaled_u.column(i);
        let sigma = col.norm();
        if sigma > 0.0 {
            let left = col.into_owned() / sigma;
            let right = v.column(i).into_owned();
            if wide {
                triplets.push((sigma, right, left));
            } else {
                triplets.push((sigma, left, right));
            }
        }
    }
    triplets.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    triplets
}

/// Numerical rank with relative singular-value cutoff `tol`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let triplets = singular_triplets(m);
    let max = triplets.first().map_or(0.0, |t| t.0);
    if max == 0.0 {
        return 0;
    }
    triplets.iter().filter(|t| t.0 > tol * max).count()
}

/// Rank after normalizing every column to unit norm. Column scaling never
/// changes the rank but makes the relative cutoff meaningful for data with
/// a wide dynamic range (quadratic trajectory integrals in particular).
pub fn equilibrated_rank(m: &Matrix, tol: f64) -> usize {
    let mut scaled = m.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    rank(&scaled, tol)
}

/// Minimum-norm least squares `min ‖Ax − b‖` with column equilibration.
/// Scaling columns to unit norm leaves the solution of a consistent system
/// unchanged but stops badly mixed column scales from poisoning the SVD
/// truncation; the cutoff is near machine precision because the inputs
/// here are noise-free.
pub fn lstsq(a: &Matrix, b: &Vector) -> Vector {
    let mut scaled = a.clone();
    let mut d = Vector::from_element(a.ncols(), 1.0);
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 0.0 {
            d[j] = norm;
            col /= norm;
        }
    }
    let p = pinv(&scaled, 1e-13);
    let mut w = &p * b;
    // refinement against the scaled system recovers the exact LS solution
    // where a single pseudoinverse application loses digits to conditioning
    for _ in 0..2 {
        let r = b - &scaled * &w;
        w += &p * r;
    }
    Vector::from_fn(a.ncols(), |i, _| w[i] / d[i])
}

/// Moore–Penrose pseudoinverse via SVD; singular values below
/// `tol * σ_max` are treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Matrix {
    let (rows, cols) = m.shape();
    let triplets = singular_triplets(m);
    let max = triplets.first().map_or(0.0, |t| t.0);
    let mut out = Matrix::zeros(cols, rows);
    if max == 0.0 {
        return out;
    }
    for (sigma, u, v) in &triplets {
        if *sigma > tol * max {
            out += v * u.transpose() / *sigma;
        }
    }
    out
}

/// Pseudoinverse at the default rank tolerance.
pub fn pinv_default(m: &Matrix) -> Matrix {
    pinv(m, RANK_TOL)
}

/// Orthonormal basis of `ker(M)` as columns; empty (0-column) for
/// full-column-rank input.
pub fn null_basis(m: &Matrix, tol: f64) -> Matrix {
    let cols = m.ncols();
    let triplets = singular_triplets(m);
    let max = triplets.first().map_or(0.0, |t| t.0);
    let rk = if max == 0.0 {
        0
    } else {
        triplets.iter().filter(|t| t.0 > tol * max).count()
    };
    let dim = cols - rk;
    if dim == 0 {
        return Matrix::zeros(cols, 0);
    }
    // The kernel is recovered as the 1-eigenspace of the complement
    // projector I - V_r V_rᵀ; its eigenvalues split cleanly into {0, 1}.
    let mut proj = Matrix::identity(cols, cols);
    for (sigma, _, v) in &triplets {
        if *sigma > tol * max {
            proj -= v * v.transpose();
        }
    }
    let (vals, vecs) = jacobi_eigen(&proj);
    let mut idx: Vec<usize> = (0..cols).collect();
    idx.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]));
    let mut basis = Matrix::zeros(cols, dim);
    for (c, &i) in idx.iter().take(dim).enumerate() {
        basis.set_column(c, &vecs.column(i));
    }
    basis
}

/// Orthogonal projector `Π = I − M†M` onto `ker(M)`; requires full row rank.
pub fn nullspace_projector(m: &Matrix) -> Result<Matrix> {
    let rows = m.nrows();
    if rank(m, RANK_TOL) < rows {
        return Err(Error::RankDeficient {
            what: "nullspace projector input".into(),
            expected: rows,
            actual: rank(m, RANK_TOL),
        });
    }
    let p = Matrix::identity(m.ncols(), m.ncols()) - pinv_default(m) * m;
    Ok(SymMatrix::symmetrize(p).into_matrix())
}

/// Backend selection for [`solve_lyapunov_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LyapunovBackend {
    /// Solve the n²-dimensional vectorized linear system.
    #[default]
    Vectorized,
    /// Schur-based Bartels–Stewart back-substitution.
    BartelsStewart,
}

/// Unique symmetric `P` with `AᵀP + PA + W = 0` for Hurwitz `A`.
pub fn solve_lyapunov(a: &Matrix, w: &SymMatrix) -> Result<SymMatrix> {
    solve_lyapunov_with(LyapunovBackend::Vectorized, a, w)
}

pub fn solve_lyapunov_with(
    backend: LyapunovBackend,
    a: &Matrix,
    w: &SymMatrix,
) -> Result<SymMatrix> {
    let n = a.nrows();
    if !a.is_square() || w.dim() != n {
        return Err(Error::Shape("lyapunov operands must match".into()));
    }
    let report = spectral(a)?;
    if !report.hurwitz {
        return Err(Error::UnstableClosedLoop {
            abscissa: report.abscissa,
        });
    }
    let p = match backend {
        LyapunovBackend::Vectorized => {
            let eye = Matrix::identity(n, n);
            let at = a.transpose();
            let op = kron(&eye, &at) + kron(&at, &eye);
            let rhs = -vec_of(w.as_matrix());
            let sol = op
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("vectorized lyapunov operator".into()))?;
            SymMatrix::symmetrize(unvec(&sol, n, n)?)
        }
        LyapunovBackend::BartelsStewart => bartels_stewart(a, w)?,
    };
    let residual = (a.transpose() * p.as_matrix() + p.as_matrix() * a + w.as_matrix()).norm();
    let scale = w.norm() + p.norm() * a.norm();
    if residual > 1e-9 * scale.max(1.0) {
        return Err(Error::Numerical(format!(
            "lyapunov residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(p)
}

/// Bartels–Stewart: reduce `A` to real Schur form and back-substitute
/// column blocks of the transformed equation.
fn bartels_stewart(a: &Matrix, w: &SymMatrix) -> Result<SymMatrix> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    // Tᵀ Y + Y T = -QᵀWQ, P = Q Y Qᵀ
    let wt = q.transpose() * w.as_matrix() * &q;
    let mut y = Matrix::zeros(n, n);
    let mut j = 0;
    while j < n {
        // block width from the quasi-triangular subdiagonal
        let bw = if j + 1 < n && t[(j + 1, j)] != 0.0 { 2 } else { 1 };
        // Tᵀ Y_j + Y_j T_jj = -Wt_j - (Y columns already solved) T[:, j..j+bw]
        let mut rhs = -wt.columns(j, bw).into_owned();
        if j > 0 {
            rhs -= y.columns(0, j).clone_owned() * t.view((0, j), (j, bw));
        }
        let tjj = t.view((j, j), (bw, bw)).into_owned();
        let eye_b = Matrix::identity(bw, bw);
        let op = kron(&eye_b, &t.transpose()) + kron(&tjj.transpose(), &Matrix::identity(n, n));
        let sol = op
            .lu()
            .solve(&Vector::from_column_slice(rhs.as_slice()))
            .ok_or_else(|| Error::Singular("bartels-stewart diagonal block".into()))?;
        let block = unvec(&sol, n, bw)?;
        for c in 0..bw {
            y.set_column(j + c, &block.column(c));
        }
        j += bw;
    }
    Ok(SymMatrix::symmetrize(&q * y * q.transpose()))
}

/// Eigenvalues, spectral abscissa, and the Hurwitz flag of a square matrix.
pub fn spectral(m: &Matrix) -> Result<SpectralReport> {
    if !m.is_square() {
        return Err(Error::Shape("spectral analysis needs a square matrix".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(SpectralReport {
            eigenvalues: vec![],
            abscissa: f64::NEG_INFINITY,
            hurwitz: true,
            margin: HURWITZ_MARGIN,
        });
    }
    // the QR iteration can stall on rare matrices; a relative perturbation
    // far below the Hurwitz margin restarts it without changing any
    // decision made on the spectrum
    let mut schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100_000);
    let mut shift = 1e-14 * m.norm().max(1e-300);
    for _ in 0..3 {
        if schur.is_some() {
            break;
        }
        let mut perturbed = m.clone();
        for i in 0..n {
            perturbed[(i, i)] += shift * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        schur = nalgebra::linalg::Schur::try_new(perturbed, f64::EPSILON, 100_000);
        shift *= 32.0;
    }
    let schur =
        schur.ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut eigenvalues = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let re = 0.5 * (a + d);
            let disc = (a - d) * (a - d) + 4.0 * b * c;
            if disc < 0.0 {
                let im = 0.5 * (-disc).sqrt();
                eigenvalues.push(Complex::new(re, im));
                eigenvalues.push(Complex::new(re, -im));
            } else {
                let s = 0.5 * disc.sqrt();
                eigenvalues.push(Complex::new(re + s, 0.0));
                eigenvalues.push(Complex::new(re - s, 0.0));
            }
            i += 2;
        } else {
            eigenvalues.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    let abscissa = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectralReport {
        eigenvalues,
        abscissa,
        hurwitz: abscissa < -HURWITZ_MARGIN,
        margin: HURWITZ_MARGIN,
    })
}

/// True iff every eigenvalue of `m` has real part below `-HURWITZ_MARGIN`.
pub fn is_hurwitz(m: &Matrix) -> Result<bool> {
    Ok(spectral(m)?.hurwitz)
}

// Padé-13 coefficients for the scaling-and-squaring matrix exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const PADE13_THETA: f64 = 5.371920351148152;

/// Matrix exponential via scaling-and-squaring with a degree-13 Padé
/// approximant.
pub fn expm(m: &Matrix) -> Matrix {
    let n = m.nrows();
    assert!(m.is_square(), "expm needs a square matrix");
    let norm = one_norm(m);
    let s = if norm > PADE13_THETA {
        (norm / PADE13_THETA).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);
    let eye = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u = &a
        * (&a6 * (&a6 * PADE13[13] + &a4 * PADE13[11] + &a2 * PADE13[9])
            + &a6 * PADE13[7]
            + &a4 * PADE13[5]
            + &a2 * PADE13[3]
            + &eye * PADE13[1]);
    let v = &a6 * (&a6 * PADE13[12] + &a4 * PADE13[10] + &a2 * PADE13[8])
        + &a6 * PADE13[6]
        + &a4 * PADE13[4]
        + &a2 * PADE13[2]
        + &eye * PADE13[0];
    let mut e = (&v - &u)
        .lu()
        .solve_mut_ok(&v + &u)
        .expect("Padé denominator is nonsingular by construction");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

fn one_norm(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

trait LuSolveOk {
    fn solve_mut_ok(&self, rhs: Matrix) -> Option<Matrix>;
}

impl LuSolveOk for nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    fn solve_mut_ok(&self, mut rhs: Matrix) -> Option<Matrix> {
        if self.solve_mut(&mut rhs) {
            Some(rhs)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn rand_sym(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let m = randn(rng, n, n);
        (&m + m.transpose()) * 0.5
    }

    fn rand_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        loop {
            let m = randn(rng, n, n) - Matrix::identity(n, n) * 2.0;
            if spectral(&m).unwrap().hurwitz {
                return m;
            }
        }
    }

    #[test]
    fn vec_is_column_major() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec_of(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let id = Matrix::identity(2, 2);
        assert_eq!(vec_of(&id).as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(vec_of(&Matrix::zeros(2, 3)).len(), 6);
        assert!(vec_of(&Matrix::zeros(2, 3)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vech_lower_triangle() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(vech(&m).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(
            vech(&Matrix::identity(3, 3)).unwrap().as_slice(),
            &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn vech_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 3.0]);
        assert!(matches!(vech(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn duplication_small_cases() {
        assert_eq!(duplication_matrix(1), Matrix::identity(1, 1));
        let d2 = duplication_matrix(2);
        let expected = Matrix::from_row_slice(
            4,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        );
        assert_eq!(d2, expected);
    }

    #[test]
    fn duplication_reconstructs_vec() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = duplication_matrix(3);
        for _ in 0..100 {
            let p = rand_sym(&mut rng, 3);
            let lhs = vec_of(&p);
            let rhs = &d * vech(&p).unwrap();
            assert!((lhs - rhs).norm() == 0.0);
        }
    }

    #[test]
    fn commutation_transposes_vec() {
        assert_eq!(commutation_matrix(1, 1), Matrix::identity(1, 1));
        let m = Matrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        let c = commutation_matrix(2, 2);
        assert_eq!((&c * vec_of(&m)).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let m = randn(&mut rng, 3, 5);
            let c = commutation_matrix(3, 5);
            assert!((c * vec_of(&m) - vec_of(&m.transpose())).norm() == 0.0);
        }
    }

    #[test]
    fn commutation_fixes_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = commutation_matrix(4, 4);
        let s = rand_sym(&mut rng, 4);
        assert!((&c * vec_of(&s) - vec_of(&s)).norm() == 0.0);
    }

    #[test]
    fn commutation_inverse_pairs() {
        for m in 1..=5 {
            for n in 1..=5 {
                let prod = commutation_matrix(m, n) * commutation_matrix(n, m);
                assert!((prod - Matrix::identity(m * n, m * n)).norm() == 0.0);
            }
        }
    }

    #[test]
    fn kron_basics() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::from_element(1, 1, 5.0);
        assert_eq!(kron(&a, &b), Matrix::from_diagonal(&Vector::from_vec(vec![5.0, 5.0])));
        let a = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Matrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(
            kron(&a, &b),
            Matrix::from_row_slice(2, 2, &[3.0, 6.0, 4.0, 8.0])
        );
    }

    #[test]
    fn kron_vec_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = randn(&mut rng, 3, 3);
            let x = randn(&mut rng, 3, 3);
            let b = randn(&mut rng, 3, 3);
            let lhs = vec_of(&(&a * &x * &b));
            let rhs = kron(&b.transpose(), &a) * vec_of(&x);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    fn check_moore_penrose(m: &Matrix, mp: &Matrix, tol: f64) {
        let scale = m.norm().max(1.0);
        assert!((m * mp * m - m).norm() <= tol * scale, "MP1 failed");
        assert!((mp * m * mp - mp).norm() <= tol * mp.norm().max(1.0), "MP2 failed");
        let mmp = m * mp;
        assert!((&mmp - mmp.transpose()).norm() <= tol * mmp.norm().max(1.0), "MP3 failed");
        let mpm = mp * m;
        assert!((&mpm - mpm.transpose()).norm() <= tol * mpm.norm().max(1.0), "MP4 failed");
    }

    #[test]
    fn pinv_identity_and_row() {
        assert!((pinv_default(&Matrix::identity(4, 4)) - Matrix::identity(4, 4)).norm() < 1e-12);
        let m = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let mp = pinv_default(&m);
        assert!((mp - Matrix::from_column_slice(2, 1, &[1.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn pinv_full_row_rank_right_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = randn(&mut rng, 6, 20);
        let mp = pinv_default(&m);
        assert!((m * mp - Matrix::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn pinv_satisfies_moore_penrose_all_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for shape in [(6usize, 20usize), (20, 6), (4, 4)] {
            for _ in 0..100 {
                let m = randn(&mut rng, shape.0, shape.1);
                let mp = pinv_default(&m);
                check_moore_penrose(&m, &mp, 1e-10);
            }
        }
    }

    #[test]
    fn null_basis_coordinate_kernel() {
        let m = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let n = null_basis(&m, RANK_TOL);
        assert_eq!(n.shape(), (3, 2));
        assert!((&m * &n).norm() < 1e-12);
        assert!((n.transpose() * &n - Matrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn null_basis_trivial_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = randn(&mut rng, 4, 4) + Matrix::identity(4, 4) * 5.0;
        let n = null_basis(&m, RANK_TOL);
        assert_eq!(n.ncols(), 0);
    }

    #[test]
    fn null_basis_wide_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = randn(&mut rng, 4, 20);
        let n = null_basis(&m, RANK_TOL);
        assert_eq!(n.shape(), (20, 16));
        assert!((n.transpose() * &n - Matrix::identity(16, 16)).norm() < 1e-10);
        assert!((&m * &n).norm() < 1e-10 * m.norm());
    }

    #[test]
    fn projector_identity_and_row() {
        let p = nullspace_projector(&Matrix::identity(3, 3)).unwrap();
        assert!(p.norm() < 1e-12);
        let p = nullspace_projector(&Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert!((p - Matrix::from_diagonal(&Vector::from_vec(vec![0.0, 1.0]))).norm() < 1e-12);
    }

    #[test]
    fn projector_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = randn(&mut rng, 4, 20);
        let p = nullspace_projector(&m).unwrap();
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.transpose()).norm() < 1e-10);
        assert!((&m * &p).norm() < 1e-10 * m.norm());
    }

    #[test]
    fn projector_rejects_rank_deficient() {
        let mut m = Matrix::zeros(2, 3);
        m[(0, 0)] = 1.0;
        m[(1, 0)] = 1.0;
        assert!(nullspace_projector(&m).is_err());
    }

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let a = Matrix::from_element(1, 1, -1.0);
        let w = SymMatrix::new(Matrix::from_element(1, 1, 2.0)).unwrap();
        let p = solve_lyapunov(&a, &w).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);

        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
        let p = solve_lyapunov(&a, &SymMatrix::identity(2)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((p[(1, 1)] - 0.25).abs() < 1e-12);
        assert!(p[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = Matrix::from_element(1, 1, 0.5);
        let err = solve_lyapunov(&a, &SymMatrix::identity(1)).unwrap_err();
        assert!(matches!(err, Error::UnstableClosedLoop { .. }));
    }

    #[test]
    fn lyapunov_matches_quadrature() {
        // P = ∫ e^{Aᵀt} W e^{At} dt via fine composite Simpson
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = rand_hurwitz(&mut rng, 4);
        let w = SymMatrix::symmetrize({
            let g = randn(&mut rng, 4, 4);
            &g * g.transpose()
        });
        let p = solve_lyapunov(&a, &w).unwrap();

        let horizon = 40.0;
        let steps = 20_000usize;
        let h = horizon / steps as f64;
        let eh = expm(&(&a * h));
        let mut phi = Matrix::identity(4, 4);
        let mut acc = Matrix::zeros(4, 4);
        for k in 0..=steps {
            let term = phi.transpose() * w.as_matrix() * &phi;
            let weight = if k == 0 || k == steps {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += term * weight;
            phi = &eh * phi;
        }
        acc *= h / 3.0;
        assert!((p.as_matrix() - acc).norm() < 1e-6 * p.norm().max(1.0));
    }

    #[test]
    fn lyapunov_backends_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = rand_hurwitz(&mut rng, 5);
            let w = SymMatrix::symmetrize(rand_sym(&mut rng, 5));
            let p1 = solve_lyapunov_with(LyapunovBackend::Vectorized, &a, &w).unwrap();
            let p2 = solve_lyapunov_with(LyapunovBackend::BartelsStewart, &a, &w).unwrap();
            assert!((p1.as_matrix() - p2.as_matrix()).norm() < 1e-9 * p1.norm().max(1.0));
        }
    }

    #[test]
    fn spectral_reports() {
        let r = spectral(&Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]))).unwrap();
        assert!(r.hurwitz);
        assert!((r.abscissa + 1.0).abs() < 1e-12);

        let double_integrator = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let r = spectral(&double_integrator).unwrap();
        assert!(!r.hurwitz);
        assert!(r.abscissa.abs() < 1e-12);
    }

    #[test]
    fn spectral_companion_matrix() {
        // companion of (s+1)(s+2)(s+3) = s^3 + 6 s^2 + 11 s + 6
        let m = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0]);
        let r = spectral(&m).unwrap();
        assert!((r.abscissa + 1.0).abs() < 1e-9);
        assert!(r.hurwitz);
    }

    #[test]
    fn spectral_invariant_matches_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let m = randn(&mut rng, 4, 4);
            let r = spectral(&m).unwrap();
            assert_eq!(r.hurwitz, r.abscissa < -r.margin);
        }
    }

    #[test]
    fn expm_basics() {
        assert!((expm(&Matrix::zeros(3, 3)) - Matrix::identity(3, 3)).norm() < 1e-14);
        let d = expm(&Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0])));
        assert!((d[(0, 0)] - 1f64.exp()).abs() < 1e-13);
        assert!((d[(1, 1)] - (-1f64).exp()).abs() < 1e-13);
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!((expm(&nil) - Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).norm() < 1e-14);
    }

    #[test]
    fn expm_group_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let m = rand_hurwitz(&mut rng, 4);
            for (s, t) in [(0.01, 0.1), (0.1, 0.1), (0.01, 0.01)] {
                let lhs = expm(&(&m * (s + t)));
                let rhs = expm(&(&m * s)) * expm(&(&m * t));
                assert!((lhs - rhs).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn expm_accuracy_against_squaring() {
        // e^M computed directly vs (e^{M/2})² for moderate norms
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            let m = randn(&mut rng, 5, 5) * 2.0;
            let e1 = expm(&m);
            let e2 = expm(&(&m * 0.5));
            assert!((&e1 - &e2 * &e2).norm() < 1e-12 * e1.norm());
        }
    }

    #[test]
    fn sym_matrix_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let s = SymMatrix::symmetrize(randn(&mut rng, 4, 4));
        let back = SymMatrix::from_vech(4, &s.vech()).unwrap();
        assert_eq!(s.as_matrix(), back.as_matrix());
        assert_eq!(s.vech().len(), 10);

        let spd = SymMatrix::symmetrize({
            let g = randn(&mut rng, 4, 4);
            &g * g.transpose() + Matrix::identity(4, 4)
        });
        let root = spd.sqrt_psd(1e-12).unwrap();
        assert!((root.as_matrix() * root.as_matrix() - spd.as_matrix()).norm() < 1e-10);
        let inv = spd.try_inverse().unwrap();
        assert!((spd.as_matrix() * inv.as_matrix() - Matrix::identity(4, 4)).norm() < 1e-10);
    }
}
