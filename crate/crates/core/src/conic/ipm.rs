//! Primal-dual path-following interior-point method with Nesterov–Todd
//! scaling for the PSD blocks and direct handling of free variables in the
//! reduced KKT system. Dense linear algebra throughout; problems here stay
//! in the low hundreds of variables.

use nalgebra::DVector;

use super::{ConicProblem, ConicSolution, PsdBlock, SolveStatus, SolverSettings};
use crate::linalg::{Matrix, SymMatrix, Vector};

/// Scaled vectorization: off-diagonal entries carry √2 so that
/// `⟨svec(A), svec(B)⟩ = tr(AB)`.
fn svec(m: &Matrix) -> Vector {
    let d = m.nrows();
    let mut v = Vector::zeros(d * (d + 1) / 2);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            v[k] = if i == j {
                m[(i, j)]
            } else {
                std::f64::consts::SQRT_2 * m[(i, j)]
            };
            k += 1;
        }
    }
    v
}

fn unsvec(v: &Vector, d: usize) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            let val = if i == j {
                v[k]
            } else {
                v[k] / std::f64::consts::SQRT_2
            };
            m[(i, j)] = val;
            m[(j, i)] = val;
            k += 1;
        }
    }
    m
}

/// Symmetric square root and its inverse through the eigendecomposition.
/// Eigenvalues are floored at a tiny positive multiple of the largest one:
/// the inputs are PD by construction and only lose definiteness to
/// rounding at extreme barrier parameters.
fn sqrt_pair(m: &Matrix) -> Option<(Matrix, Matrix)> {
    let (vals, q) = crate::linalg::jacobi_eigen(m);
    let max = vals.iter().fold(0.0_f64, |a, v| a.max(*v));
    if !(max > 0.0) || !max.is_finite() {
        return None;
    }
    let floor = 1e-14 * max;
    let mut root = vals.clone();
    let mut inv = vals;
    for i in 0..root.len() {
        let s = root[i].max(floor).sqrt();
        root[i] = s;
        inv[i] = 1.0 / s;
    }
    Some((
        &q * Matrix::from_diagonal(&root) * q.transpose(),
        &q * Matrix::from_diagonal(&inv) * q.transpose(),
    ))
}

struct BlockScaling {
    /// NT scaling point W (PD), with its square root and inverse root.
    w_half: Matrix,
    w_half_inv: Matrix,
    /// λ = W^{-1/2} S W^{-1/2} = W^{1/2} Z W^{1/2}, eigendecomposed.
    lambda: Matrix,
    lambda_vecs: Matrix,
    lambda_vals: Vector,
}

impl BlockScaling {
    fn new(s: &Matrix, z: &Matrix) -> Option<Self> {
        let (z_half, _) = sqrt_pair(z)?;
        let inner = &z_half * s * &z_half;
        let (inner_half, _) = sqrt_pair(&inner)?;
        let (_, z_half_inv) = sqrt_pair(z)?;
        let w = &z_half_inv * inner_half * &z_half_inv;
        let (w_half, w_half_inv) = sqrt_pair(&w)?;
        let lambda = SymMatrix::symmetrize(&w_half * z * &w_half).into_matrix();
        let (lambda_vals, lambda_vecs) = crate::linalg::jacobi_eigen(&lambda);
        Some(BlockScaling {
            w_half,
            w_half_inv,
            lambda,
            lambda_vecs,
            lambda_vals,
        })
    }

    /// Solves `λ∘X = V` (symmetrized product) for symmetric V.
    fn lyap_solve(&self, v: &Matrix) -> Matrix {
        let q = &self.lambda_vecs;
        let vt = q.transpose() * v * q;
        let d = self.lambda_vals.len();
        let mut x = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                x[(i, j)] = 2.0 * vt[(i, j)] / (self.lambda_vals[i] + self.lambda_vals[j]);
            }
        }
        q * x * q.transpose()
    }
}

/// Maximum step α keeping `λ-scaled M + α·D` PSD; 1.0 when unconstrained.
fn max_step(lambda: &BlockScaling, scaled_dir: &Matrix) -> f64 {
    // step to the boundary of λ + α·D ⪰ 0: α = -1/λ_min(λ^{-1/2} D λ^{-1/2})
    let q = &lambda.lambda_vecs;
    let vals = &lambda.lambda_vals;
    let dt = q.transpose() * scaled_dir * q;
    let d = vals.len();
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = dt[(i, j)] / (vals[i] * vals[j]).sqrt();
        }
    }
    let min_eig = SymMatrix::symmetrize(m).eigenvalues()[0];
    if min_eig >= -1e-14 {
        1.0
    } else {
        (1.0 / -min_eig).min(1.0)
    }
}

struct Workspace<'a> {
    prob: &'a ConicProblem,
    /// Indices of free variables in the decision vector.
    free_idx: Vec<usize>,
    /// Equality matrix split: free part and svec-scaled cone part, with
    /// rows equilibrated to unit norm.
    a_free: Matrix,
    a_cone: Matrix,
    c_free: Vector,
    c_cone: Vector,
    /// Row-equilibrated right-hand side.
    rhs: Vector,
    /// Row scales applied to the equalities (defines the dual units).
    row_scale: Vector,
    blocks: Vec<PsdBlock>,
    /// svec offsets per block.
    offsets: Vec<usize>,
    cone_len: usize,
}

impl<'a> Workspace<'a> {
    fn new(prob: &'a ConicProblem) -> Self {
        let mut is_cone = vec![false; prob.num_vars];
        for b in &prob.blocks {
            for &v in &b.vars {
                is_cone[v] = true;
            }
        }
        let free_idx: Vec<usize> = (0..prob.num_vars).filter(|i| !is_cone[*i]).collect();
        let p = prob.eq_rhs.len();
        let cone_len: usize = prob.blocks.iter().map(|b| b.vars.len()).sum();

        let mut a_free = Matrix::zeros(p, free_idx.len());
        let mut c_free = Vector::zeros(free_idx.len());
        for (col, &i) in free_idx.iter().enumerate() {
            for r in 0..p {
                a_free[(r, col)] = prob.eq_lhs[(r, i)];
            }
            c_free[col] = prob.objective[i];
        }

        // cone variables are the blocks' vech coordinates; svec scaling
        // divides off-diagonal coefficients by √2 (x_offdiag = s/√2)
        let mut a_cone = Matrix::zeros(p, cone_len);
        let mut c_cone = Vector::zeros(cone_len);
        let mut offsets = Vec::with_capacity(prob.blocks.len());
        let mut off = 0usize;
        for b in &prob.blocks {
            offsets.push(off);
            let mut k = 0usize;
            for j in 0..b.dim {
                for i in j..b.dim {
                    let var = b.vars[k];
                    let scale = if i == j {
                        1.0
                    } else {
                        1.0 / std::f64::consts::SQRT_2
                    };
                    for r in 0..p {
                        a_cone[(r, off + k)] = prob.eq_lhs[(r, var)] * scale;
                    }
                    c_cone[off + k] = prob.objective[var] * scale;
                    k += 1;
                }
            }
            off += b.vars.len();
        }

        // row equilibration: unit-norm equality rows keep the multiplier
        // scales comparable and lower the solver's accuracy floor
        let mut row_scale = Vector::from_element(p, 1.0);
        let mut rhs = prob.eq_rhs.clone();
        for r in 0..p {
            let norm = (a_free.row(r).norm().powi(2) + a_cone.row(r).norm().powi(2)).sqrt();
            if norm > 1e-300 {
                row_scale[r] = norm;
                for cc in 0..a_free.ncols() {
                    a_free[(r, cc)] /= norm;
                }
                for cc in 0..a_cone.ncols() {
                    a_cone[(r, cc)] /= norm;
                }
                rhs[r] /= norm;
            }
        }

        Workspace {
            prob,
            free_idx,
            a_free,
            a_cone,
            c_free,
            c_cone,
            rhs,
            row_scale,
            blocks: prob.blocks.clone(),
            offsets,
            cone_len,
        }
    }

    fn block_mat(&self, v: &Vector, bi: usize) -> Matrix {
        let b = &self.blocks[bi];
        unsvec(
            &v.rows(self.offsets[bi], b.vars.len()).into_owned(),
            b.dim,
        )
    }

    fn set_block(&self, v: &mut Vector, bi: usize, m: &Matrix) {
        let b = &self.blocks[bi];
        v.rows_mut(self.offsets[bi], b.vars.len())
            .copy_from(&svec(m));
    }

    /// Maps the internal (free, svec) pair back to original coordinates.
    fn to_primal(&self, u: &Vector, s: &Vector) -> Vector {
        let mut x = Vector::zeros(self.prob.num_vars);
        for (col, &i) in self.free_idx.iter().enumerate() {
            x[i] = u[col];
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            let mut k = 0usize;
            for j in 0..b.dim {
                for i in j..b.dim {
                    let val = s[self.offsets[bi] + k];
                    x[b.vars[k]] = if i == j {
                        val
                    } else {
                        val / std::f64::consts::SQRT_2
                    };
                    k += 1;
                }
            }
        }
        x
    }
}

/// Solves the conic problem with a Mehrotra predictor-corrector IPM.
pub fn solve(prob: &ConicProblem, settings: &SolverSettings) -> crate::Result<ConicSolution> {
    prob.validate()?;
    let ws = Workspace::new(prob);
    let p = prob.eq_rhs.len();
    let nf = ws.free_idx.len();
    let ns = ws.cone_len;
    let nu: f64 = ws.blocks.iter().map(|b| b.dim as f64).sum::<f64>().max(1.0);

    // least-squares start shifted into the cone interior
    let mut a_full = Matrix::zeros(p, nf + ns);
    a_full.view_mut((0, 0), (p, nf)).copy_from(&ws.a_free);
    a_full.view_mut((0, nf), (p, ns)).copy_from(&ws.a_cone);
    let a_pinv = crate::linalg::pinv(&a_full, 1e-12);
    let v0 = &a_pinv * &ws.rhs;
    let mut u = v0.rows(0, nf).into_owned();
    let mut s = v0.rows(nf, ns).into_owned();
    let mut c_full = Vector::zeros(nf + ns);
    c_full.rows_mut(0, nf).copy_from(&ws.c_free);
    c_full.rows_mut(nf, ns).copy_from(&ws.c_cone);
    let mut y = a_pinv.transpose() * &c_full;
    let mut z = &ws.c_cone - ws.a_cone.transpose() * &y;
    for bi in 0..ws.blocks.len() {
        let s_m = ws.block_mat(&s, bi);
        let z_m = ws.block_mat(&z, bi);
        let d = ws.blocks[bi].dim;
        let eye = Matrix::identity(d, d);
        let s_min = SymMatrix::symmetrize(s_m.clone()).min_eigenvalue();
        if s_min < 0.1 {
            ws.set_block(&mut s, bi, &(s_m + &eye * (1.0 - s_min)));
        }
        let z_min = SymMatrix::symmetrize(z_m.clone()).min_eigenvalue();
        if z_min < 0.1 {
            ws.set_block(&mut z, bi, &(z_m + &eye * (1.0 - z_min)));
        }
    }
    let mut best: Option<(Vector, Vector, Vector, Vector, usize)> = None;
    let mut best_metric = f64::INFINITY;
    let mut stall_count = 0usize;
    let mut last_alpha = 0.0_f64;

    let b_scale = 1.0 + ws.rhs.norm();
    let c_scale = 1.0 + ws.c_free.norm() + ws.c_cone.norm();

    let finish = |status: SolveStatus,
                  it: usize,
                  ws: &Workspace,
                  best: &Option<(Vector, Vector, Vector, Vector, usize)>,
                  u: &Vector,
                  s: &Vector,
                  y: &Vector,
                  settings: &SolverSettings| {
        let (u, s, y, it) = match best {
            Some((bu, bs, by, _bz, bit)) => (bu.clone(), bs.clone(), by.clone(), *bit),
            None => (u.clone(), s.clone(), y.clone(), it),
        };
        let rp = &ws.rhs - &ws.a_free * &u - &ws.a_cone * &s;
        let rd_u = &ws.c_free - ws.a_free.transpose() * &y;
        let z_est = &ws.c_cone - ws.a_cone.transpose() * &y;
        let pobj = ws.c_free.dot(&u) + ws.c_cone.dot(&s);
        let dobj = ws.rhs.dot(&y);
        let rel_p = rp.norm() / (1.0 + ws.rhs.norm());
        let rel_d = rd_u.norm() / (1.0 + ws.c_free.norm() + ws.c_cone.norm());
        let rel_gap = s.dot(&z_est).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        let status = if rel_p <= settings.tolerance
            && rel_d <= settings.tolerance
            && rel_gap <= settings.tolerance
        {
            SolveStatus::Optimal
        } else {
            status
        };
        let duals = Vector::from_fn(p, |r, _| y[r] / ws.row_scale[r]);
        ConicSolution {
            status,
            primal: ws.to_primal(&u, &s),
            equality_duals: duals,
            objective: pobj,
            primal_residual: rel_p,
            dual_residual: rel_d,
            gap: rel_gap,
            iterations: it,
        }
    };

    for iter in 0..settings.max_iterations {
        let rp = &ws.rhs - &ws.a_free * &u - &ws.a_cone * &s;
        let rd_u = &ws.c_free - ws.a_free.transpose() * &y;
        let rd_s = &ws.c_cone - ws.a_cone.transpose() * &y - &z;
        let mu = s.dot(&z) / nu;

        let pobj = ws.c_free.dot(&u) + ws.c_cone.dot(&s);
        let dobj = ws.rhs.dot(&y);
        let rel_p = rp.norm() / b_scale;
        let rel_d = (rd_u.norm().powi(2) + rd_s.norm().powi(2)).sqrt() / c_scale;
        // complementarity measure: equals the duality gap at feasibility
        // and is immune to the infeasibility noise in pobj − dobj
        let rel_gap = s.dot(&z) / (1.0 + pobj.abs().max(dobj.abs()));

        let metric = rel_p.max(rel_d).max(rel_gap);
        if metric < 0.9 * best_metric {
            stall_count = 0;
        } else {
            stall_count += 1;
        }
        if metric < best_metric {
            best_metric = metric;
            best = Some((u.clone(), s.clone(), y.clone(), z.clone(), iter));
        }
        // only declare a stall once genuinely near a solution; the early
        // phase can wander without improving the best iterate
        if stall_count >= 15 && best_metric < 1e-3 {
            return Ok(finish(
                SolveStatus::MaxIterations,
                iter,
                &ws,
                &best,
                &u,
                &s,
                &y,
                settings,
            ));
        }

        if std::env::var_os("DDLQR_IPM_TRACE").is_some() {
            eprintln!(
                "ipm iter {iter}: rp {rel_p:.3e} rd {rel_d:.3e} gap {rel_gap:.3e} mu {mu:.3e} alpha {last_alpha:.3e}"
            );
        }
        if rel_p <= settings.tolerance && rel_d <= settings.tolerance && rel_gap <= settings.tolerance
        {
            let duals = Vector::from_fn(p, |r, _| y[r] / ws.row_scale[r]);
            return Ok(ConicSolution {
                status: SolveStatus::Optimal,
                primal: ws.to_primal(&u, &s),
                equality_duals: duals,
                objective: pobj,
                primal_residual: rel_p,
                dual_residual: rel_d,
                gap: rel_gap,
                iterations: iter,
            });
        }

        // primal-infeasibility certificate: a dual ray with Aᵀy + z ≈ 0,
        // z ⪰ 0 and bᵀy > 0
        let y_norm = y.norm();
        if y_norm > 1e4 * b_scale {
            let ray_obj = ws.rhs.dot(&y) / y_norm;
            let ray_res = ((ws.a_free.transpose() * &y).norm().powi(2)
                + (ws.a_cone.transpose() * &y + &z).norm().powi(2))
            .sqrt()
                / y_norm;
            if ray_obj > 1e-6 && ray_res < 1e-6 {
                let duals = Vector::from_fn(p, |r, _| y[r] / ws.row_scale[r]);
                return Ok(ConicSolution {
                    status: SolveStatus::Infeasible,
                    primal: ws.to_primal(&u, &s),
                    equality_duals: duals,
                    objective: f64::NAN,
                    primal_residual: rel_p,
                    dual_residual: rel_d,
                    gap: rel_gap,
                    iterations: iter,
                });
            }
        }

        // NT scalings per block and the svec-space Hessian W ⊛ W
        let mut scalings = Vec::with_capacity(ws.blocks.len());
        let mut hessian = Matrix::zeros(ns, ns);
        for bi in 0..ws.blocks.len() {
            let s_m = ws.block_mat(&s, bi);
            let z_m = ws.block_mat(&z, bi);
            let scaling = match BlockScaling::new(&s_m, &z_m) {
                Some(sc) => sc,
                None => {
                    return Ok(finish(
                        SolveStatus::Numerical,
                        iter,
                        &ws,
                        &best,
                        &u,
                        &s,
                        &y,
                        settings,
                    ))
                }
            };
            let d = ws.blocks[bi].dim;
            let len = d * (d + 1) / 2;
            let w = &scaling.w_half * &scaling.w_half;
            // columns of W ⊛ W: svec(W · unsvec(e_k) · W)
            let mut col_vec = Vector::zeros(len);
            for k in 0..len {
                col_vec.fill(0.0);
                col_vec[k] = 1.0;
                let e = unsvec(&col_vec, d);
                let out = svec(&(&w * e * &w));
                for r in 0..len {
                    hessian[(ws.offsets[bi] + r, ws.offsets[bi] + k)] = out[r];
                }
            }
            scalings.push(scaling);
        }

        // reduced KKT: [[A_s H A_sᵀ, A_u], [A_uᵀ, 0]]
        let mut kkt = Matrix::zeros(p + nf, p + nf);
        let ah = &ws.a_cone * &hessian;
        kkt.view_mut((0, 0), (p, p))
            .copy_from(&(&ah * ws.a_cone.transpose()));
        kkt.view_mut((0, p), (p, nf)).copy_from(&ws.a_free);
        kkt.view_mut((p, 0), (nf, p))
            .copy_from(&ws.a_free.transpose());
        // tiny quasi-definite regularization keeps the factorization
        // stable; scaled by the (equilibrated) constraint data only — the
        // scaling Hessian grows like 1/μ and must not inflate it
        let reg = 1e-13 * (1.0 + ws.a_free.norm() + ws.a_cone.norm());
        for i in 0..p {
            kkt[(i, i)] += reg;
        }
        for i in p..p + nf {
            kkt[(i, i)] -= reg;
        }
        let lu = kkt.lu();

        // direction solver for a given complementarity target, with
        // iterative refinement against the unreduced Newton equations
        // (the reduced system turns ill-conditioned as μ collapses)
        let raw_dir = |rp_t: &Vector,
                       rdu_t: &Vector,
                       rds_t: &Vector,
                       rc_t: &Vector|
         -> Option<(Vector, Vector, Vector, Vector)> {
            let mut rhs = DVector::zeros(p + nf);
            let top = rp_t - &ws.a_cone * rc_t + &ah * rds_t;
            rhs.rows_mut(0, p).copy_from(&top);
            rhs.rows_mut(p, nf).copy_from(rdu_t);
            let sol = lu.solve(&rhs)?;
            let dy = sol.rows(0, p).into_owned();
            let du = sol.rows(p, nf).into_owned();
            let dz = rds_t - ws.a_cone.transpose() * &dy;
            let ds = rc_t - &hessian * &dz;
            Some((dy, du, ds, dz))
        };
        let solve_dir = |rc_scaled: &Vector| -> Option<(Vector, Vector, Vector, Vector)> {
            let (mut dy, mut du, mut ds, mut dz) = raw_dir(&rp, &rd_u, &rd_s, rc_scaled)?;
            // the Schur-complement back-substitution amplifies factorization
            // error through the scaling Hessian; refinement rounds win back
            // roughly two digits each
            let mut prev = f64::INFINITY;
            for _ in 0..10 {
                let e1 = &rp - &ws.a_free * &du - &ws.a_cone * &ds;
                let e2 = &rd_u - ws.a_free.transpose() * &dy;
                let e3 = &rd_s - ws.a_cone.transpose() * &dy - &dz;
                let e4 = rc_scaled - &ds - &hessian * &dz;
                let err = (e1.norm().powi(2) + e2.norm().powi(2) + e3.norm().powi(2)
                    + e4.norm().powi(2))
                .sqrt();
                if err >= 0.5 * prev || err < 1e-14 {
                    break;
                }
                prev = err;
                let (cy, cu, cs, cz) = raw_dir(&e1, &e2, &e3, &e4)?;
                dy += cy;
                du += cu;
                ds += cs;
                dz += cz;
            }
            Some((dy, du, ds, dz))
        };

        // affine predictor: Rc = −λ², whose λ-solve is −λ, so the scaled
        // correction is −svec(W^{1/2} λ W^{1/2}) = −svec(S)
        let mut rc = Vector::zeros(ns);
        for bi in 0..ws.blocks.len() {
            let s_m = ws.block_mat(&s, bi);
            let part = svec(&(-s_m));
            for r in 0..part.len() {
                rc[ws.offsets[bi] + r] = part[r];
            }
        }
        let (_dy_a, _du_a, ds_a, dz_a) = match solve_dir(&rc) {
            Some(v) => v,
            None => {
                return Ok(finish(
                    SolveStatus::Numerical,
                    iter,
                    &ws,
                    &best,
                    &u,
                    &s,
                    &y,
                    settings,
                ))
            }
        };

        // maximum cone steps for the affine direction
        let mut alpha_p = 1.0_f64;
        let mut alpha_d = 1.0_f64;
        for (bi, sc) in scalings.iter().enumerate() {
            let ds_m = ws.block_mat(&ds_a, bi);
            let dz_m = ws.block_mat(&dz_a, bi);
            let ds_scaled = &sc.w_half_inv * ds_m * &sc.w_half_inv;
            let dz_scaled = &sc.w_half * dz_m * &sc.w_half;
            alpha_p = alpha_p.min(max_step(sc, &ds_scaled));
            alpha_d = alpha_d.min(max_step(sc, &dz_scaled));
        }

        let mu_aff = (&s + &ds_a * alpha_p).dot(&(&z + &dz_a * alpha_d)) / nu;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // corrector: Rc = σμI − λ² − sym(dS̄ dZ̄)
        let mut rc = Vector::zeros(ns);
        for (bi, sc) in scalings.iter().enumerate() {
            let d = ws.blocks[bi].dim;
            let ds_m = ws.block_mat(&ds_a, bi);
            let dz_m = ws.block_mat(&dz_a, bi);
            let ds_scaled = &sc.w_half_inv * ds_m * &sc.w_half_inv;
            let dz_scaled = &sc.w_half * dz_m * &sc.w_half;
            let cross = &ds_scaled * &dz_scaled;
            let cross_sym = (&cross + cross.transpose()) * 0.5;
            let target = Matrix::identity(d, d) * (sigma * mu)
                - &sc.lambda * &sc.lambda
                - cross_sym;
            let x = sc.lyap_solve(&target);
            let scaled = svec(&(&sc.w_half * x * &sc.w_half));
            for r in 0..scaled.len() {
                rc[ws.offsets[bi] + r] = scaled[r];
            }
        }
        let (dy, du, ds, dz) = match solve_dir(&rc) {
            Some(v) => v,
            None => {
                return Ok(finish(
                    SolveStatus::Numerical,
                    iter,
                    &ws,
                    &best,
                    &u,
                    &s,
                    &y,
                    settings,
                ))
            }
        };

        // one common step keeps primal feasibility, dual feasibility, and
        // complementarity contracting at the same rate
        let mut alpha = 1.0_f64;
        for (bi, sc) in scalings.iter().enumerate() {
            let ds_m = ws.block_mat(&ds, bi);
            let dz_m = ws.block_mat(&dz, bi);
            let ds_scaled = &sc.w_half_inv * ds_m * &sc.w_half_inv;
            let dz_scaled = &sc.w_half * dz_m * &sc.w_half;
            alpha = alpha.min(0.99 * max_step(sc, &ds_scaled));
            alpha = alpha.min(0.99 * max_step(sc, &dz_scaled));
        }
        let alpha = alpha.min(1.0);

        if !du.iter().chain(ds.iter()).chain(dy.iter()).chain(dz.iter()).all(|v| v.is_finite()) {
            return Ok(finish(
                SolveStatus::Numerical,
                iter,
                &ws,
                &best,
                &u,
                &s,
                &y,
                settings,
            ));
        }
        // backtrack if rounding pushed an iterate across the cone boundary
        let mut alpha = alpha;
        for _ in 0..40 {
            let s_try = &s + &ds * alpha;
            let z_try = &z + &dz * alpha;
            let mut inside = true;
            for bi in 0..ws.blocks.len() {
                if SymMatrix::symmetrize(ws.block_mat(&s_try, bi)).min_eigenvalue() <= 0.0
                    || SymMatrix::symmetrize(ws.block_mat(&z_try, bi)).min_eigenvalue() <= 0.0
                {
                    inside = false;
                    break;
                }
            }
            if inside {
                break;
            }
            alpha *= 0.8;
        }
        last_alpha = alpha;
        u += &du * alpha;
        s += &ds * alpha;
        y += &dy * alpha;
        z += &dz * alpha;

        if !s.iter().all(|v| v.is_finite()) || !z.iter().all(|v| v.is_finite()) {
            return Ok(finish(
                SolveStatus::Numerical,
                iter,
                &ws,
                &best,
                &u,
                &s,
                &y,
                settings,
            ));
        }
    }

    Ok(finish(
        SolveStatus::MaxIterations,
        settings.max_iterations,
        &ws,
        &best,
        &u,
        &s,
        &y,
        settings,
    ))
}
