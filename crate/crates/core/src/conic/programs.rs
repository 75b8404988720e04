//! The convex-program formulations of the data-driven LQR problem, plus
//! the model-based primal/dual pair used as a strong-duality smoke test.
//!
//! Naming follows the benchmark method ids: cl1/cl2/cl3 are built on the
//! closed-loop data matrices, irl1/irl2 on the quadratic-integral data.

use super::{
    solve, ConicProblem, ConicSolution, LinExpr, MatBlock, MatVar, ProblemBuilder, SolverSettings,
    SymExprMat, SymVar,
};
use crate::cl::ClParam;
use crate::error::{Error, Result};
use crate::irl::IrlParam;
use crate::linalg::{Matrix, SymMatrix};
use crate::sim::LinearSystem;

/// `tr(S·G)` for a symmetric variable against a symmetric constant.
fn trace_sym(var: &SymVar, weight: &Matrix) -> LinExpr {
    let mut e = LinExpr::default();
    for j in 0..var.dim {
        for i in j..var.dim {
            let coef = if i == j {
                weight[(i, i)]
            } else {
                weight[(i, j)] + weight[(j, i)]
            };
            e.add_term(var.id(i, j), coef);
        }
    }
    e
}

/// `tr(MᵀG) = Σ M_ij G_ij` for a general variable matrix.
fn trace_mat(var: &MatVar, weight: &Matrix) -> LinExpr {
    let mut e = LinExpr::default();
    for j in 0..var.cols {
        for i in 0..var.rows {
            e.add_term(var.id(i, j), weight[(i, j)]);
        }
    }
    e
}

/// Adds the PSD requirement `sym_var − shift·I ⪰ 0`.
fn require_shifted_psd(b: &mut ProblemBuilder, var: &SymVar, shift: f64) {
    let mut m = SymExprMat::zeros(var.dim);
    for i in 0..var.dim {
        for j in 0..=i {
            m.entry_mut(i, j).add(&var.expr(i, j));
            if i == j {
                m.entry_mut(i, j).constant -= shift;
            }
        }
    }
    b.require_psd(m);
}

/// `L·Mᵀ·Rᵀ` placed at `(row, col)` (lower-triangle anchor).
fn add_product_t(
    expr: &mut SymExprMat,
    row: usize,
    col: usize,
    left: &Matrix,
    mat: &MatVar,
    right: &Matrix,
    coef: f64,
) {
    for i in 0..left.nrows() {
        for j in 0..right.nrows() {
            let mut e = LinExpr::default();
            for t in 0..left.ncols() {
                for c in 0..right.ncols() {
                    let w = coef * left[(i, t)] * right[(j, c)];
                    if w != 0.0 {
                        e.add_term(mat.id(c, t), w);
                    }
                }
            }
            expr.entry_mut(row + i, col + j).add(&e);
        }
    }
}

fn guarded_inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    let sym = SymMatrix::symmetrize(m.clone());
    let eig = sym.eigenvalues();
    let max = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min <= 0.0 || max / min > 1e12 {
        return Err(Error::DegenerateOptimizer(format!(
            "{what} has condition number {:.3e}",
            max / min
        )));
    }
    Ok(sym.try_inverse()?.into_matrix())
}

// ---------------------------------------------------------------------------
// CL 1: minimize tr(QY) + tr(S) over the closed-loop change of variables
// Z = G·Y with a Lyapunov stability LMI.
// ---------------------------------------------------------------------------

pub struct Cl1Solution {
    pub gain: Matrix,
    pub y: Matrix,
    pub z: Matrix,
    pub slack: Matrix,
    pub raw: ConicSolution,
}

pub fn build_cl1(param: &ClParam) -> (ConicProblem, MatVar, SymVar, SymVar) {
    let data = param.data();
    let (n, m, t) = (data.state_dim(), data.input_dim(), data.samples());
    let weights = param.weights();
    let r_sqrt = weights
        .r
        .sqrt_psd(1e-12)
        .expect("input weight is PD")
        .into_matrix();
    let q = weights.q.as_matrix().clone();
    let shift = SolverSettings::default().psd_shift;

    let mut b = ProblemBuilder::new();
    let z = b.mat_var(t, n);
    let y = b.sym_var(n);
    let s = b.sym_var(m);

    let tr_qy = trace_sym(&y, &q);
    b.minimize_term(&tr_qy, 1.0);
    let tr_s = trace_sym(&s, &Matrix::identity(m, m));
    b.minimize_term(&tr_s, 1.0);

    // [S, R½ŨZ; (R½ŨZ)ᵀ, Y] ⪰ 0
    let mut lmi = SymExprMat::zeros(m + n);
    for i in 0..m {
        for j in 0..=i {
            lmi.entry_mut(i, j).add(&s.expr(i, j));
        }
    }
    let r_sqrt_u = &r_sqrt * &data.input_integrals;
    add_product_t(&mut lmi, m, 0, &Matrix::identity(n, n), &z, &r_sqrt_u, 1.0);
    for i in 0..n {
        for j in 0..=i {
            lmi.entry_mut(m + i, m + j).add(&y.expr(i, j));
        }
    }
    b.require_psd(lmi);

    // −(increments·Z + Zᵀ·incrementsᵀ + I) ⪰ 0
    let mut stab = SymExprMat::zeros(n);
    stab.add_product(
        0,
        0,
        &data.increments,
        &MatBlock::General(z.clone()),
        &Matrix::identity(n, n),
        -1.0,
        true,
    );
    stab.add_constant(0, 0, &(-Matrix::identity(n, n)));
    b.require_psd(stab);

    // Y ⪰ shift·I (it is inverted afterwards)
    require_shifted_psd(&mut b, &y, shift);

    // Y = state_integrals·Z, all n² entries (also forces symmetry)
    for i in 0..n {
        for j in 0..n {
            let mut e = y.expr(i, j);
            for tt in 0..t {
                e.add_term(z.id(tt, j), -data.state_integrals[(i, tt)]);
            }
            b.require_zero(e);
        }
    }

    (b.build(), z, y, s)
}

pub fn solve_cl1(param: &ClParam, settings: &SolverSettings) -> Result<Cl1Solution> {
    let (prob, z, y, s) = build_cl1(param);
    let raw = solve(&prob, settings)?;
    raw.require_usable(settings)?;
    let y_val = y.value(&raw.primal);
    let z_val = z.value(&raw.primal);
    let s_val = s.value(&raw.primal);
    let y_inv = guarded_inverse(&y_val, "closed-loop Gramian optimizer")?;
    let gain = -(&param.data().input_integrals * &z_val * &y_inv);
    Ok(Cl1Solution {
        gain,
        y: y_val,
        z: z_val,
        slack: s_val,
        raw,
    })
}

// ---------------------------------------------------------------------------
// CL 2: minimize −tr(S) with the inverse-value change of variables
// S = P⁻¹, Z = G·P⁻¹, plus the stationarity equality on ker(states).
// ---------------------------------------------------------------------------

pub struct Cl2Solution {
    pub gain: Matrix,
    pub value: SymMatrix,
    pub raw: ConicSolution,
}

pub fn build_cl2(param: &ClParam) -> (ConicProblem, MatVar, SymVar) {
    let data = param.data();
    let (n, m, t) = (data.state_dim(), data.input_dim(), data.samples());
    let weights = param.weights();
    let q_sqrt = weights
        .q
        .sqrt_psd(1e-12)
        .expect("state weight is PSD")
        .into_matrix();
    let r_inv = weights.r_inv();
    let shift = SolverSettings::default().psd_shift;

    let mut b = ProblemBuilder::new();
    let z = b.mat_var(t, n);
    let s = b.sym_var(n);

    let tr_s = trace_sym(&s, &Matrix::identity(n, n));
    b.minimize_term(&tr_s, -1.0);

    // −[X̄Z + ZᵀX̄ᵀ, ZᵀŨᵀ, SQ½; ŨZ, −R⁻¹, 0; Q½S, 0, −I] ⪰ 0
    let dim = 2 * n + m;
    let mut lmi = SymExprMat::zeros(dim);
    lmi.add_product(
        0,
        0,
        &data.increments,
        &MatBlock::General(z.clone()),
        &Matrix::identity(n, n),
        -1.0,
        true,
    );
    lmi.add_product(
        n,
        0,
        &data.input_integrals,
        &MatBlock::General(z.clone()),
        &Matrix::identity(n, n),
        -1.0,
        false,
    );
    lmi.add_product(
        n + m,
        0,
        &q_sqrt,
        &MatBlock::Symmetric(s.clone()),
        &Matrix::identity(n, n),
        -1.0,
        false,
    );
    lmi.add_constant(n, n, &r_inv);
    lmi.add_constant(n + m, n + m, &Matrix::identity(n, n));
    b.require_psd(lmi);

    // S ⪰ shift·I (it is inverted afterwards)
    require_shifted_psd(&mut b, &s, shift);

    // kernel-basisᵀ·(ŨᵀRŨ·Z + X̄ᵀ) = 0
    let m_quad = data.input_integrals.transpose()
        * weights.r.as_matrix()
        * &data.input_integrals;
    let lhs = data.null_basis.transpose() * m_quad;
    let rhs = data.null_basis.transpose() * data.increments.transpose();
    for i in 0..t - n {
        for j in 0..n {
            let mut e = LinExpr::constant(rhs[(i, j)]);
            for tt in 0..t {
                e.add_term(z.id(tt, j), lhs[(i, tt)]);
            }
            b.require_zero(e);
        }
    }

    // S = state_integrals·Z
    for i in 0..n {
        for j in 0..n {
            let mut e = s.expr(i, j);
            for tt in 0..t {
                e.add_term(z.id(tt, j), -data.state_integrals[(i, tt)]);
            }
            b.require_zero(e);
        }
    }

    (b.build(), z, s)
}

pub fn solve_cl2(param: &ClParam, settings: &SolverSettings) -> Result<Cl2Solution> {
    let (prob, z, s) = build_cl2(param);
    let raw = solve(&prob, settings)?;
    raw.require_usable(settings)?;
    let s_val = s.value(&raw.primal);
    let z_val = z.value(&raw.primal);
    let s_inv = guarded_inverse(&s_val, "inverse-value optimizer")?;
    let gain = -(&param.data().input_integrals * &z_val * &s_inv);
    Ok(Cl2Solution {
        gain,
        value: SymMatrix::symmetrize(s_inv),
        raw,
    })
}

// ---------------------------------------------------------------------------
// CL 3: maximize tr(P) under the T×T data quadratic-form LMI.
// ---------------------------------------------------------------------------

pub struct Cl3Solution {
    pub value: SymMatrix,
    pub gain: Matrix,
    pub raw: ConicSolution,
}

pub fn build_cl3(param: &ClParam) -> (ConicProblem, SymVar) {
    let data = param.data();
    let (n, m, t) = (data.state_dim(), data.input_dim(), data.samples());
    let weights = param.weights();

    let mut b = ProblemBuilder::new();
    let p = b.sym_var(n);
    let tr_p = trace_sym(&p, &Matrix::identity(n, n));
    b.minimize_term(&tr_p, -1.0);

    // The T×T quadratic form statesᵀP·increments + incrementsᵀP·states
    // + ŨᵀRŨ + X̃ᵀQX̃ has rank at most n+m for every P: its range always
    // lies inside im([states; inputs]ᵀ). Restricting to an orthonormal
    // basis V of that face is an exact reformulation (F ⪰ 0 ⇔ VᵀFV ⪰ 0)
    // and gives the cone an interior the path-following solver needs.
    let mut stack_t = Matrix::zeros(t, n + m);
    stack_t
        .view_mut((0, 0), (t, n))
        .copy_from(&data.state_integrals.transpose());
    stack_t
        .view_mut((0, n), (t, m))
        .copy_from(&data.input_integrals.transpose());
    let face = orthonormal_range(&stack_t);
    let r = face.ncols();

    let constant = data.input_integrals.transpose()
        * weights.r.as_matrix()
        * &data.input_integrals
        + data.state_integrals.transpose() * weights.q.as_matrix() * &data.state_integrals;
    let mut lmi = SymExprMat::zeros(r);
    lmi.add_product(
        0,
        0,
        &(face.transpose() * data.state_integrals.transpose()),
        &MatBlock::Symmetric(p.clone()),
        &(face.transpose() * data.increments.transpose()),
        1.0,
        true,
    );
    lmi.add_constant(0, 0, &(face.transpose() * constant * &face));
    b.require_psd(lmi);

    require_shifted_psd(&mut b, &p, 0.0);

    (b.build(), p)
}

/// Orthonormal basis of the column space.
fn orthonormal_range(m: &Matrix) -> Matrix {
    let rank = crate::linalg::rank(m, crate::linalg::RANK_TOL);
    let proj = m * crate::linalg::pinv_default(m);
    let (vals, vecs) = crate::linalg::jacobi_eigen(&proj);
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]));
    let mut basis = Matrix::zeros(m.nrows(), rank);
    for (c, &i) in idx.iter().take(rank).enumerate() {
        basis.set_column(c, &vecs.column(i));
    }
    basis
}

pub fn solve_cl3(param: &ClParam, settings: &SolverSettings) -> Result<Cl3Solution> {
    let (prob, p) = build_cl3(param);
    let raw = solve(&prob, settings)?;
    raw.require_usable(settings)?;
    let p_val = SymMatrix::symmetrize(p.value(&raw.primal));
    let gain = param.care_residual_compressed(&p_val).gain;
    Ok(Cl3Solution {
        value: p_val,
        gain,
        raw,
    })
}

// ---------------------------------------------------------------------------
// IRL 1: maximize tr(P) under the per-window Riccati functionals with the
// Schur-relaxed quadratic term.
// ---------------------------------------------------------------------------

pub struct Irl1Solution {
    pub gain: Matrix,
    pub value: SymMatrix,
    pub w: Matrix,
    /// Exactness slack `Z − W R⁻¹ Wᵀ` (zero at an exact relaxation).
    pub slack: Matrix,
    pub raw: ConicSolution,
}

pub fn build_irl1(param: &IrlParam) -> (ConicProblem, SymVar, MatVar, SymVar) {
    let data = param.data();
    let (n, m, t) = (data.state_dim(), data.input_dim(), data.samples());
    let weights = param.weights();

    let mut b = ProblemBuilder::new();
    let p = b.sym_var(n);
    let w = b.mat_var(n, m);
    let z = b.sym_var(n);

    let tr_p = trace_sym(&p, &Matrix::identity(n, n));
    b.minimize_term(&tr_p, -1.0);

    // per window: tr(P·r_Δx) + tr(Q·r_xx) − tr(Z·r_xx) − 2tr(Wᵀ·r_xu) = 0
    for i in 0..t {
        let r_dx = data.outer_increment(i);
        let r_xx = data.state_moment(i);
        let r_xu = data.cross_moment(i);
        let mut e = trace_sym(&p, &SymMatrix::symmetrize(r_dx).into_matrix());
        e.constant += (weights.q.as_matrix() * &r_xx).trace();
        let mut z_term = trace_sym(&z, &r_xx);
        z_term.scale(-1.0);
        e.add(&z_term);
        let mut w_term = trace_mat(&w, &r_xu);
        w_term.scale(-2.0);
        e.add(&w_term);
        b.require_zero(e);
    }

    // [Z, W; Wᵀ, R] ⪰ 0
    let mut lmi = SymExprMat::zeros(n + m);
    for i in 0..n {
        for j in 0..=i {
            lmi.entry_mut(i, j).add(&z.expr(i, j));
        }
    }
    for a in 0..m {
        for bcol in 0..n {
            lmi.entry_mut(n + a, bcol).add(&w.expr(bcol, a));
        }
    }
    lmi.add_constant(n, n, weights.r.as_matrix());
    b.require_psd(lmi);

    require_shifted_psd(&mut b, &p, 0.0);

    (b.build(), p, w, z)
}

pub fn solve_irl1(param: &IrlParam, settings: &SolverSettings) -> Result<Irl1Solution> {
    let (prob, p, w, z) = build_irl1(param);
    let raw = solve(&prob, settings)?;
    raw.require_usable(settings)?;
    let w_val = w.value(&raw.primal);
    let z_val = z.value(&raw.primal);
    let p_val = SymMatrix::symmetrize(p.value(&raw.primal));
    let r_inv = param.weights().r_inv();
    let gain = &r_inv * w_val.transpose();
    let slack = &z_val - &w_val * &r_inv * w_val.transpose();
    Ok(Irl1Solution {
        gain,
        value: p_val,
        w: w_val,
        slack,
        raw,
    })
}

// ---------------------------------------------------------------------------
// IRL 2: maximize tr(P) under the value-split regression equality and the
// Schur form of the Riccati inequality.
// ---------------------------------------------------------------------------

pub struct Irl2Solution {
    pub gain: Matrix,
    pub value: SymMatrix,
    pub lyapunov_term: SymMatrix,
    pub raw: ConicSolution,
}

pub fn build_irl2(param: &IrlParam) -> (ConicProblem, SymVar, SymVar, MatVar) {
    let data = param.data();
    let (n, m, t) = (data.state_dim(), data.input_dim(), data.samples());
    let weights = param.weights();
    let r_inv = weights.r_inv();
    let shift = SolverSettings::default().psd_shift;

    let mut b = ProblemBuilder::new();
    let p = b.sym_var(n);
    let h = b.sym_var(n);
    let kp = b.mat_var(m, n);

    let tr_p = trace_sym(&p, &Matrix::identity(n, n));
    b.minimize_term(&tr_p, -1.0);

    // outer_incrementsᵀ rows: vec(r_Δx)ᵀ·vec(P) = vec(r_xx)ᵀ·vec(H)
    //                        + 2·vec(r_xuᵀ)ᵀ·(I⊗R)·vec(K⁺) per window
    let eye_r = crate::linalg::kron(&Matrix::identity(n, n), weights.r.as_matrix());
    let gain_block = &data.input_state_moments * eye_r * 2.0;
    for i in 0..t {
        let r_dx = SymMatrix::symmetrize(data.outer_increment(i)).into_matrix();
        let r_xx = data.state_moment(i);
        let mut e = trace_sym(&p, &r_dx);
        let mut h_term = trace_sym(&h, &r_xx);
        h_term.scale(-1.0);
        e.add(&h_term);
        for c in 0..m * n {
            // vec(K⁺) is column-major over the m×n ids
            e.add_term(kp.ids[c], -gain_block[(i, c)]);
        }
        b.require_zero(e);
    }

    // [H + Q, K⁺ᵀ; K⁺, R⁻¹] ⪰ 0
    let mut lmi = SymExprMat::zeros(n + m);
    for i in 0..n {
        for j in 0..=i {
            lmi.entry_mut(i, j).add(&h.expr(i, j));
        }
    }
    lmi.add_constant(0, 0, weights.q.as_matrix());
    for a in 0..m {
        for bcol in 0..n {
            lmi.entry_mut(n + a, bcol).add(&kp.expr(a, bcol));
        }
    }
    lmi.add_constant(n, n, &r_inv);
    b.require_psd(lmi);

    // strict positivity of P relaxed by the configured shift
    require_shifted_psd(&mut b, &p, shift);

    (b.build(), p, h, kp)
}

pub fn solve_irl2(param: &IrlParam, settings: &SolverSettings) -> Result<Irl2Solution> {
    let (prob, p, h, kp) = build_irl2(param);
    let raw = solve(&prob, settings)?;
    raw.require_usable(settings)?;
    Ok(Irl2Solution {
        gain: kp.value(&raw.primal),
        value: SymMatrix::symmetrize(p.value(&raw.primal)),
        lyapunov_term: SymMatrix::symmetrize(h.value(&raw.primal)),
        raw,
    })
}

// ---------------------------------------------------------------------------
// Model-based primal/dual pair (strong-duality smoke test).
// ---------------------------------------------------------------------------

/// `max tr(P)` s.t. `[AᵀP+PA+Q, PB; BᵀP, R] ⪰ 0, P ⪰ 0` — the optimal
/// value is `tr(P*)`.
pub fn build_model_primal(sys: &LinearSystem) -> (ConicProblem, SymVar) {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut b = ProblemBuilder::new();
    let p = b.sym_var(n);
    let tr_p = trace_sym(&p, &Matrix::identity(n, n));
    b.minimize_term(&tr_p, -1.0);

    let mut lmi = SymExprMat::zeros(n + m);
    lmi.add_product(
        0,
        0,
        &sys.a().transpose(),
        &MatBlock::Symmetric(p.clone()),
        &Matrix::identity(n, n),
        1.0,
        true,
    );
    lmi.add_constant(0, 0, sys.q().as_matrix());
    lmi.add_product(
        n,
        0,
        &sys.b().transpose(),
        &MatBlock::Symmetric(p.clone()),
        &Matrix::identity(n, n),
        1.0,
        false,
    );
    lmi.add_constant(n, n, sys.r().as_matrix());
    b.require_psd(lmi);
    require_shifted_psd(&mut b, &p, 0.0);
    (b.build(), p)
}

/// `min tr(QY) + tr(S)` over the stabilizing-covariance relaxation — the
/// optimal value equals `tr(P*)` by strong duality.
pub fn build_model_dual(sys: &LinearSystem) -> (ConicProblem, SymVar, MatVar, SymVar) {
    let n = sys.state_dim();
    let m = sys.input_dim();
    let r_sqrt = sys.r().sqrt_psd(1e-12).expect("R is PD").into_matrix();
    let mut b = ProblemBuilder::new();
    let y = b.sym_var(n);
    let zt = b.mat_var(m, n);
    let s = b.sym_var(m);

    let tr_qy = trace_sym(&y, sys.q().as_matrix());
    b.minimize_term(&tr_qy, 1.0);
    let tr_s = trace_sym(&s, &Matrix::identity(m, m));
    b.minimize_term(&tr_s, 1.0);

    // [S, R½Z̃; Z̃ᵀR½, Y] ⪰ 0
    let mut lmi = SymExprMat::zeros(m + n);
    for i in 0..m {
        for j in 0..=i {
            lmi.entry_mut(i, j).add(&s.expr(i, j));
        }
    }
    add_product_t(&mut lmi, m, 0, &Matrix::identity(n, n), &zt, &r_sqrt, 1.0);
    for i in 0..n {
        for j in 0..=i {
            lmi.entry_mut(m + i, m + j).add(&y.expr(i, j));
        }
    }
    b.require_psd(lmi);

    // −(AY − BZ̃ + (AY − BZ̃)ᵀ + I) ⪰ 0
    let mut stab = SymExprMat::zeros(n);
    stab.add_product(
        0,
        0,
        sys.a(),
        &MatBlock::Symmetric(y.clone()),
        &Matrix::identity(n, n),
        -1.0,
        true,
    );
    stab.add_product(
        0,
        0,
        sys.b(),
        &MatBlock::General(zt.clone()),
        &Matrix::identity(n, n),
        1.0,
        true,
    );
    stab.add_constant(0, 0, &(-Matrix::identity(n, n)));
    b.require_psd(stab);

    require_shifted_psd(&mut b, &y, 0.0);
    (b.build(), y, zt, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::care_solve;
    use crate::sim::{collect_cl_data, collect_irl_data, simulate_zoh, ExcitationConfig, SampleSchedule};
    use crate::testutil::{benchmark_data, scalar_system};

    fn scalar_params() -> (crate::sim::LinearSystem, ClParam, IrlParam) {
        let sys = scalar_system(1.0, 1.0, 1.0, 1.0);
        let schedule = SampleSchedule::uniform(6, 0.1, 10);
        let exc = ExcitationConfig::new(0.05, 1.0, 7);
        let traj = simulate_zoh(&sys, &exc, schedule.horizon(), 10).unwrap();
        let cl = collect_cl_data(&traj, &schedule).unwrap();
        let irl = collect_irl_data(&traj, &schedule).unwrap();
        let w = sys.weights();
        (
            sys.clone(),
            ClParam::new(cl, w.clone()).unwrap(),
            IrlParam::new(irl, w).unwrap(),
        )
    }

    fn benchmark_params(seed: u64) -> (crate::sim::LinearSystem, ClParam, IrlParam) {
        let (sys, cl, irl) = benchmark_data(seed);
        let w = sys.weights();
        (
            sys.clone(),
            ClParam::new(cl, w.clone()).unwrap(),
            IrlParam::new(irl, w).unwrap(),
        )
    }

    #[test]
    fn scalar_fixture_all_programs() {
        let (_, cl, irl) = scalar_params();
        let settings = SolverSettings::default();
        let k_star = 1.0 + 2.0_f64.sqrt();

        let s1 = solve_cl1(&cl, &settings).unwrap();
        assert!((s1.gain[(0, 0)] - k_star).abs() < 1e-4, "cl1: {}", s1.gain[(0, 0)]);
        let s2 = solve_cl2(&cl, &settings).unwrap();
        assert!((s2.gain[(0, 0)] - k_star).abs() < 1e-4, "cl2: {}", s2.gain[(0, 0)]);
        assert!((s2.value[(0, 0)] - k_star).abs() < 1e-4);
        let s3 = solve_cl3(&cl, &settings).unwrap();
        assert!((s3.value[(0, 0)] - k_star).abs() < 1e-4, "cl3: {}", s3.value[(0, 0)]);
        assert!((s3.gain[(0, 0)] - k_star).abs() < 1e-4);
        let s4 = solve_irl1(&irl, &settings).unwrap();
        assert!((s4.gain[(0, 0)] - k_star).abs() < 1e-4, "irl1: {}", s4.gain[(0, 0)]);
        assert!(s4.slack.norm() < 1e-6);
        let s5 = solve_irl2(&irl, &settings).unwrap();
        assert!((s5.gain[(0, 0)] - k_star).abs() < 1e-4, "irl2: {}", s5.gain[(0, 0)]);
        assert!((s5.value[(0, 0)] - k_star).abs() < 1e-4);
    }

    #[test]
    fn benchmark_system_all_programs() {
        let (sys, cl, irl) = benchmark_params(3);
        let oracle = care_solve(&sys).unwrap();
        let settings = SolverSettings::default();
        let scale = oracle.gain.norm().max(1.0);

        let s1 = solve_cl1(&cl, &settings).unwrap();
        assert!(
            (&s1.gain - &oracle.gain).norm() < 1e-2 * scale,
            "cl1 err {:.3e}",
            (&s1.gain - &oracle.gain).norm()
        );
        // recovered parameterization stays feasible and stabilizing
        let y_inv = guarded_inverse(&s1.y, "Y").unwrap();
        let g_star = &s1.z * &y_inv;
        let n = cl.data().state_dim();
        assert!(
            (&cl.data().state_integrals * &g_star - Matrix::identity(n, n)).norm() < 1e-5
        );
        assert!(crate::linalg::spectral(&(&cl.data().increments * &g_star))
            .unwrap()
            .hurwitz);

        let s2 = solve_cl2(&cl, &settings).unwrap();
        assert!(
            (&s2.gain - &oracle.gain).norm() < 1e-4 * scale,
            "cl2 err {:.3e}",
            (&s2.gain - &oracle.gain).norm()
        );
        assert!((s2.value.as_matrix() - oracle.value.as_matrix()).norm()
            < 1e-3 * oracle.value.norm());

        let s3 = solve_cl3(&cl, &settings).unwrap();
        assert!(
            (s3.value.as_matrix() - oracle.value.as_matrix()).norm()
                < 1e-3 * oracle.value.norm().max(1.0),
            "cl3 err {:.3e}",
            (s3.value.as_matrix() - oracle.value.as_matrix()).norm()
        );
        assert!((&s3.gain - &oracle.gain).norm() < 1e-3 * scale);

        let s4 = solve_irl1(&irl, &settings).unwrap();
        assert!(
            (&s4.gain - &oracle.gain).norm() < 1e-4 * scale,
            "irl1 err {:.3e}",
            (&s4.gain - &oracle.gain).norm()
        );
        assert!(s4.slack.norm() < 1e-6, "irl1 slack {:.3e}", s4.slack.norm());
        // every window functional saturates at the optimizer
        for i in 0..irl.data().samples() {
            let f = irl.care_functional(i, &s4.value, &s4.w);
            assert!(f.abs() < 1e-6, "window {i}: {f:.3e}");
        }

        let s5 = solve_irl2(&irl, &settings).unwrap();
        assert!(
            (&s5.gain - &oracle.gain).norm() < 1e-4 * scale,
            "irl2 err {:.3e}",
            (&s5.gain - &oracle.gain).norm()
        );
        assert!(
            (s5.value.trace() - oracle.value.trace()).abs() < 1e-4 * oracle.value.trace(),
        );
        // Riccati saturation: H + Q − K⁺ᵀRK⁺ ⪰ ~0 and ≈ 0
        let sat = s5.lyapunov_term.as_matrix() + cl.weights().q.as_matrix()
            - s5.gain.transpose() * cl.weights().r.as_matrix() * &s5.gain;
        let sat = SymMatrix::symmetrize(sat);
        assert!(sat.min_eigenvalue() > -1e-7);
        assert!(sat.norm() < 1e-4 * oracle.value.norm().max(1.0));
    }

    #[test]
    fn model_pair_strong_duality() {
        for seed in [1u64, 5, 9] {
            let (sys, _, _) = benchmark_params(seed);
            let oracle = care_solve(&sys).unwrap();
            let settings = SolverSettings::default();

            let (primal, p) = build_model_primal(&sys);
            let ps = solve(&primal, &settings).unwrap();
            ps.require_optimal().unwrap();
            let primal_value = p.value(&ps.primal).trace();

            let (dual, y, _, s) = build_model_dual(&sys);
            let ds = solve(&dual, &settings).unwrap();
            ds.require_optimal().unwrap();
            let dual_value = (sys.q().as_matrix() * y.value(&ds.primal)).trace()
                + s.value(&ds.primal).trace();

            let target = oracle.value.trace();
            assert!(
                (primal_value - target).abs() < 1e-6 * target.max(1.0),
                "primal {primal_value} vs {target}"
            );
            assert!(
                (dual_value - target).abs() < 1e-6 * target.max(1.0),
                "dual {dual_value} vs {target}"
            );
            assert!((primal_value - dual_value).abs() < 1e-6 * target.max(1.0));
        }
    }

    #[test]
    fn problem_dump_is_readable() {
        let (_, cl, _) = scalar_params();
        let (prob, _, _, _) = build_cl1(&cl);
        let dump = prob.dump();
        assert!(dump.contains("minimize"));
        assert!(dump.contains("psd block"));
        prob.validate().unwrap();
    }
}
