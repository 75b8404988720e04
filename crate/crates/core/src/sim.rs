//! Plant simulation and data collection.
//!
//! The continuous-time plant is propagated exactly under piecewise-constant
//! excitation through an augmented matrix exponential that also carries the
//! running integrals of state and input. From one trajectory the module
//! assembles the integrated data matrices of the closed-loop
//! parameterization and the quadratic-integral data of the integral-RL
//! parameterization, and validates the rank conditions both depend on.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    self, commutation_matrix, null_basis, nullspace_projector, pinv_default, rank, spectral,
    Matrix, SymMatrix, Vector, RANK_TOL,
};

/// Ground-truth plant (A, B) plus cost weights (Q, R). Data-driven solvers
/// never see A and B except through simulated trajectories.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
    q: SymMatrix,
    r: SymMatrix,
}

/// Cost weights shared by every data-driven method.
#[derive(Debug, Clone)]
pub struct Weights {
    pub q: SymMatrix,
    pub r: SymMatrix,
}

impl Weights {
    pub fn new(q: SymMatrix, r: SymMatrix) -> Result<Self> {
        if !q.is_psd(1e-10 * q.norm().max(1.0)) {
            return Err(Error::NotPsd {
                min_eigenvalue: q.min_eigenvalue(),
            });
        }
        if r.min_eigenvalue() <= 0.0 {
            return Err(Error::InvalidSystem(
                "input weight must be positive definite".into(),
            ));
        }
        Ok(Weights { q, r })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Weights {
            q: SymMatrix::identity(n),
            r: SymMatrix::identity(m),
        }
    }

    pub fn r_inv(&self) -> Matrix {
        self.r
            .try_inverse()
            .expect("input weight is positive definite by construction")
            .into_matrix()
    }
}

impl LinearSystem {
    /// Validates positivity of the weights and the stabilizability /
    /// detectability rank tests at every closed-right-half-plane eigenvalue.
    pub fn new(a: Matrix, b: Matrix, q: SymMatrix, r: SymMatrix) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || q.dim() != n || r.dim() != b.ncols() {
            return Err(Error::Shape("system matrices have inconsistent sizes".into()));
        }
        let weights = Weights::new(q, r)?;
        let sys = LinearSystem {
            a,
            b,
            q: weights.q,
            r: weights.r,
        };
        sys.check_stabilizable()?;
        sys.check_detectable()?;
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn q(&self) -> &SymMatrix {
        &self.q
    }

    pub fn r(&self) -> &SymMatrix {
        &self.r
    }

    pub fn weights(&self) -> Weights {
        Weights {
            q: self.q.clone(),
            r: self.r.clone(),
        }
    }

    /// `A − BK`.
    pub fn closed_loop(&self, gain: &Matrix) -> Matrix {
        &self.a - &self.b * gain
    }

    pub fn r_inv(&self) -> Matrix {
        self.r
            .try_inverse()
            .expect("input weight is positive definite by construction")
            .into_matrix()
    }

    pub fn is_stabilizing(&self, gain: &Matrix) -> Result<bool> {
        Ok(spectral(&self.closed_loop(gain))?.hurwitz)
    }

    fn check_stabilizable(&self) -> Result<()> {
        let n = self.state_dim();
        for lambda in spectral(&self.a)?.eigenvalues {
            if lambda.re < -1e-9 {
                continue;
            }
            let m = complex_pencil_rank(&(lambda.re * Matrix::identity(n, n) - &self.a),
                                        &(lambda.im * Matrix::identity(n, n)),
                                        Some(&self.b));
            if m < n {
                return Err(Error::InvalidSystem(format!(
                    "not stabilizable at eigenvalue {:.4}+{:.4}i",
                    lambda.re, lambda.im
                )));
            }
        }
        Ok(())
    }

    fn check_detectable(&self) -> Result<()> {
        let n = self.state_dim();
        let c = self.q.sqrt_psd(1e-10 * self.q.norm().max(1.0))?;
        // (A, √Q) detectable ⇔ (Aᵀ, √Qᵀ) stabilizable
        for lambda in spectral(&self.a)?.eigenvalues {
            if lambda.re < -1e-9 {
                continue;
            }
            let m = complex_pencil_rank(
                &(lambda.re * Matrix::identity(n, n) - self.a.transpose()),
                &(lambda.im * Matrix::identity(n, n)),
                Some(c.as_matrix()),
            );
            if m < n {
                return Err(Error::InvalidSystem(format!(
                    "not detectable at eigenvalue {:.4}+{:.4}i",
                    lambda.re, lambda.im
                )));
            }
        }
        Ok(())
    }
}

/// Complex rank of `[Re + i·Im, Extra]` computed through the real embedding
/// `[[Re, Extra, -Im, 0], [Im, 0, Re, Extra]]` (rank halves).
fn complex_pencil_rank(re: &Matrix, im: &Matrix, extra: Option<&Matrix>) -> usize {
    let n = re.nrows();
    let e_cols = extra.map_or(0, |e| e.ncols());
    let cols = n + e_cols;
    let mut big = Matrix::zeros(2 * n, 2 * cols);
    big.view_mut((0, 0), (n, n)).copy_from(re);
    big.view_mut((n, cols), (n, n)).copy_from(re);
    big.view_mut((0, cols), (n, n)).copy_from(&(-im));
    big.view_mut((n, 0), (n, n)).copy_from(im);
    if let Some(e) = extra {
        big.view_mut((0, n), (n, e_cols)).copy_from(e);
        big.view_mut((n, cols + n), (n, e_cols)).copy_from(e);
    }
    rank(&big, RANK_TOL) / 2
}

/// Piecewise-constant Gaussian excitation.
#[derive(Debug, Clone)]
pub struct ExcitationConfig {
    /// Seconds each random input value is held.
    pub hold_interval: f64,
    /// Standard deviation of the per-hold Gaussian amplitudes.
    pub amplitude_scale: f64,
    pub seed: u64,
    pub input_law: InputLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputLaw {
    #[default]
    GaussianHold,
}

impl ExcitationConfig {
    pub fn new(hold_interval: f64, amplitude_scale: f64, seed: u64) -> Self {
        ExcitationConfig {
            hold_interval,
            amplitude_scale,
            seed,
            input_law: InputLaw::GaussianHold,
        }
    }
}

/// Integration windows over which data matrices are collected.
#[derive(Debug, Clone)]
pub struct SampleSchedule {
    /// Window start times t_1..t_T.
    pub window_starts: Vec<f64>,
    /// Window length δ.
    pub window_length: f64,
    /// Fine-grid substeps per excitation hold (even, for Simpson).
    pub substeps_per_hold: usize,
}

impl SampleSchedule {
    /// Consecutive windows `[0, δ], [δ, 2δ], ...`.
    pub fn uniform(samples: usize, delta: f64, substeps_per_hold: usize) -> Self {
        SampleSchedule {
            window_starts: (0..samples).map(|i| i as f64 * delta).collect(),
            window_length: delta,
            substeps_per_hold,
        }
    }

    pub fn samples(&self) -> usize {
        self.window_starts.len()
    }

    pub fn horizon(&self) -> f64 {
        self.window_starts
            .iter()
            .fold(0.0_f64, |a, t| a.max(*t))
            + self.window_length
    }
}

/// Simulated trajectory on a uniform fine grid, with exact running
/// integrals of state and input carried as augmented states. The running
/// second moment ∫ zzᵀ of the combined vector z = [x; u] is propagated
/// through the Kronecker-sum exponential, so the quadratic data windows
/// are exact as well (the input is constant between grid points).
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Uniform grid step.
    pub grid_step: f64,
    pub hold_interval: f64,
    pub substeps_per_hold: usize,
    /// States at grid points, n × (steps+1).
    pub states: Matrix,
    /// Held input active on `[t_i, t_{i+1})`, m × (steps+1).
    pub inputs: Matrix,
    /// Running ∫₀ᵗ x dτ at grid points.
    pub state_integrals: Matrix,
    /// Running ∫₀ᵗ u dτ at grid points.
    pub input_integrals: Matrix,
    /// Running ∫₀ᵗ vec([x; u][x; u]ᵀ) dτ at grid points, (n+m)² × (steps+1).
    pub second_moments: Matrix,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.grid_step
    }

    fn grid_index(&self, t: f64) -> Result<usize> {
        let idx = (t / self.grid_step).round() as usize;
        if (idx as f64 * self.grid_step - t).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "window boundary {t} is not on the simulation grid"
            )));
        }
        if idx >= self.len() {
            return Err(Error::Config(format!(
                "window boundary {t} lies outside the simulated horizon"
            )));
        }
        Ok(idx)
    }
}

/// Simulates `ẋ = Ax + Bu` under Gaussian-hold excitation from `x(0) = 0`.
pub fn simulate_zoh(
    sys: &LinearSystem,
    excitation: &ExcitationConfig,
    horizon: f64,
    substeps_per_hold: usize,
) -> Result<Trajectory> {
    simulate_zoh_from(
        sys,
        excitation,
        horizon,
        substeps_per_hold,
        &Vector::zeros(sys.state_dim()),
    )
}

/// [`simulate_zoh`] with an explicit initial state.
pub fn simulate_zoh_from(
    sys: &LinearSystem,
    excitation: &ExcitationConfig,
    horizon: f64,
    substeps_per_hold: usize,
    x0: &Vector,
) -> Result<Trajectory> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if excitation.hold_interval <= 0.0 {
        return Err(Error::Config("hold interval must be positive".into()));
    }
    if substeps_per_hold == 0 || substeps_per_hold % 2 != 0 {
        return Err(Error::Config(
            "substeps per hold must be even and positive".into(),
        ));
    }
    let holds = (horizon / excitation.hold_interval).round() as usize;
    if (holds as f64 * excitation.hold_interval - horizon).abs() > 1e-9 {
        return Err(Error::Config(
            "hold interval must divide the simulation horizon".into(),
        ));
    }
    let grid_step = excitation.hold_interval / substeps_per_hold as f64;
    let steps = holds * substeps_per_hold;

    // Augmented state [x; u; ∫x; ∫u] evolves linearly while u is held, so a
    // single matrix exponential propagates all of it exactly per substep.
    let d = 2 * n + 2 * m;
    let mut gen = Matrix::zeros(d, d);
    gen.view_mut((0, 0), (n, n)).copy_from(sys.a());
    gen.view_mut((0, n), (n, m)).copy_from(sys.b());
    gen.view_mut((n + m, 0), (n, n))
        .copy_from(&Matrix::identity(n, n));
    gen.view_mut((n + m + n, n), (m, m))
        .copy_from(&Matrix::identity(m, m));
    let prop = linalg::expm(&(gen.clone() * grid_step));
    let hold_prop = linalg::expm(&(gen * excitation.hold_interval));

    // The second moment Z = zzᵀ of z = [x; u] obeys Ż = ǍZ + ZǍᵀ between
    // input switches, so [vec(Z); vec(∫Z)] is propagated exactly through
    // the exponential of the Kronecker-sum block system.
    let k = n + m;
    let mut gen_z = Matrix::zeros(2 * k * k, 2 * k * k);
    let mut a_check = Matrix::zeros(k, k);
    a_check.view_mut((0, 0), (n, n)).copy_from(sys.a());
    a_check.view_mut((0, n), (n, m)).copy_from(sys.b());
    let eye_k = Matrix::identity(k, k);
    gen_z
        .view_mut((0, 0), (k * k, k * k))
        .copy_from(&(linalg::kron(&eye_k, &a_check) + linalg::kron(&a_check, &eye_k)));
    gen_z
        .view_mut((k * k, 0), (k * k, k * k))
        .copy_from(&Matrix::identity(k * k, k * k));
    let prop_z = linalg::expm(&(gen_z.clone() * grid_step));
    let hold_prop_z = linalg::expm(&(gen_z * excitation.hold_interval));

    let mut rng = ChaCha8Rng::seed_from_u64(excitation.seed);
    let mut states = Matrix::zeros(n, steps + 1);
    let mut inputs = Matrix::zeros(m, steps + 1);
    let mut state_integrals = Matrix::zeros(n, steps + 1);
    let mut input_integrals = Matrix::zeros(m, steps + 1);
    let mut second_moments = Matrix::zeros(k * k, steps + 1);

    let mut z = Vector::zeros(d);
    z.rows_mut(0, n).copy_from(x0);
    states.set_column(0, &z.rows(0, n).into_owned());
    let mut zz = Vector::zeros(2 * k * k);

    let mut col = 0usize;
    for _ in 0..holds {
        let u = Vector::from_fn(m, |_, _| {
            excitation.amplitude_scale * rng.sample::<f64, _>(StandardNormal)
        });
        z.rows_mut(n, m).copy_from(&u);
        inputs.set_column(col, &u);
        // rebuild the outer product at the input switch
        let mut zk = Vector::zeros(k);
        zk.rows_mut(0, n).copy_from(&z.rows(0, n).into_owned());
        zk.rows_mut(n, m).copy_from(&u);
        let outer = &zk * zk.transpose();
        zz.rows_mut(0, k * k)
            .copy_from(&linalg::vec_of(&outer));

        // substep samples inside this hold
        let z_start = z.clone();
        let zz_start = zz.clone();
        for _ in 0..substeps_per_hold {
            z = &prop * z;
            zz = &prop_z * zz;
            col += 1;
            let x = z.rows(0, n).into_owned();
            states.set_column(col, &x);
            inputs.set_column(col, &u);
            state_integrals.set_column(col, &z.rows(n + m, n).into_owned());
            input_integrals.set_column(col, &z.rows(n + m + n, m).into_owned());
            second_moments.set_column(col, &zz.rows(k * k, k * k).into_owned());
        }

        // re-anchor the hold boundary with one whole-hold propagation:
        // rounding then accumulates per hold instead of per substep, which
        // is what the data windows (all hold-aligned) actually read
        z = &hold_prop * z_start;
        zz = &hold_prop_z * zz_start;
        let x = z.rows(0, n).into_owned();
        let xn = x.norm();
        if !xn.is_finite() || xn > 1e9 {
            return Err(Error::TrajectoryBlowUp { norm: xn });
        }
        states.set_column(col, &x);
        state_integrals.set_column(col, &z.rows(n + m, n).into_owned());
        input_integrals.set_column(col, &z.rows(n + m + n, m).into_owned());
        second_moments.set_column(col, &zz.rows(k * k, k * k).into_owned());
    }

    Ok(Trajectory {
        grid_step,
        hold_interval: excitation.hold_interval,
        substeps_per_hold,
        states,
        inputs,
        state_integrals,
        input_integrals,
        second_moments,
    })
}

/// Integrated data of the closed-loop parameterization, with the cached
/// projector, kernel basis, and stacked pseudoinverse every downstream
/// operation reuses.
#[derive(Debug, Clone)]
pub struct ClData {
    /// Columns x(tᵢ+δ) − x(tᵢ), n × T.
    pub increments: Matrix,
    /// Columns ∫ u over each window, m × T.
    pub input_integrals: Matrix,
    /// Columns ∫ x over each window, n × T.
    pub state_integrals: Matrix,
    /// Orthogonal projector onto ker(state_integrals), T × T.
    pub projector: Matrix,
    /// Orthonormal basis of ker(state_integrals), T × (T − n).
    pub null_basis: Matrix,
    /// Pseudoinverse of [input_integrals; state_integrals], T × (m + n).
    pub stacked_pinv: Matrix,
}

impl ClData {
    /// Rebuilds the data set (with its caches) from raw matrices, e.g.
    /// loaded from exported files; re-validates informativity.
    pub fn from_matrices(
        increments: Matrix,
        input_integrals: Matrix,
        state_integrals: Matrix,
    ) -> Result<Self> {
        let n = increments.nrows();
        let m = input_integrals.nrows();
        let t = increments.ncols();
        if state_integrals.shape() != (n, t) || input_integrals.ncols() != t {
            return Err(Error::Shape("data matrices have inconsistent sizes".into()));
        }
        let mut stacked = Matrix::zeros(m + n, t);
        stacked.view_mut((0, 0), (m, t)).copy_from(&input_integrals);
        stacked.view_mut((m, 0), (n, t)).copy_from(&state_integrals);
        let rk = linalg::equilibrated_rank(&stacked, RANK_TOL);
        if rk < m + n {
            return Err(Error::DataNotInformativeCl {
                expected: m + n,
                actual: rk,
            });
        }
        let projector = nullspace_projector(&state_integrals)?;
        let kernel = null_basis(&state_integrals, RANK_TOL);
        let stacked_pinv = pinv_default(&stacked);
        Ok(ClData {
            increments,
            input_integrals,
            state_integrals,
            projector,
            null_basis: kernel,
            stacked_pinv,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.increments.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_integrals.nrows()
    }

    pub fn samples(&self) -> usize {
        self.increments.ncols()
    }

    /// Stacked [input_integrals; state_integrals], (m + n) × T.
    pub fn stacked(&self) -> Matrix {
        let m = self.input_dim();
        let n = self.state_dim();
        let t = self.samples();
        let mut s = Matrix::zeros(m + n, t);
        s.view_mut((0, 0), (m, t)).copy_from(&self.input_integrals);
        s.view_mut((m, 0), (n, t)).copy_from(&self.state_integrals);
        s
    }
}

/// Quadratic-integral data of the integral-RL parameterization. Row i of
/// each block is the vectorization of the corresponding window quantity.
#[derive(Debug, Clone)]
pub struct IrlData {
    state_dim: usize,
    input_dim: usize,
    /// Rows vec(x(t+δ)x(t+δ)ᵀ − x(t)x(t)ᵀ), T × n².
    pub outer_increments: Matrix,
    /// Rows vec(∫ x xᵀ), T × n².
    pub state_moments: Matrix,
    /// Rows vec((∫ x uᵀ)ᵀ), T × mn.
    pub input_state_moments: Matrix,
    /// Rows vec(∫ x uᵀ), T × mn; equals `input_state_moments` times the
    /// commutation matrix.
    pub state_input_moments: Matrix,
}

impl IrlData {
    /// Rebuilds the data set from raw matrices, deriving the commuted
    /// cross-moment block and re-validating informativity.
    pub fn from_matrices(
        state_dim: usize,
        input_dim: usize,
        outer_increments: Matrix,
        state_moments: Matrix,
        input_state_moments: Matrix,
    ) -> Result<Self> {
        let (n, m) = (state_dim, input_dim);
        let t = outer_increments.nrows();
        if state_moments.shape() != (t, n * n)
            || outer_increments.ncols() != n * n
            || input_state_moments.shape() != (t, m * n)
        {
            return Err(Error::Shape("data matrices have inconsistent sizes".into()));
        }
        let state_input_moments = &input_state_moments * commutation_matrix(n, m);
        let data = IrlData {
            state_dim: n,
            input_dim: m,
            outer_increments,
            state_moments,
            input_state_moments,
            state_input_moments,
        };
        let mut joint = Matrix::zeros(t, n * n + m * n);
        joint
            .view_mut((0, 0), (t, n * n))
            .copy_from(&data.state_moments);
        joint
            .view_mut((0, n * n), (t, m * n))
            .copy_from(&data.input_state_moments);
        let rk = linalg::equilibrated_rank(&joint, RANK_TOL);
        if rk < data.required_rank() {
            return Err(Error::DataNotInformativeIrl {
                expected: data.required_rank(),
                actual: rk,
            });
        }
        Ok(data)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn samples(&self) -> usize {
        self.outer_increments.nrows()
    }

    /// x(t+δ)x(t+δ)ᵀ − x(t)x(t)ᵀ for window i.
    pub fn outer_increment(&self, i: usize) -> Matrix {
        let n = self.state_dim;
        Matrix::from_column_slice(n, n, self.outer_increments.row(i).transpose().as_slice())
    }

    /// ∫ x xᵀ for window i.
    pub fn state_moment(&self, i: usize) -> Matrix {
        let n = self.state_dim;
        Matrix::from_column_slice(n, n, self.state_moments.row(i).transpose().as_slice())
    }

    /// ∫ x uᵀ for window i (n × m).
    pub fn cross_moment(&self, i: usize) -> Matrix {
        let n = self.state_dim;
        let m = self.input_dim;
        Matrix::from_column_slice(n, m, self.state_input_moments.row(i).transpose().as_slice())
    }

    /// Minimum column count the informativity condition requires.
    pub fn required_rank(&self) -> usize {
        let n = self.state_dim;
        n * (n + 1) / 2 + self.input_dim * n
    }
}

/// Assembles the closed-loop data matrices over the schedule windows and
/// validates the informativity rank condition.
pub fn collect_cl_data(trajectory: &Trajectory, schedule: &SampleSchedule) -> Result<ClData> {
    let n = trajectory.states.nrows();
    let m = trajectory.inputs.nrows();
    let t = schedule.samples();
    if t == 0 {
        return Err(Error::Config("schedule has no windows".into()));
    }
    let mut increments = Matrix::zeros(n, t);
    let mut input_integrals = Matrix::zeros(m, t);
    let mut state_integrals = Matrix::zeros(n, t);
    for (i, &start) in schedule.window_starts.iter().enumerate() {
        let s = trajectory.grid_index(start)?;
        let e = trajectory.grid_index(start + schedule.window_length)?;
        increments.set_column(
            i,
            &(trajectory.states.column(e) - trajectory.states.column(s)),
        );
        input_integrals.set_column(
            i,
            &(trajectory.input_integrals.column(e) - trajectory.input_integrals.column(s)),
        );
        state_integrals.set_column(
            i,
            &(trajectory.state_integrals.column(e) - trajectory.state_integrals.column(s)),
        );
    }

    let mut stacked = Matrix::zeros(m + n, t);
    stacked.view_mut((0, 0), (m, t)).copy_from(&input_integrals);
    stacked.view_mut((m, 0), (n, t)).copy_from(&state_integrals);
    let rk = linalg::equilibrated_rank(&stacked, RANK_TOL);
    if rk < m + n {
        return Err(Error::DataNotInformativeCl {
            expected: m + n,
            actual: rk,
        });
    }

    let projector = nullspace_projector(&state_integrals)?;
    let kernel = null_basis(&state_integrals, RANK_TOL);
    let stacked_pinv = pinv_default(&stacked);

    Ok(ClData {
        increments,
        input_integrals,
        state_integrals,
        projector,
        null_basis: kernel,
        stacked_pinv,
    })
}

/// Assembles the quadratic-integral data from the exactly propagated
/// second moments: the window integrals ∫xxᵀ and ∫xuᵀ are blocks of the
/// running ∫[x;u][x;u]ᵀ carried by the simulator.
pub fn collect_irl_data(trajectory: &Trajectory, schedule: &SampleSchedule) -> Result<IrlData> {
    let n = trajectory.states.nrows();
    let m = trajectory.inputs.nrows();
    let k = n + m;
    let t = schedule.samples();
    if t == 0 {
        return Err(Error::Config("schedule has no windows".into()));
    }
    let mut outer_increments = Matrix::zeros(t, n * n);
    let mut state_moments = Matrix::zeros(t, n * n);
    let mut input_state_moments = Matrix::zeros(t, m * n);
    let mut state_input_moments = Matrix::zeros(t, m * n);

    for (i, &start) in schedule.window_starts.iter().enumerate() {
        let s = trajectory.grid_index(start)?;
        let e = trajectory.grid_index(start + schedule.window_length)?;

        let xs = trajectory.states.column(s);
        let xe = trajectory.states.column(e);
        let r_dx = &xe * xe.transpose() - &xs * xs.transpose();

        let moment = Matrix::from_column_slice(
            k,
            k,
            (trajectory.second_moments.column(e) - trajectory.second_moments.column(s))
                .as_slice(),
        );
        let r_xx = moment.view((0, 0), (n, n)).into_owned();
        let r_xu = moment.view((0, n), (n, m)).into_owned();

        outer_increments.set_row(i, &linalg::vec_of(&r_dx).transpose());
        state_moments.set_row(i, &linalg::vec_of(&r_xx).transpose());
        input_state_moments.set_row(i, &linalg::vec_of(&r_xu.transpose()).transpose());
        state_input_moments.set_row(i, &linalg::vec_of(&r_xu).transpose());
    }

    let data = IrlData {
        state_dim: n,
        input_dim: m,
        outer_increments,
        state_moments,
        input_state_moments,
        state_input_moments,
    };

    let mut joint = Matrix::zeros(t, n * n + m * n);
    joint
        .view_mut((0, 0), (t, n * n))
        .copy_from(&data.state_moments);
    joint
        .view_mut((0, n * n), (t, m * n))
        .copy_from(&data.input_state_moments);
    let rk = linalg::equilibrated_rank(&joint, RANK_TOL);
    if rk < data.required_rank() {
        return Err(Error::DataNotInformativeIrl {
            expected: data.required_rank(),
            actual: rk,
        });
    }
    Ok(data)
}

/// Least-squares identification `[B A] = increments · stacked⁺`.
pub fn ls_identify(data: &ClData) -> (Matrix, Matrix) {
    let m = data.input_dim();
    let n = data.state_dim();
    let ba = &data.increments * &data.stacked_pinv;
    let b = ba.columns(0, m).into_owned();
    let a = ba.columns(m, n).into_owned();
    (a, b)
}

/// Structured identification from the quadratic-integral data: solves the
/// stacked regression whose window blocks act on vec(A) and vec(B) through
/// the Kronecker-sum structure of the outer-product dynamics.
pub fn structured_identify(data: &IrlData) -> Result<(Matrix, Matrix)> {
    let n = data.state_dim();
    let m = data.input_dim();
    let t = data.samples();
    let eye = Matrix::identity(n, n);
    let c_nn = commutation_matrix(n, n);
    let c_nm = commutation_matrix(n, m);
    let cols = n * n + m * n;
    let mut reg = Matrix::zeros(t * n * n, cols);
    let mut rhs = Vector::zeros(t * n * n);
    for i in 0..t {
        let r_xx = data.state_moment(i);
        let r_xu = data.cross_moment(i);
        // vec(A·r_xx + r_xx·Aᵀ) in terms of vec(A)
        let block_a = linalg::kron(&r_xx, &eye) + linalg::kron(&eye, &r_xx) * &c_nn;
        // vec(B·r_xuᵀ + r_xu·Bᵀ) in terms of vec(B)
        let block_b = linalg::kron(&r_xu, &eye) + linalg::kron(&eye, &r_xu) * &c_nm;
        reg.view_mut((i * n * n, 0), (n * n, n * n)).copy_from(&block_a);
        reg.view_mut((i * n * n, n * n), (n * n, m * n))
            .copy_from(&block_b);
        rhs.rows_mut(i * n * n, n * n)
            .copy_from(&linalg::vec_of(&data.outer_increment(i)));
    }
    let rk = rank(&reg, RANK_TOL);
    if rk < cols {
        return Err(Error::RankDeficient {
            what: "structured identification regressor".into(),
            expected: cols,
            actual: rk,
        });
    }
    let sol = linalg::lstsq(&reg, &rhs);
    let a = linalg::unvec(&sol.rows(0, n * n).into_owned(), n, n)?;
    let b = linalg::unvec(&sol.rows(n * n, m * n).into_owned(), n, m)?;
    Ok((a, b))
}

/// Gaussian random matrix helper shared by excitation and benchmarks.
pub(crate) fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}
