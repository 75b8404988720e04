//! Integral reinforcement-learning parameterization.
//!
//! Policy evaluation is a regression on quadratic trajectory integrals:
//! for a gain `K` it recovers `(P, BᵀP)`, and for a value matrix `P` a
//! second regression recovers `(AᵀP + PA, R⁻¹BᵀP)`. On those two
//! primitives this module builds policy iteration, a data-driven Riccati
//! residual with its flow and value iteration, the cost gradient with its
//! flow, and the per-window Riccati functionals used by the convex
//! programs.

use crate::error::{Error, Result};
use crate::iterate::{rk4_step, FlowHistory, FlowOptions, StopRule, ValueHistory, ViOptions};
use crate::linalg::{
    self, duplication_matrix, equilibrated_rank, kron, unvec, vec_of, Matrix, SymMatrix,
    RANK_TOL,
};
use crate::sim::{IrlData, Weights};

/// Regression for one gain: `rhs = basis · [vech(P); vec(BᵀP)]`.
#[derive(Debug, Clone)]
pub struct IrlRegression {
    /// Unreduced regressor acting on `[vec(P); vec(BᵀP)]`, T × (n²+mn).
    pub basis_full: Matrix,
    /// Regressor acting on `[vech(P); vec(BᵀP)]`, T × (n(n+1)/2+mn).
    pub basis: Matrix,
    /// Right-hand side `−state_moments · vec(Q + KᵀRK)`.
    pub rhs: linalg::Vector,
    /// The gain the regression was assembled for.
    pub gain: Matrix,
}

/// Evaluation output for a gain: value matrix, `BᵀP`, the stacked solution
/// vector, and the relative regression residual (a consistency signal;
/// large values indicate a non-stabilizing gain or broken data).
#[derive(Debug, Clone)]
pub struct IrlEvaluation {
    pub value: SymMatrix,
    pub input_value: Matrix,
    pub theta: linalg::Vector,
    pub residual_ratio: f64,
}

impl IrlEvaluation {
    pub fn cost(&self) -> f64 {
        self.value.trace()
    }

    /// Noise-free data with a stabilizing gain keeps the regression
    /// residual at rounding level.
    pub fn consistent(&self) -> bool {
        self.residual_ratio <= 1e-6
    }
}

/// Output of the value-matrix regression: the Lyapunov term `AᵀP + PA`
/// and the improved gain `R⁻¹BᵀP`.
#[derive(Debug, Clone)]
pub struct ValueSplit {
    pub lyapunov_term: SymMatrix,
    pub gain: Matrix,
}

/// Policy-iteration history.
#[derive(Debug, Clone)]
pub struct IrlPiRun {
    pub gains: Vec<Matrix>,
    pub values: Vec<SymMatrix>,
}

impl IrlPiRun {
    pub fn final_gain(&self) -> &Matrix {
        self.gains.last().expect("history never empty")
    }
}

/// Gradient-flow history with the data-driven cost along the trajectory.
#[derive(Debug, Clone)]
pub struct IrlFlowRun {
    pub times: Vec<f64>,
    pub gains: Vec<Matrix>,
    pub costs: Vec<f64>,
}

/// The IRL parameterization over one data set and one weight pair.
#[derive(Debug, Clone)]
pub struct IrlParam {
    data: IrlData,
    weights: Weights,
    r_inv: Matrix,
    duplication: Matrix,
    /// Regressor of the value-matrix split, constant across calls.
    split_basis: Matrix,
}

impl IrlParam {
    pub fn new(data: IrlData, weights: Weights) -> Result<Self> {
        let n = data.state_dim();
        let m = data.input_dim();
        if weights.q.dim() != n || weights.r.dim() != m {
            return Err(Error::Shape("weights do not match the data".into()));
        }
        let r_inv = weights.r_inv();
        let duplication = duplication_matrix(n);
        let p = n * (n + 1) / 2;
        let t = data.samples();

        // [state_moments·D, 2·input_state_moments·(I ⊗ R)]
        let mut split_basis = Matrix::zeros(t, p + m * n);
        split_basis
            .view_mut((0, 0), (t, p))
            .copy_from(&(&data.state_moments * &duplication));
        split_basis.view_mut((0, p), (t, m * n)).copy_from(
            &(&data.input_state_moments
                * kron(&Matrix::identity(n, n), weights.r.as_matrix())
                * 2.0),
        );
        let rk = equilibrated_rank(&split_basis, RANK_TOL);
        if rk < p + m * n {
            return Err(Error::DataNotInformativeIrl {
                expected: p + m * n,
                actual: rk,
            });
        }
        Ok(IrlParam {
            data,
            weights,
            r_inv,
            duplication,
            split_basis,
        })
    }

    pub fn data(&self) -> &IrlData {
        &self.data
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    fn dims(&self) -> (usize, usize, usize) {
        (
            self.data.state_dim(),
            self.data.input_dim(),
            self.data.samples(),
        )
    }

    /// `E(K) = input_state_moments + state_moments·(I ⊗ Kᵀ)`.
    fn gain_regressor(&self, gain: &Matrix) -> Matrix {
        let n = self.data.state_dim();
        &self.data.input_state_moments
            + &self.data.state_moments * kron(&Matrix::identity(n, n), &gain.transpose())
    }

    /// Assembles the evaluation regression for a gain.
    pub fn build_regression(&self, gain: &Matrix) -> IrlRegression {
        let (n, m, t) = self.dims();
        let p = n * (n + 1) / 2;
        let e = self.gain_regressor(gain);
        let w = SymMatrix::symmetrize(
            self.weights.q.as_matrix() + gain.transpose() * self.weights.r.as_matrix() * gain,
        );
        let rhs = -(&self.data.state_moments * vec_of(w.as_matrix()));

        let mut basis_full = Matrix::zeros(t, n * n + m * n);
        basis_full
            .view_mut((0, 0), (t, n * n))
            .copy_from(&self.data.outer_increments);
        basis_full
            .view_mut((0, n * n), (t, m * n))
            .copy_from(&(&e * -2.0));

        let mut basis = Matrix::zeros(t, p + m * n);
        basis
            .view_mut((0, 0), (t, p))
            .copy_from(&(&self.data.outer_increments * &self.duplication));
        basis
            .view_mut((0, p), (t, m * n))
            .copy_from(&(&e * -2.0));

        IrlRegression {
            basis_full,
            basis,
            rhs,
            gain: gain.clone(),
        }
    }

    /// Least-squares policy evaluation: recovers `(P, BᵀP)` for a gain.
    pub fn policy_evaluation(&self, gain: &Matrix) -> Result<IrlEvaluation> {
        let (n, m, _) = self.dims();
        let p = n * (n + 1) / 2;
        let reg = self.build_regression(gain);
        let theta = linalg::lstsq(&reg.basis, &reg.rhs);
        let residual = (&reg.basis * &theta - &reg.rhs).norm();
        let residual_ratio = residual / reg.rhs.norm().max(1e-300);
        // informativity was certified at collection; a genuine rank drop
        // (not mere ill-conditioning from the gain block) shows up at
        // machine scale, and only a non-fitting regression warrants the
        // diagnostic rank computation
        if residual_ratio > 1e-6 {
            let rk = equilibrated_rank(&reg.basis, 1e-12);
            if rk < p + m * n {
                return Err(Error::DataNotInformativeIrl {
                    expected: p + m * n,
                    actual: rk,
                });
            }
        }
        let value = SymMatrix::from_vech(n, &theta.rows(0, p).into_owned())?;
        let input_value = unvec(&theta.rows(p, m * n).into_owned(), m, n)?;
        Ok(IrlEvaluation {
            value,
            input_value,
            theta,
            residual_ratio,
        })
    }

    /// Data-driven LQR cost `tr(P̂_K)`.
    pub fn lqr_cost(&self, gain: &Matrix) -> Result<f64> {
        Ok(self.policy_evaluation(gain)?.cost())
    }

    /// Policy iteration: evaluate, then update `K ← R⁻¹(BᵀP)`.
    pub fn policy_iteration(&self, k0: &Matrix, stop: &StopRule) -> Result<IrlPiRun> {
        let mut run = IrlPiRun {
            gains: vec![k0.clone()],
            values: Vec::new(),
        };
        for iter in 0..stop.max_iter {
            let k = run.gains.last().unwrap().clone();
            let eval = self.policy_evaluation(&k)?;
            // the value matrix of a stabilizing gain is PSD; an indefinite
            // estimate means the gain left the stabilizing set
            if !eval.value.is_psd(1e-8 * eval.value.norm().max(1.0)) {
                return Err(Error::PolicyNotStabilizing {
                    abscissa: f64::NAN,
                });
            }
            if iter == 0 && !eval.consistent() {
                return Err(Error::Numerical(format!(
                    "evaluation regression inconsistent (ratio {:.3e}); initial gain is \
                     likely not stabilizing",
                    eval.residual_ratio
                )));
            }
            let next = &self.r_inv * &eval.input_value;
            let delta = (&next - &k).norm();
            run.values.push(eval.value);
            run.gains.push(next);
            if delta <= stop.gain_tol {
                break;
            }
        }
        Ok(run)
    }

    /// Recovers `(AᵀP + PA, R⁻¹BᵀP)` for a given value matrix.
    pub fn value_split(&self, p: &SymMatrix) -> Result<ValueSplit> {
        let (n, m, _) = self.dims();
        let d = n * (n + 1) / 2;
        let rhs = &self.data.outer_increments * vec_of(p.as_matrix());
        let theta = linalg::lstsq(&self.split_basis, &rhs);
        let lyapunov_term = SymMatrix::from_vech(n, &theta.rows(0, d).into_owned())?;
        let gain = unvec(&theta.rows(d, m * n).into_owned(), m, n)?;
        Ok(ValueSplit {
            lyapunov_term,
            gain,
        })
    }

    /// Riccati residual `H − (K⁺)ᵀRK⁺ + Q` at a value matrix.
    pub fn care_residual(&self, p: &SymMatrix) -> Result<SymMatrix> {
        let split = self.value_split(p)?;
        Ok(SymMatrix::symmetrize(
            split.lyapunov_term.as_matrix()
                - split.gain.transpose() * self.weights.r.as_matrix() * &split.gain
                + self.weights.q.as_matrix(),
        ))
    }

    /// Riccati flow `Ṗ = H − (K⁺)ᵀRK⁺ + Q` integrated with RK4. The gain
    /// recovered mid-flow need not be stabilizing.
    pub fn riccati_flow(
        &self,
        p0: &SymMatrix,
        opts: &FlowOptions,
    ) -> Result<FlowHistory<SymMatrix>> {
        let mut f = |p: &Matrix| -> Result<Matrix> {
            Ok(self
                .care_residual(&SymMatrix::symmetrize(p.clone()))?
                .into_matrix())
        };
        let mut p = p0.as_matrix().clone();
        let mut history = FlowHistory {
            times: vec![0.0],
            states: vec![p0.clone()],
        };
        let steps = opts.steps();
        for k in 0..steps {
            p = rk4_step(&mut f, &p, opts.step)?;
            p = SymMatrix::symmetrize(p).into_matrix();
            let norm = p.norm();
            if !norm.is_finite() || norm > 1e9 {
                return Err(Error::IterateBlowUp { step: k, norm });
            }
            if (k + 1) % opts.record_every == 0 || k + 1 == steps {
                history.times.push((k + 1) as f64 * opts.step);
                history.states.push(SymMatrix::symmetrize(p.clone()));
            }
        }
        Ok(history)
    }

    /// Value iteration on the data-driven residual with bounding-set resets.
    pub fn value_iteration(&self, p0: &SymMatrix, opts: &ViOptions) -> Result<ValueHistory> {
        crate::oracle::vi_generic(p0, opts, |p| self.care_residual(p))
    }

    /// The symmetric matrix relating cost differentials to gain
    /// differentials; equals minus the closed-loop Gramian of the gain.
    pub fn l_matrix(&self, gain: &Matrix) -> Result<SymMatrix> {
        let (n, _, _) = self.dims();
        let reg = self.build_regression(gain);
        // the unreduced regressor is rank-deficient by construction (its
        // kernel holds the antisymmetric directions, at machine scale);
        // informative directions may carry tiny singular values, so the
        // cutoff sits near machine precision
        let basis_pinv = linalg::pinv(&reg.basis_full, 1e-12);
        let top = basis_pinv.rows(0, n * n).into_owned();
        let map = (top * &self.data.state_moments).transpose();
        let l_vec = map * vec_of(&Matrix::identity(n, n));
        let l = unvec(&l_vec, n, n)?;
        let dev = (&l - l.transpose()).norm();
        if dev > 1e-8 * l.norm().max(1.0) {
            return Err(Error::Numerical(format!(
                "gradient scaling matrix lost symmetry ({dev:.3e})"
            )));
        }
        Ok(SymMatrix::symmetrize(l))
    }

    /// Gradient of the data-driven LQR cost at a stabilizing gain:
    /// `2(BᵀP − RK)·L`.
    pub fn gradient(&self, gain: &Matrix) -> Result<Matrix> {
        let eval = self.policy_evaluation(gain)?;
        self.gradient_from_eval(gain, &eval)
    }

    fn gradient_from_eval(&self, gain: &Matrix, eval: &IrlEvaluation) -> Result<Matrix> {
        let l = self.l_matrix(gain)?;
        Ok((&eval.input_value - self.weights.r.as_matrix() * gain) * l.as_matrix() * 2.0)
    }

    /// Gradient flow `K̇ = −β∇f̂_K`. Checkpoints are guarded by the
    /// data-driven consistency heuristics (PSD value estimate, small
    /// regression residual); certification against the true plant is the
    /// caller's business.
    pub fn gradient_flow(
        &self,
        k0: &Matrix,
        beta: f64,
        opts: &FlowOptions,
    ) -> Result<IrlFlowRun> {
        if beta <= 0.0 {
            return Err(Error::Config("flow gain must be positive".into()));
        }
        let mut f = |k: &Matrix| -> Result<Matrix> {
            let eval = self.policy_evaluation(k)?;
            Ok(-self.gradient_from_eval(k, &eval)? * beta)
        };
        let eval0 = self.policy_evaluation(k0)?;
        if !eval0.value.is_psd(1e-8 * eval0.value.norm().max(1.0)) || !eval0.consistent() {
            return Err(Error::PolicyNotStabilizing { abscissa: f64::NAN });
        }
        let mut k = k0.clone();
        let mut run = IrlFlowRun {
            times: vec![0.0],
            gains: vec![k0.clone()],
            costs: vec![eval0.cost()],
        };
        let steps = opts.steps();
        for i in 0..steps {
            k = rk4_step(&mut f, &k, opts.step)?;
            let t = (i + 1) as f64 * opts.step;
            if !k.norm().is_finite() || k.norm() > 1e9 {
                return Err(Error::StabilizingSetExit { t });
            }
            if (i + 1) % opts.record_every == 0 || i + 1 == steps {
                let eval = self.policy_evaluation(&k)?;
                if !eval.value.is_psd(1e-6 * eval.value.norm().max(1.0)) {
                    return Err(Error::StabilizingSetExit { t });
                }
                run.times.push(t);
                run.gains.push(k.clone());
                run.costs.push(eval.cost());
            }
        }
        Ok(run)
    }

    /// Per-window Riccati functional
    /// `tr(P·r_Δx) + tr(Q·r_xx) − tr(WR⁻¹Wᵀ·r_xx) − 2tr(Wᵀ·r_xu)`,
    /// zero at `(P*, P*B)` for every window and concave in `(P, W)`.
    pub fn care_functional(&self, window: usize, p: &SymMatrix, w: &Matrix) -> f64 {
        let r_dx = self.data.outer_increment(window);
        let r_xx = self.data.state_moment(window);
        let r_xu = self.data.cross_moment(window);
        (p.as_matrix() * r_dx).trace() + (self.weights.q.as_matrix() * &r_xx).trace()
            - (w * &self.r_inv * w.transpose() * &r_xx).trace()
            - 2.0 * (w.transpose() * r_xu).trace()
    }
}
