//! Closed-loop parameterization of the data-driven LQR problem.
//!
//! A feedback gain is represented through a matrix `G` satisfying
//! `[-K; I] = [input_integrals; state_integrals]·G`, which makes the closed
//! loop `increments·G`. On top of that representation this module provides
//! policy evaluation and improvement, policy iteration, two data-driven
//! Riccati residuals, the Riccati flow and value iteration driven by them,
//! the LQR cost, its exact gradient, and the projected gradient flow.

use crate::error::{Error, Result};
use crate::iterate::{rk4_step, FlowHistory, FlowOptions, StopRule, ValueHistory, ViOptions};
use crate::linalg::{self, solve_lyapunov, spectral, Matrix, SymMatrix};
use crate::sim::{ClData, Weights};

/// Affine-feasibility tolerance for membership in `{G : state_integrals·G = I}`.
const FEASIBILITY_TOL: f64 = 1e-8;

/// A point of the closed-loop parameterization with its derived gain and
/// closed-loop matrix.
#[derive(Debug, Clone)]
pub struct ClPolicy {
    g: Matrix,
    gain: Matrix,
    closed_loop: Matrix,
}

impl ClPolicy {
    pub fn matrix(&self) -> &Matrix {
        &self.g
    }

    /// `K = -input_integrals·G`.
    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    /// `increments·G`, the data-parameterized closed-loop matrix.
    pub fn closed_loop(&self) -> &Matrix {
        &self.closed_loop
    }
}

/// Policy evaluation output: value matrix, scalar cost, and (when
/// requested) the closed-loop Gramian the gradient needs.
#[derive(Debug, Clone)]
pub struct ClEvaluation {
    pub value: SymMatrix,
    pub cost: f64,
    pub gramian: Option<SymMatrix>,
}

/// The compressed (n+m)-dimensional view of the data-driven quadratic form,
/// its Riccati residual, and the gain candidate it encodes.
#[derive(Debug, Clone)]
pub struct ClCareView {
    /// Symmetric (n+m)×(n+m) compression of the T×T quadratic form.
    pub quad: SymMatrix,
    /// `J₁₁ − J₁₂ R⁻¹ J₂₁`.
    pub residual: SymMatrix,
    /// `R⁻¹ J₂₁`, the gain recovered at the Riccati solution.
    pub gain: Matrix,
}

/// Identified-coefficient Riccati residual together with the coefficients.
#[derive(Debug, Clone)]
pub struct IdentCare {
    pub residual: SymMatrix,
    pub a: Matrix,
    pub b: Matrix,
}

/// Policy-iteration history.
#[derive(Debug, Clone)]
pub struct ClPiRun {
    pub policies: Vec<ClPolicy>,
    pub values: Vec<SymMatrix>,
}

impl ClPiRun {
    pub fn final_policy(&self) -> &ClPolicy {
        self.policies.last().expect("history never empty")
    }

    pub fn gains(&self) -> Vec<Matrix> {
        self.policies.iter().map(|p| p.gain.clone()).collect()
    }
}

/// Gradient-flow history with the cost along the trajectory.
#[derive(Debug, Clone)]
pub struct ClFlowRun {
    pub times: Vec<f64>,
    pub policies: Vec<ClPolicy>,
    pub costs: Vec<f64>,
}

/// The closed-loop parameterization over one data set and one weight pair.
/// All pseudoinverses the improvement step needs are computed once here.
#[derive(Debug, Clone)]
pub struct ClParam {
    data: ClData,
    weights: Weights,
    r_inv: Matrix,
    /// Pseudoinverse of the integrated states.
    states_pinv: Matrix,
    /// Pseudoinverse of `input_integrals · projector`.
    inputs_proj_pinv: Matrix,
    /// `input_integrals · states_pinv`.
    inputs_states_pinv: Matrix,
    /// `input_integralsᵀ R input_integrals`.
    input_quad: Matrix,
    /// Pseudoinverse of the T×(n+m) matrix [state_integralsᵀ input_integralsᵀ].
    compress: Matrix,
    /// Projector onto ker([input_integrals; state_integrals]).
    stacked_projector: Matrix,
    /// Identified coefficients of the Riccati residual.
    a_ident: Matrix,
    b_ident: Matrix,
}

impl ClParam {
    pub fn new(data: ClData, weights: Weights) -> Result<Self> {
        let n = data.state_dim();
        let m = data.input_dim();
        let t = data.samples();
        if weights.q.dim() != n || weights.r.dim() != m {
            return Err(Error::Shape("weights do not match the data".into()));
        }
        let r_inv = weights.r_inv();
        let states_pinv = linalg::pinv_default(&data.state_integrals);
        let inputs_proj = &data.input_integrals * &data.projector;
        let inputs_proj_pinv = linalg::pinv_default(&inputs_proj);
        let inputs_states_pinv = &data.input_integrals * &states_pinv;
        let input_quad =
            data.input_integrals.transpose() * weights.r.as_matrix() * &data.input_integrals;

        let mut stack_t = Matrix::zeros(t, n + m);
        stack_t
            .view_mut((0, 0), (t, n))
            .copy_from(&data.state_integrals.transpose());
        stack_t
            .view_mut((0, n), (t, m))
            .copy_from(&data.input_integrals.transpose());
        let compress = linalg::pinv_default(&stack_t);

        let stacked_projector = linalg::SymMatrix::symmetrize(
            Matrix::identity(t, t) - &data.stacked_pinv * data.stacked(),
        )
        .into_matrix();

        let b_ident = &data.increments * &inputs_proj_pinv;
        let a_ident = &data.increments
            * (Matrix::identity(t, t) - &inputs_proj_pinv * &data.input_integrals)
            * &states_pinv;

        Ok(ClParam {
            data,
            weights,
            r_inv,
            states_pinv,
            inputs_proj_pinv,
            inputs_states_pinv,
            input_quad,
            compress,
            stacked_projector,
            a_ident,
            b_ident,
        })
    }

    pub fn data(&self) -> &ClData {
        &self.data
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Projector onto the tangent space ker(state_integrals).
    pub fn projector(&self) -> &Matrix {
        &self.data.projector
    }

    /// Projector onto ker of the stacked data (used by the regularizer).
    pub fn stacked_projector(&self) -> &Matrix {
        &self.stacked_projector
    }

    /// Wraps `g` as a policy after checking membership in the affine
    /// feasible set.
    pub fn policy(&self, g: Matrix) -> Result<ClPolicy> {
        let n = self.data.state_dim();
        let feas = (&self.data.state_integrals * &g - Matrix::identity(n, n)).norm();
        if feas > FEASIBILITY_TOL {
            return Err(Error::Numerical(format!(
                "policy violates the data equation by {feas:.3e}"
            )));
        }
        Ok(ClPolicy {
            gain: -(&self.data.input_integrals * &g),
            closed_loop: &self.data.increments * &g,
            g,
        })
    }

    /// Minimum-Frobenius-norm representation of a given gain.
    pub fn particular_solution(&self, gain: &Matrix) -> Result<ClPolicy> {
        let n = self.data.state_dim();
        let m = self.data.input_dim();
        let mut rhs = Matrix::zeros(m + n, n);
        rhs.view_mut((0, 0), (m, n)).copy_from(&(-gain));
        rhs.view_mut((m, 0), (n, n))
            .copy_from(&Matrix::identity(n, n));
        self.policy(&self.data.stacked_pinv * rhs)
    }

    fn hurwitz_check(&self, pol: &ClPolicy) -> Result<()> {
        let report = spectral(pol.closed_loop())?;
        if !report.hurwitz {
            return Err(Error::PolicyNotStabilizing {
                abscissa: report.abscissa,
            });
        }
        Ok(())
    }

    /// Lyapunov evaluation of a stabilizing policy.
    pub fn policy_evaluation(&self, pol: &ClPolicy) -> Result<ClEvaluation> {
        self.evaluate(pol, false)
    }

    /// Evaluation that also solves for the closed-loop Gramian.
    pub fn policy_evaluation_with_gramian(&self, pol: &ClPolicy) -> Result<ClEvaluation> {
        self.evaluate(pol, true)
    }

    fn evaluate(&self, pol: &ClPolicy, with_gramian: bool) -> Result<ClEvaluation> {
        self.hurwitz_check(pol)?;
        let w = SymMatrix::symmetrize(
            self.weights.q.as_matrix()
                + pol.gain.transpose() * self.weights.r.as_matrix() * &pol.gain,
        );
        let value = solve_lyapunov(pol.closed_loop(), &w)?;
        let gramian = if with_gramian {
            let n = self.data.state_dim();
            Some(solve_lyapunov(
                &pol.closed_loop().transpose(),
                &SymMatrix::identity(n),
            )?)
        } else {
            None
        };
        Ok(ClEvaluation {
            cost: value.trace(),
            value,
            gramian,
        })
    }

    /// LQR cost `tr(P_G)` of a stabilizing policy.
    pub fn lqr_cost(&self, pol: &ClPolicy) -> Result<f64> {
        Ok(self.policy_evaluation(pol)?.cost)
    }

    /// Closed-form minimum-norm improvement step for a given value matrix.
    pub fn policy_improvement(&self, p: &SymMatrix) -> Result<ClPolicy> {
        let term = &self.inputs_states_pinv
            + &self.r_inv
                * self.inputs_proj_pinv.transpose()
                * (p.as_matrix() * &self.data.increments).transpose();
        self.policy(&self.states_pinv - &self.inputs_proj_pinv * term)
    }

    /// Policy iteration: alternate Lyapunov evaluation and the closed-form
    /// improvement until the gain settles.
    pub fn policy_iteration(&self, g0: &ClPolicy, stop: &StopRule) -> Result<ClPiRun> {
        self.hurwitz_check(g0)?;
        let mut run = ClPiRun {
            policies: vec![g0.clone()],
            values: Vec::new(),
        };
        for iter in 0..stop.max_iter {
            let current = run.policies.last().unwrap();
            let eval = self.policy_evaluation(current).map_err(|e| match e {
                Error::PolicyNotStabilizing { abscissa } => Error::Numerical(format!(
                    "stability lost at policy-iteration step {iter} (abscissa {abscissa:.3e})"
                )),
                other => other,
            })?;
            let next = self.policy_improvement(&eval.value)?;
            let delta = (next.gain() - run.policies.last().unwrap().gain()).norm();
            run.values.push(eval.value);
            run.policies.push(next);
            if delta <= stop.gain_tol {
                break;
            }
        }
        Ok(run)
    }

    /// Riccati residual built from the identified coefficients
    /// `AᵀP + PA − PBR⁻¹BᵀP + Q`; the coefficients equal the least-squares
    /// identification of the plant.
    pub fn care_residual_ident(&self, p: &SymMatrix) -> IdentCare {
        let pm = p.as_matrix();
        let bt_p = self.b_ident.transpose() * pm;
        let residual = SymMatrix::symmetrize(
            self.a_ident.transpose() * pm + pm * &self.a_ident
                - bt_p.transpose() * &self.r_inv * &bt_p
                + self.weights.q.as_matrix(),
        );
        IdentCare {
            residual,
            a: self.a_ident.clone(),
            b: self.b_ident.clone(),
        }
    }

    /// Riccati residual through the compressed T×T quadratic form
    /// `state_integralsᵀP·increments + incrementsᵀP·state_integrals
    ///  + input_integralsᵀR·input_integrals + state_integralsᵀQ·state_integrals`.
    pub fn care_residual_compressed(&self, p: &SymMatrix) -> ClCareView {
        let n = self.data.state_dim();
        let m = self.data.input_dim();
        let pm = p.as_matrix();
        let cross = self.data.state_integrals.transpose() * pm * &self.data.increments;
        let f = &cross
            + cross.transpose()
            + &self.input_quad
            + self.data.state_integrals.transpose()
                * self.weights.q.as_matrix()
                * &self.data.state_integrals;
        let quad = SymMatrix::symmetrize(&self.compress * f * self.compress.transpose());
        let j11 = quad.view((0, 0), (n, n)).into_owned();
        let j12 = quad.view((0, n), (n, m)).into_owned();
        let j21 = quad.view((n, 0), (m, n)).into_owned();
        let gain = &self.r_inv * &j21;
        let residual = SymMatrix::symmetrize(j11 - j12 * &self.r_inv * j21);
        ClCareView {
            quad,
            residual,
            gain,
        }
    }

    /// Riccati flow `Ṗ = residual(P)` under the compressed residual.
    pub fn riccati_flow(&self, p0: &SymMatrix, opts: &FlowOptions) -> Result<FlowHistory<SymMatrix>> {
        let mut f = |p: &Matrix| -> Result<Matrix> {
            Ok(self
                .care_residual_compressed(&SymMatrix::symmetrize(p.clone()))
                .residual
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

    /// Value iteration on the compressed residual with bounding-set resets.
    pub fn value_iteration(&self, p0: &SymMatrix, opts: &ViOptions) -> Result<ValueHistory> {
        crate::oracle::vi_generic(p0, opts, |p| Ok(self.care_residual_compressed(p).residual))
    }

    /// Exact gradient of the LQR cost with respect to the parameterizing
    /// matrix: `2(input_quad·G + incrementsᵀP)·Y`.
    pub fn gradient(&self, pol: &ClPolicy) -> Result<Matrix> {
        let eval = self.policy_evaluation_with_gramian(pol)?;
        Ok(self.gradient_from_eval(pol, &eval))
    }

    fn gradient_from_eval(&self, pol: &ClPolicy, eval: &ClEvaluation) -> Matrix {
        let y = eval
            .gramian
            .as_ref()
            .expect("gradient needs the Gramian")
            .as_matrix();
        (&self.input_quad * &pol.g + self.data.increments.transpose() * eval.value.as_matrix())
            * y
            * 2.0
    }

    /// Projected gradient flow `Ġ = −α·Π(∇f_G + λ·∂‖Π̃G‖)` integrated with
    /// RK4; each step re-projects onto the affine feasible set to cancel
    /// integration drift.
    pub fn projected_gradient_flow(
        &self,
        g0: &ClPolicy,
        alpha: f64,
        lambda: f64,
        opts: &FlowOptions,
    ) -> Result<ClFlowRun> {
        if alpha <= 0.0 {
            return Err(Error::Config("flow gain must be positive".into()));
        }
        self.hurwitz_check(g0)?;
        let mut t = 0.0;
        let mut f = |g: &Matrix| -> Result<Matrix> {
            let pol = ClPolicy {
                gain: -(&self.data.input_integrals * g),
                closed_loop: &self.data.increments * g,
                g: g.clone(),
            };
            let eval = self.evaluate(&pol, true)?;
            let mut dir = &self.data.projector * self.gradient_from_eval(&pol, &eval);
            if lambda > 0.0 {
                let reg = &self.stacked_projector * g;
                let norm = reg.norm();
                if norm > 1e-12 {
                    dir += reg * (lambda / norm);
                }
            }
            Ok(-dir * alpha)
        };

        let mut g = g0.g.clone();
        let mut run = ClFlowRun {
            times: vec![0.0],
            policies: vec![g0.clone()],
            costs: vec![self.lqr_cost(g0)?],
        };
        let steps = opts.steps();
        for k in 0..steps {
            g = rk4_step(&mut f, &g, opts.step).map_err(|e| match e {
                Error::PolicyNotStabilizing { .. } | Error::UnstableClosedLoop { .. } => {
                    Error::StabilizingSetExit { t }
                }
                other => other,
            })?;
            // cancel drift off the affine subspace
            let n = self.data.state_dim();
            let drift = &self.data.state_integrals * &g - Matrix::identity(n, n);
            g -= &self.states_pinv * drift;
            t = (k + 1) as f64 * opts.step;
            if (k + 1) % opts.record_every == 0 || k + 1 == steps {
                let pol = self.policy(g.clone())?;
                let cost = self.lqr_cost(&pol).map_err(|e| match e {
                    Error::PolicyNotStabilizing { .. } => Error::StabilizingSetExit { t },
                    other => other,
                })?;
                run.times.push(t);
                run.policies.push(pol);
                run.costs.push(cost);
            }
        }
        Ok(run)
    }
}
