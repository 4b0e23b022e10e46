//! Phase-shift solver: finds `delta2, delta3, delta4` (with bridge 1 as the zero-phase
//! reference) so that the load ports absorb commanded powers and no power flows
//! between the two source ports.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::circuit::{Port, QabConfig};
use crate::error::QabError;
use crate::harmonic_balance::{Network, PowerReport};

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowProblem {
    /// Hardware and voltages; its phase shifts are ignored.
    pub base: QabConfig,
    /// Power absorbed by port 2, W.
    pub p2_load: f64,
    /// Power absorbed by port 4, W.
    pub p4_load: f64,
    /// Required source-to-source transfer power, W. Zero blocks circulation between
    /// the sources.
    pub p13_target: f64,
    /// Starting point `(delta2, delta3, delta4)`; the lossless two-port estimate
    /// is used when absent.
    pub initial_guess: Option<[f64; 3]>,
}

impl PowerFlowProblem {
    pub fn new(base: QabConfig, p2_load: f64, p4_load: f64) -> Self {
        PowerFlowProblem {
            base,
            p2_load,
            p4_load,
            p13_target: 0.0,
            initial_guess: None,
        }
    }

    /// Demands `split * p_total` at port 2 and the remainder at port 4.
    pub fn with_total(base: QabConfig, p_total: f64, split: f64) -> Self {
        Self::new(base, split * p_total, (1.0 - split) * p_total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the largest residual, W.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Central-difference step in phase-shift-ratio units.
    pub fd_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-6,
            max_iterations: 100,
            fd_step: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    /// `(0, delta2, delta3, delta4)`, each wrapped into `[-1, 1]`.
    pub delta: [f64; 4],
    pub report: PowerReport,
    /// Infinity norm of the residual, W.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PowerFlowSolution {
    /// The base configuration with the solved phase shifts applied.
    pub fn config(&self, base: &QabConfig) -> QabConfig {
        base.clone().with_delta(self.delta)
    }
}

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(
        "phase-shift solver did not converge after {} iterations (residual {:.3e} W)",
        .0.iterations,
        .0.residual_norm
    )]
    NonConvergence(Box<PowerFlowSolution>),

    #[error("power-flow Jacobian is singular at iteration {iteration}: infeasible or degenerate operating point")]
    JacobianSingular { iteration: usize },

    #[error("invalid power-flow problem: {0}")]
    InvalidProblem(String),

    #[error(transparent)]
    Model(#[from] QabError),
}

impl PowerFlowError {
    /// Best iterate when the solver ran out of iterations.
    pub fn best_iterate(&self) -> Option<&PowerFlowSolution> {
        match self {
            PowerFlowError::NonConvergence(sol) => Some(sol),
            _ => None,
        }
    }
}

/// Wraps a phase-shift ratio into `[-1, 1)`; the waveform is 2-periodic in `delta`.
pub fn wrap_ratio(d: f64) -> f64 {
    (d + 1.0).rem_euclid(2.0) - 1.0
}

pub fn solve_phase_shifts(problem: &PowerFlowProblem) -> Result<PowerFlowSolution, PowerFlowError> {
    let network = Network::new(&problem.base)?;
    solve_phase_shifts_with(problem, &network, &SolverOptions::default())
}

/// Lossless two-port estimate: each load port draws mostly through the susceptances
/// to the two in-phase sources, `P ~ 8/pi^2 V_k (V1 B_k1 + V3 B_k3) sin(phi_k)`.
pub fn initial_guess(problem: &PowerFlowProblem, network: &Network) -> [f64; 3] {
    let cfg = &problem.base;
    let y = &network.y;
    let c = 8.0 / (PI * PI);
    let estimate = |port: Port, demand: f64| {
        let k = port.index();
        let cap = c
            * cfg.v_dc[k]
            * (cfg.v_dc[0] * y.b(port, Port::P1) + cfg.v_dc[2] * y.b(port, Port::P3));
        if cap.abs() < f64::MIN_POSITIVE || demand == 0.0 {
            0.0
        } else {
            (demand / cap).clamp(-1.0, 1.0).asin() / PI
        }
    };
    [
        estimate(Port::P2, problem.p2_load),
        0.0,
        estimate(Port::P4, problem.p4_load),
    ]
}

struct Residual<'a> {
    problem: &'a PowerFlowProblem,
    network: &'a Network,
    cfg: QabConfig,
}

impl Residual<'_> {
    fn config(&self, d: &Vector3<f64>) -> QabConfig {
        let mut cfg = self.cfg.clone();
        cfg.delta = [0.0, d[0], d[1], d[2]];
        cfg
    }

    fn report(&self, d: &Vector3<f64>) -> PowerReport {
        self.network.evaluate(&self.config(d)).1
    }

    fn eval(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let r = self.report(d);
        Vector3::new(
            r.p[1] + self.problem.p2_load,
            r.p[3] + self.problem.p4_load,
            r.p13 - self.problem.p13_target,
        )
    }

    fn jacobian(&self, d: &Vector3<f64>, h: f64) -> Matrix3<f64> {
        let mut j = Matrix3::zeros();
        for c in 0..3 {
            let mut plus = *d;
            let mut minus = *d;
            plus[c] += h;
            minus[c] -= h;
            j.set_column(c, &((self.eval(&plus) - self.eval(&minus)) / (2.0 * h)));
        }
        j
    }
}

/// Damped Newton iteration with a central-difference Jacobian. When the full Newton
/// step cannot be made to reduce the residual by halving, a Levenberg-Marquardt step
/// is tried instead.
pub fn solve_phase_shifts_with(
    problem: &PowerFlowProblem,
    network: &Network,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let finite = [problem.p2_load, problem.p4_load, problem.p13_target]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(PowerFlowError::InvalidProblem(
            "demands must be finite".into(),
        ));
    }
    problem
        .base
        .check()
        .map_err(|e| PowerFlowError::Model(e.into()))?;

    let res = Residual {
        problem,
        network,
        cfg: problem.base.clone(),
    };
    let guess = problem
        .initial_guess
        .unwrap_or_else(|| initial_guess(problem, network));
    let mut d = Vector3::from(guess).map(wrap_ratio);
    let mut r = res.eval(&d);
    let mut iterations = 0;

    while r.amax() >= opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        let j = res.jacobian(&d, opts.fd_step);
        let sv = j.singular_values();
        if sv.max().is_nan() || sv.max() <= 0.0 || sv.min() < 1e-12 * sv.max() {
            return Err(PowerFlowError::JacobianSingular {
                iteration: iterations,
            });
        }
        let norm = r.norm();
        let mut accepted = None;
        if let Some(step) = j.lu().solve(&(-r)) {
            let mut alpha = 1.0;
            for _ in 0..12 {
                let cand = (d + step * alpha).map(wrap_ratio);
                let rc = res.eval(&cand);
                if rc.norm() < norm {
                    accepted = Some((cand, rc));
                    break;
                }
                alpha *= 0.5;
            }
        }
        if accepted.is_none() {
            let jtj = j.transpose() * j;
            let g = j.transpose() * r;
            let mut mu = 1e-3 * jtj.diagonal().amax();
            for _ in 0..20 {
                let damped = jtj + Matrix3::identity() * mu;
                if let Some(step) = damped.lu().solve(&(-g)) {
                    let cand = (d + step).map(wrap_ratio);
                    let rc = res.eval(&cand);
                    if rc.norm() < norm {
                        accepted = Some((cand, rc));
                        break;
                    }
                }
                mu *= 10.0;
            }
        }
        match accepted {
            Some((cand, rc)) => {
                d = cand;
                r = rc;
            }
            // stalled at a residual minimum that is not a root
            None => break,
        }
    }

    let converged = r.amax() < opts.tolerance;
    let delta = [0.0, d[0], d[1], d[2]];
    let solution = PowerFlowSolution {
        delta,
        report: res.report(&d),
        residual_norm: r.amax(),
        iterations,
        converged,
    };
    if converged {
        Ok(solution)
    } else {
        Err(PowerFlowError::NonConvergence(Box::new(solution)))
    }
}

/// Full harmonic-balance evaluation at the phase shifts held in `cfg`.
pub fn power_dispatch(cfg: &QabConfig) -> crate::error::Result<PowerReport> {
    cfg.check()?;
    Ok(Network::new(cfg)?.evaluate(cfg).1)
}
