//! Exact piecewise-LTI simulation of the converter network.
//!
//! Between switching events the bridge voltages are constant, so the state is
//! propagated in closed form with `x(t+h) = Phi(h) x + Psi(h) B u`, where both blocks come
//! from one exponential of the augmented matrix `[[A, B], [0, 0]] h`. Nothing here is
//! step-size limited; sample density only controls what gets recorded.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SMatrix};
use num_complex::Complex64;

use crate::circuit::{
    assemble_matrices, link_leakages, magnetizing_map, port_currents, winding_map,
    winding_resistances, CircuitMatrices, Matrix7, Port, QabConfig, Vector7, LINK_STATE,
};
use crate::error::{QabError, Result};
use crate::modulation::{input_vector, switching_events, Polarity, SwitchingTimeline};

type Matrix14 = SMatrix<f64, 14, 14>;

/// Minimum samples per cycle accepted by [`simulate_cycles`] and [`fundamental_phasor`].
pub const MIN_SAMPLES_PER_CYCLE: usize = 64;

/// Closed-form propagator over a fixed interval: `x(t+h) = phi x(t) + gamma u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagator {
    pub phi: Matrix7,
    pub gamma: Matrix7,
}

impl Propagator {
    pub fn new(mats: &CircuitMatrices, h: f64) -> Self {
        let mut m = Matrix14::zeros();
        m.fixed_view_mut::<7, 7>(0, 0).copy_from(&(mats.a * h));
        m.fixed_view_mut::<7, 7>(0, 7).copy_from(&(mats.b * h));
        let e = m.exp();
        Propagator {
            phi: e.fixed_view::<7, 7>(0, 0).into_owned(),
            gamma: e.fixed_view::<7, 7>(0, 7).into_owned(),
        }
    }

    pub fn apply(&self, x: &Vector7, u: &Vector7) -> Vector7 {
        self.phi * x + self.gamma * u
    }
}

/// Advances the state by `h` seconds under the constant input `u`.
pub fn step_exact(mats: &CircuitMatrices, x: &Vector7, u: &Vector7, h: f64) -> Vector7 {
    Propagator::new(mats, h).apply(x, u)
}

/// A constant-input piece of one switching period.
#[derive(Clone, Debug)]
struct Piece {
    len: f64,
    u: Vector7,
}

fn pieces_between(cfg: &QabConfig, bounds: &[f64]) -> Vec<Piece> {
    bounds
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| Piece {
            len: w[1] - w[0],
            u: input_vector(cfg, 0.5 * (w[0] + w[1])),
        })
        .collect()
}

/// The affine one-period map `x(T) = phi x(0) + gamma`.
#[derive(Clone, Debug)]
pub struct CycleMap {
    pub phi: Matrix7,
    pub gamma: Vector7,
}

pub fn cycle_map(cfg: &QabConfig, mats: &CircuitMatrices) -> CycleMap {
    let timeline = switching_events(cfg);
    let mut phi = Matrix7::identity();
    let mut gamma = Vector7::zeros();
    for piece in pieces_between(cfg, &timeline.segment_bounds()) {
        let p = Propagator::new(mats, piece.len);
        phi = p.phi * phi;
        gamma = p.phi * gamma + p.gamma * piece.u;
    }
    CycleMap { phi, gamma }
}

/// State at `t = 0` of the periodic steady state, solving `(I - Phi_T) x = Gamma_T`.
pub fn periodic_steady_state(cfg: &QabConfig) -> Result<Vector7> {
    let mats = assemble_matrices(cfg)?;
    periodic_steady_state_with(cfg, &mats)
}

pub fn periodic_steady_state_with(cfg: &QabConfig, mats: &CircuitMatrices) -> Result<Vector7> {
    let map = cycle_map(cfg, mats);
    let m = Matrix7::identity() - map.phi;
    let sv = m.singular_values();
    if sv.min() < 1e-10 * sv.max().max(1.0) {
        return Err(QabError::NoUniqueSteadyState);
    }
    m.lu()
        .solve(&map.gamma)
        .ok_or(QabError::NoUniqueSteadyState)
}

/// Long-run integration from `x0` until successive cycle-start states differ by less
/// than `rel_tol * max(1, |x|)`.
pub fn settle_by_integration(
    cfg: &QabConfig,
    mats: &CircuitMatrices,
    x0: Vector7,
    max_cycles: usize,
    rel_tol: f64,
) -> Result<Vector7> {
    let map = cycle_map(cfg, mats);
    let mut x = x0;
    for _ in 0..max_cycles {
        let next = map.phi * x + map.gamma;
        let change = (next - x).norm();
        x = next;
        if change <= rel_tol * x.norm().max(1.0) {
            return Ok(x);
        }
    }
    Err(QabError::SteadyStateNotReached { cycles: max_cycles })
}

/// Periodic steady state. When undamped directions leave the fixed point non-unique
/// (zero resistance in some current loop), those directions are pinned to a zero cycle
/// average, which is the limit of vanishing resistance.
pub fn steady_state(cfg: &QabConfig, mats: &CircuitMatrices) -> Result<Vector7> {
    match periodic_steady_state_with(cfg, mats) {
        Err(QabError::NoUniqueSteadyState) => zero_mean_steady_state(cfg, mats),
        other => other,
    }
}

/// Periodic steady state whose components along the left null space of `A` average
/// to zero over a cycle.
pub fn zero_mean_steady_state(cfg: &QabConfig, mats: &CircuitMatrices) -> Result<Vector7> {
    let map = cycle_map(cfg, mats);
    let svd = mats.a.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let s_max = svd.singular_values.max();
    let free: Vec<usize> = (0..7)
        .filter(|&k| svd.singular_values[k] <= 1e-12 * s_max)
        .collect();

    // (1/T) int_0^T int_0^t u ds dt, with u constant on each piece
    let period = cfg.period();
    let mut m = Vector7::zeros();
    let mut start = 0.0;
    for piece in pieces_between(cfg, &switching_events(cfg).segment_bounds()) {
        let end = start + piece.len;
        m += piece.u * (((period - start).powi(2) - (period - end).powi(2)) / (2.0 * period));
        start = end;
    }
    let bm = mats.b * m;

    let rows = 7 + free.len();
    let mut lhs = DMatrix::<f64>::zeros(rows, 7);
    let mut rhs = DVector::<f64>::zeros(rows);
    lhs.view_mut((0, 0), (7, 7))
        .copy_from(&(Matrix7::identity() - map.phi));
    rhs.rows_mut(0, 7).copy_from(&map.gamma);
    for (r, &k) in free.iter().enumerate() {
        let n = u.column(k);
        lhs.row_mut(7 + r).copy_from(&n.transpose());
        rhs[7 + r] = -n.dot(&bm);
    }
    let lsq = lhs.svd(true, true);
    if lsq.rank(1e-10 * lsq.singular_values.max().max(1.0)) < 7 {
        return Err(QabError::NoUniqueSteadyState);
    }
    let x = lsq
        .solve(&rhs, 0.0)
        .map_err(|_| QabError::NoUniqueSteadyState)?;
    Ok(Vector7::from_iterator(x.iter().copied()))
}

/// State at an arbitrary time `t` in `[0, T]` starting from `x0` at `t = 0`.
pub fn state_at(cfg: &QabConfig, mats: &CircuitMatrices, x0: &Vector7, t: f64) -> Vector7 {
    let timeline = switching_events(cfg);
    let mut bounds: Vec<f64> = timeline
        .segment_bounds()
        .into_iter()
        .filter(|b| *b < t)
        .collect();
    bounds.push(t);
    let mut x = *x0;
    for piece in pieces_between(cfg, &bounds) {
        x = Propagator::new(mats, piece.len).apply(&x, &piece.u);
    }
    x
}

/// State captured exactly at a switching event.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSample {
    pub time: f64,
    pub transitions: Vec<(Port, Polarity)>,
    pub x: Vector7,
}

/// Uniformly sampled waveforms over whole cycles, plus the exact state at every
/// switching event.
#[derive(Clone, Debug, Default)]
pub struct WaveformRecord {
    pub samples_per_cycle: usize,
    pub f_sw: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vector7>,
    /// Input at each sample (right-continuous).
    pub u: Vec<Vector7>,
    /// Port currents, injection convention.
    pub i_port: Vec<[f64; 4]>,
    pub i5: Vec<f64>,
    pub v_ac: Vec<f64>,
    pub switching: Vec<SwitchingSample>,
}

pub const WAVEFORM_CSV_HEADER: &str = "t,v1,v2,v3,v4,i1,i2,i3,i4,i5,vac";

impl WaveformRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Number of complete cycles held.
    pub fn cycles(&self) -> usize {
        self.len()
            .saturating_sub(1)
            .checked_div(self.samples_per_cycle)
            .unwrap_or(0)
    }

    /// Sample indices of cycle `c` (one period, endpoint excluded).
    pub fn cycle_range(&self, c: usize) -> std::ops::Range<usize> {
        let n = self.samples_per_cycle;
        c * n..(c + 1) * n
    }

    pub fn voltage(&self, port: Port) -> Vec<f64> {
        self.u.iter().map(|u| u[port.index()]).collect()
    }

    pub fn current(&self, port: Port) -> Vec<f64> {
        self.i_port.iter().map(|i| i[port.index()]).collect()
    }

    /// Mean of `v_i * i_i` over the last full cycle, watts.
    pub fn average_power(&self) -> [f64; 4] {
        let range = self.cycle_range(self.cycles().saturating_sub(1));
        let n = range.len() as f64;
        std::array::from_fn(|k| {
            range
                .clone()
                .map(|s| self.u[s][k] * self.i_port[s][k])
                .sum::<f64>()
                / n
        })
    }

    /// Fundamental phasor of an arbitrary per-sample quantity over the last full cycle.
    pub fn fundamental_of(&self, values: &[f64]) -> Result<Complex64> {
        let range = self.cycle_range(self.cycles().saturating_sub(1));
        fundamental_phasor(&self.t[range.clone()], &values[range], self.f_sw)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{WAVEFORM_CSV_HEADER}")?;
        for s in 0..self.len() {
            let u = &self.u[s];
            let i = &self.i_port[s];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.t[s], u[0], u[1], u[2], u[3], i[0], i[1], i[2], i[3], self.i5[s], self.v_ac[s]
            )?;
        }
        Ok(())
    }
}

/// Simulates `n_cycles` periods from `x0` with the default (corrected) matrices.
pub fn simulate_cycles(
    cfg: &QabConfig,
    x0: Vector7,
    n_cycles: usize,
    samples_per_cycle: usize,
) -> Result<WaveformRecord> {
    let mats = assemble_matrices(cfg)?;
    simulate_cycles_with(cfg, &mats, x0, n_cycles, samples_per_cycle)
}

pub fn simulate_cycles_with(
    cfg: &QabConfig,
    mats: &CircuitMatrices,
    x0: Vector7,
    n_cycles: usize,
    samples_per_cycle: usize,
) -> Result<WaveformRecord> {
    if samples_per_cycle < MIN_SAMPLES_PER_CYCLE {
        return Err(QabError::TooFewSamples {
            min: MIN_SAMPLES_PER_CYCLE,
            got: samples_per_cycle,
        });
    }
    if n_cycles == 0 {
        return Err(QabError::InvalidArgument(
            "at least one cycle is required".into(),
        ));
    }
    let timeline = switching_events(cfg);
    let plan = SamplePlan::new(cfg, mats, &timeline, samples_per_cycle);

    let period = cfg.period();
    let total = n_cycles * samples_per_cycle + 1;
    let mut rec = WaveformRecord {
        samples_per_cycle,
        f_sw: cfg.f_sw,
        t: Vec::with_capacity(total),
        x: Vec::with_capacity(total),
        u: Vec::with_capacity(total),
        i_port: Vec::with_capacity(total),
        i5: Vec::with_capacity(total),
        v_ac: Vec::with_capacity(total),
        switching: Vec::with_capacity(n_cycles * timeline.events.len()),
    };

    let mut x = x0;
    for c in 0..n_cycles {
        let t0 = c as f64 * period;
        for interval in &plan.intervals {
            rec.push(cfg, mats, t0 + interval.start, x, interval.u_start);
            for step in &interval.steps {
                x = plan.propagators[step.propagator].apply(&x, &step.u);
                if let Some(e) = step.ends_at_event {
                    rec.switching.push(SwitchingSample {
                        time: t0 + step.end,
                        transitions: timeline.events[e].transitions.clone(),
                        x,
                    });
                }
            }
        }
    }
    let end = n_cycles as f64 * period;
    rec.push(cfg, mats, end, x, plan.intervals[0].u_start);
    Ok(rec)
}

impl WaveformRecord {
    fn push(&mut self, cfg: &QabConfig, mats: &CircuitMatrices, t: f64, x: Vector7, u: Vector7) {
        self.t.push(t);
        self.x.push(x);
        self.u.push(u);
        self.i_port.push(port_currents(&x));
        self.i5.push(x[LINK_STATE]);
        self.v_ac.push(link_voltage(cfg, mats, &x, &u));
    }
}

struct Step {
    end: f64,
    propagator: usize,
    u: Vector7,
    ends_at_event: Option<usize>,
}

struct Interval {
    start: f64,
    u_start: Vector7,
    steps: Vec<Step>,
}

/// Per-cycle stepping schedule shared by every simulated cycle.
struct SamplePlan {
    propagators: Vec<Propagator>,
    intervals: Vec<Interval>,
}

impl SamplePlan {
    fn new(
        cfg: &QabConfig,
        mats: &CircuitMatrices,
        timeline: &SwitchingTimeline,
        samples_per_cycle: usize,
    ) -> Self {
        let period = cfg.period();
        let dt = period / samples_per_cycle as f64;
        let snap = 1e-9 * dt;
        let mut propagators = vec![Propagator::new(mats, dt)];
        let mut intervals = Vec::with_capacity(samples_per_cycle);

        // an event on a sample time (t = 0 wraps to T) is attached to the preceding step
        let event_at = |t: f64| {
            timeline
                .events
                .iter()
                .position(|e| (e.time - t).abs() <= snap || (e.time + period - t).abs() <= snap)
        };

        for k in 0..samples_per_cycle {
            let a = k as f64 * dt;
            let b = (k + 1) as f64 * dt;
            let inner: Vec<(usize, f64)> = timeline
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.time > a + snap && e.time < b - snap)
                .map(|(i, e)| (i, e.time))
                .collect();
            let mut cuts = vec![a];
            cuts.extend(inner.iter().map(|(_, t)| *t));
            cuts.push(b);

            let mut steps = Vec::with_capacity(cuts.len() - 1);
            for (j, w) in cuts.windows(2).enumerate() {
                let len = w[1] - w[0];
                let propagator = if inner.is_empty() {
                    0
                } else {
                    propagators.push(Propagator::new(mats, len));
                    propagators.len() - 1
                };
                let ends_at_event = if j < inner.len() {
                    Some(inner[j].0)
                } else {
                    event_at(b)
                };
                steps.push(Step {
                    end: w[1],
                    propagator,
                    u: input_vector(cfg, 0.5 * (w[0] + w[1])),
                    ends_at_event,
                });
            }
            intervals.push(Interval {
                start: a,
                u_start: input_vector(cfg, a + 0.5 * (cuts[1] - a)),
                steps,
            });
        }

        SamplePlan {
            propagators,
            intervals,
        }
    }
}

/// Which link-side winding the link-voltage KVL walks through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkBranch {
    Transformer2,
    Transformer4,
}

/// AC-link voltage by KVL from a magnetizing node through the link-side winding of
/// transformer 2: `v_ac = e2 - R21 s2 - L21 ds2/dt`, with `e2 = Lm2 d(i_m2)/dt` and the
/// derivatives taken from `A x + B u`.
pub fn link_voltage(cfg: &QabConfig, mats: &CircuitMatrices, x: &Vector7, u: &Vector7) -> f64 {
    link_voltage_via(cfg, mats, x, u, LinkBranch::Transformer2)
}

pub fn link_voltage_via(
    cfg: &QabConfig,
    mats: &CircuitMatrices,
    x: &Vector7,
    u: &Vector7,
    branch: LinkBranch,
) -> f64 {
    let t = match branch {
        LinkBranch::Transformer2 => 1,
        LinkBranch::Transformer4 => 3,
    };
    let dx = mats.a * x + mats.b * u;
    let k = winding_map();
    let m = magnetizing_map();
    let s = (k.row(t + 4) * x)[0];
    let ds = (k.row(t + 4) * dx)[0];
    let dim = (m.row(t) * dx)[0];
    let r = winding_resistances(cfg)[t + 4];
    let l = link_leakages(cfg)[t];
    cfg.l_mag[t] * dim - r * s - l * ds
}

/// Bin-1 Fourier coefficient of one full period of uniformly spaced samples, in the
/// sine-reference convention: `A sin(w t - phi)` maps to `A e^{-j phi}`.
pub fn fundamental_phasor(times: &[f64], values: &[f64], f_sw: f64) -> Result<Complex64> {
    let n = values.len();
    if n < MIN_SAMPLES_PER_CYCLE {
        return Err(QabError::TooFewSamples {
            min: MIN_SAMPLES_PER_CYCLE,
            got: n,
        });
    }
    if times.len() != n {
        return Err(QabError::WrongWindowLength {
            reason: format!("{} times for {} samples", times.len(), n),
        });
    }
    let period = 1.0 / f_sw;
    let dt = period / n as f64;
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(QabError::WrongWindowLength {
                reason: format!(
                    "spacing {:e} s at sample {k} does not tile one period with {n} samples",
                    w[1] - w[0]
                ),
            });
        }
    }
    let omega = 2.0 * std::f64::consts::PI * f_sw;
    let acc: Complex64 = times
        .iter()
        .zip(values)
        .map(|(&t, &v)| v * Complex64::from_polar(1.0, -omega * t))
        .sum();
    Ok(acc * Complex64::new(0.0, 2.0 / n as f64))
}
