//! Fundamental-frequency (first harmonic) model of the converter.
//!
//! Phasors hold peak amplitudes in the sine reference: `A e^{j theta}` stands for
//! `A sin(w t + theta)`. Bridge `i` therefore has `v_hat = (4 V_i / pi) e^{-j delta_i pi}`
//! and powers are `P + jQ = v_hat conj(i_hat) / 2`. All port currents and powers use
//! the injection convention: positive out of the bridge into the AC network.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::circuit::{
    assemble_matrices, link_leakages, magnetizing_map, winding_map, winding_resistances,
    CircuitMatrices, Port, QabConfig, LINK_STATE, PORT_ORIENTATION, PORT_STATE,
};
use crate::error::{QabError, Result};

pub type Matrix7c = SMatrix<Complex64, 7, 7>;
pub type Vector7c = SVector<Complex64, 7>;
pub type Matrix4c = SMatrix<Complex64, 4, 4>;

/// `Z = j w A_L + A_R`.
pub fn impedance_matrix(mats: &CircuitMatrices, f_sw: f64) -> Matrix7c {
    let w = 2.0 * PI * f_sw;
    Matrix7c::from_fn(|r, c| Complex64::new(mats.a_r[(r, c)], w * mats.a_l[(r, c)]))
}

/// `Y_f = Z^-1`.
pub fn full_admittance(z: &Matrix7c) -> Result<Matrix7c> {
    z.lu().try_inverse().ok_or(QabError::SingularImpedance)
}

/// 4x4 port admittance relating injection-convention port currents to the bridge
/// voltages: `i_hat = y v_hat`.
#[derive(Clone, Debug, PartialEq)]
pub struct PortAdmittance {
    pub y: Matrix4c,
}

impl PortAdmittance {
    pub fn entry(&self, i: Port, j: Port) -> Complex64 {
        self.y[(i.index(), j.index())]
    }

    /// Conductance `G_ij`.
    pub fn g(&self, i: Port, j: Port) -> f64 {
        self.entry(i, j).re
    }

    /// Susceptance `B_ij`.
    pub fn b(&self, i: Port, j: Port) -> f64 {
        self.entry(i, j).im
    }
}

/// Takes rows 1, 3, 4, 6 (the bridge-current states I11, I22, I31, I42) and columns 1-4
/// (v1..v4) of `Y_f`. Rows whose state is referenced into the bridge are negated so
/// every row yields an injection current.
pub fn port_admittance(y_f: &Matrix7c) -> PortAdmittance {
    PortAdmittance {
        y: Matrix4c::from_fn(|r, c| y_f[(PORT_STATE[r], c)] * PORT_ORIENTATION[r]),
    }
}

pub fn port_voltage_phasors(cfg: &QabConfig) -> [Complex64; 4] {
    std::array::from_fn(|i| Complex64::from_polar(4.0 * cfg.v_dc[i] / PI, -cfg.delta[i] * PI))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortPhasors {
    pub v_hat: [Complex64; 4],
    /// Injection-convention port currents.
    pub i_hat: [Complex64; 4],
    /// All seven state phasors, in state orientation.
    pub x_hat: Vector7c,
}

impl PortPhasors {
    pub fn link_current(&self) -> Complex64 {
        self.x_hat[LINK_STATE]
    }
}

pub fn port_current_phasors(
    y: &PortAdmittance,
    v_hat: &[Complex64; 4],
    y_f: &Matrix7c,
) -> PortPhasors {
    let v = SVector::<Complex64, 4>::from_column_slice(v_hat);
    let i = y.y * v;
    let mut u = Vector7c::zeros();
    u.fixed_rows_mut::<4>(0).copy_from(&v);
    PortPhasors {
        v_hat: *v_hat,
        i_hat: std::array::from_fn(|k| i[k]),
        x_hat: y_f * u,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerReport {
    /// Active power per port, W, injection-positive.
    pub p: [f64; 4],
    /// Reactive power per port, var, injection-positive.
    pub q: [f64; 4],
    /// Source-to-source transfer power, W.
    pub p13: f64,
    /// Total winding loss at the fundamental, W.
    pub p_copper: f64,
    /// Fundamental current amplitude per port, A.
    pub i_peak: [f64; 4],
}

impl PowerReport {
    pub fn net_injected(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Winding current phasors in [`crate::circuit::WINDING_NAMES`] order.
pub fn winding_current_phasors(x_hat: &Vector7c) -> [Complex64; 8] {
    let k = winding_map().map(Complex64::from);
    let w = k * x_hat;
    std::array::from_fn(|r| w[r])
}

pub fn port_powers(phasors: &PortPhasors, y: &PortAdmittance, cfg: &QabConfig) -> PowerReport {
    let s: [Complex64; 4] =
        std::array::from_fn(|k| 0.5 * phasors.v_hat[k] * phasors.i_hat[k].conj());
    let r = winding_resistances(cfg);
    let p_copper = winding_current_phasors(&phasors.x_hat)
        .iter()
        .zip(r)
        .map(|(i, r)| 0.5 * r * i.norm_sqr())
        .sum();
    PowerReport {
        p: s.map(|s| s.re),
        q: s.map(|s| s.im),
        p13: source_transfer_power(cfg, y),
        p_copper,
        i_peak: phasors.i_hat.map(|i| i.norm()),
    }
}

/// Port power written out term by term as
/// `8 V_i^2 G_ii / pi^2 + sum_j 8 V_i V_j / pi^2 (G_ij cos(phi_j - phi_i) + B_ij sin(phi_j - phi_i))`.
pub fn expanded_port_power(cfg: &QabConfig, y: &PortAdmittance, port: Port) -> f64 {
    let c = 8.0 / (PI * PI);
    let vi = cfg.v_dc[port.index()];
    let phi_i = cfg.phase(port);
    let mut p = c * vi * vi * y.g(port, port);
    for other in Port::ALL.into_iter().filter(|&j| j != port) {
        let d = cfg.phase(other) - phi_i;
        let vj = cfg.v_dc[other.index()];
        p += c * vi * vj * (y.g(port, other) * d.cos() + y.b(port, other) * d.sin());
    }
    p
}

/// Power exchanged between the two source ports through `Y_13`:
/// `P13 = 8 V1 V3 / pi^2 (G13 cos(phi3 - phi1) + B13 sin(phi3 - phi1))`.
pub fn source_transfer_power(cfg: &QabConfig, y: &PortAdmittance) -> f64 {
    let d = cfg.phase(Port::P3) - cfg.phase(Port::P1);
    8.0 * cfg.v_dc[0] * cfg.v_dc[2] / (PI * PI)
        * (y.g(Port::P1, Port::P3) * d.cos() + y.b(Port::P1, Port::P3) * d.sin())
}

/// Fundamental port current at time `t`,
/// `4/pi sum_j |Y_ij| V_j sin(w t + angle(Y_ij) - phi_j)`.
pub fn instantaneous_port_current(cfg: &QabConfig, y: &PortAdmittance, port: Port, t: f64) -> f64 {
    let wt = cfg.omega() * t;
    let sum: f64 = Port::ALL
        .iter()
        .map(|&j| {
            let yij = y.entry(port, j);
            yij.norm() * cfg.v_dc[j.index()] * (wt + yij.arg() - cfg.phase(j)).sin()
        })
        .sum();
    4.0 / PI * sum
}

/// Link voltage phasor by the same KVL as the time-domain model, through transformer
/// 2's link-side winding.
pub fn link_voltage_phasor(cfg: &QabConfig, x_hat: &Vector7c) -> Complex64 {
    let jw = Complex64::new(0.0, cfg.omega());
    let t = 1;
    let im = (magnetizing_map().map(Complex64::from) * x_hat)[t];
    let s = winding_current_phasors(x_hat)[t + 4];
    let r = winding_resistances(cfg)[t + 4];
    let l = link_leakages(cfg)[t];
    jw * cfg.l_mag[t] * im - s * (r + jw * l)
}

/// The phase-independent part of the model: matrices and admittances depend only on
/// the network and switching frequency.
#[derive(Clone, Debug)]
pub struct Network {
    pub mats: CircuitMatrices,
    pub y_f: Matrix7c,
    pub y: PortAdmittance,
}

impl Network {
    pub fn new(cfg: &QabConfig) -> Result<Self> {
        Self::from_matrices(assemble_matrices(cfg)?, cfg.f_sw)
    }

    pub fn from_matrices(mats: CircuitMatrices, f_sw: f64) -> Result<Self> {
        let y_f = full_admittance(&impedance_matrix(&mats, f_sw))?;
        let y = port_admittance(&y_f);
        Ok(Network { mats, y_f, y })
    }

    /// Phasors and powers at the voltages and phase shifts of `cfg`.
    pub fn evaluate(&self, cfg: &QabConfig) -> (PortPhasors, PowerReport) {
        let phasors = port_current_phasors(&self.y, &port_voltage_phasors(cfg), &self.y_f);
        let report = port_powers(&phasors, &self.y, cfg);
        (phasors, report)
    }
}
