//! Converter description and the 7-state inductance/resistance model.
//!
//! State ordering is fixed as `x = [I11, I21, I22, I31, I32, I42, I5]`:
//!
//! * `I11`, `I31` are the bridge currents of ports 1 and 3, positive out of the bridge;
//! * `I22`, `I42` are the bridge currents of ports 2 and 4, positive *into* the bridge
//!   (the orientation implied by the mesh equations), see [`PORT_ORIENTATION`];
//! * `I21`, `I32`, `I5` are the mesh currents of the paralleled link-side windings
//!   (loops T1-T2, T3-T4 and T1-T4 respectively).
//!
//! The network obeys `A_L x' + A_R x = u` with `u = [v1, v2, v3, v4, 0, 0, 0]`, so
//! `A = -A_L^-1 A_R` and `B = A_L^-1`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, QabError, Result, Violation};

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SVector<f64, 7>;

/// Magnetizing inductance used when a parameter set does not provide one, henries.
pub const DEFAULT_MAGNETIZING_INDUCTANCE: f64 = 1.0e-3;

/// State index of each port's bridge current.
pub const PORT_STATE: [usize; 4] = [0, 2, 3, 5];

/// Sign mapping a port's state current onto the injection convention
/// (positive out of the bridge into the AC network).
pub const PORT_ORIENTATION: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// Index of the link current `I5` in the state vector.
pub const LINK_STATE: usize = 6;

/// Names of the eight windings in the order used by [`winding_map`].
pub const WINDING_NAMES: [&str; 8] = ["R11", "R22", "R31", "R42", "R12", "R21", "R32", "R41"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    P1,
    P2,
    P3,
    P4,
}

impl Port {
    pub const ALL: [Port; 4] = [Port::P1, Port::P2, Port::P3, Port::P4];

    /// Zero-based index.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based port number as used in reports.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn from_number(n: usize) -> Option<Port> {
        Port::ALL.get(n.wrapping_sub(1)).copied()
    }

    /// Ports 1 and 3 are the source ports.
    pub fn is_source(self) -> bool {
        matches!(self, Port::P1 | Port::P3)
    }
}

/// Winding index `w` (0 or 1) of transformer `i` that faces the bridge.
///
/// Bridge-side windings are L11, L22, L31, L42; link-side ones are L12, L21, L32, L41.
pub fn bridge_winding(transformer: usize) -> usize {
    match transformer {
        0 | 2 => 0,
        _ => 1,
    }
}

pub fn link_winding(transformer: usize) -> usize {
    1 - bridge_winding(transformer)
}

/// A validated converter description. All magnetic and resistive values are referred
/// to the primary side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QabConfig {
    /// DC port voltages V1..V4, volts.
    pub v_dc: [f64; 4],
    /// Phase-shift ratios, each in [-1, 1]; the bridge shift is `delta * pi`.
    pub delta: [f64; 4],
    /// `l_leak[i][w]` is the leakage of transformer `i+1`, winding `w+1` (L11..L42), henries.
    pub l_leak: [[f64; 2]; 4],
    /// Magnetizing inductances Lm1..Lm4, henries.
    pub l_mag: [f64; 4],
    /// `r_wind[i][w]` is the resistance of winding `(i+1)(w+1)` (R11..R42), ohms.
    pub r_wind: [[f64; 2]; 4],
    /// Turns ratios n1..n4.
    pub turns: [f64; 4],
    /// Switching frequency, hertz.
    pub f_sw: f64,
}

/// Raw parameter set before validation. `l_mag` may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QabParameters {
    pub v_dc: [f64; 4],
    pub delta: [f64; 4],
    pub l_leak: [[f64; 2]; 4],
    pub l_mag: Option<[f64; 4]>,
    pub r_wind: [[f64; 2]; 4],
    pub turns: [f64; 4],
    pub f_sw: f64,
}

impl QabParameters {
    /// Table I of the reference hardware: 200/180/220/250 V, 238 uH and 38 uH leakages,
    /// 0.4 and 0.2 ohm windings, n = 2, 25 kHz. Magnetizing inductance is left unset.
    pub fn table_one() -> Self {
        QabParameters {
            v_dc: [200.0, 180.0, 220.0, 250.0],
            delta: [0.0, 0.4560, 0.0063, 0.4380],
            l_leak: [
                [238e-6, 38e-6],
                [38e-6, 238e-6],
                [238e-6, 38e-6],
                [38e-6, 238e-6],
            ],
            l_mag: None,
            r_wind: [[0.4, 0.2], [0.2, 0.4], [0.4, 0.2], [0.2, 0.4]],
            turns: [2.0; 4],
            f_sw: 25e3,
        }
    }
}

/// Checks a raw parameter set and fills the magnetizing inductance default.
pub fn validate_config(raw: QabParameters) -> Result<QabConfig, ConfigError> {
    let cfg = QabConfig {
        v_dc: raw.v_dc,
        delta: raw.delta,
        l_leak: raw.l_leak,
        l_mag: raw.l_mag.unwrap_or([DEFAULT_MAGNETIZING_INDUCTANCE; 4]),
        r_wind: raw.r_wind,
        turns: raw.turns,
        f_sw: raw.f_sw,
    };
    cfg.check()?;
    Ok(cfg)
}

impl QabConfig {
    /// Table I hardware with the default 1 mH magnetizing inductance.
    pub fn table_one() -> Self {
        validate_config(QabParameters::table_one()).expect("table I parameters are valid")
    }

    /// Table I transformer with the low-power test point: 30.86/26.07/30.72/27.3 V and
    /// phase-shift ratios 0/0.0314/0.0053/0.030.
    pub fn low_power_experiment() -> Self {
        let mut cfg = Self::table_one();
        cfg.v_dc = [30.86, 26.07, 30.72, 27.3];
        cfg.delta = [0.0, 0.0314, 0.0053, 0.030];
        cfg
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        #[derive(Clone, Copy)]
        enum Kind {
            Voltage,
            Delta,
            Inductance,
            Resistance,
            Turns,
            Frequency,
        }
        let mut fields: Vec<(String, f64, Kind)> = Vec::with_capacity(37);
        for i in 0..4 {
            fields.push((format!("v{}", i + 1), self.v_dc[i], Kind::Voltage));
        }
        for i in 0..4 {
            fields.push((format!("delta{}", i + 1), self.delta[i], Kind::Delta));
        }
        for i in 0..4 {
            for w in 0..2 {
                fields.push((
                    format!("l{}{}", i + 1, w + 1),
                    self.l_leak[i][w],
                    Kind::Inductance,
                ));
            }
        }
        for i in 0..4 {
            fields.push((format!("lm{}", i + 1), self.l_mag[i], Kind::Inductance));
        }
        for i in 0..4 {
            for w in 0..2 {
                fields.push((
                    format!("r{}{}", i + 1, w + 1),
                    self.r_wind[i][w],
                    Kind::Resistance,
                ));
            }
        }
        for i in 0..4 {
            fields.push((format!("n{}", i + 1), self.turns[i], Kind::Turns));
        }
        fields.push(("fs".to_string(), self.f_sw, Kind::Frequency));

        let mut violations = Vec::new();
        for (k, (name, value, kind)) in fields.into_iter().enumerate() {
            if !value.is_finite() {
                violations.push(Violation::NonFinite { name });
                continue;
            }
            let v = match kind {
                Kind::Voltage if value < 0.0 => Violation::NegativeVoltage { name, value },
                Kind::Delta if value.abs() > 1.0 => {
                    Violation::PhaseShiftOutOfRange { port: k - 3, value }
                }
                Kind::Inductance if value <= 0.0 => {
                    Violation::NonPositiveInductance { name, value }
                }
                Kind::Resistance if value < 0.0 => Violation::NegativeResistance { name, value },
                Kind::Turns if value <= 0.0 => Violation::NonPositiveTurns { name, value },
                Kind::Frequency if value <= 0.0 => Violation::NonPositiveFrequency { value },
                _ => continue,
            };
            violations.push(v);
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { violations })
        }
    }

    /// Angular switching frequency, rad/s.
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_sw
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_sw
    }

    /// Half the switching period, `T_h`.
    pub fn half_period(&self) -> f64 {
        0.5 / self.f_sw
    }

    /// Bridge phase angle `phi_i = delta_i * pi`, radians.
    pub fn phase(&self, port: Port) -> f64 {
        self.delta[port.index()] * std::f64::consts::PI
    }

    /// Switching instant `delta_i * T_h` of a port (may be negative).
    pub fn switching_instant(&self, port: Port) -> f64 {
        self.delta[port.index()] * self.half_period()
    }

    pub fn with_delta(mut self, delta: [f64; 4]) -> Self {
        self.delta = delta;
        self
    }

    /// Copy with every inductance scaled by `k`.
    pub fn scale_inductances(mut self, k: f64) -> Self {
        for row in &mut self.l_leak {
            for l in row {
                *l *= k;
            }
        }
        for l in &mut self.l_mag {
            *l *= k;
        }
        self
    }

    pub fn lossless(mut self) -> Self {
        self.r_wind = [[0.0; 2]; 4];
        self
    }
}

/// Refers a secondary-side inductance or resistance to the primary through turns ratio `n`.
/// Never applied implicitly; configuration values are taken as already referred.
pub fn refer_to_primary(secondary_value: f64, turns: f64) -> f64 {
    turns * turns * secondary_value
}

/// DC conversion ratio `m_i = (n_1 V_i) / (n_i V_1)`.
pub fn conversion_ratio(cfg: &QabConfig, port: Port) -> Result<f64> {
    let i = port.index();
    let denom = cfg.turns[i] * cfg.v_dc[0];
    if denom == 0.0 {
        return Err(QabError::DivisionByZero("conversion ratio needs V1 > 0"));
    }
    Ok(cfg.turns[0] * cfg.v_dc[i] / denom)
}

/// Which transcription of the inductance/resistance matrices to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MatrixForm {
    /// Entry-for-entry transcription of the published matrices. Not passive: rows 2, 4
    /// and 7 carry sign and index errors, and the resulting `A` has unstable modes.
    AsPrinted,
    /// Same loops and current references, with the five inconsistent entries re-derived
    /// from the T-equivalent circuit (`A_R[1][2]`, `A_L[3][5]`, `A_L[6][2]`, `A_L[6][4]`,
    /// `A_R[6][1]`).
    #[default]
    Corrected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitMatrices {
    /// Inductance matrix, henries.
    pub a_l: Matrix7,
    /// Resistance matrix, ohms.
    pub a_r: Matrix7,
    /// State matrix `-A_L^-1 A_R`, 1/s.
    pub a: Matrix7,
    /// Input matrix `A_L^-1`, 1/H.
    pub b: Matrix7,
    pub form: MatrixForm,
}

/// Builds the corrected (passive) matrices.
pub fn assemble_matrices(cfg: &QabConfig) -> Result<CircuitMatrices> {
    assemble_matrices_with(cfg, MatrixForm::Corrected)
}

pub fn assemble_matrices_with(cfg: &QabConfig, form: MatrixForm) -> Result<CircuitMatrices> {
    let (a_l, a_r) = match form {
        MatrixForm::AsPrinted => printed_entries(cfg),
        MatrixForm::Corrected => corrected_entries(cfg),
    };

    let sv = a_l.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if condition.is_nan() || condition > 1e12 {
        return Err(QabError::SingularInductanceMatrix { condition });
    }
    let b = a_l
        .lu()
        .try_inverse()
        .ok_or(QabError::SingularInductanceMatrix { condition })?;
    let a = -(b * a_r);
    Ok(CircuitMatrices {
        a_l,
        a_r,
        a,
        b,
        form,
    })
}

struct Named {
    l11: f64,
    l12: f64,
    l21: f64,
    l22: f64,
    l31: f64,
    l32: f64,
    l41: f64,
    l42: f64,
    lm1: f64,
    lm2: f64,
    lm3: f64,
    lm4: f64,
    r11: f64,
    r12: f64,
    r21: f64,
    r22: f64,
    r31: f64,
    r32: f64,
    r41: f64,
    r42: f64,
}

impl Named {
    fn of(cfg: &QabConfig) -> Self {
        let l = &cfg.l_leak;
        let r = &cfg.r_wind;
        let m = &cfg.l_mag;
        Named {
            l11: l[0][0],
            l12: l[0][1],
            l21: l[1][0],
            l22: l[1][1],
            l31: l[2][0],
            l32: l[2][1],
            l41: l[3][0],
            l42: l[3][1],
            lm1: m[0],
            lm2: m[1],
            lm3: m[2],
            lm4: m[3],
            r11: r[0][0],
            r12: r[0][1],
            r21: r[1][0],
            r22: r[1][1],
            r31: r[2][0],
            r32: r[2][1],
            r41: r[3][0],
            r42: r[3][1],
        }
    }
}

#[rustfmt::skip]
fn printed_entries(cfg: &QabConfig) -> (Matrix7, Matrix7) {
    let p = Named::of(cfg);
    let al11 = p.l11 + p.lm1;
    let al23 = -(p.lm2 + p.l22);
    let al34 = p.l31 + p.lm3;
    let al46 = p.l41 + p.lm4;
    let al52 = -(p.l12 + p.lm1 + p.lm2 + p.l21);
    let al72 = -(p.l21 + p.lm2);
    let al65 = -(p.lm3 + p.lm4 + p.l32 + p.l41);
    let al75 = -(p.lm4 + p.l42);
    let a_l = Matrix7::from_row_slice(&[
        al11,   -p.lm1, 0.0,   0.0,    0.0,    0.0,    -p.lm1,
        0.0,    p.lm2,  al23,  0.0,    0.0,    0.0,    0.0,
        0.0,    0.0,    0.0,   al34,   -p.lm3, 0.0,    0.0,
        0.0,    0.0,    0.0,   0.0,    p.lm4,  al46,   p.lm4,
        p.lm1,  al52,   p.lm2, 0.0,    0.0,    0.0,    -(p.lm1 + p.l12),
        0.0,    0.0,    0.0,   p.lm3,  al65,   p.lm4,  -(p.lm4 + p.l41),
        0.0,    al72,   0.0,   0.0,    al75,   -p.lm4, p.l41 + p.lm4,
    ]);
    let a_r = Matrix7::from_row_slice(&[
        p.r11, 0.0,                0.0,   0.0,   0.0,                0.0,     0.0,
        0.0,   0.0,                p.r22, 0.0,   0.0,                0.0,     0.0,
        0.0,   0.0,                0.0,   p.r31, 0.0,                0.0,     0.0,
        0.0,   0.0,                0.0,   0.0,   0.0,                -p.r42,  0.0,
        0.0,   -(p.r12 + p.r21),   0.0,   0.0,   0.0,                0.0,     -p.r12,
        0.0,   0.0,                0.0,   0.0,   -(p.r32 + p.r41),   0.0,     -p.r41,
        0.0,   p.r21,              0.0,   0.0,   p.r41,              0.0,     p.r41,
    ]);
    (a_l, a_r)
}

fn corrected_entries(cfg: &QabConfig) -> (Matrix7, Matrix7) {
    let p = Named::of(cfg);
    let (mut a_l, mut a_r) = printed_entries(cfg);
    // Port 2 KVL: the resistive drop has the same sign as the inductive one.
    a_r[(1, 2)] = -p.r22;
    // Port 4 KVL: bridge-side leakage is L42, referenced into the bridge like R42.
    a_l[(3, 5)] = -(p.l42 + p.lm4);
    // T2-T4 link loop: Lm2 couples I22, and the loop runs through L41 in the I32 sense.
    a_l[(6, 2)] = p.lm2;
    a_l[(6, 4)] = p.lm4 + p.l41;
    a_r[(6, 1)] = -p.r21;
    (a_l, a_r)
}

/// Maps the state onto the eight winding currents, ordered as [`WINDING_NAMES`].
///
/// The first four are the bridge-side winding currents in the injection convention;
/// the last four are the link-side currents flowing from each magnetizing node
/// towards the common link node:
/// `s1 = I21 + I5`, `s2 = -I21`, `s3 = I32`, `s4 = -(I32 + I5)`.
#[rustfmt::skip]
pub fn winding_map() -> SMatrix<f64, 8, 7> {
    SMatrix::<f64, 8, 7>::from_row_slice(&[
        1.0, 0.0,  0.0, 0.0, 0.0,  0.0, 0.0,
        0.0, 0.0, -1.0, 0.0, 0.0,  0.0, 0.0,
        0.0, 0.0,  0.0, 1.0, 0.0,  0.0, 0.0,
        0.0, 0.0,  0.0, 0.0, 0.0, -1.0, 0.0,
        0.0, 1.0,  0.0, 0.0, 0.0,  0.0, 1.0,
        0.0, -1.0, 0.0, 0.0, 0.0,  0.0, 0.0,
        0.0, 0.0,  0.0, 0.0, 1.0,  0.0, 0.0,
        0.0, 0.0,  0.0, 0.0, -1.0, 0.0, -1.0,
    ])
}

/// Magnetizing branch currents `i_m = (bridge-side current) - (link-side current)`.
pub fn magnetizing_map() -> SMatrix<f64, 4, 7> {
    let k = winding_map();
    SMatrix::<f64, 4, 7>::from_fn(|r, c| k[(r, c)] - k[(r + 4, c)])
}

/// Resistances in [`WINDING_NAMES`] order.
pub fn winding_resistances(cfg: &QabConfig) -> [f64; 8] {
    let mut out = [0.0; 8];
    for t in 0..4 {
        out[t] = cfg.r_wind[t][bridge_winding(t)];
        out[t + 4] = cfg.r_wind[t][link_winding(t)];
    }
    out
}

/// Link-side leakage inductances of transformers 1..4 (L12, L21, L32, L41).
pub fn link_leakages(cfg: &QabConfig) -> [f64; 4] {
    std::array::from_fn(|t| cfg.l_leak[t][link_winding(t)])
}

/// Port currents in the injection convention.
pub fn port_currents(x: &Vector7) -> [f64; 4] {
    std::array::from_fn(|k| PORT_ORIENTATION[k] * x[PORT_STATE[k]])
}
