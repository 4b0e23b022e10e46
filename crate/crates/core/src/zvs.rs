//! Zero-voltage-switching checks.
//!
//! Bridge `i` turns on at `t = delta_i T_h`. Source bridges (1, 3) need a negative
//! injected current at that instant, load bridges (2, 4) a positive one. A current of
//! exactly zero counts as hard switching.

use crate::circuit::{assemble_matrices, port_currents, Port, QabConfig};
use crate::error::Result;
use crate::harmonic_balance::{
    instantaneous_port_current, port_voltage_phasors, Network, PortAdmittance,
};
use crate::timedomain::{simulate_cycles_with, state_at, steady_state};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZvsReport {
    /// Injected port current at each turn-on instant, A.
    pub i_sw: [f64; 4],
    pub zvs: [bool; 4],
    /// Signed distance from the boundary, A; positive inside the ZVS region.
    pub margin: [f64; 4],
    /// Fundamental reactive power, var.
    pub q: [f64; 4],
}

impl ZvsReport {
    pub fn from_currents(i_sw: [f64; 4], q: [f64; 4]) -> Self {
        let margin: [f64; 4] = std::array::from_fn(|k| {
            if Port::ALL[k].is_source() {
                -i_sw[k]
            } else {
                i_sw[k]
            }
        });
        ZvsReport {
            i_sw,
            zvs: margin.map(|m| m > 0.0),
            margin,
            q,
        }
    }

    /// Verdict predicted by the reactive-power sign: `q > 0` at the sources and
    /// `q < 0` at the loads.
    pub fn reactive_verdict(&self, port: Port) -> bool {
        let q = self.q[port.index()];
        if port.is_source() {
            q > 0.0
        } else {
            q < 0.0
        }
    }
}

/// Fundamental port current at the turn-on instant of `port`.
pub fn switching_current(cfg: &QabConfig, y: &PortAdmittance, port: Port) -> f64 {
    instantaneous_port_current(cfg, y, port, cfg.switching_instant(port))
}

pub fn zvs_check(cfg: &QabConfig) -> Result<ZvsReport> {
    let network = Network::new(cfg)?;
    Ok(zvs_check_with(cfg, &network))
}

pub fn zvs_check_with(cfg: &QabConfig, network: &Network) -> ZvsReport {
    let (_, report) = network.evaluate(cfg);
    let i_sw = Port::ALL.map(|p| switching_current(cfg, &network.y, p));
    ZvsReport::from_currents(i_sw, report.q)
}

/// Samples per cycle used for the time-domain reactive power.
const TD_SAMPLES: usize = 2048;

/// Same check on the full-harmonic periodic steady state. Currents are read at the
/// exact turn-on instants; `q` uses the sampled current fundamental against the
/// ideal square-wave voltage fundamental.
pub fn zvs_check_timedomain(cfg: &QabConfig) -> Result<ZvsReport> {
    cfg.check()?;
    let mats = assemble_matrices(cfg)?;
    let x0 = steady_state(cfg, &mats)?;
    let period = cfg.period();
    let i_sw = Port::ALL.map(|p| {
        let t = cfg.switching_instant(p).rem_euclid(period);
        port_currents(&state_at(cfg, &mats, &x0, t))[p.index()]
    });
    let record = simulate_cycles_with(cfg, &mats, x0, 1, TD_SAMPLES)?;
    let v_hat = port_voltage_phasors(cfg);
    let mut q = [0.0; 4];
    for p in Port::ALL {
        let i_hat = record.fundamental_of(&record.current(p))?;
        q[p.index()] = (0.5 * v_hat[p.index()] * i_hat.conj()).im;
    }
    Ok(ZvsReport::from_currents(i_sw, q))
}
