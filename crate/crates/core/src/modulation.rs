//! Single-phase-shift square-wave bridge voltages.
//!
//! Bridge `i` outputs `+V_i` while `(t - delta_i * T_h) mod T` lies in `[0, T_h)` and
//! `-V_i` otherwise, so its fundamental is `(4 V_i / pi) sin(w t - delta_i pi)`.
//! Waveforms are right-continuous: a transition instant carries the new polarity.

use crate::circuit::{Port, QabConfig, Vector7};

pub fn bridge_voltage(cfg: &QabConfig, port: Port, t: f64) -> f64 {
    let i = port.index();
    let period = cfg.period();
    let phase = (t - cfg.switching_instant(port)).rem_euclid(period);
    if phase < cfg.half_period() {
        cfg.v_dc[i]
    } else {
        -cfg.v_dc[i]
    }
}

/// The input vector `u = [v1, v2, v3, v4, 0, 0, 0]` at time `t`.
pub fn input_vector(cfg: &QabConfig, t: f64) -> Vector7 {
    let mut u = Vector7::zeros();
    for port in Port::ALL {
        u[port.index()] = bridge_voltage(cfg, port, t);
    }
    u
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingEvent {
    /// Time within `[0, T)`.
    pub time: f64,
    /// Ports switching at this instant, with the polarity each takes afterwards.
    pub transitions: Vec<(Port, Polarity)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingTimeline {
    pub period: f64,
    /// Sorted by time; coincident transitions share one event.
    pub events: Vec<SwitchingEvent>,
}

impl SwitchingTimeline {
    /// Boundaries of the constant-input segments covering `[0, T]`, including both ends.
    pub fn segment_bounds(&self) -> Vec<f64> {
        let mut bounds = Vec::with_capacity(self.events.len() + 2);
        bounds.push(0.0);
        for e in &self.events {
            if e.time > 0.0 {
                bounds.push(e.time);
            }
        }
        bounds.push(self.period);
        bounds
    }

    /// The rising-edge (switching-instant) event time of `port`.
    pub fn rising_edge(&self, port: Port) -> Option<f64> {
        self.events.iter().find_map(|e| {
            e.transitions
                .iter()
                .any(|&(p, pol)| p == port && pol == Polarity::Positive)
                .then_some(e.time)
        })
    }
}

/// Relative tolerance (of the period) under which two transitions are merged.
const MERGE_TOLERANCE: f64 = 1e-12;

pub fn switching_events(cfg: &QabConfig) -> SwitchingTimeline {
    let period = cfg.period();
    let half = cfg.half_period();
    let wrap = |t: f64| {
        let w = t.rem_euclid(period);
        // rem_euclid can round up to exactly `period`
        if w >= period * (1.0 - MERGE_TOLERANCE) || w <= period * MERGE_TOLERANCE {
            0.0
        } else {
            w
        }
    };

    let mut raw: Vec<(f64, Port, Polarity)> = Vec::with_capacity(8);
    for port in Port::ALL {
        let rise = cfg.switching_instant(port);
        raw.push((wrap(rise), port, Polarity::Positive));
        raw.push((wrap(rise + half), port, Polarity::Negative));
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut events: Vec<SwitchingEvent> = Vec::with_capacity(8);
    for (time, port, pol) in raw {
        match events.last_mut() {
            Some(last) if (time - last.time).abs() <= MERGE_TOLERANCE * period => {
                last.transitions.push((port, pol));
            }
            _ => events.push(SwitchingEvent {
                time,
                transitions: vec![(port, pol)],
            }),
        }
    }
    SwitchingTimeline { period, events }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn cfg_with_delta(delta: [f64; 4]) -> QabConfig {
        QabConfig::table_one().with_delta(delta)
    }

    #[test]
    fn quarter_and_three_quarter_period() {
        let cfg = cfg_with_delta([0.0; 4]);
        let t = cfg.period();
        assert_eq!(bridge_voltage(&cfg, Port::P1, t / 4.0), 200.0);
        assert_eq!(bridge_voltage(&cfg, Port::P1, 3.0 * t / 4.0), -200.0);
    }

    #[test]
    fn quarter_shift() {
        let cfg = cfg_with_delta([0.0, 0.5, 0.0, 0.0]);
        let t = cfg.period();
        assert_eq!(bridge_voltage(&cfg, Port::P2, t / 2.0), 180.0);
        assert_eq!(bridge_voltage(&cfg, Port::P2, t / 8.0), -180.0);
        // the transition instant belongs to the new polarity
        assert_eq!(bridge_voltage(&cfg, Port::P2, t / 4.0), 180.0);
    }

    #[test]
    fn input_vector_layout() {
        let cfg = QabConfig::table_one();
        for k in 0..50 {
            let u = input_vector(&cfg, k as f64 * 1.3e-6);
            assert_eq!((u[4], u[5], u[6]), (0.0, 0.0, 0.0));
        }
        assert_eq!(input_vector(&cfg, 1e-9)[0], 200.0);
        let mut zero = cfg;
        zero.v_dc = [0.0; 4];
        assert!(input_vector(&zero, 3e-6).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn aligned_events_merge() {
        let cfg = cfg_with_delta([0.0; 4]);
        let tl = switching_events(&cfg);
        assert_eq!(tl.events.len(), 2);
        assert_eq!(tl.events[0].time, 0.0);
        assert!((tl.events[1].time - cfg.half_period()).abs() < 1e-18);
        assert_eq!(tl.events[0].transitions.len(), 4);
    }

    #[test]
    fn table_one_has_eight_distinct_events() {
        let cfg = QabConfig::table_one();
        let tl = switching_events(&cfg);
        // independent enumeration
        let (t, th) = (cfg.period(), cfg.half_period());
        let mut times: Vec<f64> = cfg
            .delta
            .iter()
            .flat_map(|d| [(d * th).rem_euclid(t), (d * th + th).rem_euclid(t)])
            .collect();
        times.sort_by(f64::total_cmp);
        assert_eq!(tl.events.len(), 8);
        for (e, t_ref) in tl.events.iter().zip(&times) {
            assert!((e.time - t_ref).abs() < 1e-15);
        }
        assert!(tl.events.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn full_shift_events_coincide() {
        let a = switching_events(&cfg_with_delta([0.0, 1.0, 0.0, 0.0]));
        let b = switching_events(&cfg_with_delta([0.0, -1.0, 0.0, 0.0]));
        let times = |tl: &SwitchingTimeline| -> Vec<f64> {
            tl.events
                .iter()
                .filter(|e| e.transitions.iter().any(|(p, _)| *p == Port::P2))
                .map(|e| e.time)
                .collect()
        };
        assert_eq!(times(&a), times(&b));
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_fundamental() {
        let cfg = QabConfig::table_one();
        // edge quantization is up to half a sample; 4096 keeps it under 0.05 deg
        let n = 4096;
        let t = cfg.period();
        for port in Port::ALL {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                // midpoint sampling avoids landing exactly on a transition
                let tk = (k as f64 + 0.5) * t / n as f64;
                let theta = cfg.omega() * tk;
                acc += bridge_voltage(&cfg, port, tk) * Complex64::from_polar(1.0, -theta);
            }
            let phasor = acc * Complex64::new(0.0, 2.0 / n as f64);
            let expected = 4.0 * cfg.v_dc[port.index()] / std::f64::consts::PI;
            assert!((phasor.norm() - expected).abs() / expected < 1e-3);
            let err = (phasor.arg() + cfg.phase(port)).to_degrees();
            assert!(err.abs() < 0.1, "port {port:?}: phase error {err} deg");
        }
    }

    proptest! {
        #[test]
        fn periodic_in_time(t in -1e-3f64..1e-3, d in -1.0f64..1.0) {
            let cfg = cfg_with_delta([d, -d, d * 0.5, 0.3]);
            // stay away from transition instants where rounding decides the branch
            let th = cfg.half_period();
            let frac = ((t - d * th) / th).rem_euclid(1.0);
            prop_assume!(frac > 1e-6 && frac < 1.0 - 1e-6);
            for port in Port::ALL {
                prop_assert_eq!(bridge_voltage(&cfg, port, t), bridge_voltage(&cfg, port, t + cfg.period()));
            }
        }

        #[test]
        fn shift_by_two_is_identity(t in 0.0f64..4e-5, d in -1.0f64..-0.0) {
            let a = cfg_with_delta([d, 0.0, 0.0, 0.0]);
            let mut b = a.clone();
            b.delta[0] = d + 2.0;
            let th = a.half_period();
            let frac = ((t - d * th) / th).rem_euclid(1.0);
            prop_assume!(frac > 1e-6 && frac < 1.0 - 1e-6);
            prop_assert_eq!(bridge_voltage(&a, Port::P1, t), bridge_voltage(&b, Port::P1, t));
        }
    }
}
