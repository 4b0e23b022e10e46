//! Parameter grids: load-power sweeps, conversion-ratio maps and the common-offset
//! redundancy scan.
//!
//! Every cell is an independent solve, so grids are evaluated in parallel and stored
//! in row-major order (first axis outermost). Cells whose solve fails keep their axis
//! coordinates, carry `converged = false` and NaN everywhere else.

use std::io::Write;

use rayon::prelude::*;

use crate::circuit::{conversion_ratio, Port, QabConfig};
use crate::error::{QabError, Result};
use crate::harmonic_balance::Network;
use crate::powerflow::{solve_phase_shifts_with, PowerFlowError, PowerFlowProblem, SolverOptions};
use crate::zvs::zvs_check_with;

/// Rated output power used for the light-load maps, W.
pub const RATED_POWER: f64 = 500.0;

/// Linear, endpoint-inclusive axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn new(name: &str, min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(QabError::InvalidArgument(format!(
                "axis {name}: need finite min <= max, got {min}..{max}"
            )));
        }
        if points == 0 || (points == 1 && min != max) {
            return Err(QabError::InvalidArgument(format!(
                "axis {name}: {points} points cannot span {min}..{max}"
            )));
        }
        Ok(GridAxis {
            name: name.to_string(),
            min,
            max,
            points,
        })
    }

    /// Parses `min:max:count`.
    pub fn parse(name: &str, spec: &str) -> Result<Self> {
        let bad = || {
            QabError::InvalidArgument(format!("axis {name}: expected min:max:count, got {spec:?}"))
        };
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(bad());
        };
        let min = a.trim().parse().map_err(|_| bad())?;
        let max = b.trim().parse().map_err(|_| bad())?;
        let points = n.trim().parse().map_err(|_| bad())?;
        Self::new(name, min, max, points)
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.points == 1 {
            return self.min;
        }
        if k + 1 == self.points {
            return self.max;
        }
        self.min + (self.max - self.min) * k as f64 / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.value(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub m2: f64,
    pub m4: f64,
    pub p_total: f64,
    /// `(delta2, delta3, delta4)`.
    pub delta: [f64; 3],
    pub p: [f64; 4],
    pub q: [f64; 4],
    pub i_sw: [f64; 4],
    pub zvs: [bool; 4],
    pub converged: bool,
}

impl GridCell {
    fn failed(m2: f64, m4: f64, p_total: f64) -> Self {
        GridCell {
            m2,
            m4,
            p_total,
            delta: [f64::NAN; 3],
            p: [f64::NAN; 4],
            q: [f64::NAN; 4],
            i_sw: [f64::NAN; 4],
            zvs: [false; 4],
            converged: false,
        }
    }
}

pub const GRID_CSV_HEADER: &str = "m2,m4,p_total,delta2,delta3,delta4,p1,p2,p3,p4,q1,q2,q3,q4,\
isw1,isw2,isw3,isw4,zvs1,zvs2,zvs3,zvs4,converged";

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub axes: Vec<GridAxis>,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    /// Cell at grid index `(i, j)` of a 2-D map.
    pub fn at(&self, i: usize, j: usize) -> &GridCell {
        &self.cells[i * self.axes[1].points + j]
    }

    pub fn converged_count(&self) -> usize {
        self.cells.iter().filter(|c| c.converged).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{GRID_CSV_HEADER}")?;
        for c in &self.cells {
            let mut fields: Vec<String> = Vec::with_capacity(23);
            fields.extend([c.m2, c.m4, c.p_total].map(num));
            fields.extend(c.delta.map(num));
            fields.extend(c.p.map(num));
            fields.extend(c.q.map(num));
            fields.extend(c.i_sw.map(num));
            fields.extend(c.zvs.map(flag));
            fields.push(flag(c.converged));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        v.to_string()
    }
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn ratio_or_nan(cfg: &QabConfig, port: Port) -> f64 {
    conversion_ratio(cfg, port).unwrap_or(f64::NAN)
}

/// Sets `V_port = m V1 n_port / n1`.
fn with_ratio(cfg: &mut QabConfig, port: Port, m: f64) {
    let k = port.index();
    cfg.v_dc[k] = m * cfg.v_dc[0] * cfg.turns[k] / cfg.turns[0];
}

/// Solves one operating point and evaluates its ZVS report.
pub fn solve_cell(
    cfg: &QabConfig,
    network: &Network,
    p_total: f64,
    split: f64,
) -> std::result::Result<GridCell, PowerFlowError> {
    let problem = PowerFlowProblem::with_total(cfg.clone(), p_total, split);
    let sol = solve_phase_shifts_with(&problem, network, &SolverOptions::default())?;
    let solved = sol.config(cfg);
    let zvs = zvs_check_with(&solved, network);
    Ok(GridCell {
        m2: ratio_or_nan(cfg, Port::P2),
        m4: ratio_or_nan(cfg, Port::P4),
        p_total,
        delta: [sol.delta[1], sol.delta[2], sol.delta[3]],
        p: sol.report.p,
        q: sol.report.q,
        i_sw: zvs.i_sw,
        zvs: zvs.zvs,
        converged: true,
    })
}

fn cell_or_failed(cfg: &QabConfig, network: &Network, p_total: f64, split: f64) -> GridCell {
    solve_cell(cfg, network, p_total, split).unwrap_or_else(|_| {
        GridCell::failed(
            ratio_or_nan(cfg, Port::P2),
            ratio_or_nan(cfg, Port::P4),
            p_total,
        )
    })
}

fn check_split(split: f64) -> Result<()> {
    if (0.0..=1.0).contains(&split) {
        Ok(())
    } else {
        Err(QabError::InvalidArgument(format!(
            "split must lie in [0, 1], got {split}"
        )))
    }
}

fn check_positive(axis: &GridAxis) -> Result<()> {
    if axis.min > 0.0 {
        Ok(())
    } else {
        Err(QabError::InvalidArgument(format!(
            "axis {} must be positive",
            axis.name
        )))
    }
}

/// Total load power from 0 to `p_total_max` on `points` grid points, split
/// `split : 1 - split` between ports 2 and 4.
pub fn power_sweep(
    cfg: &QabConfig,
    p_total_max: f64,
    points: usize,
    split: f64,
) -> Result<GridResult> {
    if points < 2 {
        return Err(QabError::InvalidArgument(format!(
            "power sweep needs at least 2 points, got {points}"
        )));
    }
    check_split(split)?;
    cfg.check()?;
    let axis = GridAxis::new("p_total", 0.0, p_total_max, points)?;
    let network = Network::new(cfg)?;
    let cells = (0..points)
        .into_par_iter()
        .map(|k| cell_or_failed(cfg, &network, axis.value(k), split))
        .collect();
    Ok(GridResult {
        axes: vec![axis],
        cells,
    })
}

/// ZVS map over the load-port conversion ratios at a fixed total demand.
pub fn ratio_map(
    cfg: &QabConfig,
    m2: &GridAxis,
    m4: &GridAxis,
    p_total: f64,
    split: f64,
) -> Result<GridResult> {
    check_positive(m2)?;
    check_positive(m4)?;
    check_split(split)?;
    cfg.check()?;
    let network = Network::new(cfg)?;
    let (n2, n4) = (m2.points, m4.points);
    let cells = (0..n2 * n4)
        .into_par_iter()
        .map(|idx| {
            let mut c = cfg.clone();
            with_ratio(&mut c, Port::P2, m2.value(idx / n4));
            with_ratio(&mut c, Port::P4, m4.value(idx % n4));
            cell_or_failed(&c, &network, p_total, split)
        })
        .collect();
    Ok(GridResult {
        axes: vec![m2.clone(), m4.clone()],
        cells,
    })
}

/// ZVS map over the port-4 conversion ratio and total demand, port 2 as configured.
pub fn power_ratio_map(
    cfg: &QabConfig,
    m4: &GridAxis,
    p: &GridAxis,
    split: f64,
) -> Result<GridResult> {
    check_positive(m4)?;
    check_split(split)?;
    cfg.check()?;
    let network = Network::new(cfg)?;
    let (n4, np) = (m4.points, p.points);
    let cells = (0..n4 * np)
        .into_par_iter()
        .map(|idx| {
            let mut c = cfg.clone();
            with_ratio(&mut c, Port::P4, m4.value(idx / np));
            cell_or_failed(&c, &network, p.value(idx % np), split)
        })
        .collect();
    Ok(GridResult {
        axes: vec![m4.clone(), p.clone()],
        cells,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RedundancyRow {
    /// Common offset added to every phase-shift ratio.
    pub offset: f64,
    pub p1: f64,
    /// Fundamental amplitude of the port-1 current, A.
    pub i1_peak: f64,
}

/// Solves the operating point once, then shifts all four phase shifts together.
pub fn redundancy_scan(
    cfg: &QabConfig,
    p_total: f64,
    split: f64,
    offsets: &GridAxis,
) -> std::result::Result<Vec<RedundancyRow>, PowerFlowError> {
    check_split(split)?;
    let network = Network::new(cfg)?;
    let problem = PowerFlowProblem::with_total(cfg.clone(), p_total, split);
    let sol = solve_phase_shifts_with(&problem, &network, &SolverOptions::default())?;
    let base = sol.config(cfg);
    Ok(offsets
        .values()
        .into_iter()
        .map(|c| {
            let shifted = base.clone().with_delta(base.delta.map(|d| d + c));
            let (_, report) = network.evaluate(&shifted);
            RedundancyRow {
                offset: c,
                p1: report.p[0],
                i1_peak: report.i_peak[0],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powerflow::{power_dispatch, solve_phase_shifts};

    #[test]
    fn axis_values() {
        let a = GridAxis::new("m2", 0.8, 1.5, 8).unwrap();
        let v = a.values();
        assert_eq!(v.len(), 8);
        assert_eq!((v[0], v[7]), (0.8, 1.5));
        assert!((v[1] - 0.9).abs() < 1e-15);
        assert_eq!(GridAxis::new("c", 0.3, 0.3, 1).unwrap().values(), vec![0.3]);
        assert!(GridAxis::new("x", 1.0, 0.0, 3).is_err());
        assert!(GridAxis::new("x", 0.0, 1.0, 1).is_err());
        assert!(GridAxis::new("x", 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn axis_parse() {
        assert_eq!(
            GridAxis::parse("p", "0:380:20").unwrap(),
            GridAxis::new("p", 0.0, 380.0, 20).unwrap()
        );
        for bad in ["0:1", "a:1:2", "0:1:2:3", "0:1:-2"] {
            assert!(GridAxis::parse("p", bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn two_by_two_map_has_four_cells() {
        let cfg = QabConfig::table_one();
        let m2 = GridAxis::new("m2", 0.9, 1.1, 2).unwrap();
        let m4 = GridAxis::new("m4", 0.9, 1.1, 2).unwrap();
        let g = ratio_map(&cfg, &m2, &m4, 50.0, 0.5).unwrap();
        assert_eq!(g.cells.len(), 4);
        assert_eq!(g.shape(), vec![2, 2]);
        assert!((g.at(1, 0).m2 - 1.1).abs() < 1e-12);
        assert!((g.at(1, 0).m4 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unit_ratio_reproduces_source_voltage() {
        let mut cfg = QabConfig::table_one();
        with_ratio(&mut cfg, Port::P2, 1.0);
        with_ratio(&mut cfg, Port::P4, 1.0);
        assert_eq!(cfg.v_dc[1], cfg.v_dc[0]);
        assert_eq!(cfg.v_dc[3], cfg.v_dc[0]);
    }

    #[test]
    fn sweep_first_cell_matches_direct_solve() {
        let cfg = QabConfig::table_one();
        let g = power_sweep(&cfg, 200.0, 3, 0.5).unwrap();
        let first = g.cells[0];
        assert!(first.converged);
        assert!(first.p[1].abs() < 1e-6 && first.p[3].abs() < 1e-6);
        let direct = solve_phase_shifts(&PowerFlowProblem::new(cfg.clone(), 0.0, 0.0)).unwrap();
        assert_eq!(
            first.delta,
            [direct.delta[1], direct.delta[2], direct.delta[3]]
        );
        let last = g.cells[2];
        assert!((last.p[1] + 100.0).abs() < 1e-6 && (last.p[3] + 100.0).abs() < 1e-6);
    }

    #[test]
    fn failed_cells_are_nan() {
        let cfg = QabConfig::table_one();
        let g = power_sweep(&cfg, 2e6, 2, 0.5).unwrap();
        assert!(g.cells[0].converged);
        let bad = g.cells[1];
        assert!(!bad.converged);
        assert!(bad
            .delta
            .iter()
            .chain(&bad.p)
            .chain(&bad.i_sw)
            .all(|v| v.is_nan()));
        assert_eq!(bad.p_total, 2e6);
        let mut out = Vec::new();
        g.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.ends_with(",0,0,0,0,0"));
        assert!(last.contains(",nan,"));
    }

    #[test]
    fn csv_layout() {
        let cfg = QabConfig::table_one();
        let g = power_sweep(&cfg, 100.0, 2, 0.5).unwrap();
        let mut out = Vec::new();
        g.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], GRID_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 23));
        let m2: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        assert!((m2 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn argument_checks() {
        let cfg = QabConfig::table_one();
        assert!(power_sweep(&cfg, 100.0, 1, 0.5).is_err());
        assert!(power_sweep(&cfg, 100.0, 5, 1.5).is_err());
        let neg = GridAxis::new("m2", -1.0, 1.0, 3).unwrap();
        let ok = GridAxis::new("m4", 0.9, 1.1, 3).unwrap();
        assert!(ratio_map(&cfg, &neg, &ok, 50.0, 0.5).is_err());
    }

    #[test]
    fn power_ratio_corner_matches_single_point() {
        let cfg = QabConfig::table_one();
        let m4 = GridAxis::new("m4", 0.75, 1.25, 3).unwrap();
        let p = GridAxis::new("p_total", 0.0, 380.0, 3).unwrap();
        let g = power_ratio_map(&cfg, &m4, &p, 0.5).unwrap();
        let corner = *g.at(2, 2);
        let mut single = cfg.clone();
        with_ratio(&mut single, Port::P4, 1.25);
        let network = Network::new(&single).unwrap();
        assert_eq!(corner, solve_cell(&single, &network, 380.0, 0.5).unwrap());
        for j in 0..3 {
            let c = g.at(0, j);
            assert!((c.m2 - 0.9).abs() < 1e-12);
        }
        for i in 0..3 {
            let c = g.at(i, 0);
            assert!(c.converged && c.p[1].abs() < 1e-6 && c.p[3].abs() < 1e-6);
        }
    }

    #[test]
    fn redundancy_rows_are_flat() {
        let cfg = QabConfig::table_one();
        let offsets = GridAxis::new("c", -0.5, 0.5, 11).unwrap();
        let rows = redundancy_scan(&cfg, 350.0, 0.5, &offsets).unwrap();
        let zero = rows.iter().find(|r| r.offset == 0.0).unwrap();
        let sol =
            solve_phase_shifts(&PowerFlowProblem::with_total(cfg.clone(), 350.0, 0.5)).unwrap();
        let base = power_dispatch(&sol.config(&cfg)).unwrap();
        assert_eq!(zero.p1, base.p[0]);
        assert_eq!(zero.i1_peak, base.i_peak[0]);
        for r in &rows {
            assert!((r.p1 - zero.p1).abs() <= 1e-9 * zero.p1.abs());
            assert!((r.i1_peak - zero.i1_peak).abs() <= 1e-9 * zero.i1_peak);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = QabConfig::table_one();
        let m2 = GridAxis::new("m2", 0.8, 1.5, 4).unwrap();
        let m4 = GridAxis::new("m4", 0.75, 1.25, 4).unwrap();
        let bytes = || {
            let mut out = Vec::new();
            ratio_map(&cfg, &m2, &m4, 50.0, 0.5)
                .unwrap()
                .write_csv(&mut out)
                .unwrap();
            out
        };
        assert_eq!(bytes(), bytes());
    }
}
