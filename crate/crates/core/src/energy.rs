//! UAV propulsion/communication energy and cell/site ON-OFF energy.
//!
//! Step quantities are joules; ledgers report watt-hours.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const JOULES_PER_WH: f64 = 3600.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams<T> {
    /// Quadratic propulsion coefficient, J per (m/step)^2.
    pub alpha1: T,
    /// Linear propulsion coefficient, J per (m/step).
    pub alpha2: T,
    /// Step duration, s.
    pub dt: T,
    /// Draw of an ON cell at zero load, W.
    pub p_static: T,
    /// Load-dependent slope, W.
    pub delta_p: T,
    /// Site overhead while any of its cells is ON, W.
    pub p_site: T,
    /// Demand (bits/s) that saturates a cell's load fraction.
    pub cell_capacity: T,
}

impl<T: Scalar> Default for EnergyParams<T> {
    fn default() -> Self {
        Self {
            alpha1: T::lit(1e-3),
            alpha2: T::lit(0.02),
            dt: T::one(),
            p_static: T::lit(100.0),
            delta_p: T::lit(40.0),
            p_site: T::lit(50.0),
            cell_capacity: T::lit(5e7),
        }
    }
}

impl<T: Scalar> EnergyParams<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("p_static", self.p_static),
            ("delta_p", self.delta_p),
            ("p_site", self.p_site),
        ];
        for (what, v) in fields {
            if !(v >= T::zero()) {
                return Err(Error::InvalidValue {
                    what,
                    value: v.as_f64(),
                });
            }
        }
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidValue {
                what: "dt",
                value: self.dt.as_f64(),
            });
        }
        if !(self.cell_capacity > T::zero()) {
            return Err(Error::InvalidValue {
                what: "cell_capacity",
                value: self.cell_capacity.as_f64(),
            });
        }
        Ok(())
    }

    /// Largest energy one UAV can spend in a step.
    pub fn max_uav_step_energy(&self, p_max: T, v_max: T) -> T {
        p_max * self.dt + self.alpha1 * v_max * v_max + self.alpha2 * v_max
    }

    /// Load fraction `min(1, demand / capacity)`.
    pub fn load_fraction(&self, demand: T) -> T {
        (demand / self.cell_capacity).min(T::one())
    }
}

/// `(E_prop, E_comm)` in joules for a step of length `displacement` at
/// transmit power `power`.
pub fn uav_step_energy<T: Scalar>(displacement: T, power: T, params: &EnergyParams<T>) -> Result<(T, T)> {
    if !(power >= T::zero()) {
        return Err(Error::InvalidValue {
            what: "transmit power",
            value: power.as_f64(),
        });
    }
    if !(displacement >= T::zero()) {
        return Err(Error::InvalidValue {
            what: "displacement",
            value: displacement.as_f64(),
        });
    }
    let prop = params.alpha1 * displacement * displacement + params.alpha2 * displacement;
    Ok((prop, power * params.dt))
}

/// Instantaneous draw of one cell, watts.
pub fn cell_step_power<T: Scalar>(on: bool, load: T, params: &EnergyParams<T>) -> Result<T> {
    if !(load >= T::zero() && load <= T::one()) {
        return Err(Error::InvalidValue {
            what: "load fraction",
            value: load.as_f64(),
        });
    }
    Ok(if on {
        params.p_static + params.delta_p * load
    } else {
        T::zero()
    })
}

/// Per-step inputs for one episode (or a slice of one).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace<T> {
    /// Site index of every cell.
    pub cell_site: Vec<usize>,
    pub num_sites: usize,
    /// `[t][cell]` ON state.
    pub cell_on: Vec<Vec<bool>>,
    /// `[t][cell]` load fraction.
    pub cell_load: Vec<Vec<T>>,
    /// `[t][uav]` displacement length, m.
    pub displacement: Vec<Vec<T>>,
    /// `[t][uav]` transmit power, W.
    pub power: Vec<Vec<T>>,
}

impl<T: Scalar> EnergyTrace<T> {
    pub fn new(cell_site: Vec<usize>, num_sites: usize) -> Self {
        Self {
            cell_site,
            num_sites,
            cell_on: Vec::new(),
            cell_load: Vec::new(),
            displacement: Vec::new(),
            power: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cell_on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_on.is_empty()
    }

    pub fn push(&mut self, cell_on: Vec<bool>, cell_load: Vec<T>, displacement: Vec<T>, power: Vec<T>) {
        self.cell_on.push(cell_on);
        self.cell_load.push(cell_load);
        self.displacement.push(displacement);
        self.power.push(power);
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.cell_on.extend(other.cell_on.iter().cloned());
        out.cell_load.extend(other.cell_load.iter().cloned());
        out.displacement.extend(other.displacement.iter().cloned());
        out.power.extend(other.power.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger<T> {
    pub dt: T,
    /// `[uav][t]` propulsion energy, Wh.
    pub uav_prop: Vec<Vec<T>>,
    /// `[uav][t]` communication energy, Wh.
    pub uav_comm: Vec<Vec<T>>,
    /// `[uav][t]` `E_i = E_prop + E_comm`, Wh.
    pub uav_step: Vec<Vec<T>>,
    /// `[cell][t]` cell draw, W.
    pub cell_power: Vec<Vec<T>>,
    /// `[site][t]` site overhead draw, W.
    pub site_power: Vec<Vec<T>>,
    /// Per-cell energy, Wh.
    pub cell_energy: Vec<T>,
    /// Per-site energy, Wh.
    pub site_energy: Vec<T>,
    /// All UAVs, Wh.
    pub e_uav: T,
    /// All cells, Wh.
    pub e_cell: T,
    /// All sites, Wh.
    pub e_site: T,
    /// Network energy `sum E_c + sum E_s`, Wh.
    pub e_total: T,
}

impl<T: Scalar> EnergyLedger<T> {
    /// UAV plus network energy, Wh.
    pub fn grand_total(&self) -> T {
        self.e_uav + self.e_total
    }

    pub fn num_steps(&self) -> usize {
        self.cell_power.first().or(self.uav_step.first()).map_or(0, Vec::len)
    }

    /// Writes one row per entity and step:
    /// `entity_id,kind,t,watts,joules`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["entity_id", "kind", "t", "watts", "joules"])?;
        let wh = T::lit(JOULES_PER_WH);
        let mut rows = |kind: &str, series: &[Vec<T>], in_wh: bool| -> Result<()> {
            for (id, s) in series.iter().enumerate() {
                for (t, &v) in s.iter().enumerate() {
                    let (watts, joules) = if in_wh {
                        (v * wh / self.dt, v * wh)
                    } else {
                        (v, v * self.dt)
                    };
                    w.write_record([
                        id.to_string(),
                        kind.to_string(),
                        t.to_string(),
                        watts.to_string(),
                        joules.to_string(),
                    ])?;
                }
            }
            Ok(())
        };
        rows("uav_prop", &self.uav_prop, true)?;
        rows("uav_comm", &self.uav_comm, true)?;
        rows("cell", &self.cell_power, false)?;
        rows("site", &self.site_power, false)?;
        w.flush().map_err(|e| Error::io("<ledger csv>", e))?;
        Ok(())
    }
}

/// Integrates a trace into an energy ledger. Site overhead accrues at every
/// step where at least one of the site's cells is ON.
pub fn episode_ledger<T: Scalar>(trace: &EnergyTrace<T>, params: &EnergyParams<T>) -> Result<EnergyLedger<T>> {
    let steps = trace.cell_on.len();
    for (context, len) in [
        ("trace loads", trace.cell_load.len()),
        ("trace displacements", trace.displacement.len()),
        ("trace powers", trace.power.len()),
    ] {
        if len != steps {
            return Err(Error::Shape {
                context,
                expected: steps,
                got: len,
            });
        }
    }
    let num_cells = trace.cell_site.len();
    let num_uavs = trace.power.first().map_or(0, Vec::len);
    let wh = T::lit(JOULES_PER_WH);

    let mut ledger = EnergyLedger {
        dt: params.dt,
        uav_prop: vec![Vec::with_capacity(steps); num_uavs],
        uav_comm: vec![Vec::with_capacity(steps); num_uavs],
        uav_step: vec![Vec::with_capacity(steps); num_uavs],
        cell_power: vec![Vec::with_capacity(steps); num_cells],
        site_power: vec![Vec::with_capacity(steps); trace.num_sites],
        cell_energy: vec![T::zero(); num_cells],
        site_energy: vec![T::zero(); trace.num_sites],
        ..Default::default()
    };

    for t in 0..steps {
        let (on, load) = (&trace.cell_on[t], &trace.cell_load[t]);
        if on.len() != num_cells || load.len() != num_cells {
            return Err(Error::Shape {
                context: "cells per step",
                expected: num_cells,
                got: on.len(),
            });
        }
        let (disp, pw) = (&trace.displacement[t], &trace.power[t]);
        if disp.len() != num_uavs || pw.len() != num_uavs {
            return Err(Error::Shape {
                context: "uavs per step",
                expected: num_uavs,
                got: pw.len(),
            });
        }
        for i in 0..num_uavs {
            let (prop, comm) = uav_step_energy(disp[i], pw[i], params)?;
            ledger.uav_prop[i].push(prop / wh);
            ledger.uav_comm[i].push(comm / wh);
            ledger.uav_step[i].push((prop + comm) / wh);
        }
        let mut site_on = vec![false; trace.num_sites];
        for c in 0..num_cells {
            let p = cell_step_power(on[c], load[c], params)?;
            ledger.cell_power[c].push(p);
            ledger.cell_energy[c] += p * params.dt / wh;
            site_on[trace.cell_site[c]] |= on[c];
        }
        for (s, &any_on) in site_on.iter().enumerate() {
            let p = if any_on { params.p_site } else { T::zero() };
            ledger.site_power[s].push(p);
            ledger.site_energy[s] += p * params.dt / wh;
        }
    }

    ledger.e_uav = ledger.uav_step.iter().flatten().copied().sum();
    ledger.e_cell = ledger.cell_energy.iter().copied().sum();
    ledger.e_site = ledger.site_energy.iter().copied().sum();
    ledger.e_total = ledger.e_cell + ledger.e_site;
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EnergyParams<f64> {
        EnergyParams {
            alpha1: 0.1,
            alpha2: 1.0,
            dt: 1.0,
            p_static: 100.0,
            delta_p: 40.0,
            p_site: 50.0,
            cell_capacity: 1e6,
        }
    }

    #[test]
    fn uav_energy_cases() {
        let p = params();
        assert_eq!(uav_step_energy(0.0, 0.0, &p).unwrap(), (0.0, 0.0));
        assert_eq!(uav_step_energy(0.0, 2.5, &p).unwrap(), (0.0, 2.5));
        assert_eq!(uav_step_energy(10.0, 0.0, &p).unwrap().0, 20.0);
        assert!(uav_step_energy(1.0, -1.0, &p).is_err());
    }

    #[test]
    fn cell_power_cases() {
        let p = params();
        assert_eq!(cell_step_power(false, 0.7, &p).unwrap(), 0.0);
        assert_eq!(cell_step_power(true, 0.0, &p).unwrap(), 100.0);
        assert_eq!(cell_step_power(true, 0.5, &p).unwrap(), 120.0);
        assert!(cell_step_power(true, 1.5, &p).is_err());
        assert!(cell_step_power(true, -0.1, &p).is_err());
    }

    #[test]
    fn idle_dark_network_costs_nothing() {
        let mut tr = EnergyTrace::new(vec![0, 0, 0], 1);
        for _ in 0..10 {
            tr.push(vec![false; 3], vec![0.0; 3], vec![0.0; 2], vec![0.0; 2]);
        }
        let l = episode_ledger(&tr, &params()).unwrap();
        assert_eq!(l.e_total, 0.0);
        assert_eq!(l.e_uav, 0.0);
    }

    #[test]
    fn single_cell_closed_form() {
        let mut tr = EnergyTrace::new(vec![0, 0, 0], 1);
        let steps = 360;
        for _ in 0..steps {
            tr.push(vec![true, false, false], vec![0.0; 3], vec![], vec![]);
        }
        let l = episode_ledger(&tr, &params()).unwrap();
        let want = 150.0 * steps as f64 / 3600.0;
        assert!((l.e_total - want).abs() < 1e-12);
        assert_eq!(l.e_total, l.e_cell + l.e_site);
    }

    #[test]
    fn mismatched_trace_rejected() {
        let mut tr = EnergyTrace::<f64>::new(vec![0], 1);
        tr.push(vec![true], vec![0.0], vec![0.0], vec![0.0]);
        tr.power.clear();
        assert!(matches!(episode_ledger(&tr, &params()), Err(Error::Shape { .. })));
    }

    #[test]
    fn csv_rows() {
        let mut tr = EnergyTrace::new(vec![0], 1);
        tr.push(vec![true], vec![0.5], vec![10.0], vec![2.0]);
        tr.push(vec![false], vec![0.0], vec![0.0], vec![1.0]);
        let l = episode_ledger(&tr, &params()).unwrap();
        let mut buf = Vec::new();
        l.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "entity_id,kind,t,watts,joules");
        // 2 steps x (prop + comm + cell + site).
        assert_eq!(lines.len(), 1 + 8);
        assert!(lines.contains(&"0,cell,0,120,120"));
        assert!(lines.contains(&"0,uav_prop,0,20,20"));
    }
}
