//! Event-energy model, comparison ratios and the sweep CSV row.
//!
//! The default energy table holds order-of-magnitude placeholders in
//! picojoules. They are not silicon measurements; only ratios between runs
//! sharing one table are meaningful.

use serde::{Deserialize, Serialize};

use crate::engine::{Counters, SimReport};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyTable {
    pub mac_op: f64,
    pub ds_tick_active: f64,
    pub fifo_read: f64,
    pub fifo_write: f64,
    pub fb_read_per_triplet: f64,
    pub wb_read_per_triplet: f64,
    pub dram_per_byte: f64,
    pub rf_hop: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable {
            mac_op: 0.25,
            ds_tick_active: 0.02,
            fifo_read: 0.02,
            fifo_write: 0.02,
            fb_read_per_triplet: 1.2,
            wb_read_per_triplet: 1.2,
            dram_per_byte: 40.0,
            rf_hop: 0.05,
        }
    }
}

impl EnergyTable {
    pub fn zero() -> Self {
        EnergyTable {
            mac_op: 0.0,
            ds_tick_active: 0.0,
            fifo_read: 0.0,
            fifo_write: 0.0,
            fb_read_per_triplet: 0.0,
            wb_read_per_triplet: 0.0,
            dram_per_byte: 0.0,
            rf_hop: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mac_op,
            self.ds_tick_active,
            self.fifo_read,
            self.fifo_write,
            self.fb_read_per_triplet,
            self.wb_read_per_triplet,
            self.dram_per_byte,
            self.rf_hop,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("energy costs must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Energy per component in picojoules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mac: f64,
    pub ds: f64,
    pub fifo: f64,
    pub sram: f64,
    pub dram: f64,
    pub rf: f64,
    /// Everything except DRAM.
    pub onchip: f64,
    pub total: f64,
}

pub fn energy(c: &Counters, t: &EnergyTable) -> EnergyBreakdown {
    let mac = c.mac_ops as f64 * t.mac_op;
    let ds = c.ds_active_ticks as f64 * t.ds_tick_active;
    let fifo = c.fifo_reads as f64 * t.fifo_read + c.fifo_writes as f64 * t.fifo_write;
    let sram = c.fb_reads as f64 * t.fb_read_per_triplet + c.wb_reads as f64 * t.wb_read_per_triplet;
    let dram = c.dram_bytes as f64 * t.dram_per_byte;
    let rf = c.rf_hops as f64 * t.rf_hop;
    let onchip = mac + ds + fifo + sram + rf;
    EnergyBreakdown {
        mac,
        ds,
        fifo,
        sram,
        dram,
        rf,
        onchip,
        total: onchip + dram,
    }
}

/// `num / den`, with `0 / 0 = 1`.
fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else {
        num / den
    }
}

/// Improvement of run `a` over reference run `b`; every field is
/// `b`'s cost over `a`'s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub speedup: f64,
    pub onchip_ee_imp: f64,
    pub ee_imp_with_dram: f64,
    pub fb_access_reduction: f64,
    pub capacity_reduction: f64,
    /// Ratio of outputs per base cycle per PE.
    pub area_eff_imp: f64,
}

fn outputs_per_cycle_per_pe(r: &SimReport) -> f64 {
    let outs = r.layer.output_dims().count() as f64;
    let pes = (r.config.rows * r.config.cols) as f64;
    if r.mac_cycles == 0 {
        0.0
    } else {
        outs / (r.mac_cycles as f64 * pes)
    }
}

pub fn compare(a: &SimReport, b: &SimReport) -> Result<Comparison> {
    if a.workload_digest != b.workload_digest {
        return Err(Error::InvalidComparison(format!(
            "workload digests differ: {} vs {}",
            a.workload_digest, b.workload_digest
        )));
    }
    let fb = |r: &SimReport| r.counters.fb_reads as f64;
    Ok(Comparison {
        speedup: ratio(b.mac_cycles as f64, a.mac_cycles as f64),
        onchip_ee_imp: ratio(b.energy.onchip, a.energy.onchip),
        ee_imp_with_dram: ratio(b.energy.total, a.energy.total),
        fb_access_reduction: ratio(fb(b), fb(a)),
        capacity_reduction: ratio(b.counters.fb_bytes as f64, a.counters.fb_bytes as f64),
        area_eff_imp: ratio(outputs_per_cycle_per_pe(a), outputs_per_cycle_per_pe(b)),
    })
}

/// One sweep point of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvRow {
    pub workload: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Wdep")]
    pub wdep: String,
    #[serde(rename = "Fdep")]
    pub fdep: String,
    #[serde(rename = "WFdep")]
    pub wfdep: String,
    #[serde(rename = "R")]
    pub r: u32,
    pub ce: bool,
    pub wd: f64,
    pub fd: f64,
    pub ratio16: f64,
    pub ds_cycles: u64,
    pub mac_cycles: u64,
    pub mac_ops: u64,
    pub fb_reads: u64,
    pub wb_reads: u64,
    pub fifo_rw: u64,
    pub dram_bytes: u64,
    pub energy_onchip_pj: f64,
    pub energy_total_pj: f64,
    pub speedup: Option<f64>,
    pub ee_imp: Option<f64>,
    pub fb_reduction: Option<f64>,
    pub cap_reduction: Option<f64>,
}

impl CsvRow {
    /// `densities` is `(weight, feature, ratio16)` of the workload.
    pub fn new(workload: &str, densities: (f64, f64, f64), s2: &SimReport, naive: Option<&SimReport>) -> Result<Self> {
        let cmp = naive.map(|b| compare(s2, b)).transpose()?;
        let cfg = &s2.config;
        let c = &s2.counters;
        Ok(CsvRow {
            workload: workload.to_string(),
            n: cfg.rows,
            m: cfg.cols,
            wdep: cfg.w_depth.to_string(),
            fdep: cfg.f_depth.to_string(),
            wfdep: cfg.wf_depth.to_string(),
            r: cfg.ratio,
            ce: cfg.ce_enabled,
            wd: densities.0,
            fd: densities.1,
            ratio16: densities.2,
            ds_cycles: s2.ds_cycles,
            mac_cycles: s2.mac_cycles,
            mac_ops: c.mac_ops,
            fb_reads: c.fb_reads,
            wb_reads: c.wb_reads,
            fifo_rw: c.fifo_reads + c.fifo_writes,
            dram_bytes: c.dram_bytes,
            energy_onchip_pj: s2.energy.onchip,
            energy_total_pj: s2.energy.total,
            speedup: cmp.map(|x| x.speedup),
            ee_imp: cmp.map(|x| x.onchip_ee_imp),
            fb_reduction: cmp.map(|x| x.fb_access_reduction),
            cap_reduction: cmp.map(|x| x.capacity_reduction),
        })
    }
}
