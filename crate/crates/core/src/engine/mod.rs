//! Cycle-level model of the sparse engine.
//!
//! Two clocks: the DS/CE clock ticks `R` times per MAC/RF base tick. All
//! components see start-of-tick state; FIFO writes become visible on the
//! next DS tick.

mod ce;
mod fifo;
mod pe;
mod rf;
mod sim;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use ce::FeedCounters;
pub use fifo::Fifo;
pub use pe::{DsOutcome, MacEvent, PeState, PeTrace, ResultToken, Segment, WfEntry};
pub use rf::{rf_step, Collector, ColumnOrder};
pub use sim::{simulate, Simulator};

use crate::ecoo::check_group_len;
use crate::error::{invalid, Error, Result};
use crate::mapper::{lower_layer, schedule_ce, DataflowProgram};
use crate::metrics::{EnergyBreakdown, EnergyTable};
use crate::model::{AccTensor, ConvLayerSpec, Workload};

/// FIFO capacity; `None` is unbounded. Serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FifoDepth(pub Option<usize>);

impl FifoDepth {
    pub const INF: FifoDepth = FifoDepth(None);

    pub fn finite(n: usize) -> Self {
        FifoDepth(Some(n))
    }
}

impl fmt::Display for FifoDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("inf"),
        }
    }
}

impl Serialize for FifoDepth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(n) => s.serialize_u64(n as u64),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for FifoDepth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(usize),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(FifoDepth(Some(n))),
            Repr::S(s) if s == "inf" => Ok(FifoDepth(None)),
            Repr::S(s) => Err(serde::de::Error::custom(format!("expected a depth or \"inf\", got {s:?}"))),
        }
    }
}

fn default_freq() -> f64 {
    500.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    pub w_depth: FifoDepth,
    pub f_depth: FifoDepth,
    pub wf_depth: FifoDepth,
    /// DS ticks per MAC tick.
    pub ratio: u32,
    pub group_len: usize,
    pub ce_enabled: bool,
    #[serde(default = "default_freq")]
    pub mac_freq_mhz: f64,
    #[serde(default)]
    pub energy: EnergyTable,
}

impl SimConfig {
    /// `rows x cols` array, depths `(4, 4, 4)`, `R = 4`, `G = 16`, CE off.
    pub fn new(rows: usize, cols: usize) -> Self {
        SimConfig {
            rows,
            cols,
            w_depth: FifoDepth::finite(4),
            f_depth: FifoDepth::finite(4),
            wf_depth: FifoDepth::finite(4),
            ratio: 4,
            group_len: crate::ecoo::DEFAULT_GROUP_LEN,
            ce_enabled: false,
            mac_freq_mhz: default_freq(),
            energy: EnergyTable::default(),
        }
    }

    pub fn with_depths(mut self, w: FifoDepth, f: FifoDepth, wf: FifoDepth) -> Self {
        (self.w_depth, self.f_depth, self.wf_depth) = (w, f, wf);
        self
    }

    /// Same depth on all three FIFOs.
    pub fn with_depth(self, d: FifoDepth) -> Self {
        self.with_depths(d, d, d)
    }

    pub fn with_ratio(mut self, ratio: u32) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_group_len(mut self, g: usize) -> Self {
        self.group_len = g;
        self
    }

    pub fn with_ce(mut self, on: bool) -> Self {
        self.ce_enabled = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid(format!("array {}x{} must be at least 1x1", self.rows, self.cols)));
        }
        if self.rows > u16::MAX as usize || self.cols > u16::MAX as usize {
            return Err(invalid("array dimension exceeds 65535"));
        }
        for (name, d) in [("W", self.w_depth), ("F", self.f_depth), ("WF", self.wf_depth)] {
            if d.0 == Some(0) {
                return Err(invalid(format!("{name}-FIFO depth must be >= 1")));
            }
        }
        if self.ratio == 0 {
            return Err(invalid("DS:MAC ratio must be >= 1"));
        }
        if self.mac_freq_mhz.is_nan() || self.mac_freq_mhz <= 0.0 {
            return Err(invalid("MAC frequency must be positive"));
        }
        self.energy.validate()?;
        check_group_len(self.group_len)
    }

    /// Lowers a workload for this configuration (CE schedule included when
    /// enabled).
    pub fn program_for(&self, w: &Workload) -> Result<DataflowProgram> {
        self.validate()?;
        let p = lower_layer(&w.layer, &w.input, &w.kernels, self.rows, self.cols, self.group_len)?;
        if self.ce_enabled {
            schedule_ce(p)
        } else {
            Ok(p)
        }
    }

    pub(crate) fn check_program(&self, p: &DataflowProgram) -> Result<()> {
        self.validate()?;
        if (p.rows, p.cols, p.group_len) != (self.rows, self.cols, self.group_len) {
            return Err(invalid(format!(
                "program lowered for {}x{} G={} but config is {}x{} G={}",
                p.rows, p.cols, p.group_len, self.rows, self.cols, self.group_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// MAC-queue entries consumed: pairs plus flushes (S²); real elements
    /// (naive).
    pub mac_ops: u64,
    pub pairs_emitted: u64,
    pub flushes: u64,
    pub ds_active_ticks: u64,
    pub fifo_reads: u64,
    pub fifo_writes: u64,
    pub fb_reads: u64,
    pub fb_line_reads: u64,
    pub neighbor_reads: u64,
    pub wb_reads: u64,
    pub rf_hops: u64,
    pub dram_bytes: u64,
    pub fb_bytes: u64,
    pub wb_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    S2,
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub engine: EngineKind,
    pub config: SimConfig,
    pub ds_cycles: u64,
    pub mac_cycles: u64,
    pub counters: Counters,
    pub energy: EnergyBreakdown,
    /// 64-bit checksum of the extracted output tensor, hex.
    pub outputs_digest: String,
    pub workload_digest: String,
    #[serde(skip)]
    pub layer: ConvLayerSpec,
    /// Accumulators by output coordinate, before any activation.
    #[serde(skip)]
    pub raw_outputs: Option<AccTensor>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Output tensor of a finished run, with ReLU applied if the layer asks.
pub fn extract_outputs(report: &SimReport) -> Result<AccTensor> {
    let raw = report
        .raw_outputs
        .as_ref()
        .ok_or_else(|| Error::IncompleteSimulation("report carries no outputs".into()))?;
    let mut out = raw.clone();
    if report.layer.relu {
        let d = out.dims();
        for y in 0..d.height {
            for x in 0..d.width {
                for c in 0..d.depth {
                    if *out.get(y, x, c) < 0 {
                        out.set(y, x, c, 0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Places collected tokens at their output coordinates.
pub(crate) fn assemble_outputs(program: &DataflowProgram, collector: &Collector) -> Result<AccTensor> {
    let out = program.layer.output_dims();
    let mut t = AccTensor::zeros(out);
    let mut seen = vec![false; out.count()];
    for ((tile, row, col), v) in collector.ordered() {
        let tl = &program.tiles[tile as usize];
        let (oy, ox) = tl.row_assignments[row as usize];
        let k = tl.col_assignments[col as usize];
        t.set(oy, ox, k, v);
        seen[out.index(oy, ox, k)] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        let (y, rest) = (i / (out.width * out.depth), i % (out.width * out.depth));
        return Err(Error::IncompleteSimulation(format!(
            "no result for output ({y},{},{})",
            rest / out.depth,
            rest % out.depth
        )));
    }
    Ok(t)
}

pub(crate) fn finish_report(
    engine: EngineKind,
    program: &DataflowProgram,
    config: &SimConfig,
    ds_cycles: u64,
    mac_cycles: u64,
    counters: Counters,
    collector: &Collector,
) -> Result<SimReport> {
    let raw = if program.tiles.is_empty() {
        AccTensor::zeros(crate::model::Dims3::new(0, 0, 0))
    } else {
        assemble_outputs(program, collector)?
    };
    let mut report = SimReport {
        engine,
        config: config.clone(),
        ds_cycles,
        mac_cycles,
        counters,
        energy: crate::metrics::energy(&counters, &config.energy),
        outputs_digest: String::new(),
        workload_digest: crate::digest::hex64(program.workload_digest),
        layer: program.layer,
        raw_outputs: Some(raw),
    };
    let out = extract_outputs(&report)?;
    report.outputs_digest = crate::digest::hex64(crate::digest::tensor_digest(&out));
    Ok(report)
}
