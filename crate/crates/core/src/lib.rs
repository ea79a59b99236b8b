//! Cycle-accurate simulator of a sparse systolic CNN engine that selects
//! aligned weight/feature pairs from compressed streams, plus a dense
//! output-stationary baseline.

pub mod baseline;
pub mod digest;
pub mod ecoo;
pub mod engine;
pub mod error;
pub mod io;
pub mod mapper;
pub mod metrics;
pub mod model;

pub use baseline::simulate_naive;
pub use ecoo::{AlignedPair, CompressedStream, EcooTriplet, StreamKind};
pub use engine::{extract_outputs, simulate, Counters, EngineKind, FifoDepth, SimConfig, SimReport, Simulator};
pub use error::{Error, Result};
pub use mapper::{lower_layer, schedule_ce, DataflowProgram};
pub use metrics::{compare, energy, Comparison, CsvRow, EnergyBreakdown, EnergyTable};
pub use model::{
    conv_reference, count_mandatory_macs, generate_sparse_tensor, reuse_factor, AccTensor, ConvLayerSpec, Dims3,
    MacStats, Precision, QTensor, Scalar, SparsityProfile, Tensor3, Workload,
};
