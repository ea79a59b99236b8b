#![allow(dead_code)]

use s2sim_core::model::{Dims3, Precision, QTensor, Scalar, Tensor3};
use s2sim_core::{ConvLayerSpec, DataflowProgram, FifoDepth, SimConfig, Workload};

/// Two-group toy stream on one PE, `G = 6`.
///
/// Group n: weights at offsets {1, 3}, features at {1, 2, 5}.
/// Group n+1: weight at {2}, features at {0, 3}.
pub fn toy_workload() -> Workload {
    let layer = ConvLayerSpec::new(Dims3::new(1, 1, 12), 1, Dims3::new(1, 1, 12), 1, 0);
    let mut w = vec![Scalar::ZERO; 12];
    let mut f = vec![Scalar::ZERO; 12];
    for (i, v) in [(1, 2), (3, 5), (6 + 2, 7)] {
        w[i] = Scalar::int8(v);
    }
    for (i, v) in [(1, 3), (2, 4), (5, 6), (6, 1), (6 + 3, 9)] {
        f[i] = Scalar::int8(v);
    }
    Workload {
        layer,
        input: Tensor3::from_vec(layer.input, f).unwrap(),
        kernels: vec![Tensor3::from_vec(layer.kernel, w).unwrap()],
    }
}

pub fn toy_config() -> SimConfig {
    SimConfig::new(1, 1).with_group_len(6).with_ratio(1).with_depth(FifoDepth::finite(4))
}

pub fn toy_program() -> DataflowProgram {
    toy_config().program_for(&toy_workload()).unwrap()
}

pub fn tensor(dims: Dims3, values: &[(i32, Precision)]) -> QTensor {
    Tensor3::from_vec(dims, values.iter().map(|&(v, p)| Scalar::new(v, p).unwrap()).collect()).unwrap()
}
