//! Tensors, convolution layer shapes, synthetic sparse workloads and the
//! golden dense convolution every simulated output is checked against.
//!
//! Tensors are stored row-major with the channel axis innermost, so element
//! `(y, x, c)` of a `height x width x depth` tensor lives at
//! `(y * width + x) * depth + c`. Grouping along channels therefore walks
//! contiguous memory.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Storage precision of a quantized value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    Bits8,
    Bits16,
}

/// A signed fixed-point value tagged with the precision it is stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scalar {
    value: i16,
    precision: Precision,
}

impl Scalar {
    pub const ZERO: Scalar = Scalar {
        value: 0,
        precision: Precision::Bits8,
    };

    /// Builds a scalar, rejecting values that do not fit `precision`.
    pub fn new(value: i32, precision: Precision) -> Result<Self> {
        let fits = match precision {
            Precision::Bits8 => (-128..=127).contains(&value),
            Precision::Bits16 => (-32768..=32767).contains(&value),
        };
        if !fits {
            return Err(invalid(format!("{value} does not fit {precision:?}")));
        }
        Ok(Scalar {
            value: value as i16,
            precision,
        })
    }

    pub fn int8(value: i8) -> Self {
        Scalar {
            value: value as i16,
            precision: Precision::Bits8,
        }
    }

    pub fn int16(value: i16) -> Self {
        Scalar {
            value,
            precision: Precision::Bits16,
        }
    }

    pub fn value(&self) -> i32 {
        self.value as i32
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn is_wide(&self) -> bool {
        self.precision == Precision::Bits16
    }
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::ZERO
    }
}

/// `height x width x depth` extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims3 {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
}

impl Dims3 {
    pub const fn new(height: usize, width: usize, depth: usize) -> Self {
        Dims3 {
            height,
            width,
            depth,
        }
    }

    pub fn count(&self) -> usize {
        self.height * self.width * self.depth
    }

    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(y < self.height && x < self.width && c < self.depth);
        (y * self.width + x) * self.depth + c
    }
}

impl From<[usize; 3]> for Dims3 {
    fn from(d: [usize; 3]) -> Self {
        Dims3::new(d[0], d[1], d[2])
    }
}

impl From<Dims3> for [usize; 3] {
    fn from(d: Dims3) -> Self {
        [d.height, d.width, d.depth]
    }
}

impl std::fmt::Display for Dims3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.depth)
    }
}

/// Dense three-dimensional tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor3<T> {
    dims: Dims3,
    data: Vec<T>,
}

/// Quantized feature map or kernel.
pub type QTensor = Tensor3<Scalar>;

/// Wide accumulator output of a convolution.
pub type AccTensor = Tensor3<i64>;

impl<T: Clone + Default> Tensor3<T> {
    pub fn zeros(dims: Dims3) -> Self {
        Tensor3 {
            dims,
            data: vec![T::default(); dims.count()],
        }
    }
}

impl<T> Tensor3<T> {
    pub fn from_vec(dims: Dims3, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.count() {
            return Err(Error::ShapeMismatch(format!(
                "{} elements supplied for a {dims} tensor",
                data.len()
            )));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> &T {
        &self.data[self.dims.index(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, value: T) {
        let i = self.dims.index(y, x, c);
        self.data[i] = value;
    }

    /// Channel vector at spatial position `(y, x)`.
    pub fn fiber(&self, y: usize, x: usize) -> &[T] {
        let start = self.dims.index(y, x, 0);
        &self.data[start..start + self.dims.depth]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

impl QTensor {
    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|s| !s.is_zero()).count()
    }

    pub fn wide_nonzeros(&self) -> usize {
        self.data
            .iter()
            .filter(|s| !s.is_zero() && s.is_wide())
            .count()
    }

    pub fn has_wide(&self) -> bool {
        self.data.iter().any(Scalar::is_wide)
    }
}

/// Shape of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    /// Kernel extents `H x L x D`.
    pub kernel: Dims3,
    /// Number of kernels `D'`.
    pub num_kernels: usize,
    /// Input extents; depth must equal the kernel depth.
    pub input: Dims3,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    /// Apply ReLU to the extracted outputs.
    #[serde(default)]
    pub relu: bool,
}

fn one() -> usize {
    1
}

impl ConvLayerSpec {
    pub fn new(kernel: Dims3, num_kernels: usize, input: Dims3, stride: usize, padding: usize) -> Self {
        ConvLayerSpec {
            kernel,
            num_kernels,
            input,
            stride,
            padding,
            relu: false,
        }
    }

    pub fn with_relu(mut self, relu: bool) -> Self {
        self.relu = relu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kernel;
        let i = self.input;
        if k.count() == 0 || i.count() == 0 || self.num_kernels == 0 {
            return Err(invalid("layer dimensions must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("stride must be >= 1"));
        }
        if k.depth != i.depth {
            return Err(Error::ShapeMismatch(format!(
                "kernel depth {} != input depth {}",
                k.depth, i.depth
            )));
        }
        let span = |n: usize, kk: usize| -> Result<()> {
            let padded = n + 2 * self.padding;
            if padded < kk {
                return Err(invalid(format!("kernel extent {kk} exceeds padded input {padded}")));
            }
            if !(padded - kk).is_multiple_of(self.stride) {
                return Err(invalid(format!(
                    "(input {n} + 2*{} - kernel {kk}) is not divisible by stride {}",
                    self.padding, self.stride
                )));
            }
            Ok(())
        };
        span(i.height, k.height)?;
        span(i.width, k.width)
    }

    /// `H' x L' x D'`.
    pub fn output_dims(&self) -> Dims3 {
        let out = |n: usize, kk: usize| (n + 2 * self.padding - kk) / self.stride + 1;
        Dims3::new(
            out(self.input.height, self.kernel.height),
            out(self.input.width, self.kernel.width),
            self.num_kernels,
        )
    }

    /// Input coordinate read by tap `(kh, kw)` of output `(oy, ox)`, or
    /// `None` if it lands in the zero padding.
    pub fn input_coord(&self, oy: usize, ox: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + kh) as isize - self.padding as isize;
        let x = (ox * self.stride + kw) as isize - self.padding as isize;
        let inside = y >= 0
            && x >= 0
            && (y as usize) < self.input.height
            && (x as usize) < self.input.width;
        inside.then_some((y as usize, x as usize))
    }

    pub fn check_tensors(&self, input: &QTensor, kernels: &[QTensor]) -> Result<()> {
        self.validate()?;
        if input.dims() != self.input {
            return Err(Error::ShapeMismatch(format!(
                "input is {} but layer expects {}",
                input.dims(),
                self.input
            )));
        }
        if kernels.len() != self.num_kernels {
            return Err(Error::ShapeMismatch(format!(
                "{} kernels supplied, layer has {}",
                kernels.len(),
                self.num_kernels
            )));
        }
        if let Some((k, t)) = kernels.iter().enumerate().find(|(_, t)| t.dims() != self.kernel) {
            return Err(Error::ShapeMismatch(format!(
                "kernel {k} is {} but layer expects {}",
                t.dims(),
                self.kernel
            )));
        }
        Ok(())
    }
}

/// Densities and mixed-precision ratio for synthetic workloads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub weight_density: f64,
    pub feature_density: f64,
    #[serde(default)]
    pub ratio16: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Concrete tensors for one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub layer: ConvLayerSpec,
    pub input: QTensor,
    pub kernels: Vec<QTensor>,
}

impl SparsityProfile {
    pub fn new(weight_density: f64, feature_density: f64, ratio16: f64, seed: u64) -> Self {
        SparsityProfile {
            weight_density,
            feature_density,
            ratio16,
            seed,
        }
    }

    /// Generates the input feature map and all kernels for `layer`. Each
    /// tensor draws from its own stream derived from `seed`.
    pub fn synthesize(&self, layer: &ConvLayerSpec) -> Result<Workload> {
        layer.validate()?;
        let input = generate_sparse_tensor(layer.input, self.feature_density, self.ratio16, self.seed)?;
        let kernels = (0..layer.num_kernels)
            .map(|k| {
                let seed = self
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(k as u64 + 1);
                generate_sparse_tensor(layer.kernel, self.weight_density, self.ratio16, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Workload {
            layer: *layer,
            input,
            kernels,
        })
    }
}

/// Draws a tensor with exactly `round(density * count)` non-zeros at
/// uniformly chosen positions, `round(ratio16 * nnz)` of them 16-bit.
/// For a fixed seed the support only grows with `density`.
///
/// 8-bit magnitudes are uniform in `[1, 127]`, 16-bit in `[128, 32767]`;
/// signs are uniform. Output is a pure function of the arguments.
pub fn generate_sparse_tensor(dims: Dims3, density: f64, ratio16: f64, seed: u64) -> Result<QTensor> {
    if dims.count() == 0 {
        return Err(invalid(format!("zero-sized tensor {dims}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid(format!("density {density} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&ratio16) {
        return Err(invalid(format!("16-bit ratio {ratio16} outside [0, 1]")));
    }
    let count = dims.count();
    let nnz = ((density * count as f64).round() as usize).min(count);
    let n16 = ((ratio16 * nnz as f64).round() as usize).min(nnz);

    // one permutation per seed: a higher density extends the same support
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);

    let mut data = vec![Scalar::ZERO; count];
    for (i, &pos) in order[..nnz].iter().enumerate() {
        let negative = rng.gen_bool(0.5);
        data[pos] = if i < n16 {
            let m: i16 = rng.gen_range(128..=32767);
            Scalar::int16(if negative { -m } else { m })
        } else {
            let m: i8 = rng.gen_range(1..=127);
            Scalar::int8(if negative { -m } else { m })
        };
    }
    Tensor3::from_vec(dims, data)
}

/// Dense convolution of `input` with every kernel, accumulated in checked
/// 64-bit arithmetic. Padding taps contribute nothing.
pub fn conv_reference(
    layer: &ConvLayerSpec,
    input: &QTensor,
    kernels: &[QTensor],
    apply_relu: bool,
) -> Result<AccTensor> {
    layer.check_tensors(input, kernels)?;
    let out = layer.output_dims();
    let k = layer.kernel;
    let mut result = AccTensor::zeros(out);
    for oy in 0..out.height {
        for ox in 0..out.width {
            for (kidx, kernel) in kernels.iter().enumerate() {
                let mut acc: i64 = 0;
                for kh in 0..k.height {
                    for kw in 0..k.width {
                        let Some((y, x)) = layer.input_coord(oy, ox, kh, kw) else {
                            continue;
                        };
                        for (w, f) in kernel.fiber(kh, kw).iter().zip(input.fiber(y, x)) {
                            let p = w.value() as i64 * f.value() as i64;
                            acc = acc.checked_add(p).ok_or_else(|| {
                                Error::Overflow(format!("output ({oy},{ox},{kidx})"))
                            })?;
                        }
                    }
                }
                if apply_relu && acc < 0 {
                    acc = 0;
                }
                result.set(oy, ox, kidx, acc);
            }
        }
    }
    Ok(result)
}

/// MAC census of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacStats {
    /// `H'·L'·D'·H·L·D`, padding taps included.
    pub total_macs: u64,
    /// MACs whose operands are both non-zero.
    pub mandatory_macs: u64,
    /// `mandatory_macs / total_macs`.
    pub ratio: f64,
    /// Extra 8-bit sub-products needed when either operand is 16-bit
    /// (1 for one wide operand, 3 for two).
    pub mixed_expansion: u64,
}

pub fn count_mandatory_macs(input: &QTensor, kernels: &[QTensor], layer: &ConvLayerSpec) -> Result<MacStats> {
    layer.check_tensors(input, kernels)?;
    let out = layer.output_dims();
    let k = layer.kernel;
    let total = (out.count() * k.count()) as u64;
    let mut mandatory = 0u64;
    let mut expansion = 0u64;
    for oy in 0..out.height {
        for ox in 0..out.width {
            for kh in 0..k.height {
                for kw in 0..k.width {
                    let Some((y, x)) = layer.input_coord(oy, ox, kh, kw) else {
                        continue;
                    };
                    let fib = input.fiber(y, x);
                    for kernel in kernels {
                        for (w, f) in kernel.fiber(kh, kw).iter().zip(fib) {
                            if !w.is_zero() && !f.is_zero() {
                                mandatory += 1;
                                let lanes = (1 + w.is_wide() as u64) * (1 + f.is_wide() as u64);
                                expansion += lanes - 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(MacStats {
        total_macs: total,
        mandatory_macs: mandatory,
        ratio: if total == 0 { 0.0 } else { mandatory as f64 / total as f64 },
        mixed_expansion: expansion,
    })
}

/// Average number of MACs each weight participates in: `H'·L'`.
pub fn reuse_factor(layer: &ConvLayerSpec) -> Result<f64> {
    layer.validate()?;
    let out = layer.output_dims();
    let macs = (out.count() * layer.kernel.count()) as f64;
    let params = (layer.kernel.count() * layer.num_kernels) as f64;
    Ok(macs / params)
}
