//! Experiment specification: a workload plus a configuration grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer};

use s2sim_core::{ConvLayerSpec, EnergyTable, FifoDepth, SimConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Label written to the `workload` CSV column.
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Synthetic workloads are drawn for seeds `seed .. seed + replicates`.
    #[serde(default = "one", deserialize_with = "positive")]
    pub replicates: u64,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub grid: Grid,
    /// Also run the dense baseline at every point.
    #[serde(default = "yes")]
    pub naive: bool,
    #[serde(default)]
    pub energy: EnergyTable,
    /// Output directory, relative to the spec file.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    /// Random tensors at the grid's densities.
    Synthetic { layer: ConvLayerSpec },
    /// Tensors from files; grid densities are ignored.
    Tensors {
        layer: ConvLayerSpec,
        input: PathBuf,
        kernels: Vec<PathBuf>,
    },
}

impl WorkloadSpec {
    pub fn layer(&self) -> &ConvLayerSpec {
        match self {
            WorkloadSpec::Synthetic { layer } | WorkloadSpec::Tensors { layer, .. } => layer,
        }
    }
}

/// `(weight, feature)` density pairs, either listed or as the product of
/// two axes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Densities {
    Pairs(Vec<[f64; 2]>),
    Axes { weight: Vec<f64>, feature: Vec<f64> },
}

impl Densities {
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        match self {
            Densities::Pairs(p) => p.iter().map(|&[w, f]| (w, f)).collect(),
            Densities::Axes { weight, feature } => weight
                .iter()
                .flat_map(|&w| feature.iter().map(move |&f| (w, f)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// `[rows, cols]` array shapes.
    #[serde(default = "default_arrays")]
    pub arrays: Vec<[usize; 2]>,
    /// `[w, f, wf]` FIFO depths; each a number or `"inf"`.
    #[serde(default = "default_depths")]
    pub depths: Vec<[FifoDepth; 3]>,
    #[serde(default = "default_ratios")]
    pub ratios: Vec<u32>,
    #[serde(default = "default_ce")]
    pub ce: Vec<bool>,
    #[serde(default = "default_densities")]
    pub densities: Densities,
    #[serde(default = "default_ratio16")]
    pub ratio16: Vec<f64>,
    #[serde(default = "default_group_len", deserialize_with = "group_len")]
    pub group_len: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            arrays: default_arrays(),
            depths: default_depths(),
            ratios: default_ratios(),
            ce: default_ce(),
            densities: default_densities(),
            ratio16: default_ratio16(),
            group_len: default_group_len(),
        }
    }
}

fn default_name() -> String {
    "synthetic".into()
}
fn one() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_arrays() -> Vec<[usize; 2]> {
    vec![[16, 16]]
}
fn default_depths() -> Vec<[FifoDepth; 3]> {
    vec![[FifoDepth::finite(4); 3]]
}
fn default_ratios() -> Vec<u32> {
    vec![4]
}
fn default_ce() -> Vec<bool> {
    vec![false]
}
fn default_densities() -> Densities {
    Densities::Pairs(vec![[0.3, 0.3]])
}
fn default_ratio16() -> Vec<f64> {
    vec![0.0]
}
fn default_group_len() -> usize {
    s2sim_core::ecoo::DEFAULT_GROUP_LEN
}

fn group_len<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
    let g = usize::deserialize(d)?;
    s2sim_core::ecoo::check_group_len(g).map_err(serde::de::Error::custom)?;
    Ok(g)
}

fn positive<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    match u64::deserialize(d)? {
        0 => Err(serde::de::Error::custom("must be at least 1")),
        n => Ok(n),
    }
}

impl ExperimentSpec {
    /// Parses and validates; errors carry the JSON path of the bad field.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| CliError::Spec {
            pointer: json_pointer(&e.path().to_string()),
            reason: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut spec = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let WorkloadSpec::Tensors { input, kernels, .. } = &mut spec.workload {
            *input = base.join(&*input);
            for k in kernels {
                *k = base.join(&*k);
            }
        }
        if let Some(out) = &mut spec.output {
            *out = base.join(&*out);
        }
        Ok(spec)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |pointer: &str, reason: String| CliError::Spec {
            pointer: pointer.into(),
            reason,
        };
        self.workload
            .layer()
            .validate()
            .map_err(|e| bad("/workload", e.to_string()))?;
        self.energy.validate().map_err(|e| bad("/energy", e.to_string()))?;
        let g = &self.grid;
        for (name, empty) in [
            ("arrays", g.arrays.is_empty()),
            ("depths", g.depths.is_empty()),
            ("ratios", g.ratios.is_empty()),
            ("ce", g.ce.is_empty()),
            ("densities", g.densities.pairs().is_empty()),
            ("ratio16", g.ratio16.is_empty()),
        ] {
            if empty {
                return Err(bad(&format!("/grid/{name}"), "must not be empty".into()));
            }
        }
        for (i, &(w, f)) in g.densities.pairs().iter().enumerate() {
            if !(w > 0.0 && w <= 1.0 && f > 0.0 && f <= 1.0) {
                return Err(bad(&format!("/grid/densities/{i}"), format!("densities ({w}, {f}) outside (0, 1]")));
            }
        }
        for (i, r) in g.ratio16.iter().enumerate() {
            if !(0.0..=1.0).contains(r) {
                return Err(bad(&format!("/grid/ratio16/{i}"), format!("{r} outside [0, 1]")));
            }
        }
        if let WorkloadSpec::Tensors { layer, kernels, .. } = &self.workload {
            if kernels.len() != layer.num_kernels {
                return Err(bad(
                    "/workload/tensors/kernels",
                    format!("{} kernel files for {} kernels", kernels.len(), layer.num_kernels),
                ));
            }
        }
        for p in self.points() {
            p.config
                .validate()
                .map_err(|e| bad("/grid", format!("point {}: {e}", p.index)))?;
        }
        Ok(())
    }

    /// Workload variants in grid order: seed, then densities, then ratio16.
    pub fn workload_keys(&self) -> Vec<WorkloadKey> {
        if let WorkloadSpec::Tensors { .. } = self.workload {
            return vec![WorkloadKey {
                seed: self.seed,
                densities: None,
                ratio16: None,
            }];
        }
        let mut keys = Vec::new();
        for seed in self.seed..self.seed + self.replicates {
            for &d in &self.grid.densities.pairs() {
                for &r in &self.grid.ratio16 {
                    keys.push(WorkloadKey {
                        seed,
                        densities: Some(d),
                        ratio16: Some(r),
                    });
                }
            }
        }
        keys
    }

    /// Every grid point; workload variants outermost, then arrays, depths,
    /// ratios and CE.
    pub fn points(&self) -> Vec<GridPoint> {
        let g = &self.grid;
        let mut out = Vec::new();
        for workload in 0..self.workload_keys().len() {
            for &[rows, cols] in &g.arrays {
                for &[w, f, wf] in &g.depths {
                    for &ratio in &g.ratios {
                        for &ce in &g.ce {
                            let mut config = SimConfig::new(rows, cols)
                                .with_depths(w, f, wf)
                                .with_ratio(ratio)
                                .with_group_len(g.group_len)
                                .with_ce(ce);
                            config.energy = self.energy;
                            out.push(GridPoint {
                                index: out.len(),
                                workload,
                                config,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadKey {
    pub seed: u64,
    /// `(weight, feature)`; `None` for file workloads.
    pub densities: Option<(f64, f64)>,
    pub ratio16: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    /// Index into [`ExperimentSpec::workload_keys`].
    pub workload: usize,
    pub config: SimConfig,
}

/// `grid.depths[0]` becomes `/grid/depths/0`.
fn json_pointer(path: &str) -> String {
    if path == "." {
        return "/".into();
    }
    let mut out = String::new();
    for part in path.split('.') {
        let mut rest = part;
        while let Some(open) = rest.find('[') {
            if open > 0 {
                out.push('/');
                out.push_str(&rest[..open]);
            }
            let close = rest[open..].find(']').map_or(rest.len(), |c| open + c);
            out.push('/');
            out.push_str(&rest[open + 1..close]);
            rest = rest.get(close + 1..).unwrap_or("");
        }
        if !rest.is_empty() {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}
