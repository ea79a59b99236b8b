//! Experiment orchestration for the s2sim simulator: spec parsing, grid
//! fan-out, oracle checks and CSV/JSON emission.

pub mod spec;

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use s2sim_core::{
    conv_reference, count_mandatory_macs, extract_outputs, simulate, simulate_naive, AccTensor, CsvRow, SimConfig,
    SimReport, SparsityProfile, Workload,
};

pub use spec::{Densities, ExperimentSpec, Grid, GridPoint, WorkloadKey, WorkloadSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("spec error at {pointer}: {reason}")]
    Spec { pointer: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] s2sim_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Simulate, verify and emit artifacts.
    Run,
    /// Oracle and invariant checks only; nothing is written.
    Verify,
}

/// A synthesized or loaded workload with its reference outputs.
pub struct PreparedWorkload {
    pub key: WorkloadKey,
    pub workload: Workload,
    pub reference: AccTensor,
    /// `(weight density, feature density, ratio16)` for the CSV.
    pub densities: (f64, f64, f64),
}

/// Result of one grid point, in grid order.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub index: usize,
    pub config: SimConfig,
    pub row: Option<CsvRow>,
    pub s2: Option<SimReport>,
    pub naive: Option<SimReport>,
    /// Verification failures and engine errors.
    pub failures: Vec<String>,
}

#[derive(Debug, Default)]
pub struct Summary {
    pub points: usize,
    pub failures: Vec<String>,
    /// Written artifacts (run mode only).
    pub csv_path: Option<PathBuf>,
}

impl Summary {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn measured(w: &Workload) -> (f64, f64, f64) {
    let kcount: usize = w.kernels.iter().map(|k| k.data().len()).sum();
    let knnz: usize = w.kernels.iter().map(|k| k.nonzeros()).sum();
    let kwide: usize = w.kernels.iter().map(|k| k.wide_nonzeros()).sum();
    let nnz = knnz + w.input.nonzeros();
    let wide = kwide + w.input.wide_nonzeros();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (
        ratio(knnz, kcount),
        ratio(w.input.nonzeros(), w.input.data().len()),
        ratio(wide, nnz),
    )
}

/// Builds every workload variant of the spec, in key order.
pub fn prepare(spec: &ExperimentSpec) -> Result<Vec<PreparedWorkload>, CliError> {
    let keys = spec.workload_keys();
    keys.into_par_iter()
        .map(|key| {
            let (workload, densities) = match &spec.workload {
                WorkloadSpec::Synthetic { layer } => {
                    let (wd, fd) = key.densities.expect("synthetic key carries densities");
                    let r16 = key.ratio16.unwrap_or(0.0);
                    (SparsityProfile::new(wd, fd, r16, key.seed).synthesize(layer)?, (wd, fd, r16))
                }
                WorkloadSpec::Tensors { layer, input, kernels } => {
                    let w = Workload {
                        layer: *layer,
                        input: s2sim_core::io::read_tensor(input)?,
                        kernels: kernels
                            .iter()
                            .map(|p| s2sim_core::io::read_tensor(p))
                            .collect::<Result<_, _>>()?,
                    };
                    layer.check_tensors(&w.input, &w.kernels)?;
                    let d = measured(&w);
                    (w, d)
                }
            };
            let l = &workload.layer;
            let reference = conv_reference(l, &workload.input, &workload.kernels, l.relu)?;
            Ok(PreparedWorkload {
                key,
                workload,
                reference,
                densities,
            })
        })
        .collect()
}

/// Checks `report` against the reference and the counter invariants.
fn check_report(report: &SimReport, w: &PreparedWorkload, failures: &mut Vec<String>) {
    let tag = format!("{:?}", report.engine).to_lowercase();
    match extract_outputs(report) {
        Ok(out) if out == w.reference => {}
        Ok(_) => failures.push(format!("{tag}: outputs differ from the reference convolution")),
        Err(e) => failures.push(format!("{tag}: {e}")),
    }
    let layer = &w.workload.layer;
    let Ok(stats) = count_mandatory_macs(&w.workload.input, &w.workload.kernels, layer) else {
        failures.push(format!("{tag}: mandatory MAC count failed"));
        return;
    };
    let outputs = layer.output_dims().count() as u64;
    let c = &report.counters;
    let expected = match report.engine {
        s2sim_core::EngineKind::S2 => stats.mandatory_macs + stats.mixed_expansion + outputs,
        s2sim_core::EngineKind::Naive => stats.total_macs,
    };
    if c.mac_ops != expected {
        failures.push(format!("{tag}: mac_ops {} != expected {expected}", c.mac_ops));
    }
    if report.engine == s2sim_core::EngineKind::S2 && report.mac_cycles != report.ds_cycles.div_ceil(report.config.ratio as u64) {
        failures.push(format!("{tag}: mac_cycles is not ceil(ds_cycles / R)"));
    }
}

/// Simulates one point. In verify mode the CE conservation invariant is
/// also checked against a CE-off run.
pub fn run_point(spec: &ExperimentSpec, point: &GridPoint, w: &PreparedWorkload, mode: Mode) -> PointOutcome {
    let mut failures = Vec::new();
    let cfg = &point.config;
    let mut outcome = PointOutcome {
        index: point.index,
        config: cfg.clone(),
        row: None,
        s2: None,
        naive: None,
        failures: Vec::new(),
    };
    let program = match cfg.program_for(&w.workload) {
        Ok(p) => p,
        Err(e) => {
            outcome.failures.push(format!("point {}: {e}", point.index));
            return outcome;
        }
    };
    let s2 = match simulate(&program, cfg) {
        Ok(r) => {
            check_report(&r, w, &mut failures);
            Some(r)
        }
        Err(e) => {
            failures.push(format!("s2: {e}"));
            None
        }
    };
    let naive = if spec.naive || mode == Mode::Verify {
        match simulate_naive(&program, cfg) {
            Ok(r) => {
                check_report(&r, w, &mut failures);
                Some(r)
            }
            Err(e) => {
                failures.push(format!("naive: {e}"));
                None
            }
        }
    } else {
        None
    };
    if mode == Mode::Verify && cfg.ce_enabled {
        if let Some(on) = &s2 {
            let off_cfg = cfg.clone().with_ce(false);
            match off_cfg.program_for(&w.workload).and_then(|p| simulate(&p, &off_cfg)) {
                Ok(off) => {
                    let (a, b) = (&on.counters, &off.counters);
                    if a.fb_reads + a.neighbor_reads != b.fb_reads {
                        failures.push(format!(
                            "ce conservation: {} + {} != {}",
                            a.fb_reads, a.neighbor_reads, b.fb_reads
                        ));
                    }
                }
                Err(e) => failures.push(format!("ce-off run: {e}")),
            }
        }
    }
    if mode == Mode::Run {
        if let Some(s) = &s2 {
            let naive_ref = if spec.naive { naive.as_ref() } else { None };
            match CsvRow::new(&spec.name, w.densities, s, naive_ref) {
                Ok(row) => outcome.row = Some(row),
                Err(e) => failures.push(format!("metrics: {e}")),
            }
        }
    }
    outcome.failures = failures
        .into_iter()
        .map(|f| format!("point {} ({}): {f}", point.index, describe(cfg, &w.key)))
        .collect();
    outcome.s2 = s2;
    outcome.naive = if spec.naive { naive } else { None };
    outcome
}

fn describe(cfg: &SimConfig, key: &WorkloadKey) -> String {
    let mut s = format!(
        "{}x{} depths ({},{},{}) R={} G={} ce={} seed={}",
        cfg.rows, cfg.cols, cfg.w_depth, cfg.f_depth, cfg.wf_depth, cfg.ratio, cfg.group_len, cfg.ce_enabled, key.seed
    );
    if let Some((wd, fd)) = key.densities {
        s += &format!(" wd={wd} fd={fd}");
    }
    if let Some(r) = key.ratio16 {
        s += &format!(" ratio16={r}");
    }
    s
}

/// Runs every grid point on `jobs` threads; results come back in grid order.
pub fn execute(spec: &ExperimentSpec, jobs: usize, mode: Mode) -> Result<Vec<PointOutcome>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    pool.install(|| {
        let workloads = prepare(spec)?;
        let points = spec.points();
        info!("{} grid points over {} workloads", points.len(), workloads.len());
        let mut out: Vec<PointOutcome> = points
            .par_iter()
            .map(|p| run_point(spec, p, &workloads[p.workload], mode))
            .collect();
        out.sort_by_key(|o| o.index);
        Ok(out)
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `results.csv` and `reports/point_NNNN_{s2,naive}.json` under `out`.
pub fn write_artifacts(out: &Path, outcomes: &[PointOutcome]) -> Result<PathBuf, CliError> {
    let reports = out.join("reports");
    fs::create_dir_all(&reports).map_err(|source| CliError::Io {
        path: reports.clone(),
        source,
    })?;
    let csv_path = out.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for o in outcomes {
        if let Some(row) = &o.row {
            w.serialize(row)?;
        }
        for (tag, r) in [("s2", &o.s2), ("naive", &o.naive)] {
            if let Some(r) = r {
                let path = reports.join(format!("point_{:04}_{tag}.json", o.index));
                write_file(&path, r.to_json().as_bytes())?;
            }
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: csv_path.clone(),
        source,
    })?;
    Ok(csv_path)
}

/// Full `run` / `verify` pipeline.
pub fn run_spec(spec: &ExperimentSpec, out: Option<&Path>, jobs: usize, mode: Mode) -> Result<Summary, CliError> {
    let outcomes = execute(spec, jobs, mode)?;
    let mut summary = Summary {
        points: outcomes.len(),
        ..Default::default()
    };
    for o in &outcomes {
        for f in &o.failures {
            warn!("{f}");
        }
        summary.failures.extend(o.failures.iter().cloned());
    }
    if mode == Mode::Run {
        let dir = out
            .map(Path::to_path_buf)
            .or_else(|| spec.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        summary.csv_path = Some(write_artifacts(&dir, &outcomes)?);
    }
    Ok(summary)
}
