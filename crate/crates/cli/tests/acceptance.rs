//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p s2sim-cli --test acceptance -- --nocapture` to
//! see the report.

use std::collections::BTreeMap;
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use s2sim_cli::{run_spec, ExperimentSpec, Mode};
use s2sim_core::ecoo::aligned_pairs_oracle;
use s2sim_core::{
    compare, conv_reference, extract_outputs, simulate, simulate_naive, ConvLayerSpec, Dims3, FifoDepth, QTensor,
    Scalar, SimConfig, SimReport, Simulator, SparsityProfile, Tensor3, Workload,
};

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: u8, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

/// 3x3x32 stride-1 layer with 16 kernels and a 16x16 output plane.
fn conv3x3() -> ConvLayerSpec {
    ConvLayerSpec::new(Dims3::new(3, 3, 32), 16, Dims3::new(18, 18, 32), 1, 0)
}

fn conv1x1() -> ConvLayerSpec {
    ConvLayerSpec::new(Dims3::new(1, 1, 32), 16, Dims3::new(16, 16, 32), 1, 0)
}

const SEED: u64 = 1;

fn run_s2(w: &Workload, cfg: &SimConfig) -> SimReport {
    simulate(&cfg.program_for(w).unwrap(), cfg).unwrap()
}

fn run_pair(w: &Workload, cfg: &SimConfig) -> (SimReport, SimReport) {
    let p = cfg.program_for(w).unwrap();
    (simulate(&p, cfg).unwrap(), simulate_naive(&p, cfg).unwrap())
}

fn depth(n: Option<usize>) -> FifoDepth {
    FifoDepth(n)
}

fn geomean(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

fn random_layer(rng: &mut ChaCha8Rng) -> ConvLayerSpec {
    loop {
        let layer = draw_layer(rng);
        if layer.validate().is_ok() {
            return layer;
        }
    }
}

fn draw_layer(rng: &mut ChaCha8Rng) -> ConvLayerSpec {
    let kh = rng.gen_range(1..=3);
    let kw = rng.gen_range(1..=3);
    let c = rng.gen_range(1..=24);
    let stride = rng.gen_range(1..=2);
    let padding = rng.gen_range(0..=1);
    let h = rng.gen_range(kh.max(2)..=8);
    let w = rng.gen_range(kw.max(2)..=8);
    let mut layer = ConvLayerSpec::new(Dims3::new(kh, kw, c), rng.gen_range(1..=20), Dims3::new(h, w, c), stride, padding);
    layer.relu = rng.gen_bool(0.3);
    layer
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let depths = [Some(2), Some(4), Some(8), None];
    let mut failures = Vec::new();
    let mut mixed_runs = 0;
    let instances = 216;
    for i in 0..instances {
        let layer = random_layer(&mut rng);
        let ratio16 = [0.0, 0.035, 0.5][i % 3];
        let prof = SparsityProfile::new(rng.gen_range(0.05..=1.0), rng.gen_range(0.05..=1.0), ratio16, rng.gen());
        let w = prof.synthesize(&layer).unwrap();
        let cfg = SimConfig::new([1, 4, 8, 16][rng.gen_range(0..4)], [1, 4, 8, 16][rng.gen_range(0..4)])
            .with_depth(depth(depths[(i / 3) % 4]))
            .with_ratio([1, 2, 4, 8][(i / 12) % 4])
            .with_ce((i / 48) % 2 == 1)
            .with_group_len([4, 8, 16][rng.gen_range(0..3)]);
        let reference = conv_reference(&layer, &w.input, &w.kernels, layer.relu).unwrap();
        let p = cfg.program_for(&w).unwrap();
        mixed_runs += p.mixed as usize;
        for (tag, r) in [("s2", simulate(&p, &cfg)), ("naive", simulate_naive(&p, &cfg))] {
            match r.and_then(|r| extract_outputs(&r)) {
                Ok(out) if out == reference => {}
                Ok(_) => failures.push(format!("#{i} {tag} mismatch")),
                Err(e) => failures.push(format!("#{i} {tag}: {e}")),
            }
        }
    }
    verdict(
        1,
        "oracle equivalence",
        failures.is_empty(),
        format!(
            "{instances} instances ({mixed_runs} mixed), {} mismatches {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

/// Two groups of six: weights {1, 3} / {2}, features {1, 2, 5} / {0, 3}.
fn toy() -> (Workload, SimConfig) {
    let layer = ConvLayerSpec::new(Dims3::new(1, 1, 12), 1, Dims3::new(1, 1, 12), 1, 0);
    let mut w = vec![Scalar::ZERO; 12];
    let mut f = vec![Scalar::ZERO; 12];
    for (i, v) in [(1, 2), (3, 5), (8, 7)] {
        w[i] = Scalar::int8(v);
    }
    for (i, v) in [(1, 3), (2, 4), (5, 6), (6, 1), (9, 9)] {
        f[i] = Scalar::int8(v);
    }
    let wl = Workload {
        layer,
        input: Tensor3::from_vec(layer.input, f).unwrap(),
        kernels: vec![Tensor3::from_vec(layer.kernel, w).unwrap()],
    };
    let cfg = SimConfig::new(1, 1).with_group_len(6).with_ratio(1).with_depth(FifoDepth::finite(4));
    (wl, cfg)
}

fn truncate(w: &Workload, channels: usize) -> Workload {
    let layer = ConvLayerSpec::new(Dims3::new(1, 1, channels), 1, Dims3::new(1, 1, channels), 1, 0);
    Workload {
        layer,
        input: Tensor3::from_vec(layer.input, w.input.data()[..channels].to_vec()).unwrap(),
        kernels: vec![Tensor3::from_vec(layer.kernel, w.kernels[0].data()[..channels].to_vec()).unwrap()],
    }
}

fn criterion_2() -> Verdict {
    let (w, cfg) = toy();
    let p = cfg.program_for(&w).unwrap();
    let mut sim = Simulator::new(&p, &cfg).unwrap();
    sim.enable_trace();
    sim.run().unwrap();
    let ticks: Vec<u64> = sim.pe_trace(0, 0).unwrap().group_ticks.iter().map(|t| t + 1).collect();

    let one = run_pair(&truncate(&w, 6), &cfg).1.mac_cycles;
    let two = run_pair(&w, &cfg).1.mac_cycles;
    let per_group = two - one;
    verdict(
        2,
        "toy trace cycle fidelity",
        ticks == [5, 7] && per_group == 6,
        format!("group completions at DS ticks {ticks:?} (want [5, 7]); naive cycles per group {per_group} (want 6)"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let (mut groups, mut placeholders, mut wide, mut runs) = (0usize, 0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    while groups < 1000 {
        let g = rng.gen_range(1..=16);
        let channels = g * rng.gen_range(1..=3);
        let layer = ConvLayerSpec::new(Dims3::new(1, 1, channels), 1, Dims3::new(1, 1, channels), 1, 0);
        let draw = |rng: &mut ChaCha8Rng| -> QTensor {
            if rng.gen_bool(0.15) {
                return QTensor::zeros(layer.input);
            }
            let d = rng.gen_range(0.05..=1.0);
            let r16 = [0.0, 0.3, 1.0][rng.gen_range(0..3)];
            s2sim_core::generate_sparse_tensor(layer.input, d, r16, rng.gen()).unwrap()
        };
        let w = Workload {
            layer,
            kernels: vec![draw(&mut rng)],
            input: draw(&mut rng),
        };
        let cfg = SimConfig::new(1, 1)
            .with_group_len(g)
            .with_ratio(rng.gen_range(1..=4))
            .with_depth(FifoDepth::finite(rng.gen_range(1..=4)));
        let p = cfg.program_for(&w).unwrap();
        let mut sim = Simulator::new(&p, &cfg).unwrap();
        sim.enable_trace();
        sim.run().unwrap();
        let mut want = Vec::new();
        for (wg, d) in p.kernel_streams[0].groups().zip(&p.tiles[0].feature_directives[0]) {
            let fg = &p.group(d.group).triplets;
            placeholders += wg.iter().chain(fg).filter(|t| t.is_placeholder()).count();
            wide += wg.iter().chain(fg).filter(|t| t.tag16).count();
            want.extend(aligned_pairs_oracle(wg, fg));
            groups += 1;
        }
        let mut got = sim.pe_trace(0, 0).unwrap().pairs.clone();
        got.sort();
        want.sort();
        if got != want {
            failures.push(format!("run {runs}: {} pairs vs oracle {}", got.len(), want.len()));
        }
        runs += 1;
    }
    verdict(
        3,
        "DS pair completeness",
        failures.is_empty(),
        format!(
            "{groups} group pairs in {runs} runs ({placeholders} placeholder, {wide} 16-bit triplets), {} mismatches {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn criterion_4() -> Verdict {
    let w = SparsityProfile::new(0.3, 0.3, 0.0, SEED).synthesize(&conv3x3()).unwrap();
    let depths = [Some(2), Some(4), Some(8), Some(16), None];
    let ratios = [1u32, 2, 4, 8];
    let mut cyc: BTreeMap<(u32, usize), (u64, u64)> = BTreeMap::new();
    for &r in &ratios {
        for (di, &d) in depths.iter().enumerate() {
            let cfg = SimConfig::new(16, 16).with_ratio(r).with_depth(depth(d));
            let rep = run_s2(&w, &cfg);
            cyc.insert((r, di), (rep.ds_cycles, rep.mac_cycles));
        }
    }
    let mac = |r: u32, di: usize| cyc[&(r, di)].1 as f64;

    let mut monotone = true;
    for &r in &ratios {
        for di in 1..depths.len() {
            monotone &= cyc[&(r, di)].0 <= cyc[&(r, di - 1)].0 && cyc[&(r, di)].1 <= cyc[&(r, di - 1)].1;
        }
    }
    for di in 0..depths.len() {
        for ri in 1..ratios.len() {
            monotone &= cyc[&(ratios[ri], di)].1 <= cyc[&(ratios[ri - 1], di)].1;
        }
    }
    // each gain is the geometric mean over the other axis of the grid
    let depth_gain = geomean(&ratios.map(|r| mac(r, 0) / mac(r, 1)));
    let r24: Vec<f64> = (0..depths.len()).map(|di| mac(2, di) / mac(4, di)).collect();
    let r48: Vec<f64> = (0..depths.len()).map(|di| mac(4, di) / mac(8, di)).collect();
    let (g24, g48) = (geomean(&r24), geomean(&r48));
    let pass = monotone && (1.05..=1.4).contains(&depth_gain) && (1.2..=1.8).contains(&g24) && g48 <= 1.25;
    verdict(
        4,
        "depth/ratio trend",
        pass,
        format!(
            "depth (2,2,2)->(4,4,4) gain {depth_gain:.3} in [1.05, 1.4]; R 2->4 gain {g24:.3} in [1.2, 1.8] \
             (per depth {}); R 4->8 gain {g48:.3} <= 1.25; monotone {monotone}",
            r24.iter().map(|g| format!("{g:.2}")).collect::<Vec<_>>().join("/")
        ),
    )
}

fn alexnet_like() -> Workload {
    SparsityProfile::new(0.36, 0.39, 0.0, SEED).synthesize(&conv3x3()).unwrap()
}

fn criterion_5() -> Verdict {
    let cfg = SimConfig::new(16, 16).with_ratio(4).with_depth(FifoDepth::finite(8));
    let (s2, nv) = run_pair(&alexnet_like(), &cfg);
    let speedup = compare(&s2, &nv).unwrap().speedup;
    verdict(
        5,
        "overall speedup band",
        (2.5..=4.0).contains(&speedup),
        format!(
            "speedup {speedup:.3} in [2.5, 4.0] (s2 {} vs naive {} cycles at 0.36/0.39, R=4, depth 8, 16x16)",
            s2.mac_cycles, nv.mac_cycles
        ),
    )
}

fn criterion_6() -> Verdict {
    // dense generated model, as in the mixed-precision experiment
    let layer = conv3x3();
    let base = SparsityProfile::new(1.0, 1.0, 0.0, SEED).synthesize(&layer).unwrap();
    let mixed = SparsityProfile::new(1.0, 1.0, 0.035, SEED).synthesize(&layer).unwrap();
    let mut overheads = Vec::new();
    for d in [2, 4, 8, 16] {
        let cfg = SimConfig::new(16, 16).with_ratio(4).with_depth(FifoDepth::finite(d));
        let a = run_s2(&base, &cfg).mac_cycles as f64;
        let b = run_s2(&mixed, &cfg).mac_cycles as f64;
        overheads.push(b / a - 1.0);
    }
    let decreasing = overheads.windows(2).all(|p| p[1] < p[0]);
    let pass = (0.10..=0.25).contains(&overheads[0]) && overheads[2] <= 0.15 && decreasing;
    verdict(
        6,
        "mixed-precision overhead",
        pass,
        format!(
            "extra cycles at ratio16 3.5% for depths 2/4/8/16: {} (depth 2 in [10%, 25%], depth 8 <= 15%, strictly decreasing {decreasing})",
            overheads.iter().map(|o| format!("{:.1}%", o * 100.0)).collect::<Vec<_>>().join("/")
        ),
    )
}

fn ce_pair(layer: &ConvLayerSpec) -> (SimReport, SimReport) {
    let w = SparsityProfile::new(0.36, 0.39, 0.0, SEED).synthesize(layer).unwrap();
    let cfg = SimConfig::new(16, 16).with_ratio(4).with_depth(FifoDepth::finite(8));
    (run_s2(&w, &cfg.clone().with_ce(true)), run_s2(&w, &cfg))
}

fn criterion_7() -> Verdict {
    let (on, off) = ce_pair(&conv3x3());
    let c = compare(&on, &off).unwrap();
    let conserve3 = on.counters.fb_reads + on.counters.neighbor_reads == off.counters.fb_reads;
    let (on1, off1) = ce_pair(&conv1x1());
    let c1 = compare(&on1, &off1).unwrap();
    let conserve1 = on1.counters.fb_reads + on1.counters.neighbor_reads == off1.counters.fb_reads;
    let pass = (1.8..=3.0).contains(&c.fb_access_reduction)
        && c.capacity_reduction >= 1.5
        && c1.fb_access_reduction == 1.0
        && c1.capacity_reduction == 1.0
        && conserve3
        && conserve1;
    verdict(
        7,
        "CE memory efficiency",
        pass,
        format!(
            "3x3: FB read reduction {:.3} in [1.8, 3.0], capacity reduction {:.3} >= 1.5; \
             1x1: {:.3} / {:.3} (want 1.0 / 1.0); conservation {}",
            c.fb_access_reduction,
            c.capacity_reduction,
            c1.fb_access_reduction,
            c1.capacity_reduction,
            conserve3 && conserve1
        ),
    )
}

fn criterion_8() -> Verdict {
    let axis: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let cfg = SimConfig::new(16, 16).with_ratio(4).with_depth(FifoDepth::finite(8));
    let mut grid = BTreeMap::new();
    for (i, &wd) in axis.iter().enumerate() {
        for (j, &fd) in axis.iter().enumerate() {
            let w = SparsityProfile::new(wd, fd, 0.0, SEED).synthesize(&conv3x3()).unwrap();
            let (s2, nv) = run_pair(&w, &cfg);
            grid.insert((i, j), (s2.mac_cycles, nv.mac_cycles));
        }
    }
    let mut violations = Vec::new();
    for i in 0..10 {
        for j in 0..10 {
            let here = grid[&(i, j)].0;
            if i > 0 && here < grid[&(i - 1, j)].0 {
                violations.push(format!("wd {} -> {}", axis[i - 1], axis[i]));
            }
            if j > 0 && here < grid[&(i, j - 1)].0 {
                violations.push(format!("fd {} -> {}", axis[j - 1], axis[j]));
            }
        }
    }
    let losses: Vec<_> = grid
        .iter()
        .filter(|(&(i, j), &(s, n))| i < 5 && j < 5 && s >= n)
        .map(|(&(i, j), _)| (axis[i], axis[j]))
        .collect();
    let worst = grid
        .iter()
        .filter(|(&(i, j), _)| i < 5 && j < 5)
        .map(|(_, &(s, n))| n as f64 / s as f64)
        .fold(f64::INFINITY, f64::min);
    verdict(
        8,
        "density sensitivity shape",
        violations.is_empty() && losses.is_empty(),
        format!(
            "100 points; monotonicity violations {:?}; naive wins at {:?} of 25 low-density points (min speedup {worst:.2})",
            violations, losses
        ),
    )
}

fn criterion_9() -> Verdict {
    let spec = ExperimentSpec::from_json(
        r#"{
            "name": "determinism",
            "seed": 9,
            "workload": { "synthetic": { "layer": { "kernel": [3, 3, 12], "num_kernels": 6, "input": [7, 7, 12], "padding": 1 } } },
            "grid": {
                "arrays": [[4, 4], [8, 2]],
                "depths": [[2, 2, 2], ["inf", "inf", "inf"]],
                "ratios": [1, 4],
                "ce": [false, true],
                "densities": [[0.3, 0.5]],
                "ratio16": [0.0, 0.1]
            }
        }"#,
    )
    .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let a = run_spec(&spec, Some(dirs[0].path()), 1, Mode::Run).unwrap();
    let b = run_spec(&spec, Some(dirs[1].path()), 3, Mode::Run).unwrap();
    let csv = |i: usize| fs::read(dirs[i].path().join("results.csv")).unwrap();
    let same_csv = csv(0) == csv(1);
    let mut same_reports = true;
    let mut n = 0;
    for e in fs::read_dir(dirs[0].path().join("reports")).unwrap() {
        let e = e.unwrap();
        let other = dirs[1].path().join("reports").join(e.file_name());
        same_reports &= fs::read(e.path()).unwrap() == fs::read(other).unwrap_or_default();
        n += 1;
    }
    let rows = String::from_utf8(csv(0)).unwrap().lines().count() - 1;
    verdict(
        9,
        "determinism",
        same_csv && same_reports && a.ok() && b.ok() && rows == a.points,
        format!("{rows} CSV rows and {n} reports, byte-identical across 1 and 3 workers: csv {same_csv}, reports {same_reports}"),
    )
}

fn criterion_10() -> Verdict {
    let cfg = SimConfig::new(16, 16).with_ratio(4).with_depth(FifoDepth::finite(8));
    let (s2, nv) = run_pair(&alexnet_like(), &cfg);
    let (on, off) = ce_pair(&conv3x3());
    let pass = s2.energy.onchip < nv.energy.onchip && on.energy.onchip <= off.energy.onchip && on.energy.total <= off.energy.total;
    verdict(
        10,
        "energy ratio sanity",
        pass,
        format!(
            "on-chip s2 {:.0} pJ < naive {:.0} pJ; CE on {:.0} <= off {:.0} pJ on-chip, {:.0} <= {:.0} pJ with DRAM",
            s2.energy.onchip, nv.energy.onchip, on.energy.onchip, off.energy.onchip, on.energy.total, off.energy.total
        ),
    )
}

#[test]
fn acceptance() {
    let checks: [fn() -> Verdict; 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let mut failed = Vec::new();
    for check in checks {
        let v = check();
        println!(
            "criterion {:>2} {} {}: {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
        if !v.pass {
            failed.push(v.id);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
