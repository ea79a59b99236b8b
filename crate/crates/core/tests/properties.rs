mod common;

use proptest::prelude::*;
use s2sim_core::ecoo::{aligned_pairs_oracle, pack_triplets, unpack_triplets};
use s2sim_core::mapper::footprint;
use s2sim_core::model::Dims3;
use s2sim_core::{
    compare, conv_reference, count_mandatory_macs, energy, generate_sparse_tensor, simulate, simulate_naive,
    CompressedStream, ConvLayerSpec, Counters, EnergyTable, FifoDepth, QTensor, Scalar, SimConfig, SparsityProfile,
    StreamKind,
};

fn scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        4 => Just(Scalar::ZERO),
        3 => any::<i8>().prop_map(Scalar::int8),
        1 => any::<i16>().prop_map(Scalar::int16),
    ]
}

fn fiber() -> impl Strategy<Value = (Vec<Scalar>, usize)> {
    (1usize..=40, 1usize..=20).prop_flat_map(|(len, g)| (prop::collection::vec(scalar(), len), Just(g)))
}

/// Direct six-loop convolution, no padding helpers shared with the crate.
fn brute_conv(layer: &ConvLayerSpec, input: &QTensor, kernels: &[QTensor]) -> Vec<i64> {
    let o = layer.output_dims();
    let (k, i) = (layer.kernel, layer.input);
    let mut out = vec![0i64; o.count()];
    for oy in 0..o.height {
        for ox in 0..o.width {
            for (kn, kt) in kernels.iter().enumerate() {
                let mut acc = 0i64;
                for ky in 0..k.height {
                    for kx in 0..k.width {
                        let y = (oy * layer.stride + ky) as isize - layer.padding as isize;
                        let x = (ox * layer.stride + kx) as isize - layer.padding as isize;
                        if y < 0 || x < 0 || y >= i.height as isize || x >= i.width as isize {
                            continue;
                        }
                        for c in 0..k.depth {
                            let f = input.get(y as usize, x as usize, c).value() as i64;
                            acc += f * kt.get(ky, kx, c).value() as i64;
                        }
                    }
                }
                out[(oy * o.width + ox) * o.depth + kn] = acc;
            }
        }
    }
    out
}

fn layer() -> impl Strategy<Value = ConvLayerSpec> {
    (1usize..=3, 1usize..=3, 1usize..=9, 1usize..=4, 0usize..=1, 1usize..=2, 3usize..=7, 3usize..=7)
        .prop_map(|(kh, kw, c, n, pad, stride, h, w)| {
            ConvLayerSpec::new(Dims3::new(kh, kw, c), n, Dims3::new(h, w, c), stride, pad)
        })
        .prop_filter("valid layer", |l| l.validate().is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ecoo_roundtrip((values, g) in fiber(), weight in any::<bool>()) {
        let kind = if weight { StreamKind::Weight } else { StreamKind::Feature };
        let mixed = values.iter().any(Scalar::is_wide);
        let s = CompressedStream::encode(&values, g, kind, mixed).unwrap();
        prop_assert_eq!(s.decode().unwrap(), values.clone());
        let groups = values.len().div_ceil(g);
        prop_assert_eq!(s.groups().count(), groups);
        let nnz = values.iter().filter(|v| !v.is_zero()).count();
        let wide = values.iter().filter(|v| v.is_wide()).count();
        let empty = values.chunks(g).filter(|c| c.iter().all(Scalar::is_zero)).count();
        prop_assert_eq!(s.len(), nnz + wide + empty);
        prop_assert_eq!(s.footprint_bits(), s.len() as u64 * s.layout().bits() as u64);
    }

    #[test]
    fn packed_triplets_roundtrip((values, g) in fiber()) {
        let s = CompressedStream::encode(&values, g, StreamKind::Weight, true).unwrap();
        let bytes = pack_triplets(&s.triplets, s.layout());
        prop_assert_eq!(bytes.len() as u64, s.footprint_bits().div_ceil(8));
        prop_assert_eq!(unpack_triplets(&bytes, s.len(), s.layout()).unwrap(), s.triplets.clone());
    }

    #[test]
    fn aligned_pairs_preserve_dot_product(
        (w, f, g) in (1usize..=40, 1usize..=16).prop_flat_map(|(len, g)| (
            prop::collection::vec(scalar(), len),
            prop::collection::vec(scalar(), len),
            Just(g),
        ))
    ) {
        let ws = CompressedStream::encode(&w, g, StreamKind::Weight, true).unwrap();
        let fs = CompressedStream::encode(&f, g, StreamKind::Feature, true).unwrap();
        let sum: i64 = ws
            .groups()
            .zip(fs.groups())
            .flat_map(|(a, b)| aligned_pairs_oracle(a, b))
            .map(|p| p.product())
            .sum();
        let dot: i64 = w.iter().zip(&f).map(|(a, b)| a.value() as i64 * b.value() as i64).sum();
        prop_assert_eq!(sum, dot);
    }

    #[test]
    fn conv_reference_matches_brute_force(l in layer(), wd in 0.05f64..=1.0, fd in 0.05f64..=1.0, seed in any::<u64>()) {
        let w = SparsityProfile::new(wd, fd, 0.2, seed).synthesize(&l).unwrap();
        let r = conv_reference(&l, &w.input, &w.kernels, false).unwrap();
        prop_assert_eq!(r.data().to_vec(), brute_conv(&l, &w.input, &w.kernels));
        let stats = count_mandatory_macs(&w.input, &w.kernels, &l).unwrap();
        prop_assert!(stats.mandatory_macs <= stats.total_macs);
        prop_assert_eq!(stats.total_macs, (l.output_dims().count() * l.kernel.count()) as u64);
    }

    #[test]
    fn support_grows_with_density(lo in 0.05f64..=1.0, hi in 0.05f64..=1.0, seed in any::<u64>()) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let dims = Dims3::new(4, 5, 6);
        let a = generate_sparse_tensor(dims, lo, 0.0, seed).unwrap();
        let b = generate_sparse_tensor(dims, hi, 0.0, seed).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(x.is_zero() || !y.is_zero());
        }
    }

    #[test]
    fn energy_is_linear_in_counters(a in 0u64..1000, b in 0u64..1000, k in 1u64..5) {
        let t = EnergyTable::default();
        let one = Counters { mac_ops: a, fb_reads: b, fifo_reads: a + b, dram_bytes: b, ..Default::default() };
        let scaled = Counters { mac_ops: a * k, fb_reads: b * k, fifo_reads: (a + b) * k, dram_bytes: b * k, ..Default::default() };
        let (e1, ek) = (energy(&one, &t), energy(&scaled, &t));
        prop_assert!((ek.total - e1.total * k as f64).abs() < 1e-6 * ek.total.max(1.0));
        let more = Counters { rf_hops: 1, ..one };
        prop_assert!(energy(&more, &t).total >= e1.total);
    }
}

#[test]
fn compare_is_antisymmetric() {
    let layer = ConvLayerSpec::new(Dims3::new(3, 3, 8), 4, Dims3::new(6, 6, 8), 1, 1);
    let w = SparsityProfile::new(0.4, 0.5, 0.0, 3).synthesize(&layer).unwrap();
    let cfg = SimConfig::new(4, 4);
    let p = cfg.program_for(&w).unwrap();
    let (s2, nv) = (simulate(&p, &cfg).unwrap(), simulate_naive(&p, &cfg).unwrap());
    let (ab, ba) = (compare(&s2, &nv).unwrap(), compare(&nv, &s2).unwrap());
    for (x, y) in [
        (ab.speedup, ba.speedup),
        (ab.onchip_ee_imp, ba.onchip_ee_imp),
        (ab.ee_imp_with_dram, ba.ee_imp_with_dram),
        (ab.fb_access_reduction, ba.fb_access_reduction),
        (ab.capacity_reduction, ba.capacity_reduction),
        (ab.area_eff_imp, ba.area_eff_imp),
    ] {
        assert!((x * y - 1.0).abs() < 1e-12, "{x} * {y}");
    }
    let same = compare(&s2, &s2).unwrap();
    assert_eq!(same.speedup, 1.0);
    assert_eq!(same.onchip_ee_imp, 1.0);

    let other = SparsityProfile::new(0.4, 0.5, 0.0, 4).synthesize(&layer).unwrap();
    let q = simulate(&cfg.program_for(&other).unwrap(), &cfg).unwrap();
    assert!(compare(&s2, &q).is_err());
}

#[test]
fn speedup_is_cycle_ratio() {
    let layer = ConvLayerSpec::new(Dims3::new(1, 1, 4), 1, Dims3::new(1, 1, 4), 1, 0);
    let w = SparsityProfile::new(0.5, 0.5, 0.0, 1).synthesize(&layer).unwrap();
    let cfg = SimConfig::new(1, 1);
    let p = cfg.program_for(&w).unwrap();
    let mut a = simulate(&p, &cfg).unwrap();
    let mut b = a.clone();
    a.mac_cycles = 200;
    b.mac_cycles = 600;
    assert_eq!(compare(&a, &b).unwrap().speedup, 3.0);
}

#[test]
fn sparse_engine_spends_less_onchip_energy_at_low_density() {
    let layer = ConvLayerSpec::new(Dims3::new(3, 3, 16), 8, Dims3::new(10, 10, 16), 1, 0);
    let w = SparsityProfile::new(0.3, 0.3, 0.0, 5).synthesize(&layer).unwrap();
    let cfg = SimConfig::new(8, 8);
    let p = cfg.program_for(&w).unwrap();
    let (s2, nv) = (simulate(&p, &cfg).unwrap(), simulate_naive(&p, &cfg).unwrap());
    assert!(s2.energy.onchip < nv.energy.onchip);
}

#[test]
fn ce_footprint_never_exceeds_plain() {
    let layer = ConvLayerSpec::new(Dims3::new(3, 3, 8), 2, Dims3::new(9, 9, 8), 1, 1);
    let w = SparsityProfile::new(0.5, 0.5, 0.1, 8).synthesize(&layer).unwrap();
    let p = SimConfig::new(8, 2).with_ce(true).program_for(&w).unwrap();
    let (on, off) = (footprint(&p, true), footprint(&p, false));
    assert!(on.fb_bytes < off.fb_bytes);
    assert_eq!(on.wb_bytes, off.wb_bytes);
}

#[test]
fn unbounded_fifos_are_an_upper_bound() {
    let layer = ConvLayerSpec::new(Dims3::new(3, 3, 16), 8, Dims3::new(8, 8, 16), 1, 0);
    let w = SparsityProfile::new(0.4, 0.3, 0.0, 21).synthesize(&layer).unwrap();
    for r in [1, 2, 4, 8] {
        let cycles = |d: FifoDepth| {
            let cfg = SimConfig::new(6, 8).with_ratio(r).with_depth(d);
            simulate(&cfg.program_for(&w).unwrap(), &cfg).unwrap().mac_cycles
        };
        let inf = cycles(FifoDepth::INF);
        for d in [1, 2, 3, 5, 8] {
            assert!(inf <= cycles(FifoDepth::finite(d)), "R={r} depth {d}");
        }
    }
}
