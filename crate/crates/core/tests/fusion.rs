use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volfuse::volume::{block_std, partition};
use volfuse::{
    fuse_subband, fuse_volumes, swt_forward, swt_inverse, BlockPlan, BlockRange, BlockSpec, Dims, FusionConfig,
    Spacing, Subband, SubbandSet, Volume, WaveletFilter,
};

fn noise(dims: Dims, seed: u64, amp: f64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Volume::from_fn(dims, Spacing::new(2.0, 2.0, 3.0), |_, _, _| amp * rng.gen_range(-1.0..1.0)).unwrap()
}

fn scaled(v: &Volume, k: f64) -> Volume {
    v.scaled(k).unwrap()
}

#[test]
fn zeros_lose_to_noise() {
    let dims = Dims::new(6, 6, 6);
    let a = Volume::zeros(dims, Spacing::new(2.0, 2.0, 3.0)).unwrap();
    let b = noise(dims, 1, 1.0);
    let (fused, winners) = fuse_subband(&[&a, &b], BlockSpec::new(6, 6, 6)).unwrap();
    assert_eq!(winners, vec![1]);
    assert_eq!(fused, b);
}

#[test]
fn sharp_halves_are_combined() {
    let dims = Dims::new(8, 8, 8);
    let sharp = noise(dims, 2, 1.0);
    let dull = noise(dims, 3, 0.01);
    // A is sharp for z < 4, B for z >= 4
    let a = Volume::from_fn(dims, sharp.spacing(), |x, y, z| if z < 4 { sharp.get(x, y, z) } else { dull.get(x, y, z) })
        .unwrap();
    let b = Volume::from_fn(dims, sharp.spacing(), |x, y, z| if z < 4 { dull.get(x, y, z) } else { sharp.get(x, y, z) })
        .unwrap();
    let (fused, winners) = fuse_subband(&[&a, &b], BlockSpec::new(8, 8, 4)).unwrap();
    assert_eq!(winners, vec![0, 1]);
    assert_eq!(fused, sharp);
}

#[test]
fn identical_sources_keep_source_zero() {
    let v = noise(Dims::new(7, 5, 6), 4, 1.0);
    let (fused, winners) = fuse_subband(&[&v, &v.clone(), &v.clone()], BlockSpec::new(3, 2, 4)).unwrap();
    assert!(winners.iter().all(|&w| w == 0));
    assert_eq!(fused, v);
}

#[test]
fn duplicates_reconstruct() {
    let v = noise(Dims::new(12, 10, 9), 5, 3.0);
    let out = fuse_volumes(&[v.clone(), v.clone()], &FusionConfig::shared(BlockSpec::new(4, 4, 4))).unwrap();
    let num: f64 = out.fused.as_slice().iter().zip(v.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = v.as_slice().iter().map(|a| a * a).sum();
    assert!((num / den).sqrt() <= 1e-6);
}

#[test]
fn whole_volume_blocks_match_manual_pipeline() {
    let dims = Dims::new(10, 9, 8);
    let a = noise(dims, 6, 1.0);
    let b = Volume::from_fn(dims, a.spacing(), |x, y, z| ((x * y + z) % 5) as f64 * 0.3).unwrap();
    let f = WaveletFilter::haar();
    let (sa, sb) = (swt_forward(&a, &f).unwrap(), swt_forward(&b, &f).unwrap());
    let full = BlockRange::full(dims);
    let manual = SubbandSet::from_bands(Subband::ALL.map(|band| {
        let pick_b = block_std(sb.get(band), &full).unwrap() > block_std(sa.get(band), &full).unwrap();
        (band, if pick_b { sb.get(band).clone() } else { sa.get(band).clone() })
    }))
    .unwrap();
    let expected = swt_inverse(&manual, &f).unwrap();
    let out = fuse_volumes(&[a, b], &FusionConfig::shared(BlockSpec::new(10, 9, 8))).unwrap();
    assert_eq!(out.fused, expected);
    assert!(out.mask.winners.values().all(|w| w.len() == 1));
}

#[test]
fn per_subband_plan_uses_each_spec() {
    let dims = Dims::new(8, 8, 8);
    let specs = Subband::ALL.map(|b| BlockSpec::new(1 + b.index() % 4, 2, 8));
    let cfg = FusionConfig { blocks: BlockPlan::per_subband(specs), ..FusionConfig::shared(BlockSpec::new(1, 1, 1)) };
    let out = fuse_volumes(&[noise(dims, 7, 1.0), noise(dims, 8, 1.0)], &cfg).unwrap();
    for (band, spec) in Subband::ALL.into_iter().zip(specs) {
        let expected = 8usize.div_ceil(spec.h) * 4;
        assert_eq!(out.mask.for_band(band).unwrap().len(), expected, "{band}");
    }
}

#[test]
fn fusion_errors() {
    let a = noise(Dims::new(6, 6, 6), 1, 1.0);
    let b = noise(Dims::new(6, 6, 5), 2, 1.0);
    let cfg = FusionConfig::shared(BlockSpec::new(2, 2, 2));
    assert!(fuse_volumes(&[a.clone(), b], &cfg).is_err());
    assert!(fuse_volumes(std::slice::from_ref(&a), &cfg).is_err());
    assert!(fuse_subband(&[&a], BlockSpec::new(2, 2, 2)).is_err());
    assert!(fuse_volumes(&[a.clone(), a.clone()], &FusionConfig::shared(BlockSpec::new(7, 2, 2))).is_err());
}

#[test]
fn output_independent_of_thread_count() {
    let dims = Dims::new(16, 16, 16);
    let sources = [noise(dims, 30, 1.0), noise(dims, 31, 1.0)];
    let cfg = FusionConfig::shared(BlockSpec::new(3, 5, 4));
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fuse_volumes(&sources, &cfg).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.fused, four.fused);
    assert_eq!(one.mask, four.mask);
}

fn closure_case(seed: u64, spec: BlockSpec) {
    let dims = Dims::new(16, 16, 16);
    let sources = [noise(dims, seed, 1.0), noise(dims, seed + 1, 0.5)];
    let f = WaveletFilter::haar();
    let decomposed: Vec<SubbandSet> = sources.iter().map(|s| swt_forward(s, &f).unwrap()).collect();
    let out = fuse_volumes(&sources, &FusionConfig::shared(spec)).unwrap();
    let replayed = out.mask.apply(&decomposed, &BlockPlan::Shared(spec)).unwrap();
    assert_eq!(swt_inverse(&replayed, &f).unwrap(), out.fused);
    for band in Subband::ALL {
        let chosen = replayed.get(band).as_slice();
        for (i, &v) in chosen.iter().enumerate() {
            let hits = decomposed.iter().filter(|d| d.get(band).as_slice()[i] == v).count();
            assert!(hits >= 1, "{band} voxel {i} not from any source");
        }
        let grid = partition(dims, spec).unwrap();
        let oracle: Vec<usize> = grid
            .blocks
            .iter()
            .map(|blk| {
                let s0 = block_std(decomposed[0].get(band), blk).unwrap();
                let s1 = block_std(decomposed[1].get(band), blk).unwrap();
                usize::from(s1 > s0)
            })
            .collect();
        assert_eq!(out.mask.for_band(band).unwrap(), oracle.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn fused_subbands_are_source_voxels(seed in 0u64..100_000, h in 1usize..9, w in 1usize..9, l in 1usize..9) {
        closure_case(seed, BlockSpec::new(h, w, l));
    }

    #[test]
    fn scaling_all_sources_scales_output(seed in 0u64..100_000, exp in -3i32..4) {
        let k = 2f64.powi(exp);
        let dims = Dims::new(8, 6, 7);
        let s = [noise(dims, seed, 1.0), noise(dims, seed + 9, 1.0)];
        let cfg = FusionConfig::shared(BlockSpec::new(3, 3, 3));
        let base = fuse_volumes(&s, &cfg).unwrap();
        let up = fuse_volumes(&[scaled(&s[0], k), scaled(&s[1], k)], &cfg).unwrap();
        prop_assert_eq!(up.fused, scaled(&base.fused, k));
        prop_assert_eq!(up.mask, base.mask);
    }

    #[test]
    fn source_order_does_not_matter_without_ties(seed in 0u64..100_000) {
        let dims = Dims::new(8, 8, 8);
        let (a, b) = (noise(dims, seed, 1.0), noise(dims, seed + 3, 1.0));
        let cfg = FusionConfig::shared(BlockSpec::new(4, 4, 4));
        let ab = fuse_volumes(&[a.clone(), b.clone()], &cfg).unwrap();
        let ba = fuse_volumes(&[b, a], &cfg).unwrap();
        prop_assert_eq!(ab.fused, ba.fused);
        for (x, y) in ab.mask.winners.values().zip(ba.mask.winners.values()) {
            prop_assert!(x.iter().zip(y).all(|(p, q)| p + q == 1));
        }
    }
}
