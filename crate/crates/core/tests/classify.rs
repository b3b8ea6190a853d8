mod support;

use glyphforge_core::classify::{
    cluster_normalized, detect_mirror_pairs, glyph_similarity, normalize_raster, ClassifierParams,
    NormalizedGlyph, OccurrenceRef, TokenInventory,
};
use glyphforge_core::raster::BinaryRaster;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{classes_of, hamming, hflip_oracle, mirror_set, partition_of, planted_trial, random_grid, with_noise};

/// Walks source pixels and paints every destination cell whose
/// nearest-neighbour preimage (`floor(d·src/dst)`) is that pixel.
fn normalize_oracle(r: &BinaryRaster, side: usize) -> Vec<bool> {
    let (w, h) = (r.width(), r.height());
    let m = w.max(h) as f64;
    let size = |d: usize| ((d as f64 * side as f64 / m).round() as usize).clamp(1, side);
    let (nw, nh) = (size(w), size(h));
    let (ox, oy) = ((side - nw) / 2, (side - nh) / 2);
    let covers = |s: usize, src: usize, dst: usize| (s * dst).div_ceil(src)..((s + 1) * dst).div_ceil(src);
    let mut grid = vec![false; side * side];
    for sy in 0..h {
        for sx in 0..w {
            for dy in covers(sy, h, nh) {
                for dx in covers(sx, w, nw) {
                    grid[(oy + dy) * side + ox + dx] = r.get(sx, sy);
                }
            }
        }
    }
    grid
}

#[test]
fn normalization_matches_per_cell_mapping() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for trial in 0..200 {
        let (w, h) = if trial == 0 { (7, 13) } else { (rng.gen_range(1..40), rng.gen_range(1..40)) };
        let side = [8, 16, 32][trial % 3];
        let mut ink: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.5)).collect();
        ink[0] = true;
        let r = BinaryRaster::new(w, h, ink).unwrap();
        let got = normalize_raster(&r, side).unwrap();
        let want = normalize_oracle(&r, side);
        if want.iter().any(|&b| b) {
            assert_eq!(got.grid(), &want[..], "{w}x{h} side {side}");
        } else {
            assert_eq!(got.grid().iter().filter(|&&b| b).count(), 1, "sparse fallback keeps one cell");
        }
    }
}

#[test]
fn similarity_is_direct_cell_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let (a, b) = (random_grid(&mut rng, 8, 0.5), random_grid(&mut rng, 8, 0.5));
        let mut same = 0;
        for y in 0..8 {
            for x in 0..8 {
                same += usize::from(a.get(x, y) == b.get(x, y));
            }
        }
        assert_eq!(glyph_similarity(&a, &b).unwrap(), same as f64 / 64.0);
    }
}

#[test]
fn planted_classes_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut ok = 0;
    for t in 0..200 {
        let k = 2 + t % 19;
        ok += usize::from(planted_trial(&mut rng, k, 0.9));
    }
    assert!(ok >= 198, "{ok}/200");
}

#[test]
fn tau_one_partitions_by_grid_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let base: Vec<NormalizedGlyph> = (0..rng.gen_range(1..8)).map(|_| random_grid(&mut rng, 8, 0.5)).collect();
        let mut entries = Vec::new();
        for i in 0..rng.gen_range(1..40) {
            let g = base.choose(&mut rng).unwrap();
            let g = if rng.gen_bool(0.3) { with_noise(&mut rng, g, 1) } else { g.clone() };
            entries.push((OccurrenceRef::new("l", i), g));
        }
        let params = ClassifierParams {
            similarity_threshold: 1.0,
            ..Default::default()
        };
        let got = cluster_normalized(&entries, &params).unwrap();
        let mut by_grid: std::collections::HashMap<Vec<bool>, Vec<OccurrenceRef>> = Default::default();
        for (r, g) in &entries {
            by_grid.entry(g.grid().to_vec()).or_default().push(r.clone());
        }
        assert_eq!(
            partition_of(got.classes.into_iter().map(|c| c.member_refs)),
            partition_of(by_grid.into_values())
        );
    }
}

#[test]
fn mirror_pairs_match_exhaustive_flip_comparison() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let tau = 0.95;
    for _ in 0..5 {
        let mut grids = mirror_set(&mut rng, tau);
        grids.shuffle(&mut rng);
        let mut classes = classes_of(&grids);
        let params = ClassifierParams {
            similarity_threshold: tau,
            mirror_detection_enabled: true,
            ..Default::default()
        };
        let got: std::collections::BTreeSet<_> = detect_mirror_pairs(&mut classes, &params).unwrap().into_iter().collect();
        let mut want = std::collections::BTreeSet::new();
        for a in 0..grids.len() {
            for b in a + 1..grids.len() {
                if hflip_oracle(&grids[a]) == grids[b] {
                    want.insert((a, b));
                }
            }
        }
        assert_eq!(want.len(), 10);
        assert_eq!(got, want);
        TokenInventory::from_classes(params, classes).check_invariants().unwrap();
    }
}

fn grid_pair() -> impl Strategy<Value = (NormalizedGlyph, NormalizedGlyph, NormalizedGlyph)> {
    (1usize..10).prop_flat_map(|s| {
        let g = move || prop::collection::vec(any::<bool>(), s * s).prop_map(move |v| NormalizedGlyph::new(s, v).unwrap());
        (g(), g(), g())
    })
}

proptest! {
    #[test]
    fn similarity_is_a_normalized_hamming_metric((a, b, c) in grid_pair()) {
        let d = |x: &NormalizedGlyph, y: &NormalizedGlyph| 1.0 - glyph_similarity(x, y).unwrap();
        prop_assert_eq!(glyph_similarity(&a, &b).unwrap(), glyph_similarity(&b, &a).unwrap());
        prop_assert_eq!(glyph_similarity(&a, &a).unwrap(), 1.0);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!((d(&a, &b) - hamming(&a, &b) as f64 / (a.side() * a.side()) as f64).abs() < 1e-12);
    }

    #[test]
    fn mirror_links_are_an_involution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<NormalizedGlyph> = (0..6).map(|_| random_grid(&mut rng, 6, 0.5)).collect();
        let mut grids = base.clone();
        grids.extend(base.iter().filter(|_| rng.gen_bool(0.5)).map(hflip_oracle));
        let mut classes = classes_of(&grids);
        let params = ClassifierParams { similarity_threshold: 0.9, mirror_detection_enabled: true, ..Default::default() };
        detect_mirror_pairs(&mut classes, &params).unwrap();
        for c in &classes {
            if let Some(m) = c.mirror_of {
                prop_assert_ne!(m, c.class_id);
                prop_assert_eq!(classes[m].mirror_of, Some(c.class_id));
            }
        }
    }

    #[test]
    fn tau_one_partition_ignores_corpus_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<NormalizedGlyph> = (0..4).map(|_| random_grid(&mut rng, 4, 0.5)).collect();
        let mut entries: Vec<_> = (0..20).map(|i| (OccurrenceRef::new("l", i), base.choose(&mut rng).unwrap().clone())).collect();
        let params = ClassifierParams { similarity_threshold: 1.0, ..Default::default() };
        let a = cluster_normalized(&entries, &params).unwrap();
        entries.shuffle(&mut rng);
        let b = cluster_normalized(&entries, &params).unwrap();
        prop_assert_eq!(
            partition_of(a.classes.into_iter().map(|c| c.member_refs)),
            partition_of(b.classes.iter().map(|c| c.member_refs.clone()))
        );
        for (r, id) in &b.assignment {
            prop_assert!(b.classes[*id].member_refs.contains(r));
        }
    }
}
