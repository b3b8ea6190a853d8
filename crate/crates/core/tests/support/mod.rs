//! Generators with known ground truth and brute-force oracles, shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use glyphforge_core::classify::{
    cluster_normalized, glyph_similarity, mirror_similarity, ClassifierParams, NormalizedGlyph, OccurrenceRef, TokenClass, TokenInventory};
use glyphforge_core::dataset::{PuzzleDocument, ScriptLine};
use glyphforge_core::raster::BinaryRaster;
use glyphforge_core::segment::{GlyphBox, SegmentationParams};
use rand::seq::SliceRandom;
use rand::Rng;

/// Core band rows `[floor(top·H), ceil(bottom·H) − 1]`.
pub fn core_rows(height: usize, p: &SegmentationParams) -> (usize, usize) {
    let h = height as f64;
    ((p.band_top_frac * h).floor() as usize, (p.band_bottom_frac * h).ceil() as usize - 1)
}

/// A line of 1–8 solid rectangles confined to the core band, separated by
/// gaps of at least `min_gap_width`. Returns the raster and the rectangles.
pub fn rect_line(rng: &mut impl Rng, p: &SegmentationParams) -> (BinaryRaster, Vec<GlyphBox>) {
    let height = rng.gen_range(16..40);
    let (top, bottom) = core_rows(height, p);
    let k = rng.gen_range(1..=8);
    let mut rects = Vec::with_capacity(k);
    let mut x = rng.gen_range(0..6);
    for i in 0..k {
        if i > 0 {
            x += rng.gen_range(p.min_gap_width..p.min_gap_width + 6);
        }
        let w = rng.gen_range(p.min_glyph_width.max(1)..12);
        let y0 = rng.gen_range(top..=bottom);
        let y1 = rng.gen_range(y0 + 1..=bottom + 1);
        rects.push(GlyphBox { x0: x, y0, x1: x + w, y1 });
        x += w;
    }
    let width = x + rng.gen_range(0..6);
    let r = BinaryRaster::from_fn(width, height, |x, y| {
        rects.iter().any(|b| x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1)
    })
    .unwrap();
    (r, rects)
}

/// Bounding boxes of 8-connected ink components, ordered by left edge.
pub fn connected_components(r: &BinaryRaster) -> Vec<GlyphBox> {
    let (w, h) = (r.width(), r.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || !r.get(start % w, start / w) {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut b = GlyphBox { x0: w, y0: h, x1: 0, y1: 0 };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            b.x0 = b.x0.min(x);
            b.y0 = b.y0.min(y);
            b.x1 = b.x1.max(x + 1);
            b.y1 = b.y1.max(y + 1);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && r.get(nx as usize, ny as usize) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(b);
    }
    out.sort_by_key(|b| (b.x0, b.y0));
    out
}

/// Two core-band blocks joined only by a one-row bar on the top row (or the
/// bottom row). Returns the raster and the two blocks.
pub fn bridge_fixture(rng: &mut impl Rng, p: &SegmentationParams, top_bar: bool) -> (BinaryRaster, [GlyphBox; 2]) {
    let height = rng.gen_range(16..40);
    let (core_top, core_bottom) = core_rows(height, p);
    let margin = rng.gen_range(0..4);
    let (w0, gap, w1) = (
        rng.gen_range(2..10),
        rng.gen_range(p.min_gap_width..p.min_gap_width + 6),
        rng.gen_range(2..10),
    );
    let a = GlyphBox { x0: margin, y0: core_top, x1: margin + w0, y1: core_bottom + 1 };
    let b = GlyphBox { x0: a.x1 + gap, y0: core_top, x1: a.x1 + gap + w1, y1: core_bottom + 1 };
    let bar_row = if top_bar { 0 } else { height - 1 };
    let width = b.x1 + rng.gen_range(0..4);
    let r = BinaryRaster::from_fn(width, height, |x, y| {
        let inside = |g: &GlyphBox| x >= g.x0 && x < g.x1 && y >= g.y0 && y < g.y1;
        inside(&a) || inside(&b) || (y == bar_row && x >= a.x0 && x < b.x1)
    })
    .unwrap();
    (r, [a, b])
}

pub fn random_grid(rng: &mut impl Rng, side: usize, density: f64) -> NormalizedGlyph {
    NormalizedGlyph::new(side, (0..side * side).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

/// Flips exactly `n` distinct cells.
pub fn with_noise(rng: &mut impl Rng, g: &NormalizedGlyph, n: usize) -> NormalizedGlyph {
    let mut grid = g.grid().to_vec();
    let mut cells: Vec<usize> = (0..grid.len()).collect();
    cells.shuffle(rng);
    for &c in cells.iter().take(n) {
        grid[c] = !grid[c];
    }
    NormalizedGlyph::new(g.side(), grid).unwrap()
}

pub fn hamming(a: &NormalizedGlyph, b: &NormalizedGlyph) -> usize {
    a.grid().iter().zip(b.grid()).filter(|(x, y)| x != y).count()
}

pub fn hflip_oracle(g: &NormalizedGlyph) -> NormalizedGlyph {
    let s = g.side();
    NormalizedGlyph::new(s, (0..s * s).map(|i| g.get(s - 1 - i % s, i / s)).collect()).unwrap()
}

/// `k` exemplars pairwise at least `min_dist` cells apart.
pub fn separated_exemplars(rng: &mut impl Rng, k: usize, side: usize, min_dist: usize) -> Vec<NormalizedGlyph> {
    let mut out: Vec<NormalizedGlyph> = Vec::new();
    while out.len() < k {
        let g = random_grid(rng, side, 0.5);
        if out.iter().all(|o| hamming(o, &g) >= min_dist) {
            out.push(g);
        }
    }
    out
}

/// Partition of occurrence refs, independent of class numbering.
pub fn partition_of(groups: impl IntoIterator<Item = Vec<OccurrenceRef>>) -> HashSet<Vec<OccurrenceRef>> {
    groups
        .into_iter()
        .map(|mut g| {
            g.sort();
            g
        })
        .collect()
}

/// A random inventory of `k` classes over `lines` lines, and a document
/// whose script lines list random occurrences. Returns the expected class
/// id sequence per script line.
pub fn random_document(rng: &mut impl Rng) -> (PuzzleDocument, TokenInventory, Vec<Vec<usize>>) {
    let k = rng.gen_range(1..30);
    let n_lines = rng.gen_range(1..6);
    let mut members: BTreeMap<usize, Vec<OccurrenceRef>> = (0..k).map(|c| (c, Vec::new())).collect();
    let mut class_of = BTreeMap::new();
    for l in 0..n_lines {
        for i in 0..rng.gen_range(1..15) {
            let c = rng.gen_range(0..k);
            let r = OccurrenceRef::new(format!("img{l}"), i);
            members.get_mut(&c).unwrap().push(r.clone());
            class_of.insert(r, c);
        }
    }
    // Every class needs a member.
    for (c, m) in members.iter_mut() {
        if m.is_empty() {
            let r = OccurrenceRef::new("spare", *c);
            m.push(r.clone());
            class_of.insert(r, *c);
        }
    }
    let classes = members
        .into_iter()
        .map(|(c, member_refs)| TokenClass {
            class_id: c,
            exemplar: random_grid(rng, 4, 0.5),
            member_refs,
            mirror_of: None,
        })
        .collect();
    let inv = TokenInventory::from_classes(ClassifierParams::default(), classes);
    let all: Vec<OccurrenceRef> = class_of.keys().cloned().collect();
    let mut script_lines = Vec::new();
    let mut expected = Vec::new();
    for s in 0..rng.gen_range(1..8) {
        let len = rng.gen_range(0..20);
        let refs: Vec<OccurrenceRef> = (0..len).map(|_| all.choose(rng).unwrap().clone()).collect();
        expected.push(refs.iter().map(|r| class_of[r]).collect());
        script_lines.push(ScriptLine::new(format!("s{s}"), refs));
    }
    let doc = PuzzleDocument {
        puzzle_id: "rand".into(),
        language_name: "Random".into(),
        script_lines,
        glosses: vec![],
        questions: vec![],
        unicode_text: None,
        writing_direction_hint: None,
    };
    (doc, inv, expected)
}

/// Textbook Wagner–Fischer table over Unicode scalar values.
pub fn edit_distance_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        t[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            t[i][j] = sub.min(t[i - 1][j] + 1).min(t[i][j - 1] + 1);
        }
    }
    t[a.len()][b.len()]
}

/// All permutations of `0..n` by Heap's algorithm.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Planted classes with up to 3% cell noise; returns whether clustering
/// recovered the planted partition exactly.
pub fn planted_trial(rng: &mut impl Rng, k: usize, tau: f64) -> bool {
    let side = 16;
    let max_noise = (side * side * 3) / 100;
    let exemplars = separated_exemplars(rng, k, side, 64);
    let mut entries = Vec::new();
    let mut planted = vec![Vec::new(); k];
    for (c, ex) in exemplars.iter().enumerate() {
        for m in 0..rng.gen_range(2..6) {
            let r = OccurrenceRef::new(format!("c{c}"), m);
            let flips = rng.gen_range(0..=max_noise);
            entries.push((r.clone(), with_noise(rng, ex, flips)));
            planted[c].push(r);
        }
    }
    entries.shuffle(rng);
    let params = ClassifierParams {
        similarity_threshold: tau,
        ..Default::default()
    };
    let got = cluster_normalized(&entries, &params).unwrap();
    partition_of(got.classes.into_iter().map(|c| c.member_refs)) == partition_of(planted)
}

pub fn classes_of(grids: &[NormalizedGlyph]) -> Vec<TokenClass> {
    grids
        .iter()
        .enumerate()
        .map(|(i, g)| TokenClass {
            class_id: i,
            exemplar: g.clone(),
            member_refs: vec![OccurrenceRef::new("l", i)],
            mirror_of: None,
        })
        .collect()
}

/// Ten asymmetric glyphs, their exact flips, and fifty distractors that are
/// neither symmetric nor mirrors of anything else in the set.
pub fn mirror_set(rng: &mut impl Rng, tau: f64) -> Vec<NormalizedGlyph> {
    let side = 16;
    let mut out: Vec<NormalizedGlyph> = Vec::new();
    let far = |g: &NormalizedGlyph, out: &[NormalizedGlyph]| {
        mirror_similarity(g, g).unwrap() < tau
            && out.iter().all(|o| mirror_similarity(o, g).unwrap() < tau && glyph_similarity(o, g).unwrap() < tau)
    };
    while out.len() < 20 {
        let g = random_grid(rng, side, 0.5);
        let f = hflip_oracle(&g);
        if far(&g, &out) && far(&f, &out) {
            out.push(g);
            out.push(f);
        }
    }
    let mut distractors = 0;
    while distractors < 50 {
        let g = random_grid(rng, side, 0.5);
        if far(&g, &out) {
            out.push(g);
            distractors += 1;
        }
    }
    out
}

