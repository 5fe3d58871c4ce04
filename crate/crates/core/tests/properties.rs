use std::collections::{BTreeMap, HashSet};

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use uibench_core::method::{extract_html, segment, Region, SegmentParams};
use uibench_core::metrics::dice::normalize_text;
use uibench_core::metrics::scores::{
    block_match_score, color_similarity_score, position_similarity_score, text_similarity_score,
    PageDims,
};
use uibench_core::metrics::{ciede2000, code_similarity, dice, match_blocks, Lab, MetricName};
use uibench_core::render::{BBox, Block};
use uibench_core::report::{rank_rows, Aggregate, LeaderboardRow};
use uibench_core::run::{InstanceStatus, RunState};

fn bigram_multiset(s: &str) -> BTreeMap<(char, char), usize> {
    let chars: Vec<char> = normalize_text(s).chars().collect();
    let mut m = BTreeMap::new();
    for w in chars.windows(2) {
        *m.entry((w[0], w[1])).or_default() += 1;
    }
    m
}

fn block_strategy() -> impl Strategy<Value = Block> {
    (
        "[a-d ]{1,8}",
        0.0f64..1000.0,
        0.0f64..2000.0,
        1.0f64..300.0,
        1.0f64..100.0,
        any::<[u8; 3]>(),
    )
        .prop_map(|(text, x, y, w, h, color)| Block {
            text,
            bbox: BBox { x, y, w, h },
            color,
        })
}

fn check_region(r: &Region, p: &SegmentParams) {
    if r.children.is_empty() {
        return;
    }
    let mut area = 0;
    for (i, c) in r.children.iter().enumerate() {
        assert_eq!(c.depth, r.depth + 1);
        assert!(r.bbox.contains(&c.bbox), "{:?} ⊄ {:?}", c.bbox, r.bbox);
        assert!(c.bbox.w > 0 && c.bbox.h > 0);
        for d in &r.children[i + 1..] {
            assert!(!c.bbox.overlaps(&d.bbox));
        }
        area += c.bbox.area();
        check_region(c, p);
    }
    assert_eq!(area, r.bbox.area(), "children tile the parent");
    assert!(r.depth < p.max_depth);
}

/// Noise image with a few solid horizontal and vertical bands.
fn banded_image(w: u32, h: u32, seed: u64, rows: &[(u32, u32)], cols: &[(u32, u32)]) -> RgbImage {
    let mut state = seed | 1;
    let mut img = RgbImage::from_fn(w, h, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        Rgb([state as u8, (state >> 8) as u8, (state >> 16) as u8])
    });
    for &(start, len) in rows {
        for y in start.min(h)..(start + len).min(h) {
            for x in 0..w {
                img.put_pixel(x, y, Rgb([200, 200, 200]));
            }
        }
    }
    for &(start, len) in cols {
        for x in start.min(w)..(start + len).min(w) {
            for y in 0..h {
                img.put_pixel(x, y, Rgb([240, 240, 240]));
            }
        }
    }
    img
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn code_similarity_symmetric_and_identity(a in ".{0,200}", b in ".{0,200}") {
        let s = code_similarity(&a, &b);
        prop_assert_eq!(s, code_similarity(&b, &a));
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, a == b);
    }

    #[test]
    fn dice_symmetric_bounded(a in "[a-cA-C ]{0,12}", b in "[a-cA-C ]{0,12}") {
        let d = dice(&a, &b);
        prop_assert_eq!(d, dice(&b, &a));
        prop_assert!((0.0..=1.0).contains(&d));
        let na = normalize_text(&a);
        let nb = normalize_text(&b);
        if na.chars().count() >= 2 && nb.chars().count() >= 2 {
            prop_assert_eq!(d == 1.0, bigram_multiset(&a) == bigram_multiset(&b));
        }
    }

    #[test]
    fn ciede2000_symmetric_zero_iff_equal(
        l1 in 0.0f64..100.0, a1 in -128.0f64..127.0, b1 in -128.0f64..127.0,
        l2 in 0.0f64..100.0, a2 in -128.0f64..127.0, b2 in -128.0f64..127.0,
    ) {
        let x = Lab::new(l1, a1, b1);
        let y = Lab::new(l2, a2, b2);
        let d = ciede2000(x, y);
        prop_assert!(d >= 0.0);
        prop_assert!((d - ciede2000(y, x)).abs() < 1e-9);
        prop_assert_eq!(ciede2000(x, x), 0.0);
        if (l1, a1, b1) != (l2, a2, b2) {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn matching_is_a_valid_partial_matching(
        r in prop::collection::vec(block_strategy(), 0..7),
        g in prop::collection::vec(block_strategy(), 0..7),
        tau in 0.0f64..1.0,
    ) {
        let m = match_blocks(&r, &g, tau);
        let mut seen_r = HashSet::new();
        let mut seen_g = HashSet::new();
        for p in &m.pairs {
            prop_assert!(seen_r.insert(p.ref_index));
            prop_assert!(seen_g.insert(p.gen_index));
            prop_assert!(p.dice >= tau);
            prop_assert_eq!(p.dice, dice(&r[p.ref_index].text, &g[p.gen_index].text));
        }
        for i in &m.unmatched_ref { prop_assert!(seen_r.insert(*i)); }
        for j in &m.unmatched_gen { prop_assert!(seen_g.insert(*j)); }
        prop_assert_eq!(seen_r.len(), r.len());
        prop_assert_eq!(seen_g.len(), g.len());
    }

    #[test]
    fn composite_scores_in_unit_interval(
        r in prop::collection::vec(block_strategy(), 0..7),
        g in prop::collection::vec(block_strategy(), 0..7),
    ) {
        let m = match_blocks(&r, &g, 0.5);
        let dims = PageDims { width: 1300.0, height: 2100.0 };
        let bm = block_match_score(&m, &r, &g);
        prop_assert!((0.0..=1.0).contains(&bm));
        for s in [
            text_similarity_score(&m),
            color_similarity_score(&m, &r, &g),
            position_similarity_score(&m, &r, &g, dims, dims),
        ] {
            prop_assert_eq!(s.is_some(), !m.pairs.is_empty());
            if let Some(s) = s { prop_assert!((0.0..=1.0).contains(&s)); }
        }
    }

    #[test]
    fn segmentation_invariants(
        w in 16u32..120, h in 16u32..120, seed in any::<u64>(),
        rows in prop::collection::vec((0u32..120, 1u32..30), 0..4),
        cols in prop::collection::vec((0u32..120, 1u32..30), 0..4),
        min_band in 1u32..12, max_depth in 0u32..4, max_regions in 1usize..10,
    ) {
        let img = banded_image(w, h, seed, &rows, &cols);
        let p = SegmentParams { min_band_px: min_band, uniformity_tol: 4.0, max_depth, max_regions };
        let s = segment(&img, &p);
        prop_assert_eq!(s.root.bbox.w, w);
        prop_assert_eq!(s.root.bbox.h, h);
        prop_assert!(s.root.leaf_count() <= max_regions);
        check_region(&s.root, &p);
        prop_assert_eq!(segment(&img, &p), s);
    }

    #[test]
    fn fenced_html_round_trips(body in "<[a-z]{1,4}>[a-z ]{0,20}</[a-z]{1,4}>", prose in "[A-Za-z ,.!]{0,30}") {
        let text = format!("{prose}\n```html\n{body}\n```\ntrailing words");
        prop_assert_eq!(extract_html(&text).unwrap(), body.trim());
    }

    #[test]
    fn state_counters_consistent(moves in prop::collection::vec((0usize..4, 0usize..6), 0..40)) {
        let ids = ["a", "b", "c", "d"];
        let mut s = RunState::new("r", ids);
        let order = [
            InstanceStatus::Pending, InstanceStatus::Generating, InstanceStatus::Rendering,
            InstanceStatus::Evaluating, InstanceStatus::Done, InstanceStatus::Failed,
        ];
        for (i, t) in moves {
            let before = s.instances[ids[i]].status;
            let ok = s.advance(ids[i], order[t], None).is_ok();
            prop_assert_eq!(ok, before.can_advance_to(order[t]));
            let c = s.counters;
            prop_assert_eq!(c.pending + c.generating + c.rendering + c.evaluating + c.done + c.failed, c.total);
            prop_assert_eq!(c.total, 4);
        }
    }

    #[test]
    fn aggregate_bounds(values in prop::collection::vec(0.0f64..1.0, 1..30)) {
        let a = Aggregate::of(&values);
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = a.mean.unwrap();
        prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        let med = a.median.unwrap();
        prop_assert!(med >= lo && med <= hi);
        prop_assert!(a.stddev.unwrap() >= 0.0);
        prop_assert_eq!(a.count_available, values.len());
    }

    #[test]
    fn leaderboard_permutation_stable(
        vals in prop::collection::vec(prop::option::of(prop::sample::select(vec![0.1, 0.5, 0.9])), 1..8),
        seed in any::<u64>(),
    ) {
        let rows: Vec<LeaderboardRow> = vals.iter().enumerate().map(|(i, v)| LeaderboardRow {
            run_id: format!("R{i:02}"),
            model: "mock:echo".into(),
            method: "direct".into(),
            params: Default::default(),
            metrics: BTreeMap::from([(MetricName::BlockMatch, *v)]),
            mean_total_tokens: None,
            done: 1,
            failed: 0,
        }).collect();
        let mut shuffled = rows.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        let a = rank_rows(rows, MetricName::BlockMatch);
        let b = rank_rows(shuffled, MetricName::BlockMatch);
        prop_assert_eq!(&a, &b);
        let present: Vec<bool> = a.rows.iter().map(|r| r.metrics[&MetricName::BlockMatch].is_some()).collect();
        let first_missing = present.iter().position(|p| !p).unwrap_or(present.len());
        prop_assert!(present[first_missing..].iter().all(|p| !p));
    }
}
