//! The end-to-end properties the workspace exists to uphold, each pinned at
//! exact rational tolerance on the reference builds. One test per property
//! suite; a failure names its witness.

use gehman::code::Code;
use gehman::cover::validate_presentation;
use gehman::dendrite::DPoint;
use gehman::dynamics::{eval_f, stretch_report};
use gehman::exact::{eval_f_mod, stage_check, stage_table, LimitValue, StagePiece};
use gehman::export;
use gehman::ratio::{arc_len, rat, rat_int};
use gehman::system::{build, spec_digest, Manifest, System, SystemSpec};
use gehman::verify::{
    conjugacy_check, continuity_check, flood, forward_witness, stages_check, FloodStop,
    MapChoice,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::sync::OnceLock;

fn shift(depth: usize) -> System {
    build(SystemSpec::FullShift { symbols: 2, depth, extension_bound: None }).unwrap()
}

fn reference() -> &'static System {
    static SYS: OnceLock<System> = OnceLock::new();
    SYS.get_or_init(|| shift(2))
}

/// Straight re-derivation of both maps from the cover data alone. Shares
/// the data types with the library but none of the table code: fold slots,
/// cutpoints and chain prefix sums are recomputed here from scratch.
mod oracle {
    use gehman::code::Code;
    use gehman::dendrite::DPoint;
    use gehman::exact::LimitValue;
    use gehman::ratio::{arc_len, rat_int, Rational};
    use gehman::system::System;
    use num_traits::Zero;

    fn image_down(sys: &System, level: usize, cell: u32) -> u32 {
        let first = sys.seq.level(level).successors(cell)[0];
        sys.seq.parent_cell(level, first)
    }

    /// The folding schedule of an arc as (top, bottom, descending) chains
    /// over equal parameter slots, in table order.
    fn folds(sys: &System, arc: &Code) -> Vec<(Code, Code, bool)> {
        let depth = arc.len() as u32;
        let level = sys.codes.level_of_depth(depth).unwrap();
        if depth < sys.codes.mark(level) {
            let anchor = if level == 1 {
                Code::root()
            } else {
                let upper = sys.codes.ancestor_cell(level - 1, arc).unwrap();
                sys.codes.code(level - 2, image_down(sys, level - 1, upper)).clone()
            };
            let mut out = Vec::new();
            for w in 0..sys.seq.level(level).cell_count() as u32 {
                let code = sys.codes.code(level, w);
                if anchor.is_prefix_of(code) {
                    out.push((anchor.clone(), code.clone(), true));
                    out.push((anchor.clone(), code.clone(), false));
                }
            }
            out
        } else {
            let cell = sys.codes.cell_at(level, arc).unwrap();
            let image = sys.codes.code(level - 1, image_down(sys, level, cell)).clone();
            let mut out = Vec::new();
            if level >= 2 {
                let start = image.prefix(sys.codes.mark(level - 2) as usize);
                out.push((start, image.clone(), true));
            }
            for &w in sys.seq.level(level).successors(cell) {
                let overrun = sys.codes.code(level, w).child(false);
                out.push((image.clone(), overrun.clone(), true));
                out.push((image.clone(), overrun, false));
            }
            out
        }
    }

    fn walk_chain(top: &Code, bottom: &Code, frac: Rational) -> DPoint {
        if frac.is_zero() {
            return DPoint::Node(top.clone());
        }
        let total: Rational = (top.len() + 1..=bottom.len()).map(arc_len).sum();
        let mut rest = frac * total;
        for d in top.len() + 1..=bottom.len() {
            let len = arc_len(d);
            if rest <= len {
                return DPoint::interior(bottom.prefix(d), rest / len);
            }
            rest -= len;
        }
        unreachable!("offset within the chain");
    }

    pub fn f(sys: &System, arc: &Code, t: &Rational) -> DPoint {
        let folds = folds(sys, arc);
        let k = folds.len() as i64;
        for (i, (top, bottom, down)) in folds.iter().enumerate() {
            let lo = Rational::new((i as i64).into(), k.into());
            let hi = Rational::new((i as i64 + 1).into(), k.into());
            if *t >= lo && *t <= hi {
                let s = (t.clone() - lo) * rat_int(k);
                let frac = if *down { s } else { rat_int(1) - s };
                return walk_chain(top, bottom, frac);
            }
        }
        unreachable!("slots tile the parameter interval");
    }

    pub fn f_mod(sys: &System, t: &Rational, budget: u32) -> LimitValue {
        let mut lo = Rational::zero();
        let mut hi = rat_int(1);
        let mut node = Code::root();
        for _ in 0..budget {
            let eighth = (hi.clone() - lo.clone()) / rat_int(8);
            let (has0, has1) = sys.codes.node_children(&node);
            assert!(has0 || has1, "descended past the built tree");
            let a0 = node.child(!has0);
            let a1 = node.child(has1);
            let cut = |k: i64| lo.clone() + eighth.clone() * rat_int(k);
            let linear = [
                (cut(0), cut(1), a0.clone(), true),
                (cut(3), cut(4), a0.clone(), false),
                (cut(4), cut(5), a1.clone(), true),
                (cut(7), cut(8), a1.clone(), false),
            ];
            let mut hit = None;
            for (plo, phi, arc, down) in linear {
                if *t >= plo && *t <= phi {
                    let s = (t.clone() - plo.clone()) / (phi - plo);
                    let frac = if down { s } else { rat_int(1) - s };
                    hit = Some(DPoint::interior(arc, frac));
                    break;
                }
            }
            if let Some(p) = hit {
                return LimitValue::Point(p);
            }
            let (next_lo, next_hi, next_node) = if *t > cut(1) && *t < cut(3) {
                (cut(1), cut(3), a0)
            } else {
                (cut(5), cut(7), a1)
            };
            lo = next_lo;
            hi = next_hi;
            node = next_node;
        }
        LimitValue::Nested { node, depth: budget }
    }
}

#[test]
fn cover_suite_validates_and_names_injected_faults() {
    let sys = reference();
    assert!(validate_presentation(&sys.seq).pass);

    let missing_edge = sys.seq.with_edge_removed(1, "000", "001").unwrap();
    let r = validate_presentation(&missing_edge);
    assert!(!r.pass);
    let line = r.failing_line("homomorphism").expect("deleted edge breaks the homomorphism");
    assert!(line.witness.as_deref().unwrap().contains("(000,001)"));

    let skewed_map = sys.seq.with_map_overridden(2, "000111", "001").unwrap();
    let r = validate_presentation(&skewed_map);
    assert!(!r.pass);
    let line = r.failing_line("+directionality").expect("broken hom breaks +directionality");
    assert!(line.witness.as_deref().unwrap().contains("000111"));

    let starved = sys
        .seq
        .with_cells_removed(2, &["000000", "000001", "000010", "000011", "000100"])
        .unwrap();
    let r = validate_presentation(&starved);
    assert!(!r.pass);
    let line = r.failing_line("children>=4").expect("a 3-child cell breaks the branching floor");
    assert!(line.witness.as_deref().unwrap().contains("cell 000"));
}

#[test]
fn conjugacy_holds_for_every_deepest_thread() {
    let sys = reference();
    assert_eq!(sys.seq.level(2).cell_count(), 64);
    let r = conjugacy_check(sys);
    assert!(r.pass, "{:?}", r.witnesses);
    assert!(r.details[0].starts_with("64 "));
}

#[test]
fn stretch_floors_hold_with_exact_arithmetic() {
    let sys = reference();
    let stats = stretch_report(sys, sys.codes.mark(1) + 1).unwrap();
    assert!(stats.min > rat(5, 4));
    assert_eq!(stats.min, rat(21845, 1024));
    for (depth, floor) in &stats.per_depth_min {
        assert!(*floor > rat_int(4), "depth {depth} floor {floor}");
    }
    // Stage pieces of the companion map: the linear ones all stretch by
    // exactly 8, measured against the physical arc lengths.
    for stage in 1..=6 {
        let table = stage_table(sys, stage).unwrap();
        for piece in &table.pieces {
            if let StagePiece::Linear { lo, hi, arc, .. } = piece {
                let lambda =
                    arc_len(arc.len()) / ((hi.clone() - lo.clone()) * arc_len(1));
                assert_eq!(lambda, rat_int(8));
            }
        }
    }
}

#[test]
fn flood_schedule_and_per_step_witness_match() {
    let sys = reference();
    let start = [Code::parse("0").unwrap()];
    let shallow = flood(sys, &start, sys.codes.mark(1), 8, MapChoice::F).unwrap();
    assert!(matches!(shallow.stop, FloodStop::Covered { n_min: 1 }), "{:?}", shallow.stop);
    let full = flood(sys, &start, sys.codes.mark(2), 8, MapChoice::F).unwrap();
    assert!(
        matches!(full.stop, FloodStop::Covered { n_min } if n_min <= 3),
        "{:?}",
        full.stop
    );
    // Per-step images stay finite arc sets (no endpoints can enter: images
    // of arcs are arc chains) and follow the frozen growth schedule.
    let deep = shift(4);
    let witness =
        forward_witness(&deep, &start, deep.codes.mark(3) + 1, 6, MapChoice::F).unwrap();
    assert!(witness.blocked.is_none(), "{:?}", witness.blocked);
    assert_eq!(witness.step_sizes, vec![54, 62, 4070, 4134, 265574, 266086]);
}

#[test]
fn stage_images_cover_their_windows() {
    let r = stages_check(reference(), 8);
    assert!(r.pass, "{:?}", r.witnesses);
}

#[test]
fn stage_family_structure_is_sound() {
    let out = stage_check(reference(), 6, 1000, 0x5eed).unwrap();
    assert_eq!(out.stages, 6);
    assert!(out.samples >= 1000);
    assert_eq!(out.failures, Vec::<String>::new());
}

#[test]
fn independent_oracle_agrees_everywhere() {
    let sys = reference();
    let mut rng = StdRng::seed_from_u64(41);
    // Arcs across both level bands and both node kinds: the full shallow
    // window, plus random prefixes of level-2 codes down to the trusted
    // depth.
    let skel = gehman::dendrite::build_skeleton(&sys.codes, 8);
    let mut arcs: Vec<Code> = (1..skel.len() as u32).map(|i| skel.code(i).clone()).collect();
    for _ in 0..60 {
        let cell = rng.gen_range(0..sys.seq.level(2).cell_count() as u32);
        let depth = rng.gen_range(9..=sys.trusted_depth() as usize);
        arcs.push(sys.codes.code(2, cell).prefix(depth));
    }
    let mut checked = 0;
    while checked < 1000 {
        let arc = &arcs[rng.gen_range(0..arcs.len())];
        let t = match checked % 4 {
            // piece boundaries of the 16- and 17-slot tables, then random
            0 => rat(rng.gen_range(0..=16), 16),
            1 => rat(rng.gen_range(0..=17), 17),
            _ => {
                let den = rng.gen_range(2u64..1 << 20);
                rat(rng.gen_range(0..=den) as i64, den as i64)
            }
        };
        let got = eval_f(sys, &DPoint::interior(arc.clone(), t.clone())).unwrap();
        assert_eq!(got, oracle::f(sys, arc, &t), "arc {arc} t {t}");
        checked += 1;
    }
    // The stage-limit map on the root arcs, boundary grid and random
    // parameters alike; unresolved values must pin the same subtree.
    let budget = 9;
    let mut checked = 0;
    while checked < 1000 {
        let t = match checked % 3 {
            0 => rat(rng.gen_range(0..=64), 64),
            1 => rat(rng.gen_range(0..=512), 512),
            _ => {
                let den = rng.gen_range(2u64..1 << 16);
                rat(rng.gen_range(0..=den) as i64, den as i64)
            }
        };
        let point = DPoint::interior(Code::parse("0").unwrap(), t.clone());
        let got = eval_f_mod(sys, &point, budget).unwrap();
        assert_eq!(got, oracle::f_mod(sys, &t, budget), "t {t}");
        checked += 1;
    }
    // Away from the root arcs the modified map must defer to the plain one.
    for _ in 0..50 {
        let cell = rng.gen_range(0..sys.seq.level(2).cell_count() as u32);
        let depth = rng.gen_range(2..=20usize);
        let arc = sys.codes.code(2, cell).prefix(depth);
        let den = rng.gen_range(2u64..1 << 12);
        let t = rat(rng.gen_range(1..den) as i64, den as i64);
        let point = DPoint::interior(arc.clone(), t.clone());
        let got = eval_f_mod(sys, &point, budget).unwrap();
        assert_eq!(got, LimitValue::Point(oracle::f(sys, &arc, &t)), "arc {arc} t {t}");
    }
}

#[test]
fn continuity_modulus_binds_sibling_ends() {
    let sys = shift(3);
    let r = continuity_check(&sys, 200, 99);
    assert!(r.pass, "{:?}", r.witnesses);
    assert!(r.details[0].starts_with("200 "));
}

#[test]
fn rebuilt_exports_are_byte_identical() {
    let a = shift(2);
    let b = shift(2);
    assert_eq!(spec_digest(&a.spec), spec_digest(&b.spec));
    assert_eq!(
        export::to_pretty(&export::skeleton_json(&a, 12)),
        export::to_pretty(&export::skeleton_json(&b, 12)),
    );
    assert_eq!(
        export::to_pretty(&export::map_json(&a, 10).unwrap()),
        export::to_pretty(&export::map_json(&b, 10).unwrap()),
    );
    assert_eq!(
        export::to_pretty(&export::scene_json(&a, 9, None).unwrap()),
        export::to_pretty(&export::scene_json(&b, 9, None).unwrap()),
    );
    assert_eq!(export::svg_scene(&a, 10, None), export::svg_scene(&b, 10, None));
    // Manifests agree up to the build timestamp.
    let mut ma = serde_json::to_value(Manifest::of(&a)).unwrap();
    let mut mb = serde_json::to_value(Manifest::of(&b)).unwrap();
    ma["generated_at"] = 0.into();
    mb["generated_at"] = 0.into();
    assert_eq!(ma, mb);
}
