//! Runtime cross-checks over a built system: cover validation, image
//! flooding and per-step image witnesses, shift conjugacy, stretch floors,
//! a uniform continuity modulus, metric geometry, and the stage family of
//! the exact-stretch companion map.
//!
//! Every check returns a `CheckReport`; a failing check carries named
//! witnesses instead of panicking, so callers can print or serialize the
//! outcome. Floods never skip an arc they cannot expand: a frontier arc
//! beyond the usable depth stops the run with a `blocked` verdict.

use crate::code::Code;
use crate::cover::{thread_successor, Thread};
use crate::dendrite::{
    build_skeleton, coarse_subtree_diameter, distance, distance_interval,
    sharp_subtree_diameter, Skeleton,
};
use crate::dynamics::{arc_expansion, branch_image_cell, stretch_report, Expansion};
use crate::exact;
use crate::ratio::{rat, rat_int, tail_below, Rational};
use crate::system::System;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub details: Vec<String>,
    pub witnesses: Vec<String>,
    pub elapsed_ms: u128,
}

fn finish(
    name: &str,
    started: Instant,
    details: Vec<String>,
    witnesses: Vec<String>,
) -> CheckReport {
    CheckReport {
        name: name.to_string(),
        pass: witnesses.is_empty(),
        details,
        witnesses,
        elapsed_ms: started.elapsed().as_millis(),
    }
}

/// Which of the two maps drives an image computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapChoice {
    /// The piecewise map read off the cover's arc tables.
    F,
    /// The exact-stretch companion defined on the root arcs.
    FMod,
}

impl MapChoice {
    pub fn name(self) -> &'static str {
        match self {
            MapChoice::F => "f",
            MapChoice::FMod => "fmod",
        }
    }
}

fn expansion_of(sys: &System, map: MapChoice, arc: &Code) -> Result<Expansion, String> {
    match map {
        MapChoice::F => arc_expansion(sys, arc).map_err(|e| e.to_string()),
        MapChoice::FMod => exact::mod_expansion(sys, arc).map_err(|e| e.to_string()),
    }
}

/// Arc indices an expansion covers inside the skeleton window.
fn expansion_arcs(skel: &Skeleton, exp: &Expansion) -> Result<Vec<u32>, String> {
    match exp {
        Expansion::Slice { anchor, max_depth } => {
            let top = skel
                .node(anchor)
                .ok_or_else(|| format!("anchor {anchor} is outside the skeleton window"))?;
            Ok(skel.below(top, (*max_depth).min(skel.cut())))
        }
        Expansion::Chains { segments } => {
            let mut out = Vec::new();
            for (top, bottom) in segments {
                if !top.is_prefix_of(bottom) {
                    return Err(format!("chain ({top}, {bottom}] is not descending"));
                }
                let deep = (bottom.len() as u32).min(skel.cut());
                for d in top.len() as u32 + 1..=deep {
                    let node = skel
                        .node(&bottom.prefix(d as usize))
                        .ok_or_else(|| format!("chain node at depth {d} missing"))?;
                    out.push(node);
                }
            }
            Ok(out)
        }
    }
}

/// The arcs of the depth-`cut` window covered by one arc's image, as codes
/// in prefix order.
pub fn arc_cover_set(
    sys: &System,
    arc: &Code,
    cut: u32,
    map: MapChoice,
) -> Result<Vec<Code>, String> {
    let skel = build_skeleton(&sys.codes, cut);
    let exp = expansion_of(sys, map, arc)?;
    let mut arcs = expansion_arcs(&skel, &exp)?;
    arcs.sort_unstable();
    arcs.dedup();
    Ok(arcs.into_iter().map(|i| skel.code(i).clone()).collect())
}

#[derive(Debug, Clone, Serialize)]
pub enum FloodStop {
    /// Everything in the window is covered after this many steps.
    Covered { n_min: u32 },
    /// A frontier arc could not be expanded; coverage so far is honest but
    /// incomplete.
    Blocked { arc: String, reason: String },
    /// The iteration budget ran out (or the frontier emptied) first.
    Exhausted,
}

#[derive(Debug, Serialize)]
pub struct FloodOutcome {
    pub map: &'static str,
    pub cut: u32,
    pub total_arcs: usize,
    /// Covered-arc count after each step.
    pub cumulative: Vec<usize>,
    pub stop: FloodStop,
}

/// Cumulative image flood: starting from `start` arcs, repeatedly adds the
/// image of everything covered and reports how many steps full coverage of
/// the depth-`cut` window takes. Each arc's image is unioned once; an arc
/// whose image cannot be computed stops the flood rather than being skipped.
pub fn flood(
    sys: &System,
    start: &[Code],
    cut: u32,
    max_iter: u32,
    map: MapChoice,
) -> Result<FloodOutcome, String> {
    let skel = build_skeleton(&sys.codes, cut);
    let total = skel.len() - 1;
    let mut covered = vec![false; skel.len()];
    let mut count = 0usize;
    let mut queue: Vec<u32> = Vec::new();
    for c in start {
        let idx = skel.node(c).ok_or_else(|| format!("start arc {c} is not in the window"))?;
        if idx == 0 {
            return Err("the root is not an arc".into());
        }
        if !covered[idx as usize] {
            covered[idx as usize] = true;
            count += 1;
            queue.push(idx);
        }
    }
    let mut memo: BTreeMap<Expansion, Vec<u32>> = BTreeMap::new();
    let mut cumulative = Vec::new();
    let mut stop = FloodStop::Exhausted;
    for n in 1..=max_iter {
        if queue.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for &arc in &queue {
            let code = skel.code(arc);
            let exp = match expansion_of(sys, map, code) {
                Ok(e) => e,
                Err(reason) => {
                    return Ok(FloodOutcome {
                        map: map.name(),
                        cut,
                        total_arcs: total,
                        cumulative,
                        stop: FloodStop::Blocked { arc: code.to_string(), reason },
                    });
                }
            };
            let arcs = match memo.entry(exp) {
                std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => {
                    let computed = expansion_arcs(&skel, v.key())?;
                    v.insert(computed)
                }
            };
            for &i in arcs.iter() {
                if !covered[i as usize] {
                    covered[i as usize] = true;
                    count += 1;
                    next.push(i);
                }
            }
        }
        cumulative.push(count);
        if count == total {
            stop = FloodStop::Covered { n_min: n };
            break;
        }
        queue = next;
    }
    Ok(FloodOutcome { map: map.name(), cut, total_arcs: total, cumulative, stop })
}

#[derive(Debug, Serialize)]
pub struct WitnessOutcome {
    pub map: &'static str,
    pub cut: u32,
    /// |W_n| after each step; W_n is the exact image of W_{n-1} clipped to
    /// the window, always a finite union of closed skeleton arcs (no end
    /// points are ever involved).
    pub step_sizes: Vec<usize>,
    pub blocked: Option<String>,
}

/// Per-step forward images W_n = image(W_{n-1}) as exact skeleton arc sets.
pub fn forward_witness(
    sys: &System,
    start: &[Code],
    cut: u32,
    steps: u32,
    map: MapChoice,
) -> Result<WitnessOutcome, String> {
    let skel = build_skeleton(&sys.codes, cut);
    let mut current: Vec<u32> = Vec::new();
    for c in start {
        let idx = skel.node(c).ok_or_else(|| format!("start arc {c} is not in the window"))?;
        if idx == 0 {
            return Err("the root is not an arc".into());
        }
        current.push(idx);
    }
    current.sort_unstable();
    current.dedup();
    let mut memo: BTreeMap<Expansion, Vec<u32>> = BTreeMap::new();
    let mut step_sizes = Vec::new();
    for _ in 0..steps {
        let mut mark = vec![false; skel.len()];
        let mut next = Vec::new();
        for &arc in &current {
            let code = skel.code(arc);
            let exp = match expansion_of(sys, map, code) {
                Ok(e) => e,
                Err(reason) => {
                    return Ok(WitnessOutcome {
                        map: map.name(),
                        cut,
                        step_sizes,
                        blocked: Some(format!("arc {code}: {reason}")),
                    });
                }
            };
            let arcs = match memo.entry(exp) {
                std::collections::btree_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => {
                    let computed = expansion_arcs(&skel, v.key())?;
                    v.insert(computed)
                }
            };
            for &i in arcs.iter() {
                if !mark[i as usize] {
                    mark[i as usize] = true;
                    next.push(i);
                }
            }
        }
        next.sort_unstable();
        step_sizes.push(next.len());
        current = next;
    }
    Ok(WitnessOutcome { map: map.name(), cut, step_sizes, blocked: None })
}

/// Re-runs the per-level cover validation and folds it into a report.
pub fn cover_check(sys: &System) -> CheckReport {
    let started = Instant::now();
    let report = crate::cover::validate_presentation(&sys.seq);
    let mut details = vec![format!(
        "{} properties checked over {} levels",
        report.lines.len(),
        sys.seq.depth() + 1
    )];
    let mut witnesses = Vec::new();
    for line in &report.lines {
        if !line.pass {
            witnesses.push(format!(
                "level {}: {} fails ({})",
                line.level,
                line.property,
                line.witness.as_deref().unwrap_or("no witness")
            ));
        }
    }
    details.push(format!("pass: {}", report.pass));
    finish("cover", started, details, witnesses)
}

/// Every thread through a deepest-level cell: the successor thread's cells
/// must match the branch images level by level, and the thread's own codes
/// must nest, so the point-level map is exactly the cell-level shift.
pub fn conjugacy_check(sys: &System) -> CheckReport {
    let started = Instant::now();
    let mut witnesses = Vec::new();
    let top = sys.top_level();
    let cells = sys.seq.level(top).cell_count() as u32;
    for cell in 0..cells {
        let t = match Thread::through(&sys.seq, top, cell) {
            Ok(t) => t,
            Err(e) => {
                witnesses.push(format!("cell {cell}: no thread ({e})"));
                continue;
            }
        };
        let s = match thread_successor(&sys.seq, &t) {
            Ok(s) => s,
            Err(e) => {
                witnesses.push(format!("thread {}: no successor ({e})", t.describe(&sys.seq)));
                continue;
            }
        };
        for i in 1..=top {
            let image = branch_image_cell(sys, i, t.cell(i));
            if image != s.cell(i - 1) {
                witnesses.push(format!(
                    "thread {}: level {i} branch image {} but successor holds {}",
                    t.describe(&sys.seq),
                    sys.seq.level(i - 1).cell_name(image),
                    sys.seq.level(i - 1).cell_name(s.cell(i - 1)),
                ));
            }
        }
        for i in 1..top {
            let shallow = sys.codes.code(i, t.cell(i));
            let deep = sys.codes.code(i + 1, t.cell(i + 1));
            if !shallow.is_prefix_of(deep) {
                witnesses.push(format!(
                    "thread {}: codes at levels {i},{} do not nest",
                    t.describe(&sys.seq),
                    i + 1
                ));
            }
        }
    }
    match thread_successor(&sys.seq, &Thread::root()) {
        Ok(s) if s.depth() == 0 => {}
        other => witnesses.push(format!("root thread is not fixed: {other:?}")),
    }
    let details = vec![format!("{cells} deepest-level threads compared against the shift")];
    finish("conjugacy", started, details, witnesses)
}

/// Stretch floors: the global minimum must exceed 5/4 and every depth past
/// the first must stay above 4.
pub fn stretch_check(sys: &System, max_depth: u32) -> CheckReport {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    match stretch_report(sys, max_depth) {
        Ok(stats) => {
            details.push(format!(
                "{} arcs, {} pieces, min stretch {} on arc {}",
                stats.arcs, stats.pieces, stats.min, stats.min_arc
            ));
            if stats.min <= rat(5, 4) {
                witnesses.push(format!("minimum stretch {} is not above 5/4", stats.min));
            }
            for (depth, min) in &stats.per_depth_min {
                if *depth >= 2 && *min <= rat_int(4) {
                    witnesses.push(format!("depth {depth} stretch floor {min} is not above 4"));
                }
            }
        }
        Err(e) => witnesses.push(format!("stretch scan failed: {e}")),
    }
    finish("stretch", started, details, witnesses)
}

/// Uniform continuity with an explicit modulus: end pairs that agree on a
/// level-2 cell and split at level 3 have images trapped in the subtree
/// below the meet of their level-2 image codes. The bound is tight, so it
/// must hold with exact arithmetic and the sharp subtree diameter.
pub fn continuity_check(sys: &System, pairs: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    if sys.top_level() < 3 {
        witnesses.push("needs a build with at least three levels".to_string());
        return finish("continuity", started, details, witnesses);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let level2_mark = sys.codes.mark(2);
    let cells3 = sys.seq.level(3).cell_count() as u32;
    let mut min_meet = u32::MAX;
    let mut checked = 0usize;
    while checked < pairs {
        let a = rng.gen_range(0..cells3);
        let parent = sys.seq.parent_cell(3, a);
        let siblings = sys.seq.child_cells(2, parent);
        if siblings.len() < 2 {
            continue;
        }
        let b = siblings[rng.gen_range(0..siblings.len())];
        if b == a {
            continue;
        }
        checked += 1;
        let ta = Thread::through(&sys.seq, 3, a).expect("thread through cell");
        let tb = Thread::through(&sys.seq, 3, b).expect("thread through cell");
        let sa = thread_successor(&sys.seq, &ta).expect("successor thread");
        let sb = thread_successor(&sys.seq, &tb).expect("successor thread");
        let ia = sys.codes.code(2, sa.cell(2));
        let ib = sys.codes.code(2, sb.cell(2));
        let meet = ia.meet(ib);
        if (meet.len() as u32) < sys.codes.mark(1) {
            witnesses.push(format!(
                "cells {},{}: image codes meet at depth {} above the level-1 mark",
                sys.seq.level(3).cell_name(a),
                sys.seq.level(3).cell_name(b),
                meet.len()
            ));
            continue;
        }
        min_meet = min_meet.min(meet.len() as u32);
        let d_trunc = distance(&crate::dendrite::DPoint::Node(ia.clone()),
                               &crate::dendrite::DPoint::Node(ib.clone()));
        let lhs = d_trunc + tail_below(level2_mark as usize) * rat_int(2);
        let rhs = sharp_subtree_diameter(meet.len() as u32);
        if lhs > rhs {
            witnesses.push(format!(
                "cells {},{}: image spread {lhs} exceeds the sharp diameter {rhs}",
                sys.seq.level(3).cell_name(a),
                sys.seq.level(3).cell_name(b),
            ));
        }
    }
    details.push(format!(
        "{checked} sibling end pairs; image codes never met above depth {min_meet}"
    ));
    finish("continuity", started, details, witnesses)
}

/// Metric sanity: hand-computed distances, additivity through the meet,
/// subtree diameter bounds (sampled max stays within the sharp bound, which
/// is below the coarse one), and end-point distance brackets.
pub fn geometry_check(sys: &System, samples: usize, seed: u64) -> CheckReport {
    use crate::dendrite::DPoint;
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    let node = |s: &str| DPoint::Node(Code::parse(s).unwrap());

    for (p, q, want) in [
        (node(""), node("0"), rat(1, 4)),
        (node("0"), node("1"), rat(1, 2)),
        (node(""), node("01"), rat(5, 16)),
    ] {
        let d = distance(&p, &q);
        if d != want {
            witnesses.push(format!("hand distance {p:?},{q:?}: got {d}, want {want}"));
        }
    }

    let cut = sys.codes.mark(1).min(10);
    let skel = build_skeleton(&sys.codes, cut);
    let mut rng = StdRng::seed_from_u64(seed);
    let pick = |rng: &mut StdRng| -> Code {
        let i = rng.gen_range(1..skel.len() as u32);
        skel.code(i).clone()
    };
    for _ in 0..samples {
        let a = pick(&mut rng);
        let b = pick(&mut rng);
        let (pa, pb) = (DPoint::Node(a.clone()), DPoint::Node(b.clone()));
        let d = distance(&pa, &pb);
        if d != distance(&pb, &pa) {
            witnesses.push(format!("asymmetry between {a} and {b}"));
        }
        let m = DPoint::Node(a.meet(&b));
        let via = distance(&pa, &m) + distance(&m, &pb);
        if d != via {
            witnesses.push(format!("path through meet of {a},{b}: {via} != {d}"));
        }
    }

    // Sampled diameters below a node never pass the sharp bound.
    for depth in 1..cut {
        let tops: Vec<u32> =
            (1..skel.len() as u32).filter(|&i| skel.depth(i) == depth).collect();
        let top = tops[rng.gen_range(0..tops.len())];
        let below = skel.below(top, cut);
        if below.len() < 2 {
            continue;
        }
        let mut widest = Rational::from_integer(0.into());
        for _ in 0..samples.min(40) {
            let x = below[rng.gen_range(0..below.len())];
            let y = below[rng.gen_range(0..below.len())];
            let d = distance(
                &DPoint::Node(skel.code(x).clone()),
                &DPoint::Node(skel.code(y).clone()),
            );
            if d > widest {
                widest = d;
            }
        }
        let sharp = sharp_subtree_diameter(depth);
        let coarse = coarse_subtree_diameter(depth);
        if widest > sharp || sharp >= coarse {
            witnesses.push(format!(
                "depth {depth}: sampled diameter {widest}, sharp {sharp}, coarse {coarse}"
            ));
        }
    }

    // End points are only known through nested cells; their distance
    // brackets must be ordered and no wider than the unresolved tails.
    let top = sys.top_level();
    let cells = sys.seq.level(top).cell_count() as u32;
    for _ in 0..samples.min(20) {
        let ta = Thread::through(&sys.seq, top, rng.gen_range(0..cells)).unwrap();
        let tb = Thread::through(&sys.seq, top, rng.gen_range(0..cells)).unwrap();
        let (lo, hi) = distance_interval(
            &sys.codes,
            &DPoint::End(ta.clone()),
            &DPoint::End(tb.clone()),
        );
        if lo > hi {
            witnesses.push(format!(
                "end bracket inverted for {} vs {}",
                ta.describe(&sys.seq),
                tb.describe(&sys.seq)
            ));
        }
        let slack = tail_below(sys.codes.mark(top) as usize) * rat_int(4);
        if hi.clone() - lo.clone() > slack {
            witnesses.push(format!(
                "end bracket wider than the unresolved tails: {}",
                crate::ratio::format_ratio(&(hi - lo))
            ));
        }
    }

    details.push(format!("hand distances, {samples} sampled node pairs, diameter bounds"));
    finish("geometry", started, details, witnesses)
}

/// Structural suite for the stage family: tiling, exact stretch, nesting
/// and boundary agreement, at sampled parameters and every cutpoint.
pub fn exact_check(sys: &System, max_stage: u32, samples: usize, seed: u64) -> CheckReport {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    match exact::stage_check(sys, max_stage, samples, seed) {
        Ok(out) => {
            details.push(format!(
                "stages to {} checked at {} parameters",
                out.stages, out.samples
            ));
            witnesses.extend(out.failures);
        }
        Err(e) => witnesses.push(format!("stage check failed: {e}")),
    }
    finish("exact", started, details, witnesses)
}

/// Convergence of the stage family as a cover of the tree: the stage-n
/// linear pieces land on exactly the arcs of the depth-n window, and one
/// stage image already floods the level-1 window.
pub fn stages_check(sys: &System, max_stage: u32) -> CheckReport {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    let top = max_stage.min(sys.trusted_depth());
    if top < max_stage {
        details.push(format!("stage range clamped to the build depth: {top}"));
    }
    let skel = build_skeleton(&sys.codes, top);
    for n in 1..=top {
        match exact::stage_table(sys, n) {
            Ok(tab) => {
                let mut got: Vec<Code> = tab
                    .pieces
                    .iter()
                    .filter_map(|p| match p {
                        exact::StagePiece::Linear { arc, .. } => Some(arc.clone()),
                        exact::StagePiece::Spread { .. } => None,
                    })
                    .collect();
                got.sort();
                got.dedup();
                let want: Vec<Code> =
                    skel.below(0, n).into_iter().map(|i| skel.code(i).clone()).collect();
                if got != want {
                    witnesses.push(format!(
                        "stage {n} reaches {} arcs, the depth-{n} window has {}",
                        got.len(),
                        want.len()
                    ));
                }
            }
            Err(e) => witnesses.push(format!("stage {n}: {e}")),
        }
    }
    details.push(format!("stages 1..={top} each cover their window exactly"));
    let cut = sys.codes.mark(1);
    match flood(sys, &[Code::parse("0").unwrap()], cut, 4, MapChoice::FMod) {
        Ok(out) => match out.stop {
            FloodStop::Covered { n_min } => {
                details
                    .push(format!("root-arc flood covers the depth-{cut} window in {n_min} step(s)"));
                if n_min != 1 {
                    witnesses.push(format!("root-arc image should cover in one step, took {n_min}"));
                }
            }
            other => witnesses.push(format!("root-arc flood stopped early: {other:?}")),
        },
        Err(e) => witnesses.push(format!("root-arc flood failed: {e}")),
    }
    finish("stages", started, details, witnesses)
}

/// Flood the cover map from the first root arc and wrap the outcome.
pub fn mixing_check(sys: &System, cut: u32, max_iter: u32) -> CheckReport {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    match flood(sys, &[Code::parse("0").unwrap()], cut, max_iter, MapChoice::F) {
        Ok(out) => {
            details.push(format!(
                "window to depth {}: {} arcs, coverage per step {:?}",
                out.cut, out.total_arcs, out.cumulative
            ));
            match out.stop {
                FloodStop::Covered { n_min } => {
                    details.push(format!("full coverage after {n_min} step(s)"));
                }
                FloodStop::Blocked { arc, reason } => {
                    witnesses.push(format!("blocked at arc {arc}: {reason}"));
                }
                FloodStop::Exhausted => {
                    witnesses.push(format!("no full coverage within {max_iter} step(s)"));
                }
            }
        }
        Err(e) => witnesses.push(format!("flood failed: {e}")),
    }
    finish("mixing", started, details, witnesses)
}

/// Per-step forward images from one arc: all sizes finite, no end points,
/// strictly growing until the window saturates.
pub fn pure_check(sys: &System, cut: u32, steps: u32) -> CheckReport {
    let started = Instant::now();
    let mut details = Vec::new();
    let mut witnesses = Vec::new();
    match forward_witness(sys, &[Code::parse("0").unwrap()], cut, steps, MapChoice::F) {
        Ok(out) => {
            details.push(format!(
                "step image sizes within the depth-{} window: {:?}",
                out.cut, out.step_sizes
            ));
            if let Some(b) = out.blocked {
                witnesses.push(b);
            } else {
                let saturated = out.step_sizes.windows(2).all(|w| w[1] >= w[0]);
                if !saturated {
                    witnesses.push("image sizes are not monotone".to_string());
                }
            }
        }
        Err(e) => witnesses.push(format!("witness run failed: {e}")),
    }
    finish("pure", started, details, witnesses)
}
