//! The companion construction with expansion factor exactly 8.
//!
//! Each root arc carries a nested sequence of stage tables. A stage-n table
//! tiles the arc parameter with closed linear pieces (each mapped two-way
//! onto one arc, stretching by exactly 8) and open spread pieces that the
//! next stage subdivides; a spread piece with code w eventually covers the
//! whole subtree below node w. Linear pieces never change once created, so
//! the stages converge uniformly: stage-n spread images have diameter at
//! most (2/3)4^(-n) and shrink fourfold per stage.
//!
//! The map is defined on the two root arcs (which it spreads over the whole
//! tree); the root and both its child nodes are fixed on the root's value.

use crate::code::Code;
use crate::dendrite::DPoint;
use crate::ratio::{rat_int, Rational};
use crate::system::System;
use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeSet;
use thiserror::Error;

const MAX_STAGE: u32 = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StageError {
    #[error("parameter {0} is outside the root arcs")]
    OutsideDomain(String),
    #[error("node {node} has no children in the built levels; stage {stage} needs a deeper build")]
    Bottomed { node: String, stage: u32 },
    #[error("stage {0} exceeds the supported maximum {MAX_STAGE}")]
    TooManyStages(u32),
    /// Points away from the root arcs fall through to the unmodified map.
    #[error(transparent)]
    Outer(#[from] crate::dynamics::MapError),
}

/// Intervals are closed for linear pieces and open for spread pieces; at a
/// shared boundary the linear value wins (the spread's own refinement
/// produces the same value there, which the checks confirm).
#[derive(Debug, Clone, PartialEq)]
pub enum StagePiece {
    Linear { lo: Rational, hi: Rational, arc: Code, down: bool },
    Spread { lo: Rational, hi: Rational, node: Code },
}

impl StagePiece {
    pub fn lo(&self) -> &Rational {
        match self {
            StagePiece::Linear { lo, .. } | StagePiece::Spread { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> &Rational {
        match self {
            StagePiece::Linear { hi, .. } | StagePiece::Spread { hi, .. } => hi,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageTable {
    pub stage: u32,
    pub pieces: Vec<StagePiece>,
}

/// The two subtree targets one refinement step hands a spread piece: its
/// node's children, with a single child standing in for both.
fn spread_targets(sys: &System, node: &Code, stage: u32) -> Result<(Code, Code), StageError> {
    let (c0, c1) = sys.codes.node_children(node);
    if !c0 && !c1 {
        return Err(StageError::Bottomed { node: node.to_string(), stage });
    }
    Ok((node.child(!c0), node.child(c1)))
}

fn refine_spread(
    sys: &System,
    lo: &Rational,
    hi: &Rational,
    node: &Code,
    stage: u32,
) -> Result<[StagePiece; 6], StageError> {
    let (a0, a1) = spread_targets(sys, node, stage)?;
    let w = hi.clone() - lo.clone();
    let at = |k: i64| lo.clone() + w.clone() * Rational::new(k.into(), 8.into());
    Ok([
        StagePiece::Linear { lo: at(0), hi: at(1), arc: a0.clone(), down: true },
        StagePiece::Spread { lo: at(1), hi: at(3), node: a0.clone() },
        StagePiece::Linear { lo: at(3), hi: at(4), arc: a0, down: false },
        StagePiece::Linear { lo: at(4), hi: at(5), arc: a1.clone(), down: true },
        StagePiece::Spread { lo: at(5), hi: at(7), node: a1.clone() },
        StagePiece::Linear { lo: at(7), hi: at(8), arc: a1, down: false },
    ])
}

/// The stage-`stage` table shared by both root arcs.
pub fn stage_table(sys: &System, stage: u32) -> Result<StageTable, StageError> {
    if stage > MAX_STAGE {
        return Err(StageError::TooManyStages(stage));
    }
    let mut pieces =
        vec![StagePiece::Spread { lo: Rational::zero(), hi: rat_int(1), node: Code::root() }];
    for s in 1..=stage {
        let mut next = Vec::with_capacity(pieces.len() * 4);
        for p in pieces {
            match p {
                StagePiece::Linear { .. } => next.push(p),
                StagePiece::Spread { lo, hi, node } => {
                    next.extend(refine_spread(sys, &lo, &hi, &node, s)?);
                }
            }
        }
        pieces = next;
    }
    Ok(StageTable { stage, pieces })
}

fn linear_value(lo: &Rational, hi: &Rational, arc: &Code, down: bool, t: &Rational) -> DPoint {
    let s = (t.clone() - lo.clone()) / (hi.clone() - lo.clone());
    let frac = if down { s } else { rat_int(1) - s };
    DPoint::interior(arc.clone(), frac)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitValue {
    Point(DPoint),
    /// The parameter keeps landing strictly inside spread pieces; after
    /// `depth` refinements it is pinned below this node.
    Nested { node: Code, depth: u32 },
}

/// Value of the limit map at parameter `t` inside the spread piece
/// (`lo`,`hi`) with subtree code `node`, refining at most `budget` times.
fn descend(
    sys: &System,
    mut lo: Rational,
    mut hi: Rational,
    mut node: Code,
    t: &Rational,
    budget: u32,
) -> Result<LimitValue, StageError> {
    for step in 0..budget {
        let sub = refine_spread(sys, &lo, &hi, &node, node.len() as u32 + 1)?;
        let mut next = None;
        for p in &sub {
            match p {
                StagePiece::Linear { lo, hi, arc, down } => {
                    if t >= lo && t <= hi {
                        return Ok(LimitValue::Point(linear_value(lo, hi, arc, *down, t)));
                    }
                }
                StagePiece::Spread { lo, hi, node } => {
                    if t > lo && t < hi {
                        next = Some((lo.clone(), hi.clone(), node.clone()));
                    }
                }
            }
        }
        let (l, h, n) =
            next.unwrap_or_else(|| panic!("refinement tiles the interval at step {step}"));
        lo = l;
        hi = h;
        node = n;
    }
    Ok(LimitValue::Nested { node, depth: budget })
}

/// Limit value at parameter `t` of a root arc's table.
pub fn eval_limit(sys: &System, t: &Rational, budget: u32) -> Result<LimitValue, StageError> {
    if *t < Rational::zero() || *t > rat_int(1) {
        return Err(StageError::OutsideDomain(format!("t={t}")));
    }
    descend(sys, Rational::zero(), rat_int(1), Code::root(), t, budget)
}

/// The modified map at any point: the stage limit on the two root arcs,
/// the unmodified map everywhere else. The three gluing nodes agree under
/// both definitions, all landing on the root.
pub fn eval_f_mod(sys: &System, p: &DPoint, budget: u32) -> Result<LimitValue, StageError> {
    match p {
        DPoint::Node(c) if c.is_empty() => Ok(LimitValue::Point(DPoint::Node(Code::root()))),
        DPoint::Node(c) if c.len() == 1 => eval_limit(sys, &rat_int(1), budget),
        DPoint::Interior { arc, t } if arc.len() == 1 => eval_limit(sys, t, budget),
        other => Ok(LimitValue::Point(crate::dynamics::eval_f(sys, other)?)),
    }
}

/// What the image of an arc covers under the modified map: a root arc
/// spreads over everything, deeper arcs behave as under the unmodified map.
pub fn mod_expansion(sys: &System, arc: &Code) -> Result<crate::dynamics::Expansion, StageError> {
    if arc.len() == 1 {
        return Ok(crate::dynamics::Expansion::Slice {
            anchor: Code::root(),
            max_depth: u32::MAX,
        });
    }
    Ok(crate::dynamics::arc_expansion(sys, arc)?)
}

#[derive(Debug)]
pub struct StageCheckOutcome {
    pub stages: u32,
    pub samples: usize,
    pub failures: Vec<String>,
}

/// Cross-checks the stage family: piece counts and tiling, exact stretch 8,
/// linear arcs matching the skeleton band, persistence of linear pieces,
/// boundary agreement, the shrinking-diameter chain at sampled parameters,
/// and the fixed values at the root and its children.
pub fn stage_check(
    sys: &System,
    max_stage: u32,
    sample_count: usize,
    seed: u64,
) -> Result<StageCheckOutcome, StageError> {
    let mut failures = Vec::new();
    let mut fail = |msg: String| failures.push(msg);
    let tables: Vec<StageTable> =
        (0..=max_stage).map(|n| stage_table(sys, n)).collect::<Result<_, _>>()?;

    for table in &tables[1..] {
        let n = table.stage;
        let mut spread = 0usize;
        let mut linear = 0usize;
        let mut cursor = Rational::zero();
        let mut arcs = BTreeSet::new();
        let mut spread_measure = Rational::zero();
        for p in &table.pieces {
            if p.lo() != &cursor {
                fail(format!("stage {n}: gap before parameter {}", p.lo()));
            }
            cursor = p.hi().clone();
            match p {
                StagePiece::Linear { lo, hi, arc, .. } => {
                    linear += 1;
                    arcs.insert(arc.clone());
                    let width = hi.clone() - lo.clone();
                    // Domain arcs have length 1/4; image arc 4^(-depth).
                    let lambda = crate::ratio::arc_len(arc.len())
                        / (width * crate::ratio::arc_len(1));
                    if lambda != rat_int(8) {
                        fail(format!("stage {n}: piece at {lo} stretches by {lambda}, not 8"));
                    }
                }
                StagePiece::Spread { lo, hi, node } => {
                    spread += 1;
                    spread_measure += hi.clone() - lo.clone();
                    if node.len() != n as usize {
                        fail(format!("stage {n}: spread node {node} at wrong depth"));
                    }
                }
            }
        }
        if cursor != rat_int(1) {
            fail(format!("stage {n}: table ends at {cursor}"));
        }
        if spread != 1usize << n {
            fail(format!("stage {n}: {spread} spread pieces, expected {}", 1usize << n));
        }
        if linear != 4 * ((1usize << n) - 1) {
            fail(format!("stage {n}: {linear} linear pieces"));
        }
        // Unresolved parameters thin out by half per stage.
        if spread_measure != crate::ratio::rat(1, 1 << n) {
            fail(format!("stage {n}: unresolved measure {spread_measure}, expected 1/2^{n}"));
        }
        // The linear pieces' arcs are exactly the skeleton arcs to depth n.
        let skel = crate::dendrite::build_skeleton(&sys.codes, n);
        let expect: BTreeSet<Code> =
            skel.below(0, n).into_iter().map(|i| skel.code(i).clone()).collect();
        if arcs != expect {
            fail(format!(
                "stage {n}: linear arcs cover {} arcs, skeleton band has {}",
                arcs.len(),
                expect.len()
            ));
        }
        // Every earlier linear piece survives unchanged.
        let prev = &tables[n as usize - 1];
        for p in &prev.pieces {
            if matches!(p, StagePiece::Linear { .. }) && !table.pieces.contains(p) {
                fail(format!("stage {n}: dropped a stage {} linear piece", n - 1));
            }
        }
    }

    // Boundary agreement on the deepest table: adjacent pieces give the
    // same value at their shared cutpoint.
    let deep = &tables[max_stage as usize];
    let budget = max_stage + 48;
    let value_at = |piece: &StagePiece, t: &Rational| -> Result<DPoint, StageError> {
        match piece {
            StagePiece::Linear { lo, hi, arc, down } => Ok(linear_value(lo, hi, arc, *down, t)),
            StagePiece::Spread { lo, hi, node } => {
                match descend(sys, lo.clone(), hi.clone(), node.clone(), t, budget)? {
                    LimitValue::Point(p) => Ok(p),
                    LimitValue::Nested { node, .. } => Err(StageError::Bottomed {
                        node: node.to_string(),
                        stage: max_stage,
                    }),
                }
            }
        }
    };
    for pair in deep.pieces.windows(2) {
        let t = pair[0].hi();
        let left = value_at(&pair[0], t)?;
        let right = value_at(&pair[1], t)?;
        if left != right {
            fail(format!("boundary at {t}: {left:?} vs {right:?}"));
        }
    }

    // Fixed values: both arc ends of both root arcs rest on the root.
    for t in [Rational::zero(), rat_int(1)] {
        match eval_limit(sys, &t, budget)? {
            LimitValue::Point(DPoint::Node(c)) if c.is_empty() => {}
            other => fail(format!("end value at t={t}: {other:?}")),
        }
    }

    // Nesting and the quarter-diameter chain, at every cutpoint of the
    // deepest table plus sampled rationals. The stage-n value set at a
    // parameter is either a single point (a linear piece, diameter 0) or
    // the whole closed subtree below a depth-n node (sharp diameter
    // (2/3)4^(-n), exactly a quarter of the previous stage's).
    let mut rng = StdRng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let den = rng.gen_range(2u64..1 << 20);
        let num = rng.gen_range(1..den);
        samples.push(Rational::new(num.into(), den.into()));
    }
    for p in &deep.pieces {
        samples.push(p.lo().clone());
    }
    samples.push(rat_int(1));

    enum StageValue {
        At(DPoint),
        Within(Code),
    }
    let value_set = |table: &StageTable, t: &Rational| -> StageValue {
        for p in &table.pieces {
            if let StagePiece::Linear { lo, hi, arc, down } = p {
                if t >= lo && t <= hi {
                    return StageValue::At(linear_value(lo, hi, arc, *down, t));
                }
            }
        }
        for p in &table.pieces {
            if let StagePiece::Spread { lo, hi, node } = p {
                // Open in the interior; the [0,1] endpoints only reach here
                // at stage 0, where the whole tree is the value set.
                if t >= lo && t <= hi {
                    return StageValue::Within(node.clone());
                }
            }
        }
        unreachable!("stage tables tile [0,1]")
    };
    let inside_subtree = |p: &DPoint, w: &Code| -> bool {
        match p {
            DPoint::Node(c) => w.is_prefix_of(c),
            DPoint::Interior { arc, .. } => w.is_prefix_of(arc) && arc.len() > w.len(),
            DPoint::End(_) => false,
        }
    };
    for t in &samples {
        let mut prev: Option<StageValue> = None;
        for table in &tables {
            let cur = value_set(table, t);
            if let Some(p) = &prev {
                match (p, &cur) {
                    (StageValue::At(x), StageValue::At(y)) => {
                        if x != y {
                            fail(format!(
                                "t={t}: settled value moved at stage {} ({x:?} to {y:?})",
                                table.stage
                            ));
                        }
                    }
                    (StageValue::At(_), StageValue::Within(w)) => {
                        fail(format!(
                            "t={t}: stage {} reopened a settled value into {w}",
                            table.stage
                        ));
                    }
                    (StageValue::Within(w), StageValue::At(y)) => {
                        if !inside_subtree(y, w) {
                            fail(format!(
                                "t={t}: stage {} value {y:?} escapes subtree {w}",
                                table.stage
                            ));
                        }
                    }
                    (StageValue::Within(w), StageValue::Within(w2)) => {
                        // Quarter chain: one level deeper means the sharp
                        // diameter shrinks by exactly 4.
                        if !w.is_prefix_of(w2) || w2.len() != w.len() + 1 {
                            fail(format!(
                                "t={t}: stage {} subtree {w2} does not refine {w}",
                                table.stage
                            ));
                        }
                    }
                }
            }
            prev = Some(cur);
        }
    }

    // Raising the resolution budget never changes a settled value and only
    // extends an unresolved prefix.
    for t in samples.iter().take(48) {
        let short = eval_limit(sys, t, max_stage + 6)?;
        let long = eval_limit(sys, t, max_stage + 14)?;
        match (&short, &long) {
            (LimitValue::Point(a), LimitValue::Point(b)) if a == b => {}
            (LimitValue::Nested { node, .. }, LimitValue::Point(DPoint::Node(c)))
                if node.is_prefix_of(c) => {}
            (LimitValue::Nested { node, .. }, LimitValue::Point(DPoint::Interior { arc, .. }))
                if node.is_prefix_of(arc) => {}
            (LimitValue::Nested { node: a, .. }, LimitValue::Nested { node: b, .. })
                if a.is_prefix_of(b) => {}
            _ => fail(format!("t={t}: value not budget-monotone ({short:?} vs {long:?})")),
        }
    }

    Ok(StageCheckOutcome { stages: max_stage, samples: samples.len(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;
    use crate::system::{build, SystemSpec};

    fn shift(depth: usize) -> System {
        build(SystemSpec::FullShift { symbols: 2, depth, extension_bound: None }).unwrap()
    }

    #[test]
    fn stage_counts_follow_the_doubling_rule() {
        let sys = shift(2);
        for n in 0..=5u32 {
            let t = stage_table(&sys, n).unwrap();
            let spread =
                t.pieces.iter().filter(|p| matches!(p, StagePiece::Spread { .. })).count();
            let linear =
                t.pieces.iter().filter(|p| matches!(p, StagePiece::Linear { .. })).count();
            assert_eq!(spread, 1 << n);
            assert_eq!(linear, 4 * ((1 << n) - 1));
        }
    }

    #[test]
    fn single_child_chains_duplicate_the_spread_target() {
        let sys = shift(2);
        let t4 = stage_table(&sys, 4).unwrap();
        let spread_nodes: Vec<String> = t4
            .pieces
            .iter()
            .filter_map(|p| match p {
                StagePiece::Spread { node, .. } => Some(node.to_string()),
                _ => None,
            })
            .collect();
        assert_eq!(spread_nodes.len(), 16);
        let distinct: BTreeSet<&String> = spread_nodes.iter().collect();
        // Depth-3 nodes chain into a single depth-4 node each.
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn first_linear_piece_matches_by_hand_values() {
        let sys = shift(2);
        let v = eval_limit(&sys, &rat(1, 16), 32).unwrap();
        assert_eq!(
            v,
            LimitValue::Point(DPoint::interior(Code::parse("0").unwrap(), rat(1, 2)))
        );
        let at_cut = eval_limit(&sys, &rat(1, 8), 32).unwrap();
        assert_eq!(at_cut, LimitValue::Point(DPoint::Node(Code::parse("0").unwrap())));
        let quarter = eval_limit(&sys, &rat(1, 4), 32).unwrap();
        assert_eq!(quarter, LimitValue::Point(DPoint::Node(Code::parse("0").unwrap())));
    }

    #[test]
    fn renormalization_fixed_point_never_resolves() {
        let sys = shift(2);
        match eval_limit(&sys, &rat(1, 6), 12).unwrap() {
            LimitValue::Nested { node, depth } => {
                assert_eq!(depth, 12);
                assert_eq!(node.to_string(), "000000000000");
            }
            other => panic!("expected nesting, got {other:?}"),
        }
    }

    #[test]
    fn away_from_the_root_arcs_the_two_maps_agree() {
        let sys = shift(2);
        let deep = DPoint::interior(Code::parse("01").unwrap(), rat(1, 3));
        let outer = crate::dynamics::eval_f(&sys, &deep).unwrap();
        assert_eq!(eval_f_mod(&sys, &deep, 8).unwrap(), LimitValue::Point(outer));
        let root = eval_f_mod(&sys, &DPoint::Node(Code::root()), 8).unwrap();
        assert_eq!(root, LimitValue::Point(DPoint::Node(Code::root())));
        let c1 = eval_f_mod(&sys, &DPoint::Node(Code::parse("1").unwrap()), 8).unwrap();
        assert_eq!(c1, LimitValue::Point(DPoint::Node(Code::root())));
        // Depth limits of the outer map pass through.
        let too_deep = DPoint::interior(sys.codes.code(2, 0).clone(), rat(1, 2));
        assert!(matches!(
            eval_f_mod(&sys, &too_deep, 8),
            Err(StageError::Outer(crate::dynamics::MapError::TooDeep { .. }))
        ));
    }

    #[test]
    fn stage_checks_pass_on_the_reference_build() {
        let sys = shift(2);
        let out = stage_check(&sys, 4, 60, 7).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
    }

    #[test]
    fn stages_deeper_than_the_build_bottom_out() {
        let sys = shift(1);
        // Stage 9 would need children of depth-8 nodes beyond the one
        // built level.
        assert!(matches!(
            stage_table(&sys, 9),
            Err(StageError::Bottomed { .. })
        ));
        assert!(stage_table(&sys, 8).is_ok());
    }
}
