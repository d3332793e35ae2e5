//! The tree map conjugate to the shift on thread space.
//!
//! Every skeleton arc carries a finite table of linear pieces. An arc in the
//! interior of a level band folds back and forth over the paths from an
//! anchor node down to every level cell below that anchor; the arc arriving
//! at a cell node walks the image paths of its graph successors instead,
//! each extended one arc past the successor node so that images overrun the
//! next level points. Piece endpoints meet, so the map is continuous, and
//! cell nodes land exactly on their shift image's node.

use crate::code::Code;
use crate::cover::{thread_successor, ThreadError};
use crate::dendrite::{arc_span, build_skeleton, DPoint};
use crate::ratio::{arc_len, rat_int, Rational};
use crate::system::System;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("the root is a fixed node, not an arc")]
    RootArc,
    #[error("word {0:?} is not a skeleton arc")]
    NotAnArc(String),
    #[error("arc depth {depth} is beyond the trusted depth {trusted}; build more levels")]
    TooDeep { depth: u32, trusted: u32 },
    #[error("an end known only at the root level cannot be advanced further")]
    EndExhausted,
    #[error(transparent)]
    Thread(#[from] ThreadError),
}

/// One linear piece: the parameter interval [lo,hi] of the arc maps onto
/// the descending chain of arcs from `top` (exclusive) to `bottom`
/// (inclusive); `down` tells which end of the interval sits at `top`.
#[derive(Debug, Clone)]
pub struct Piece {
    pub lo: Rational,
    pub hi: Rational,
    pub top: Code,
    pub bottom: Code,
    pub down: bool,
}

impl Piece {
    pub fn chain_length(&self) -> Rational {
        arc_span(self.top.len() as u32 + 1, self.bottom.len() as u32)
    }

    /// Expansion factor of the piece on an arc at tree depth `depth`.
    pub fn lambda(&self, depth: u32) -> Rational {
        self.chain_length() / ((self.hi.clone() - self.lo.clone()) * arc_len(depth as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    /// Interior of a level band: folds over every path below the anchor.
    Band,
    /// The arc arriving at a cell node: follows the successors' paths.
    Cell,
}

#[derive(Debug, Clone)]
pub struct ArcTable {
    pub arc: Code,
    pub level: usize,
    pub kind: ArcKind,
    pub pieces: Vec<Piece>,
}

/// The level-(i-1) cell every graph successor of `cell` maps down to; this
/// is the cell whose node the shift sends `cell`'s node to. Well defined on
/// validated covers.
pub fn branch_image_cell(sys: &System, level: usize, cell: u32) -> u32 {
    let succ = sys.seq.level(level).successors(cell);
    sys.seq.parent_cell(level, succ[0])
}

/// The two cell families the table construction draws on, plus the fixed
/// descending-arc choice below each reachable cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySets {
    /// Same-level cells whose codes extend this cell's image code.
    pub w_ad: Vec<u32>,
    /// Graph successors of the cell.
    pub w_rel: Vec<u32>,
    /// Per successor, the arc that peels one level below its node; the
    /// balanced code policy guarantees the 0-child exists, and it is the
    /// least descending arc.
    pub e_choice: Vec<Code>,
}

pub fn family_sets(sys: &System, level: usize, cell: u32) -> FamilySets {
    assert!(level >= 1 && level <= sys.top_level(), "family level out of range");
    let image = branch_image_cell(sys, level, cell);
    let prefix = sys.codes.code(level - 1, image);
    let w_ad = (0..sys.seq.level(level).cell_count() as u32)
        .filter(|&w| prefix.is_prefix_of(sys.codes.code(level, w)))
        .collect();
    let w_rel: Vec<u32> = sys.seq.level(level).successors(cell).to_vec();
    let e_choice = w_rel.iter().map(|&w| sys.codes.code(level, w).child(false)).collect();
    FamilySets { w_ad, w_rel, e_choice }
}

fn check_arc(sys: &System, arc: &Code) -> Result<usize, MapError> {
    let m = arc.len() as u32;
    if m == 0 {
        return Err(MapError::RootArc);
    }
    let trusted = sys.trusted_depth();
    if m > trusted {
        return Err(MapError::TooDeep { depth: m, trusted });
    }
    if !sys.codes.node_exists(arc) {
        return Err(MapError::NotAnArc(arc.to_string()));
    }
    Ok(sys.codes.level_of_depth(m).expect("depth within built levels"))
}

/// Image node of the upper endpoint of the arcs in a band: the anchor all
/// band tables of that upper cell fold from.
fn band_anchor(sys: &System, level: usize, arc: &Code) -> Code {
    if level == 1 {
        return Code::root();
    }
    let upper = sys
        .codes
        .ancestor_cell(level - 1, arc)
        .expect("band arcs extend their upper cell's code");
    sys.codes.code(level - 2, branch_image_cell(sys, level - 1, upper)).clone()
}

pub fn arc_table(sys: &System, arc: &Code) -> Result<ArcTable, MapError> {
    let level = check_arc(sys, arc)?;
    let m = arc.len() as u32;
    if m < sys.codes.mark(level) {
        let anchor = band_anchor(sys, level, arc);
        let family: Vec<u32> = (0..sys.seq.level(level).cell_count() as u32)
            .filter(|&w| anchor.is_prefix_of(sys.codes.code(level, w)))
            .collect();
        let k = family.len() as i64;
        let mut pieces = Vec::with_capacity(2 * family.len());
        for (j, &w) in family.iter().enumerate() {
            let bottom = sys.codes.code(level, w).clone();
            let j = j as i64;
            for (step, down) in [(0, true), (1, false)] {
                pieces.push(Piece {
                    lo: Rational::new((2 * j + step).into(), (2 * k).into()),
                    hi: Rational::new((2 * j + step + 1).into(), (2 * k).into()),
                    top: anchor.clone(),
                    bottom: bottom.clone(),
                    down,
                });
            }
        }
        return Ok(ArcTable { arc: arc.clone(), level, kind: ArcKind::Band, pieces });
    }
    // Arc arriving at a cell node.
    let cell = sys.codes.cell_at(level, arc).expect("cell arcs carry cell codes");
    let image = branch_image_cell(sys, level, cell);
    let image_code = sys.codes.code(level - 1, image).clone();
    let succ = sys.seq.level(level).successors(cell);
    let k = succ.len() as i64;
    let mut pieces = Vec::new();
    let denom = if level == 1 { 2 * k } else { 2 * k + 1 };
    let mut slot = 0i64;
    if level >= 2 {
        // Lead-in: climb the image one more level so the piece chain starts
        // where the band tables above this cell node land.
        pieces.push(Piece {
            lo: Rational::zero(),
            hi: Rational::new(1.into(), denom.into()),
            top: image_code.prefix(sys.codes.mark(level - 2) as usize),
            bottom: image_code.clone(),
            down: true,
        });
        slot = 1;
    }
    for &w in succ {
        let bottom = sys.codes.code(level, w).child(false);
        for down in [true, false] {
            pieces.push(Piece {
                lo: Rational::new(slot.into(), denom.into()),
                hi: Rational::new((slot + 1).into(), denom.into()),
                top: image_code.clone(),
                bottom: bottom.clone(),
                down,
            });
            slot += 1;
        }
    }
    Ok(ArcTable { arc: arc.clone(), level, kind: ArcKind::Cell, pieces })
}

/// Walks a piece's chain to the exact image of parameter `t`.
fn eval_piece(piece: &Piece, t: &Rational) -> DPoint {
    let width = piece.hi.clone() - piece.lo.clone();
    let s = (t - piece.lo.clone()) / width;
    let frac = if piece.down { s } else { rat_int(1) - s };
    if frac.is_zero() {
        return DPoint::Node(piece.top.clone());
    }
    let mut dist = frac * piece.chain_length();
    for d in piece.top.len() + 1..=piece.bottom.len() {
        let len = arc_len(d);
        if dist <= len {
            return DPoint::interior(piece.bottom.prefix(d), dist / len);
        }
        dist -= len;
    }
    unreachable!("piece offsets stay within the chain");
}

/// Image of the node at the lower end of `code`'s arc (root maps to root).
/// Unlike whole-arc tables this is defined all the way down to the deepest
/// cell mark: a node's image only needs branch data at its own level.
pub fn node_image(sys: &System, code: &Code) -> Result<DPoint, MapError> {
    if code.is_empty() {
        return Ok(DPoint::Node(Code::root()));
    }
    let m = code.len() as u32;
    let deepest = sys.codes.mark(sys.top_level());
    let level = sys
        .codes
        .level_of_depth(m)
        .ok_or(MapError::TooDeep { depth: m, trusted: deepest })?;
    if !sys.codes.node_exists(code) {
        return Err(MapError::NotAnArc(code.to_string()));
    }
    if m == sys.codes.mark(level) {
        let cell = sys.codes.cell_at(level, code).expect("cell node");
        let image = branch_image_cell(sys, level, cell);
        Ok(DPoint::Node(sys.codes.code(level - 1, image).clone()))
    } else {
        Ok(DPoint::Node(band_anchor(sys, level, code)))
    }
}

pub fn eval_f(sys: &System, p: &DPoint) -> Result<DPoint, MapError> {
    match p {
        DPoint::Node(c) => node_image(sys, c),
        DPoint::Interior { arc, t } => {
            let table = arc_table(sys, arc)?;
            let piece = table
                .pieces
                .iter()
                .find(|p| *t >= p.lo && *t <= p.hi)
                .expect("pieces cover the parameter interval");
            Ok(eval_piece(piece, t))
        }
        DPoint::End(th) => {
            if th.depth() == 0 {
                return Err(MapError::EndExhausted);
            }
            Ok(DPoint::End(thread_successor(&sys.seq, th)?))
        }
    }
}

/// What the image of a whole arc covers, in a form flood searches can
/// deduplicate: band arcs with one anchor share their entire image.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Expansion {
    /// Every arc strictly below `anchor` down to `max_depth`.
    Slice { anchor: Code, max_depth: u32 },
    /// Finite descending chains (top, bottom]: all prefixes of `bottom`
    /// longer than `top`.
    Chains { segments: Vec<(Code, Code)> },
}

pub fn arc_expansion(sys: &System, arc: &Code) -> Result<Expansion, MapError> {
    let level = check_arc(sys, arc)?;
    let m = arc.len() as u32;
    if m < sys.codes.mark(level) {
        return Ok(Expansion::Slice {
            anchor: band_anchor(sys, level, arc),
            max_depth: sys.codes.mark(level),
        });
    }
    let cell = sys.codes.cell_at(level, arc).expect("cell node");
    let image = branch_image_cell(sys, level, cell);
    let image_code = sys.codes.code(level - 1, image).clone();
    let mut segments = Vec::new();
    if level >= 2 {
        segments.push((image_code.prefix(sys.codes.mark(level - 2) as usize), image_code.clone()));
    }
    for &w in sys.seq.level(level).successors(cell) {
        segments.push((image_code.clone(), sys.codes.code(level, w).child(false)));
    }
    Ok(Expansion::Chains { segments })
}

#[derive(Debug)]
pub struct StretchStats {
    pub arcs: usize,
    pub pieces: usize,
    pub min: Rational,
    pub min_arc: Code,
    pub per_depth_min: Vec<(u32, Rational)>,
}

/// Minimal expansion factor over all pieces of all arcs down to
/// `max_depth`.
pub fn stretch_report(sys: &System, max_depth: u32) -> Result<StretchStats, MapError> {
    let skel = build_skeleton(&sys.codes, max_depth);
    let mut stats: Option<StretchStats> = None;
    let mut per_depth: Vec<(u32, Rational)> = Vec::new();
    let mut arcs = 0;
    let mut pieces = 0;
    for idx in skel.below(0, max_depth) {
        let arc = skel.code(idx);
        let table = arc_table(sys, arc)?;
        arcs += 1;
        for piece in &table.pieces {
            pieces += 1;
            let lambda = piece.lambda(arc.len() as u32);
            match per_depth.iter_mut().find(|(d, _)| *d == arc.len() as u32) {
                Some((_, m)) => {
                    if lambda < *m {
                        *m = lambda.clone();
                    }
                }
                None => per_depth.push((arc.len() as u32, lambda.clone())),
            }
            let better = match &stats {
                Some(s) => lambda < s.min,
                None => true,
            };
            if better {
                stats = Some(StretchStats {
                    arcs: 0,
                    pieces: 0,
                    min: lambda,
                    min_arc: arc.clone(),
                    per_depth_min: Vec::new(),
                });
            }
        }
    }
    let mut s = stats.expect("at least one arc below the root");
    s.arcs = arcs;
    s.pieces = pieces;
    per_depth.sort_by_key(|(d, _)| *d);
    s.per_depth_min = per_depth;
    Ok(s)
}
