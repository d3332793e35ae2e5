//! The tree the system lives on, and its geometry.
//!
//! Every cell of the presentation gets a binary address code; level-i codes
//! all have length n_i = n_{i-1} + |level i|. The tree spanned by all code
//! prefixes is the skeleton. An arc at tree depth d has length 4^(-d) and
//! the metric is taxicab along the unique path, so all distances are exact
//! rationals.

use crate::code::Code;
use crate::cover::{CoverSequence, Thread};
use crate::ratio::{arc_len, tail_below, Rational};
use num_traits::{Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// Binary addresses for every cell, level by level.
#[derive(Debug, Clone)]
pub struct CodeTable {
    levels: Vec<Vec<Code>>,
    index: Vec<BTreeMap<Code, u32>>,
    marks: Vec<u32>,
}

/// Children of one parent are told apart by their index written in binary
/// (as many bits as the widest sibling index needs), then padded with zeros
/// to the level width. With two or more children both first bits occur, so
/// every cell node branches immediately.
pub fn assign_codes(seq: &CoverSequence) -> CodeTable {
    let mut levels: Vec<Vec<Code>> = vec![vec![Code::root()]];
    let mut marks = vec![0u32];
    for i in 1..=seq.depth() {
        let width = seq.level(i).cell_count();
        marks.push(marks[i - 1] + width as u32);
        let mut codes = vec![Code::root(); width];
        for parent in 0..seq.level(i - 1).cell_count() as u32 {
            let kids = seq.child_cells(i - 1, parent);
            let bits = if kids.len() <= 1 { 0 } else { usize::BITS - (kids.len() - 1).leading_zeros() };
            for (j, &kid) in kids.iter().enumerate() {
                let mut c = levels[i - 1][parent as usize].clone();
                for b in (0..bits).rev() {
                    c.push((j >> b) & 1 == 1);
                }
                for _ in bits as usize..width {
                    c.push(false);
                }
                codes[kid as usize] = c;
            }
        }
        levels.push(codes);
    }
    let index = levels
        .iter()
        .map(|codes| {
            codes.iter().enumerate().map(|(cell, c)| (c.clone(), cell as u32)).collect()
        })
        .collect();
    CodeTable { levels, index, marks }
}

impl CodeTable {
    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// n_i: the tree depth at which level-i cell nodes sit.
    pub fn mark(&self, level: usize) -> u32 {
        self.marks[level]
    }

    pub fn code(&self, level: usize, cell: u32) -> &Code {
        &self.levels[level][cell as usize]
    }

    pub fn cell_at(&self, level: usize, code: &Code) -> Option<u32> {
        self.index[level].get(code).copied()
    }

    /// The level whose band of depths contains `depth`:
    /// mark(i-1) < depth <= mark(i). None beyond the built depth.
    pub fn level_of_depth(&self, depth: u32) -> Option<usize> {
        if depth == 0 {
            return Some(0);
        }
        (1..self.levels.len()).find(|&i| self.marks[i - 1] < depth && depth <= self.marks[i])
    }

    /// The level-`level` cell whose code prefixes `deep`.
    pub fn ancestor_cell(&self, level: usize, deep: &Code) -> Option<u32> {
        if deep.len() < self.marks[level] as usize {
            return None;
        }
        self.cell_at(level, &deep.prefix(self.marks[level] as usize))
    }

    fn level_has_descendant(&self, level: usize, code: &Code) -> bool {
        let (lo, hi) = code.subtree_range();
        match hi {
            Some(hi) => self.index[level].range(lo..hi).next().is_some(),
            None => self.index[level].range(lo..).next().is_some(),
        }
    }

    /// Whether the binary word is a prefix of some cell code, i.e. a node of
    /// the skeleton.
    pub fn node_exists(&self, code: &Code) -> bool {
        let d = code.len() as u32;
        if d == 0 {
            return true;
        }
        match self.level_of_depth(d) {
            Some(level) => self.level_has_descendant(level, code),
            None => false,
        }
    }

    /// Which of the two possible children below a skeleton node exist.
    pub fn node_children(&self, code: &Code) -> (bool, bool) {
        let d = code.len() as u32 + 1;
        match self.level_of_depth(d) {
            Some(level) => (
                self.level_has_descendant(level, &code.child(false)),
                self.level_has_descendant(level, &code.child(true)),
            ),
            None => (false, false),
        }
    }
}

/// A point of the tree. `t` on an arc is measured from the upper (parent)
/// end; ends are known only as threads and sit below every finite node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DPoint {
    Node(Code),
    Interior { arc: Code, t: Rational },
    End(Thread),
}

impl DPoint {
    /// Folds boundary offsets into nodes; panics on out-of-range t.
    pub fn interior(arc: Code, t: Rational) -> DPoint {
        assert!(!arc.is_empty(), "the root is a node, not an arc point");
        assert!(t >= Rational::zero() && t <= crate::ratio::rat_int(1), "offset out of range");
        if t.is_zero() {
            DPoint::Node(arc.parent().unwrap())
        } else if t == crate::ratio::rat_int(1) {
            DPoint::Node(arc)
        } else {
            DPoint::Interior { arc, t }
        }
    }
}

/// (arc, offset-from-parent] form used by the metric; the root is (ε, 1).
fn place(p: &DPoint) -> (Code, Rational) {
    match p {
        DPoint::Node(c) => (c.clone(), crate::ratio::rat_int(1)),
        DPoint::Interior { arc, t } => (arc.clone(), t.clone()),
        DPoint::End(_) => unreachable!("ends have no finite place"),
    }
}

/// Sum of arc lengths 4^(-d) for depths from..=to; zero when from > to.
pub fn arc_span(from: u32, to: u32) -> Rational {
    if from > to {
        return Rational::zero();
    }
    (arc_len(from as usize - 1) - arc_len(to as usize)) / crate::ratio::rat_int(3)
}

fn dist_placed(a: &Code, s: &Rational, b: &Code, t: &Rational) -> Rational {
    if a == b {
        return (s - t).abs() * arc_len(a.len());
    }
    let m = a.meet(b);
    let up = |arc: &Code, off: &Rational| -> Rational {
        // Climb from the point to the meet node.
        off * arc_len(arc.len()) + arc_span(m.len() as u32 + 1, arc.len() as u32 - 1)
    };
    let down_into = |arc: &Code, off: &Rational| -> Rational {
        // Descend from the meet node into the arc holding the point.
        arc_span(m.len() as u32 + 1, arc.len() as u32 - 1) + off * arc_len(arc.len())
    };
    if m == *a {
        // a's point is an ancestor-side point: walk down to b.
        (crate::ratio::rat_int(1) - s) * arc_len(a.len()) + down_into(b, t)
    } else if m == *b {
        (crate::ratio::rat_int(1) - t) * arc_len(b.len()) + down_into(a, s)
    } else {
        up(a, s) + up(b, t)
    }
}

/// Exact distance between two finite points.
pub fn distance(p: &DPoint, q: &DPoint) -> Rational {
    let (a, s) = place(p);
    let (b, t) = place(q);
    dist_placed(&a, &s, &b, &t)
}

/// The unique geodesic between two nodes as an ordered arc list.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePath {
    /// Arcs from `u` up to the meet, then down to `v`; consecutive arcs
    /// share exactly one node.
    pub arcs: Vec<Code>,
    pub total_len: Rational,
}

pub fn path_between(u: &Code, v: &Code) -> TreePath {
    let m = u.meet(v);
    let mut arcs = Vec::new();
    let mut total = Rational::zero();
    let mut up = u.clone();
    while up.len() > m.len() {
        total += arc_len(up.len());
        arcs.push(up.clone());
        up = up.parent().unwrap();
    }
    for d in m.len() + 1..=v.len() {
        total += arc_len(d);
        arcs.push(v.prefix(d));
    }
    TreePath { arcs, total_len: total }
}

/// Distance bracket [lo, hi] between points that may be ends; an end known
/// to depth N lies within tail_below(N) below its deepest node.
pub fn distance_interval(codes: &CodeTable, p: &DPoint, q: &DPoint) -> (Rational, Rational) {
    let resolve = |x: &DPoint| -> (DPoint, Rational) {
        match x {
            DPoint::End(th) => {
                let code = codes.code(th.depth(), th.top()).clone();
                let depth = code.len();
                (DPoint::Node(code), tail_below(depth))
            }
            other => (other.clone(), Rational::zero()),
        }
    };
    let (p0, ep) = resolve(p);
    let (q0, eq) = resolve(q);
    let d = distance(&p0, &q0);
    let slack = ep + eq;
    let lo = if d > slack { d.clone() - slack.clone() } else { Rational::zero() };
    (lo, d + slack)
}

/// Exact supremum of pairwise distances inside the subtree hanging below a
/// depth-N node: two rays descending through different children.
pub fn sharp_subtree_diameter(depth: u32) -> Rational {
    crate::ratio::rat_int(2) * tail_below(depth as usize)
}

/// The weaker bound 4^(-N), kept as an independent cross-check.
pub fn coarse_subtree_diameter(depth: u32) -> Rational {
    arc_len(depth as usize)
}

/// The finite tree of all code prefixes down to a depth cut, with nodes
/// interned in prefix-first order (so parents precede children).
#[derive(Debug)]
pub struct Skeleton {
    nodes: Vec<Code>,
    parent: Vec<u32>,
    children: Vec<[Option<u32>; 2]>,
    cell_mark: Vec<Option<(u8, u32)>>,
    cut: u32,
}

pub fn build_skeleton(codes: &CodeTable, cut: u32) -> Skeleton {
    let mut set: BTreeSet<Code> = BTreeSet::new();
    set.insert(Code::root());
    for level in 1..=codes.top_level() {
        let lo = codes.mark(level - 1) + 1;
        let hi = codes.mark(level).min(cut);
        for cell in 0..codes.index[level].len() as u32 {
            let c = codes.code(level, cell);
            for d in lo..=hi {
                set.insert(c.prefix(d as usize));
            }
        }
        if hi == cut {
            break;
        }
    }
    let nodes: Vec<Code> = set.into_iter().collect();
    let node_of: BTreeMap<&Code, u32> =
        nodes.iter().enumerate().map(|(i, c)| (c, i as u32)).collect();
    let mut parent = vec![0u32; nodes.len()];
    let mut children = vec![[None, None]; nodes.len()];
    for (i, c) in nodes.iter().enumerate().skip(1) {
        let p = node_of[&c.parent().unwrap()];
        parent[i] = p;
        children[p as usize][c.bit(c.len() - 1) as usize] = Some(i as u32);
    }
    let mut cell_mark = vec![None; nodes.len()];
    for level in 1..=codes.top_level() {
        if codes.mark(level) > cut {
            break;
        }
        for (c, &cell) in &codes.index[level] {
            cell_mark[node_of[c] as usize] = Some((level as u8, cell));
        }
    }
    Skeleton { nodes, parent, children, cell_mark, cut }
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cut(&self) -> u32 {
        self.cut
    }

    pub fn code(&self, i: u32) -> &Code {
        &self.nodes[i as usize]
    }

    pub fn depth(&self, i: u32) -> u32 {
        self.nodes[i as usize].len() as u32
    }

    pub fn parent(&self, i: u32) -> Option<u32> {
        (i != 0).then(|| self.parent[i as usize])
    }

    pub fn children(&self, i: u32) -> [Option<u32>; 2] {
        self.children[i as usize]
    }

    pub fn cell_mark(&self, i: u32) -> Option<(u8, u32)> {
        self.cell_mark[i as usize]
    }

    pub fn node(&self, code: &Code) -> Option<u32> {
        self.nodes.binary_search(code).ok().map(|i| i as u32)
    }

    /// Node indices (= arcs, for indices >= 1) strictly below `top`, down to
    /// `max_depth`, in prefix-first order.
    pub fn below(&self, top: u32, max_depth: u32) -> Vec<u32> {
        let top_code = self.code(top);
        let (lo, hi) = top_code.subtree_range();
        let start = match self.nodes.binary_search(&lo) {
            Ok(i) | Err(i) => i,
        };
        let mut out = Vec::new();
        for i in start..self.nodes.len() {
            let c = &self.nodes[i];
            if let Some(h) = &hi {
                if c >= h {
                    break;
                }
            }
            let d = c.len() as u32;
            if d > self.depth(top) && d <= max_depth {
                out.push(i as u32);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;
    use crate::subshift::{build_presentation, Sft};

    fn shift_codes(depth: usize) -> CodeTable {
        let sft = Sft::full_shift(2).unwrap();
        let p = build_presentation(&sft, depth, 8).unwrap();
        assign_codes(&p.seq)
    }

    #[test]
    fn codes_are_index_bits_padded_to_level_width() {
        let codes = shift_codes(1);
        assert_eq!(codes.mark(1), 8);
        assert_eq!(codes.code(1, 0).to_string(), "00000000");
        assert_eq!(codes.code(1, 5).to_string(), "10100000");
        assert_eq!(codes.code(1, 7).to_string(), "11100000");
    }

    #[test]
    fn geodesic_paths_list_arcs_in_travel_order() {
        let c = |s: &str| Code::parse(s).unwrap();
        let p = path_between(&c(""), &c("01"));
        assert_eq!(p.arcs, vec![c("0"), c("01")]);
        assert_eq!(p.total_len, rat(5, 16));
        let q = path_between(&c("00"), &c("01"));
        assert_eq!(q.arcs, vec![c("00"), c("01")]);
        assert_eq!(q.total_len, rat(1, 8));
        let same = path_between(&c("10"), &c("10"));
        assert!(same.arcs.is_empty());
        assert_eq!(same.total_len, rat(0, 1));
        // Path length and the metric agree on node pairs.
        let d = distance(&DPoint::Node(c("00")), &DPoint::Node(c("01")));
        assert_eq!(d, q.total_len);
    }

    #[test]
    fn marks_accumulate_level_sizes() {
        let codes = shift_codes(2);
        assert_eq!(codes.mark(2), 72);
        assert_eq!(codes.level_of_depth(1), Some(1));
        assert_eq!(codes.level_of_depth(8), Some(1));
        assert_eq!(codes.level_of_depth(9), Some(2));
        assert_eq!(codes.level_of_depth(72), Some(2));
        assert_eq!(codes.level_of_depth(73), None);
    }

    #[test]
    fn code_padding_makes_single_child_chains() {
        let codes = shift_codes(1);
        // 000 splits no further inside the level-1 band: only 0000 follows.
        let n = Code::parse("000").unwrap();
        assert_eq!(codes.node_children(&n), (true, false));
        let top = Code::parse("00").unwrap();
        assert_eq!(codes.node_children(&top), (true, true));
        assert!(codes.node_exists(&Code::parse("0000000").unwrap()));
        assert!(!codes.node_exists(&Code::parse("0001").unwrap()));
    }

    #[test]
    fn ancestor_lookup_truncates_to_the_level_mark() {
        let codes = shift_codes(2);
        let deep = codes.code(2, 9).clone();
        let up = codes.ancestor_cell(1, &deep).unwrap();
        assert!(codes.code(1, up).is_prefix_of(&deep));
    }

    #[test]
    fn root_arm_distances() {
        let c = DPoint::Node(Code::root());
        let c0 = DPoint::Node(Code::parse("0").unwrap());
        let c1 = DPoint::Node(Code::parse("1").unwrap());
        let c01 = DPoint::Node(Code::parse("01").unwrap());
        assert_eq!(distance(&c, &c0), rat(1, 4));
        assert_eq!(distance(&c0, &c1), rat(1, 2));
        assert_eq!(distance(&c, &c01), rat(5, 16));
        assert_eq!(distance(&c01, &c), rat(5, 16));
    }

    #[test]
    fn interior_points_measure_from_the_upper_end() {
        let p = DPoint::interior(Code::parse("0").unwrap(), rat(1, 2));
        let q = DPoint::interior(Code::parse("1").unwrap(), rat(1, 2));
        assert_eq!(distance(&p, &q), rat(1, 4));
        let r = DPoint::Node(Code::root());
        assert_eq!(distance(&p, &r), rat(1, 8));
        let same = DPoint::interior(Code::parse("0").unwrap(), rat(3, 4));
        assert_eq!(distance(&p, &same), rat(1, 16));
    }

    #[test]
    fn boundary_offsets_collapse_to_nodes() {
        let p = DPoint::interior(Code::parse("01").unwrap(), rat(0, 1));
        assert_eq!(p, DPoint::Node(Code::parse("0").unwrap()));
        let q = DPoint::interior(Code::parse("01").unwrap(), rat(1, 1));
        assert_eq!(q, DPoint::Node(Code::parse("01").unwrap()));
    }

    #[test]
    fn subtree_diameter_bounds_nest() {
        for d in 0..6 {
            assert!(sharp_subtree_diameter(d) < coarse_subtree_diameter(d));
        }
        // Deepest separation under a node: out both children and down.
        let a = DPoint::Node(Code::parse("000").unwrap());
        let b = DPoint::Node(Code::parse("001").unwrap());
        let bound = sharp_subtree_diameter(2);
        let d = distance(&a, &b);
        assert!(d < bound);
        assert_eq!(d, rat(2, 64));
    }

    #[test]
    fn skeleton_of_depth_one_build_has_55_nodes() {
        let codes = shift_codes(1);
        let skel = build_skeleton(&codes, 8);
        assert_eq!(skel.len(), 55);
        // Query helpers agree with the interning.
        let idx = skel.node(&Code::parse("101").unwrap()).unwrap();
        assert_eq!(skel.depth(idx), 3);
        assert_eq!(skel.cell_mark(idx), None);
        let cell = skel.node(&Code::parse("10100000").unwrap()).unwrap();
        assert_eq!(skel.cell_mark(cell), Some((1, 5)));
    }

    #[test]
    fn below_lists_the_band_under_a_node() {
        let codes = shift_codes(2);
        let skel = build_skeleton(&codes, 72);
        let all = skel.below(0, 8);
        assert_eq!(all.len(), 54);
        let all72 = skel.below(0, 72);
        assert_eq!(all72.len(), 4070);
        let under = skel.below(skel.node(&Code::parse("0").unwrap()).unwrap(), 8);
        assert_eq!(under.len(), 26);
    }

    #[test]
    fn end_distance_brackets_by_tail() {
        let sft = Sft::full_shift(2).unwrap();
        let p = build_presentation(&sft, 1, 8).unwrap();
        let codes = assign_codes(&p.seq);
        let th = crate::cover::Thread::through(&p.seq, 1, 3).unwrap();
        let e = DPoint::End(th);
        let root = DPoint::Node(Code::root());
        let (lo, hi) = distance_interval(&codes, &e, &root);
        let node_d = distance(&DPoint::Node(codes.code(1, 3).clone()), &root);
        assert_eq!(hi.clone() - lo.clone(), rat(2, 1) * tail_below(8));
        assert!(lo <= node_d && node_d <= hi);
    }
}
