//! Graph covers of Cantor systems.
//!
//! A presentation is a sequence of finite directed graphs (one per level,
//! level 0 being the singleton loop) together with cell maps going one level
//! down. The maps must be graph homomorphisms that are edge-surjective and
//! +directional: all edge-successors of a cell have the same image one level
//! down. Points of the system are threads: one cell per level, compatible
//! with the maps.

use crate::ratio::{format_ratio, Rational};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("level {level}: duplicate cell {name:?}")]
    DuplicateCell { level: usize, name: String },
    #[error("level {level}: edge endpoint {name:?} is not a cell")]
    UnknownEdgeCell { level: usize, name: String },
    #[error("level {level}: empty cell list")]
    EmptyLevel { level: usize },
    #[error("level {level}: duplicate edge ({src},{dst})")]
    DuplicateEdge { level: usize, src: String, dst: String },
    #[error("map into level {level}: expected {expected} entries, got {got}")]
    MapLength { level: usize, expected: usize, got: usize },
    #[error("map into level {level}: cell {cell:?} maps to unknown cell {target:?}")]
    MapTarget { level: usize, cell: String, target: String },
    #[error("presentation needs at least one level above the root")]
    NoLevels,
    #[error("level {level}: depth proxy must be positive, got {value}")]
    BadDepthProxy { level: usize, value: String },
    #[error("level 0 must be the singleton loop graph")]
    BadRootLevel,
}

#[derive(Debug, Clone)]
pub struct LevelGraph {
    cells: Vec<String>,
    index: HashMap<String, u32>,
    edges: Vec<(u32, u32)>,
    out: Vec<Vec<u32>>,
    incoming: Vec<u32>,
}

impl LevelGraph {
    pub fn new(
        level: usize,
        cells: Vec<String>,
        edge_names: &[(String, String)],
    ) -> Result<Self, StructureError> {
        if cells.is_empty() {
            return Err(StructureError::EmptyLevel { level });
        }
        let mut index = HashMap::new();
        for (i, name) in cells.iter().enumerate() {
            if index.insert(name.clone(), i as u32).is_some() {
                return Err(StructureError::DuplicateCell { level, name: name.clone() });
            }
        }
        let mut edges = Vec::with_capacity(edge_names.len());
        let mut seen = BTreeSet::new();
        for (s, d) in edge_names {
            let src = *index
                .get(s)
                .ok_or_else(|| StructureError::UnknownEdgeCell { level, name: s.clone() })?;
            let dst = *index
                .get(d)
                .ok_or_else(|| StructureError::UnknownEdgeCell { level, name: d.clone() })?;
            if !seen.insert((src, dst)) {
                return Err(StructureError::DuplicateEdge { level, src: s.clone(), dst: d.clone() });
            }
            edges.push((src, dst));
        }
        edges.sort_unstable();
        let mut out = vec![Vec::new(); cells.len()];
        let mut incoming = vec![0u32; cells.len()];
        for &(s, d) in &edges {
            out[s as usize].push(d);
            incoming[d as usize] += 1;
        }
        Ok(LevelGraph { cells, index, edges, out, incoming })
    }

    pub fn singleton_root() -> Self {
        LevelGraph::new(0, vec![String::new()], &[(String::new(), String::new())]).unwrap()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_name(&self, idx: u32) -> &str {
        &self.cells[idx as usize]
    }

    pub fn cell_index(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn successors(&self, cell: u32) -> &[u32] {
        &self.out[cell as usize]
    }

    pub fn has_edge(&self, src: u32, dst: u32) -> bool {
        self.edges.binary_search(&(src, dst)).is_ok()
    }

    fn in_degree(&self, cell: u32) -> u32 {
        self.incoming[cell as usize]
    }
}

/// The full presentation: levels 0..=D plus the cell maps between them.
/// `map_down[i]` sends level-(i+1) cells to level-i cells.
#[derive(Debug, Clone)]
pub struct CoverSequence {
    levels: Vec<LevelGraph>,
    map_down: Vec<Vec<u32>>,
    children: Vec<Vec<Vec<u32>>>,
    depth_proxy: Vec<Rational>,
}

impl CoverSequence {
    /// Wires a presentation from raw parts, checking only structure (names
    /// resolve, lengths line up). Property validation is a separate step so
    /// that defective presentations can be constructed and reported on.
    pub fn from_parts(
        levels: Vec<LevelGraph>,
        map_down: Vec<Vec<u32>>,
        depth_proxy: Vec<Rational>,
    ) -> Result<Self, StructureError> {
        if levels.len() < 2 {
            return Err(StructureError::NoLevels);
        }
        let root = &levels[0];
        if root.cell_count() != 1 || root.edges() != [(0, 0)] {
            return Err(StructureError::BadRootLevel);
        }
        if map_down.len() != levels.len() - 1 {
            return Err(StructureError::MapLength {
                level: 0,
                expected: levels.len() - 1,
                got: map_down.len(),
            });
        }
        for (i, m) in map_down.iter().enumerate() {
            let child_level = &levels[i + 1];
            if m.len() != child_level.cell_count() {
                return Err(StructureError::MapLength {
                    level: i,
                    expected: child_level.cell_count(),
                    got: m.len(),
                });
            }
            for (c, &t) in m.iter().enumerate() {
                if t as usize >= levels[i].cell_count() {
                    return Err(StructureError::MapTarget {
                        level: i,
                        cell: child_level.cell_name(c as u32).to_string(),
                        target: format!("#{t}"),
                    });
                }
            }
        }
        if depth_proxy.len() != levels.len() {
            return Err(StructureError::MapLength {
                level: 0,
                expected: levels.len(),
                got: depth_proxy.len(),
            });
        }
        use num_traits::Zero;
        for (i, p) in depth_proxy.iter().enumerate() {
            if *p <= Rational::zero() {
                return Err(StructureError::BadDepthProxy { level: i, value: format_ratio(p) });
            }
        }
        let mut children = Vec::with_capacity(map_down.len());
        for (i, m) in map_down.iter().enumerate() {
            let mut per_parent = vec![Vec::new(); levels[i].cell_count()];
            for (c, &t) in m.iter().enumerate() {
                per_parent[t as usize].push(c as u32);
            }
            children.push(per_parent);
        }
        Ok(CoverSequence { levels, map_down, children, depth_proxy })
    }

    /// Convenience for inputs that describe levels 1..=D only: the singleton
    /// root level and the constant map into it are filled in.
    pub fn from_user_levels(
        levels: Vec<LevelGraph>,
        map_down: Vec<Vec<u32>>,
        depth_proxy: Vec<Rational>,
    ) -> Result<Self, StructureError> {
        if levels.is_empty() {
            return Err(StructureError::NoLevels);
        }
        let mut all = vec![LevelGraph::singleton_root()];
        let root_map = vec![0u32; levels[0].cell_count()];
        all.extend(levels);
        let mut maps = vec![root_map];
        maps.extend(map_down);
        let mut proxies = vec![Rational::from_integer(1.into())];
        proxies.extend(depth_proxy);
        CoverSequence::from_parts(all, maps, proxies)
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &LevelGraph {
        &self.levels[i]
    }

    /// Level-i cell of a level-(i+1) cell.
    pub fn parent_cell(&self, child_level: usize, cell: u32) -> u32 {
        self.map_down[child_level - 1][cell as usize]
    }

    /// Level-(i+1) cells of a level-i cell, in input order.
    pub fn child_cells(&self, level: usize, cell: u32) -> &[u32] {
        &self.children[level][cell as usize]
    }

    pub fn depth_proxy(&self, level: usize) -> &Rational {
        &self.depth_proxy[level]
    }

    pub fn deeper(&self, extra_levels: Vec<LevelGraph>, extra_maps: Vec<Vec<u32>>, extra_proxy: Vec<Rational>) -> Result<Self, StructureError> {
        let mut levels = self.levels.clone();
        levels.extend(extra_levels);
        let mut maps = self.map_down.clone();
        maps.extend(extra_maps);
        let mut proxies = self.depth_proxy.clone();
        proxies.extend(extra_proxy);
        CoverSequence::from_parts(levels, maps, proxies)
    }

    // Fault-injection helpers for tests and the validation suite. They
    // deliberately bypass nothing: the result is re-wired through from_parts.

    pub fn with_edge_removed(&self, level: usize, src: &str, dst: &str) -> Result<Self, StructureError> {
        let mut levels = Vec::new();
        for (i, g) in self.levels.iter().enumerate() {
            if i != level {
                levels.push(g.clone());
                continue;
            }
            let edges: Vec<(String, String)> = g
                .edges()
                .iter()
                .filter(|&&(s, d)| !(g.cell_name(s) == src && g.cell_name(d) == dst))
                .map(|&(s, d)| (g.cell_name(s).to_string(), g.cell_name(d).to_string()))
                .collect();
            levels.push(LevelGraph::new(i, g.cells.clone(), &edges)?);
        }
        CoverSequence::from_parts(levels, self.map_down.clone(), self.depth_proxy.clone())
    }

    pub fn with_map_overridden(&self, child_level: usize, cell: &str, new_parent: &str) -> Result<Self, StructureError> {
        let c = self.levels[child_level]
            .cell_index(cell)
            .ok_or_else(|| StructureError::UnknownEdgeCell { level: child_level, name: cell.into() })?;
        let p = self.levels[child_level - 1]
            .cell_index(new_parent)
            .ok_or_else(|| StructureError::UnknownEdgeCell { level: child_level - 1, name: new_parent.into() })?;
        let mut maps = self.map_down.clone();
        maps[child_level - 1][c as usize] = p;
        CoverSequence::from_parts(self.levels.clone(), maps, self.depth_proxy.clone())
    }

    pub fn with_cells_removed(&self, level: usize, names: &[&str]) -> Result<Self, StructureError> {
        let drop: BTreeSet<&str> = names.iter().copied().collect();
        let mut levels = Vec::new();
        for (i, g) in self.levels.iter().enumerate() {
            if i != level {
                levels.push(g.clone());
                continue;
            }
            let cells: Vec<String> =
                g.cells.iter().filter(|n| !drop.contains(n.as_str())).cloned().collect();
            let edges: Vec<(String, String)> = g
                .edges()
                .iter()
                .filter(|&&(s, d)| {
                    !drop.contains(g.cell_name(s)) && !drop.contains(g.cell_name(d))
                })
                .map(|&(s, d)| (g.cell_name(s).to_string(), g.cell_name(d).to_string()))
                .collect();
            levels.push(LevelGraph::new(i, cells, &edges)?);
        }
        let mut maps = Vec::new();
        for (i, m) in self.map_down.iter().enumerate() {
            let child_old = &self.levels[i + 1];
            let child_new = &levels[i + 1];
            let parent_old = &self.levels[i];
            let parent_new = &levels[i];
            let mut remapped = Vec::with_capacity(child_new.cell_count());
            for c in 0..child_new.cell_count() as u32 {
                let name = child_new.cell_name(c);
                let old_idx = child_old.cell_index(name).unwrap();
                let old_parent = parent_old.cell_name(m[old_idx as usize]);
                let new_parent = parent_new.cell_index(old_parent).ok_or_else(|| {
                    StructureError::MapTarget {
                        level: i,
                        cell: name.to_string(),
                        target: old_parent.to_string(),
                    }
                })?;
                remapped.push(new_parent);
            }
            maps.push(remapped);
        }
        CoverSequence::from_parts(levels, maps, self.depth_proxy.clone())
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckLine {
    pub level: usize,
    pub property: String,
    pub pass: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub lines: Vec<CheckLine>,
}

impl ValidationReport {
    pub fn failing_line(&self, property: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| !l.pass && l.property == property)
    }
}

/// Checks every cover property and reports one line per (level, property),
/// with a named witness on failure. Structural defects are impossible here:
/// `CoverSequence` construction already rejected them.
pub fn validate_presentation(seq: &CoverSequence) -> ValidationReport {
    let mut lines = Vec::new();
    let mut ok_all = true;
    let mut push = |level: usize, property: &str, witness: Option<String>| {
        let pass = witness.is_none();
        lines.push(CheckLine { level, property: property.to_string(), pass, witness });
        pass
    };

    for i in 0..seq.depth() {
        let parent = seq.level(i);
        let child = seq.level(i + 1);
        let map = |c: u32| seq.parent_cell(i + 1, c);

        let mut w = None;
        for &(u, v) in child.edges() {
            if !parent.has_edge(map(u), map(v)) {
                w = Some(format!(
                    "edge ({},{}) at level {} maps to missing edge ({},{})",
                    child.cell_name(u),
                    child.cell_name(v),
                    i + 1,
                    parent.cell_name(map(u)),
                    parent.cell_name(map(v)),
                ));
                break;
            }
        }
        ok_all &= push(i, "homomorphism", w);

        let mut covered: BTreeSet<(u32, u32)> = BTreeSet::new();
        for &(u, v) in child.edges() {
            covered.insert((map(u), map(v)));
        }
        let mut w = None;
        for &(s, d) in parent.edges() {
            if !covered.contains(&(s, d)) {
                w = Some(format!(
                    "edge ({},{}) at level {} has no preimage edge",
                    parent.cell_name(s),
                    parent.cell_name(d),
                    i
                ));
                break;
            }
        }
        ok_all &= push(i, "edge-surjectivity", w);

        // +directionality of the map into level i, and equivalently the
        // refinement property of level i+1: every cell's edge-successors
        // land in one level-i cell.
        let mut dir_w = None;
        for u in 0..child.cell_count() as u32 {
            let succ = child.successors(u);
            if let Some((&first, rest)) = succ.split_first() {
                for &v in rest {
                    if map(v) != map(first) {
                        dir_w = Some(format!(
                            "cell {} at level {} has successors {} and {} mapping to {} and {}",
                            child.cell_name(u),
                            i + 1,
                            child.cell_name(first),
                            child.cell_name(v),
                            parent.cell_name(map(first)),
                            parent.cell_name(map(v)),
                        ));
                        break;
                    }
                }
            }
            if dir_w.is_some() {
                break;
            }
        }
        ok_all &= push(i, "+directionality", dir_w.clone());
        ok_all &= push(i + 1, "refinement", dir_w);
    }

    for i in 0..=seq.depth() {
        let g = seq.level(i);
        let mut w = None;
        for c in 0..g.cell_count() as u32 {
            if g.successors(c).is_empty() {
                w = Some(format!("cell {} at level {} has no outgoing edge", g.cell_name(c), i));
                break;
            }
            if g.in_degree(c) == 0 {
                w = Some(format!("cell {} at level {} has no incoming edge", g.cell_name(c), i));
                break;
            }
        }
        ok_all &= push(i, "surjectivity", w);
    }

    for i in 1..seq.depth() {
        let g = seq.level(i);
        let mut w = None;
        for c in 0..g.cell_count() as u32 {
            let n = seq.child_cells(i, c).len();
            if n < 4 {
                w = Some(format!(
                    "cell {} at level {} has {} children, need at least 4",
                    g.cell_name(c),
                    i,
                    n
                ));
                break;
            }
        }
        ok_all &= push(i, "children>=4", w);
    }

    {
        let w = if seq.level(1).cell_count() < 2 {
            Some("level 1 must split the root cell at least in two".to_string())
        } else {
            None
        };
        ok_all &= push(1, "root-split", w);
    }

    for i in 1..=seq.depth() {
        let w = if seq.depth_proxy(i) < seq.depth_proxy(i - 1) {
            None
        } else {
            Some(format!(
                "depth proxy {} at level {} not below {} at level {}",
                format_ratio(seq.depth_proxy(i)),
                i,
                format_ratio(seq.depth_proxy(i - 1)),
                i - 1
            ))
        };
        ok_all &= push(i, "mesh-decrease", w);
    }

    ValidationReport { pass: ok_all, lines }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThreadError {
    #[error("thread entry at level {level} is not a cell index")]
    BadCell { level: usize },
    #[error("thread entries at levels {level} and {} are map-incompatible", level + 1)]
    Incompatible { level: usize },
    #[error("thread deeper than the built presentation")]
    TooDeep,
    #[error("cell {cell} at level {level} has no outgoing edge")]
    NoSuccessor { level: usize, cell: String },
    #[error("successor ambiguous at level {level}: +directionality fails there")]
    Ambiguous { level: usize },
}

/// A point of the Cantor system known to finitely many levels: one cell per
/// level 0..=d, each the map image of the next.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Thread {
    cells: Vec<u32>,
}

impl Thread {
    pub fn root() -> Self {
        Thread { cells: vec![0] }
    }

    /// The unique thread through a given top cell.
    pub fn through(seq: &CoverSequence, level: usize, top_cell: u32) -> Result<Self, ThreadError> {
        if level > seq.depth() {
            return Err(ThreadError::TooDeep);
        }
        if top_cell as usize >= seq.level(level).cell_count() {
            return Err(ThreadError::BadCell { level });
        }
        let mut cells = vec![0u32; level + 1];
        cells[level] = top_cell;
        for i in (1..=level).rev() {
            cells[i - 1] = seq.parent_cell(i, cells[i]);
        }
        Ok(Thread { cells })
    }

    pub fn from_cells(seq: &CoverSequence, cells: Vec<u32>) -> Result<Self, ThreadError> {
        if cells.is_empty() || cells[0] != 0 {
            return Err(ThreadError::BadCell { level: 0 });
        }
        if cells.len() > seq.depth() + 1 {
            return Err(ThreadError::TooDeep);
        }
        for i in 1..cells.len() {
            if cells[i] as usize >= seq.level(i).cell_count() {
                return Err(ThreadError::BadCell { level: i });
            }
            if seq.parent_cell(i, cells[i]) != cells[i - 1] {
                return Err(ThreadError::Incompatible { level: i - 1 });
            }
        }
        Ok(Thread { cells })
    }

    pub fn depth(&self) -> usize {
        self.cells.len() - 1
    }

    pub fn cell(&self, level: usize) -> u32 {
        self.cells[level]
    }

    pub fn top(&self) -> u32 {
        *self.cells.last().unwrap()
    }

    pub fn describe(&self, seq: &CoverSequence) -> String {
        self.cells[1..]
            .iter()
            .enumerate()
            .map(|(i, &c)| seq.level(i + 1).cell_name(c).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Image of an endpoint under the shift: the unique thread one level shorter
/// whose entries are edge-successors of the input's entries. +directionality
/// is what makes "any out-neighbor, mapped down" independent of the choice.
pub fn thread_successor(seq: &CoverSequence, t: &Thread) -> Result<Thread, ThreadError> {
    let d = t.depth();
    if d == 0 {
        return Ok(Thread::root());
    }
    let mut cells = vec![0u32; d];
    for i in (1..d).rev() {
        let level_above = i + 1;
        let g = seq.level(level_above);
        let u = t.cell(level_above);
        let succ = g.successors(u);
        let first = *succ.first().ok_or_else(|| ThreadError::NoSuccessor {
            level: level_above,
            cell: g.cell_name(u).to_string(),
        })?;
        let img = seq.parent_cell(level_above, first);
        for &v in &succ[1..] {
            if seq.parent_cell(level_above, v) != img {
                return Err(ThreadError::Ambiguous { level: i });
            }
        }
        cells[i] = img;
    }
    Thread::from_cells(seq, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::rat;

    fn tiny() -> CoverSequence {
        // Four cells, full relation; enough structure for thread logic.
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut edges = Vec::new();
        for s in &names {
            for d in &names {
                edges.push((s.clone(), d.clone()));
            }
        }
        let g = LevelGraph::new(1, names, &edges).unwrap();
        CoverSequence::from_user_levels(vec![g], vec![], vec![rat(1, 2)]).unwrap()
    }

    #[test]
    fn singleton_root_level_is_enforced() {
        let bad = LevelGraph::new(0, vec!["x".into(), "y".into()], &[("x".into(), "x".into())]).unwrap();
        let err = CoverSequence::from_parts(
            vec![bad, LevelGraph::singleton_root()],
            vec![vec![0]],
            vec![rat(1, 1), rat(1, 2)],
        );
        assert!(matches!(err, Err(StructureError::BadRootLevel)));
    }

    #[test]
    fn structural_errors_are_not_property_failures() {
        let g = LevelGraph::new(1, vec!["a".into()], &[("a".into(), "b".into())]);
        assert!(matches!(g, Err(StructureError::UnknownEdgeCell { .. })));
    }

    #[test]
    fn full_relation_cover_validates() {
        let seq = tiny();
        let report = validate_presentation(&seq);
        assert!(report.pass, "{:?}", report.lines.iter().find(|l| !l.pass));
    }

    #[test]
    fn validation_flags_starved_cell() {
        let seq = tiny();
        // Drop every edge out of "a": surjectivity at level 1 must fail.
        let mut broken = seq;
        for target in ["a", "b", "c", "d"] {
            broken = broken.with_edge_removed(1, "a", target).unwrap();
        }
        let report = validate_presentation(&broken);
        assert!(!report.pass);
        let line = report.failing_line("surjectivity").unwrap();
        assert_eq!(line.level, 1);
        assert!(line.witness.as_ref().unwrap().contains("a"));
    }

    #[test]
    fn thread_through_top_cell_is_unique_and_compatible() {
        let seq = tiny();
        let t = Thread::through(&seq, 1, 2).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.cell(0), 0);
        assert_eq!(t.cell(1), 2);
        assert!(Thread::from_cells(&seq, vec![0, 2]).is_ok());
    }

    #[test]
    fn root_thread_is_a_fixed_point() {
        let seq = tiny();
        let t = Thread::root();
        assert_eq!(thread_successor(&seq, &t).unwrap(), t);
    }

    #[test]
    fn successor_drops_one_level() {
        let seq = tiny();
        let t = Thread::through(&seq, 1, 3).unwrap();
        let s = thread_successor(&seq, &t).unwrap();
        assert_eq!(s.depth(), 0);
    }
}
