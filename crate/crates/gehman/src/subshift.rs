//! One-sided subshifts of finite type and their graph-cover presentations.
//!
//! Cells of a level are viable cylinders of a common word length. Each level
//! first appends one symbol to the previous length (so a cell determines its
//! image one level down) and then extends uniformly until every cell of the
//! intermediate length has at least four viable continuations, which makes
//! every built cell split at least four ways at the next level.

use crate::cover::{CoverSequence, LevelGraph, StructureError};
use crate::ratio::Rational;
use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const MAX_SYMBOLS: u8 = 8;
const MAX_FORBIDDEN_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum SubshiftError {
    #[error("alphabet size {0} out of range 2..={MAX_SYMBOLS}")]
    BadAlphabet(u8),
    #[error("forbidden word {word:?} uses symbol {symbol:?} outside the alphabet")]
    BadSymbol { word: String, symbol: char },
    #[error("forbidden word may not be empty")]
    EmptyForbidden,
    #[error("forbidden word {word:?} longer than supported maximum {MAX_FORBIDDEN_LEN}")]
    ForbiddenTooLong { word: String },
    #[error("the subshift is empty")]
    Empty,
    #[error("the subshift is not surjective: word {state:?} has no viable left extension")]
    NotSurjective { state: String },
    #[error("the subshift has an isolated point: continuation is forced from word {state:?}")]
    NotPerfect { state: String },
    #[error("cell {cell:?} needs more than {bound} extra symbols to split four ways; raise the extension bound")]
    ExtensionBound { cell: String, bound: usize },
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// A one-sided SFT over symbols `0..symbols`, given by forbidden words.
/// An empty forbidden list is the full shift.
#[derive(Debug, Clone)]
pub struct Sft {
    symbols: u8,
    forbidden: Vec<Vec<u8>>,
    memory: usize,
    live: BTreeSet<Vec<u8>>,
}

fn parse_word(symbols: u8, word: &str) -> Result<Vec<u8>, SubshiftError> {
    word.chars()
        .map(|c| match c.to_digit(10) {
            Some(d) if (d as u8) < symbols => Ok(d as u8),
            _ => Err(SubshiftError::BadSymbol { word: word.to_string(), symbol: c }),
        })
        .collect()
}

pub fn format_word(w: &[u8]) -> String {
    w.iter().map(|s| char::from(b'0' + s)).collect()
}

impl Sft {
    pub fn new(symbols: u8, forbidden_words: &[String]) -> Result<Self, SubshiftError> {
        if !(2..=MAX_SYMBOLS).contains(&symbols) {
            return Err(SubshiftError::BadAlphabet(symbols));
        }
        let mut forbidden = Vec::new();
        for w in forbidden_words {
            if w.is_empty() {
                return Err(SubshiftError::EmptyForbidden);
            }
            if w.len() > MAX_FORBIDDEN_LEN {
                return Err(SubshiftError::ForbiddenTooLong { word: w.clone() });
            }
            forbidden.push(parse_word(symbols, w)?);
        }
        let memory = forbidden.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let mut sft = Sft { symbols, forbidden, memory, live: BTreeSet::new() };
        sft.live = sft.compute_live_states();
        if sft.live.is_empty() {
            return Err(SubshiftError::Empty);
        }
        Ok(sft)
    }

    pub fn full_shift(symbols: u8) -> Result<Self, SubshiftError> {
        Sft::new(symbols, &[])
    }

    pub fn symbols(&self) -> u8 {
        self.symbols
    }

    fn admissible(&self, w: &[u8]) -> bool {
        self.forbidden.iter().all(|f| f.len() > w.len() || !w.windows(f.len()).any(|win| win == f))
    }

    /// Assuming all of `w` but its last symbol is admissible, checks the
    /// factors that end at the last symbol.
    fn last_symbol_ok(&self, w: &[u8]) -> bool {
        self.forbidden
            .iter()
            .all(|f| f.len() > w.len() || w[w.len() - f.len()..] != f[..])
    }

    /// Automaton states are admissible words of length memory-1; a state is
    /// live when some infinite admissible continuation exists.
    fn compute_live_states(&self) -> BTreeSet<Vec<u8>> {
        let mut states = BTreeSet::new();
        let mut stack = vec![Vec::new()];
        while let Some(w) = stack.pop() {
            if w.len() == self.memory - 1 {
                states.insert(w);
                continue;
            }
            for a in 0..self.symbols {
                let mut next = w.clone();
                next.push(a);
                if self.last_symbol_ok(&next) {
                    stack.push(next);
                }
            }
        }
        let mut live = states;
        loop {
            let keep: BTreeSet<Vec<u8>> = live
                .iter()
                .filter(|s| self.live_transitions(s, &live).next().is_some())
                .cloned()
                .collect();
            if keep.len() == live.len() {
                return keep;
            }
            live = keep;
        }
    }

    fn live_transitions<'a>(
        &'a self,
        state: &'a [u8],
        live: &'a BTreeSet<Vec<u8>>,
    ) -> impl Iterator<Item = (u8, Vec<u8>)> + 'a {
        (0..self.symbols).filter_map(move |a| {
            let mut w = state.to_vec();
            w.push(a);
            if !self.last_symbol_ok(&w) {
                return None;
            }
            let target = w[1..].to_vec();
            live.contains(&target).then_some((a, target))
        })
    }

    fn state_of<'a>(&self, w: &'a [u8]) -> &'a [u8] {
        &w[w.len() - (self.memory - 1)..]
    }

    /// A word is viable when it starts some point of the subshift.
    pub fn is_viable(&self, w: &[u8]) -> bool {
        self.admissible(w) && self.extendable(w)
    }

    fn extendable(&self, w: &[u8]) -> bool {
        if w.len() >= self.memory - 1 {
            return self.live.contains(self.state_of(w));
        }
        (0..self.symbols).any(|a| {
            let mut next = w.to_vec();
            next.push(a);
            self.last_symbol_ok(&next) && self.extendable(&next)
        })
    }

    /// All viable words of a given length, lexicographically.
    pub fn viable_words(&self, len: usize) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let mut w = Vec::with_capacity(len);
        self.collect_viable(&mut w, len, &mut out);
        out
    }

    fn collect_viable(&self, w: &mut Vec<u8>, len: usize, out: &mut Vec<Vec<u8>>) {
        if w.len() == len {
            out.push(w.clone());
            return;
        }
        for a in 0..self.symbols {
            w.push(a);
            if self.last_symbol_ok(w) && self.extendable(w) {
                self.collect_viable(w, len, out);
            }
            w.pop();
        }
    }

    fn count_extensions(&self, w: &mut Vec<u8>, extra: usize, cap: usize) -> usize {
        if extra == 0 {
            return 1;
        }
        let mut total = 0;
        for a in 0..self.symbols {
            w.push(a);
            if self.last_symbol_ok(w) && self.extendable(w) {
                total += self.count_extensions(w, extra - 1, cap - total);
            }
            w.pop();
            if total >= cap {
                return total;
            }
        }
        total
    }

    /// Minimal number of extra symbols after which `w` has at least `need`
    /// viable continuations.
    fn min_split_extension(&self, w: &[u8], need: usize, bound: usize) -> Option<usize> {
        let mut buf = w.to_vec();
        (1..=bound).find(|&e| self.count_extensions(&mut buf, e, need) >= need)
    }

    /// Rejects subshifts on which the construction is undefined: the shift
    /// map must be onto and the space must have no isolated point.
    pub fn check_system(&self) -> Result<(), SubshiftError> {
        for s in &self.live {
            let has_left = (0..self.symbols).any(|a| {
                let mut w = vec![a];
                w.extend_from_slice(s);
                self.admissible(&w) && self.extendable(&w)
            });
            if !has_left {
                return Err(SubshiftError::NotSurjective { state: format_word(s) });
            }
        }
        // An isolated point exists exactly when the one-choice part of the
        // live automaton contains a cycle.
        let mut status: BTreeMap<&[u8], u8> = BTreeMap::new();
        for s in &self.live {
            if status.contains_key(s.as_slice()) {
                continue;
            }
            let mut path: Vec<&[u8]> = Vec::new();
            let mut cur: &[u8] = s;
            loop {
                match status.get(cur) {
                    Some(2) => break,
                    Some(1) => {
                        return Err(SubshiftError::NotPerfect { state: format_word(cur) });
                    }
                    _ => {}
                }
                let mut trans = self.live_transitions(cur, &self.live);
                let first = trans.next();
                let forced = first.is_some() && trans.next().is_none();
                if !forced {
                    break;
                }
                status.insert(cur, 1);
                path.push(cur);
                let (_, target) = first.unwrap();
                // Cycle states have length memory-1, so the target is
                // already interned in live; borrow it from there.
                cur = self.live.get(&target).unwrap();
            }
            for p in path {
                status.insert(p, 2);
            }
        }
        Ok(())
    }
}

/// A built presentation, with the cylinder length of each level kept for
/// reporting.
pub struct Presentation {
    pub seq: CoverSequence,
    pub cylinder_lengths: Vec<usize>,
}

pub fn build_presentation(
    sft: &Sft,
    depth: usize,
    extension_bound: usize,
) -> Result<Presentation, SubshiftError> {
    sft.check_system()?;
    let mut lengths = vec![0usize];
    let mut levels = Vec::new();
    let mut maps = Vec::new();
    let mut proxies = Vec::new();
    let mut prev_words: Vec<Vec<u8>> = Vec::new();
    for i in 1..=depth {
        let step_len = lengths[i - 1] + 1;
        let step_words = sft.viable_words(step_len);
        let mut extension = 0;
        for w in &step_words {
            let e = sft.min_split_extension(w, 4, extension_bound).ok_or_else(|| {
                SubshiftError::ExtensionBound { cell: format_word(w), bound: extension_bound }
            })?;
            extension = extension.max(e);
        }
        let len = step_len + extension;
        let words = sft.viable_words(len);
        let names: Vec<String> = words.iter().map(|w| format_word(w)).collect();
        let mut edges = Vec::new();
        for u in &words {
            for a in 0..sft.symbols {
                let mut v = u[1..].to_vec();
                v.push(a);
                let mut full = u.clone();
                full.push(a);
                if sft.last_symbol_ok(&full) && sft.extendable(&full) {
                    edges.push((format_word(u), format_word(&v)));
                }
            }
        }
        levels.push(LevelGraph::new(i, names, &edges)?);
        if i > 1 {
            let parent_len = lengths[i - 1];
            let parent_index: BTreeMap<&[u8], u32> = prev_words
                .iter()
                .enumerate()
                .map(|(idx, w)| (w.as_slice(), idx as u32))
                .collect();
            let map: Vec<u32> =
                words.iter().map(|w| parent_index[&w[..parent_len]]).collect();
            maps.push(map);
        }
        proxies.push(Rational::new(BigInt::from(1), BigInt::from(1) << len));
        lengths.push(len);
        prev_words = words;
    }
    let seq = CoverSequence::from_user_levels(levels, maps, proxies)?;
    Ok(Presentation { seq, cylinder_lengths: lengths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::validate_presentation;

    #[test]
    fn full_shift_levels_are_three_symbols_apart() {
        let sft = Sft::full_shift(2).unwrap();
        let p = build_presentation(&sft, 2, 8).unwrap();
        assert_eq!(p.cylinder_lengths, vec![0, 3, 6]);
        assert_eq!(p.seq.level(1).cell_count(), 8);
        assert_eq!(p.seq.level(2).cell_count(), 64);
        for c in 0..8 {
            assert_eq!(p.seq.level(1).successors(c).len(), 2);
            assert_eq!(p.seq.child_cells(1, c).len(), 8);
        }
        assert!(validate_presentation(&p.seq).pass);
    }

    #[test]
    fn full_shift_edges_are_overlaps() {
        let sft = Sft::full_shift(2).unwrap();
        let p = build_presentation(&sft, 1, 8).unwrap();
        let g = p.seq.level(1);
        let u = g.cell_index("011").unwrap();
        let succ: Vec<&str> = g.successors(u).iter().map(|&v| g.cell_name(v)).collect();
        assert_eq!(succ, vec!["110", "111"]);
    }

    #[test]
    fn no_square_shift_needs_five_symbols_at_level_one() {
        let sft = Sft::new(2, &["11".to_string()]).unwrap();
        let p = build_presentation(&sft, 2, 8).unwrap();
        assert_eq!(p.cylinder_lengths[1], 5);
        // Words of length 5 avoiding 11: Fibonacci count.
        assert_eq!(p.seq.level(1).cell_count(), 13);
        let report = validate_presentation(&p.seq);
        assert!(report.pass, "{:?}", report.lines.iter().find(|l| !l.pass));
    }

    #[test]
    fn forced_ray_is_rejected() {
        let sft = Sft::new(2, &["1".to_string()]).unwrap();
        assert!(matches!(sft.check_system(), Err(SubshiftError::NotPerfect { .. })));
    }

    #[test]
    fn two_point_system_is_rejected() {
        let sft = Sft::new(2, &["01".to_string(), "10".to_string()]).unwrap();
        assert!(matches!(sft.check_system(), Err(SubshiftError::NotPerfect { .. })));
    }

    #[test]
    fn dead_start_symbol_breaks_surjectivity() {
        let sft =
            Sft::new(3, &["00".to_string(), "10".to_string(), "20".to_string()]).unwrap();
        let err = sft.check_system().unwrap_err();
        match err {
            SubshiftError::NotSurjective { state } => assert_eq!(state, "0"),
            other => panic!("expected surjectivity failure, got {other}"),
        }
    }

    #[test]
    fn empty_subshift_is_rejected_at_construction() {
        assert!(matches!(
            Sft::new(2, &["0".to_string(), "1".to_string()]),
            Err(SubshiftError::Empty)
        ));
    }

    #[test]
    fn viability_prunes_dead_prefixes() {
        // After a 1 only 1 may follow, but 11 is forbidden: 1 is admissible
        // yet starts nothing.
        let sft = Sft::new(2, &["10".to_string(), "11".to_string()]).unwrap();
        assert!(sft.is_viable(&[0]));
        assert!(!sft.is_viable(&[1]));
    }
}
