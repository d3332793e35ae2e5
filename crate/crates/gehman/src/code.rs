//! Binary address codes for tree nodes and arcs.
//!
//! A `Code` is a finite bit string. The empty code addresses the root; a
//! nonempty code addresses both the node it spells and the arc arriving at
//! that node from its parent. Bits are packed MSB-first into u64 words so
//! that prefix tests and the prefix-first lexicographic order reduce to word
//! comparisons.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Code {
    len: u32,
    words: Vec<u64>,
}

impl Code {
    pub fn root() -> Self {
        Code::default()
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut c = Code::root();
        for &b in bits {
            c.push(b != 0);
        }
        c
    }

    /// Parses "0"/"1" characters; empty string is the root.
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut c = Code::root();
        for ch in s.chars() {
            match ch {
                '0' => c.push(false),
                '1' => c.push(true),
                _ => return Err(format!("invalid code character {ch:?}")),
            }
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.len());
        let w = self.words[i / 64];
        (w >> (63 - (i % 64))) & 1 == 1
    }

    pub fn push(&mut self, bit: bool) {
        let i = self.len as usize;
        if i % 64 == 0 {
            self.words.push(0);
        }
        if bit {
            self.words[i / 64] |= 1u64 << (63 - (i % 64));
        }
        self.len += 1;
    }

    pub fn child(&self, bit: bool) -> Code {
        let mut c = self.clone();
        c.push(bit);
        c
    }

    /// Address of the parent node; None for the root.
    pub fn parent(&self) -> Option<Code> {
        if self.len == 0 {
            return None;
        }
        Some(self.prefix(self.len() - 1))
    }

    pub fn prefix(&self, n: usize) -> Code {
        debug_assert!(n <= self.len());
        let nw = n.div_ceil(64);
        let mut words = self.words[..nw].to_vec();
        if n % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= !0u64 << (64 - (n % 64));
            }
        }
        Code { len: n as u32, words }
    }

    pub fn is_prefix_of(&self, other: &Code) -> bool {
        if self.len > other.len {
            return false;
        }
        let full = self.len() / 64;
        if self.words[..full] != other.words[..full] {
            return false;
        }
        let rem = self.len() % 64;
        if rem == 0 {
            return true;
        }
        let mask = !0u64 << (64 - rem);
        (self.words[full] ^ other.words[full]) & mask == 0
    }

    pub fn extend(&mut self, other: &Code) {
        for i in 0..other.len() {
            self.push(other.bit(i));
        }
    }

    pub fn concat(&self, other: &Code) -> Code {
        let mut c = self.clone();
        c.extend(other);
        c
    }

    /// Longest common prefix.
    pub fn meet(&self, other: &Code) -> Code {
        let max = self.len().min(other.len());
        let mut n = 0;
        while n < max && self.bit(n) == other.bit(n) {
            n += 1;
        }
        self.prefix(n)
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(|i| self.bit(i))
    }

    /// Immediate successor of the subtree range in prefix-first order: the
    /// least code that is not below `self`. None when self is all ones.
    fn subtree_end(&self) -> Option<Code> {
        let mut c = self.clone();
        loop {
            if c.is_empty() {
                return None;
            }
            let last = c.bit(c.len() - 1);
            c = c.parent().unwrap();
            if !last {
                c.push(true);
                return Some(c);
            }
        }
    }

    /// Range (self..end) in prefix-first lex order containing exactly the
    /// codes with `self` as prefix; end None means "to the order's end".
    pub fn subtree_range(&self) -> (Code, Option<Code>) {
        (self.clone(), self.subtree_end())
    }
}

impl Ord for Code {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Prefix-first lexicographic: compare common bits, shorter wins ties.
        let common_words = self.len().min(other.len()).div_ceil(64);
        for i in 0..common_words {
            let bits_left = self.len().min(other.len()) - i * 64;
            let mask = if bits_left >= 64 { !0u64 } else { !0u64 << (64 - bits_left) };
            let a = self.words[i] & mask;
            let b = other.words[i] & mask;
            if a != b {
                return a.cmp(&b);
            }
        }
        self.len.cmp(&other.len)
    }
}

impl PartialOrd for Code {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Code({})", self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn push_and_bit_round_trip() {
        let c = Code::from_bits(&[1, 0, 1, 1, 0]);
        assert_eq!(c.len(), 5);
        assert_eq!(c.to_string(), "10110");
        assert!(c.bit(0));
        assert!(!c.bit(1));
    }

    #[test]
    fn prefix_order_puts_ancestors_first() {
        let a = Code::parse("00").unwrap();
        let b = Code::parse("000").unwrap();
        let c = Code::parse("01").unwrap();
        assert!(a < b);
        assert!(b < c);
        assert!(Code::root() < a);
    }

    #[test]
    fn prefix_tests_across_word_boundaries() {
        let mut long = Code::root();
        for i in 0..130 {
            long.push(i % 3 == 0);
        }
        let p = long.prefix(64);
        assert!(p.is_prefix_of(&long));
        assert!(!long.is_prefix_of(&p));
        assert_eq!(p.len(), 64);
        let q = long.prefix(65);
        assert!(p.is_prefix_of(&q));
    }

    #[test]
    fn subtree_range_bounds() {
        let c = Code::parse("01").unwrap();
        let (lo, hi) = c.subtree_range();
        assert_eq!(lo, c);
        assert_eq!(hi.unwrap().to_string(), "1");
        let all_ones = Code::parse("11").unwrap();
        assert!(all_ones.subtree_range().1.is_none());
    }

    #[test]
    fn meet_is_longest_common_prefix() {
        let a = Code::parse("0101").unwrap();
        let b = Code::parse("0110").unwrap();
        assert_eq!(a.meet(&b).to_string(), "01");
    }

    proptest! {
        #[test]
        fn parse_display_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let mut c = Code::root();
            for &b in &bits {
                c.push(b);
            }
            let s = c.to_string();
            prop_assert_eq!(Code::parse(&s).unwrap(), c);
        }

        #[test]
        fn order_agrees_with_string_order(
            xs in proptest::collection::vec(any::<bool>(), 0..100),
            ys in proptest::collection::vec(any::<bool>(), 0..100),
        ) {
            let a = Code::from_bits(&xs.iter().map(|&b| b as u8).collect::<Vec<_>>());
            let b = Code::from_bits(&ys.iter().map(|&b| b as u8).collect::<Vec<_>>());
            prop_assert_eq!(a.cmp(&b), a.to_string().cmp(&b.to_string()));
        }

        #[test]
        fn prefix_matches_string_prefix(
            xs in proptest::collection::vec(any::<bool>(), 0..100),
            ys in proptest::collection::vec(any::<bool>(), 0..100),
        ) {
            let a = Code::from_bits(&xs.iter().map(|&b| b as u8).collect::<Vec<_>>());
            let b = Code::from_bits(&ys.iter().map(|&b| b as u8).collect::<Vec<_>>());
            prop_assert_eq!(a.is_prefix_of(&b), b.to_string().starts_with(&a.to_string()));
        }
    }
}
