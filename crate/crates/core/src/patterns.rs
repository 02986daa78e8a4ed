//! Reuse patterns: which cells transmit on a slice of the band.
//!
//! A pattern is stored as a bit mask over cell indices (bit `b` set means
//! cell `b` is ON). The text form is a 0/1 string with cell 1 leftmost.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scenario::{CellKind, Scenario};

/// Largest cell count a pattern mask can represent.
pub const MAX_CELLS: usize = 64;
/// Largest cell count accepted by [`enumerate_all`].
pub const MAX_ENUMERATION_CELLS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pattern {
    mask: u64,
    cells: usize,
}

impl Pattern {
    pub fn new(mask: u64, cells: usize) -> Result<Self> {
        if cells == 0 || cells > MAX_CELLS {
            return Err(Error::Pattern(format!("cell count {cells} outside 1..={MAX_CELLS}")));
        }
        if cells < 64 && mask >> cells != 0 {
            return Err(Error::Pattern(format!("mask {mask:#x} has bits beyond {cells} cells")));
        }
        if mask == 0 {
            return Err(Error::Pattern("all-OFF pattern is not allowed".into()));
        }
        Ok(Self { mask, cells })
    }

    pub fn from_active(cells: usize, active: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        for &b in active {
            if b >= cells {
                return Err(Error::Pattern(format!("cell {b} out of range for {cells} cells")));
            }
            mask |= 1 << b;
        }
        Self::new(mask, cells)
    }

    /// Pattern with every cell ON (universal reuse).
    pub fn reuse_one(cells: usize) -> Result<Self> {
        let mask = if cells >= 64 { u64::MAX } else { (1u64 << cells) - 1 };
        Self::new(mask, cells)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn cell_count(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn is_active(&self, cell: usize) -> bool {
        cell < self.cells && self.mask >> cell & 1 == 1
    }

    /// Active cell indices, ascending.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.cells).filter(|&b| self.is_active(b)).collect()
    }

    pub fn active_count(&self) -> usize {
        self.mask.count_ones() as usize
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in 0..self.cells {
            f.write_str(if self.is_active(b) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut mask = 0u64;
        for (b, ch) in s.chars().enumerate() {
            match ch {
                '1' if b < MAX_CELLS => mask |= 1 << b,
                '0' => {}
                _ => return Err(Error::Pattern(format!("bad pattern string {s:?}"))),
            }
        }
        Self::new(mask, s.chars().count())
    }
}

/// Ordered list of distinct patterns over the same cells. The position of a
/// pattern in the list is its index in every allocation vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    cells: usize,
}

impl PatternSet {
    pub fn new(patterns: Vec<Pattern>) -> Result<Self> {
        let cells = patterns
            .first()
            .ok_or_else(|| Error::Pattern("pattern set is empty".into()))?
            .cells;
        let mut seen = HashSet::with_capacity(patterns.len());
        for p in &patterns {
            if p.cells != cells {
                return Err(Error::Pattern("patterns disagree on cell count".into()));
            }
            if !seen.insert(p.mask) {
                return Err(Error::Pattern(format!("duplicate pattern {p}")));
            }
        }
        Ok(Self { patterns, cells })
    }

    /// Reads one 0/1 pattern string per line; blank lines and `#` comments
    /// are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let patterns = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Pattern::from_str)
            .collect::<Result<Vec<_>>>()?;
        Self::new(patterns)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.cells
    }

    pub fn get(&self, i: usize) -> Option<&Pattern> {
        self.patterns.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pattern> {
        self.patterns.iter()
    }

    pub fn as_slice(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn position(&self, pattern: &Pattern) -> Option<usize> {
        self.patterns.iter().position(|p| p == pattern)
    }

    pub fn contains(&self, pattern: &Pattern) -> bool {
        self.position(pattern).is_some()
    }
}

impl std::ops::Index<usize> for PatternSet {
    type Output = Pattern;

    fn index(&self, i: usize) -> &Pattern {
        &self.patterns[i]
    }
}

/// All `2^cells - 1` non-empty patterns in lexicographic order of their
/// 0/1 strings.
pub fn enumerate_all(cells: usize) -> Result<PatternSet> {
    if cells == 0 {
        return Err(Error::Pattern("need at least one cell".into()));
    }
    if cells > MAX_ENUMERATION_CELLS {
        return Err(Error::TooLarge {
            what: "cell count for full pattern enumeration",
            size: cells,
            limit: MAX_ENUMERATION_CELLS,
        });
    }
    // The string reads cell 1 as the most significant digit, so reverse the
    // counter's low `cells` bits to get the cell mask.
    let shift = 64 - cells as u32;
    let patterns = (1u64..1 << cells)
        .map(|v| Pattern {
            mask: v.reverse_bits() >> shift,
            cells,
        })
        .collect();
    Ok(PatternSet { patterns, cells })
}

/// The macro-OFF / pico-ON candidate set: pattern 0 mutes every macro and
/// keeps every pico on; pattern `m` turns on only macro `m` and mutes the
/// picos it hosts.
pub fn candidate_patterns(scenario: &Scenario) -> Result<PatternSet> {
    let cells = scenario.cell_count();
    let macros: Vec<usize> = scenario.macros().map(|c| c.index).collect();
    let picos: Vec<(usize, usize)> = scenario
        .picos()
        .map(|c| {
            c.host
                .map(|h| (c.index, h))
                .ok_or_else(|| Error::Pattern(format!("pico {} has no host macro", c.index + 1)))
        })
        .collect::<Result<_>>()?;

    let mut patterns = Vec::with_capacity(macros.len() + 1);
    if !picos.is_empty() {
        let active: Vec<usize> = picos.iter().map(|&(p, _)| p).collect();
        patterns.push(Pattern::from_active(cells, &active)?);
    }
    for &m in &macros {
        debug_assert_eq!(scenario.cells[m].kind, CellKind::Macro);
        let mut active = vec![m];
        active.extend(picos.iter().filter(|&&(_, h)| h != m).map(|&(p, _)| p));
        patterns.push(Pattern::from_active(cells, &active)?);
    }
    PatternSet::new(patterns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_topology, ScenarioConfig};

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate_all(15).unwrap().len(), 32767);
        let one = enumerate_all(1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].to_string(), "1");
        let four = enumerate_all(4).unwrap();
        assert_eq!(four.len(), 15);
        assert!(four.iter().all(|p| p.mask() != 0));
    }

    #[test]
    fn enumerate_is_lexicographic() {
        let set = enumerate_all(5).unwrap();
        let strings: Vec<String> = set.iter().map(|p| p.to_string()).collect();
        let mut sorted = strings.clone();
        sorted.sort();
        assert_eq!(strings, sorted);
        assert_eq!(strings[0], "00001");
        assert_eq!(strings.last().unwrap(), "11111");
    }

    #[test]
    fn enumerate_guard() {
        assert!(matches!(enumerate_all(25), Err(Error::TooLarge { .. })));
        assert!(enumerate_all(0).is_err());
    }

    #[test]
    fn active_set_examples() {
        let p = Pattern::from_active(15, &[0, 3, 6]).unwrap();
        assert_eq!(p.active_set(), vec![0, 3, 6]);
        let all = Pattern::reuse_one(15).unwrap();
        assert_eq!(all.active_set(), (0..15).collect::<Vec<_>>());
        let single = Pattern::from_active(15, &[8]).unwrap();
        assert_eq!(single.active_set(), vec![8]);
    }

    #[test]
    fn string_round_trip() {
        let p: Pattern = "000111111111111".parse().unwrap();
        assert_eq!(p.active_set(), (3..15).collect::<Vec<_>>());
        assert_eq!(p.to_string(), "000111111111111");
        assert!("0000".parse::<Pattern>().is_err());
        assert!("01x".parse::<Pattern>().is_err());
    }

    #[test]
    fn duplicates_rejected() {
        let p = Pattern::reuse_one(3).unwrap();
        assert!(PatternSet::new(vec![p, p]).is_err());
    }

    #[test]
    fn candidates_for_default_layout() {
        let s = generate_topology(&ScenarioConfig::default(), 7).unwrap();
        let set = candidate_patterns(&s).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set[0].to_string(), "000111111111111");
        assert_eq!(set[1].to_string(), "100000011111111");
        assert_eq!(set[2].to_string(), "010111100001111");
        assert_eq!(set[3].to_string(), "001111111110000");

        let all = enumerate_all(15).unwrap();
        assert!(set.iter().all(|p| all.contains(p)));
        for b in 0..15 {
            let n = set.iter().filter(|p| p.is_active(b)).count();
            assert!(n >= 1);
            if b < 3 {
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn candidates_single_macro_without_picos() {
        let cfg = ScenarioConfig {
            macro_count: 1,
            picos_per_macro: 0,
            user_count: 1,
            ..Default::default()
        };
        let s = generate_topology(&cfg, 0).unwrap();
        let set = candidate_patterns(&s).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].to_string(), "1");
    }
}
