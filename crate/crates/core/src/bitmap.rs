//! Fixed-width keyword bitmaps over a leaf cluster's keyword universe.

use serde::{Deserialize, Serialize};

use crate::error::{QdrError, Result};
use crate::metric::KeywordDistance;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeywordBitmap {
    len: usize,
    words: Vec<u64>,
}

impl KeywordBitmap {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut b = Self::zeros(len);
        for i in 0..len {
            b.set(i);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for width {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |i| self.get(*i))
    }

    /// In-place OR. Widths must agree.
    pub fn union_with(&mut self, other: &KeywordBitmap) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    /// True when every bit of `self` is also set in `other`.
    pub fn is_subset(&self, other: &KeywordBitmap) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    #[inline]
    pub(crate) fn and_count(&self, other: &KeywordBitmap) -> u32 {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    /// Raw bytes, bit `i` at byte `i / 8`, position `i % 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(QdrError::Corrupt(format!(
                "bitmap of width {len} needs {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        let mut b = Self::zeros(len);
        for (i, byte) in bytes.iter().enumerate() {
            b.words[i / 8] |= (*byte as u64) << ((i % 8) * 8);
        }
        if b.iter_ones().count() as u32 != b.count_ones() {
            return Err(QdrError::Corrupt("bitmap has bits beyond its width".into()));
        }
        Ok(b)
    }
}

impl std::fmt::Display for KeywordBitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Position of `keyword` in a sorted universe.
#[inline]
pub fn position(universe: &[String], keyword: &str) -> Option<usize> {
    universe.binary_search_by(|k| k.as_str().cmp(keyword)).ok()
}

/// Bitmap of the keywords present in both `keywords` and the sorted `universe`.
pub fn encode<S: AsRef<str>>(keywords: &[S], universe: &[String]) -> KeywordBitmap {
    let mut b = KeywordBitmap::zeros(universe.len());
    for k in keywords {
        if let Some(i) = position(universe, k.as_ref()) {
            b.set(i);
        }
    }
    b
}

/// Keyword relevance φ: popcount of the bitwise AND.
pub fn relevance_phi(a: &KeywordBitmap, b: &KeywordBitmap) -> Result<u32> {
    if a.len != b.len {
        return Err(QdrError::WidthMismatch {
            left: a.len,
            right: b.len,
        });
    }
    Ok(a.and_count(b))
}

/// For every set bit `i` of `bmq`, sets each bit `j` whose keyword lies
/// strictly closer than `tau` to keyword `i`.
pub fn search_relaxation(
    bmq: &KeywordBitmap,
    universe: &[String],
    tau: f64,
    metric: &impl KeywordDistance,
) -> KeywordBitmap {
    let mut bmr = bmq.clone();
    for i in bmq.iter_ones() {
        relax_from(&mut bmr, &universe[i], universe, tau, metric);
    }
    bmr
}

/// Relaxed bitmap of a query against one universe. Query keywords missing
/// from the universe set no bit of their own but still relax.
pub fn relax_query<S: AsRef<str>>(
    query_keywords: &[S],
    universe: &[String],
    tau: f64,
    metric: &impl KeywordDistance,
) -> KeywordBitmap {
    let bmq = encode(query_keywords, universe);
    let mut bmr = search_relaxation(&bmq, universe, tau, metric);
    for k in query_keywords {
        if position(universe, k.as_ref()).is_none() {
            relax_from(&mut bmr, k.as_ref(), universe, tau, metric);
        }
    }
    bmr
}

fn relax_from(bmr: &mut KeywordBitmap, keyword: &str, universe: &[String], tau: f64, metric: &impl KeywordDistance) {
    for (j, other) in universe.iter().enumerate() {
        if !bmr.get(j) && metric.distance(keyword, other) < tau {
            bmr.set(j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn bits(s: &str) -> KeywordBitmap {
        let mut b = KeywordBitmap::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            if c == '1' {
                b.set(i);
            }
        }
        b
    }

    #[test]
    fn encode_examples() {
        let u = universe(&["coffee", "pizza", "steak", "sushi"]);
        assert_eq!(encode::<&str>(&[], &u).to_string(), "0000");
        assert_eq!(encode(&u, &u).to_string(), "1111");
        assert_eq!(encode(&["pizza", "sushi"], &u).to_string(), "0101");
        assert_eq!(encode(&["pizza", "ramen"], &u).to_string(), "0100");
    }

    #[test]
    fn phi_examples() {
        assert_eq!(relevance_phi(&bits("1011"), &bits("0011")).unwrap(), 2);
        assert_eq!(relevance_phi(&bits("1011"), &bits("0000")).unwrap(), 0);
        assert_eq!(relevance_phi(&bits("1011"), &bits("1011")).unwrap(), 3);
        assert!(matches!(
            relevance_phi(&bits("101"), &bits("1011")),
            Err(QdrError::WidthMismatch { .. })
        ));
    }

    fn toy_distance(a: &str, b: &str) -> f64 {
        if a == b {
            return 0.0;
        }
        let mut pair = [a, b];
        pair.sort();
        match pair {
            ["pizza", "pizzeria"] => 0.2,
            ["pizza", "steak"] => 0.3,
            ["pizzeria", "steak"] => 0.5,
            _ => 1.0,
        }
    }

    #[test]
    fn relaxation_examples() {
        let u = universe(&["pizza", "pizzeria", "steak"]);
        let bmq = encode(&["pizza"], &u);
        assert_eq!(search_relaxation(&bmq, &u, 0.0, &toy_distance), bmq);
        assert_eq!(search_relaxation(&bmq, &u, 1.0, &toy_distance).to_string(), "111");
        assert_eq!(search_relaxation(&bmq, &u, 0.3, &toy_distance).to_string(), "110");
    }

    #[test]
    fn absent_query_keyword_still_relaxes() {
        let u = universe(&["pizzeria", "steak"]);
        let bmr = relax_query(&["pizza"], &u, 0.3, &toy_distance);
        assert_eq!(bmr.to_string(), "10");
        assert!(relax_query(&["pizza"], &u, 0.0, &toy_distance).is_zero());
    }

    #[test]
    fn bytes_roundtrip_and_layout() {
        let b = bits("1000000001");
        assert_eq!(b.to_bytes(), vec![0b0000_0001, 0b0000_0010]);
        assert_eq!(KeywordBitmap::from_bytes(10, &b.to_bytes()).unwrap(), b);
        assert!(KeywordBitmap::from_bytes(10, &[0, 0b1000_0000]).is_err());
        assert!(KeywordBitmap::from_bytes(10, &[0]).is_err());
    }

    #[test]
    fn wide_bitmaps() {
        let mut b = KeywordBitmap::zeros(130);
        b.set(0);
        b.set(64);
        b.set(129);
        assert_eq!(b.count_ones(), 3);
        assert_eq!(b.iter_ones().collect::<Vec<_>>(), vec![0, 64, 129]);
        assert_eq!(KeywordBitmap::ones(130).count_ones(), 130);
        assert!(b.is_subset(&KeywordBitmap::ones(130)));
    }
}
