//! Bit-packed binary matrices used for test designs.

use serde::Serialize;

/// Row-major bit matrix; each row is padded to whole 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    words: Vec<u64>,
    rows: usize,
    cols: usize,
    words_per_row: usize,
}

impl BitMatrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64).max(1);
        Self {
            words: vec![0; rows * words_per_row],
            rows,
            cols,
            words_per_row,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        if value {
            *w |= 1 << (col % 64);
        } else {
            *w &= !(1 << (col % 64));
        }
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        let start = row * self.words_per_row;
        &self.words[start..start + self.words_per_row]
    }

    pub fn row_weight(&self, row: usize) -> u32 {
        self.row_words(row).iter().map(|w| w.count_ones()).sum()
    }

    /// Column indices of the set bits in `row`, ascending.
    pub fn row_support(&self, row: usize) -> SupportIter<'_> {
        SupportIter {
            words: self.row_words(row),
            word_idx: 0,
            current: self.row_words(row)[0],
        }
    }

    /// Does `row` intersect the indicator packed in `x_words`?
    #[inline]
    pub fn row_intersects(&self, row: usize, x_words: &[u64]) -> bool {
        self.row_words(row)
            .iter()
            .zip(x_words)
            .any(|(a, b)| a & b != 0)
    }
}

/// Iterator over set-bit positions of one row.
pub struct SupportIter<'a> {
    words: &'a [u64],
    word_idx: usize,
    current: u64,
}

impl Iterator for SupportIter<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        while self.current == 0 {
            self.word_idx += 1;
            if self.word_idx >= self.words.len() {
                return None;
            }
            self.current = self.words[self.word_idx];
        }
        let bit = self.current.trailing_zeros() as usize;
        self.current &= self.current - 1;
        Some(self.word_idx * 64 + bit)
    }
}

/// Pack an indicator over `len` positions into 64-bit words.
pub fn pack_indicator(len: usize, set: impl IntoIterator<Item = usize>) -> Vec<u64> {
    let mut words = vec![0u64; len.div_ceil(64).max(1)];
    for idx in set {
        debug_assert!(idx < len);
        words[idx / 64] |= 1 << (idx % 64);
    }
    words
}

/// Bit-packed test outcomes (one bit per test).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Outcomes {
    #[serde(skip)]
    bits: Vec<u64>,
    len: usize,
    positives: usize,
}

impl Outcomes {
    pub fn new(len: usize) -> Self {
        Self {
            bits: vec![0; len.div_ceil(64).max(1)],
            len,
            positives: 0,
        }
    }

    pub fn from_bools(values: &[bool]) -> Self {
        let mut out = Self::new(values.len());
        for (t, &v) in values.iter().enumerate() {
            if v {
                out.set_positive(t);
            }
        }
        out
    }

    #[inline]
    pub fn set_positive(&mut self, t: usize) {
        debug_assert!(t < self.len);
        let w = &mut self.bits[t / 64];
        let mask = 1 << (t % 64);
        if *w & mask == 0 {
            *w |= mask;
            self.positives += 1;
        }
    }

    #[inline]
    pub fn get(&self, t: usize) -> bool {
        debug_assert!(t < self.len);
        (self.bits[t / 64] >> (t % 64)) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_positive(&self) -> usize {
        self.positives
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|t| self.get(t))
    }
}
