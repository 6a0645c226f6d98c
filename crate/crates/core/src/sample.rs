use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Alphabet {
    Binary,
    Qary(u32),
}

impl Alphabet {
    pub fn size(self) -> u32 {
        match self {
            Alphabet::Binary => 2,
            Alphabet::Qary(q) => q,
        }
    }

    pub fn from_size(q: u32) -> Alphabet {
        if q == 2 {
            Alphabet::Binary
        } else {
            Alphabet::Qary(q)
        }
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.size())
    }
}

/// Where a multiset came from: builder name, its parameters and a digest of
/// the certifying potential trace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub construction: String,
    pub params: BTreeMap<String, String>,
    pub trace_digest: Option<String>,
}

impl Provenance {
    pub fn new(construction: impl Into<String>) -> Self {
        Provenance {
            construction: construction.into(),
            ..Default::default()
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    /// `key=value` pairs joined by commas, keys sorted.
    pub fn canonical_params(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Ordered multiset of equal-length words over one alphabet.
///
/// Words are stored back to back; duplicates are kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMultiset {
    alphabet: Alphabet,
    word_length: usize,
    symbols: Vec<u32>,
    pub provenance: Provenance,
}

impl SampleMultiset {
    pub fn new(alphabet: Alphabet, word_length: usize) -> Self {
        SampleMultiset {
            alphabet,
            word_length,
            symbols: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn from_words<I, W>(alphabet: Alphabet, word_length: usize, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = W>,
        W: AsRef<[u32]>,
    {
        let mut set = SampleMultiset::new(alphabet, word_length);
        for w in words {
            set.push(w.as_ref())?;
        }
        Ok(set)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn push(&mut self, word: &[u32]) -> Result<()> {
        if word.len() != self.word_length {
            return Err(Error::DimensionMismatch {
                expected: self.word_length,
                found: word.len(),
            });
        }
        if let Some(&bad) = word.iter().find(|&&s| s >= self.alphabet.size()) {
            return Err(Error::InvalidParameter(format!(
                "symbol {bad} outside alphabet of size {}",
                self.alphabet.size()
            )));
        }
        self.symbols.extend_from_slice(word);
        Ok(())
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn word_length(&self) -> usize {
        self.word_length
    }

    pub fn len(&self) -> usize {
        if self.word_length == 0 {
            0
        } else {
            self.symbols.len() / self.word_length
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn word(&self, index: usize) -> &[u32] {
        &self.symbols[index * self.word_length..(index + 1) * self.word_length]
    }

    pub fn words(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.symbols.chunks_exact(self.word_length.max(1))
    }

    /// Binary word `index` packed little-endian into a `u64` (bit `i` is
    /// coordinate `i`); requires `word_length <= 64`.
    pub fn packed(&self, index: usize) -> u64 {
        debug_assert!(self.word_length <= 64);
        self.word(index)
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64 & 1) << i))
    }

    /// Every word of `{0,1}^n` in lexicographic order.
    pub fn full_cube(n: usize) -> Self {
        assert!(n < 32, "full cube of length {n} is too large");
        let mut set = SampleMultiset::new(Alphabet::Binary, n);
        for x in 0u64..1 << n {
            let w: Vec<u32> = (0..n).map(|i| ((x >> (n - 1 - i)) & 1) as u32).collect();
            set.symbols.extend_from_slice(&w);
        }
        set.provenance = Provenance::new("cube").with("n", n);
        set
    }
}
