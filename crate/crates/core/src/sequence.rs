use std::sync::Arc;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

/// A sequence of symbol indices over a shared [`Alphabet`].
///
/// Indexing is circular: position `i` resolves to `data[i mod n]` for any
/// integer `i`, negative included.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolSequence {
    alphabet: Arc<Alphabet>,
    data: Vec<u8>,
}

impl SymbolSequence {
    pub fn new(alphabet: Arc<Alphabet>, data: Vec<u8>) -> Result<Self> {
        let size = alphabet.len();
        if let Some(position) = data.iter().position(|&i| i as usize >= size) {
            return Err(Error::InvalidAlphabet(format!(
                "index {} at position {position} exceeds alphabet size {size}",
                data[position]
            )));
        }
        Ok(SymbolSequence { alphabet, data })
    }

    /// Builds a sequence from symbol text with no whitespace handling.
    pub fn from_symbols(alphabet: Arc<Alphabet>, text: &[u8]) -> Result<Self> {
        let data = text
            .iter()
            .enumerate()
            .map(|(position, &byte)| {
                alphabet
                    .index_of(byte)
                    .ok_or(Error::UnknownSymbol { position, byte })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolSequence { alphabet, data })
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The symbol index at circular position `i`.
    pub fn at(&self, i: i64) -> Result<u8> {
        if self.data.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(self.data[wrap(i, self.data.len())])
    }

    /// `seq[start mod n], ..., seq[(start + len - 1) mod n]`.
    pub fn circular_window(&self, start: i64, len: usize) -> Result<Vec<u8>> {
        if self.data.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut out = Vec::with_capacity(len);
        extend_circular(&self.data, start, len, &mut out);
        Ok(out)
    }

    /// Left rotation by `shift` positions (any integer).
    pub fn rotated(&self, shift: i64) -> Self {
        let mut data = self.data.clone();
        if !data.is_empty() {
            let s = wrap(shift, data.len());
            data.rotate_left(s);
        }
        SymbolSequence {
            alphabet: Arc::clone(&self.alphabet),
            data,
        }
    }

    /// A contiguous, non-circular sub-range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        SymbolSequence {
            alphabet: Arc::clone(&self.alphabet),
            data: self.data[range].to_vec(),
        }
    }

    /// Renders the sequence back to symbol text.
    pub fn to_text(&self) -> String {
        self.alphabet.render(&self.data)
    }
}

#[inline]
pub(crate) fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// Appends a circular window of `data` (non-empty) to `out`.
pub(crate) fn extend_circular(data: &[u8], start: i64, len: usize, out: &mut Vec<u8>) {
    let n = data.len();
    let mut pos = wrap(start, n);
    let mut remaining = len;
    while remaining > 0 {
        let take = remaining.min(n - pos);
        out.extend_from_slice(&data[pos..pos + take]);
        remaining -= take;
        pos = 0;
    }
}
