use std::fmt;

use crate::error::{Error, Result};

const ABSENT: u8 = u8::MAX;

/// An ordered set of distinct single-byte symbols.
///
/// Symbols map to dense indices `0..len()` in the order given. Whitespace is
/// never a symbol because every text reader skips it.
#[derive(Clone)]
pub struct Alphabet {
    symbols: Vec<u8>,
    index: [u8; 256],
}

impl Alphabet {
    pub fn new(symbols: &[u8]) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::InvalidAlphabet(format!(
                "need at least 2 symbols, got {}",
                symbols.len()
            )));
        }
        // u8::MAX is reserved as the "absent" marker, so 255 symbols at most.
        if symbols.len() > 255 {
            return Err(Error::InvalidAlphabet("more than 255 symbols".into()));
        }
        let mut index = [ABSENT; 256];
        for (i, &s) in symbols.iter().enumerate() {
            if s.is_ascii_whitespace() {
                return Err(Error::InvalidAlphabet(format!(
                    "whitespace byte 0x{s:02x} cannot be a symbol"
                )));
            }
            if index[s as usize] != ABSENT {
                return Err(Error::InvalidAlphabet(format!(
                    "duplicate symbol {:?}",
                    char::from(s)
                )));
            }
            index[s as usize] = i as u8;
        }
        Ok(Alphabet {
            symbols: symbols.to_vec(),
            index,
        })
    }

    /// `A`, `C`, `G`, `T`.
    pub fn dna() -> Self {
        Self::new(b"ACGT").expect("valid preset")
    }

    /// The first `size` lowercase letters, the symbol set produced by SAX
    /// quantization.
    pub fn letters(size: usize) -> Result<Self> {
        if size > 26 {
            return Err(Error::InvalidAlphabet(format!(
                "letter alphabets hold at most 26 symbols, got {size}"
            )));
        }
        let symbols: Vec<u8> = (b'a'..).take(size).collect();
        Self::new(&symbols)
    }

    /// Parses an alphabet given either inline (`ABC`) or by preset name
    /// (`dna`, `sax<N>`).
    pub fn from_name(arg: &str) -> Result<Self> {
        match arg {
            "dna" => Ok(Self::dna()),
            _ => match arg.strip_prefix("sax").and_then(|n| n.parse::<usize>().ok()) {
                Some(size) => Self::letters(size),
                None => Self::new(arg.as_bytes()),
            },
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// Always false; an alphabet holds at least two symbols.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index_of(&self, symbol: u8) -> Option<u8> {
        match self.index[symbol as usize] {
            ABSENT => None,
            i => Some(i),
        }
    }

    #[inline]
    pub fn symbol(&self, index: u8) -> u8 {
        self.symbols[index as usize]
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Renders a run of indices back to symbol text.
    pub fn render(&self, indices: &[u8]) -> String {
        indices.iter().map(|&i| char::from(self.symbol(i))).collect()
    }

    pub fn log2_size(&self) -> f64 {
        (self.len() as f64).log2()
    }
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl Eq for Alphabet {}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alphabet({:?})", String::from_utf8_lossy(&self.symbols))
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.symbols))
    }
}
