//! Readers for raw symbol text and FASTA.
//!
//! Both formats ignore whitespace. FASTA header lines (`>`) are skipped, the
//! record bodies are concatenated in order and uppercased before lookup.

use std::io::BufRead;
use std::sync::Arc;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::sequence::SymbolSequence;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnknownPolicy {
    #[default]
    Reject,
    Drop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SourceKind {
    /// Raw symbol text, also the output format of quantization.
    #[default]
    Raw,
    Fasta,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SequenceSource {
    pub kind: SourceKind,
    pub unknown: UnknownPolicy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ingested {
    pub sequence: SymbolSequence,
    /// Symbols removed under [`UnknownPolicy::Drop`].
    pub dropped: u64,
}

pub fn parse_raw(text: &[u8], alphabet: Arc<Alphabet>) -> Result<SymbolSequence> {
    let source = SequenceSource::default();
    Ok(source.read(text, alphabet)?.sequence)
}

pub fn parse_fasta(text: &[u8], alphabet: Arc<Alphabet>, policy: UnknownPolicy) -> Result<Ingested> {
    let source = SequenceSource {
        kind: SourceKind::Fasta,
        unknown: policy,
    };
    source.read(text, alphabet)
}

impl SequenceSource {
    pub fn read<R: BufRead>(&self, mut reader: R, alphabet: Arc<Alphabet>) -> Result<Ingested> {
        let fasta = self.kind == SourceKind::Fasta;
        let mut data = Vec::new();
        let mut dropped = 0u64;
        // Position among body symbols, counting dropped ones.
        let mut position = 0usize;
        let mut line = Vec::new();
        loop {
            line.clear();
            if reader.read_until(b'\n', &mut line)? == 0 {
                break;
            }
            if fasta && line.first() == Some(&b'>') {
                continue;
            }
            for &raw in &line {
                if raw.is_ascii_whitespace() {
                    continue;
                }
                let byte = if fasta { raw.to_ascii_uppercase() } else { raw };
                match alphabet.index_of(byte) {
                    Some(i) => data.push(i),
                    None => match self.unknown {
                        UnknownPolicy::Reject => {
                            return Err(Error::UnknownSymbol { position, byte: raw })
                        }
                        UnknownPolicy::Drop => dropped += 1,
                    },
                }
                position += 1;
            }
        }
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Ingested {
            sequence: SymbolSequence::new(alphabet, data)?,
            dropped,
        })
    }
}
