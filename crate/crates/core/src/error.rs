use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("unknown symbol {:?} at position {position}", char::from(*byte))]
    UnknownSymbol { position: usize, byte: u8 },

    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("circular access on an empty sequence")]
    EmptySequence,

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("no positive smoothing value exists for |A|={alphabet_size}, d={depth}, p={confidence}")]
    NoSolution {
        alphabet_size: usize,
        depth: usize,
        confidence: f64,
    },

    #[error("reference sequence is empty")]
    EmptyReference,

    #[error("expected {expected} symbols, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("alphabet mismatch: model uses {model:?}, sequence uses {sequence:?}")]
    AlphabetMismatch { model: String, sequence: String },

    #[error("target sequence is empty")]
    EmptyTarget,

    #[error("malformed model file at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unsupported model file version {0:?}")]
    VersionMismatch(String),

    #[error("at least two peaks are needed to form a segment, got {0}")]
    TooFewPeaks(usize),

    #[error("invalid peak annotations: {0}")]
    InvalidPeaks(String),

    #[error("segment is empty")]
    EmptySegment,

    #[error("invalid quantization settings: {0}")]
    InvalidSax(String),

    #[error("duplicate class label {0:?}")]
    DuplicateLabel(String),

    #[error("class {0:?} has an empty reference sequence")]
    EmptyClassReference(String),

    #[error("unknown class label {0:?}")]
    UnknownLabel(String),

    #[error("invalid label {0:?}: labels must be non-empty and free of commas and line breaks")]
    InvalidLabel(String),

    #[error("no classes given")]
    NoClasses,

    #[error("empty {0} list")]
    EmptyList(&'static str),

    #[error("cell ({reference}, {target}): {source}")]
    Cell {
        reference: String,
        target: String,
        #[source]
        source: Box<Error>,
    },

    #[error("reference {label}: {source}")]
    Reference {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed journal at line {line}: {message}")]
    Journal { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}
