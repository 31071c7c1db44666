//! Signal-to-symbol quantization.
//!
//! A sampled signal is cut at annotated peaks into segments (one heartbeat
//! per segment for ECG), every segment is resampled to a fixed number of
//! values by piecewise aggregate approximation, z-normalized and discretized
//! with equiprobable standard-normal breakpoints (SAX).

use std::io::BufRead;
use std::sync::Arc;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::sequence::SymbolSequence;

pub const MIN_ALPHABET: usize = 3;
pub const MAX_ALPHABET: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct SaxConfig {
    symbols_per_segment: usize,
    alphabet: Arc<Alphabet>,
    breakpoints: Vec<f64>,
}

impl SaxConfig {
    pub fn new(symbols_per_segment: usize, alphabet_size: usize) -> Result<Self> {
        if symbols_per_segment == 0 {
            return Err(Error::InvalidSax("symbols per segment must be at least 1".into()));
        }
        if !(MIN_ALPHABET..=MAX_ALPHABET).contains(&alphabet_size) {
            return Err(Error::InvalidSax(format!(
                "alphabet size must be in {MIN_ALPHABET}..={MAX_ALPHABET}, got {alphabet_size}"
            )));
        }
        Ok(SaxConfig {
            symbols_per_segment,
            alphabet: Arc::new(Alphabet::letters(alphabet_size)?),
            breakpoints: breakpoints(alphabet_size),
        })
    }

    pub fn symbols_per_segment(&self) -> usize {
        self.symbols_per_segment
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    /// `a`, `b`, ... in symbol order.
    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

impl Default for SaxConfig {
    /// 200 symbols per segment over 6 symbols.
    fn default() -> Self {
        Self::new(200, 6).expect("valid defaults")
    }
}

/// The `i / size` quantiles of the standard normal, `i = 1..size`, rounded to
/// 10 decimal places.
pub fn breakpoints(alphabet_size: usize) -> Vec<f64> {
    let normal = Normal::standard();
    (1..alphabet_size)
        .map(|i| {
            let q = normal.inverse_cdf(i as f64 / alphabet_size as f64);
            let rounded = (q * 1e10).round() / 1e10;
            // -0.0 at the median reads oddly in output.
            if rounded == 0.0 { 0.0 } else { rounded }
        })
        .collect()
}

/// A sampled signal with ascending segment boundaries (e.g. R-peaks).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotatedSignal {
    pub samples: Vec<f64>,
    /// Sample indices; `samples.len()` itself is a valid closing boundary.
    pub peaks: Vec<usize>,
    /// Symbols per segment the caller expects downstream, if known.
    pub expected_period: Option<usize>,
}

impl AnnotatedSignal {
    pub fn new(samples: Vec<f64>, peaks: Vec<usize>) -> Self {
        AnnotatedSignal {
            samples,
            peaks,
            expected_period: None,
        }
    }
}

/// Half-open segments `[peak_i, peak_{i+1})`. Samples outside the first and
/// last peak are discarded.
pub fn segment(signal: &AnnotatedSignal) -> Result<Vec<&[f64]>> {
    let peaks = &signal.peaks;
    if peaks.len() < 2 {
        return Err(Error::TooFewPeaks(peaks.len()));
    }
    if let Some(w) = peaks.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::InvalidPeaks(format!(
            "peaks must be strictly ascending, found {} then {}",
            w[0], w[1]
        )));
    }
    let last = *peaks.last().unwrap();
    if last > signal.samples.len() {
        return Err(Error::InvalidPeaks(format!(
            "peak {last} is past the end of a {}-sample signal",
            signal.samples.len()
        )));
    }
    Ok(peaks
        .windows(2)
        .map(|w| &signal.samples[w[0]..w[1]])
        .collect())
}

/// Piecewise aggregate approximation to `out_len` frame means.
///
/// Frame `j` covers `[j * L / out_len, (j + 1) * L / out_len)` of the input,
/// where each sample spans a unit interval; samples straddling a frame
/// boundary contribute in proportion to their overlap. Works for both down-
/// and upsampling.
pub fn paa(segment: &[f64], out_len: usize) -> Result<Vec<f64>> {
    if segment.is_empty() {
        return Err(Error::EmptySegment);
    }
    if out_len == 0 {
        return Err(Error::InvalidSax("output length must be at least 1".into()));
    }
    // Scale both axes by out_len * len so every boundary is an integer.
    let len = segment.len() as u64;
    let frames = out_len as u64;
    let mut out = vec![0.0; out_len];
    let (mut sample, mut frame, mut pos) = (0u64, 0u64, 0u64);
    while sample < len && frame < frames {
        let sample_end = (sample + 1) * frames;
        let frame_end = (frame + 1) * len;
        let end = sample_end.min(frame_end);
        out[frame as usize] += segment[sample as usize] * (end - pos) as f64;
        pos = end;
        if end == sample_end {
            sample += 1;
        }
        if end == frame_end {
            frame += 1;
        }
    }
    for v in &mut out {
        *v /= len as f64;
    }
    Ok(out)
}

/// Z-normalizes `values` and maps each to its breakpoint interval. A
/// (numerically) constant input maps to the middle symbol.
pub fn symbolize(values: &[f64], config: &SaxConfig) -> Result<SymbolSequence> {
    if values.is_empty() {
        return Err(Error::EmptySegment);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    let scale = values.iter().fold(0f64, |m, v| m.max(v.abs()));
    let data: Vec<u8> = if !(std > scale * 1e-12) {
        vec![(config.alphabet_size() / 2) as u8; values.len()]
    } else {
        values
            .iter()
            .map(|v| config.breakpoints.partition_point(|&b| b <= (v - mean) / std) as u8)
            .collect()
    };
    SymbolSequence::new(Arc::clone(&config.alphabet), data)
}

/// Segment, resample and symbolize; output length is
/// `segments * symbols_per_segment`.
pub fn quantize_signal(signal: &AnnotatedSignal, config: &SaxConfig) -> Result<SymbolSequence> {
    let segments = segment(signal)?;
    let words = segments
        .par_iter()
        .map(|s| {
            let resampled = paa(s, config.symbols_per_segment)?;
            Ok(symbolize(&resampled, config)?.into_data())
        })
        .collect::<Result<Vec<_>>>()?;
    SymbolSequence::new(Arc::clone(&config.alphabet), words.concat())
}

/// Which field of a CSV row holds the signal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SignalColumn {
    Index(usize),
    /// Looked up in the header row.
    Name(String),
}

/// Reads one decimal sample per line, or one CSV column when `column` is
/// given. `has_header` skips the first row; a named column implies it.
pub fn read_samples<R: BufRead>(reader: R, column: Option<&SignalColumn>, has_header: bool) -> Result<Vec<f64>> {
    let bad = |line: usize, text: &str| {
        Error::InvalidSax(format!("line {line}: cannot parse sample {text:?}"))
    };
    let Some(column) = column else {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate().skip(usize::from(has_header)) {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            out.push(text.parse().map_err(|_| bad(i + 1, text))?);
        }
        return Ok(out);
    };
    let named = matches!(column, SignalColumn::Name(_));
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(has_header || named)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let index = match column {
        SignalColumn::Index(i) => *i,
        SignalColumn::Name(name) => csv
            .headers()
            .map_err(|e| Error::InvalidSax(e.to_string()))?
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidSax(format!("no column named {name:?}")))?,
    };
    let mut out = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidSax(e.to_string()))?;
        let line = i + 1 + usize::from(has_header || named);
        let field = record
            .get(index)
            .ok_or_else(|| Error::InvalidSax(format!("line {line}: no column {index}")))?;
        out.push(field.parse().map_err(|_| bad(line, field))?);
    }
    Ok(out)
}

/// Reads one non-negative integer sample index per line.
pub fn read_peaks<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        out.push(text.parse().map_err(|_| {
            Error::InvalidPeaks(format!("line {}: cannot parse peak index {text:?}", i + 1))
        })?);
    }
    Ok(out)
}
