//! Extended-alphabet finite-context models.
//!
//! An order-`k`, depth-`d` model counts, for every length-`k` context seen in
//! a reference, how often each length-`d` word followed it. Probabilities are
//! additive-smoothed estimates over the extended alphabet `A^d`:
//!
//! ```text
//! P(w | c) = (v(w|c) + alpha) / (v(c) + alpha * |A|^d)
//! ```
//!
//! Learning advances one symbol at a time over the circular reference, so
//! consecutive `d`-words overlap. With `d = 1` the model is an ordinary
//! finite-context model.

use std::collections::HashMap;
use std::fmt;
use std::mem::size_of;
use std::sync::Arc;

use rustc_hash::FxBuildHasher;
use smallvec::SmallVec;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::sequence::{extend_circular, wrap, SymbolSequence};

/// Confidence used when `alpha` is resolved automatically.
pub const DEFAULT_CONFIDENCE: f64 = 0.9;

/// Exclusive upper bound on the extended alphabet size `|A|^d`.
pub const MAX_EXTENDED_ALPHABET: u64 = (1 << 31) - 1;

/// Rows with more distinct words than this switch from a linear list to a
/// hash map.
const FEW_WORDS: usize = 16;

type FxMap<K, V> = HashMap<K, V, FxBuildHasher>;

/// Solves `(1 + alpha) / (1 + alpha * |A|^d) = p^d` for `alpha`.
///
/// This is the smoothing under which a word seen exactly once after a context
/// that was seen exactly once gets probability `p^d`, i.e. probability `p`
/// per symbol.
pub fn solve_alpha(alphabet_size: usize, depth: usize, confidence: f64) -> Result<f64> {
    let no_solution = Error::NoSolution {
        alphabet_size,
        depth,
        confidence,
    };
    if !(confidence > 0.0 && confidence < 1.0) || depth == 0 {
        return Err(no_solution);
    }
    let target = confidence.powi(depth as i32);
    let extended = (alphabet_size as f64).powi(depth as i32);
    let denominator = target * extended - 1.0;
    if !(denominator > 0.0) {
        return Err(no_solution);
    }
    Ok((1.0 - target) / denominator)
}

/// How the smoothing parameter is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha {
    /// [`solve_alpha`] with [`DEFAULT_CONFIDENCE`].
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Alpha::Auto);
        }
        s.parse::<f64>()
            .map(Alpha::Fixed)
            .map_err(|_| Error::InvalidParams(format!("alpha must be a decimal or \"auto\", got {s:?}")))
    }
}

/// Resolved, validated model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    alphabet: Arc<Alphabet>,
    k: usize,
    d: usize,
    alpha: f64,
}

impl ModelParams {
    pub fn new(alphabet: Arc<Alphabet>, k: usize, d: usize, alpha: Alpha) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParams("context order k must be at least 1".into()));
        }
        if d == 0 {
            return Err(Error::InvalidParams("depth d must be at least 1".into()));
        }
        let size = alphabet.len() as u64;
        match size.checked_pow(d as u32) {
            Some(extended) if d <= u32::MAX as usize && extended < MAX_EXTENDED_ALPHABET => {}
            _ => {
                return Err(Error::InvalidParams(format!(
                    "|A|^d = {size}^{d} must stay below 2^31 - 1"
                )))
            }
        }
        let alpha = match alpha {
            Alpha::Auto => solve_alpha(alphabet.len(), d, DEFAULT_CONFIDENCE)?,
            Alpha::Fixed(a) => a,
        };
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
        }
        Ok(ModelParams { alphabet, k, d, alpha })
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `|A|^d`.
    pub fn extended_size(&self) -> u64 {
        (self.alphabet.len() as u64).pow(self.d as u32)
    }

    /// Whether contexts pack into a `u64` (`|A|^k <= 2^64 - 1`).
    fn packs_contexts(&self) -> bool {
        (self.alphabet.len() as u64).checked_pow(self.k as u32).is_some() && self.k <= u32::MAX as usize
    }
}

/// Base-|A| packing, first symbol most significant.
#[inline]
pub(crate) fn pack(symbols: impl IntoIterator<Item = u8>, base: u64) -> u64 {
    symbols.into_iter().fold(0, |code, s| code * base + s as u64)
}

#[derive(Clone, Debug)]
enum Words {
    Few(SmallVec<[(u32, u64); 1]>),
    Many(FxMap<u32, u64>),
}

#[derive(Clone, Debug)]
pub(crate) struct Row {
    total: u64,
    words: Words,
}

impl Row {
    fn new() -> Self {
        Row {
            total: 0,
            words: Words::Few(SmallVec::new()),
        }
    }

    fn add(&mut self, word: u32, n: u64) {
        self.total += n;
        match &mut self.words {
            Words::Few(list) => {
                if let Some(entry) = list.iter_mut().find(|(w, _)| *w == word) {
                    entry.1 += n;
                } else if list.len() < FEW_WORDS {
                    list.push((word, n));
                } else {
                    let mut map: FxMap<u32, u64> = list.iter().copied().collect();
                    map.insert(word, n);
                    self.words = Words::Many(map);
                }
            }
            Words::Many(map) => *map.entry(word).or_insert(0) += n,
        }
    }

    #[inline]
    pub(crate) fn total(&self) -> u64 {
        self.total
    }

    #[inline]
    pub(crate) fn count(&self, word: u32) -> u64 {
        match &self.words {
            Words::Few(list) => list
                .iter()
                .find(|(w, _)| *w == word)
                .map_or(0, |&(_, c)| c),
            Words::Many(map) => map.get(&word).copied().unwrap_or(0),
        }
    }

    fn len(&self) -> usize {
        match &self.words {
            Words::Few(list) => list.len(),
            Words::Many(map) => map.len(),
        }
    }

    fn iter(&self) -> Box<dyn Iterator<Item = (u32, u64)> + '_> {
        match &self.words {
            Words::Few(list) => Box::new(list.iter().copied()),
            Words::Many(map) => Box::new(map.iter().map(|(&w, &c)| (w, c))),
        }
    }

    fn heap_bytes(&self) -> usize {
        match &self.words {
            Words::Few(list) if list.spilled() => list.capacity() * size_of::<(u32, u64)>(),
            Words::Few(_) => 0,
            Words::Many(map) => map.capacity() * (size_of::<(u32, u64)>() + 1),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Table {
    Packed(FxMap<u64, Row>),
    Wide(FxMap<Box<[u8]>, Row>),
}

impl Table {
    fn len(&self) -> usize {
        match self {
            Table::Packed(map) => map.len(),
            Table::Wide(map) => map.len(),
        }
    }

    fn rows(&self) -> Box<dyn Iterator<Item = &Row> + '_> {
        match self {
            Table::Packed(map) => Box::new(map.values()),
            Table::Wide(map) => Box::new(map.values()),
        }
    }
}

/// Mutable count table under construction. Call [`ModelBuilder::freeze`] to
/// obtain a queryable [`XaModel`].
pub struct ModelBuilder {
    params: ModelParams,
    table: Table,
    trained_on: u64,
}

impl ModelBuilder {
    pub fn new(params: ModelParams) -> Self {
        let table = if params.packs_contexts() {
            Table::Packed(FxMap::default())
        } else {
            Table::Wide(FxMap::default())
        };
        ModelBuilder {
            params,
            table,
            trained_on: 0,
        }
    }

    /// Counts one `(context, word)` pair per position of `reference`, both
    /// read circularly.
    pub fn add_sequence(&mut self, reference: &SymbolSequence) -> Result<()> {
        check_alphabet(&self.params, reference)?;
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let data = reference.data();
        match &mut self.table {
            Table::Packed(map) => learn_packed(map, &self.params, data),
            Table::Wide(map) => learn_wide(map, &self.params, data),
        }
        self.trained_on += data.len() as u64;
        Ok(())
    }

    /// Adds `count` occurrences of `word` after `context`. Both are symbol
    /// indices; lengths must equal `k` and `d`.
    pub(crate) fn insert(&mut self, context: &[u8], word: &[u8], count: u64) -> Result<()> {
        check_lengths(&self.params, context, word)?;
        let base = self.params.alphabet.len() as u64;
        let word = pack(word.iter().copied(), base) as u32;
        match &mut self.table {
            Table::Packed(map) => map
                .entry(pack(context.iter().copied(), base))
                .or_insert_with(Row::new)
                .add(word, count),
            Table::Wide(map) => match map.get_mut(context) {
                Some(row) => row.add(word, count),
                None => {
                    let mut row = Row::new();
                    row.add(word, count);
                    map.insert(context.into(), row);
                }
            },
        }
        self.trained_on += count;
        Ok(())
    }

    pub(crate) fn trained_on(&self) -> u64 {
        self.trained_on
    }

    /// Ends learning. Fails if nothing was counted.
    pub fn freeze(self) -> Result<XaModel> {
        if self.trained_on == 0 {
            return Err(Error::EmptyReference);
        }
        let extended_size = self.params.extended_size() as f64;
        Ok(XaModel {
            params: self.params,
            table: self.table,
            trained_on: self.trained_on,
            extended_size,
        })
    }
}

fn learn_packed(map: &mut FxMap<u64, Row>, params: &ModelParams, data: &[u8]) {
    let n = data.len();
    let base = params.alphabet.len() as u64;
    let (k, d) = (params.k, params.d);
    // Weight of the leading symbol in a packed context / word.
    let ctx_lead = base.pow(k as u32 - 1);
    let word_lead = base.pow(d as u32 - 1);

    let mut window = Vec::with_capacity(k.max(d));
    extend_circular(data, -(k as i64), k, &mut window);
    let mut ctx = pack(window.iter().copied(), base);
    window.clear();
    extend_circular(data, 0, d, &mut window);
    let mut word = pack(window.iter().copied(), base);

    let mut ctx_tail = wrap(-(k as i64), n);
    let mut word_next = d % n;
    for (i, &symbol) in data.iter().enumerate() {
        map.entry(ctx).or_insert_with(Row::new).add(word as u32, 1);

        ctx = (ctx - data[ctx_tail] as u64 * ctx_lead) * base + symbol as u64;
        word = (word - data[i] as u64 * word_lead) * base + data[word_next] as u64;
        ctx_tail = if ctx_tail + 1 == n { 0 } else { ctx_tail + 1 };
        word_next = if word_next + 1 == n { 0 } else { word_next + 1 };
    }
}

fn learn_wide(map: &mut FxMap<Box<[u8]>, Row>, params: &ModelParams, data: &[u8]) {
    let base = params.alphabet.len() as u64;
    let (k, d) = (params.k, params.d);
    let mut ctx = Vec::with_capacity(k);
    let mut word = Vec::with_capacity(d);
    for i in 0..data.len() as i64 {
        ctx.clear();
        word.clear();
        extend_circular(data, i - k as i64, k, &mut ctx);
        extend_circular(data, i, d, &mut word);
        let code = pack(word.iter().copied(), base) as u32;
        match map.get_mut(ctx.as_slice()) {
            Some(row) => row.add(code, 1),
            None => {
                let mut row = Row::new();
                row.add(code, 1);
                map.insert(ctx.as_slice().into(), row);
            }
        }
    }
}

fn check_alphabet(params: &ModelParams, seq: &SymbolSequence) -> Result<()> {
    if **seq.alphabet() != *params.alphabet {
        return Err(Error::AlphabetMismatch {
            model: params.alphabet.to_string(),
            sequence: seq.alphabet().to_string(),
        });
    }
    Ok(())
}

fn check_lengths(params: &ModelParams, context: &[u8], word: &[u8]) -> Result<()> {
    if context.len() != params.k {
        return Err(Error::LengthMismatch {
            expected: params.k,
            found: context.len(),
        });
    }
    if word.len() != params.d {
        return Err(Error::LengthMismatch {
            expected: params.d,
            found: word.len(),
        });
    }
    let size = params.alphabet.len();
    if let Some(&bad) = context.iter().chain(word).find(|&&s| s as usize >= size) {
        return Err(Error::InvalidParams(format!(
            "symbol index {bad} exceeds alphabet size {size}"
        )));
    }
    Ok(())
}

/// Learns a frozen model from a single circular reference.
pub fn learn(reference: &SymbolSequence, params: ModelParams) -> Result<XaModel> {
    let mut builder = ModelBuilder::new(params);
    builder.add_sequence(reference)?;
    builder.freeze()
}

/// A frozen order-`k`, depth-`d` count model. Immutable and `Sync`.
#[derive(Clone)]
pub struct XaModel {
    params: ModelParams,
    table: Table,
    trained_on: u64,
    extended_size: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelStats {
    pub context_count: usize,
    pub entry_count: usize,
    pub trained_on: u64,
    /// Approximate in-memory size of the count structure.
    pub estimated_bytes: usize,
}

/// One stored count, as symbol indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Entry {
    pub context: Vec<u8>,
    pub word: Vec<u8>,
    pub count: u64,
}

impl XaModel {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.params.alphabet
    }

    pub fn trained_on(&self) -> u64 {
        self.trained_on
    }

    pub(crate) fn table(&self) -> &Table {
        &self.table
    }

    /// Smoothed estimate from raw counts.
    #[inline]
    pub(crate) fn estimate(&self, word_count: u64, context_total: u64) -> f64 {
        let alpha = self.params.alpha;
        (word_count as f64 + alpha) / (context_total as f64 + alpha * self.extended_size)
    }

    /// `v(w|c)` and `v(c)`, zero when absent.
    pub fn counts(&self, context: &[u8], word: &[u8]) -> Result<(u64, u64)> {
        check_lengths(&self.params, context, word)?;
        let base = self.params.alphabet.len() as u64;
        let word = pack(word.iter().copied(), base) as u32;
        let row = match &self.table {
            Table::Packed(map) => map.get(&pack(context.iter().copied(), base)),
            Table::Wide(map) => map.get(context),
        };
        Ok(row.map_or((0, 0), |r| (r.count(word), r.total())))
    }

    /// `P(word | context)` for symbol-index slices of length `k` and `d`.
    pub fn probability(&self, context: &[u8], word: &[u8]) -> Result<f64> {
        let (word_count, total) = self.counts(context, word)?;
        Ok(self.estimate(word_count, total))
    }

    /// Like [`XaModel::probability`] but with symbol text, e.g. `("CC", "A")`.
    pub fn probability_of(&self, context: &str, word: &str) -> Result<f64> {
        let context = self.indices(context)?;
        let word = self.indices(word)?;
        self.probability(&context, &word)
    }

    fn indices(&self, text: &str) -> Result<Vec<u8>> {
        text.bytes()
            .enumerate()
            .map(|(position, byte)| {
                self.params
                    .alphabet
                    .index_of(byte)
                    .ok_or(Error::UnknownSymbol { position, byte })
            })
            .collect()
    }

    pub fn stats(&self) -> ModelStats {
        let entry_count = self.table.rows().map(Row::len).sum();
        let row_heap: usize = self.table.rows().map(Row::heap_bytes).sum();
        let table_bytes = match &self.table {
            Table::Packed(map) => map.capacity() * (size_of::<(u64, Row)>() + 1),
            Table::Wide(map) => {
                map.capacity() * (size_of::<(Box<[u8]>, Row)>() + 1) + map.len() * self.params.k
            }
        };
        ModelStats {
            context_count: self.table.len(),
            entry_count,
            trained_on: self.trained_on,
            estimated_bytes: size_of::<Self>() + table_bytes + row_heap,
        }
    }

    /// Every stored context, as symbol indices, in index order.
    pub fn contexts(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = match &self.table {
            Table::Packed(map) => map.keys().map(|&c| self.unpack(c, self.params.k)).collect(),
            Table::Wide(map) => map.keys().map(|c| c.to_vec()).collect(),
        };
        out.sort_unstable();
        out
    }

    /// Every stored count, sorted by context then word (index order).
    pub fn entries(&self) -> Vec<Entry> {
        let mut out = Vec::new();
        let d = self.params.d;
        let mut push = |context: Vec<u8>, row: &Row| {
            for (word, count) in row.iter() {
                out.push(Entry {
                    context: context.clone(),
                    word: self.unpack(word as u64, d),
                    count,
                });
            }
        };
        match &self.table {
            Table::Packed(map) => {
                for (&c, row) in map {
                    push(self.unpack(c, self.params.k), row);
                }
            }
            Table::Wide(map) => {
                for (c, row) in map {
                    push(c.to_vec(), row);
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn unpack(&self, mut code: u64, len: usize) -> Vec<u8> {
        let base = self.params.alphabet.len() as u64;
        let mut out = vec![0u8; len];
        for slot in out.iter_mut().rev() {
            *slot = (code % base) as u8;
            code /= base;
        }
        out
    }
}

impl PartialEq for XaModel {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
            && self.trained_on == other.trained_on
            && self.table.len() == other.table.len()
            && self.entries() == other.entries()
    }
}

impl fmt::Debug for XaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stats = self.stats();
        f.debug_struct("XaModel")
            .field("params", &self.params)
            .field("trained_on", &self.trained_on)
            .field("contexts", &stats.context_count)
            .field("entries", &stats.entry_count)
            .finish()
    }
}
