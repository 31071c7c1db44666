//! Relative compression `C(x||y)` and the normalized relative compression.
//!
//! A target of length `m` is cut into `ceil(m / d)` blocks of `d` symbols.
//! Each block costs `-log2 P(block | context)` bits, where the context is the
//! `k` symbols before it, taken circularly from the target itself. The model
//! is never updated, so the cost measures how well the reference alone
//! explains the target. A final partial block is completed by wraparound and
//! its cost scaled by the fraction of it that belongs to the target.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{pack, Table, XaModel};
use crate::sequence::SymbolSequence;

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionResult {
    /// `C(x||y)` in bits.
    pub total_bits: f64,
    /// Cost of each `d`-block, in target order.
    pub block_bits: Vec<f64>,
    /// Number of model lookups performed.
    pub query_count: u64,
    pub target_length: usize,
}

impl CompressionResult {
    /// `total_bits / (m * log2 |A|)`.
    pub fn nrc(&self, alphabet_size: usize) -> NrcValue {
        NrcValue(normalize(self.total_bits, self.target_length, alphabet_size))
    }
}

fn normalize(bits: f64, length: usize, alphabet_size: usize) -> f64 {
    bits / (length as f64 * (alphabet_size as f64).log2())
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NrcValue(pub f64);

impl NrcValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for NrcValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Bits needed for `target` under `model`, with the per-block series.
pub fn compress_bits(target: &SymbolSequence, model: &XaModel) -> Result<CompressionResult> {
    let mut block_bits = Vec::with_capacity(target.len().div_ceil(model.params().d()));
    let (total_bits, query_count) = scan(target, model, |bits| block_bits.push(bits))?;
    Ok(CompressionResult {
        total_bits,
        block_bits,
        query_count,
        target_length: target.len(),
    })
}

/// [`compress_bits`] without keeping the per-block series.
pub fn compress_total(target: &SymbolSequence, model: &XaModel) -> Result<(f64, u64)> {
    scan(target, model, |_| {})
}

pub fn nrc(target: &SymbolSequence, model: &XaModel) -> Result<NrcValue> {
    let (bits, _) = compress_total(target, model)?;
    Ok(NrcValue(normalize(bits, target.len(), model.alphabet().len())))
}

fn scan(target: &SymbolSequence, model: &XaModel, mut sink: impl FnMut(f64)) -> Result<(f64, u64)> {
    if **target.alphabet() != **model.alphabet() {
        return Err(Error::AlphabetMismatch {
            model: model.alphabet().to_string(),
            sequence: target.alphabet().to_string(),
        });
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let params = model.params();
    let (k, d) = (params.k(), params.d());
    let base = model.alphabet().len() as u64;
    let data = target.data();
    let m = data.len();
    let blocks = m.div_ceil(d);
    let remainder = m % d;
    let circular = |start: i64, len: usize| {
        (start..start + len as i64).map(move |j| data[j.rem_euclid(m as i64) as usize])
    };

    let mut total = CompensatedSum::default();
    let mut scratch = Vec::with_capacity(k);
    let mut queries = 0u64;
    for block in 0..blocks {
        let start = block * d;
        let word = if start + d <= m {
            pack(data[start..start + d].iter().copied(), base)
        } else {
            pack(circular(start as i64, d), base)
        } as u32;
        queries += 1;
        let counts = match model.table() {
            Table::Packed(map) => {
                let ctx = if start >= k {
                    pack(data[start - k..start].iter().copied(), base)
                } else {
                    pack(circular(start as i64 - k as i64, k), base)
                };
                map.get(&ctx).map(|row| (row.count(word), row.total()))
            }
            Table::Wide(map) => {
                let row = if start >= k {
                    map.get(&data[start - k..start])
                } else {
                    scratch.clear();
                    scratch.extend(circular(start as i64 - k as i64, k));
                    map.get(scratch.as_slice())
                };
                row.map(|row| (row.count(word), row.total()))
            }
        };
        let (word_count, context_total) = counts.unwrap_or((0, 0));
        let mut bits = -model.estimate(word_count, context_total).log2();
        if block + 1 == blocks && remainder != 0 {
            bits *= remainder as f64 / d as f64;
        }
        total.add(bits);
        sink(bits);
    }
    Ok((total.value(), queries))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    /// Target position of the block's first symbol.
    pub position: usize,
    pub bits_per_symbol: f64,
}

/// Per-block information content in bits per symbol, smoothed with a centered
/// moving average `window` blocks wide.
///
/// Blocks are treated circularly, like the target itself, so every point
/// averages exactly `min(window, blocks)` blocks. Averages are weighted by the
/// number of target symbols in each block.
pub fn information_profile(
    target: &SymbolSequence,
    model: &XaModel,
    window: usize,
) -> Result<Vec<ProfilePoint>> {
    if window == 0 {
        return Err(Error::InvalidParams("profile window must be at least 1 block".into()));
    }
    let result = compress_bits(target, model)?;
    let d = model.params().d();
    let m = target.len();
    let blocks = result.block_bits.len();
    let width = window.min(blocks);
    let left = (width - 1) / 2;

    let symbols_in = |b: usize| if (b + 1) * d <= m { d } else { m - b * d };
    let mut bit_prefix = Vec::with_capacity(blocks + 1);
    let mut symbol_prefix = Vec::with_capacity(blocks + 1);
    let mut acc = CompensatedSum::default();
    let mut symbols = 0usize;
    bit_prefix.push(0.0);
    symbol_prefix.push(0usize);
    for (b, &bits) in result.block_bits.iter().enumerate() {
        acc.add(bits);
        symbols += symbols_in(b);
        bit_prefix.push(acc.value());
        symbol_prefix.push(symbols);
    }
    // Sum over the circular block range [start, start + width).
    let range_sum = |start: usize| -> (f64, usize) {
        let end = start + width;
        if end <= blocks {
            (
                bit_prefix[end] - bit_prefix[start],
                symbol_prefix[end] - symbol_prefix[start],
            )
        } else {
            let wrap = end - blocks;
            (
                bit_prefix[blocks] - bit_prefix[start] + bit_prefix[wrap],
                symbol_prefix[blocks] - symbol_prefix[start] + symbol_prefix[wrap],
            )
        }
    };

    Ok((0..blocks)
        .map(|b| {
            let start = (b + blocks - left % blocks) % blocks;
            let (bits, symbols) = range_sum(start);
            ProfilePoint {
                position: b * d,
                bits_per_symbol: bits / symbols as f64,
            }
        })
        .collect())
}

/// `position<TAB>bits_per_symbol`, one row per block.
pub fn write_profile_tsv<W: Write>(points: &[ProfilePoint], mut sink: W) -> Result<()> {
    for p in points {
        writeln!(sink, "{}\t{:.6}", p.position, p.bits_per_symbol)?;
    }
    sink.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::model::{learn, Alpha, ModelParams};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn abc() -> Arc<Alphabet> {
        Arc::new(Alphabet::new(b"ABC").unwrap())
    }

    fn aaabcc() -> SymbolSequence {
        SymbolSequence::from_symbols(abc(), b"AAABCC").unwrap()
    }

    fn self_model(d: usize) -> XaModel {
        learn(&aaabcc(), ModelParams::new(abc(), 2, d, Alpha::Fixed(0.01)).unwrap()).unwrap()
    }

    #[test]
    fn worked_example_depth_one() {
        let r = compress_bits(&aaabcc(), &self_model(1)).unwrap();
        assert!((r.total_bits - 2.1272).abs() < 5e-4, "{}", r.total_bits);
        assert_eq!(r.query_count, 6);
        let v = nrc(&aaabcc(), &self_model(1)).unwrap().value();
        assert!((v - 0.2237).abs() < 5e-4, "{v}");
    }

    #[test]
    fn worked_example_depth_two() {
        let r = compress_bits(&aaabcc(), &self_model(2)).unwrap();
        let expected = [0.110, 1.049, 0.110];
        for (got, want) in r.block_bits.iter().zip(expected) {
            assert!((got - want).abs() < 5e-4, "{got} vs {want}");
        }
        assert!((r.total_bits - 1.269).abs() < 5e-4);
        assert_eq!(r.query_count, 3);
        let v = r.nrc(3).value();
        assert!((v - 0.1334).abs() < 5e-4, "{v}");
    }

    #[test]
    fn uninformative_model_costs_log_alphabet() {
        // Reference "AAAA" only ever sees context "AA"; the target never does.
        let reference = SymbolSequence::from_symbols(abc(), b"AAAA").unwrap();
        let target = SymbolSequence::from_symbols(abc(), b"BCBCBCB").unwrap();
        for d in 1..=3 {
            let m = learn(&reference, ModelParams::new(abc(), 2, d, Alpha::Fixed(0.3)).unwrap()).unwrap();
            let r = compress_bits(&target, &m).unwrap();
            let expected = 7.0 * 3f64.log2();
            assert!((r.total_bits - expected).abs() < 1e-12, "d={d}");
            assert_eq!(r.query_count, 7u64.div_ceil(d as u64));
            assert!((nrc(&target, &m).unwrap().value() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let empty = SymbolSequence::new(abc(), vec![]).unwrap();
        assert!(matches!(compress_bits(&empty, &self_model(1)), Err(Error::EmptyTarget)));
        let dna = SymbolSequence::from_symbols(Arc::new(Alphabet::dna()), b"ACGT").unwrap();
        assert!(matches!(nrc(&dna, &self_model(1)), Err(Error::AlphabetMismatch { .. })));
        assert!(information_profile(&aaabcc(), &self_model(1), 0).is_err());
    }

    #[test]
    fn profile_examples() {
        let m = self_model(2);
        let p = information_profile(&aaabcc(), &m, 1).unwrap();
        let positions: Vec<usize> = p.iter().map(|x| x.position).collect();
        assert_eq!(positions, [0, 2, 4]);
        for (got, want) in p.iter().zip([0.055, 0.5245, 0.055]) {
            assert!((got.bits_per_symbol - want).abs() < 5e-4);
        }
        let total = compress_bits(&aaabcc(), &m).unwrap().total_bits;
        for w in [3, 4, 100] {
            for point in information_profile(&aaabcc(), &m, w).unwrap() {
                assert!((point.bits_per_symbol - total / 6.0).abs() < 1e-12);
                assert!((point.bits_per_symbol - 0.2115).abs() < 5e-4);
            }
        }
    }

    #[test]
    fn profile_moving_average_oracle() {
        let dna = Arc::new(Alphabet::dna());
        let reference = SymbolSequence::from_symbols(Arc::clone(&dna), b"ACGTTGCAACGGTACCATGA").unwrap();
        let target = SymbolSequence::from_symbols(Arc::clone(&dna), b"ACGTTGCATTTGACCAGG").unwrap();
        let m = learn(&reference, ModelParams::new(dna, 2, 3, Alpha::Fixed(0.1)).unwrap()).unwrap();
        let bits = compress_bits(&target, &m).unwrap().block_bits;
        let blocks = bits.len();
        for window in 1..=blocks {
            let got = information_profile(&target, &m, window).unwrap();
            for (b, point) in got.iter().enumerate() {
                let left = (window - 1) / 2;
                let mean: f64 = (0..window)
                    .map(|j| bits[(b + blocks * 2 + j - left) % blocks] / 3.0)
                    .sum::<f64>()
                    / window as f64;
                assert!((point.bits_per_symbol - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn profile_full_window_with_partial_block() {
        let dna = Arc::new(Alphabet::dna());
        let seq = SymbolSequence::from_symbols(Arc::clone(&dna), b"ACGTTGCAACGGTACCATGAT").unwrap();
        let m = learn(&seq, ModelParams::new(dna, 3, 4, Alpha::Auto).unwrap()).unwrap();
        let r = compress_bits(&seq, &m).unwrap();
        for point in information_profile(&seq, &m, r.block_bits.len()).unwrap() {
            assert!((point.bits_per_symbol - r.total_bits / 21.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_tsv() {
        let mut out = Vec::new();
        let p = information_profile(&aaabcc(), &self_model(2), 1).unwrap();
        write_profile_tsv(&p, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let rows: Vec<(usize, f64)> = text
            .lines()
            .map(|l| {
                let (pos, bits) = l.split_once('\t').unwrap();
                (pos.parse().unwrap(), bits.parse().unwrap())
            })
            .collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].0, 2);
        assert!((rows[0].1 - 0.055).abs() < 5e-4);
    }

    #[test]
    fn compensated_sum() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    /// Plain order-k model compressor: counts symbol-after-context with a
    /// string-keyed map and scans the target one symbol at a time.
    fn fcm_oracle(reference: &[u8], target: &[u8], size: usize, k: usize, alpha: f64) -> f64 {
        use std::collections::HashMap;
        let ctx_of = |s: &[u8], i: usize| -> Vec<u8> {
            let n = s.len();
            (0..k).map(|j| s[(i + n * k - k + j) % n]).collect()
        };
        let mut counts: HashMap<Vec<u8>, Vec<u64>> = HashMap::new();
        for i in 0..reference.len() {
            counts.entry(ctx_of(reference, i)).or_insert_with(|| vec![0; size])[reference[i] as usize] += 1;
        }
        let mut bits = 0.0;
        for i in 0..target.len() {
            let (hit, total) = match counts.get(&ctx_of(target, i)) {
                Some(row) => (row[target[i] as usize], row.iter().sum::<u64>()),
                None => (0, 0),
            };
            bits -= ((hit as f64 + alpha) / (total as f64 + alpha * size as f64)).log2();
        }
        bits
    }

    fn arb_pair() -> impl Strategy<Value = (usize, Vec<u8>, Vec<u8>, usize)> {
        (prop_oneof![Just(2usize), Just(4), Just(6)], 1usize..=200, 1usize..=200, 1usize..=6).prop_flat_map(
            |(size, n, m, k)| {
                (
                    Just(size),
                    proptest::collection::vec(0..size as u8, n),
                    proptest::collection::vec(0..size as u8, m),
                    Just(k),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn depth_one_matches_fcm_oracle((size, reference, target, k) in arb_pair(), alpha in 1e-3f64..2.0) {
            let a = Arc::new(Alphabet::letters(size).unwrap());
            let r = SymbolSequence::new(Arc::clone(&a), reference.clone()).unwrap();
            let t = SymbolSequence::new(Arc::clone(&a), target.clone()).unwrap();
            let m = learn(&r, ModelParams::new(a, k, 1, Alpha::Fixed(alpha)).unwrap()).unwrap();
            let got = compress_bits(&t, &m).unwrap();
            let want = fcm_oracle(&reference, &target, size, k, alpha);
            prop_assert!((got.total_bits - want).abs() < 1e-9, "{} vs {}", got.total_bits, want);
        }

        #[test]
        fn block_invariants((size, reference, target, k) in arb_pair(), d in 1usize..=5) {
            let a = Arc::new(Alphabet::letters(size).unwrap());
            let r = SymbolSequence::new(Arc::clone(&a), reference).unwrap();
            let t = SymbolSequence::new(Arc::clone(&a), target.clone()).unwrap();
            let m = learn(&r, ModelParams::new(a, k, d, Alpha::Auto).unwrap()).unwrap();
            let got = compress_bits(&t, &m).unwrap();
            prop_assert_eq!(got.query_count, target.len().div_ceil(d) as u64);
            prop_assert_eq!(got.block_bits.len() as u64, got.query_count);
            prop_assert!(got.block_bits.iter().all(|&b| b >= 0.0));
            let sum: f64 = got.block_bits.iter().sum();
            prop_assert!((sum - got.total_bits).abs() < 1e-9);
            prop_assert!(got.nrc(size).value() >= 0.0);
        }

        #[test]
        fn block_shift_symmetry((size, reference, target, k) in arb_pair(), d in 1usize..=4, j in -5i64..5) {
            let a = Arc::new(Alphabet::letters(size).unwrap());
            let usable = target.len() - target.len() % d;
            prop_assume!(usable > 0);
            let r = SymbolSequence::new(Arc::clone(&a), reference).unwrap();
            let t = SymbolSequence::new(Arc::clone(&a), target[..usable].to_vec()).unwrap();
            let m = learn(&r, ModelParams::new(a, k, d, Alpha::Fixed(0.05)).unwrap()).unwrap();
            let base = compress_bits(&t, &m).unwrap().total_bits;
            let shifted = compress_bits(&t.rotated(j * d as i64), &m).unwrap().total_bits;
            prop_assert!((base - shifted).abs() < 1e-9);
        }

        #[test]
        fn self_reference_beats_uniform((size, _r, target, k) in arb_pair(), alpha in 1e-3f64..5.0) {
            // Holds for every input at d = 1: the smoothed estimate mixes the
            // empirical distribution with the uniform one.
            let a = Arc::new(Alphabet::letters(size).unwrap());
            let t = SymbolSequence::new(Arc::clone(&a), target).unwrap();
            let m = learn(&t, ModelParams::new(a, k, 1, Alpha::Fixed(alpha)).unwrap()).unwrap();
            let v = nrc(&t, &m).unwrap().value();
            prop_assert!(v <= 1.0 + 1e-12, "nrc {}", v);
        }
    }

    #[test]
    fn self_reference_beats_uniform_on_random_targets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for size in [2usize, 4, 6] {
            let a = Arc::new(Alphabet::letters(size).unwrap());
            for _ in 0..50 {
                let n = rng.random_range(50..400);
                let data: Vec<u8> = (0..n).map(|_| rng.random_range(0..size as u8)).collect();
                let t = SymbolSequence::new(Arc::clone(&a), data).unwrap();
                // At d > 1 blocks sample only every d-th position, so with
                // heavily shared contexts the sampled words can be the rare
                // ones. The bound is checked where contexts are sparse.
                for k in (1..=8).filter(|&k| size.pow(k as u32) >= n) {
                    for d in 2..=4 {
                        let Ok(params) = ModelParams::new(Arc::clone(&a), k, d, Alpha::Auto) else {
                            continue;
                        };
                        let v = nrc(&t, &learn(&t, params).unwrap()).unwrap().value();
                        assert!(v <= 1.0, "|A|={size} n={n} k={k} d={d} nrc={v}");
                    }
                }
            }
        }
    }
}
