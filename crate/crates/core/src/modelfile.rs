//! Versioned text serialization for [`XaModel`].
//!
//! ```text
//! xafcm 1 <alphabet> <k> <d> <alpha> <trained_on>
//! <context>\t<word>\t<count>
//! ...
//! ```
//!
//! Entries are sorted by context then word (byte order of the rendered
//! symbols), so a model always serializes to the same bytes. On load the
//! per-context totals are rebuilt from the entries and their sum must equal
//! `trained_on`.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::model::{Alpha, ModelBuilder, ModelParams, XaModel};

const MAGIC: &str = "xafcm";
const VERSION: &str = "1";

pub fn save_model<W: Write>(model: &XaModel, mut sink: W) -> Result<()> {
    let params = model.params();
    let alphabet = params.alphabet();
    writeln!(
        sink,
        "{MAGIC} {VERSION} {alphabet} {} {} {} {}",
        params.k(),
        params.d(),
        params.alpha(),
        model.trained_on()
    )?;
    let mut lines: Vec<(String, String, u64)> = model
        .entries()
        .into_iter()
        .map(|e| (alphabet.render(&e.context), alphabet.render(&e.word), e.count))
        .collect();
    lines.sort_unstable();
    for (context, word, count) in lines {
        writeln!(sink, "{context}\t{word}\t{count}")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn load_model<R: BufRead>(source: R) -> Result<XaModel> {
    let mut lines = source.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(format_error(1, "missing header")),
    };
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.first() != Some(&MAGIC) {
        return Err(format_error(1, "not an xafcm model file"));
    }
    match fields.get(1) {
        Some(&VERSION) => {}
        Some(other) => return Err(Error::VersionMismatch(other.to_string())),
        None => return Err(format_error(1, "missing version")),
    }
    let [_, _, symbols, k, d, alpha, trained_on] = fields[..] else {
        return Err(format_error(1, "header needs 7 fields"));
    };
    let alphabet = Arc::new(
        Alphabet::new(symbols.as_bytes()).map_err(|e| format_error(1, &e.to_string()))?,
    );
    let k: usize = parse_field(k, "k")?;
    let d: usize = parse_field(d, "d")?;
    let alpha: f64 = parse_field(alpha, "alpha")?;
    let trained_on: u64 = parse_field(trained_on, "trained_on")?;
    let params = ModelParams::new(Arc::clone(&alphabet), k, d, Alpha::Fixed(alpha))
        .map_err(|e| format_error(1, &e.to_string()))?;

    let mut builder = ModelBuilder::new(params);
    let mut seen = HashSet::new();
    let mut line_no = 1;
    for line in lines {
        line_no += 1;
        let line = line?;
        let mut parts = line.split('\t');
        let (Some(context), Some(word), Some(count), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(format_error(line_no, "expected <context>\\t<word>\\t<count>"));
        };
        let context = to_indices(&alphabet, context, k, line_no, "context")?;
        let word = to_indices(&alphabet, word, d, line_no, "word")?;
        let count: u64 = count
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| format_error(line_no, "count must be a positive integer"))?;
        if !seen.insert((context.clone(), word.clone())) {
            return Err(format_error(line_no, "duplicate entry"));
        }
        builder
            .insert(&context, &word, count)
            .map_err(|e| format_error(line_no, &e.to_string()))?;
    }
    if builder.trained_on() != trained_on {
        return Err(format_error(
            line_no + 1,
            &format!(
                "entry counts sum to {} but header records {trained_on} positions",
                builder.trained_on()
            ),
        ));
    }
    builder.freeze().map_err(|e| format_error(line_no + 1, &e.to_string()))
}

fn format_error(line: usize, message: &str) -> Error {
    Error::Format {
        line,
        message: message.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(text: &str, name: &str) -> Result<T> {
    text.parse()
        .map_err(|_| format_error(1, &format!("bad {name} field {text:?}")))
}

fn to_indices(alphabet: &Alphabet, text: &str, len: usize, line: usize, what: &str) -> Result<Vec<u8>> {
    if text.len() != len {
        return Err(format_error(
            line,
            &format!("{what} {text:?} should have {len} symbols"),
        ));
    }
    text.bytes()
        .map(|b| {
            alphabet
                .index_of(b)
                .ok_or_else(|| format_error(line, &format!("symbol {:?} not in alphabet", char::from(b))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::learn;
    use crate::sequence::SymbolSequence;
    use proptest::prelude::*;

    fn table1() -> XaModel {
        let abc = Arc::new(Alphabet::new(b"ABC").unwrap());
        let seq = SymbolSequence::from_symbols(Arc::clone(&abc), b"AAABCC").unwrap();
        learn(&seq, ModelParams::new(abc, 2, 1, Alpha::Fixed(0.01)).unwrap()).unwrap()
    }

    fn to_string(model: &XaModel) -> String {
        let mut out = Vec::new();
        save_model(model, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn table1_file() {
        let text = to_string(&table1());
        assert_eq!(
            text,
            "xafcm 1 ABC 2 1 0.01 6\n\
             AA\tA\t1\nAA\tB\t1\nAB\tC\t1\nBC\tC\t1\nCA\tA\t1\nCC\tA\t1\n"
        );
        let back = load_model(text.as_bytes()).unwrap();
        assert_eq!(back, table1());
        assert_eq!(to_string(&back), text);
    }

    #[test]
    fn rejects_malformed_files() {
        let good = to_string(&table1());
        let truncated = &good[..good.len() - 9];
        assert!(matches!(load_model(truncated.as_bytes()), Err(Error::Format { .. })));
        assert!(matches!(load_model(&b""[..]), Err(Error::Format { line: 1, .. })));
        assert!(matches!(
            load_model(&b"xafcm 2 ABC 2 1 0.01 6\n"[..]),
            Err(Error::VersionMismatch(v)) if v == "2"
        ));
        assert!(matches!(load_model(&b"model 1 ABC 2 1 0.01 6\n"[..]), Err(Error::Format { .. })));

        // Counts no longer add up to the recorded number of positions.
        let inflated = good.replace("CC\tA\t1", "CC\tA\t2");
        assert!(matches!(load_model(inflated.as_bytes()), Err(Error::Format { line: 8, .. })));

        let bad_symbol = good.replace("CC\tA\t1", "CD\tA\t1");
        assert!(matches!(load_model(bad_symbol.as_bytes()), Err(Error::Format { line: 7, .. })));

        let bad_len = good.replace("CC\tA\t1", "CCC\tA\t1");
        assert!(matches!(load_model(bad_len.as_bytes()), Err(Error::Format { line: 7, .. })));

        let zero = good.replace("CC\tA\t1", "CC\tA\t0");
        assert!(matches!(load_model(zero.as_bytes()), Err(Error::Format { line: 7, .. })));

        let dup = good.replace("CC\tA\t1", "AA\tA\t1");
        assert!(matches!(load_model(dup.as_bytes()), Err(Error::Format { line: 7, .. })));
    }

    proptest! {
        #[test]
        fn round_trip(data in proptest::collection::vec(0u8..4, 1..200), k in 1usize..5, d in 1usize..4, alpha in 1e-6f64..10.0) {
            let dna = Arc::new(Alphabet::dna());
            let seq = SymbolSequence::new(Arc::clone(&dna), data).unwrap();
            let m = learn(&seq, ModelParams::new(dna, k, d, Alpha::Fixed(alpha)).unwrap()).unwrap();
            let text = to_string(&m);
            let back = load_model(text.as_bytes()).unwrap();
            prop_assert_eq!(back.params().alpha().to_bits(), alpha.to_bits());
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(to_string(&back), text);
        }
    }
}
