//! All-pairs NRC between labelled references and labelled targets.
//!
//! Each reference is learned (or loaded from the model cache) exactly once;
//! its row of targets is then compressed in parallel. Completed cells can be
//! appended to a journal so an interrupted run resumes without recomputing
//! them.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classify::check_label;
use crate::error::{Error, Result};
use crate::model::{learn, ModelParams, XaModel};
use crate::modelfile::{load_model, save_model};
use crate::nrc::nrc;
use crate::sequence::SymbolSequence;

/// `(reference, target, nrc)` as recorded in a journal.
pub type JournalCell = (String, String, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub references: Vec<String>,
    pub targets: Vec<String>,
    /// `values[reference][target]`.
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, reference: &str, target: &str) -> Option<f64> {
        let r = self.references.iter().position(|l| l == reference)?;
        let t = self.targets.iter().position(|l| l == target)?;
        Some(self.values[r][t])
    }

    /// Index of the reference with the lowest NRC for each target; exact
    /// ties go to the first reference.
    pub fn best_references(&self) -> Vec<usize> {
        (0..self.targets.len())
            .map(|t| {
                (1..self.references.len()).fold(0, |best, r| {
                    if self.values[r][t] < self.values[best][t] {
                        r
                    } else {
                        best
                    }
                })
            })
            .collect()
    }

    /// Header `reference,<target>...`, then one row per reference.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        write!(sink, "reference")?;
        for t in &self.targets {
            write!(sink, ",{t}")?;
        }
        writeln!(sink)?;
        for (label, row) in self.references.iter().zip(&self.values) {
            write!(sink, "{label}")?;
            for v in row {
                write!(sink, ",{v:.6}")?;
            }
            writeln!(sink)?;
        }
        sink.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct MatrixOptions {
    /// Directory of saved models keyed by reference content and parameters.
    pub cache_dir: Option<PathBuf>,
    /// Append-only record of finished cells.
    pub journal: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub models_learned: usize,
    pub models_loaded: usize,
    pub cells_computed: usize,
    pub cells_resumed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRun {
    pub matrix: SimilarityMatrix,
    pub stats: RunStats,
}

pub fn pairwise_nrc(
    references: &[(String, SymbolSequence)],
    targets: &[(String, SymbolSequence)],
    params: &ModelParams,
) -> Result<SimilarityMatrix> {
    pairwise_nrc_with(references, targets, params, &MatrixOptions::default()).map(|run| run.matrix)
}

pub fn pairwise_nrc_with(
    references: &[(String, SymbolSequence)],
    targets: &[(String, SymbolSequence)],
    params: &ModelParams,
    options: &MatrixOptions,
) -> Result<MatrixRun> {
    if references.is_empty() {
        return Err(Error::EmptyList("references"));
    }
    if targets.is_empty() {
        return Err(Error::EmptyList("targets"));
    }
    check_labels(references)?;
    check_labels(targets)?;

    let mut stats = RunStats::default();
    let mut values = vec![vec![f64::NAN; targets.len()]; references.len()];
    let mut done = vec![vec![false; targets.len()]; references.len()];

    let mut journal = match &options.journal {
        Some(path) => {
            let (journal, resumed) = Journal::open(path, params)?;
            let r_index = index(references);
            let t_index = index(targets);
            for (r, t, v) in resumed {
                if let (Some(&ri), Some(&ti)) = (r_index.get(r.as_str()), t_index.get(t.as_str())) {
                    if !done[ri][ti] {
                        values[ri][ti] = v;
                        done[ri][ti] = true;
                        stats.cells_resumed += 1;
                    }
                }
            }
            Some(journal)
        }
        None => None,
    };

    for (ri, (r_label, reference)) in references.iter().enumerate() {
        let pending: Vec<usize> = (0..targets.len()).filter(|&t| !done[ri][t]).collect();
        if pending.is_empty() {
            continue;
        }
        let model = obtain_model(reference, params, options.cache_dir.as_deref(), &mut stats).map_err(|e| {
            Error::Reference {
                label: r_label.clone(),
                source: Box::new(e),
            }
        })?;
        let row = pending
            .par_iter()
            .map(|&ti| {
                let (t_label, target) = &targets[ti];
                nrc(target, &model).map(|v| v.value()).map_err(|e| Error::Cell {
                    reference: r_label.clone(),
                    target: t_label.clone(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (&ti, v) in pending.iter().zip(row) {
            values[ri][ti] = v;
            done[ri][ti] = true;
            stats.cells_computed += 1;
            if let Some(j) = journal.as_mut() {
                j.record(r_label, &targets[ti].0, v)?;
            }
        }
        if let Some(j) = journal.as_mut() {
            j.flush()?;
        }
    }

    Ok(MatrixRun {
        matrix: SimilarityMatrix {
            references: references.iter().map(|(l, _)| l.clone()).collect(),
            targets: targets.iter().map(|(l, _)| l.clone()).collect(),
            values,
        },
        stats,
    })
}

fn check_labels(list: &[(String, SymbolSequence)]) -> Result<()> {
    let mut seen = HashSet::new();
    for (label, _) in list {
        check_label(label)?;
        if !seen.insert(label.as_str()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
    }
    Ok(())
}

fn index(list: &[(String, SymbolSequence)]) -> HashMap<&str, usize> {
    list.iter().enumerate().map(|(i, (l, _))| (l.as_str(), i)).collect()
}

/// Cache file name: content digest of the reference plus the parameters.
pub fn cache_key(reference: &SymbolSequence, params: &ModelParams) -> String {
    let mut hasher = Sha256::new();
    hasher.update(reference.alphabet().symbols());
    hasher.update([0u8]);
    hasher.update(reference.data());
    format!(
        "{}-k{}-d{}-a{:016x}.xaf",
        hex::encode(hasher.finalize()),
        params.k(),
        params.d(),
        params.alpha().to_bits()
    )
}

fn obtain_model(
    reference: &SymbolSequence,
    params: &ModelParams,
    cache_dir: Option<&Path>,
    stats: &mut RunStats,
) -> Result<XaModel> {
    let Some(dir) = cache_dir else {
        stats.models_learned += 1;
        return learn(reference, params.clone());
    };
    let path = dir.join(cache_key(reference, params));
    if let Ok(file) = File::open(&path) {
        // An unreadable or stale entry is relearned and overwritten.
        if let Ok(model) = load_model(BufReader::new(file)) {
            if model.params() == params {
                stats.models_loaded += 1;
                return Ok(model);
            }
        }
    }
    let model = learn(reference, params.clone())?;
    stats.models_learned += 1;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("xaf.partial");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        save_model(&model, &mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(model)
}

/// `reference,target,nrc` lines after a `#` line naming the parameters.
/// Values are written with full round-trip precision.
struct Journal {
    out: BufWriter<File>,
}

impl Journal {
    fn header(params: &ModelParams) -> String {
        format!(
            "# xafcm-journal alphabet={} k={} d={} alpha={}",
            params.alphabet(),
            params.k(),
            params.d(),
            params.alpha()
        )
    }

    fn open(path: &Path, params: &ModelParams) -> Result<(Journal, Vec<JournalCell>)> {
        let header = Self::header(params);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let mut cells = Vec::new();
        if text.is_empty() {
            writeln!(file, "{header}")?;
        } else {
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            if lines[0] != header {
                return Err(Error::Journal {
                    line: 1,
                    message: format!("journal was written for different parameters: {}", lines[0]),
                });
            }
            for (i, line) in lines.iter().enumerate().skip(1) {
                let last = i + 1 == lines.len();
                match parse_cell(line) {
                    Some(cell) if complete || !last => cells.push(cell),
                    // A torn final line from an interrupted write is dropped.
                    _ if last && !complete => {}
                    _ => {
                        return Err(Error::Journal {
                            line: i + 1,
                            message: format!("malformed entry {line:?}"),
                        })
                    }
                }
            }
            if !complete {
                let keep = text.rfind('\n').map_or(0, |p| p + 1);
                file.set_len(keep as u64)?;
                file.seek(SeekFrom::End(0))?;
            }
        }
        Ok((Journal { out: BufWriter::new(file) }, cells))
    }

    fn record(&mut self, reference: &str, target: &str, value: f64) -> Result<()> {
        writeln!(self.out, "{reference},{target},{value}")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

fn parse_cell(line: &str) -> Option<JournalCell> {
    let mut parts = line.split(',');
    let (r, t, v) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || r.is_empty() || t.is_empty() {
        return None;
    }
    let v: f64 = v.parse().ok()?;
    v.is_finite().then(|| (r.to_string(), t.to_string(), v))
}

/// Reads journal cells without opening it for writing.
pub fn read_journal<R: BufRead>(reader: R) -> Result<Vec<JournalCell>> {
    let mut cells = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') {
            continue;
        }
        cells.push(parse_cell(&line).ok_or_else(|| Error::Journal {
            line: i + 1,
            message: format!("malformed entry {line:?}"),
        })?);
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::model::Alpha;
    use crate::synth::{random_sequence, substitute};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    type Labelled = Vec<(String, SymbolSequence)>;

    fn family(seed: u64) -> (Labelled, Labelled, ModelParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dna = Arc::new(Alphabet::dna());
        let refs: Vec<_> = (0..4)
            .map(|i| (format!("ref{i}"), random_sequence(Arc::clone(&dna), 3000, &mut rng)))
            .collect();
        let targets: Vec<_> = refs
            .iter()
            .enumerate()
            .map(|(i, (_, r))| (format!("t{i}"), substitute(r, 0.05, &mut rng)))
            .collect();
        let params = ModelParams::new(dna, 6, 3, Alpha::Auto).unwrap();
        (refs, targets, params)
    }

    #[test]
    fn diagonal_wins_and_matches_direct_calls() {
        let (refs, targets, params) = family(1);
        let run = pairwise_nrc_with(&refs, &targets, &params, &MatrixOptions::default()).unwrap();
        assert_eq!(run.stats.models_learned, refs.len());
        assert_eq!(run.stats.cells_computed, 16);
        assert_eq!(run.matrix.best_references(), vec![0, 1, 2, 3]);
        for (r_label, r) in &refs {
            let model = learn(r, params.clone()).unwrap();
            for (t_label, t) in &targets {
                let direct = nrc(t, &model).unwrap().value();
                assert_eq!(run.matrix.get(r_label, t_label), Some(direct));
            }
        }
    }

    #[test]
    fn cache_reuses_models() {
        let (refs, targets, params) = family(2);
        let dir = tempfile::tempdir().unwrap();
        let options = MatrixOptions {
            cache_dir: Some(dir.path().join("cache")),
            journal: None,
        };
        let first = pairwise_nrc_with(&refs, &targets, &params, &options).unwrap();
        assert_eq!((first.stats.models_learned, first.stats.models_loaded), (4, 0));
        let second = pairwise_nrc_with(&refs, &targets, &params, &options).unwrap();
        assert_eq!((second.stats.models_learned, second.stats.models_loaded), (0, 4));
        assert_eq!(first.matrix, second.matrix);

        // A different depth is a different key.
        let other = ModelParams::new(params.alphabet().clone(), 6, 2, Alpha::Auto).unwrap();
        let third = pairwise_nrc_with(&refs, &targets, &other, &options).unwrap();
        assert_eq!(third.stats.models_learned, 4);

        // Corrupt entries are relearned.
        let entry = dir.path().join("cache").join(cache_key(&refs[0].1, &params));
        fs::write(&entry, "garbage").unwrap();
        let fourth = pairwise_nrc_with(&refs, &targets, &params, &options).unwrap();
        assert_eq!((fourth.stats.models_learned, fourth.stats.models_loaded), (1, 3));
        assert_eq!(fourth.matrix, first.matrix);
    }

    #[test]
    fn journal_resumes_bit_identically() {
        let (refs, targets, params) = family(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.journal");
        let options = MatrixOptions {
            cache_dir: None,
            journal: Some(path.clone()),
        };
        let fresh = pairwise_nrc(&refs, &targets, &params).unwrap();

        // Simulate a crash after the first two references plus a torn line.
        pairwise_nrc_with(&refs[..2], &targets, &params, &options).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        write!(f, "ref2,t0,0.12").unwrap();
        drop(f);

        let resumed = pairwise_nrc_with(&refs, &targets, &params, &options).unwrap();
        assert_eq!(resumed.stats.cells_resumed, 8);
        assert_eq!(resumed.stats.cells_computed, 8);
        assert_eq!(resumed.stats.models_learned, 2);
        assert_eq!(resumed.matrix, fresh);

        let again = pairwise_nrc_with(&refs, &targets, &params, &options).unwrap();
        assert_eq!(again.stats.models_learned, 0);
        assert_eq!(again.stats.cells_resumed, 16);
        assert_eq!(again.matrix, fresh);
        let cells = read_journal(BufReader::new(File::open(&path).unwrap())).unwrap();
        assert_eq!(cells.len(), 16);
    }

    #[test]
    fn journal_rejects_other_parameters() {
        let (refs, targets, params) = family(4);
        let dir = tempfile::tempdir().unwrap();
        let options = MatrixOptions {
            cache_dir: None,
            journal: Some(dir.path().join("j")),
        };
        pairwise_nrc_with(&refs[..1], &targets, &params, &options).unwrap();
        let other = ModelParams::new(params.alphabet().clone(), 5, 3, Alpha::Auto).unwrap();
        assert!(matches!(
            pairwise_nrc_with(&refs, &targets, &other, &options),
            Err(Error::Journal { line: 1, .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let (refs, targets, params) = family(5);
        let m = pairwise_nrc(&refs[..2], &targets[..3], &params).unwrap();
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "reference,t0,t1,t2");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("ref0,"));
        assert_eq!(lines[2].split(',').count(), 4);
    }

    #[test]
    fn errors_name_the_pair() {
        let (refs, _, params) = family(6);
        let abc = Arc::new(Alphabet::new(b"ABC").unwrap());
        let bad = vec![("odd".to_string(), SymbolSequence::from_symbols(abc, b"ABCA").unwrap())];
        match pairwise_nrc(&refs[..1], &bad, &params) {
            Err(Error::Cell { reference, target, .. }) => assert_eq!((reference.as_str(), target.as_str()), ("ref0", "odd")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(pairwise_nrc(&[], &refs, &params), Err(Error::EmptyList(_))));
        let dup = vec![refs[0].clone(), refs[0].clone()];
        assert!(matches!(pairwise_nrc(&dup, &refs, &params), Err(Error::DuplicateLabel(_))));
        let empty = vec![("e".to_string(), refs[0].1.slice(0..0))];
        assert!(matches!(pairwise_nrc(&empty, &refs, &params), Err(Error::Reference { .. })));
    }
}
