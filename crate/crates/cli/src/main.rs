use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xafcm::alphabet::Alphabet;
use xafcm::classify::{concatenate, evaluate_strided, train_class_models};
use xafcm::error::Error;
use xafcm::ingest::{SequenceSource, SourceKind, UnknownPolicy};
use xafcm::matrix::{pairwise_nrc_with, MatrixOptions};
use xafcm::model::{learn, solve_alpha, Alpha, ModelBuilder, ModelParams, XaModel, DEFAULT_CONFIDENCE};
use xafcm::modelfile::{load_model, save_model};
use xafcm::nrc::{compress_bits, information_profile, write_profile_tsv};
use xafcm::quantize::{quantize_signal, read_peaks, read_samples, AnnotatedSignal, SaxConfig, SignalColumn};
use xafcm::sequence::SymbolSequence;
use xafcm::synth::{random_sequence, substitute, MarkovSource};

/// Extended-alphabet finite-context models and normalized relative compression.
#[derive(Parser)]
#[command(name = "xafcm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model from reference sequences and save it.
    Learn(LearnArgs),
    /// Print the NRC of a target against a model.
    Nrc(CompareArgs),
    /// Write the per-block information profile of a target.
    Profile(ProfileArgs),
    /// Compute the NRC between every reference and every target.
    Matrix(MatrixArgs),
    /// Turn an annotated signal into symbols.
    Quantize(QuantizeArgs),
    /// Classify test segments by their nearest class model.
    Classify(ClassifyArgs),
    /// Print the automatically chosen smoothing parameter.
    Alpha(AlphaArgs),
    /// Generate seeded synthetic sequences.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// Context order.
    #[arg(short = 'k', value_parser = positive)]
    k: Option<usize>,
    /// Depth: symbols predicted per block.
    #[arg(short = 'd', default_value_t = 1, value_parser = positive)]
    d: usize,
    /// Smoothing parameter: a positive decimal or `auto`.
    #[arg(long, default_value = "auto")]
    alpha: Alpha,
}

#[derive(Args, Clone)]
struct InputFlags {
    /// Inline symbols (e.g. `ACGT`) or a preset: `dna`, `sax<N>`.
    #[arg(long, default_value = "dna")]
    alphabet: String,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    format: Format,
    /// What to do with symbols outside the alphabet.
    #[arg(long, value_enum, default_value_t = Unknown::Reject)]
    unknown: Unknown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Raw,
    Fasta,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unknown {
    Reject,
    Drop,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    input: InputFlags,
    /// Reference files; each is learned as its own circular sequence.
    #[arg(required = true)]
    references: Vec<PathBuf>,
    #[arg(short = 'o', long)]
    output: PathBuf,
    /// Report timing to stderr.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Saved model file.
    #[arg(long, conflicts_with = "reference", required_unless_present = "reference")]
    model: Option<PathBuf>,
    /// Reference file to learn from instead of a saved model.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    params: ModelFlags,
    #[command(flatten)]
    input: InputFlags,
    target: PathBuf,
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    compare: CompareArgs,
    /// Smoothing width in blocks.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    window: usize,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    input: InputFlags,
    /// Reference files, optionally as `label=path`.
    #[arg(long, num_args = 1.., required = true)]
    references: Vec<String>,
    /// Target files, optionally as `label=path`.
    #[arg(long, num_args = 1.., required = true)]
    targets: Vec<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Append finished cells here and skip them on a rerun.
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Samples: one per line, or CSV with `--column`.
    #[arg(long)]
    signal: PathBuf,
    /// CSV column index or header name.
    #[arg(long)]
    column: Option<String>,
    /// The signal file starts with a header row.
    #[arg(long)]
    header: bool,
    /// Ascending peak sample indices, one per line.
    #[arg(long)]
    peaks: PathBuf,
    #[arg(long, default_value_t = 200, value_parser = positive)]
    symbols_per_segment: usize,
    #[arg(long, default_value_t = 6)]
    alphabet_size: usize,
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    input: InputFlags,
    /// Training file as `label=path`; repeat a label to join files.
    #[arg(long, required = true)]
    train: Vec<String>,
    /// Test file as `label=path`, or a bare path when the label is unknown.
    #[arg(long, required = true)]
    test: Vec<String>,
    #[arg(long, value_parser = positive)]
    segment_len: usize,
    /// Offset between segment starts; defaults to the segment length.
    #[arg(long, value_parser = positive)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Per-segment report.
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args)]
struct AlphaArgs {
    /// Alphabet size; taken from `--alphabet` when absent.
    #[arg(long, conflicts_with = "alphabet")]
    alphabet_size: Option<usize>,
    #[arg(long)]
    alphabet: Option<String>,
    #[arg(short = 'd', default_value_t = 1, value_parser = positive)]
    d: usize,
    /// Probability a seen word keeps after smoothing.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    kind: SynthKind,
}

#[derive(Subcommand)]
enum SynthKind {
    /// Uniformly random symbols.
    Random {
        #[arg(long, default_value = "dna")]
        alphabet: String,
        #[arg(long)]
        length: usize,
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Point substitutions of an existing raw sequence.
    Mutate {
        #[arg(long, default_value = "dna")]
        alphabet: String,
        input: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Output of a random Markov source.
    Markov {
        #[arg(long, default_value = "dna")]
        alphabet: String,
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Dirichlet concentration of the transition rows.
        #[arg(long, default_value_t = 0.3)]
        concentration: f64,
        /// Seed of the transition table; the same value gives the same source.
        #[arg(long)]
        source_seed: u64,
        #[arg(long)]
        length: usize,
        /// Seed of the walk through the source.
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("xafcm: usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("xafcm: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Learn(a) => single_threaded(|| cmd_learn(a)),
        Command::Nrc(a) => single_threaded(|| cmd_nrc(a)),
        Command::Profile(a) => single_threaded(|| cmd_profile(a)),
        Command::Matrix(a) => {
            let workers = a.workers;
            with_workers(workers, || cmd_matrix(a))
        }
        Command::Quantize(a) => single_threaded(|| cmd_quantize(a)),
        Command::Classify(a) => {
            let workers = a.workers;
            with_workers(workers, || cmd_classify(a))
        }
        Command::Alpha(a) => cmd_alpha(a),
        Command::Synth(a) => cmd_synth(a.kind),
    }
}

fn single_threaded(f: impl FnOnce() -> Outcome + Send) -> Outcome {
    with_workers(1, f)
}

fn with_workers(workers: usize, f: impl FnOnce() -> Outcome + Send) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Data(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

impl InputFlags {
    fn alphabet(&self) -> Outcome<Arc<Alphabet>> {
        Alphabet::from_name(&self.alphabet).map(Arc::new).map_err(usage)
    }

    fn source(&self) -> SequenceSource {
        SequenceSource {
            kind: match self.format {
                Format::Raw => SourceKind::Raw,
                Format::Fasta => SourceKind::Fasta,
            },
            unknown: match self.unknown {
                Unknown::Reject => UnknownPolicy::Reject,
                Unknown::Drop => UnknownPolicy::Drop,
            },
        }
    }
}

impl ModelFlags {
    fn params(&self, alphabet: Arc<Alphabet>) -> Outcome<ModelParams> {
        let k = self
            .k
            .ok_or_else(|| Failure::Usage("-k is required to learn a model".into()))?;
        ModelParams::new(alphabet, k, self.d, self.alpha).map_err(usage)
    }
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: xafcm::error::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_sequence(path: &Path, alphabet: &Arc<Alphabet>, source: SequenceSource) -> Outcome<SymbolSequence> {
    let reader = open(path)?;
    let ingested = in_file(path, source.read(reader, Arc::clone(alphabet)))?;
    if ingested.dropped > 0 {
        eprintln!("xafcm: {}: dropped {} unknown symbols", path.display(), ingested.dropped);
    }
    Ok(ingested.sequence)
}

/// Streams to the file through a temporary sibling so a failed run leaves
/// nothing behind; without a path, writes to stdout.
fn write_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> xafcm::error::Result<()>) -> Outcome {
    match path {
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            f(&mut out)?;
            out.flush().map_err(Error::from)?;
            Ok(())
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let fail = |e: io::Error| Failure::Data(format!("{}: {e}", path.display()));
            let tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
            let mut out = BufWriter::new(tmp);
            f(&mut out)?;
            let tmp = out.into_inner().map_err(|e| fail(e.into_error()))?;
            tmp.persist(path).map_err(|e| fail(e.error))?;
            Ok(())
        }
    }
}

fn cmd_learn(a: LearnArgs) -> Outcome {
    let params = a.model.params(a.input.alphabet()?)?;
    let source = a.input.source();
    let start = Instant::now();
    let mut builder = ModelBuilder::new(params.clone());
    for path in &a.references {
        let seq = read_sequence(path, params.alphabet(), source)?;
        in_file(path, builder.add_sequence(&seq))?;
    }
    let model = builder.freeze()?;
    let learn_seconds = start.elapsed().as_secs_f64();
    write_output(Some(&a.output), |w| save_model(&model, w))?;
    if a.timings {
        let stats = model.stats();
        eprintln!(
            "learn_seconds={learn_seconds:.6} contexts={} entries={} trained_on={} estimated_bytes={}",
            stats.context_count, stats.entry_count, stats.trained_on, stats.estimated_bytes
        );
    }
    Ok(())
}

/// Loads or learns the model and reads the target over its alphabet.
fn prepare(a: &CompareArgs) -> Outcome<(XaModel, SymbolSequence, String)> {
    let source = a.input.source();
    let (model, timing) = match (&a.model, &a.reference) {
        (Some(path), _) => {
            let start = Instant::now();
            let model = in_file(path, load_model(open(path)?))?;
            (model, format!("load_seconds={:.6}", start.elapsed().as_secs_f64()))
        }
        (None, Some(path)) => {
            let params = a.params.params(a.input.alphabet()?)?;
            let reference = read_sequence(path, params.alphabet(), source)?;
            let start = Instant::now();
            let model = in_file(path, learn(&reference, params))?;
            (model, format!("learn_seconds={:.6}", start.elapsed().as_secs_f64()))
        }
        (None, None) => return Err(Failure::Usage("one of --model or --reference is required".into())),
    };
    let target = read_sequence(&a.target, model.alphabet(), source)?;
    Ok((model, target, timing))
}

fn cmd_nrc(a: CompareArgs) -> Outcome {
    let (model, target, timing) = prepare(&a)?;
    let start = Instant::now();
    let result = in_file(&a.target, compress_bits(&target, &model))?;
    let compress_seconds = start.elapsed().as_secs_f64();
    println!("{}", result.nrc(model.alphabet().len()));
    if a.timings {
        eprintln!(
            "{timing} compress_seconds={compress_seconds:.6} query_count={} total_bits={:.6}",
            result.query_count, result.total_bits
        );
    }
    Ok(())
}

fn cmd_profile(a: ProfileArgs) -> Outcome {
    let (model, target, timing) = prepare(&a.compare)?;
    let start = Instant::now();
    let points = in_file(&a.compare.target, information_profile(&target, &model, a.window))?;
    let compress_seconds = start.elapsed().as_secs_f64();
    write_output(a.output.as_deref(), |w| write_profile_tsv(&points, w))?;
    if a.compare.timings {
        eprintln!("{timing} compress_seconds={compress_seconds:.6} query_count={}", points.len());
    }
    Ok(())
}

/// `label=path`, or a path labelled by its file stem.
fn labelled(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) => (label.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(arg);
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (label, path)
        }
    }
}

fn read_labelled(
    args: &[String],
    alphabet: &Arc<Alphabet>,
    source: SequenceSource,
) -> Outcome<Vec<(String, SymbolSequence)>> {
    args
        .iter()
        .map(|arg| {
            let (label, path) = labelled(arg);
            Ok((label, read_sequence(&path, alphabet, source)?))
        })
        .collect()
}

fn cmd_matrix(a: MatrixArgs) -> Outcome {
    let params = a.model.params(a.input.alphabet()?)?;
    let source = a.input.source();
    let references = read_labelled(&a.references, params.alphabet(), source)?;
    let targets = read_labelled(&a.targets, params.alphabet(), source)?;
    let options = MatrixOptions {
        cache_dir: a.cache_dir.clone(),
        journal: a.journal.clone(),
    };
    let start = Instant::now();
    let run = pairwise_nrc_with(&references, &targets, &params, &options)?;
    write_output(a.output.as_deref(), |w| run.matrix.write_csv(w))?;
    if a.timings {
        let s = &run.stats;
        eprintln!(
            "seconds={:.6} models_learned={} models_loaded={} cells_computed={} cells_resumed={}",
            start.elapsed().as_secs_f64(),
            s.models_learned,
            s.models_loaded,
            s.cells_computed,
            s.cells_resumed
        );
    }
    Ok(())
}

fn cmd_quantize(a: QuantizeArgs) -> Outcome {
    let config = SaxConfig::new(a.symbols_per_segment, a.alphabet_size).map_err(usage)?;
    let column = a.column.as_deref().map(|c| match c.parse() {
        Ok(i) => SignalColumn::Index(i),
        Err(_) => SignalColumn::Name(c.to_string()),
    });
    let samples = in_file(&a.signal, read_samples(open(&a.signal)?, column.as_ref(), a.header))?;
    let peaks = in_file(&a.peaks, read_peaks(open(&a.peaks)?))?;
    let symbols = quantize_signal(&AnnotatedSignal::new(samples, peaks), &config)?;
    write_output(a.output.as_deref(), |w| {
        writeln!(w, "{}", symbols.to_text())?;
        Ok(())
    })
}

fn cmd_classify(a: ClassifyArgs) -> Outcome {
    let params = a.model.params(a.input.alphabet()?)?;
    let source = a.input.source();

    let mut classes: Vec<(String, Vec<SymbolSequence>)> = Vec::new();
    for arg in &a.train {
        let Some((label, path)) = arg.split_once('=') else {
            return Err(Failure::Usage(format!("--train expects label=path, got {arg:?}")));
        };
        let seq = read_sequence(Path::new(path), params.alphabet(), source)?;
        match classes.iter_mut().find(|(l, _)| l == label) {
            Some((_, parts)) => parts.push(seq),
            None => classes.push((label.to_string(), vec![seq])),
        }
    }
    let references = classes
        .iter()
        .map(|(label, parts)| Ok((label.clone(), concatenate(parts)?)))
        .collect::<Outcome<Vec<_>>>()?;
    let test = a
        .test
        .iter()
        .map(|arg| {
            let (label, path) = match arg.split_once('=') {
                Some((l, p)) => (Some(l.to_string()), PathBuf::from(p)),
                None => (None, PathBuf::from(arg)),
            };
            Ok((label, read_sequence(&path, params.alphabet(), source)?))
        })
        .collect::<Outcome<Vec<_>>>()?;

    let models = train_class_models(&references, &params)?;
    let report = evaluate_strided(&test, &models, a.segment_len, a.stride.unwrap_or(a.segment_len))?;
    write_output(a.output.as_deref(), |w| report.write_csv(w))?;
    if let Some(path) = &a.confusion {
        write_output(Some(path), |w| report.write_confusion_csv(w))?;
    }
    if a.output.is_some() {
        println!("{}", report.summary());
    }
    Ok(())
}

fn cmd_alpha(a: AlphaArgs) -> Outcome {
    let size = match (a.alphabet_size, &a.alphabet) {
        (Some(n), _) => n,
        (None, Some(arg)) => Alphabet::from_name(arg).map_err(usage)?.len(),
        (None, None) => Alphabet::dna().len(),
    };
    let alpha = solve_alpha(size, a.d, a.confidence).map_err(usage)?;
    println!("{alpha}");
    Ok(())
}

fn cmd_synth(kind: SynthKind) -> Outcome {
    let alphabet = |arg: &str| Alphabet::from_name(arg).map(Arc::new).map_err(usage);
    let (seq, output) = match kind {
        SynthKind::Random {
            alphabet: arg,
            length,
            seed,
            output,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (random_sequence(alphabet(&arg)?, length, &mut rng), output)
        }
        SynthKind::Mutate {
            alphabet: arg,
            input,
            rate,
            seed,
            output,
        } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Failure::Usage(format!("--rate must lie in [0, 1], got {rate}")));
            }
            let base = read_sequence(&input, &alphabet(&arg)?, SequenceSource::default())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (substitute(&base, rate, &mut rng), output)
        }
        SynthKind::Markov {
            alphabet: arg,
            order,
            concentration,
            source_seed,
            length,
            seed,
            output,
        } => {
            let mut table_rng = ChaCha8Rng::seed_from_u64(source_seed);
            let source =
                MarkovSource::random(alphabet(&arg)?, order, concentration, &mut table_rng).map_err(usage)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (source.generate(length, &mut rng), output)
        }
    };
    write_output(output.as_deref(), |w| {
        writeln!(w, "{}", seq.to_text())?;
        Ok(())
    })
}
