use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bloom_embed::cbe::{cooccurrence_stats, count_cooccurrences, rebuild_hash_matrix, threshold_and_order};
use bloom_embed::codec::io::{
    read_instances, read_probability_vectors, write_bloom_vectors, write_score_rows, SCORE_HEADER,
};
use bloom_embed::codec::{encode, rank, DecodeMode};
use bloom_embed::data::{self, write_profiles};
use bloom_embed::experiment::{self, ExperimentConfig, Fitted};
use bloom_embed::hashing::io::HashFileFormat;
use bloom_embed::hashing::{HashFamily, HashMatrix};
use bloom_embed::metrics::{average_precision_at, Measure};
use bloom_embed::trainer::Network;
use bloom_embed::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bloom-embed",
    version,
    about = "Bloom embeddings for sparse network inputs and outputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a d x k hash matrix into [1, m].
    BuildHash(BuildHash),
    /// Encode instance lines into binary embeddings.
    Encode(Encode),
    /// Decode probability vectors into ranked item scores.
    Decode(Decode),
    /// Rebuild a hash matrix so that co-occurring items collide.
    Cbe(Cbe),
    /// Train one model and save it with its projections.
    Train(Train),
    /// Score ranked lists against ground truth, or a saved model on its test split.
    Evaluate(Evaluate),
    /// Train and evaluate every (k, m/d) cell plus the no-embedding baseline.
    Sweep(Sweep),
    /// Dataset statistics.
    Stats(Stats),
    /// Write synthetic profiles, one per line.
    Generate(Generate),
}

/// Experiment settings; every flag overrides the config file.
#[derive(Args, Default)]
struct ExpArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profile file (triples or one profile per line)
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Use the synthetic generator instead of a profile file
    #[arg(long)]
    synthetic: bool,
    /// Profile file format: triples | profiles
    #[arg(long)]
    format: Option<String>,
    /// Item count of the synthetic generator
    #[arg(long)]
    d: Option<String>,
    /// Instance count of the synthetic generator
    #[arg(long)]
    n: Option<String>,
    /// Embedding size of both input and output ("none" for raw items)
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Seed, or comma-separated seeds
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// adam | sgd | rmsprop
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// Steer collisions towards co-occurring items
    #[arg(long)]
    cbe: bool,
    /// likelihood | nll
    #[arg(long)]
    decode: Option<String>,
    #[arg(long)]
    top_n: Option<String>,
    /// map | rr | acc
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    cutoff: Option<String>,
    /// Hidden layer sizes, comma-separated
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    m_ratios: Option<String>,
    #[arg(long)]
    k_values: Option<String>,
    /// Worker threads for sweeps
    #[arg(long)]
    parallel: Option<String>,
    /// Any other config key, as key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExpArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Fault> {
        let mut c = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Fault::Config(format!("cannot read config {}: {e}", path.display())))?;
            c.apply(&text)?;
        }
        if self.synthetic {
            c.data = None;
        }
        if let Some(p) = &self.data {
            c.data = Some(p.clone());
        }
        if self.cbe {
            c.cbe = true;
        }
        let flags = [
            ("format", &self.format),
            ("d", &self.d),
            ("n", &self.n),
            ("m", &self.m),
            ("k", &self.k),
            ("seeds", &self.seed),
            ("optimizer", &self.optimizer),
            ("lr", &self.lr),
            ("epochs", &self.epochs),
            ("decode", &self.decode),
            ("top_n", &self.top_n),
            ("measure", &self.measure),
            ("cutoff", &self.cutoff),
            ("hidden", &self.hidden),
            ("m_ratios", &self.m_ratios),
            ("k_values", &self.k_values),
            ("parallel", &self.parallel),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Fault::Config(format!("--set expects key=value, got '{kv}'")))?;
            c.set(k.trim(), v)?;
        }
        c.validate()?;
        log::info!("resolved config:\n{c}");
        Ok(c)
    }
}

#[derive(Args)]
struct BuildHash {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// text | binary
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Encode {
    /// Hash matrix file (text or binary)
    #[arg(long)]
    hash: PathBuf,
    /// Instance lines of 1-based item ids
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Decode {
    #[arg(long)]
    hash: PathBuf,
    /// Lines of m probabilities or an m-character bit string
    #[arg(long)]
    input: PathBuf,
    /// likelihood | nll
    #[arg(long, default_value = "likelihood")]
    decode: String,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Cbe {
    #[arg(long)]
    hash: PathBuf,
    /// Training instances, one line of 1-based item ids each
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// text | binary
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write co-occurrence statistics here
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    exp: ExpArgs,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Evaluate {
    /// Directory written by `train`
    #[arg(long, conflicts_with_all = ["ranked", "truth"])]
    model: Option<PathBuf>,
    /// Ranked lists, one line of 1-based item ids per instance, best first
    #[arg(long, requires = "truth")]
    ranked: Option<PathBuf>,
    /// Relevant items, one line per instance
    #[arg(long, requires = "ranked")]
    truth: Option<PathBuf>,
    /// map | rr | acc
    #[arg(long, default_value = "map")]
    measure: String,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    exp: ExpArgs,
    /// Output directory for report.tsv, plot.tsv and config.txt
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Stats {
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the item index map here
    #[arg(long)]
    items: Option<PathBuf>,
}

#[derive(Args)]
struct Generate {
    #[command(flatten)]
    exp: ExpArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status 2 for configuration faults, 1 for data faults.
#[derive(Debug)]
enum Fault {
    Config(String),
    Data(String),
}

impl From<Error> for Fault {
    fn from(e: Error) -> Self {
        if e.is_data_fault() {
            Fault::Data(e.to_string())
        } else {
            Fault::Config(e.to_string())
        }
    }
}

impl From<io::Error> for Fault {
    fn from(e: io::Error) -> Self {
        Fault::Data(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Fault>;

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Fault::Data(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Outcome) -> Outcome {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .map_err(|e| Fault::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Outcome) -> Outcome {
    match out {
        Some(p) => write_atomic(p, f),
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn load_hash(path: &Path) -> Outcome<HashMatrix> {
    HashMatrix::load(path).map_err(|e| Fault::Data(format!("{}: {e}", path.display())))
}

fn write_hash(path: &Path, h: &HashMatrix, format: HashFileFormat) -> Outcome {
    write_atomic(path, |w| {
        match format {
            HashFileFormat::Text => h.write_text(w)?,
            HashFileFormat::Binary => h.write_binary(w)?,
        }
        Ok(())
    })
}

fn build_hash(a: &BuildHash) -> Outcome {
    let format: HashFileFormat = a.format.parse()?;
    let h = HashMatrix::build(a.d, a.m, a.k, a.seed)?;
    write_hash(&a.out, &h, format)
}

fn encode_cmd(a: &Encode) -> Outcome {
    let h = load_hash(&a.hash)?;
    let instances = read_instances(open(&a.input)?, h.d())?;
    let vectors = instances.iter().map(|p| encode(p, &h)).collect::<Result<Vec<_>, _>>()?;
    emit(a.out.as_deref(), |w| Ok(write_bloom_vectors(w, &vectors)?))
}

fn decode_cmd(a: &Decode) -> Outcome {
    let mode: DecodeMode = a.decode.parse()?;
    let h = load_hash(&a.hash)?;
    let probs = read_probability_vectors(open(&a.input)?, h.m())?;
    let top = a.top_n.min(h.d());
    if top == 0 {
        return Err(Fault::Config("--top-n must be positive".into()));
    }
    emit(a.out.as_deref(), |w| {
        writeln!(w, "{SCORE_HEADER}")?;
        for (i, p) in probs.iter().enumerate() {
            let scores = mode.decode(p, &h)?;
            write_score_rows(&mut *w, i, &rank(&scores, top)?, &scores)?;
        }
        Ok(())
    })
}

fn cbe_cmd(a: &Cbe) -> Outcome {
    let format: HashFileFormat = a.format.parse()?;
    let h = load_hash(&a.hash)?;
    let instances = read_instances(open(&a.data)?, h.d())?;
    let table = count_cooccurrences(&instances)?;
    let pairs = threshold_and_order(&table);
    log::info!(
        "{} co-occurring pairs, {} above the average frequency {:.3}",
        table.nnz(),
        pairs.len(),
        table.average_frequency()
    );
    let rebuilt = rebuild_hash_matrix(&h, &pairs, a.seed)?;
    write_hash(&a.out, &rebuilt, format)?;
    if let Some(path) = &a.stats {
        let s = cooccurrence_stats(&table, instances.len())?;
        write_atomic(path, |w| {
            writeln!(w, "percent\trho")?;
            writeln!(w, "{:.6}\t{:.6e}", s.percent_cooccurring_pairs, s.mean_ratio_rho)?;
            Ok(())
        })?;
    }
    Ok(())
}

const MODEL_FILE: &str = "model.bin";
const CONFIG_FILE: &str = "config.txt";

fn train_cmd(a: &Train) -> Outcome {
    let mut config = a.exp.resolve()?;
    config.seeds.truncate(1);
    let seed = config.seeds[0];
    let dataset = config.load_dataset()?;
    let fitted = experiment::fit(&config, &dataset, seed)?;
    fs::create_dir_all(&a.out)?;
    let dir = &a.out;
    write_atomic(&dir.join(CONFIG_FILE), |w| Ok(write!(w, "{config}")?))?;
    write_atomic(&dir.join(MODEL_FILE), |w| Ok(fitted.net.write_checkpoint(w)?))?;
    for (name, h) in [("hash_in.txt", &fitted.h_in), ("hash_out.txt", &fitted.h_out)] {
        match h {
            Some(HashFamily::Matrix(h)) => write_hash(&dir.join(name), h, HashFileFormat::Text)?,
            Some(HashFamily::DoubleHashing(_)) => {
                log::info!("{name}: double hashing is rebuilt from the config, not saved")
            }
            None => {}
        }
    }
    write_atomic(&dir.join("items.tsv"), |w| Ok(dataset.items.write_tsv(w)?))?;
    write_atomic(&dir.join("train.tsv"), |w| {
        writeln!(w, "epoch\tloss\tseconds")?;
        for (e, (l, s)) in fitted
            .report
            .epoch_losses
            .iter()
            .zip(&fitted.report.epoch_seconds)
            .enumerate()
        {
            writeln!(w, "{}\t{l:.6}\t{s:.4}", e + 1)?;
        }
        Ok(())
    })?;
    if !dataset.test.is_empty() {
        let r = fitted.evaluate(&config, &dataset)?;
        println!("{}\t{:.6}\t{}", r.measure, r.score, r.n_evaluated);
    }
    Ok(())
}

fn read_id_lines(path: &Path) -> Outcome<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for (no, line) in open(path)?.lines().enumerate() {
        let ids = line?
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| match s.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i - 1),
                _ => Err(Fault::Data(format!("{}:{}: bad item id '{s}'", path.display(), no + 1))),
            })
            .collect::<Outcome<Vec<_>>>()?;
        out.push(ids);
    }
    Ok(out)
}

fn score_lists(ranked: &[Vec<usize>], truth: &[Vec<usize>], measure: Measure, cutoff: Option<usize>) -> Outcome<f64> {
    if ranked.len() != truth.len() {
        return Err(Fault::Data(format!(
            "{} ranked lists but {} truth lines",
            ranked.len(),
            truth.len()
        )));
    }
    if ranked.is_empty() {
        return Err(Fault::Data("nothing to evaluate".into()));
    }
    let mut total = 0.0;
    for (i, (r, t)) in ranked.iter().zip(truth).enumerate() {
        if t.is_empty() {
            return Err(Fault::Data(format!("truth line {} is empty", i + 1)));
        }
        total += match measure {
            Measure::Map => average_precision_at(r, t, cutoff)?,
            Measure::Rr => r
                .iter()
                .position(|x| t.contains(x))
                .map_or(0.0, |p| 1.0 / (p + 1) as f64),
            Measure::Acc => {
                if r.first().is_some_and(|x| t.contains(x)) {
                    100.0
                } else {
                    0.0
                }
            }
        };
    }
    Ok(total / ranked.len() as f64)
}

fn evaluate_cmd(a: &Evaluate) -> Outcome {
    let (measure, score, n) = match (&a.model, &a.ranked, &a.truth) {
        (Some(dir), _, _) => {
            let text = fs::read_to_string(dir.join(CONFIG_FILE))?;
            let mut config: ExperimentConfig = text.parse()?;
            config.measure = a.measure.parse()?;
            config.cutoff = a.cutoff.or(config.cutoff);
            let seed = config.seeds[0];
            let dataset = config.load_dataset()?;
            let (h_in, h_out) = experiment::build_projections(&config, &dataset, seed)?;
            let net = Network::<f32>::read_checkpoint(open(&dir.join(MODEL_FILE))?)?;
            let fitted = Fitted {
                net,
                h_in,
                h_out,
                report: Default::default(),
            };
            let r = fitted.evaluate(&config, &dataset)?;
            (r.measure, r.score, r.n_evaluated)
        }
        (None, Some(ranked), Some(truth)) => {
            let measure: Measure = a.measure.parse()?;
            let ranked = read_id_lines(ranked)?;
            let truth = read_id_lines(truth)?;
            (measure, score_lists(&ranked, &truth, measure, a.cutoff)?, ranked.len())
        }
        _ => {
            return Err(Fault::Config(
                "evaluate needs --model DIR or --ranked FILE --truth FILE".into(),
            ))
        }
    };
    emit(a.out.as_deref(), |w| {
        writeln!(w, "measure\tscore\tn")?;
        writeln!(w, "{measure}\t{score:.6}\t{n}")?;
        Ok(())
    })
}

fn sweep_cmd(a: &Sweep) -> Outcome {
    let config = a.exp.resolve()?;
    let dataset = config.load_dataset()?;
    let report = experiment::sweep(&config, &dataset)?;
    fs::create_dir_all(&a.out)?;
    write_atomic(&a.out.join(CONFIG_FILE), |w| Ok(write!(w, "{config}")?))?;
    write_atomic(&a.out.join("report.tsv"), |w| Ok(report.write_report(w)?))?;
    write_atomic(&a.out.join("plot.tsv"), |w| Ok(report.write_plot_data(w)?))?;
    emit(None, |w| Ok(report.write_report(w)?))
}

fn stats_cmd(a: &Stats) -> Outcome {
    let config = a.exp.resolve()?;
    let dataset = config.load_dataset()?;
    if let Some(path) = &a.items {
        write_atomic(path, |w| Ok(dataset.items.write_tsv(w)?))?;
    }
    emit(a.out.as_deref(), |w| Ok(dataset.stats().write_tsv(w)?))
}

fn generate_cmd(a: &Generate) -> Outcome {
    let config = a.exp.resolve()?;
    let profiles = data::generate_profiles(&config.synthetic)?;
    emit(a.out.as_deref(), |w| Ok(write_profiles(w, &profiles)?))
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::BuildHash(a) => build_hash(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Cbe(a) => cbe_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Generate(a) => generate_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fault::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Fault::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
