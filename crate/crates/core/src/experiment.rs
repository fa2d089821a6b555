//! Experiment configuration, single runs and `(k, m/d)` sweeps.
//!
//! A configuration is a list of `key=value` lines; `#` starts a comment.
//! [`ExperimentConfig`]'s `Display` writes every key, and parsing that text
//! gives back an equal value.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::cbe::steer_collisions;
use crate::codec::DecodeMode;
use crate::data::{self, LoadOptions, ProfileDataset, ProfileFormat, SyntheticSpec};
use crate::error::{Error, Result};
use crate::hashing::{HashFamily, HashFamilySpec, HashMode, Projector};
use crate::metrics::{EvaluationResult, Measure, ReportRow, REPORT_HEADER};
use crate::rng::derive;
use crate::trainer::{self, EvalConfig, Network, NetworkSpec, OptimizerKind, OptimizerSpec, TrainConfig, TrainReport};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Profile file; `None` selects the synthetic generator.
    pub data: Option<PathBuf>,
    pub format: ProfileFormat,
    pub min_item_count: usize,
    pub min_profile_size: usize,
    pub threshold: Option<f64>,
    pub test_fraction: f64,
    pub synthetic: SyntheticSpec,
    /// Input / output embedding sizes; `None` trains on the raw items.
    pub m_in: Option<usize>,
    pub m_out: Option<usize>,
    pub k: usize,
    pub hash_mode: HashMode,
    pub seeds: Vec<u64>,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub cbe: bool,
    pub decode: DecodeMode,
    pub top_n: usize,
    pub measure: Measure,
    pub cutoff: Option<usize>,
    pub exclude_inputs: bool,
    pub m_ratios: Vec<f64>,
    pub k_values: Vec<usize>,
    pub parallel: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            format: ProfileFormat::Triples,
            min_item_count: 1,
            min_profile_size: 2,
            threshold: None,
            test_fraction: 0.1,
            synthetic: SyntheticSpec::default(),
            m_in: None,
            m_out: None,
            k: 4,
            hash_mode: HashMode::Matrix,
            seeds: vec![0],
            hidden: vec![128],
            optimizer: OptimizerSpec::adam(1e-3),
            epochs: 10,
            batch_size: 128,
            cbe: false,
            decode: DecodeMode::Likelihood,
            top_n: 10,
            measure: Measure::Map,
            cutoff: None,
            exclude_inputs: true,
            m_ratios: vec![0.1, 0.2, 0.4, 0.8],
            k_values: vec![1, 2, 3, 4],
            parallel: 1,
        }
    }
}

fn list<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt<T: fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "none".to_owned(), T::to_string)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("bad value '{v}' for {key}")))
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" || v.is_empty() {
        Ok(None)
    } else {
        value(key, v).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "data" => {
                self.data = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            "format" => self.format = v.parse()?,
            "min_item_count" => self.min_item_count = value(key, v)?,
            "min_profile_size" => self.min_profile_size = value(key, v)?,
            "threshold" => self.threshold = parse_opt(key, v)?,
            "test_fraction" => {
                self.test_fraction = value(key, v)?;
                self.synthetic.test_fraction = self.test_fraction;
            }
            "d" => self.synthetic.d = value(key, v)?,
            "n" => self.synthetic.n = value(key, v)?,
            "clusters" => self.synthetic.clusters = value(key, v)?,
            "min_profile" => self.synthetic.min_profile = value(key, v)?,
            "max_profile" => self.synthetic.max_profile = value(key, v)?,
            "noise" => self.synthetic.noise = value(key, v)?,
            "popularity_skew" => self.synthetic.popularity_skew = value(key, v)?,
            "data_seed" => self.synthetic.seed = value(key, v)?,
            "m" => {
                self.m_in = parse_opt(key, v)?;
                self.m_out = self.m_in;
            }
            "m_in" => self.m_in = parse_opt(key, v)?,
            "m_out" => self.m_out = parse_opt(key, v)?,
            "k" => self.k = value(key, v)?,
            "hash_mode" => self.hash_mode = v.parse()?,
            "seed" | "seeds" => self.seeds = parse_list(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "optimizer" => {
                let lr = self.optimizer.learning_rate;
                let clip = self.optimizer.clip_norm;
                self.optimizer = v.parse()?;
                self.optimizer.learning_rate = lr;
                self.optimizer.clip_norm = clip;
            }
            "lr" => self.optimizer.learning_rate = value(key, v)?,
            "clip_norm" => self.optimizer.clip_norm = parse_opt(key, v)?,
            "momentum" => match &mut self.optimizer.kind {
                OptimizerKind::SgdMomentum { momentum } => *momentum = value(key, v)?,
                _ => return Err(Error::invalid("momentum applies to the sgd optimizer")),
            },
            "beta1" | "beta2" | "epsilon" => match &mut self.optimizer.kind {
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let slot = match key {
                        "beta1" => beta1,
                        "beta2" => beta2,
                        _ => epsilon,
                    };
                    *slot = value(key, v)?;
                }
                OptimizerKind::RmsProp { epsilon, .. } if key == "epsilon" => *epsilon = value(key, v)?,
                _ => return Err(Error::invalid(format!("{key} does not apply to {}", self.optimizer))),
            },
            "decay" => match &mut self.optimizer.kind {
                OptimizerKind::RmsProp { decay, .. } => *decay = value(key, v)?,
                _ => return Err(Error::invalid("decay applies to the rmsprop optimizer")),
            },
            "epochs" => self.epochs = value(key, v)?,
            "batch_size" => self.batch_size = value(key, v)?,
            "cbe" => self.cbe = value(key, v)?,
            "decode" => self.decode = v.parse()?,
            "nll_epsilon" => match &mut self.decode {
                DecodeMode::Nll { epsilon } => *epsilon = value(key, v)?,
                DecodeMode::Likelihood => return Err(Error::invalid("nll_epsilon applies to decode=nll")),
            },
            "top_n" => self.top_n = value(key, v)?,
            "measure" => self.measure = v.parse()?,
            "cutoff" => self.cutoff = parse_opt(key, v)?,
            "exclude_inputs" => self.exclude_inputs = value(key, v)?,
            "m_ratios" => self.m_ratios = parse_list(key, v)?,
            "k_values" => self.k_values = parse_list(key, v)?,
            "parallel" => self.parallel = value(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected key=value", no + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::invalid(format!("config line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.data.is_none() {
            self.synthetic.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer sizes must be positive"));
        }
        if (self.m_in.is_some() || self.m_out.is_some()) && self.k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        if matches!(self.m_in, Some(0)) || matches!(self.m_out, Some(0)) {
            return Err(Error::invalid("m must be positive"));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::invalid("test fraction must lie in [0, 1)"));
        }
        if self.m_ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return Err(Error::invalid("m/d ratios must lie in (0, 1]"));
        }
        if self.k_values.contains(&0) {
            return Err(Error::invalid("k values must be positive"));
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            min_item_count: self.min_item_count,
            min_profile_size: self.min_profile_size,
            threshold: self.threshold,
            test_fraction: self.test_fraction,
            seed: self.synthetic.seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            measure: self.measure,
            decode: self.decode,
            cutoff: self.cutoff,
            exclude_inputs: self.exclude_inputs,
        }
    }

    pub fn load_dataset(&self) -> Result<ProfileDataset> {
        match &self.data {
            Some(path) => data::load_profiles_path(path, &self.load_options()),
            None => data::generate_synthetic(&SyntheticSpec {
                test_fraction: self.test_fraction,
                ..self.synthetic
            }),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.synthetic;
        writeln!(
            f,
            "data={}",
            self.data.as_ref().map_or("none".into(), |p| p.display().to_string())
        )?;
        writeln!(f, "format={}", self.format)?;
        writeln!(f, "min_item_count={}", self.min_item_count)?;
        writeln!(f, "min_profile_size={}", self.min_profile_size)?;
        writeln!(f, "threshold={}", opt(&self.threshold))?;
        writeln!(f, "test_fraction={}", self.test_fraction)?;
        writeln!(f, "d={}", s.d)?;
        writeln!(f, "n={}", s.n)?;
        writeln!(f, "clusters={}", s.clusters)?;
        writeln!(f, "min_profile={}", s.min_profile)?;
        writeln!(f, "max_profile={}", s.max_profile)?;
        writeln!(f, "noise={}", s.noise)?;
        writeln!(f, "popularity_skew={}", s.popularity_skew)?;
        writeln!(f, "data_seed={}", s.seed)?;
        writeln!(f, "m_in={}", opt(&self.m_in))?;
        writeln!(f, "m_out={}", opt(&self.m_out))?;
        writeln!(f, "k={}", self.k)?;
        let mode = match self.hash_mode {
            HashMode::Matrix => "matrix",
            HashMode::DoubleHashing => "double",
        };
        writeln!(f, "hash_mode={mode}")?;
        writeln!(f, "seeds={}", list(&self.seeds))?;
        writeln!(f, "hidden={}", list(&self.hidden))?;
        writeln!(f, "optimizer={}", self.optimizer)?;
        writeln!(f, "lr={}", self.optimizer.learning_rate)?;
        writeln!(f, "clip_norm={}", opt(&self.optimizer.clip_norm))?;
        match self.optimizer.kind {
            OptimizerKind::SgdMomentum { momentum } => writeln!(f, "momentum={momentum}")?,
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                writeln!(f, "beta1={beta1}")?;
                writeln!(f, "beta2={beta2}")?;
                writeln!(f, "epsilon={epsilon}")?;
            }
            OptimizerKind::RmsProp { decay, epsilon } => {
                writeln!(f, "decay={decay}")?;
                writeln!(f, "epsilon={epsilon}")?;
            }
        }
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "batch_size={}", self.batch_size)?;
        writeln!(f, "cbe={}", self.cbe)?;
        writeln!(f, "decode={}", self.decode)?;
        if let DecodeMode::Nll { epsilon } = self.decode {
            writeln!(f, "nll_epsilon={epsilon}")?;
        }
        writeln!(f, "top_n={}", self.top_n)?;
        writeln!(f, "measure={}", self.measure)?;
        writeln!(f, "cutoff={}", opt(&self.cutoff))?;
        writeln!(f, "exclude_inputs={}", self.exclude_inputs)?;
        writeln!(f, "m_ratios={}", list(&self.m_ratios))?;
        writeln!(f, "k_values={}", list(&self.k_values))?;
        writeln!(f, "parallel={}", self.parallel)
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply(s)?;
        Ok(c)
    }
}

/// Result of one trained and evaluated model.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub m_in: Option<usize>,
    pub m_out: Option<usize>,
    pub k: usize,
    pub train: TrainReport,
    pub evaluation: EvaluationResult,
}

fn projection(
    config: &ExperimentConfig,
    d: usize,
    m: usize,
    seed: u64,
    cbe_seed: u64,
    instances: impl FnOnce() -> Vec<crate::codec::SparseInstance>,
) -> Result<HashFamily> {
    if m > d {
        return Err(Error::invalid(format!("m={m} exceeds d={d}")));
    }
    let family = HashFamilySpec {
        mode: config.hash_mode,
        d,
        m,
        k: config.k,
        seed,
    }
    .build()?;
    if config.cbe {
        Ok(HashFamily::Matrix(steer_collisions(
            &instances(),
            &family.to_matrix(),
            cbe_seed,
        )?))
    } else {
        Ok(family)
    }
}

/// Input and output projections for `seed`; `None` where the config trains
/// on raw items.
pub fn build_projections(
    config: &ExperimentConfig,
    dataset: &ProfileDataset,
    seed: u64,
) -> Result<(Option<HashFamily>, Option<HashFamily>)> {
    let d = dataset.d;
    let h_in = config
        .m_in
        .map(|m| {
            projection(config, d, m, derive(seed, 1), derive(seed, 5), || {
                dataset.train_inputs()
            })
        })
        .transpose()?;
    let h_out = config
        .m_out
        .map(|m| {
            projection(config, d, m, derive(seed, 2), derive(seed, 6), || {
                dataset.train_outputs()
            })
        })
        .transpose()?;
    Ok((h_in, h_out))
}

fn as_projector(h: &Option<HashFamily>) -> Option<&dyn Projector> {
    h.as_ref().map(|h| h as &dyn Projector)
}

/// A trained network with the projections it was trained through.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub net: Network<f32>,
    pub h_in: Option<HashFamily>,
    pub h_out: Option<HashFamily>,
    pub report: TrainReport,
}

/// Trains one model; `seed` drives the projections, initialisation,
/// shuffling and collision steering.
pub fn fit(config: &ExperimentConfig, dataset: &ProfileDataset, seed: u64) -> Result<Fitted> {
    config.validate()?;
    let (h_in, h_out) = build_projections(config, dataset, seed)?;
    let mut sizes = vec![config.m_in.unwrap_or(dataset.d)];
    sizes.extend(&config.hidden);
    sizes.push(config.m_out.unwrap_or(dataset.d));
    let mut net = Network::<f32>::new(&NetworkSpec {
        layer_sizes: sizes,
        init_seed: derive(seed, 3),
    })?;
    let train_cfg = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        shuffle_seed: derive(seed, 4),
    };
    let report = trainer::train(
        &mut net,
        &dataset.train,
        as_projector(&h_in),
        as_projector(&h_out),
        config.optimizer,
        &train_cfg,
    )?;
    Ok(Fitted {
        net,
        h_in,
        h_out,
        report,
    })
}

impl Fitted {
    /// Scores the network on the test split.
    pub fn evaluate(&self, config: &ExperimentConfig, dataset: &ProfileDataset) -> Result<EvaluationResult> {
        trainer::evaluate(
            &self.net,
            &dataset.test,
            as_projector(&self.h_in),
            as_projector(&self.h_out),
            &config.eval_config(),
        )
    }
}

/// [`fit`] followed by evaluation on the test split.
pub fn run_once(config: &ExperimentConfig, dataset: &ProfileDataset, seed: u64) -> Result<RunOutcome> {
    let mut fitted = fit(config, dataset, seed)?;
    let evaluation = fitted.evaluate(config, dataset)?;
    fitted.report.evaluation = Some(evaluation);
    Ok(RunOutcome {
        seed,
        m_in: config.m_in,
        m_out: config.m_out,
        k: config.k,
        train: fitted.report,
        evaluation,
    })
}

/// One point of a sweep; `k == 0` marks the no-embedding baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub k: usize,
    pub m: Option<usize>,
    pub dim_ratio: f64,
}

/// Per-seed measurements of one cell. Diverged runs hold NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellRun {
    pub cell: SweepCell,
    pub seed: u64,
    pub score: f64,
    pub epoch_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub measure: Measure,
    pub d: usize,
    /// Sorted by `(k, m/d)`; the baseline comes first.
    pub rows: Vec<ReportRow>,
    pub runs: Vec<CellRun>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl SweepReport {
    pub fn write_report<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            r.write_tsv(&mut w)?;
        }
        Ok(())
    }

    /// One line per (cell, seed) with ratios against that seed's baseline.
    pub fn write_plot_data<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k\tm/d\tseed\tS_i\tS_i/S_0\tT_train/T_0\tT_eval/T_0")?;
        for r in &self.runs {
            let base = self.runs.iter().find(|b| b.cell.k == 0 && b.seed == r.seed).unwrap();
            writeln!(
                w,
                "{}\t{:.4}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.cell.k,
                r.cell.dim_ratio,
                r.seed,
                r.score,
                r.score / base.score,
                r.epoch_seconds / base.epoch_seconds,
                r.eval_seconds / base.eval_seconds
            )?;
        }
        Ok(())
    }

    /// Mean score ratio of the cell closest to `(k, dim_ratio)`.
    pub fn row(&self, k: usize, dim_ratio: f64) -> Option<&ReportRow> {
        self.rows.iter().filter(|r| r.k == k).min_by(|a, b| {
            (a.dim_ratio - dim_ratio)
                .abs()
                .total_cmp(&(b.dim_ratio - dim_ratio).abs())
        })
    }
}

/// The baseline plus every `(k, m/d)` combination, in report order.
pub fn sweep_cells(config: &ExperimentConfig, d: usize) -> Vec<SweepCell> {
    let mut cells = vec![SweepCell {
        k: 0,
        m: None,
        dim_ratio: 1.0,
    }];
    for &k in &config.k_values {
        for &r in &config.m_ratios {
            let m = ((r * d as f64).round() as usize).clamp(1, d);
            cells.push(SweepCell {
                k,
                m: Some(m),
                dim_ratio: m as f64 / d as f64,
            });
        }
    }
    cells.sort_by(|a, b| a.k.cmp(&b.k).then(a.dim_ratio.total_cmp(&b.dim_ratio)));
    cells.dedup();
    cells
}

fn run_cell(config: &ExperimentConfig, dataset: &ProfileDataset, cell: SweepCell, seed: u64) -> Result<CellRun> {
    let mut cfg = config.clone();
    cfg.m_in = cell.m;
    cfg.m_out = cell.m;
    if cell.k > 0 {
        cfg.k = cell.k;
    }
    match run_once(&cfg, dataset, seed) {
        Ok(out) => Ok(CellRun {
            cell,
            seed,
            score: out.evaluation.score,
            epoch_seconds: out.train.mean_epoch_seconds(),
            eval_seconds: out.evaluation.wall_time,
        }),
        Err(Error::NonFinite(what)) => {
            log::warn!(
                "cell k={} m/d={:.4} seed={seed} diverged ({what})",
                cell.k,
                cell.dim_ratio
            );
            Ok(CellRun {
                cell,
                seed,
                score: f64::NAN,
                epoch_seconds: f64::NAN,
                eval_seconds: f64::NAN,
            })
        }
        Err(e) => Err(e),
    }
}

/// Trains and evaluates every sweep cell for every seed. With
/// `config.parallel > 1` independent runs share that many threads; their
/// timings then include contention.
pub fn sweep(config: &ExperimentConfig, dataset: &ProfileDataset) -> Result<SweepReport> {
    config.validate()?;
    let cells = sweep_cells(config, dataset.d);
    let jobs: Vec<(SweepCell, u64)> = cells
        .iter()
        .flat_map(|&c| config.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<Mutex<Option<Result<CellRun>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(cell, seed)) = jobs.get(i) else { break };
        let r = run_cell(config, dataset, cell, seed);
        if let Ok(run) = &r {
            log::info!(
                "k={} m/d={:.4} seed={} score={:.6}",
                cell.k,
                cell.dim_ratio,
                seed,
                run.score
            );
        }
        *results[i].lock().unwrap() = Some(r);
    };
    let threads = config.parallel.clamp(1, jobs.len().max(1));
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let runs = results
        .into_iter()
        .map(|r| r.into_inner().unwrap().unwrap())
        .collect::<Result<Vec<_>>>()?;

    let summary = |cell: &SweepCell| {
        let rs = || runs.iter().filter(move |r| r.cell == *cell);
        (
            mean(rs().map(|r| r.score)),
            mean(rs().map(|r| r.epoch_seconds)),
            mean(rs().map(|r| r.eval_seconds)),
        )
    };
    let (s0, t0, e0) = summary(&cells[0]);
    let rows = cells
        .iter()
        .map(|c| {
            let (s, t, e) = summary(c);
            ReportRow {
                measure: config.measure,
                score: s,
                baseline_score: s0,
                dim_ratio: c.dim_ratio,
                k: c.k,
                train_time_ratio: t / t0,
                eval_time_ratio: e / e0,
            }
        })
        .collect();
    Ok(SweepReport {
        measure: config.measure,
        d: dataset.d,
        rows,
        runs,
    })
}
