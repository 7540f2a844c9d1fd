//! Experiment configuration, repeated runs and report files.
//!
//! A run is reproducible from the configuration and its master seed alone.
//! Wall-clock timing goes to a separate file so that reports are
//! byte-identical across executions.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    invalidity_rate, locality_experiment, scalability_experiment, AnalysisSetup, InvalidityResult, LocalityConfig,
    ScalabilityConfig,
};
use crate::data::{self, CsvOptions, DataError, Dataset, Split};
use crate::evolution::{
    self, evolve, ConfigError, EvolutionConfig, FlatRepr, GenerationStats, ModularRepr, Objective,
};
use crate::grammar::{build_network_grammar, build_neuron_grammar, NeuronGrammarOptions};
use crate::mapping::Variant;
use crate::network::{output_count, Network};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("dataset: {0}")]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: Option<usize>,
        #[serde(default)]
        has_header: bool,
    },
    Blobs {
        n: usize,
        d: usize,
        c: usize,
        separation: f64,
    },
    TwoMoons {
        n: usize,
        noise: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Protocol {
    /// A fresh shuffled split per repeat.
    Holdout { train_fraction: f64 },
    /// One run per fold; `repeats` is ignored.
    Kfold { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DatasetSource,
    pub protocol: Protocol,
    pub stratify: bool,
    pub normalize: bool,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            source: DatasetSource::TwoMoons { n: 240, noise: 0.05 },
            protocol: Protocol::Holdout { train_fraction: 0.7 },
            stratify: false,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvalidityConfig {
    pub methods: Vec<Variant>,
    pub samples: usize,
}

impl Default for InvalidityConfig {
    fn default() -> Self {
        Self {
            methods: vec![Variant::Mge, Variant::GeBaseline],
            samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub repeats: usize,
    /// Where reports go; not part of the echoed configuration.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub evolution: EvolutionConfig,
    pub grammar: NeuronGrammarOptions,
    pub dataset: DatasetSpec,
    pub analysis: AnalysisSetup,
    pub invalidity: InvalidityConfig,
    pub locality: LocalityConfig,
    pub scalability: ScalabilityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: 30,
            out_dir: PathBuf::from("runs"),
            evolution: EvolutionConfig::default(),
            grammar: NeuronGrammarOptions::default(),
            dataset: DatasetSpec::default(),
            analysis: AnalysisSetup::default(),
            invalidity: InvalidityConfig::default(),
            locality: LocalityConfig::default(),
            scalability: ScalabilityConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths in the file are relative to the file itself.
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        if let DatasetSource::Csv { path: p, .. } = &mut cfg.dataset.source {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.evolution.validate().map_err(|e| match e {
            ConfigError::Invalid { field, message } => ExperimentError::Invalid(format!("evolution.{field}: {message}")),
        })?;
        if self.repeats == 0 {
            return Err(ExperimentError::Invalid("repeats: must be at least 1".into()));
        }
        match self.dataset.protocol {
            Protocol::Holdout { train_fraction } if !(train_fraction > 0.0 && train_fraction < 1.0) => {
                return Err(ExperimentError::Invalid(format!(
                    "dataset.protocol.train_fraction: {train_fraction} not in (0, 1)"
                )))
            }
            Protocol::Kfold { k } if k < 2 => {
                return Err(ExperimentError::Invalid(format!("dataset.protocol.k: {k} < 2")))
            }
            _ => {}
        }
        let (lo, hi) = self.analysis.sigma_range;
        if lo < 1 || lo > hi {
            return Err(ExperimentError::Invalid(format!("analysis.sigma_range: [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Number of runs the evolve command performs.
    pub fn runs(&self) -> usize {
        match self.dataset.protocol {
            Protocol::Holdout { .. } => self.repeats,
            Protocol::Kfold { k } => k,
        }
    }
}

const DATA_STREAM: u64 = 0xda7a;
const SPLIT_STREAM: u64 = 0x5917;

pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset, ExperimentError> {
    let mut rng = stream(seed, &[DATA_STREAM]);
    Ok(match &spec.source {
        DatasetSource::Csv {
            path,
            label_column,
            has_header,
        } => data::load_csv(
            path,
            CsvOptions {
                label_column: *label_column,
                has_header: *has_header,
            },
        )?,
        DatasetSource::Blobs { n, d, c, separation } => data::make_blobs(*n, *d, *c, *separation, &mut rng)?,
        DatasetSource::TwoMoons { n, noise } => data::make_two_moons(*n, *noise, &mut rng)?,
    })
}

/// The train/test partitions of every run.
pub fn run_splits(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Vec<Split>, ExperimentError> {
    let spec = &cfg.dataset;
    let splits = match spec.protocol {
        Protocol::Holdout { train_fraction } => (0..cfg.repeats)
            .map(|i| {
                let mut rng = stream(cfg.seed, &[SPLIT_STREAM, i as u64]);
                data::split(dataset, train_fraction, spec.stratify, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?,
        Protocol::Kfold { k } => data::kfold(dataset, k, &mut stream(cfg.seed, &[SPLIT_STREAM]))?,
    };
    Ok(if spec.normalize {
        splits.iter().map(|s| data::normalize_minmax(s).0).collect()
    } else {
        splits
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: usize,
    pub seed: u64,
    pub best_loss: f64,
    pub rmse_train: f64,
    pub rmse_test: f64,
    pub acc_train: f64,
    pub acc_test: f64,
    pub layers: usize,
    pub neurons: usize,
    pub features: usize,
    pub connections: usize,
    pub flops: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

pub const METRICS: [&str; 9] = [
    "best_loss",
    "rmse_train",
    "rmse_test",
    "acc_train",
    "acc_test",
    "layers",
    "neurons",
    "features",
    "flops",
];

impl RunRow {
    fn metric(&self, name: &str) -> f64 {
        match name {
            "best_loss" => self.best_loss,
            "rmse_train" => self.rmse_train,
            "rmse_test" => self.rmse_test,
            "acc_train" => self.acc_train,
            "acc_test" => self.acc_test,
            "layers" => self.layers as f64,
            "neurons" => self.neurons as f64,
            "features" => self.features as f64,
            "flops" => self.flops as f64,
            _ => unreachable!("unknown metric {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub dataset: String,
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<(String, MeanStd)>,
    /// Fitness evaluations per run, `mu * (generations + 1)`.
    pub evaluations_per_run: usize,
}

impl RunReport {
    pub fn aggregate_of(&self, metric: &str) -> Option<MeanStd> {
        self.aggregate.iter().find(|(m, _)| m == metric).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("metric,mean,std\n");
        for (name, s) in &self.aggregate {
            let _ = writeln!(out, "{name},{},{}", s.mean, s.std);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Artifacts of one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub row: RunRow,
    pub history: Vec<GenerationStats>,
    pub best_network: Network,
    pub best_genotype_json: String,
    pub seconds: f64,
}

pub fn history_csv(history: &[GenerationStats]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "generation",
        "best_loss",
        "mean_loss",
        "best_neurons",
        "best_connections",
        "mean_connections",
        "invalid",
    ])
    .expect("in-memory csv");
    for s in history {
        w.write_record([
            s.generation.to_string(),
            s.best_loss.to_string(),
            s.mean_loss.to_string(),
            s.best_neurons.to_string(),
            s.best_connections.to_string(),
            s.mean_connections.to_string(),
            s.invalid.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
}

fn run_one(cfg: &ExperimentConfig, run: usize, split: &Split) -> Result<RunArtifacts, ExperimentError> {
    let started = Instant::now();
    let seed = derive_seed(cfg.seed, &[run as u64]);
    let evo = EvolutionConfig {
        seed,
        ..cfg.evolution.clone()
    };
    let (features, classes) = (split.train.features(), split.train.classes());
    let outputs = output_count(classes);
    let objective = evo.objective;
    let train = &split.train;
    let loss = |n: &Network| match objective {
        Objective::CrossEntropy => evolution::cross_entropy(n, train),
        Objective::Mse => evolution::mse(n, train),
        Objective::Connections => -(n.metrics().connections as f64),
    };
    let invalid = |e: ConfigError| ExperimentError::Invalid(e.to_string());
    let (best, history, evaluations, genotype_json) = if evo.variant == Variant::GeBaseline {
        let repr = FlatRepr {
            grammar: build_network_grammar(features, outputs, &cfg.grammar),
            classes,
            length_range: evo.ge_length_range,
            max_wraps: evo.max_wraps,
            block: evo.gene_length,
        };
        let r = evolve(&evo, &repr, loss, |_, _| {}).map_err(invalid)?;
        let json = serde_json::to_string(&r.best.genotype).expect("genotype serializes");
        (r.best.phenotype, r.history, r.evaluations, json)
    } else {
        let repr = ModularRepr {
            grammar: build_neuron_grammar(features, outputs, evo.variant, &cfg.grammar),
            variant: evo.variant,
            classes,
            sigma_range: evo.sigma_range,
            gene_length: evo.gene_length,
        };
        let r = evolve(&evo, &repr, loss, |_, _| {}).map_err(invalid)?;
        (r.best.phenotype, r.history, r.evaluations, r.best.genotype.to_json())
    };
    let net = best
        .network()
        .cloned()
        .ok_or_else(|| ExperimentError::Invalid(format!("run {run}: no valid individual in the final population")))?;
    let m = net.metrics();
    let row = RunRow {
        run,
        seed,
        best_loss: history.last().map_or(f64::NAN, |s| s.best_loss),
        rmse_train: evolution::rmse(&net, &split.train),
        rmse_test: evolution::rmse(&net, &split.test),
        acc_train: evolution::accuracy(&net, &split.train),
        acc_test: evolution::accuracy(&net, &split.test),
        layers: m.layers,
        neurons: m.neurons,
        features: m.features_used,
        connections: m.connections,
        flops: m.flops,
        evaluations,
    };
    Ok(RunArtifacts {
        row,
        history,
        best_network: net,
        best_genotype_json: genotype_json,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every repeat (or fold) and aggregates the results.
pub fn run_evolve(cfg: &ExperimentConfig) -> Result<(RunReport, Vec<RunArtifacts>), ExperimentError> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset, cfg.seed)?;
    let splits = run_splits(cfg, &dataset)?;
    let runs: Vec<RunArtifacts> = splits
        .par_iter()
        .enumerate()
        .map(|(i, s)| run_one(cfg, i, s))
        .collect::<Result<_, _>>()?;
    let rows: Vec<RunRow> = runs.iter().map(|r| r.row.clone()).collect();
    let aggregate = METRICS
        .iter()
        .map(|&m| {
            let v: Vec<f64> = rows.iter().map(|r| r.metric(m)).collect();
            (m.to_string(), MeanStd::of(&v))
        })
        .collect();
    let report = RunReport {
        master_seed: cfg.seed,
        config: cfg.clone(),
        dataset: dataset.name.clone(),
        runs: rows,
        aggregate,
        evaluations_per_run: cfg.evolution.mu * (cfg.evolution.generations + 1),
    };
    Ok((report, runs))
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile_in(dir, path)?;
    io::Write::write_all(&mut tmp.1, contents).map_err(io_err(&tmp.0))?;
    tmp.1.sync_all().map_err(io_err(&tmp.0))?;
    drop(tmp.1);
    fs::rename(&tmp.0, path).map_err(io_err(path))
}

fn tempfile_in(dir: &Path, target: &Path) -> Result<(PathBuf, fs::File), ExperimentError> {
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for attempt in 0u32.. {
        let p = dir.join(format!(".{name}.{}.{attempt}.tmp", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&p) {
            Ok(f) => return Ok((p, f)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&p)(e)),
        }
    }
    unreachable!()
}

#[derive(Debug, Serialize)]
struct Timing {
    total_seconds: f64,
    run_seconds: Vec<f64>,
}

/// Writes the report, per-run artifacts and timing under `out_dir`.
pub fn write_evolve(
    out_dir: &Path,
    report: &RunReport,
    runs: &[RunArtifacts],
    total_seconds: f64,
) -> Result<(), ExperimentError> {
    for r in runs {
        let dir = out_dir.join(format!("run_{:03}", r.row.run));
        write_atomic(&dir.join("history.csv"), history_csv(&r.history).as_bytes())?;
        write_atomic(&dir.join("best_network.json"), r.best_network.to_json().as_bytes())?;
        write_atomic(&dir.join("best_network.txt"), r.best_network.dump().as_bytes())?;
        write_atomic(&dir.join("best_genotype.json"), r.best_genotype_json.as_bytes())?;
    }
    write_atomic(&out_dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&out_dir.join("aggregate.csv"), report.aggregate_csv().as_bytes())?;
    write_atomic(&out_dir.join("report.json"), report.to_json().as_bytes())?;
    let timing = Timing {
        total_seconds,
        run_seconds: runs.iter().map(|r| r.seconds).collect(),
    };
    write_atomic(
        &out_dir.join("timing.json"),
        serde_json::to_string_pretty(&timing).expect("timing serializes").as_bytes(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    Invalidity,
    Locality,
    Scalability,
}

/// Runs one analysis and writes `<kind>.csv` and `<kind>.json` into
/// `out_dir`. Returns the CSV text.
pub fn run_analysis(cfg: &ExperimentConfig, kind: AnalysisKind, out_dir: &Path) -> Result<String, ExperimentError> {
    cfg.validate()?;
    let setup = &cfg.analysis;
    let (name, csv_text, json) = match kind {
        AnalysisKind::Invalidity => {
            let results: Vec<InvalidityResult> = cfg
                .invalidity
                .methods
                .iter()
                .enumerate()
                .map(|(i, &m)| invalidity_rate(m, cfg.invalidity.samples, setup, derive_seed(cfg.seed, &[i as u64])))
                .collect();
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &results {
                w.serialize(r).expect("in-memory csv");
            }
            let text = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8");
            ("invalidity", text, serde_json::to_string_pretty(&results))
        }
        AnalysisKind::Locality => {
            let rep = locality_experiment(setup, &cfg.locality, cfg.seed);
            let mut buf = Vec::new();
            rep.write_csv(&mut buf).expect("in-memory csv");
            ("locality", String::from_utf8(buf).expect("utf8"), serde_json::to_string_pretty(&rep))
        }
        AnalysisKind::Scalability => {
            let rep = scalability_experiment(setup, &cfg.scalability, cfg.seed)
                .map_err(|e| ExperimentError::Invalid(format!("scalability: {e}")))?;
            let mut buf = Vec::new();
            rep.write_csv(&mut buf).expect("in-memory csv");
            ("scalability", String::from_utf8(buf).expect("utf8"), serde_json::to_string_pretty(&rep))
        }
    };
    write_atomic(&out_dir.join(format!("{name}.csv")), csv_text.as_bytes())?;
    write_atomic(
        &out_dir.join(format!("{name}.json")),
        json.expect("report serializes").as_bytes(),
    )?;
    Ok(csv_text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_echoes_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.evolution.mu, 200);
        assert_eq!(cfg.evolution.p_c, 0.9);
        assert_eq!(cfg.evolution.tournament_r, 7);
        assert_eq!(cfg.evolution.p_elite, 0.05);
        assert_eq!(cfg.evolution.gene_length, 100);
        assert_eq!(cfg.evolution.max_wraps, 0);
        assert_eq!(cfg.evolution.p_m_choices, [0.001, 0.002, 0.003, 0.01]);
    }

    #[test]
    fn parses_nested_sections() {
        let text = r#"
seed = 7
repeats = 2

[evolution]
mu = 10
generations = 3
variant = "beta"
objective = "mse"

[grammar]
weight_digits = { fixed = 2 }

[dataset]
normalize = false
source = { kind = "blobs", n = 60, d = 2, c = 3, separation = 5.0 }
protocol = { kind = "kfold", k = 3 }
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.evolution.variant, Variant::Beta);
        assert_eq!(cfg.runs(), 3);
        assert!(matches!(cfg.dataset.source, DatasetSource::Blobs { c: 3, .. }));
    }

    #[test]
    fn validation_names_the_field() {
        let err = ExperimentConfig::from_toml("[evolution]\np_elite = 0.0\n").unwrap_err();
        assert!(err.to_string().contains("evolution.p_elite"), "{err}");
        let err = ExperimentConfig::from_toml("[evolution]\nmuu = 3\n").unwrap_err();
        assert!(err.to_string().contains("muu"), "{err}");
    }

    #[test]
    fn small_run_report() {
        let mut cfg = ExperimentConfig {
            repeats: 2,
            ..ExperimentConfig::default()
        };
        cfg.evolution.mu = 10;
        cfg.evolution.generations = 3;
        cfg.dataset.source = DatasetSource::Blobs {
            n: 60,
            d: 2,
            c: 2,
            separation: 6.0,
        };
        let (report, runs) = run_evolve(&cfg).unwrap();
        assert_eq!(report.runs.len(), 2);
        assert_eq!(runs[0].history.len(), 4);
        assert_eq!(report.evaluations_per_run, 40);
        assert!(report.runs.iter().all(|r| r.evaluations == 40));
        let acc: Vec<f64> = report.runs.iter().map(|r| r.acc_test).collect();
        assert_eq!(report.aggregate_of("acc_test").unwrap(), MeanStd::of(&acc));
    }
}
