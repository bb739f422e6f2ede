//! Command-line harness: configuration resolution and the `train`,
//! `predict`, `benchmark` and `synth` commands.
//!
//! Configuration is a flat `key = value` file (see [`RunConfig`] for the
//! keys). Values are resolved as defaults, then the `--config` file, then
//! `--set key=value` pairs, then the dedicated flags. The resolved
//! configuration is echoed into every output directory and can be fed back
//! through `--config` to repeat a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{
    self, CleaningSummary, Dataset, LoadOptions, PipelineOptions, RawRecord, Subset, COLUMNS,
};
use crate::error::{Error, Result};
use crate::ga::{self, GaConfig, GaMode};
use crate::ica::{self, IcaConfig};
use crate::kv;
use crate::metrics::{self, EvalReport, Unit};
use crate::mlp::{self, Activation, Matrix, MlpTopology, ParamVector};
use crate::model::SavedModel;
use crate::objective::MseObjective;
use crate::optim::{sphere, Bounds, Country, Objective, RunTrace, TraceKind};
use crate::rng::derive_seed;

pub const CONFIG_FILE: &str = "config.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const TEST_REPORT_FILE: &str = "test_report.json";
pub const MODEL_FILE: &str = "model.txt";
pub const NORMALIZATION_FILE: &str = "normalization.txt";
pub const TRAIN_OUTPUTS_FILE: &str = "train_outputs.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const BENCHMARK_FILE: &str = "benchmark.json";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const SYNTHETIC_FILE: &str = "synthetic.csv";

/// Scores closer than this are a tie.
pub const TIE_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Ica,
    Ga,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Ica => "ica",
            OptimizerKind::Ga => "ga",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "ica" => Ok(OptimizerKind::Ica),
            "ga" => Ok(OptimizerKind::Ga),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }

    fn trace_kind(self) -> TraceKind {
        match self {
            OptimizerKind::Ica => TraceKind::Ica,
            OptimizerKind::Ga => TraceKind::Ga,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitChoice {
    Normalized,
    Richter,
    Both,
}

impl UnitChoice {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(UnitChoice::Normalized),
            "richter" => Ok(UnitChoice::Richter),
            "both" => Ok(UnitChoice::Both),
            other => Err(Error::Config(format!("unknown unit `{other}`"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            UnitChoice::Normalized => "normalized",
            UnitChoice::Richter => "richter",
            UnitChoice::Both => "both",
        }
    }

    fn units(self) -> Vec<Unit> {
        match self {
            UnitChoice::Normalized => vec![Unit::Normalized],
            UnitChoice::Richter => vec![Unit::Richter],
            UnitChoice::Both => vec![Unit::Normalized, Unit::Richter],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic {
        rows: usize,
        seed: u64,
        noise_sd: f64,
    },
}

/// Fully resolved run configuration.
///
/// | key | default |
/// |-----|---------|
/// | `data.source` | `synthetic` (`csv` when `data.path` is set) |
/// | `data.path` | - |
/// | `data.synthetic.rows` / `.seed` / `.noise_sd` | `1000` / `0` / `0.1` |
/// | `data.strict` | `false` |
/// | `data.missing_sentinels` | `-999` (comma separated) |
/// | `data.column.<name>` | the canonical column name |
/// | `split.train_fraction` / `.seed` / `.fit_norm_on_train` | `0.9` / `seed` / `false` |
/// | `topology.hidden` | `16,24` |
/// | `topology.hidden_activation` / `.output_activation` | `tansig` / `purelin` |
/// | `optimizer` | `ica` |
/// | `seed`, `threads`, `unit` | `0`, `1`, `both` |
/// | `report.histogram_bins` | `20` |
/// | `ica.countries` / `.imperialists` / `.decades` | `1000` / `100` / `200` |
/// | `ica.beta` / `.zeta` / `.revolution_rate` | `2` / `0.05` / `0.1` |
/// | `ica.bounds` / `.convergence_epsilon` / `.seed` | `-1,1` / `1e-6` / `seed` |
/// | `ga.population` / `.generations` | `1000` / `200` |
/// | `ga.elite_fraction` / `.crossover_fraction` / `.mutation_fraction` | `0.15` / `0.5` / `0.35` |
/// | `ga.per_gene_mutation_prob` / `.mutation_sd_fraction` | `0.02` / `0.1` |
/// | `ga.bounds` / `.mode` / `.seed` | `-1,1` / `composition` / `seed` |
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub load: LoadOptions,
    pub pipeline: PipelineOptions,
    pub topology: MlpTopology,
    pub optimizer: OptimizerKind,
    pub ica: IcaConfig,
    pub ga: GaConfig,
    pub seed: u64,
    pub threads: usize,
    pub unit: UnitChoice,
    pub histogram_bins: usize,
}

fn defaults() -> BTreeMap<String, String> {
    let pairs = [
        ("data.synthetic.rows", "1000"),
        ("data.synthetic.seed", "0"),
        ("data.synthetic.noise_sd", "0.1"),
        ("data.strict", "false"),
        ("data.missing_sentinels", "-999"),
        ("split.train_fraction", "0.9"),
        ("split.fit_norm_on_train", "false"),
        ("topology.hidden", "16,24"),
        ("topology.hidden_activation", "tansig"),
        ("topology.output_activation", "purelin"),
        ("optimizer", "ica"),
        ("seed", "0"),
        ("threads", "1"),
        ("unit", "both"),
        ("report.histogram_bins", "20"),
        ("ica.countries", "1000"),
        ("ica.imperialists", "100"),
        ("ica.decades", "200"),
        ("ica.beta", "2"),
        ("ica.zeta", "0.05"),
        ("ica.revolution_rate", "0.1"),
        ("ica.bounds", "-1,1"),
        ("ica.convergence_epsilon", "1e-6"),
        ("ga.population", "1000"),
        ("ga.generations", "200"),
        ("ga.elite_fraction", "0.15"),
        ("ga.crossover_fraction", "0.5"),
        ("ga.mutation_fraction", "0.35"),
        ("ga.per_gene_mutation_prob", "0.02"),
        ("ga.mutation_sd_fraction", "0.1"),
        ("ga.bounds", "-1,1"),
        ("ga.mode", "composition"),
    ];
    let mut m: BTreeMap<String, String> = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    for c in COLUMNS {
        m.insert(format!("data.column.{c}"), c.to_string());
    }
    m
}

const OPTIONAL_KEYS: [&str; 5] = [
    "data.source",
    "data.path",
    "split.seed",
    "ica.seed",
    "ga.seed",
];

fn known_key(k: &str) -> bool {
    OPTIONAL_KEYS.contains(&k) || defaults().contains_key(k)
}

fn get<'m>(m: &'m BTreeMap<String, String>, k: &str) -> &'m str {
    m.get(k).map(String::as_str).unwrap_or("")
}

fn num<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<T> {
    get(m, k)
        .parse::<T>()
        .map_err(|_| Error::Config(format!("`{k}` has invalid value `{}`", get(m, k))))
}

fn flag(m: &BTreeMap<String, String>, k: &str) -> Result<bool> {
    match get(m, k) {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "`{k}` must be true or false, got `{other}`"
        ))),
    }
}

fn bounds(m: &BTreeMap<String, String>, k: &str) -> Result<Bounds> {
    let raw = get(m, k);
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("`{k}` must be `low,high`, got `{raw}`")))
    };
    if parts.len() != 2 {
        return Err(Error::Config(format!(
            "`{k}` must be `low,high`, got `{raw}`"
        )));
    }
    let (low, high) = (parse(parts[0])?, parse(parts[1])?);
    if !(low < high) {
        return Err(Error::Config(format!("`{k}` needs low < high")));
    }
    Ok(Bounds::uniform(low, high))
}

fn bounds_text(b: &Bounds) -> String {
    match b {
        Bounds::Uniform { low, high } => format!("{low},{high}"),
        Bounds::PerDimension(_) => unreachable!("configs only carry uniform bounds"),
    }
}

impl RunConfig {
    /// Resolves defaults, then `layers` in order (later wins).
    pub fn resolve(layers: &[BTreeMap<String, String>]) -> Result<Self> {
        let mut m = defaults();
        for layer in layers {
            for (k, v) in layer {
                if !known_key(k) {
                    return Err(Error::Config(format!("unknown configuration key `{k}`")));
                }
                m.insert(k.clone(), v.clone());
            }
        }
        Self::from_map(&m)
    }

    fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let seed: u64 = num(m, "seed")?;
        let sub_seed = |k: &str| -> Result<u64> {
            if m.contains_key(k) {
                num(m, k)
            } else {
                Ok(seed)
            }
        };

        let source = match m.get("data.source").map(String::as_str) {
            Some(s) => s.to_string(),
            None if m.contains_key("data.path") => "csv".into(),
            None => "synthetic".into(),
        };
        let data = match source.as_str() {
            "csv" => {
                let p = get(m, "data.path");
                if p.is_empty() {
                    return Err(Error::Config("data.source = csv requires data.path".into()));
                }
                DataSource::Csv(PathBuf::from(p))
            }
            "synthetic" => DataSource::Synthetic {
                rows: num(m, "data.synthetic.rows")?,
                seed: num(m, "data.synthetic.seed")?,
                noise_sd: num(m, "data.synthetic.noise_sd")?,
            },
            other => return Err(Error::Config(format!("unknown data.source `{other}`"))),
        };

        let sentinels = get(m, "data.missing_sentinels")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad missing sentinel `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut load = LoadOptions {
            missing_sentinels: sentinels,
            strict: flag(m, "data.strict")?,
            ..LoadOptions::default()
        };
        for (i, c) in COLUMNS.iter().enumerate() {
            load.columns.names[i] = get(m, &format!("data.column.{c}")).to_string();
        }

        let pipeline = PipelineOptions {
            train_fraction: num(m, "split.train_fraction")?,
            split_seed: sub_seed("split.seed")?,
            fit_norm_on_train: flag(m, "split.fit_norm_on_train")?,
        };

        let hidden_raw = get(m, "topology.hidden");
        let hidden = if hidden_raw.is_empty() {
            Vec::new()
        } else {
            hidden_raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad hidden size `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        let topology = MlpTopology::with_activations(
            6,
            hidden,
            1,
            get(m, "topology.hidden_activation").parse::<Activation>()?,
            get(m, "topology.output_activation").parse::<Activation>()?,
        )?;

        let threads: usize = num(m, "threads")?;
        if threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }

        let ica = IcaConfig {
            num_countries: num(m, "ica.countries")?,
            num_imperialists: num(m, "ica.imperialists")?,
            num_decades: num(m, "ica.decades")?,
            assimilation_coefficient: num(m, "ica.beta")?,
            colony_power_weight: num(m, "ica.zeta")?,
            revolution_rate: num(m, "ica.revolution_rate")?,
            bounds: bounds(m, "ica.bounds")?,
            convergence_epsilon: num(m, "ica.convergence_epsilon")?,
            seed: sub_seed("ica.seed")?,
            threads,
        };
        let ga = GaConfig {
            population_size: num(m, "ga.population")?,
            num_generations: num(m, "ga.generations")?,
            elite_fraction: num(m, "ga.elite_fraction")?,
            crossover_fraction: num(m, "ga.crossover_fraction")?,
            mutation_fraction: num(m, "ga.mutation_fraction")?,
            per_gene_mutation_prob: num(m, "ga.per_gene_mutation_prob")?,
            mutation_sd_fraction: num(m, "ga.mutation_sd_fraction")?,
            bounds: bounds(m, "ga.bounds")?,
            mode: match get(m, "ga.mode") {
                "composition" => GaMode::Composition,
                "probabilistic" => GaMode::Probabilistic,
                other => return Err(Error::Config(format!("unknown ga.mode `{other}`"))),
            },
            seed: sub_seed("ga.seed")?,
            threads,
        };

        let config = Self {
            data,
            load,
            pipeline,
            topology,
            optimizer: OptimizerKind::parse(get(m, "optimizer"))?,
            ica,
            ga,
            seed,
            threads,
            unit: UnitChoice::parse(get(m, "unit"))?,
            histogram_bins: num(m, "report.histogram_bins")?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ica.validate()?;
        self.ga.validate()?;
        if self.histogram_bins == 0 {
            return Err(Error::Config(
                "report.histogram_bins must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form; resolving it again yields an equal config.
    pub fn to_text(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        match &self.data {
            DataSource::Csv(p) => {
                m.insert("data.source", "csv".into());
                m.insert("data.path", p.display().to_string());
            }
            DataSource::Synthetic {
                rows,
                seed,
                noise_sd,
            } => {
                m.insert("data.source", "synthetic".into());
                m.insert("data.synthetic.rows", rows.to_string());
                m.insert("data.synthetic.seed", seed.to_string());
                m.insert("data.synthetic.noise_sd", noise_sd.to_string());
            }
        }
        m.insert("data.strict", self.load.strict.to_string());
        m.insert(
            "data.missing_sentinels",
            self.load
                .missing_sentinels
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let mut columns = String::new();
        for (c, name) in COLUMNS.iter().zip(&self.load.columns.names) {
            columns.push_str(&format!("data.column.{c} = {name}\n"));
        }
        m.insert(
            "split.train_fraction",
            self.pipeline.train_fraction.to_string(),
        );
        m.insert("split.seed", self.pipeline.split_seed.to_string());
        m.insert(
            "split.fit_norm_on_train",
            self.pipeline.fit_norm_on_train.to_string(),
        );
        m.insert(
            "topology.hidden",
            self.topology
                .hidden_sizes()
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert(
            "topology.hidden_activation",
            self.topology.hidden_activation().to_string(),
        );
        m.insert(
            "topology.output_activation",
            self.topology.output_activation().to_string(),
        );
        m.insert("optimizer", self.optimizer.name().into());
        m.insert("seed", self.seed.to_string());
        m.insert("threads", self.threads.to_string());
        m.insert("unit", self.unit.name().into());
        m.insert("report.histogram_bins", self.histogram_bins.to_string());
        m.insert("ica.countries", self.ica.num_countries.to_string());
        m.insert("ica.imperialists", self.ica.num_imperialists.to_string());
        m.insert("ica.decades", self.ica.num_decades.to_string());
        m.insert("ica.beta", self.ica.assimilation_coefficient.to_string());
        m.insert("ica.zeta", self.ica.colony_power_weight.to_string());
        m.insert("ica.revolution_rate", self.ica.revolution_rate.to_string());
        m.insert("ica.bounds", bounds_text(&self.ica.bounds));
        m.insert(
            "ica.convergence_epsilon",
            self.ica.convergence_epsilon.to_string(),
        );
        m.insert("ica.seed", self.ica.seed.to_string());
        m.insert("ga.population", self.ga.population_size.to_string());
        m.insert("ga.generations", self.ga.num_generations.to_string());
        m.insert("ga.elite_fraction", self.ga.elite_fraction.to_string());
        m.insert(
            "ga.crossover_fraction",
            self.ga.crossover_fraction.to_string(),
        );
        m.insert(
            "ga.mutation_fraction",
            self.ga.mutation_fraction.to_string(),
        );
        m.insert(
            "ga.per_gene_mutation_prob",
            self.ga.per_gene_mutation_prob.to_string(),
        );
        m.insert(
            "ga.mutation_sd_fraction",
            self.ga.mutation_sd_fraction.to_string(),
        );
        m.insert("ga.bounds", bounds_text(&self.ga.bounds));
        m.insert(
            "ga.mode",
            match self.ga.mode {
                GaMode::Composition => "composition",
                GaMode::Probabilistic => "probabilistic",
            }
            .into(),
        );
        m.insert("ga.seed", self.ga.seed.to_string());

        let mut s = String::from("# resolved ica-mlp configuration\n");
        for (k, v) in m {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&columns);
        s
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s.into_bytes()
}

/// Loaded and cleaned records for a configured source.
pub fn load_records(config: &RunConfig) -> Result<(Vec<RawRecord>, CleaningSummary)> {
    match &config.data {
        DataSource::Csv(path) => dataset::load_csv(path, &config.load),
        DataSource::Synthetic {
            rows,
            seed,
            noise_sd,
        } => {
            let records = dataset::make_synthetic(*rows, *seed, *noise_sd)?;
            let n = records.len();
            Ok((
                records,
                CleaningSummary {
                    rows_read: n,
                    rows_dropped: 0,
                },
            ))
        }
    }
}

/// Runs the configured optimizer kind on `objective`.
pub fn optimize<O: Objective + ?Sized>(
    kind: OptimizerKind,
    config: &RunConfig,
    seed: u64,
    objective: &O,
    dim: usize,
) -> Result<(Country, RunTrace)> {
    match kind {
        OptimizerKind::Ica => {
            let c = IcaConfig {
                seed,
                ..config.ica.clone()
            };
            ica::run(&c, objective, dim)
        }
        OptimizerKind::Ga => {
            let c = GaConfig {
                seed,
                ..config.ga.clone()
            };
            ga::run(&c, objective, dim)
        }
    }
}

fn configured_seed(kind: OptimizerKind, config: &RunConfig) -> u64 {
    match kind {
        OptimizerKind::Ica => config.ica.seed,
        OptimizerKind::Ga => config.ga.seed,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetReport {
    pub subset: Subset,
    pub optimizer: OptimizerKind,
    pub training_cost: f64,
    pub cleaning: CleaningSummary,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dataset: Dataset,
    pub model: SavedModel,
    pub trace: RunTrace,
    pub train: SubsetReport,
    pub test: SubsetReport,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainExtras {
    /// Also write per-subset error histograms as CSV.
    pub histograms: bool,
    /// Also write every row's target and prediction in magnitude units.
    pub outputs: bool,
}

fn subset_reports(
    params: &[f64],
    config: &RunConfig,
    dataset: &Dataset,
    subset: Subset,
) -> Result<Vec<EvalReport>> {
    config
        .unit
        .units()
        .into_iter()
        .map(|u| {
            metrics::evaluate_with_probe(
                params,
                &config.topology,
                dataset,
                subset,
                u,
                config.histogram_bins,
                &mut |_| {},
            )
        })
        .collect()
}

/// Pipeline without touching the filesystem beyond reading the input.
pub fn train(config: &RunConfig) -> Result<(TrainOutcome, CleaningSummary)> {
    let (records, cleaning) = load_records(config)?;
    let dataset = dataset::prepare(records, &config.pipeline)?;
    let (x, y) = dataset.subset(Subset::Train);
    let objective = MseObjective::new(config.topology.clone(), x, y)?;
    let (best, trace) = optimize(
        config.optimizer,
        config,
        configured_seed(config.optimizer, config),
        &objective,
        objective.dim(),
    )?;
    let params = ParamVector::new(best.position.clone())?;
    let model = SavedModel::new(
        config.topology.clone(),
        params,
        dataset.normalization().fingerprint(),
    )?;
    let report = |subset| -> Result<SubsetReport> {
        Ok(SubsetReport {
            subset,
            optimizer: config.optimizer,
            training_cost: best.cost,
            cleaning,
            reports: subset_reports(model.params.as_slice(), config, &dataset, subset)?,
        })
    };
    let train = report(Subset::Train)?;
    let test = report(Subset::Test)?;
    Ok((
        TrainOutcome {
            dataset,
            model,
            trace,
            train,
            test,
        },
        cleaning,
    ))
}

fn outputs_csv(outcome: &TrainOutcome) -> Result<Vec<u8>> {
    let ds = &outcome.dataset;
    let target = ds.normalization().target();
    let predictions = mlp::batch_forward(
        outcome.model.params.as_slice(),
        &outcome.model.topology,
        ds.features(),
    )?;
    let mut subset_of = vec![Subset::Train; ds.len()];
    for &i in ds.indices(Subset::Test) {
        subset_of[i] = Subset::Test;
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ds.source_rows()[i]);
    Ok(csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "subset", "magnitude", "prediction"])?;
        for i in order {
            w.write_record([
                ds.source_rows()[i].to_string(),
                match subset_of[i] {
                    Subset::Train => "train".into(),
                    Subset::Test => "test".to_string(),
                },
                format!("{}", target.inverse(ds.targets()[i])),
                format!("{}", target.inverse(predictions[i])),
            ])?;
        }
        w.flush()
    }))
}

/// `train` command: runs the pipeline and writes the six run artifacts
/// (plus any requested extras) into `out`. Nothing is written if the
/// pipeline fails.
pub fn cmd_train(config: &RunConfig, out: &Path, extras: TrainExtras) -> Result<TrainOutcome> {
    let (outcome, _) = train(config)?;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        (CONFIG_FILE, config.to_text().into_bytes()),
        (
            TRACE_FILE,
            csv_bytes(|b| outcome.trace.write_csv(config.optimizer.trace_kind(), b)),
        ),
        (TRAIN_REPORT_FILE, json_bytes(&outcome.train)),
        (TEST_REPORT_FILE, json_bytes(&outcome.test)),
        (MODEL_FILE, outcome.model.to_text().into_bytes()),
        (
            NORMALIZATION_FILE,
            outcome.dataset.normalization().to_text().into_bytes(),
        ),
    ];
    if extras.outputs {
        files.push((TRAIN_OUTPUTS_FILE, outputs_csv(&outcome)?));
    }
    let mut hist_files = Vec::new();
    if extras.histograms {
        for rep in [&outcome.train, &outcome.test] {
            for r in &rep.reports {
                let name = format!(
                    "{}_{}_histogram.csv",
                    match rep.subset {
                        Subset::Train => "train",
                        Subset::Test => "test",
                    },
                    match r.unit {
                        Unit::Normalized => "normalized",
                        Unit::Richter => "richter",
                    }
                );
                hist_files.push((
                    name,
                    csv_bytes(|b| metrics::write_histogram_csv(&r.histogram, b)),
                ));
            }
        }
    }
    create_dir(out)?;
    for (name, bytes) in files {
        write_file(&out.join(name), bytes)?;
    }
    for (name, bytes) in hist_files {
        write_file(&out.join(name), bytes)?;
    }
    Ok(outcome)
}

/// `predict` command: applies a saved model to every complete row of
/// `input` and writes `row,magnitude` lines to `out/predictions.csv`.
/// Returns the number of predictions written.
pub fn cmd_predict(
    model_path: &Path,
    normalization_path: &Path,
    input: &Path,
    load: &LoadOptions,
    out: &Path,
) -> Result<usize> {
    let model = SavedModel::from_text(&read_text(model_path)?)?;
    let norm = dataset::NormalizationSpec::from_text(&read_text(normalization_path)?)?;
    if norm.fingerprint() != model.normalization {
        return Err(Error::Compatibility(format!(
            "{} was not produced by the run that trained {}",
            normalization_path.display(),
            model_path.display()
        )));
    }
    if model.topology.input_dim() != 6 || model.topology.output_dim() != 1 {
        return Err(Error::Compatibility(format!(
            "model topology {} does not map six features to one magnitude",
            model.topology.sizes_string()
        )));
    }
    let file = fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let (rows, _skipped) = dataset::read_feature_rows(file, load)?;
    let normalized: Vec<Vec<f64>> = rows
        .iter()
        .map(|(_, f)| norm.transform_features(f).to_vec())
        .collect();
    let x = Matrix::from_rows(&normalized, 6)?;
    let outputs = mlp::batch_forward(model.params.as_slice(), &model.topology, &x)?;
    let target = norm.target();
    let bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", "magnitude"])?;
        for ((row, _), y) in rows.iter().zip(&outputs) {
            w.write_record([row.to_string(), format!("{}", target.inverse(*y))])?;
        }
        w.flush()
    });
    create_dir(out)?;
    write_file(&out.join(PREDICTIONS_FILE), bytes)?;
    Ok(outputs.len())
}

/// What the benchmark optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchmarkTarget {
    /// Train on the configured dataset; score by test MSE (normalized units).
    Dataset,
    /// Minimize the sphere function in `dim` dimensions; score by best cost.
    Sphere { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Left,
    Right,
    Tie,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideResult {
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub best_cost: f64,
    /// Test MSE (dataset mode) or best cost (sphere mode); lower wins.
    pub score: f64,
    pub test_correlation: Option<f64>,
    pub objective_calls: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub pair: usize,
    pub left: SideResult,
    pub right: SideResult,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub target: String,
    pub left: OptimizerKind,
    pub right: OptimizerKind,
    pub pairs: Vec<PairResult>,
    pub left_wins: usize,
    pub right_wins: usize,
    pub ties: usize,
    /// Fraction of pairs with left score <= right score.
    pub left_not_worse_fraction: f64,
    pub winner: Verdict,
    /// Name of the winning optimizer, or `tie`.
    pub winner_name: String,
}

fn verdict(left: f64, right: f64) -> Verdict {
    if (left - right).abs() <= TIE_TOLERANCE {
        Verdict::Tie
    } else if left < right {
        Verdict::Left
    } else {
        Verdict::Right
    }
}

fn pair_seed(base: u64, pair: usize) -> u64 {
    if pair == 0 {
        base
    } else {
        derive_seed(base, pair as u64)
    }
}

/// Runs `repeats` seed pairs of `left` against `right` and summarizes.
/// The traces of the first pair are returned alongside.
pub fn benchmark(
    config: &RunConfig,
    target: BenchmarkTarget,
    left: OptimizerKind,
    right: OptimizerKind,
    repeats: usize,
) -> Result<(BenchmarkReport, RunTrace, RunTrace)> {
    if repeats == 0 {
        return Err(Error::Config("benchmark needs at least one pair".into()));
    }
    let dataset = match target {
        BenchmarkTarget::Dataset => {
            let (records, _) = load_records(config)?;
            Some(dataset::prepare(records, &config.pipeline)?)
        }
        BenchmarkTarget::Sphere { dim } => {
            if dim == 0 {
                return Err(Error::Config("sphere dimension must be at least 1".into()));
            }
            None
        }
    };
    let objective = dataset
        .as_ref()
        .map(|ds| {
            let (x, y) = ds.subset(Subset::Train);
            MseObjective::new(config.topology.clone(), x, y)
        })
        .transpose()?;

    let run_side = |kind: OptimizerKind, seed: u64| -> Result<(SideResult, RunTrace)> {
        let (best, trace) = match (&objective, target) {
            (Some(obj), _) => optimize(kind, config, seed, obj, obj.dim())?,
            (None, BenchmarkTarget::Sphere { dim }) => {
                optimize(kind, config, seed, &|x: &[f64]| sphere(x), dim)?
            }
            (None, BenchmarkTarget::Dataset) => unreachable!("dataset mode builds an objective"),
        };
        let (score, test_correlation) = match &dataset {
            Some(ds) => {
                let r = metrics::evaluate(
                    &best.position,
                    &config.topology,
                    ds,
                    Subset::Test,
                    Unit::Normalized,
                )?;
                (r.mse, r.correlation)
            }
            None => (best.cost, None),
        };
        let calls = trace.rows.last().map_or(0, |r| r.objective_calls);
        Ok((
            SideResult {
                optimizer: kind,
                seed,
                best_cost: best.cost,
                score,
                test_correlation,
                objective_calls: calls,
            },
            trace,
        ))
    };

    let mut pairs = Vec::with_capacity(repeats);
    let mut first_traces = None;
    for p in 0..repeats {
        let (l, lt) = run_side(left, pair_seed(configured_seed(left, config), p))?;
        let (r, rt) = run_side(right, pair_seed(configured_seed(right, config), p))?;
        if first_traces.is_none() {
            first_traces = Some((lt, rt));
        }
        pairs.push(PairResult {
            pair: p,
            verdict: verdict(l.score, r.score),
            left: l,
            right: r,
        });
    }
    let count = |v| pairs.iter().filter(|p| p.verdict == v).count();
    let (left_wins, right_wins, ties) = (
        count(Verdict::Left),
        count(Verdict::Right),
        count(Verdict::Tie),
    );
    let winner = match left_wins.cmp(&right_wins) {
        std::cmp::Ordering::Greater => Verdict::Left,
        std::cmp::Ordering::Less => Verdict::Right,
        std::cmp::Ordering::Equal => Verdict::Tie,
    };
    let winner_name = match winner {
        Verdict::Left => left.name().to_string(),
        Verdict::Right => right.name().to_string(),
        Verdict::Tie => "tie".to_string(),
    };
    let (lt, rt) = first_traces.expect("at least one pair");
    Ok((
        BenchmarkReport {
            target: match target {
                BenchmarkTarget::Dataset => "dataset".into(),
                BenchmarkTarget::Sphere { dim } => format!("sphere:{dim}"),
            },
            left,
            right,
            left_not_worse_fraction: (left_wins + ties) as f64 / repeats as f64,
            pairs,
            left_wins,
            right_wins,
            ties,
            winner,
            winner_name,
        },
        lt,
        rt,
    ))
}

/// `benchmark` command: writes the resolved config, `benchmark.json`,
/// `pairs.csv` and the first pair's traces (`left_trace.csv`,
/// `right_trace.csv`).
pub fn cmd_benchmark(
    config: &RunConfig,
    target: BenchmarkTarget,
    left: OptimizerKind,
    right: OptimizerKind,
    repeats: usize,
    out: &Path,
) -> Result<BenchmarkReport> {
    let (report, lt, rt) = benchmark(config, target, left, right, repeats)?;
    let pairs = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([
            "pair",
            "left_optimizer",
            "left_seed",
            "left_score",
            "right_optimizer",
            "right_seed",
            "right_score",
            "verdict",
        ])?;
        for p in &report.pairs {
            w.write_record([
                p.pair.to_string(),
                p.left.optimizer.name().into(),
                p.left.seed.to_string(),
                format!("{:.16e}", p.left.score),
                p.right.optimizer.name().into(),
                p.right.seed.to_string(),
                format!("{:.16e}", p.right.score),
                match p.verdict {
                    Verdict::Left => "left".into(),
                    Verdict::Right => "right".into(),
                    Verdict::Tie => "tie".to_string(),
                },
            ])?;
        }
        w.flush()
    });
    create_dir(out)?;
    write_file(&out.join(CONFIG_FILE), config.to_text())?;
    write_file(&out.join(BENCHMARK_FILE), json_bytes(&report))?;
    write_file(&out.join(PAIRS_FILE), pairs)?;
    write_file(
        &out.join("left_trace.csv"),
        csv_bytes(|b| lt.write_csv(left.trace_kind(), b)),
    )?;
    write_file(
        &out.join("right_trace.csv"),
        csv_bytes(|b| rt.write_csv(right.trace_kind(), b)),
    )?;
    Ok(report)
}

/// `synth` command: writes `out/synthetic.csv`.
pub fn cmd_synth(rows: usize, seed: u64, noise_sd: f64, out: &Path) -> Result<PathBuf> {
    let records = dataset::make_synthetic(rows, seed, noise_sd)?;
    let bytes = csv_bytes(|b| dataset::write_csv(&records, b));
    create_dir(out)?;
    let path = out.join(SYNTHETIC_FILE);
    write_file(&path, bytes)?;
    Ok(path)
}

#[derive(Debug, Parser)]
#[command(
    name = "ica-mlp",
    version,
    about = "Train MLP magnitude regressors with the Imperialist Competitive Algorithm"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; also replaces split.seed, ica.seed and ga.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for objective evaluation (1 is fully sequential).
    #[arg(long)]
    pub threads: Option<usize>,
    /// ica or ga.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// normalized, richter or both.
    #[arg(long)]
    pub unit: Option<String>,
    /// Override any configuration key, e.g. `--set ica.decades=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl CommonArgs {
    pub fn resolve(&self, data: Option<&Path>) -> Result<RunConfig> {
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(kv::parse(&read_text(path)?)?);
        }
        let mut cli = BTreeMap::new();
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
            cli.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(p) = data {
            cli.insert("data.source".into(), "csv".into());
            cli.insert("data.path".into(), p.display().to_string());
        }
        if let Some(s) = self.seed {
            for k in ["seed", "split.seed", "ica.seed", "ga.seed"] {
                cli.insert(k.into(), s.to_string());
            }
        }
        if let Some(t) = self.threads {
            cli.insert("threads".into(), t.to_string());
        }
        if let Some(o) = &self.optimizer {
            cli.insert("optimizer".into(), o.clone());
        }
        if let Some(u) = &self.unit {
            cli.insert("unit".into(), u.clone());
        }
        layers.push(cli);
        RunConfig::resolve(&layers)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, clean, normalize, split, optimize and evaluate.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Input CSV (shorthand for data.source=csv, data.path=...).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write error histograms as CSV.
        #[arg(long)]
        histograms: bool,
        /// Also write every row's target and prediction.
        #[arg(long)]
        emit_outputs: bool,
    },
    /// Predict magnitudes for a CSV of feature rows with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        normalization: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Configuration file; only the data.column.* keys are used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare two optimizers on the same data, split and topology.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "ica")]
        left: String,
        #[arg(long, default_value = "ga")]
        right: String,
        /// Number of seed pairs.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// `dataset` or `sphere`.
        #[arg(long, default_value = "dataset")]
        objective: String,
        /// Dimension for the sphere objective.
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Write a synthetic earthquake table.
    Synth {
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        noise_sd: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_report(rep: &SubsetReport) {
    for r in &rep.reports {
        println!(
            "{:?}/{:?}: n={} mse={:.6} rmse={:.6} r={} err_mean={:.6} err_var={:.6}",
            rep.subset,
            r.unit,
            r.n_samples,
            r.mse,
            r.rmse,
            r.correlation.map_or("n/a".into(), |c| format!("{c:.6}")),
            r.error_mean,
            r.error_variance
        );
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            data,
            histograms,
            emit_outputs,
        } => {
            let config = common.resolve(data.as_deref())?;
            let outcome = cmd_train(
                &config,
                &common.out,
                TrainExtras {
                    histograms,
                    outputs: emit_outputs,
                },
            )?;
            println!(
                "trained with {} (best training cost {:.6}) -> {}",
                config.optimizer.name(),
                outcome.trace.best.cost,
                common.out.display()
            );
            print_report(&outcome.train);
            print_report(&outcome.test);
        }
        Command::Predict {
            model,
            normalization,
            input,
            out,
            config,
        } => {
            let load = match config {
                Some(p) => RunConfig::resolve(&[kv::parse(&read_text(&p)?)?])?.load,
                None => LoadOptions::default(),
            };
            let n = cmd_predict(&model, &normalization, &input, &load, &out)?;
            println!(
                "{n} predictions -> {}",
                out.join(PREDICTIONS_FILE).display()
            );
        }
        Command::Benchmark {
            common,
            data,
            left,
            right,
            repeats,
            objective,
            dim,
        } => {
            let config = common.resolve(data.as_deref())?;
            let target = match objective.as_str() {
                "dataset" => BenchmarkTarget::Dataset,
                "sphere" => BenchmarkTarget::Sphere { dim },
                other => return Err(Error::Config(format!("unknown objective `{other}`"))),
            };
            let report = cmd_benchmark(
                &config,
                target,
                OptimizerKind::parse(&left)?,
                OptimizerKind::parse(&right)?,
                repeats,
                &common.out,
            )?;
            for p in &report.pairs {
                println!(
                    "pair {}: {} {:.6e} vs {} {:.6e} -> {:?}",
                    p.pair, left, p.left.score, right, p.right.score, p.verdict
                );
            }
            println!(
                "{left} not worse than {right} in {:.1}% of {} pairs; winner: {}",
                100.0 * report.left_not_worse_fraction,
                report.pairs.len(),
                report.winner_name
            );
        }
        Command::Synth {
            rows,
            seed,
            noise_sd,
            out,
        } => {
            let path = cmd_synth(rows, seed, noise_sd, &out)?;
            println!("{rows} rows -> {}", path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::resolve(&[]).unwrap();
        assert_eq!(c.topology.param_count(), 545);
        assert_eq!(c.ica.num_countries, 1000);
        assert_eq!(c.ga.pool_sizes(), (150, 500, 350));
        assert!(matches!(c.data, DataSource::Synthetic { rows: 1000, .. }));
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::resolve(&[layer(&[
            ("seed", "9"),
            ("ica.decades", "7"),
            ("ga.mode", "probabilistic"),
            ("data.path", "/tmp/x.csv"),
            ("data.column.magnitude", "mag"),
            ("topology.hidden", "3"),
        ])])
        .unwrap();
        assert_eq!(c.ica.seed, 9);
        let again = RunConfig::resolve(&[kv::parse(&c.to_text()).unwrap()]).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn bad_keys_and_values() {
        assert!(RunConfig::resolve(&[layer(&[("ica.decadez", "3")])]).is_err());
        assert!(RunConfig::resolve(&[layer(&[("ica.decades", "x")])]).is_err());
        assert!(RunConfig::resolve(&[layer(&[("ga.elite_fraction", "0.3")])]).is_err());
        assert!(RunConfig::resolve(&[layer(&[("data.source", "csv")])]).is_err());
        assert!(RunConfig::resolve(&[layer(&[("ica.bounds", "1,-1")])]).is_err());
        assert!(RunConfig::resolve(&[layer(&[("threads", "0")])]).is_err());
    }

    #[test]
    fn verdicts() {
        assert_eq!(verdict(0.1, 0.1), Verdict::Tie);
        assert_eq!(verdict(0.1, 0.2), Verdict::Left);
        assert_eq!(verdict(0.3, 0.2), Verdict::Right);
    }
}
