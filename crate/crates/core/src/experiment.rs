//! End-to-end experiment runs: data preparation, chain fitting for each
//! order, attribution, the independent-classifier baseline, and the files
//! written for a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{
    aggregate_global, independent_attribution, marginalize_orders, AttributionMode,
    AttributionReport, ChainAttribution, GlobalScope, InvariantSummary,
    PipelineConfig, ReportKind, REPORT_SCHEMA,
};
use crate::chain::{ChainOrder, ClassifierChain};
use crate::data::{
    drop_and_discretize, generate_xor_dataset, load_csv_with, minmax_normalize,
    parse_binarization, train_test_split, white_collar_mapping, CsvOptions, Dataset, SplitSpec,
};
use crate::error::{Error, Result};
use crate::learner::{fit_logistic, hamming_loss, LogisticModel, Predictor, TrainConfig};
use crate::shapley::{BackgroundSet, ShapleyConfig, ShapleyMode};

pub const WHITE_COLLAR: &str = "white-collar";
/// Largest output count for which `orders = "all"` is accepted (720 chains).
pub const MAX_ALL_ORDERS_OUTPUTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Xor {
        #[serde(default = "default_xor_rows")]
        rows: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        outputs: Vec<String>,
        #[serde(default)]
        drop: Vec<String>,
        #[serde(default)]
        discretize: Vec<String>,
        /// Output column -> `"white-collar"` or a mapping file path.
        #[serde(default)]
        binarize: BTreeMap<String, String>,
        #[serde(default = "yes")]
        normalize: bool,
        #[serde(default)]
        subsample: Option<usize>,
        #[serde(default)]
        subsample_seed: u64,
    },
}

fn default_xor_rows() -> usize {
    1000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrdersSpec {
    /// The literal string `"all"`.
    All(AllOrders),
    List(Vec<Vec<String>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllOrders {
    All,
}

impl Default for OrdersSpec {
    fn default() -> Self {
        OrdersSpec::All(AllOrders::All)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub orders: OrdersSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub shapley: ShapleyConfig,
    #[serde(default)]
    pub mode: AttributionMode,
    #[serde(default)]
    pub scope: GlobalScope,
    /// Explain only the first `explain_rows` rows of the test split.
    #[serde(default)]
    pub explain_rows: Option<usize>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn xor_default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Xor {
                rows: default_xor_rows(),
                seed: 0,
            },
            split: SplitSpec::default(),
            orders: OrdersSpec::default(),
            train: TrainConfig::default(),
            shapley: ShapleyConfig::default(),
            mode: AttributionMode::Absolute,
            scope: GlobalScope::Report,
            explain_rows: None,
            out_dir: default_out_dir(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        // An unreadable config file is a config problem, not a data problem.
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train
            .validate()
            .map_err(|e| Error::config("train", e.to_string()))?;
        self.shapley.validate()?;
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config("split.train_fraction", "must lie in (0, 1)"));
        }
        if let DatasetSpec::Csv { outputs, .. } = &self.dataset {
            if outputs.is_empty() {
                return Err(Error::config("dataset.outputs", "at least one output column is required"));
            }
        }
        if let OrdersSpec::List(l) = &self.orders {
            if l.is_empty() {
                return Err(Error::config("orders", "list must not be empty"));
            }
        }
        if self.explain_rows == Some(0) {
            return Err(Error::config("explain_rows", "must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Loads or generates the dataset and applies the configured preprocessing.
pub fn prepare_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match spec {
        DatasetSpec::Xor { rows, seed } => generate_xor_dataset(*rows, *seed),
        DatasetSpec::Csv {
            path,
            outputs,
            drop,
            discretize,
            binarize,
            normalize,
            subsample,
            subsample_seed,
        } => {
            let mut opts = CsvOptions::new(&outputs.iter().map(String::as_str).collect::<Vec<_>>());
            for (column, source) in binarize {
                let mapping = if source == WHITE_COLLAR {
                    white_collar_mapping()
                } else {
                    let text = fs::read_to_string(source).map_err(|e| {
                        Error::config(format!("dataset.binarize.{column}"), e.to_string())
                    })?;
                    parse_binarization(&text)?
                };
                opts.binarize.insert(column.clone(), mapping);
            }
            let mut d = load_csv_with(path, &opts)?;
            d = drop_and_discretize(&d, drop, discretize)?;
            if *normalize {
                d = minmax_normalize(&d);
            }
            if let Some(rows) = subsample {
                d = d.subsample(*rows, *subsample_seed);
            }
            Ok(d)
        }
    }
}

pub fn resolve_orders(spec: &OrdersSpec, d: &Dataset) -> Result<Vec<ChainOrder>> {
    match spec {
        OrdersSpec::All(_) => {
            if d.n_outputs() > MAX_ALL_ORDERS_OUTPUTS {
                return Err(Error::config(
                    "orders",
                    format!(
                        "\"all\" is limited to {MAX_ALL_ORDERS_OUTPUTS} outputs, dataset has {}",
                        d.n_outputs()
                    ),
                ));
            }
            Ok(ChainOrder::all(d.n_outputs()))
        }
        OrdersSpec::List(list) => list
            .iter()
            .map(|o| {
                ChainOrder::from_names(o, d.output_names())
                    .map_err(|e| Error::config("orders", e.to_string()))
            })
            .collect(),
    }
}

/// Name used for a chain order in file names: outputs joined by `-`.
pub fn order_label(order: &ChainOrder, names: &[String]) -> String {
    order.names(names).join("-")
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub chains: Vec<ClassifierChain>,
    pub independent: Vec<LogisticModel>,
    pub per_order: Vec<AttributionReport>,
    pub marginalized: AttributionReport,
    pub baseline: AttributionReport,
    pub invariants: InvariantSummary,
}

fn accuracy_metrics(
    metrics: &mut BTreeMap<String, f64>,
    prefix: &str,
    predicted: &[Vec<u8>],
    actual: &Dataset,
) -> Result<()> {
    metrics.insert(format!("{prefix}hamming_loss"), hamming_loss(predicted, actual.outputs())?);
    for (o, name) in actual.output_names().iter().enumerate() {
        let hits = predicted
            .iter()
            .zip(actual.outputs())
            .filter(|(p, a)| p[o] == a[o])
            .count();
        metrics.insert(
            format!("{prefix}accuracy.{name}"),
            hits as f64 / actual.rows() as f64,
        );
    }
    Ok(())
}

/// Runs the whole pipeline in memory. Nothing touches the filesystem apart
/// from reading the input CSV and mapping files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = prepare_dataset(&cfg.dataset)?;
    let orders = resolve_orders(&cfg.orders, &data)?;
    let (train, test) = train_test_split(&data, cfg.split)?;
    let n_explain = cfg.explain_rows.unwrap_or(test.rows()).min(test.rows());
    let instances = &test.features()[..n_explain];
    let instance_ids: Vec<usize> = (0..n_explain).collect();

    let pipeline = PipelineConfig {
        train: cfg.train,
        shapley: cfg.shapley,
        mode: cfg.mode,
        scope: cfg.scope,
    };
    let marg = marginalize_orders(&train, instances, &orders, &pipeline)?;
    let bg = BackgroundSet::sample(&train, cfg.shapley.background_size, cfg.shapley.seed)?;

    let mut invariants = InvariantSummary::default();
    let mut per_order = Vec::with_capacity(orders.len());
    for (chain, att) in marg.chains.iter().zip(&marg.per_order) {
        invariants.merge(&att.invariants);
        per_order.push(chain_report(cfg, chain, att, &train, &test, &bg, &instance_ids)?);
    }
    if !invariants.passed() {
        return Err(Error::Numerical(format!(
            "structural invariants violated: {invariants:?}"
        )));
    }

    let mut metrics = BTreeMap::new();
    for (label, r) in per_order.iter().map(|r| (&r.label, r)) {
        for (k, v) in &r.metrics {
            metrics.insert(format!("{label}.{k}"), *v);
        }
    }
    let mut marginalized = base_report(cfg, ReportKind::Marginalized, "marginalized", &train, &bg);
    marginalized.orders = marg
        .chains
        .iter()
        .map(|c| c.order().names(train.output_names()).iter().map(|s| s.to_string()).collect())
        .collect();
    marginalized.metrics = metrics;
    marginalized.invariants = Some(invariants.clone());
    marginalized.global = aggregate_global(&marg.averaged, cfg.scope)?;
    marginalized.instances = instance_ids.clone();
    marginalized.local = marg.averaged;

    // Independent classifiers: one logistic model per output on the
    // original features, explained with exact Shapley values when the
    // width allows.
    let independent = (0..train.n_outputs())
        .map(|o| fit_logistic(train.features(), &train.output_column(o), &cfg.train))
        .collect::<Result<Vec<_>>>()?;
    let mut base_cfg = cfg.shapley;
    if train.n_features() <= base_cfg.exact_threshold {
        base_cfg.mode = ShapleyMode::Exact;
    }
    let base_local = independent_attribution(&independent, instances, &bg, &base_cfg)?;
    let mut baseline = base_report(cfg, ReportKind::Baseline, "baseline", &train, &bg);
    baseline.shapley = base_cfg;
    let predicted: Vec<Vec<u8>> = test
        .features()
        .iter()
        .map(|x| independent.iter().map(|m| m.predict_label(x)).collect())
        .collect();
    accuracy_metrics(&mut baseline.metrics, "test.", &predicted, &test)?;
    baseline.global = aggregate_global(&base_local, cfg.scope)?;
    baseline.instances = instance_ids;
    baseline.local = base_local;

    Ok(ExperimentOutput {
        config: cfg.clone(),
        train,
        test,
        chains: marg.chains,
        independent,
        per_order,
        marginalized,
        baseline,
        invariants,
    })
}

fn base_report(
    cfg: &ExperimentConfig,
    kind: ReportKind,
    label: &str,
    train: &Dataset,
    bg: &BackgroundSet,
) -> AttributionReport {
    let m = train.n_outputs();
    let n = train.n_features();
    AttributionReport {
        schema: REPORT_SCHEMA.to_string(),
        kind,
        label: label.to_string(),
        mode: cfg.mode,
        value_function: "interventional (mean over background rows)".into(),
        aggregation: match cfg.scope {
            GlobalScope::Report => "mean |local| per entry, normalized over the whole report".into(),
            GlobalScope::PerOutput => "mean |local| per entry, normalized per output".into(),
        },
        feature_names: train.feature_names().to_vec(),
        output_names: train.output_names().to_vec(),
        orders: Vec::new(),
        train: cfg.train,
        shapley: cfg.shapley,
        background: bg.source().clone(),
        preprocessing: train.preprocessing().clone(),
        metrics: BTreeMap::new(),
        invariants: None,
        global: crate::attribution::GlobalTable {
            scope: cfg.scope,
            direct: vec![vec![0.0; n]; m],
            indirect: vec![vec![0.0; n]; m],
            raw_direct: vec![vec![0.0; n]; m],
            raw_indirect: vec![vec![0.0; n]; m],
        },
        instances: Vec::new(),
        local: Vec::new(),
    }
}

fn chain_report(
    cfg: &ExperimentConfig,
    chain: &ClassifierChain,
    att: &ChainAttribution,
    train: &Dataset,
    test: &Dataset,
    bg: &BackgroundSet,
    instance_ids: &[usize],
) -> Result<AttributionReport> {
    let label = order_label(chain.order(), train.output_names());
    let mut r = base_report(cfg, ReportKind::Chain, &label, train, bg);
    r.orders = vec![chain
        .order()
        .names(train.output_names())
        .iter()
        .map(|s| s.to_string())
        .collect()];
    accuracy_metrics(&mut r.metrics, "test.", &chain.predict_all(test.features())?, test)?;
    let train_pred = chain.predict_all(train.features())?;
    r.metrics.insert(
        "train.hamming_loss".into(),
        hamming_loss(&train_pred, train.outputs())?,
    );
    r.invariants = Some(att.invariants.clone());
    r.global = aggregate_global(&att.local, cfg.scope)?;
    r.instances = instance_ids.to_vec();
    r.local = att.local.clone();
    Ok(r)
}

/// Contents of every file a run writes, keyed by relative file name.
pub fn render_outputs(out: &ExperimentOutput) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    let mut add_report = |stem: String, r: &AttributionReport| -> Result<()> {
        files.insert(format!("{stem}.json"), r.to_json()?);
        files.insert(format!("{stem}.global.csv"), r.global_csv());
        files.insert(format!("{stem}.local.csv"), r.local_csv());
        Ok(())
    };
    for r in &out.per_order {
        add_report(format!("report_order_{}", r.label), r)?;
    }
    add_report("report_marginalized".into(), &out.marginalized)?;
    add_report("report_baseline".into(), &out.baseline)?;
    for chain in &out.chains {
        let label = order_label(chain.order(), chain.output_names());
        files.insert(format!("chain_{label}.txt"), chain.to_text());
    }
    let manifest = Manifest::new(&out.config, &files);
    files.insert(MANIFEST_FILE.into(), manifest.to_json()?);
    Ok(files)
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: ExperimentConfig,
    /// SHA-256 of every other file written by the run.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, files: &BTreeMap<String, String>) -> Self {
        let mut seeds = BTreeMap::new();
        match &cfg.dataset {
            DatasetSpec::Xor { seed, .. } => {
                seeds.insert("dataset".to_string(), *seed);
            }
            DatasetSpec::Csv { subsample_seed, .. } => {
                seeds.insert("subsample".to_string(), *subsample_seed);
            }
        }
        seeds.insert("split".into(), cfg.split.seed);
        seeds.insert("train".into(), cfg.train.seed);
        seeds.insert("shapley".into(), cfg.shapley.seed);
        Manifest {
            software: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: cfg.hash(),
            seeds,
            config: cfg.clone(),
            files: files
                .iter()
                .map(|(k, v)| (k.clone(), hex::encode(Sha256::digest(v.as_bytes()))))
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("manifest", e.to_string()))
    }
}

/// Writes every file into `dir`. Files are first written to a staging
/// directory next to the targets and only moved into place once all of
/// them were written.
pub fn write_outputs(dir: &Path, files: &BTreeMap<String, String>) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let staging = dir.join(format!(".staging-{}", std::process::id()));
    fs::create_dir_all(&staging).map_err(io(&staging))?;
    let written = files.iter().try_for_each(|(name, body)| {
        let p = staging.join(name);
        fs::write(&p, body).map_err(io(&p))
    });
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    for name in files.keys() {
        let (from, to) = (staging.join(name), dir.join(name));
        fs::rename(&from, &to).map_err(io(&to))?;
    }
    fs::remove_dir_all(&staging).map_err(io(&staging))
}

/// Re-runs the configuration stored in a manifest and lists every file
/// whose contents differ from the recorded hash.
pub fn replay(manifest: &Manifest) -> Result<(BTreeMap<String, String>, Vec<String>)> {
    let out = run_experiment(&manifest.config)?;
    let mut files = render_outputs(&out)?;
    files.remove(MANIFEST_FILE);
    let mut mismatched = Vec::new();
    for (name, body) in &files {
        let h = hex::encode(Sha256::digest(body.as_bytes()));
        if manifest.files.get(name) != Some(&h) {
            mismatched.push(name.clone());
        }
    }
    for name in manifest.files.keys() {
        if !files.contains_key(name) {
            mismatched.push(name.clone());
        }
    }
    Ok((files, mismatched))
}
