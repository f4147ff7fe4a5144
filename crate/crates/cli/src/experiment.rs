//! Experiment specs, grid execution and result tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use affmt_core::dataset::SplitName;
use affmt_core::metrics::MetricReport;
use affmt_core::preprocess::{LabelledClip, Resolution};
use affmt_train::config::apply_overrides;
use affmt_train::data::{load_split, FramePool, SequenceStream};
use affmt_train::{GanTrainConfig, GanTrainer, MtTrainConfig, MtTrainer, TrainError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GanTable9,
    MtTable10,
    MtTable11,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::GanTable9 => "gan_table9",
            Family::MtTable10 => "mt_table10",
            Family::MtTable11 => "mt_table11",
        }
    }

    pub fn is_gan(self) -> bool {
        self == Family::GanTable9
    }

    /// Desk-scale training defaults that grid points override.
    pub fn base_config(self) -> Value {
        match self {
            Family::GanTable9 => serde_json::to_value(gan_desk_config()),
            Family::MtTable10 | Family::MtTable11 => serde_json::to_value(mt_desk_config()),
        }
        .expect("configs serialize")
    }

    pub fn default_grid(self) -> Vec<Map<String, Value>> {
        let point = |v: Value| v.as_object().cloned().expect("object literal");
        match self {
            Family::GanTable9 => vec![
                point(json!({"heads": "va", "va_loss": "ccc"})),
                point(json!({"heads": "va", "va_loss": "mse"})),
                point(json!({"heads": "au"})),
                point(json!({"heads": "joint", "va_loss": "ccc"})),
                point(json!({"heads": "joint", "va_loss": "mse"})),
            ],
            Family::MtTable10 => {
                let mut g = Vec::new();
                for va in ["ccc", "mse"] {
                    for expr in ["xent", "mse_pre", "mse_post"] {
                        for lr in [1e-4, 1e-3] {
                            g.push(point(json!({"va_loss": va, "expr_loss": expr, "lr": lr})));
                        }
                    }
                }
                g
            }
            Family::MtTable11 => [(0.0, 1.0), (1.0, 0.0), (0.5, 0.5), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75), (1.0, 1.0)]
                .into_iter()
                .map(|(a, b)| point(json!({"alpha": a, "beta": b})))
                .collect(),
        }
    }

    /// Parameter columns of the result table, in display order.
    pub fn param_columns(self) -> &'static [&'static str] {
        match self {
            Family::GanTable9 => &["heads", "va_loss"],
            Family::MtTable10 => &["va_loss", "expr_loss", "lr"],
            Family::MtTable11 => &["alpha", "beta"],
        }
    }

    pub fn metric_columns(self) -> &'static [&'static str] {
        match self {
            Family::GanTable9 => &["ccc_v", "ccc_a", "f1_weighted", "f1_macro", "total_accuracy"],
            Family::MtTable10 | Family::MtTable11 => {
                &["ccc_v", "ccc_a", "total_accuracy", "f1_macro", "f1_weighted"]
            }
        }
    }
}

pub fn gan_desk_config() -> GanTrainConfig {
    GanTrainConfig { batch: 16, steps: 200, ..GanTrainConfig::default() }
}

pub fn mt_desk_config() -> MtTrainConfig {
    MtTrainConfig {
        input_size: 32,
        feature_units: 64,
        gru_units: 32,
        attention_units: 16,
        attention_length: 16,
        sequences: 4,
        sequence_length: 32,
        steps: 200,
        ..MtTrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub family: Family,
    /// Config overrides, one entry per table row. Omitted means the family's
    /// default grid.
    #[serde(default)]
    pub grid: Option<Vec<Map<String, Value>>>,
    pub seeds: Vec<u64>,
    pub corpus: PathBuf,
    /// Overrides applied under every grid point.
    #[serde(default)]
    pub base: Map<String, Value>,
}

/// A grid point resolved against the family's base config.
#[derive(Debug, Clone)]
pub enum PointConfig {
    Gan(GanTrainConfig),
    Mt(MtTrainConfig),
}

impl PointConfig {
    fn to_value(&self) -> Value {
        match self {
            PointConfig::Gan(c) => serde_json::to_value(c),
            PointConfig::Mt(c) => serde_json::to_value(c),
        }
        .expect("configs serialize")
    }

    fn data_key(&self) -> Result<(Resolution, usize), TrainError> {
        Ok(match self {
            PointConfig::Gan(c) => (c.resolution(), c.required_annotators),
            PointConfig::Mt(c) => (c.resolution()?, c.required_annotators),
        })
    }
}

/// Canonical `key=value` rendering of a grid point, keys sorted.
pub fn grid_key(point: &Map<String, Value>) -> String {
    let sorted: BTreeMap<_, _> = point.iter().collect();
    let parts: Vec<String> = sorted
        .into_iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect();
    if parts.is_empty() {
        "default".into()
    } else {
        parts.join(",")
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("cannot read experiment spec {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            _ => toml::from_str(&text).map_err(|e| e.to_string()),
        };
        let spec: Self = parsed.map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid(&self) -> Vec<Map<String, Value>> {
        self.grid.clone().unwrap_or_else(|| self.family.default_grid())
    }

    /// Every grid point resolved to a full config, sorted by grid key.
    pub fn points(&self) -> Result<Vec<(String, PointConfig)>, TrainError> {
        let mut out = Vec::new();
        for point in self.grid() {
            let mut merged = self.base.clone();
            merged.extend(point.clone());
            let key = grid_key(&point);
            let cfg = if self.family.is_gan() {
                let c: GanTrainConfig = apply_overrides(&gan_desk_config(), &merged)
                    .map_err(|e| TrainError::Config(format!("grid point {key}: {e}")))?;
                c.validate()?;
                PointConfig::Gan(c)
            } else {
                let c: MtTrainConfig = apply_overrides(&mt_desk_config(), &merged)
                    .map_err(|e| TrainError::Config(format!("grid point {key}: {e}")))?;
                c.validate()?;
                PointConfig::Mt(c)
            };
            out.push((key, cfg));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(TrainError::Config(format!("grid point {} appears twice", w[0].0)));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.name.trim().is_empty() {
            return Err(TrainError::Config("experiment name is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::Config("seed list is empty; give at least one seed".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(TrainError::Config("seed list has duplicates".into()));
        }
        if self.grid.as_ref().is_some_and(Vec::is_empty) {
            return Err(TrainError::Config("grid is empty; omit it to use the family default".into()));
        }
        self.points().map(|_| ())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ccc_v: Option<f64>,
    pub ccc_a: Option<f64>,
    pub total_accuracy: Option<f64>,
    pub f1_weighted: Option<f64>,
    pub f1_macro: Option<f64>,
}

impl Metrics {
    fn get(&self, name: &str) -> Option<f64> {
        match name {
            "ccc_v" => self.ccc_v,
            "ccc_a" => self.ccc_a,
            "total_accuracy" => self.total_accuracy,
            "f1_weighted" => self.f1_weighted,
            "f1_macro" => self.f1_macro,
            _ => None,
        }
    }
}

impl From<&MetricReport> for Metrics {
    fn from(r: &MetricReport) -> Self {
        Self {
            ccc_v: r.ccc_v,
            ccc_a: r.ccc_a,
            total_accuracy: r.total_accuracy,
            f1_weighted: r.f1_weighted,
            f1_macro: r.f1_macro,
        }
    }
}

/// Median of the present values; the mean of the middle pair for even counts.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn median_metrics(rows: &[&Metrics]) -> Metrics {
    let col = |f: fn(&Metrics) -> Option<f64>| median(&rows.iter().map(|m| f(m)).collect::<Vec<_>>());
    Metrics {
        ccc_v: col(|m| m.ccc_v),
        ccc_a: col(|m| m.ccc_a),
        total_accuracy: col(|m| m.total_accuracy),
        f1_weighted: col(|m| m.f1_weighted),
        f1_macro: col(|m| m.f1_macro),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub grid_key: String,
    pub params: BTreeMap<String, Value>,
    /// `None` on the per-grid-point median row.
    pub seed: Option<u64>,
    pub aggregate: bool,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentResults {
    pub name: String,
    pub family: Family,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResults {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    /// Fixed-width table: parameter columns, seed, then metrics.
    pub fn render(&self) -> String {
        let params: Vec<&str> = self.family.param_columns().to_vec();
        let metrics = self.family.metric_columns();
        let mut header: Vec<String> = params.iter().map(|s| s.to_string()).collect();
        header.push("seed".into());
        header.extend(metrics.iter().map(|m| metric_label(m).to_string()));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells: Vec<String> = params
                    .iter()
                    .map(|p| match r.params.get(*p) {
                        Some(Value::String(s)) => s.clone(),
                        Some(v) => v.to_string(),
                        None => "-".into(),
                    })
                    .collect();
                cells.push(r.seed.map_or("median".into(), |s| s.to_string()));
                cells.extend(metrics.iter().map(|m| r.metrics.get(m).map_or("-".into(), |v| format!("{v:.3}"))));
                cells
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = format!("{} ({})\n", self.name, self.family.name());
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", parts.join(" | "));
        };
        line(&mut out, &header);
        line(&mut out, &widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
        for row in &body {
            line(&mut out, row);
        }
        out
    }
}

fn metric_label(m: &str) -> &'static str {
    match m {
        "ccc_v" => "CCC-V",
        "ccc_a" => "CCC-A",
        "total_accuracy" => "Total Acc",
        "f1_weighted" => "F1 weighted",
        "f1_macro" => "F1 macro",
        _ => "?",
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where checkpoints and diagnostics go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub save_checkpoints: bool,
}

/// Directory-safe rendering of a grid key.
pub fn key_slug(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

type SplitCache = HashMap<(Resolution, usize), (Vec<LabelledClip>, Vec<LabelledClip>)>;

fn clips<'a>(
    cache: &'a mut SplitCache,
    corpus: &Path,
    key: (Resolution, usize),
) -> Result<&'a (Vec<LabelledClip>, Vec<LabelledClip>), TrainError> {
    if !cache.contains_key(&key) {
        let train = load_split(corpus, SplitName::Train, key.0, key.1)?;
        let test = load_split(corpus, SplitName::Test, key.0, key.1)?;
        cache.insert(key, (train, test));
    }
    Ok(&cache[&key])
}

fn train_gan(
    cfg: &GanTrainConfig,
    seed: u64,
    train: &[LabelledClip],
    test: &[LabelledClip],
    ckpt: Option<&Path>,
) -> Result<MetricReport, TrainError> {
    let pool = FramePool::new(train)?;
    let mut t = GanTrainer::new(cfg.clone(), seed)?;
    for step in 0..cfg.steps {
        t.train_step(&pool.batch_for_step(seed, step, cfg.batch))?;
    }
    if let Some(dir) = ckpt {
        t.save(dir)?;
    }
    t.evaluate(test)
}

fn train_mt(
    cfg: &MtTrainConfig,
    seed: u64,
    train: &[LabelledClip],
    test: &[LabelledClip],
    ckpt: Option<&Path>,
) -> Result<MetricReport, TrainError> {
    let mut stream = SequenceStream::new(train, cfg.sequences, cfg.sequence_length, seed)?;
    let mut t = MtTrainer::new(cfg.clone(), seed)?;
    for step in 0..cfg.steps {
        t.train_step(&stream.batch(step)?)?;
    }
    if let Some(dir) = ckpt {
        t.save(dir)?;
    }
    t.evaluate(test)
}

/// Trains and evaluates every (grid point, seed) pair in order.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentResults, TrainError> {
    spec.validate()?;
    let points = spec.points()?;
    let mut cache = SplitCache::new();
    let mut rows = Vec::new();
    for (key, cfg) in &points {
        let full = cfg.to_value();
        let params: BTreeMap<String, Value> = spec
            .family
            .param_columns()
            .iter()
            .filter_map(|p| full.get(*p).map(|v| (p.to_string(), v.clone())))
            .collect();
        let (train, test) = clips(&mut cache, &spec.corpus, cfg.data_key()?)?;
        let mut seed_rows = Vec::new();
        for &seed in &spec.seeds {
            log::info!("{}: {key} seed {seed}", spec.name);
            let ckpt = opts
                .out_dir
                .as_ref()
                .filter(|_| opts.save_checkpoints)
                .map(|d| d.join("checkpoints").join(key_slug(key)).join(format!("seed{seed}")));
            let result = match cfg {
                PointConfig::Gan(c) => train_gan(c, seed, train, test, ckpt.as_deref()),
                PointConfig::Mt(c) => train_mt(c, seed, train, test, ckpt.as_deref()),
            };
            let report = match result {
                Err(TrainError::NonFinite { step, what, bundle }) => {
                    if let Some(dir) = &opts.out_dir {
                        write_diagnostics(dir, key, seed, &full, step, &what, &bundle)?;
                    }
                    return Err(TrainError::NonFinite { step, what: format!("{what} ({key}, seed {seed})"), bundle });
                }
                other => other?,
            };
            seed_rows.push(ResultRow {
                grid_key: key.clone(),
                params: params.clone(),
                seed: Some(seed),
                aggregate: false,
                metrics: Metrics::from(&report),
            });
        }
        let agg = median_metrics(&seed_rows.iter().map(|r| &r.metrics).collect::<Vec<_>>());
        rows.extend(seed_rows);
        rows.push(ResultRow { grid_key: key.clone(), params, seed: None, aggregate: true, metrics: agg });
    }
    let mut columns: Vec<String> = spec.family.param_columns().iter().map(|s| s.to_string()).collect();
    columns.push("seed".into());
    columns.extend(spec.family.metric_columns().iter().map(|s| s.to_string()));
    Ok(ExperimentResults { name: spec.name.clone(), family: spec.family, seeds: spec.seeds.clone(), columns, rows })
}

fn write_diagnostics(
    dir: &Path,
    key: &str,
    seed: u64,
    config: &Value,
    step: u64,
    what: &str,
    bundle: &affmt_core::losses::LossBundle,
) -> Result<(), TrainError> {
    let d = dir.join("diagnostics");
    std::fs::create_dir_all(&d)?;
    let body = json!({
        "grid_key": key,
        "seed": seed,
        "step": step,
        "loss": what,
        "total": bundle.total.to_string(),
        "components": bundle.components.iter().map(|(k, v)| (k.clone(), v.to_string())).collect::<BTreeMap<_, _>>(),
        "config": config,
    });
    let path = d.join(format!("{}_seed{seed}.json", key_slug(key)));
    std::fs::write(&path, serde_json::to_vec_pretty(&body)?)?;
    log::error!("non-finite {what} loss at step {step}; diagnostics in {}", path.display());
    Ok(())
}
