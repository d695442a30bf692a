//! Experiment orchestration: config files, the per-method pipelines,
//! multi-seed aggregation and table emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;

use crate::calibration::{fit_temperature, CalibrationConfig, CalibrationResult, OutColumns};
use crate::container::{parse_meta, Container};
use crate::data::{
    load_feature_set, load_teacher_logits, make_label_split, project_domain, setting_name,
    split_source_by_class, DomainView, FeatureSet, LabelSplit, Role,
};
use crate::error::{Result, StageExt, UnidaError};
use crate::metrics::{evaluate, EvalInputs, EvalReport, METRIC_NAMES};
use crate::scoring::{
    head_logits, predict_closed_set, predict_with_reject, prototype_logits, LinearHead,
    PrototypeBank, ScoreKind, ScoreRule, DEFAULT_LOGIT_SCALE,
};
use crate::trainer::{distill, train_source_only, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    SourceOnly,
    ZeroShot,
    Distill,
    DistillFixed,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SourceOnly => "source_only",
            Method::ZeroShot => "zero_shot",
            Method::Distill => "distill",
            Method::DistillFixed => "distill_fixed",
        }
    }

    pub fn needs_teacher(self) -> bool {
        !matches!(self, Method::SourceOnly)
    }

    pub fn needs_calibration(self) -> bool {
        matches!(self, Method::Distill | Method::DistillFixed)
    }
}

impl std::str::FromStr for Method {
    type Err = UnidaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source_only" | "so" => Ok(Method::SourceOnly),
            "zero_shot" | "zero-shot" => Ok(Method::ZeroShot),
            "distill" => Ok(Method::Distill),
            "distill_fixed" | "distill-fixed" => Ok(Method::DistillFixed),
            other => Err(UnidaError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Where the zero-shot teacher's logits come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSource {
    /// Precomputed logits, row-aligned with the source and target feature files.
    Logits { source: PathBuf, target: PathBuf },
    /// Class prototypes; rows are matched to classes through their labels.
    Prototypes { path: PathBuf, logit_scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub source: PathBuf,
    pub target: PathBuf,
    pub teacher: Option<TeacherSource>,
    pub total_classes: usize,
    pub n_shared: usize,
    pub n_source_private: usize,
    pub method: Method,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub calibration: CalibrationConfig,
    pub normalize: bool,
    /// Skips calibration and uses this temperature.
    pub tau: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| UnidaError::Config(format!("bad value for {key}: {v:?}")))
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let seeds = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value("seeds", s))
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(UnidaError::Config("seeds list is empty".into()));
    }
    Ok(seeds)
}

impl ExperimentConfig {
    /// Parses `key=value` lines; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, default_name: &str) -> Result<Self> {
        let kv = parse_meta(text)?;
        let get = |k: &str| kv.get(k).map(|v| v.trim().to_string());
        let require = |k: &str| {
            get(k).ok_or_else(|| UnidaError::Config(format!("missing required key {k:?}")))
        };
        let path = |k: &str| -> Result<PathBuf> { Ok(base_dir.join(require(k)?)) };
        let mut train = TrainConfig::default();
        if let Some(v) = get("lr") {
            train.lr = parse_value("lr", &v)?;
        }
        if let Some(v) = get("momentum") {
            train.momentum = parse_value("momentum", &v)?;
        }
        if let Some(v) = get("batch_size") {
            train.batch_size = parse_value("batch_size", &v)?;
        }
        if let Some(v) = get("iterations") {
            train.iterations = parse_value("iterations", &v)?;
        }
        if let Some(v) = get("warmup_iters") {
            train.warmup_iters = parse_value("warmup_iters", &v)?;
        }
        let mut calibration = CalibrationConfig::default();
        if let Some(v) = get("n_bins") {
            calibration.n_bins = parse_value("n_bins", &v)?;
        }
        if let Some(v) = get("out_columns") {
            calibration.out_columns = match v.as_str() {
                "restricted" => OutColumns::Restricted,
                "all" => OutColumns::All,
                other => {
                    return Err(UnidaError::Config(format!("bad out_columns {other:?}")))
                }
            };
        }
        let teacher = match (get("source_teacher"), get("target_teacher"), get("prototypes")) {
            (Some(s), Some(t), None) => Some(TeacherSource::Logits {
                source: base_dir.join(s),
                target: base_dir.join(t),
            }),
            (None, None, Some(p)) => Some(TeacherSource::Prototypes {
                path: base_dir.join(p),
                logit_scale: get("logit_scale")
                    .map(|v| parse_value("logit_scale", &v))
                    .transpose()?
                    .unwrap_or(DEFAULT_LOGIT_SCALE),
            }),
            (None, None, None) => None,
            _ => {
                return Err(UnidaError::Config(
                    "give either source_teacher + target_teacher or prototypes".into(),
                ))
            }
        };
        let cfg = ExperimentConfig {
            name: get("name").unwrap_or_else(|| default_name.to_string()),
            source: path("source")?,
            target: path("target")?,
            teacher,
            total_classes: parse_value("total_classes", &require("total_classes")?)?,
            n_shared: parse_value("n_shared", &require("n_shared")?)?,
            n_source_private: parse_value("n_source_private", &require("n_source_private")?)?,
            method: require("method")?.parse()?,
            train,
            seeds: get("seeds").map(|v| parse_seeds(&v)).transpose()?.unwrap_or(vec![0, 1, 2]),
            calibration,
            normalize: get("normalize")
                .map(|v| parse_value("normalize", &v))
                .transpose()?
                .unwrap_or(true),
            tau: get("tau").map(|v| parse_value("tau", &v)).transpose()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        ExperimentConfig::parse(&text, base, &stem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(UnidaError::Config("seeds list is empty".into()));
        }
        self.train.validate()?;
        if self.method.needs_teacher() && self.teacher.is_none() {
            return Err(UnidaError::Config(format!(
                "method {} needs teacher logits or prototypes",
                self.method.name()
            )));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(UnidaError::Config(format!("tau must be positive, got {t}")));
            }
        }
        let mut files = vec![&self.source, &self.target];
        match &self.teacher {
            Some(TeacherSource::Logits { source, target }) => files.extend([source, target]),
            Some(TeacherSource::Prototypes { path, .. }) => files.push(path),
            None => {}
        }
        if let Some(missing) = files.iter().find(|p| !p.exists()) {
            return Err(UnidaError::Config(format!(
                "file not found: {}",
                missing.display()
            )));
        }
        Ok(())
    }

    pub fn split(&self) -> Result<LabelSplit> {
        make_label_split(
            self.total_classes,
            self.n_shared,
            self.n_source_private,
            &setting_name(self.total_classes, self.n_shared, self.n_source_private),
        )
    }

    /// `setting(shared/source_private)`, e.g. `open-partial(6/3)`.
    pub fn split_label(&self) -> String {
        format!(
            "{}({}/{})",
            setting_name(self.total_classes, self.n_shared, self.n_source_private),
            self.n_shared,
            self.n_source_private
        )
    }
}

/// Loaded data for one experiment; shared by every seed.
#[derive(Debug, Clone)]
pub struct Task {
    pub split: LabelSplit,
    pub source: DomainView,
    pub target: DomainView,
    /// Teacher logits for the source and target views, columns in source-index order.
    pub teacher: Option<(Array2<f64>, Array2<f64>)>,
}

fn load_features(path: &Path, normalize: bool) -> Result<Arc<FeatureSet>> {
    let fs = load_feature_set(path)?;
    Ok(Arc::new(if normalize { fs.l2_normalized() } else { fs }))
}

/// Prototype rows for the source classes, in source-index order.
pub fn load_prototype_bank(path: &Path, split: &LabelSplit, logit_scale: f64) -> Result<PrototypeBank> {
    let c = Container::read(path)?;
    let rows = split
        .source_classes()
        .map(|class| {
            c.labels
                .iter()
                .position(|&l| l == class as i64)
                .ok_or_else(|| UnidaError::Config(format!("no prototype for class {class}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let d = c.features.ncols();
    let protos = Array2::from_shape_fn((rows.len(), d), |(i, j)| f64::from(c.features[[rows[i], j]]));
    PrototypeBank::new(protos, logit_scale)
}

impl Task {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let split = config.split().stage("split")?;
        let src = load_features(&config.source, config.normalize).stage("load source")?;
        let tgt = load_features(&config.target, config.normalize).stage("load target")?;
        let source = project_domain(src, &split, Role::Source);
        let target = project_domain(tgt, &split, Role::Target);
        let teacher = if config.method.needs_teacher() {
            let pair = match config.teacher.as_ref() {
                Some(TeacherSource::Logits { source: s, target: t }) => {
                    let sl = load_teacher_logits(s).stage("load source teacher")?;
                    let tl = load_teacher_logits(t).stage("load target teacher")?;
                    for (m, what) in [(&sl, "source"), (&tl, "target")] {
                        if m.ncols() != split.n_source() {
                            return Err(UnidaError::Shape(format!(
                                "{what} teacher has {} columns, task has {} source classes",
                                m.ncols(),
                                split.n_source()
                            ))
                            .at("load teacher"));
                        }
                    }
                    (
                        source.gather(&sl).stage("align source teacher")?,
                        target.gather(&tl).stage("align target teacher")?,
                    )
                }
                Some(TeacherSource::Prototypes { path, logit_scale }) => {
                    let bank = load_prototype_bank(path, &split, *logit_scale)
                        .stage("load prototypes")?;
                    (
                        prototype_logits(&bank, &source.features()).stage("source teacher")?,
                        prototype_logits(&bank, &target.features()).stage("target teacher")?,
                    )
                }
                None => return Err(UnidaError::Config("no teacher configured".into())),
            };
            Some(pair)
        } else {
            None
        };
        if source.is_empty() {
            return Err(UnidaError::Config("source view is empty".into()).at("project"));
        }
        if target.is_empty() {
            return Err(UnidaError::Config("target view is empty".into()).at("project"));
        }
        Ok(Task {
            split,
            source,
            target,
            teacher,
        })
    }

    fn teacher(&self) -> Result<&(Array2<f64>, Array2<f64>)> {
        self.teacher
            .as_ref()
            .ok_or_else(|| UnidaError::Config("task has no teacher logits".into()))
    }

    /// Self-calibration on the source teacher logits.
    pub fn calibrate(&self, config: &CalibrationConfig) -> Result<CalibrationResult> {
        let (source_teacher, _) = self.teacher()?;
        let split = split_source_by_class(&self.source).stage("calibration split")?;
        fit_temperature(source_teacher, self.source.labels(), &split, config)
            .stage("fit temperature")
    }

    fn reject_rule(&self) -> Result<ScoreRule> {
        ScoreRule::neg_entropy(self.split.n_source())
    }

    /// Evaluates a linear head on the target with the negative-entropy rule.
    pub fn evaluate_head(&self, head: &LinearHead) -> Result<EvalReport> {
        let logits = head_logits(head, &self.target.features()).stage("student logits")?;
        self.evaluate_logits(&logits, true)
    }

    fn evaluate_logits(&self, logits: &Array2<f64>, reject: bool) -> Result<EvalReport> {
        let p = if reject {
            predict_with_reject(logits, 1.0, &self.reject_rule()?)
        } else {
            predict_closed_set(logits, 1.0, ScoreKind::MaxLogit)
        }
        .stage("predict")?;
        let inputs = EvalInputs::from_predictions(&p, &self.target).stage("evaluate")?;
        evaluate(&inputs).stage("evaluate")
    }
}

/// Everything produced for one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
    /// Trained head, for the methods that train one.
    pub head: Option<LinearHead>,
    pub final_loss: Option<f64>,
}

/// Runs one seed of `config.method` on a loaded task.
pub fn run_seed(config: &ExperimentConfig, task: &Task, tau: Option<f64>, seed: u64) -> Result<SeedRun> {
    let train = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let (report, head, final_loss) = match config.method {
        Method::SourceOnly => {
            let trace = train_source_only(&task.source, &train).stage("train source-only")?;
            let report = task.evaluate_head(&trace.head)?;
            (report, Some(trace.head), trace.losses.last().copied())
        }
        Method::ZeroShot => {
            let (_, target_teacher) = task.teacher()?;
            (task.evaluate_logits(target_teacher, false)?, None, None)
        }
        Method::Distill => {
            let tau = tau.ok_or_else(|| UnidaError::Config("distill needs a temperature".into()))?;
            let (_, target_teacher) = task.teacher()?;
            let trace = distill(&task.target.unlabeled(), target_teacher, tau, &train)
                .stage("distill")?;
            let report = task.evaluate_head(&trace.head)?;
            (report, Some(trace.head), trace.losses.last().copied())
        }
        Method::DistillFixed => {
            let tau = tau.ok_or_else(|| UnidaError::Config("distill_fixed needs a temperature".into()))?;
            let (_, target_teacher) = task.teacher()?;
            (task.evaluate_logits(&(target_teacher / tau), true)?, None, None)
        }
    };
    Ok(SeedRun {
        seed,
        report,
        head,
        final_loss,
    })
}

/// Mean and standard deviation of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Summary {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone)]
pub struct AggregateReport {
    pub name: String,
    pub method: Method,
    pub split: String,
    pub tau: Option<f64>,
    pub calibration: Option<CalibrationResult>,
    pub runs: Vec<SeedRun>,
    /// Per metric; `None` when the metric is undefined for this task.
    pub summary: BTreeMap<&'static str, Option<Summary>>,
}

impl AggregateReport {
    pub fn from_runs(
        name: String,
        method: Method,
        split: String,
        tau: Option<f64>,
        calibration: Option<CalibrationResult>,
        runs: Vec<SeedRun>,
    ) -> Self {
        let mut per_metric: BTreeMap<&'static str, Vec<Option<f64>>> = BTreeMap::new();
        for run in &runs {
            for (k, v) in run.report.metric_values() {
                per_metric.entry(k).or_default().push(v);
            }
        }
        let summary = per_metric
            .into_iter()
            .map(|(k, vals)| {
                let vals: Option<Vec<f64>> = vals.into_iter().collect();
                (k, vals.filter(|v| !v.is_empty()).map(|v| summarize(&v)))
            })
            .collect();
        AggregateReport {
            name,
            method,
            split,
            tau,
            calibration,
            runs,
            summary,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).copied().flatten().map(|s| s.mean)
    }

    pub fn std(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).copied().flatten().map(|s| s.std)
    }
}

/// Runs `config.method` for every seed and aggregates in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateReport> {
    config.validate()?;
    let task = Task::load(config)?;
    run_on_task(config, &task)
}

pub fn run_on_task(config: &ExperimentConfig, task: &Task) -> Result<AggregateReport> {
    let (tau, calibration) = resolve_temperature(config, task)?;
    let runs = config
        .seeds
        .iter()
        .map(|&s| run_seed(config, task, tau, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport::from_runs(
        config.name.clone(),
        config.method,
        config.split_label(),
        tau,
        calibration,
        runs,
    ))
}

/// The configured temperature, or a fitted one for distillation methods.
pub fn resolve_temperature(
    config: &ExperimentConfig,
    task: &Task,
) -> Result<(Option<f64>, Option<CalibrationResult>)> {
    if !config.method.needs_calibration() {
        return Ok((None, None));
    }
    if let Some(t) = config.tau {
        return Ok((Some(t), None));
    }
    let cal = task.calibrate(&config.calibration)?;
    Ok((Some(cal.tau_opt), Some(cal)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = UnidaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(UnidaError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// One parsed table row: means and standard deviations per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub run: String,
    pub method: String,
    pub split: String,
    pub cells: BTreeMap<String, Option<Summary>>,
}

impl TableRow {
    fn from_report(r: &AggregateReport) -> Self {
        TableRow {
            run: r.name.clone(),
            method: r.method.name().to_string(),
            split: r.split.clone(),
            cells: METRIC_NAMES
                .iter()
                .map(|&m| (m.to_string(), r.summary.get(m).copied().flatten()))
                .collect(),
        }
    }
}

const NA: &str = "NA";

fn csv_cell(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{}±{}", s.mean, s.std),
        None => NA.to_string(),
    }
}

fn md_cell(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.2}±{:.2}", 100.0 * s.mean, 100.0 * s.std),
        None => "-".to_string(),
    }
}

/// Renders rows sorted by method, then split, then run name.
pub fn emit_rows(rows: &[TableRow], format: TableFormat) -> String {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| (&a.method, &a.split, &a.run).cmp(&(&b.method, &b.split, &b.run)));
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("run,method,split");
            for m in METRIC_NAMES {
                out.push(',');
                out.push_str(m);
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(out, "{},{},{}", r.run, r.method, r.split);
                for m in METRIC_NAMES {
                    out.push(',');
                    out.push_str(&csv_cell(r.cells.get(m).copied().flatten()));
                }
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str("| run | method | split |");
            for m in METRIC_NAMES {
                let _ = write!(out, " {m} |");
            }
            out.push('\n');
            out.push_str("|---|---|---|");
            for _ in METRIC_NAMES {
                out.push_str("---|");
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(out, "| {} | {} | {} |", r.run, r.method, r.split);
                for m in METRIC_NAMES {
                    let _ = write!(out, " {} |", md_cell(r.cells.get(m).copied().flatten()));
                }
                out.push('\n');
            }
            out.push('\n');
            out.push_str(NMI_NOTE);
            out.push('\n');
        }
    }
    out
}

/// How `nmi` is computed for every method, including the non-clustering ones.
pub const NMI_NOTE: &str = "nmi: target-private samples only; predicted OUT counts as one cluster and each accepted class as its own cluster.";

/// One row per report, `mean±std` cells, metrics in a fixed column order.
pub fn emit_tables(reports: &[AggregateReport], format: TableFormat) -> String {
    let rows: Vec<TableRow> = reports.iter().map(TableRow::from_report).collect();
    emit_rows(&rows, format)
}

/// Parses the CSV produced by [`emit_tables`].
pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| UnidaError::Format("empty table".into()))?
        .split(',')
        .collect();
    if header.len() < 3 || header[..3] != ["run", "method", "split"] {
        return Err(UnidaError::Format(format!("unexpected table header {header:?}")));
    }
    lines
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(UnidaError::Format(format!("row has {} fields: {line}", fields.len())));
            }
            let cells = header[3..]
                .iter()
                .zip(&fields[3..])
                .map(|(&h, &f)| {
                    let cell = if f == NA {
                        None
                    } else {
                        let (m, s) = f
                            .split_once('±')
                            .ok_or_else(|| UnidaError::Format(format!("bad cell {f:?}")))?;
                        Some(Summary {
                            mean: parse_value(h, m).map_err(|_| UnidaError::Format(format!("bad mean {m:?}")))?,
                            std: parse_value(h, s).map_err(|_| UnidaError::Format(format!("bad std {s:?}")))?,
                        })
                    };
                    Ok((h.to_string(), cell))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok(TableRow {
                run: fields[0].to_string(),
                method: fields[1].to_string(),
                split: fields[2].to_string(),
                cells,
            })
        })
        .collect()
}

/// Single-run report as a two-line CSV.
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut s = METRIC_NAMES.join(",");
    s.push('\n');
    let vals: Vec<String> = report
        .metric_values()
        .into_iter()
        .map(|(_, v)| v.map_or_else(|| NA.to_string(), |x| x.to_string()))
        .collect();
    s.push_str(&vals.join(","));
    s.push('\n');
    s
}
