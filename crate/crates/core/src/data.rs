//! Embedding containers, label-set splits, and source/target views.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Axis};

use crate::container::{class_names_from_meta, Container};
use crate::error::{Result, UnidaError};

/// An `n × d` embedding matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Array2<f32>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    source_tag: String,
}

impl FeatureSet {
    pub fn new(
        features: Array2<f32>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let fs = FeatureSet {
            features,
            labels,
            class_names,
            source_tag: source_tag.into(),
        };
        fs.validate()?;
        Ok(fs)
    }

    fn validate(&self) -> Result<()> {
        let (n, d) = self.features.dim();
        if n == 0 || d == 0 {
            return Err(UnidaError::Format(format!("empty feature matrix {n}x{d}")));
        }
        if self.class_names.is_empty() {
            return Err(UnidaError::Format("class_names is empty".into()));
        }
        if self.labels.len() != n {
            return Err(UnidaError::Integrity(format!(
                "{} labels for {n} rows",
                self.labels.len()
            )));
        }
        if let Some((i, l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.class_names.len())
        {
            return Err(UnidaError::Integrity(format!(
                "row {i}: label {l} but only {} class names",
                self.class_names.len()
            )));
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(UnidaError::Integrity(format!(
                "non-finite feature at row {}",
                pos / d
            )));
        }
        Ok(())
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Copy with every row scaled to unit L2 norm. Zero rows are left as is.
    pub fn l2_normalized(&self) -> FeatureSet {
        let mut features = self.features.clone();
        for mut row in features.axis_iter_mut(Axis(0)) {
            let norm = row
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| (f64::from(v) / norm) as f32);
            }
        }
        FeatureSet {
            features,
            ..self.clone()
        }
    }

    fn to_container(&self) -> Container {
        let mut meta = BTreeMap::new();
        meta.insert("source_tag".to_string(), self.source_tag.clone());
        for (i, name) in self.class_names.iter().enumerate() {
            meta.insert(format!("class.{i}"), name.clone());
        }
        Container {
            features: self.features.clone(),
            labels: self.labels.iter().map(|&l| l as i64).collect(),
            label_count: self.class_names.len() as u32,
            meta,
        }
    }

    fn from_container(c: Container) -> Result<Self> {
        let class_names = class_names_from_meta(&c.meta)?;
        if class_names.len() != c.label_count as usize {
            return Err(UnidaError::Format(format!(
                "header declares {} classes, metadata names {}",
                c.label_count,
                class_names.len()
            )));
        }
        let labels = c
            .labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                usize::try_from(l)
                    .map_err(|_| UnidaError::Integrity(format!("row {i}: negative label {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let source_tag = c.meta.get("source_tag").cloned().unwrap_or_default();
        FeatureSet::new(c.features, labels, class_names, source_tag)
    }
}

/// Reads a feature set exactly as stored (no normalization).
pub fn load_feature_set(path: &Path) -> Result<FeatureSet> {
    FeatureSet::from_container(Container::read(path)?)
}

pub fn save_feature_set(fs: &FeatureSet, path: &Path) -> Result<()> {
    fs.validate()?;
    fs.to_container().write(path)
}

/// Reads a teacher-logit file: a container with one column per source class
/// and every label set to `-1`.
pub fn load_teacher_logits(path: &Path) -> Result<Array2<f32>> {
    let c = Container::read(path)?;
    if c.labels.iter().any(|&l| l != -1) {
        return Err(UnidaError::Integrity(
            "teacher-logit labels must all be -1".into(),
        ));
    }
    if c.features.iter().any(|v| !v.is_finite()) {
        return Err(UnidaError::Integrity("non-finite teacher logit".into()));
    }
    Ok(c.features)
}

pub fn save_teacher_logits(logits: &Array2<f32>, path: &Path) -> Result<()> {
    let c = Container {
        features: logits.clone(),
        labels: vec![-1; logits.nrows()],
        label_count: logits.ncols() as u32,
        meta: BTreeMap::from([("kind".to_string(), "teacher_logits".to_string())]),
    };
    c.write(path)
}

/// The shared / source-private / target-private partition of class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSplit {
    pub shared: Vec<usize>,
    pub source_private: Vec<usize>,
    pub target_private: Vec<usize>,
    pub setting_name: String,
}

impl LabelSplit {
    pub fn new(
        shared: Vec<usize>,
        source_private: Vec<usize>,
        target_private: Vec<usize>,
        setting_name: impl Into<String>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &c in shared.iter().chain(&source_private).chain(&target_private) {
            if !seen.insert(c) {
                return Err(UnidaError::Config(format!(
                    "class {c} appears in more than one part of the split"
                )));
            }
        }
        if shared.is_empty() && source_private.is_empty() {
            return Err(UnidaError::Config("source label set is empty".into()));
        }
        Ok(LabelSplit {
            shared,
            source_private,
            target_private,
            setting_name: setting_name.into(),
        })
    }

    /// Number of source classes, `|Y^st| + |Y^s/t|`. Also the OUT sentinel.
    pub fn n_source(&self) -> usize {
        self.shared.len() + self.source_private.len()
    }

    pub fn n_shared(&self) -> usize {
        self.shared.len()
    }

    pub fn out_label(&self) -> usize {
        self.n_source()
    }

    /// Original class ids of the source label set, in source-index order.
    pub fn source_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.shared.iter().chain(&self.source_private).copied()
    }

    pub fn has_target_private(&self) -> bool {
        !self.target_private.is_empty()
    }
}

/// Builds a split with class ids assigned in ascending order: shared first,
/// then source-private, then target-private.
pub fn make_label_split(
    total_classes: usize,
    n_shared: usize,
    n_source_private: usize,
    setting_name: &str,
) -> Result<LabelSplit> {
    if n_shared == 0 {
        return Err(UnidaError::Config("n_shared must be at least 1".into()));
    }
    if n_shared + n_source_private > total_classes {
        return Err(UnidaError::Config(format!(
            "{n_shared} shared + {n_source_private} source-private exceeds {total_classes} classes"
        )));
    }
    let private_start = n_shared + n_source_private;
    LabelSplit::new(
        (0..n_shared).collect(),
        (n_shared..private_start).collect(),
        (private_start..total_classes).collect(),
        setting_name,
    )
}

/// A setting name from the `(|Y^st|/|Y^s/t|)` counts.
pub fn setting_name(total_classes: usize, n_shared: usize, n_source_private: usize) -> String {
    let target_private = total_classes - n_shared - n_source_private;
    match (n_source_private > 0, target_private > 0) {
        (true, true) => "open-partial",
        (false, true) => "open",
        (false, false) => "closed",
        (true, false) => "partial",
    }
    .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Target,
}

/// A row selection of a [`FeatureSet`], relabeled into source-class indices.
///
/// Source-class indices are contiguous: shared classes occupy `0..|Y^st|`
/// and source-private classes follow. Target-private rows carry the OUT
/// sentinel, which equals `|Y^s|`.
#[derive(Debug, Clone)]
pub struct DomainView {
    base: Arc<FeatureSet>,
    rows: Vec<usize>,
    role: Role,
    labels: Vec<usize>,
    label_remap: BTreeMap<usize, usize>,
    n_source: usize,
    n_shared: usize,
}

impl DomainView {
    pub fn base(&self) -> &FeatureSet {
        &self.base
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Labels in source-class index space (OUT sentinel for target-private).
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Original class ids of the selected rows.
    pub fn original_labels(&self) -> Vec<usize> {
        self.rows.iter().map(|&r| self.base.labels()[r]).collect()
    }

    pub fn label_remap(&self) -> &BTreeMap<usize, usize> {
        &self.label_remap
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_shared(&self) -> usize {
        self.n_shared
    }

    pub fn out_label(&self) -> usize {
        self.n_source
    }

    /// Selected rows as an `f64` matrix.
    pub fn features(&self) -> Array2<f64> {
        gather_rows(self.base.features(), &self.rows)
    }

    /// Selects this view's rows from a matrix aligned with the base set.
    pub fn gather<T: Copy + Into<f64>>(&self, aligned: &Array2<T>) -> Result<Array2<f64>> {
        if aligned.nrows() != self.base.len() {
            return Err(UnidaError::Shape(format!(
                "aligned matrix has {} rows, feature set has {}",
                aligned.nrows(),
                self.base.len()
            )));
        }
        Ok(gather_rows(aligned, &self.rows))
    }

    /// Features without any label access.
    pub fn unlabeled(&self) -> UnlabeledView {
        UnlabeledView {
            features: self.features(),
        }
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> DomainView {
        let (rows, labels) = self
            .rows
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| keep(l))
            .map(|(&r, &l)| (r, l))
            .unzip();
        DomainView {
            rows,
            labels,
            ..self.clone()
        }
    }
}

fn gather_rows<T: Copy + Into<f64>>(m: &Array2<T>, rows: &[usize]) -> Array2<f64> {
    let d = m.ncols();
    Array2::from_shape_fn((rows.len(), d), |(i, j)| m[[rows[i], j]].into())
}

/// Target features stripped of labels; the only input the distillation
/// trainer accepts.
#[derive(Debug, Clone)]
pub struct UnlabeledView {
    features: Array2<f64>,
}

impl UnlabeledView {
    pub fn new(features: Array2<f64>) -> Self {
        UnlabeledView { features }
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Selects and relabels the rows of `fs` for one side of a UniDA task.
pub fn project_domain(fs: Arc<FeatureSet>, split: &LabelSplit, role: Role) -> DomainView {
    let n_source = split.n_source();
    let mut label_remap: BTreeMap<usize, usize> = split
        .source_classes()
        .enumerate()
        .map(|(idx, class)| (class, idx))
        .collect();
    let keep: BTreeMap<usize, usize> = match role {
        Role::Source => label_remap.clone(),
        Role::Target => {
            for &c in &split.target_private {
                label_remap.insert(c, n_source);
            }
            let mut keep: BTreeMap<usize, usize> = split
                .shared
                .iter()
                .map(|c| (*c, label_remap[c]))
                .collect();
            keep.extend(split.target_private.iter().map(|&c| (c, n_source)));
            keep
        }
    };
    let (rows, labels) = fs
        .labels()
        .iter()
        .enumerate()
        .filter_map(|(r, l)| keep.get(l).map(|&m| (r, m)))
        .unzip();
    DomainView {
        base: fs,
        rows,
        role,
        labels,
        label_remap,
        n_source,
        n_shared: split.n_shared(),
    }
}

/// The class-disjoint halves of the source view used for calibration.
#[derive(Debug, Clone)]
pub struct CalibrationSplit {
    pub calib_in: DomainView,
    pub calib_out: DomainView,
    /// Source-class indices treated as in-class, ascending.
    pub in_classes: Vec<usize>,
    /// Source-class indices treated as out-class, ascending.
    pub out_classes: Vec<usize>,
}

/// Divides the source view by class: the first `ceil(C/2)` classes in
/// ascending id order become in-class, the rest out-class.
pub fn split_source_by_class(view: &DomainView) -> Result<CalibrationSplit> {
    let mut by_id: Vec<(usize, usize)> = view
        .label_remap
        .iter()
        .filter(|(_, &idx)| idx < view.n_source)
        .map(|(&orig, &idx)| (orig, idx))
        .collect();
    let present: BTreeSet<usize> = view.labels.iter().copied().collect();
    by_id.retain(|(_, idx)| present.contains(idx));
    by_id.sort_unstable();
    if by_id.len() < 2 {
        return Err(UnidaError::Config(format!(
            "calibration split needs at least 2 source classes, found {}",
            by_id.len()
        )));
    }
    let n_in = by_id.len().div_ceil(2);
    let mut in_classes: Vec<usize> = by_id[..n_in].iter().map(|&(_, i)| i).collect();
    let mut out_classes: Vec<usize> = by_id[n_in..].iter().map(|&(_, i)| i).collect();
    in_classes.sort_unstable();
    out_classes.sort_unstable();
    let in_set: BTreeSet<usize> = in_classes.iter().copied().collect();
    Ok(CalibrationSplit {
        calib_in: view.subset(|l| in_set.contains(&l)),
        calib_out: view.subset(|l| !in_set.contains(&l)),
        in_classes,
        out_classes,
    })
}
