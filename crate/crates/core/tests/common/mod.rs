#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use unida::container::Container;
use unida::data::{save_feature_set, FeatureSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

/// Gaussian-blob UniDA instance with a prototype teacher.
#[derive(Debug, Clone)]
pub struct BlobTask {
    pub total_classes: usize,
    pub n_shared: usize,
    pub n_source_private: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Per-coordinate noise around each class direction.
    pub noise: f64,
    /// Norm of the source-to-target shift.
    pub shift: f64,
    /// Scale of the zero-shot teacher logits.
    pub logit_scale: f64,
    pub seed: u64,
}

impl BlobTask {
    /// VisDA-like (6/3) split: 12 classes, 6 shared, 3 source-private,
    /// 3 target-private. The teacher's logit scale of 5 leaves the raw
    /// zero-shot probabilities under-confident.
    pub fn visda_like() -> Self {
        BlobTask {
            total_classes: 12,
            n_shared: 6,
            n_source_private: 3,
            dim: 32,
            per_class: 60,
            noise: 0.4,
            shift: 0.3,
            logit_scale: 5.0,
            seed: 7,
        }
    }
}

pub struct TaskFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    pub prototypes: PathBuf,
}

fn to_f32(m: &Array2<f64>) -> Array2<f32> {
    m.mapv(|v| v as f32)
}

/// Writes source, target and prototype containers for `task` into `dir`.
pub fn write_blob_task(task: &BlobTask, dir: &Path) -> TaskFiles {
    let mut rng = rng(task.seed);
    let means: Vec<Array1<f64>> = (0..task.total_classes)
        .map(|_| unit(Array1::from_shape_fn(task.dim, |_| rng.sample(StandardNormal))))
        .collect();
    let shift = unit(Array1::from_shape_fn(task.dim, |_| rng.sample(StandardNormal))) * task.shift;
    let n_source = task.n_shared + task.n_source_private;
    let target_classes: Vec<usize> = (0..task.n_shared).chain(n_source..task.total_classes).collect();
    let names: Vec<String> = (0..task.total_classes).map(|c| format!("class{c}")).collect();

    let sample = |classes: &[usize], offset: &Array1<f64>, rng: &mut ChaCha8Rng| {
        let n = classes.len() * task.per_class;
        let mut x = Array2::zeros((n, task.dim));
        let mut labels = Vec::with_capacity(n);
        for (ci, &c) in classes.iter().enumerate() {
            for k in 0..task.per_class {
                let row = ci * task.per_class + k;
                for j in 0..task.dim {
                    x[[row, j]] = means[c][j] + offset[j] + task.noise * rng.sample::<f64, _>(StandardNormal);
                }
                labels.push(c);
            }
        }
        (x, labels)
    };
    let source_classes: Vec<usize> = (0..n_source).collect();
    let (xs, ys) = sample(&source_classes, &Array1::zeros(task.dim), &mut rng);
    let (xt, yt) = sample(&target_classes, &shift, &mut rng);

    let files = TaskFiles {
        source: dir.join("source.udfs"),
        target: dir.join("target.udfs"),
        prototypes: dir.join("prototypes.udfs"),
    };
    save_feature_set(
        &FeatureSet::new(to_f32(&xs), ys, names.clone(), "blobs/source").unwrap(),
        &files.source,
    )
    .unwrap();
    save_feature_set(
        &FeatureSet::new(to_f32(&xt), yt, names.clone(), "blobs/target").unwrap(),
        &files.target,
    )
    .unwrap();

    // Prototypes for every class, slightly off the true class direction.
    let protos = Array2::from_shape_fn((task.total_classes, task.dim), |(c, j)| {
        means[c][j] + 0.05 * rng.sample::<f64, _>(StandardNormal)
    });
    save_feature_set(
        &FeatureSet::new(
            to_f32(&protos),
            (0..task.total_classes).collect(),
            names,
            "blobs/prototypes",
        )
        .unwrap(),
        &files.prototypes,
    )
    .unwrap();
    files
}

/// A config file body for `task` and `files`.
pub fn config_text(task: &BlobTask, files: &TaskFiles, method: &str, extra: &str) -> String {
    format!(
        "source={}\ntarget={}\nprototypes={}\nlogit_scale={}\ntotal_classes={}\nn_shared={}\nn_source_private={}\nmethod={method}\n{extra}",
        files.source.display(),
        files.target.display(),
        files.prototypes.display(),
        task.logit_scale,
        task.total_classes,
        task.n_shared,
        task.n_source_private,
    )
}

pub fn write_teacher_file(logits: &Array2<f64>, path: &Path) {
    Container {
        features: to_f32(logits),
        labels: vec![-1; logits.nrows()],
        label_count: logits.ncols() as u32,
        meta: Default::default(),
    }
    .write(path)
    .unwrap();
}
