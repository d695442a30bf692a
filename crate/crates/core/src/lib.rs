//! Universal domain adaptation on frozen embeddings.
//!
//! The toolkit trains linear heads on precomputed features (source-only
//! cross-entropy, or distillation from a zero-shot prototype teacher whose
//! temperature is fitted on the source domain) and evaluates them with
//! H-score, H³-score and the universal classification rate.
//!
//! Module map:
//!
//! * [`data`] – feature sets, label splits, source/target views
//! * [`container`] – the binary embedding container
//! * [`scoring`] – heads, prototype logits, scores and the reject rule
//! * [`calibration`] – ECE terms and temperature fitting
//! * [`trainer`] – momentum SGD with warmup + cosine schedule
//! * [`metrics`] – UniDA evaluation
//! * [`runner`] – experiment configs, pipelines and tables

pub mod calibration;
pub mod container;
pub mod data;
pub mod error;
pub mod metrics;
pub mod runner;
pub mod scoring;
pub mod trainer;

pub use calibration::{fit_temperature, CalibrationConfig, CalibrationResult, ReliabilityBins};
pub use data::{
    load_feature_set, make_label_split, project_domain, save_feature_set, split_source_by_class,
    DomainView, FeatureSet, LabelSplit, Role, UnlabeledView,
};
pub use error::{Result, UnidaError};
pub use metrics::{evaluate, EvalInputs, EvalReport};
pub use runner::{emit_tables, run_experiment, AggregateReport, ExperimentConfig, Method};
pub use scoring::{LinearHead, PrototypeBank, ScoreKind, ScoreRule};
pub use trainer::{TrainConfig, TrainTrace};
