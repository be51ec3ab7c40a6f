//! Task runners that bind a dataset manifest, masking, classification, noise
//! learning and reporting into reproducible runs.
//!
//! | task      | what it does                                                   |
//! |-----------|----------------------------------------------------------------|
//! | `1`       | classify every frame's precomputed embedding                   |
//! | `2`       | random pixel/shape masking at several fractions                |
//! | `3`       | feature masking, one named mask at a time or all together      |
//! | `4`       | isolation masking with each frame's `keep` mask                |
//! | `5-train` | learn a class-noise dictionary on the train split              |
//! | `5-eval`  | baseline vs noise-aware classification on the held-out split   |

pub mod config;
pub mod manifest;
pub mod provider;
pub mod report;
pub mod split;
pub mod tasks;

pub use config::{FeatureMode, ProviderConfig, RunConfig, Task, TripletSettings};
pub use manifest::{Dataset, DatasetManifest, FrameEntry, KEEP_MASK};
pub use provider::{EmbeddingProvider, ExchangeProvider, FnProvider};
pub use report::{RunMetadata, TaskReport};
pub use tasks::{
    run_task1, run_task2, run_task3, run_task4, run_task5_eval, run_task5_train, EvalReport,
    MetricDelta, TrainOutcome,
};
