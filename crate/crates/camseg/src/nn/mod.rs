//! Small two-class CNN classifiers: declarative specs, deterministic
//! construction, training with early stopping, checkpointing, and the
//! class-logit gradient used for activation-map extraction.

pub mod checkpoint;
pub mod network;
pub mod spec;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use network::{build_network, Activations, Network};
pub use spec::{LayerSpec, NetworkSpec, NnError, TrainConfig};
pub use train::{evaluate, resolve_threads, train, EpochStats};
