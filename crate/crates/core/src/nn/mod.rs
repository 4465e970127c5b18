//! Fully connected regression network mapping a standardised intensity
//! triple to range, trained with minibatch SGD on the MAE loss.

pub mod arch;
pub mod grid;
pub mod model;
pub mod probe;
pub mod train;

pub use arch::{Activation, NetworkArch};
pub use grid::{grid_search, GridDataset, GridOptions, GridReport, GridSpec};
pub use model::{init_params, loss_mae, NetworkModel};
pub use probe::{predict_depth, probe_learned_function, PROBE_TRIPLE_COUNT};
pub use train::{train, TrainConfig, TrainHistory};
