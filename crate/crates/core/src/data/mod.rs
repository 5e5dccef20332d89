//! Synthetic phantoms, acquisition simulation and the on-disk dataset format.

pub mod acquisition;
pub mod format;
pub mod phantom;
pub mod simulate;

pub use acquisition::{simulate_acquisition, DatasetRecord};
pub use format::{read_dataset, read_record, write_dataset, write_record};
pub use phantom::{make_phantom, make_protocol_phantom, render_ellipses, Ellipse, PhaseModel, Protocol};
pub use simulate::{derive_seed, simulate_dataset, simulate_record, SimulationConfig};
