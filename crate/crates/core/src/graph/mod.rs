//! Network architecture, weights, accounting and forward execution.

mod accounting;
mod exec;
mod forward;
pub mod io;
mod spec;
mod weights;

pub use accounting::{account, count_flops, count_params, symbolic_shapes, Accounting, LayerRow, RowKind};
pub use exec::HeadSet;
pub use forward::{forward, forward_reference_counted, observed_shapes, Backend, HeadsOutput, PreparedNet};
pub use io::{load_weights, save_weights, WeightFileError};
pub use spec::*;
pub use weights::{init_weights, EntryRole, ExpectedEntry, WeightEntry, WeightStore};
