//! Dataset ingestion, unit partitioning, design matrices and seeded
//! synthetic-data generators.

mod csvio;
mod dataset;
mod design;
pub mod generate;
mod partition;

pub use csvio::{read_csv, read_csv_from, write_csv, write_csv_to, ColumnKind, SchemaHints};
pub use dataset::{Column, Dataset};
pub use design::{design_matrix, design_row};
pub use partition::partition_units;
