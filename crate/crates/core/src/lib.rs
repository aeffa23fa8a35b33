//! Embedded analytical warehouse for crop data.
//!
//! The pipeline runs [`datagen`] → [`etl`] → [`storage`], after which
//! queries execute on one of three paths: the naive row store (`baseline`),
//! the column store (`rolap`), or a materialized cube when one matches
//! (`holap`). [`bench`] times the baseline against the warehouse paths.

pub mod bench;
pub mod cube;
pub mod datagen;
pub mod etl;
pub mod pipeline;
pub mod query;
pub mod storage;
pub mod schema;
pub mod value;

pub use schema::{builtin_adw_schema, load_schema, validate_schema, ConstellationSchema};
pub use value::{DataType, Value};
