//! SQL-subset query engine with three execution paths.

pub mod ast;
mod baseline;
pub mod eval;
mod finish;
mod holap;
mod parser;
pub mod plan;
mod result;
mod rolap;

use thiserror::Error;

use crate::storage::column::ColumnStore;
use crate::storage::row::RowStore;
use crate::storage::StorageError;

pub use parser::parse;
pub use finish::Acc;
pub use holap::{advise_cube, explain, holap_path, route_holap};
pub use plan::{plan, ExecPath, QueryPlan};
pub use result::{OutputFormat, ResultTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("bind error: {0}")]
    Bind(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

fn table_of(plan: &QueryPlan, rows: Vec<crate::value::Row>) -> ResultTable {
    ResultTable { headers: plan.query.headers.clone(), rows, ordered: plan.ordered() }
}

/// Reference execution on the row store.
pub fn execute_baseline(plan: &QueryPlan, store: &RowStore) -> Result<ResultTable, QueryError> {
    let rows = finish::run_query(&plan.query, &baseline::BaselineExec { store })?;
    Ok(table_of(plan, rows))
}

/// Columnar execution with one partition per worker thread.
pub fn execute_rolap(plan: &QueryPlan, store: &ColumnStore) -> Result<ResultTable, QueryError> {
    execute_rolap_partitioned(plan, store, rayon::current_num_threads())
}

/// Columnar execution with an explicit aggregation partition count.
pub fn execute_rolap_partitioned(plan: &QueryPlan, store: &ColumnStore, partitions: usize) -> Result<ResultTable, QueryError> {
    let rows = finish::run_query(&plan.query, &rolap::RolapExec { store, partitions })?;
    Ok(table_of(plan, rows))
}
