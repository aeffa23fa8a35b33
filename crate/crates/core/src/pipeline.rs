//! End-to-end helper: raw files through ETL into both engines, then queries
//! on any path.

use thiserror::Error;

use crate::datagen::{generate, DefectLedger, GenConfig, GenError, RawFileSet};
use crate::etl::{cleanse_all, extract, load, transform, CleansingReport, EtlConfig, EtlError, LoadSummary};
use crate::query::{self, ExecPath, QueryError, ResultTable};
use crate::schema::ConstellationSchema;
use crate::storage::{ColumnStore, RowStore, StorageEngine};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Etl(#[from] EtlError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Which executor a query should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathChoice {
    Baseline,
    Rolap,
    Holap,
}

impl std::str::FromStr for PathChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(PathChoice::Baseline),
            "rolap" => Ok(PathChoice::Rolap),
            "holap" => Ok(PathChoice::Holap),
            other => Err(format!("unknown path '{other}' (expected baseline, rolap or holap)")),
        }
    }
}

/// Both engines loaded with the same cleansed data.
pub struct Warehouse {
    pub schema: ConstellationSchema,
    pub rows: RowStore,
    pub columns: ColumnStore,
    pub cubes: crate::cube::CubeRegistry,
    pub cleansing: CleansingReport,
    pub loaded: LoadSummary,
}

impl Warehouse {
    pub fn from_files(schema: ConstellationSchema, files: &RawFileSet) -> Result<Self, PipelineError> {
        let batches = extract(files, &schema)?;
        let (relations, cleansing) = cleanse_all(&batches, &schema, &EtlConfig::default())?;
        let relations = transform(relations, &schema)?;
        let rows = RowStore::new();
        let columns = ColumnStore::new();
        let targets: [&dyn StorageEngine; 2] = [&rows, &columns];
        let loaded = load(&relations, &targets, &schema)?;
        Ok(Warehouse { schema, rows, columns, cubes: Default::default(), cleansing, loaded })
    }

    /// Generates data with `cfg` and loads it.
    pub fn generated(schema: ConstellationSchema, cfg: &GenConfig) -> Result<(Self, DefectLedger), PipelineError> {
        let (files, ledger) = generate(&schema, cfg)?;
        Ok((Warehouse::from_files(schema, &files)?, ledger))
    }

    pub fn plan(&self, sql: &str) -> Result<query::QueryPlan, QueryError> {
        query::plan(&query::parse(sql)?, &self.schema)
    }

    /// Parses, plans and runs `sql`, returning the path actually used.
    pub fn query(&self, sql: &str, path: PathChoice) -> Result<(ExecPath, ResultTable), QueryError> {
        let plan = self.plan(sql)?;
        self.run(&plan, path)
    }

    pub fn run(&self, plan: &query::QueryPlan, path: PathChoice) -> Result<(ExecPath, ResultTable), QueryError> {
        match path {
            PathChoice::Baseline => Ok((ExecPath::Baseline, query::execute_baseline(plan, &self.rows)?)),
            PathChoice::Rolap => Ok((ExecPath::Rolap, query::execute_rolap(plan, &self.columns)?)),
            PathChoice::Holap => query::route_holap(plan, &self.schema, &self.cubes, &self.columns),
        }
    }
}
