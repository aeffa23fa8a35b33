use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use super::{check_predicate_columns, resolve_columns, EngineKind, Predicate, Relation, StorageEngine, StorageError};
use crate::schema::TableDef;
use crate::value::{Row, Value};

/// Full-width tuples in insertion order plus a primary-key hash, and nothing else.
#[derive(Debug)]
pub struct RowTable {
    pub def: TableDef,
    pub rows: Vec<Row>,
    pk: HashMap<Value, usize>,
}

impl RowTable {
    fn new(def: TableDef) -> Self {
        RowTable { def, rows: Vec::new(), pk: HashMap::new() }
    }

    pub fn by_pk(&self, key: &Value) -> Option<&Row> {
        self.pk.get(key).map(|&i| &self.rows[i])
    }
}

#[derive(Debug, Default)]
pub struct RowStore {
    tables: RwLock<BTreeMap<String, Arc<RwLock<RowTable>>>>,
}

impl RowStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self, name: &str) -> Result<Arc<RwLock<RowTable>>, StorageError> {
        self.tables
            .read()
            .unwrap()
            .get(&name.to_ascii_lowercase())
            .cloned()
            .ok_or_else(|| StorageError::UnknownTable(name.to_string()))
    }
}

impl StorageEngine for RowStore {
    fn kind(&self) -> EngineKind {
        EngineKind::Row
    }

    fn create_table(&self, def: &TableDef) -> Result<(), StorageError> {
        let mut tables = self.tables.write().unwrap();
        let key = def.name.to_ascii_lowercase();
        if tables.contains_key(&key) {
            return Err(StorageError::TableExists(def.name.clone()));
        }
        tables.insert(key, Arc::new(RwLock::new(RowTable::new(def.clone()))));
        Ok(())
    }

    fn table_def(&self, table: &str) -> Result<TableDef, StorageError> {
        Ok(self.table(table)?.read().unwrap().def.clone())
    }

    fn table_names(&self) -> Vec<String> {
        self.tables.read().unwrap().values().map(|t| t.read().unwrap().def.name.clone()).collect()
    }

    fn row_count(&self, table: &str) -> Result<usize, StorageError> {
        Ok(self.table(table)?.read().unwrap().rows.len())
    }

    fn insert_batch(&self, rel: &Relation) -> Result<usize, StorageError> {
        let t = self.table(&rel.table)?;
        let mut t = t.write().unwrap();
        rel.check_against(&t.def)?;
        if let Some(p) = t.def.pk_index() {
            if let Some(row) = rel.rows.iter().find(|r| t.pk.contains_key(&r[p])) {
                return Err(StorageError::PkCollision { table: t.def.name.clone(), key: row[p].to_string() });
            }
            let base = t.rows.len();
            for (i, r) in rel.rows.iter().enumerate() {
                t.pk.insert(r[p].clone(), base + i);
            }
        }
        t.rows.extend(rel.rows.iter().cloned());
        Ok(rel.rows.len())
    }

    fn scan(&self, table: &str, columns: &[&str], predicate: Option<&Predicate>) -> Result<Relation, StorageError> {
        let t = self.table(table)?;
        let t = t.read().unwrap();
        let proj = resolve_columns(&t.def, columns)?;
        if let Some(p) = predicate {
            check_predicate_columns(&t.def, p)?;
        }
        let def = &t.def;
        let rows = t
            .rows
            .iter()
            .filter(|row| {
                predicate.map_or(true, |p| {
                    p.eval_with(&|c: &str| def.column_index(c).map(|i| row[i].clone()).unwrap_or_default())
                })
            })
            .map(|row| proj.iter().map(|&i| row[i].clone()).collect())
            .collect();
        let cols = proj.iter().map(|&i| def.columns[i].clone()).collect();
        Ok(Relation::new(def.name.clone(), cols, rows))
    }

    fn lookup_pk(&self, table: &str, key: &Value) -> Result<Option<Row>, StorageError> {
        let t = self.table(table)?;
        let t = t.read().unwrap();
        Ok(t.by_pk(key).cloned())
    }

    fn truncate(&self, table: &str) -> Result<(), StorageError> {
        let t = self.table(table)?;
        let mut t = t.write().unwrap();
        t.rows.clear();
        t.pk.clear();
        Ok(())
    }
}
