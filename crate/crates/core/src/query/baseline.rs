//! Reference executor over the row store: pipelined nested-loop joins,
//! full-width tuples, row-at-a-time predicates and a hash map of groups.
//!
//! A join step probes the primary-key hash when one join key is the new
//! table's primary key. Other equi-joins probe a transient hash index built
//! over the new source's filtered rows, keyed on boxed values (the role a
//! foreign-key index plays in a row-oriented server). Steps without keys
//! loop over every filtered row.

use std::collections::HashMap;
use std::sync::{Arc, RwLock, RwLockReadGuard};

use super::eval::{all_true, eval, TupleView};
use super::finish::{accumulate, derived_rows, finish_groups, project, Acc, BlockExec};
use super::plan::{BlockPlan, SourceKind, StepKind};
use super::QueryError;
use crate::storage::row::{RowStore, RowTable};
use crate::value::{compare, CmpOp, Row, Value};

pub struct BaselineExec<'a> {
    pub store: &'a RowStore,
}

enum Probe<'r> {
    /// Primary-key lookup on key `k` of the step.
    Pk { table: &'r RowTable, key: usize },
    /// Filtered rows grouped by their join-key values.
    Index(HashMap<Vec<Value>, Vec<&'r [Value]>>),
    /// Nested loop over the filtered rows.
    Loop(Vec<&'r [Value]>),
}

struct Sink<'b> {
    block: &'b BlockPlan,
    groups: HashMap<Vec<Value>, usize>,
    accs: Vec<(Vec<Value>, Vec<Acc>)>,
    rows: Vec<Row>,
}

impl Sink<'_> {
    fn emit(&mut self, view: &TupleView) {
        match &self.block.agg {
            None => self.rows.push(project(&self.block.projection, view)),
            Some(agg) => {
                let key: Vec<Value> = agg.keys.iter().map(|k| eval(k, view).into_owned()).collect();
                let idx = match self.groups.get(&key) {
                    Some(&i) => i,
                    None => {
                        self.accs.push((key.clone(), agg.aggs.iter().map(Acc::new).collect()));
                        self.groups.insert(key, self.accs.len() - 1);
                        self.accs.len() - 1
                    }
                };
                accumulate(&agg.aggs, &mut self.accs[idx].1, view);
            }
        }
    }
}

struct Joiner<'b, 'r> {
    block: &'b BlockPlan,
    map: Vec<(usize, usize)>,
    probes: Vec<Probe<'r>>,
}

impl<'r> Joiner<'_, 'r> {
    fn descend(&self, depth: usize, tuple: &mut Vec<Option<&'r [Value]>>, sink: &mut Sink) {
        if depth == self.block.steps.len() {
            sink.emit(&TupleView { rows: tuple, map: &self.map });
            return;
        }
        let step = &self.block.steps[depth];
        let src = &self.block.sources[step.source];
        let keys: Vec<Value> = {
            let view = TupleView { rows: tuple, map: &self.map };
            step.keys.iter().map(|&(w, _)| view.cell_owned(w)).collect()
        };
        let mut matched = false;
        let mut try_row = |row: &'r [Value], tuple: &mut Vec<Option<&'r [Value]>>, sink: &mut Sink| {
            if !step.keys.iter().zip(&keys).all(|(&(_, c), k)| compare(&row[c], CmpOp::Eq, k)) {
                return;
            }
            tuple[step.source] = Some(row);
            let view = TupleView { rows: tuple, map: &self.map };
            if all_true(&step.on_extra, &view) {
                matched = true;
                if all_true(&step.residual, &view) {
                    self.descend(depth + 1, tuple, sink);
                }
            }
            tuple[step.source] = None;
        };
        match &self.probes[depth] {
            Probe::Pk { table, key } => {
                if let Some(row) = table.by_pk(&keys[*key]) {
                    if all_true(&src.filters, row.as_slice()) {
                        try_row(row, tuple, sink);
                    }
                }
            }
            Probe::Index(index) => {
                if let Some(rows) = index.get(&keys) {
                    for &row in rows {
                        try_row(row, tuple, sink);
                    }
                }
            }
            Probe::Loop(rows) => {
                for &row in rows {
                    try_row(row, tuple, sink);
                }
            }
        }
        if step.kind == StepKind::LeftOuter && !matched {
            let view = TupleView { rows: tuple, map: &self.map };
            if all_true(&step.residual, &view) {
                self.descend(depth + 1, tuple, sink);
            }
        }
    }
}

trait CellOwned {
    fn cell_owned(&self, i: usize) -> Value;
}

impl CellOwned for TupleView<'_, '_> {
    fn cell_owned(&self, i: usize) -> Value {
        use super::eval::RowAccess;
        self.cell(i).clone()
    }
}

impl BlockExec for BaselineExec<'_> {
    fn exec_block(&self, block: &BlockPlan) -> Result<Vec<Row>, QueryError> {
        let n = block.sources.len();
        let mut handles: Vec<Option<Arc<RwLock<RowTable>>>> = Vec::with_capacity(n);
        let mut derived: Vec<Vec<Row>> = Vec::with_capacity(n);
        for (i, s) in block.sources.iter().enumerate() {
            match &s.kind {
                SourceKind::Base { table } => {
                    handles.push(Some(self.store.table(table)?));
                    derived.push(Vec::new());
                }
                SourceKind::Derived { .. } => {
                    handles.push(None);
                    derived.push(derived_rows(block, i, self)?);
                }
            }
        }
        let guards: Vec<Option<RwLockReadGuard<RowTable>>> =
            handles.iter().map(|h| h.as_ref().map(|h| h.read().unwrap())).collect();
        let rows_of = |s: usize| -> &[Row] {
            match &guards[s] {
                Some(g) => &g.rows,
                None => &derived[s],
            }
        };

        let mut map = Vec::with_capacity(block.width);
        for (si, s) in block.sources.iter().enumerate() {
            map.extend((0..s.columns.len()).map(|c| (si, c)));
        }
        let mut probes = Vec::with_capacity(n);
        for step in &block.steps {
            let s = step.source;
            let src = &block.sources[s];
            let pk = guards[s].as_ref().and_then(|g| g.def.pk_index());
            let pk_key = pk.and_then(|p| step.keys.iter().position(|&(_, c)| c == p));
            let filtered = || rows_of(s).iter().filter(|r| all_true(&src.filters, r.as_slice())).map(|r| r.as_slice());
            probes.push(match (step.kind, pk_key) {
                (StepKind::Scan, _) => Probe::Loop(filtered().collect()),
                (_, Some(k)) => Probe::Pk { table: guards[s].as_ref().unwrap(), key: k },
                (_, None) if step.keys.is_empty() => Probe::Loop(filtered().collect()),
                (_, None) => {
                    let mut index: HashMap<Vec<Value>, Vec<&[Value]>> = HashMap::new();
                    for row in filtered() {
                        let key: Vec<Value> = step.keys.iter().map(|&(_, c)| row[c].clone()).collect();
                        if !key.iter().any(Value::is_null) {
                            index.entry(key).or_default().push(row);
                        }
                    }
                    Probe::Index(index)
                }
            });
        }

        let joiner = Joiner { block, map, probes };
        let mut sink = Sink { block, groups: HashMap::new(), accs: Vec::new(), rows: Vec::new() };
        let mut tuple: Vec<Option<&[Value]>> = vec![None; n];
        joiner.descend(0, &mut tuple, &mut sink);
        match block.agg {
            Some(_) => finish_groups(block, sink.accs),
            None => Ok(sink.rows),
        }
    }
}
