//! Columnar executor over the column store.
//!
//! Filters run as typed kernels over whole segments and yield selection
//! vectors. Joins are hash joins on row ids: intermediate results are one
//! row-id vector per source (late materialization), with `NULL_ROW` for
//! the null-extended side of an outer join. Aggregation hashes encoded
//! keys (dictionary codes, integer bits) per partition and merges the
//! partial groups in partition order, so the result does not depend on the
//! partition count.

use std::collections::HashMap;
use std::sync::{Arc, RwLock, RwLockReadGuard};

use chrono::Datelike;
use rayon::prelude::*;

use super::ast::ScalarFunc;
use super::eval::{all_true, eval, truth};
use super::finish::{derived_rows, finish_groups, Acc, BlockExec};
use super::plan::{AggPlan, BExpr, BlockPlan, JoinStep, SourceKind, StepKind};
use super::QueryError;
use crate::storage::column::{days_to_date, ColumnData, ColumnSegment, ColumnStore, ColumnTable};
use crate::storage::Predicate;
use crate::value::{Row, Value};

pub const NULL_ROW: u32 = u32::MAX;

pub struct RolapExec<'a> {
    pub store: &'a ColumnStore,
    pub partitions: usize,
}

/// Row-id tuples: `cols[source][t]` is the row of `source` in tuple `t`.
struct Tuples {
    cols: Vec<Vec<u32>>,
    len: usize,
}

struct Ctx<'g> {
    block: &'g BlockPlan,
    map: Vec<(usize, usize)>,
    segs: Vec<Vec<Option<&'g ColumnSegment>>>,
    lens: Vec<usize>,
}

impl<'g> Ctx<'g> {
    fn seg(&self, s: usize, c: usize) -> &'g ColumnSegment {
        self.segs[s][c].expect("segment fetched for every referenced column")
    }

    fn wide_seg(&self, w: usize) -> (usize, &'g ColumnSegment) {
        let (s, c) = self.map[w];
        (s, self.seg(s, c))
    }

    fn value(&self, tuples: &Tuples, w: usize, t: usize) -> Value {
        let (s, c) = self.map[w];
        match tuples.cols[s][t] {
            NULL_ROW => Value::Null,
            r => self.seg(s, c).get(r as usize),
        }
    }

    /// Fills the referenced wide columns of tuple `t` into `buf`.
    fn gather(&self, tuples: &Tuples, cols: &[usize], t: usize, buf: &mut [Value]) {
        for &w in cols {
            buf[w] = self.value(tuples, w, t);
        }
    }

    // ---- filters -------------------------------------------------------

    fn select(&self, s: usize) -> Vec<u32> {
        let n = self.lens[s];
        let filters = &self.block.sources[s].filters;
        if filters.is_empty() {
            return (0..n as u32).collect();
        }
        let mut mask = vec![true; n];
        for f in filters {
            let m = self.mask(s, f);
            mask.iter_mut().zip(m).for_each(|(a, b)| *a &= b);
        }
        (0..n as u32).filter(|&i| mask[i as usize]).collect()
    }

    fn mask(&self, s: usize, e: &BExpr) -> Vec<bool> {
        let leaf = |c: usize, p: Predicate| self.seg(s, c).mask(&p);
        match e {
            BExpr::And(a, b) => {
                let mut m = self.mask(s, a);
                m.iter_mut().zip(self.mask(s, b)).for_each(|(x, y)| *x &= y);
                m
            }
            BExpr::Or(a, b) => {
                let mut m = self.mask(s, a);
                m.iter_mut().zip(self.mask(s, b)).for_each(|(x, y)| *x |= y);
                m
            }
            BExpr::Cmp(op, a, b) => match (a.as_ref(), b.as_ref()) {
                (BExpr::Col(c), BExpr::Const(v)) => leaf(*c, Predicate::Cmp { column: String::new(), op: *op, value: v.clone() }),
                (BExpr::Const(v), BExpr::Col(c)) => {
                    leaf(*c, Predicate::Cmp { column: String::new(), op: op.flip(), value: v.clone() })
                }
                _ => self.mask_rowwise(s, e),
            },
            BExpr::Like { expr, pattern, negated } => match expr.as_ref() {
                BExpr::Col(c) => leaf(*c, Predicate::Like { column: String::new(), pattern: pattern.clone(), negated: *negated }),
                _ => self.mask_rowwise(s, e),
            },
            BExpr::InList { expr, list, negated } => match expr.as_ref() {
                BExpr::Col(c) => {
                    let seg = self.seg(s, *c);
                    match &seg.data {
                        ColumnData::Text { dict, codes, .. } => {
                            let hits: Vec<bool> = dict.iter().map(|d| list.test(&Value::Text(d.clone()), *negated)).collect();
                            codes.iter().enumerate().map(|(i, &k)| !seg.is_null(i) && hits[k as usize]).collect()
                        }
                        _ => (0..seg.len()).map(|i| list.test(&seg.get(i), *negated)).collect(),
                    }
                }
                _ => self.mask_rowwise(s, e),
            },
            _ => self.mask_rowwise(s, e),
        }
    }

    fn mask_rowwise(&self, s: usize, e: &BExpr) -> Vec<bool> {
        let mut cols = Vec::new();
        e.columns(&mut cols);
        let width = self.block.sources[s].columns.len();
        let mut buf = vec![Value::Null; width];
        (0..self.lens[s])
            .map(|i| {
                for &c in &cols {
                    buf[c] = self.seg(s, c).get(i);
                }
                truth(e, buf.as_slice())
            })
            .collect()
    }

    // ---- joins ---------------------------------------------------------

    fn int_key(&self, seg: &ColumnSegment, r: u32) -> Option<i64> {
        if r == NULL_ROW || seg.is_null(r as usize) {
            return None;
        }
        match &seg.data {
            ColumnData::Int(xs) => Some(xs[r as usize]),
            _ => None,
        }
    }

    fn join(&self, tuples: Tuples, step: &JoinStep) -> Tuples {
        let s = step.source;
        let sel = self.select(s);
        let int_keys = step.keys.len() == 1 && {
            let (w, c) = step.keys[0];
            matches!(self.wide_seg(w).1.data, ColumnData::Int(_)) && matches!(self.seg(s, c).data, ColumnData::Int(_))
        };
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let outer = step.kind == StepKind::LeftOuter;
        if step.keys.is_empty() {
            for t in 0..tuples.len as u32 {
                for &r in &sel {
                    pairs.push((t, r));
                }
            }
        } else if int_keys {
            let (w, c) = step.keys[0];
            let (ws, wseg) = self.wide_seg(w);
            let nseg = self.seg(s, c);
            let probe_key = |t: usize| self.int_key(wseg, tuples.cols[ws][t]);
            if outer || sel.len() <= tuples.len {
                let mut table: HashMap<i64, Vec<u32>> = HashMap::with_capacity(sel.len());
                for &r in &sel {
                    if let Some(k) = self.int_key(nseg, r) {
                        table.entry(k).or_default().push(r);
                    }
                }
                for t in 0..tuples.len {
                    if let Some(rs) = probe_key(t).and_then(|k| table.get(&k)) {
                        pairs.extend(rs.iter().map(|&r| (t as u32, r)));
                    }
                }
            } else {
                let mut table: HashMap<i64, Vec<u32>> = HashMap::with_capacity(tuples.len);
                for t in 0..tuples.len {
                    if let Some(k) = probe_key(t) {
                        table.entry(k).or_default().push(t as u32);
                    }
                }
                for &r in &sel {
                    if let Some(ts) = self.int_key(nseg, r).and_then(|k| table.get(&k)) {
                        pairs.extend(ts.iter().map(|&t| (t, r)));
                    }
                }
                pairs.sort_unstable();
            }
        } else {
            let mut table: HashMap<Vec<Value>, Vec<u32>> = HashMap::new();
            for &r in &sel {
                let k: Vec<Value> = step.keys.iter().map(|&(_, c)| self.seg(s, c).get(r as usize)).collect();
                if !k.iter().any(Value::is_null) {
                    table.entry(k).or_default().push(r);
                }
            }
            for t in 0..tuples.len {
                let k: Vec<Value> = step.keys.iter().map(|&(w, _)| self.value(&tuples, w, t)).collect();
                if k.iter().any(Value::is_null) {
                    continue;
                }
                if let Some(rs) = table.get(&k) {
                    pairs.extend(rs.iter().map(|&r| (t as u32, r)));
                }
            }
        }

        // Extra ON conditions decide what counts as a match.
        if !step.on_extra.is_empty() {
            let mut cols = Vec::new();
            step.on_extra.iter().for_each(|e| e.columns(&mut cols));
            let mut buf = vec![Value::Null; self.block.width];
            let mut probe = self.extend(&tuples, s, &pairs);
            let keep: Vec<bool> = (0..probe.len)
                .map(|i| {
                    self.gather(&probe, &cols, i, &mut buf);
                    all_true(&step.on_extra, buf.as_slice())
                })
                .collect();
            let mut i = 0;
            pairs.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            probe.cols.clear();
        }
        if outer {
            let mut with_nulls = Vec::with_capacity(pairs.len());
            let mut next = 0;
            for t in 0..tuples.len as u32 {
                let start = with_nulls.len();
                while next < pairs.len() && pairs[next].0 == t {
                    with_nulls.push(pairs[next]);
                    next += 1;
                }
                if with_nulls.len() == start {
                    with_nulls.push((t, NULL_ROW));
                }
            }
            pairs = with_nulls;
        }
        let mut out = self.extend(&tuples, s, &pairs);
        if !step.residual.is_empty() {
            out = self.residual(out, &step.residual);
        }
        out
    }

    fn extend(&self, tuples: &Tuples, s: usize, pairs: &[(u32, u32)]) -> Tuples {
        let cols = tuples
            .cols
            .iter()
            .enumerate()
            .map(|(i, col)| {
                if i == s {
                    pairs.iter().map(|p| p.1).collect()
                } else if col.is_empty() {
                    Vec::new()
                } else {
                    pairs.iter().map(|p| col[p.0 as usize]).collect()
                }
            })
            .collect();
        Tuples { cols, len: pairs.len() }
    }

    fn residual(&self, tuples: Tuples, preds: &[BExpr]) -> Tuples {
        let mut cols = Vec::new();
        preds.iter().for_each(|e| e.columns(&mut cols));
        let mut buf = vec![Value::Null; self.block.width];
        let keep: Vec<u32> = (0..tuples.len)
            .filter(|&t| {
                self.gather(&tuples, &cols, t, &mut buf);
                all_true(preds, buf.as_slice())
            })
            .map(|t| t as u32)
            .collect();
        let cols = tuples
            .cols
            .iter()
            .map(|c| if c.is_empty() { Vec::new() } else { keep.iter().map(|&t| c[t as usize]).collect() })
            .collect();
        Tuples { cols, len: keep.len() }
    }

    // ---- aggregation ---------------------------------------------------

    fn encoder(&self, e: &BExpr) -> Option<KeyEnc<'g>> {
        match e {
            BExpr::Col(w) => {
                let (s, seg) = self.wide_seg(*w);
                match seg.data {
                    ColumnData::Point(_) | ColumnData::Polygon(_) => None,
                    _ => Some(KeyEnc { source: s, seg, part: None }),
                }
            }
            BExpr::Func(f, a) => match a.as_ref() {
                BExpr::Col(w) => {
                    let (s, seg) = self.wide_seg(*w);
                    matches!(seg.data, ColumnData::Date(_)).then_some(KeyEnc { source: s, seg, part: Some(*f) })
                }
                _ => None,
            },
            _ => None,
        }
    }

    fn feeder(&self, e: &Option<BExpr>) -> Feed<'g> {
        match e {
            None => Feed::Star,
            Some(BExpr::Col(w)) => {
                let (s, seg) = self.wide_seg(*w);
                Feed::Seg(s, seg)
            }
            Some(e) => {
                let mut cols = Vec::new();
                e.columns(&mut cols);
                Feed::Expr(e.clone(), cols)
            }
        }
    }

    fn aggregate(&self, tuples: &Tuples, agg: &AggPlan, partitions: usize) -> Result<Vec<(Vec<Value>, Vec<Acc>)>, QueryError> {
        let encoders: Option<Vec<KeyEnc>> = agg.keys.iter().map(|k| self.encoder(k)).collect();
        let feeds: Vec<Feed> = agg.aggs.iter().map(|a| self.feeder(&a.arg)).collect();
        let parts = partitions.max(1).min(tuples.len.max(1));
        let chunk = tuples.len.div_ceil(parts).max(1);
        let ranges: Vec<(usize, usize)> = (0..parts).map(|p| (p * chunk, ((p + 1) * chunk).min(tuples.len))).collect();
        let mut key_cols = Vec::new();
        agg.keys.iter().for_each(|k| k.columns(&mut key_cols));

        let groups: Vec<(Vec<Value>, Vec<Acc>)> = match encoders {
            Some(enc) if enc.len() <= 4 => {
                let partials: Vec<Partial<EncKey>> = ranges
                    .par_iter()
                    .map(|&(lo, hi)| {
                        self.partial(tuples, agg, &feeds, lo, hi, |t| {
                            let mut k = EncKey::default();
                            for (i, e) in enc.iter().enumerate() {
                                match e.encode(tuples.cols[e.source][t]) {
                                    Some(x) => k.0[i] = x,
                                    None => k.1 |= 1 << i,
                                }
                            }
                            k
                        })
                    })
                    .collect();
                merge(partials)
                    .into_iter()
                    .map(|(first, accs)| {
                        let mut buf = vec![Value::Null; self.block.width];
                        self.gather(tuples, &key_cols, first as usize, &mut buf);
                        (agg.keys.iter().map(|k| eval(k, buf.as_slice()).into_owned()).collect(), accs)
                    })
                    .collect()
            }
            _ => {
                let partials: Vec<Partial<Vec<Value>>> = ranges
                    .par_iter()
                    .map(|&(lo, hi)| {
                        let mut buf = vec![Value::Null; self.block.width];
                        self.partial(tuples, agg, &feeds, lo, hi, |t| {
                            self.gather(tuples, &key_cols, t, &mut buf);
                            agg.keys.iter().map(|k| eval(k, buf.as_slice()).into_owned()).collect()
                        })
                    })
                    .collect();
                let mut merged: Vec<(Vec<Value>, Vec<Acc>)> = Vec::new();
                let mut index: HashMap<Vec<Value>, usize> = HashMap::new();
                for p in partials {
                    for (key, (_, accs)) in p.keys.into_iter().zip(p.groups) {
                        merge_into(&mut merged, &mut index, key, accs, |k| k);
                    }
                }
                merged
            }
        };
        Ok(groups)
    }

    fn partial<K: std::hash::Hash + Eq + Clone>(
        &self,
        tuples: &Tuples,
        agg: &AggPlan,
        feeds: &[Feed],
        lo: usize,
        hi: usize,
        mut key_of: impl FnMut(usize) -> K,
    ) -> Partial<K> {
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut p = Partial { keys: Vec::new(), groups: Vec::new() };
        let mut buf = vec![Value::Null; self.block.width];
        for t in lo..hi {
            let k = key_of(t);
            let g = match index.get(&k) {
                Some(&g) => g,
                None => {
                    index.insert(k.clone(), p.groups.len());
                    p.keys.push(k);
                    p.groups.push((t as u32, agg.aggs.iter().map(Acc::new).collect()));
                    p.groups.len() - 1
                }
            };
            let accs = &mut p.groups[g].1;
            for (acc, feed) in accs.iter_mut().zip(feeds) {
                match feed {
                    Feed::Star => acc.add_row(),
                    Feed::Seg(s, seg) => {
                        let r = tuples.cols[*s][t];
                        if r == NULL_ROW || seg.is_null(r as usize) {
                            continue;
                        }
                        match &seg.data {
                            ColumnData::Int(xs) => acc.add_i64(xs[r as usize]),
                            ColumnData::Float(xs) => acc.add_f64(xs[r as usize]),
                            _ => acc.add(&seg.get(r as usize)),
                        }
                    }
                    Feed::Expr(e, cols) => {
                        self.gather(tuples, cols, t, &mut buf);
                        acc.add(&eval(e, buf.as_slice()));
                    }
                }
            }
        }
        p
    }

    fn project(&self, tuples: &Tuples, partitions: usize) -> Vec<Row> {
        let proj = &self.block.projection;
        let mut cols = Vec::new();
        proj.iter().for_each(|e| e.columns(&mut cols));
        let parts = partitions.max(1).min(tuples.len.max(1));
        let chunk = tuples.len.div_ceil(parts).max(1);
        (0..parts)
            .into_par_iter()
            .map(|p| {
                let mut buf = vec![Value::Null; self.block.width];
                let (lo, hi) = (p * chunk, ((p + 1) * chunk).min(tuples.len));
                (lo..hi)
                    .map(|t| {
                        proj.iter()
                            .map(|e| match e {
                                BExpr::Col(w) => self.value(tuples, *w, t),
                                e => {
                                    self.gather(tuples, &cols, t, &mut buf);
                                    eval(e, buf.as_slice()).into_owned()
                                }
                            })
                            .collect()
                    })
                    .collect::<Vec<Row>>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Group key of up to four encoded parts plus a null bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
struct EncKey([u64; 4], u8);

struct KeyEnc<'g> {
    source: usize,
    seg: &'g ColumnSegment,
    part: Option<ScalarFunc>,
}

impl KeyEnc<'_> {
    /// Injective per column: equal encodings iff equal values.
    fn encode(&self, r: u32) -> Option<u64> {
        if r == NULL_ROW || self.seg.is_null(r as usize) {
            return None;
        }
        let i = r as usize;
        Some(match (&self.seg.data, self.part) {
            (ColumnData::Date(xs), Some(f)) => {
                let d = days_to_date(xs[i]);
                match f {
                    ScalarFunc::Year => d.year() as i64 as u64,
                    ScalarFunc::Month => d.month() as u64,
                }
            }
            (ColumnData::Int(xs), _) => xs[i] as u64,
            (ColumnData::Float(xs), _) => {
                if xs[i] == 0.0 {
                    0
                } else {
                    xs[i].to_bits()
                }
            }
            (ColumnData::Bool(xs), _) => xs[i] as u64,
            (ColumnData::Date(xs), None) => xs[i] as i64 as u64,
            (ColumnData::Text { codes, .. }, _) => codes[i] as u64,
            _ => unreachable!("no encoder for spatial columns"),
        })
    }
}

enum Feed<'g> {
    Star,
    Seg(usize, &'g ColumnSegment),
    Expr(BExpr, Vec<usize>),
}

struct Partial<K> {
    keys: Vec<K>,
    /// `(first tuple, accumulators)` in first-appearance order.
    groups: Vec<(u32, Vec<Acc>)>,
}

fn merge_into<K: std::hash::Hash + Eq, G>(
    merged: &mut Vec<(G, Vec<Acc>)>,
    index: &mut HashMap<K, usize>,
    key: K,
    accs: Vec<Acc>,
    group: impl FnOnce(K) -> G,
) where
    K: Clone,
{
    match index.get(&key) {
        Some(&g) => merged[g].1.iter_mut().zip(&accs).for_each(|(a, b)| a.merge(b)),
        None => {
            index.insert(key.clone(), merged.len());
            merged.push((group(key), accs));
        }
    }
}

/// Merges partials in partition order; returns `(first tuple, accs)`.
fn merge(partials: Vec<Partial<EncKey>>) -> Vec<(u32, Vec<Acc>)> {
    let mut merged: Vec<(u32, Vec<Acc>)> = Vec::new();
    let mut index: HashMap<EncKey, usize> = HashMap::new();
    for p in partials {
        for (key, (first, accs)) in p.keys.into_iter().zip(p.groups) {
            merge_into(&mut merged, &mut index, key, accs, |_| first);
        }
    }
    merged
}

fn segments_of(rows: &[Row], columns: &[(String, crate::value::DataType)]) -> Vec<ColumnSegment> {
    let mut segs: Vec<ColumnSegment> = columns.iter().map(|(n, t)| ColumnSegment::new(n, *t)).collect();
    for r in rows {
        for (s, v) in segs.iter_mut().zip(r) {
            s.push(v);
        }
    }
    segs
}

impl BlockExec for RolapExec<'_> {
    fn exec_block(&self, block: &BlockPlan) -> Result<Vec<Row>, QueryError> {
        let n = block.sources.len();
        let mut handles: Vec<Option<Arc<RwLock<ColumnTable>>>> = Vec::with_capacity(n);
        let mut owned: Vec<Vec<ColumnSegment>> = Vec::with_capacity(n);
        for (i, s) in block.sources.iter().enumerate() {
            match &s.kind {
                SourceKind::Base { table } => {
                    handles.push(Some(self.store.table(table)?));
                    owned.push(Vec::new());
                }
                SourceKind::Derived { .. } => {
                    handles.push(None);
                    owned.push(segments_of(&derived_rows(block, i, self)?, &s.columns));
                }
            }
        }
        let guards: Vec<Option<RwLockReadGuard<ColumnTable>>> =
            handles.iter().map(|h| h.as_ref().map(|h| h.read().unwrap())).collect();

        // Which columns of each source the block touches.
        let mut map = Vec::with_capacity(block.width);
        for (si, s) in block.sources.iter().enumerate() {
            map.extend((0..s.columns.len()).map(|c| (si, c)));
        }
        let mut needed: Vec<Vec<bool>> = block.sources.iter().map(|s| vec![false; s.columns.len()]).collect();
        let mut wide = Vec::new();
        for (si, s) in block.sources.iter().enumerate() {
            let mut local = Vec::new();
            s.filters.iter().for_each(|f| f.columns(&mut local));
            local.into_iter().for_each(|c| needed[si][c] = true);
        }
        for st in &block.steps {
            for &(w, c) in &st.keys {
                wide.push(w);
                needed[st.source][c] = true;
            }
            st.on_extra.iter().chain(&st.residual).for_each(|e| e.columns(&mut wide));
        }
        match &block.agg {
            Some(agg) => {
                agg.keys.iter().for_each(|k| k.columns(&mut wide));
                agg.aggs.iter().flat_map(|a| &a.arg).for_each(|e| e.columns(&mut wide));
            }
            None => block.projection.iter().for_each(|e| e.columns(&mut wide)),
        }
        for w in wide {
            let (s, c) = map[w];
            needed[s][c] = true;
        }
        let mut segs = Vec::with_capacity(n);
        let mut lens = Vec::with_capacity(n);
        for si in 0..n {
            match &guards[si] {
                Some(g) => {
                    let t: &ColumnTable = g;
                    segs.push(needed[si].iter().enumerate().map(|(c, &need)| need.then(|| t.segment(c))).collect());
                    lens.push(t.len());
                }
                None => {
                    segs.push(owned[si].iter().map(Some).collect());
                    lens.push(owned[si].first().map_or(0, ColumnSegment::len));
                }
            }
        }
        let ctx = Ctx { block, map, segs, lens };

        let first = &block.steps[0];
        let sel = ctx.select(first.source);
        let mut cols = vec![Vec::new(); n];
        let len = sel.len();
        cols[first.source] = sel;
        let mut tuples = Tuples { cols, len };
        if !first.residual.is_empty() {
            tuples = ctx.residual(tuples, &first.residual);
        }
        for step in &block.steps[1..] {
            tuples = ctx.join(tuples, step);
        }
        match &block.agg {
            Some(agg) => {
                let groups = ctx.aggregate(&tuples, agg, self.partitions)?;
                finish_groups(block, groups)
            }
            None => Ok(ctx.project(&tuples, self.partitions)),
        }
    }
}
