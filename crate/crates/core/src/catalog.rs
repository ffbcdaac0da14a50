//! Query-time metadata: table schemas, join attribute roles, table sizes, and
//! the binding of each table to a model or to raw data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::table_model::{ModelKind, TableModel};

/// Position of a join attribute inside its table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JaPosition {
    First,
    Second,
}

impl JaPosition {
    pub fn index(self) -> usize {
        match self {
            JaPosition::First => 0,
            JaPosition::Second => 1,
        }
    }

    pub fn other(self) -> JaPosition {
        match self {
            JaPosition::First => JaPosition::Second,
            JaPosition::Second => JaPosition::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    #[serde(rename = "id")]
    pub table_id: String,
    pub attributes: Vec<String>,
    pub row_count: u64,
    /// Declared join attributes; index 0 is the first JA, index 1 the second.
    #[serde(default)]
    pub join_attrs: Vec<String>,
}

impl TableMeta {
    pub fn new(
        table_id: impl Into<String>,
        attributes: &[&str],
        row_count: u64,
        join_attrs: &[&str],
    ) -> Self {
        TableMeta {
            table_id: table_id.into(),
            attributes: attributes.iter().map(|s| s.to_string()).collect(),
            row_count,
            join_attrs: join_attrs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.table_id.is_empty() {
            return Err(Error::Schema("empty table id".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.attributes {
            if !seen.insert(a.as_str()) {
                return Err(Error::Schema(format!(
                    "table {} lists attribute {a} twice",
                    self.table_id
                )));
            }
        }
        if self.join_attrs.len() > 2 {
            return Err(Error::Schema(format!(
                "table {} declares {} join attributes (at most 2 supported)",
                self.table_id,
                self.join_attrs.len()
            )));
        }
        for ja in &self.join_attrs {
            if !seen.contains(ja.as_str()) {
                return Err(Error::Schema(format!(
                    "join attribute {ja} is not an attribute of table {}",
                    self.table_id
                )));
            }
        }
        if self.join_attrs.len() == 2 && self.join_attrs[0] == self.join_attrs[1] {
            return Err(Error::Schema(format!(
                "table {} repeats join attribute {}",
                self.table_id, self.join_attrs[0]
            )));
        }
        Ok(())
    }

    pub fn has_attr(&self, attr: &str) -> bool {
        self.attributes.iter().any(|a| a == attr)
    }

    pub fn attr_index(&self, attr: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == attr)
    }

    pub fn ja_position(&self, attr: &str) -> Option<JaPosition> {
        match self.join_attrs.iter().position(|a| a == attr)? {
            0 => Some(JaPosition::First),
            _ => Some(JaPosition::Second),
        }
    }

    pub fn is_join_attr(&self, attr: &str) -> bool {
        self.join_attrs.iter().any(|a| a == attr)
    }

    pub fn non_join_attrs(&self) -> impl Iterator<Item = &String> {
        self.attributes.iter().filter(|a| !self.is_join_attr(a))
    }
}

/// Validated collection of table metadata, in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    tables: Vec<TableMeta>,
    index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct MetadataDocument {
    tables: Vec<TableMeta>,
}

impl Catalog {
    pub fn new(tables: Vec<TableMeta>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, t) in tables.iter().enumerate() {
            t.validate()?;
            if index.insert(t.table_id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate table id {}", t.table_id)));
            }
        }
        Ok(Catalog { tables, index })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MetadataDocument =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("malformed metadata: {e}")))?;
        Catalog::new(doc.tables)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MetadataDocument {
            tables: self.tables.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn get(&self, table_id: &str) -> Option<&TableMeta> {
        self.index.get(table_id).map(|&i| &self.tables[i])
    }

    pub fn get_mut(&mut self, table_id: &str) -> Option<&mut TableMeta> {
        let i = *self.index.get(table_id)?;
        Some(&mut self.tables[i])
    }

    pub fn tables(&self) -> &[TableMeta] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// Reads and validates a metadata document.
pub fn load_metadata(path: &Path) -> Result<Catalog> {
    let text = std::fs::read_to_string(path)?;
    Catalog::from_json(&text)
}

/// `table.attr` reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColumnRef {
    pub table: String,
    pub attr: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, attr: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            attr: attr.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.attr)
    }
}

impl FromStr for ColumnRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (t, a) = s
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Schema(format!("expected table.attribute, got {s:?}")))?;
        if t.is_empty() || a.is_empty() {
            return Err(Error::Schema(format!("expected table.attribute, got {s:?}")));
        }
        Ok(ColumnRef::new(t.trim(), a.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinCondition {
    pub left: ColumnRef,
    pub right: ColumnRef,
}

impl FromStr for JoinCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (l, r) = s
            .split_once('=')
            .ok_or_else(|| Error::Schema(format!("join condition needs '=': {s:?}")))?;
        Ok(JoinCondition {
            left: l.parse()?,
            right: r.parse()?,
        })
    }
}

impl fmt::Display for JoinCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

/// Where a table's statistics come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableSource {
    Model(PathBuf),
    Data(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinQuery {
    /// Tables in query order.
    pub tables: Vec<String>,
    pub select: Vec<ColumnRef>,
    pub joins: Vec<JoinCondition>,
    pub sources: BTreeMap<String, TableSource>,
}

#[derive(Serialize, Deserialize)]
struct QueryDocument {
    #[serde(default)]
    tables: Vec<String>,
    #[serde(default)]
    select: Vec<String>,
    #[serde(default)]
    joins: Vec<String>,
    #[serde(default)]
    sources: BTreeMap<String, TableSource>,
}

impl JoinQuery {
    /// Builds a query; table order follows first appearance in joins, then selections.
    pub fn new(select: &[&str], joins: &[&str]) -> Result<Self> {
        let select = select.iter().map(|s| s.parse()).collect::<Result<Vec<ColumnRef>>>()?;
        let joins = joins.iter().map(|s| s.parse()).collect::<Result<Vec<JoinCondition>>>()?;
        let mut q = JoinQuery {
            tables: Vec::new(),
            select,
            joins,
            sources: BTreeMap::new(),
        };
        q.fill_tables();
        Ok(q)
    }

    pub fn with_source(mut self, table: &str, source: TableSource) -> Self {
        self.sources.insert(table.to_string(), source);
        if !self.tables.iter().any(|t| t == table) {
            self.tables.push(table.to_string());
        }
        self
    }

    fn fill_tables(&mut self) {
        let push = |t: &str, tables: &mut Vec<String>| {
            if !tables.iter().any(|x| x == t) {
                tables.push(t.to_string());
            }
        };
        let mut tables = std::mem::take(&mut self.tables);
        for j in &self.joins {
            push(&j.left.table, &mut tables);
            push(&j.right.table, &mut tables);
        }
        for c in &self.select {
            push(&c.table, &mut tables);
        }
        for t in self.sources.keys() {
            push(t, &mut tables);
        }
        self.tables = tables;
    }

    /// Parses a query document. Relative source paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let doc: QueryDocument =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("malformed query: {e}")))?;
        let resolve = |p: PathBuf| match base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        };
        let sources = doc
            .sources
            .into_iter()
            .map(|(t, s)| {
                let s = match s {
                    TableSource::Model(p) => TableSource::Model(resolve(p)),
                    TableSource::Data(p) => TableSource::Data(resolve(p)),
                };
                (t, s)
            })
            .collect();
        let mut q = JoinQuery {
            tables: doc.tables,
            select: doc.select.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            joins: doc.joins.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            sources,
        };
        q.fill_tables();
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        JoinQuery::from_json(&text, path.parent())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = QueryDocument {
            tables: self.tables.clone(),
            select: self.select.iter().map(|c| c.to_string()).collect(),
            joins: self.joins.iter().map(|j| j.to_string()).collect(),
            sources: self.sources.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// A loaded model bound to a table.
pub struct RegistryEntry<T: Scalar> {
    pub kind: ModelKind,
    pub model: Arc<dyn TableModel<T>>,
    /// Free-form creation parameters from the model manifest.
    pub manifest: BTreeMap<String, String>,
}

impl<T: Scalar> Clone for RegistryEntry<T> {
    fn clone(&self) -> Self {
        RegistryEntry {
            kind: self.kind,
            model: Arc::clone(&self.model),
            manifest: self.manifest.clone(),
        }
    }
}

pub struct ModelRegistry<T: Scalar> {
    entries: BTreeMap<String, RegistryEntry<T>>,
}

impl<T: Scalar> Default for ModelRegistry<T> {
    fn default() -> Self {
        ModelRegistry {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> Clone for ModelRegistry<T> {
    fn clone(&self) -> Self {
        ModelRegistry {
            entries: self.entries.clone(),
        }
    }
}

impl<T: Scalar> ModelRegistry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, table_id: impl Into<String>, model: Arc<dyn TableModel<T>>) {
        let kind = model.kind();
        self.entries.insert(
            table_id.into(),
            RegistryEntry {
                kind,
                model,
                manifest: BTreeMap::new(),
            },
        );
    }

    pub fn insert(&mut self, table_id: impl Into<String>, entry: RegistryEntry<T>) {
        self.entries.insert(table_id.into(), entry);
    }

    pub fn get(&self, table_id: &str) -> Option<&RegistryEntry<T>> {
        self.entries.get(table_id)
    }

    pub fn model(&self, table_id: &str) -> Result<&Arc<dyn TableModel<T>>> {
        self.entries
            .get(table_id)
            .map(|e| &e.model)
            .ok_or_else(|| Error::Resolution(format!("no model registered for table {table_id}")))
    }

    pub fn contains(&self, table_id: &str) -> bool {
        self.entries.contains_key(table_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RegistryEntry<T>)> {
        self.entries.iter()
    }
}

/// How a table of a resolved query is backed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundSource {
    Registered(ModelKind),
    ModelFile(PathBuf),
    DataFile(PathBuf),
}

impl BoundSource {
    pub fn is_model(&self) -> bool {
        !matches!(self, BoundSource::DataFile(_))
    }
}

/// An equality join, ordered left (parent candidate) to right (child candidate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeCandidate {
    pub parent: ColumnRef,
    pub child: ColumnRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedQuery {
    pub tables: Vec<TableMeta>,
    pub edges: Vec<EdgeCandidate>,
    pub selected: Vec<ColumnRef>,
    pub sources: BTreeMap<String, BoundSource>,
    /// Distinct (first, second) join-attribute pair counts, where models report them.
    pub pair_counts: BTreeMap<String, usize>,
}

impl ResolvedQuery {
    pub fn table(&self, table_id: &str) -> Option<&TableMeta> {
        self.tables.iter().find(|t| t.table_id == table_id)
    }
}

fn check_column(catalog: &Catalog, c: &ColumnRef, tables: &[String]) -> Result<()> {
    if !tables.iter().any(|t| t == &c.table) {
        return Err(Error::Resolution(format!("table {} is not part of the query", c.table)));
    }
    let meta = catalog
        .get(&c.table)
        .ok_or_else(|| Error::Resolution(format!("unknown table {}", c.table)))?;
    if !meta.has_attr(&c.attr) {
        return Err(Error::Resolution(format!("unknown attribute {c}")));
    }
    Ok(())
}

/// Binds every table of `q` to metadata and a source, and maps join conditions to edges.
pub fn resolve_query<T: Scalar>(
    q: &JoinQuery,
    catalog: &Catalog,
    registry: &ModelRegistry<T>,
) -> Result<ResolvedQuery> {
    let mut tables = Vec::with_capacity(q.tables.len());
    for t in &q.tables {
        let meta = catalog
            .get(t)
            .ok_or_else(|| Error::Resolution(format!("unknown table {t}")))?;
        tables.push(meta.clone());
    }

    let mut edges = Vec::with_capacity(q.joins.len());
    for j in &q.joins {
        for side in [&j.left, &j.right] {
            check_column(catalog, side, &q.tables)?;
            let meta = catalog.get(&side.table).expect("checked above");
            if !meta.is_join_attr(&side.attr) {
                return Err(Error::Resolution(format!(
                    "{side} is not a declared join attribute"
                )));
            }
        }
        if j.left.table == j.right.table {
            return Err(Error::UnsupportedShape(format!(
                "join condition {j} relates a table to itself"
            )));
        }
        edges.push(EdgeCandidate {
            parent: j.left.clone(),
            child: j.right.clone(),
        });
    }
    for c in &q.select {
        check_column(catalog, c, &q.tables)?;
    }

    let mut sources = BTreeMap::new();
    let mut pair_counts = BTreeMap::new();
    for t in &q.tables {
        let bound = match (q.sources.get(t), registry.get(t)) {
            (_, Some(entry)) => BoundSource::Registered(entry.kind),
            (Some(TableSource::Model(p)), None) => BoundSource::ModelFile(p.clone()),
            (Some(TableSource::Data(p)), None) => BoundSource::DataFile(p.clone()),
            (None, None) => {
                return Err(Error::Resolution(format!(
                    "table {t} has neither a model nor data"
                )))
            }
        };
        if let Some(entry) = registry.get(t) {
            if let Some(n) = entry.model.distinct_pairs() {
                pair_counts.insert(t.clone(), n);
            }
        }
        sources.insert(t.clone(), bound);
    }
    if !sources.values().any(BoundSource::is_model) {
        return Err(Error::Resolution(
            "a model join query needs at least one table backed by a model".into(),
        ));
    }

    Ok(ResolvedQuery {
        tables,
        edges,
        selected: q.select.clone(),
        sources,
        pair_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn chain4_metadata() {
        let cat = fixtures::chain4_catalog();
        assert_eq!(cat.len(), 4);
        let d2 = cat.get("D2").unwrap();
        assert_eq!(d2.ja_position("B"), Some(JaPosition::First));
        assert_eq!(d2.ja_position("D"), Some(JaPosition::Second));
        assert!(cat.tables().iter().all(|t| t.row_count == 4));
    }

    #[test]
    fn empty_catalog() {
        let cat = Catalog::from_json(r#"{"tables": []}"#).unwrap();
        assert!(cat.is_empty());
    }

    #[test]
    fn three_join_attrs_is_a_schema_error() {
        let doc = r#"{"tables": [{"id": "T", "attributes": ["a","b","c"], "row_count": 1,
                      "join_attrs": ["a","b","c"]}]}"#;
        assert!(matches!(Catalog::from_json(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn duplicate_table_is_a_schema_error() {
        let doc = r#"{"tables": [{"id": "T", "attributes": ["a"], "row_count": 1},
                                 {"id": "T", "attributes": ["b"], "row_count": 1}]}"#;
        assert!(matches!(Catalog::from_json(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_metadata() {
        assert!(matches!(Catalog::from_json("{tables"), Err(Error::Schema(_))));
    }

    #[test]
    fn metadata_round_trip_keeps_row_counts() {
        let mut cat = fixtures::chain4_catalog();
        cat.get_mut("D1").unwrap().row_count = u64::MAX - 3;
        let back = Catalog::from_json(&cat.to_json().unwrap()).unwrap();
        assert_eq!(back, cat);
        assert_eq!(back.get("D1").unwrap().row_count, u64::MAX - 3);
    }

    #[test]
    fn resolve_chain4_query() {
        let cat = fixtures::chain4_catalog();
        let reg = fixtures::chain4_registry::<f64>();
        let q = fixtures::chain4_query();
        let rq = resolve_query(&q, &cat, &reg).unwrap();
        assert_eq!(rq.edges.len(), 3);
        let attrs: Vec<_> = rq.edges.iter().map(|e| e.parent.attr.as_str()).collect();
        assert_eq!(attrs, ["B", "D", "E"]);
        assert_eq!(rq.sources.len(), 4);
        // deterministic
        assert_eq!(rq, resolve_query(&q, &cat, &reg).unwrap());
    }

    #[test]
    fn resolve_single_table() {
        let cat = fixtures::chain4_catalog();
        let reg = fixtures::chain4_registry::<f64>();
        let q = JoinQuery::new(&["D1.A"], &[]).unwrap();
        let rq = resolve_query(&q, &cat, &reg).unwrap();
        assert!(rq.edges.is_empty());
        assert_eq!(rq.tables.len(), 1);
    }

    #[test]
    fn resolve_unknown_table() {
        let cat = fixtures::chain4_catalog();
        let reg = fixtures::chain4_registry::<f64>();
        let q = JoinQuery::new(&[], &["D1.B = D9.B"]).unwrap();
        assert!(matches!(resolve_query(&q, &cat, &reg), Err(Error::Resolution(_))));
    }

    #[test]
    fn resolve_requires_a_source() {
        let cat = fixtures::chain4_catalog();
        let reg = ModelRegistry::<f64>::new();
        let q = JoinQuery::new(&[], &["D3.E = D4.E"]).unwrap();
        assert!(matches!(resolve_query(&q, &cat, &reg), Err(Error::Resolution(_))));

        let only_data = q
            .clone()
            .with_source("D3", TableSource::Data("d3.csv".into()))
            .with_source("D4", TableSource::Data("d4.csv".into()));
        assert!(matches!(
            resolve_query(&only_data, &cat, &reg),
            Err(Error::Resolution(_))
        ));

        let mixed = q
            .with_source("D3", TableSource::Model("d3.json".into()))
            .with_source("D4", TableSource::Data("d4.csv".into()));
        let rq = resolve_query(&mixed, &cat, &reg).unwrap();
        assert_eq!(rq.sources["D4"], BoundSource::DataFile("d4.csv".into()));
    }

    #[test]
    fn query_document_paths_resolve_relative_to_file() {
        let text = r#"{"select": ["D1.A"], "joins": ["D1.B = D2.B"],
                       "sources": {"D1": {"model": "m/d1.json"}, "D2": {"data": "/abs/d2.csv"}}}"#;
        let q = JoinQuery::from_json(text, Some(Path::new("/q"))).unwrap();
        assert_eq!(q.tables, ["D1", "D2"]);
        assert_eq!(q.sources["D1"], TableSource::Model("/q/m/d1.json".into()));
        assert_eq!(q.sources["D2"], TableSource::Data("/abs/d2.csv".into()));
    }

    #[test]
    fn bad_join_syntax() {
        assert!("D1.B D2.B".parse::<JoinCondition>().is_err());
        assert!("D1 = D2.B".parse::<JoinCondition>().is_err());
    }
}
