//! Database instances, Datalog fact bases, and the translation between them.
//!
//! Every record becomes one fact of the relation named after its record type.
//! Record-typed attribute positions hold the record's own identifier, and the
//! facts of nested records carry their parent's identifier first.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::schema::{AttrKind, PrimKind, QualifiedAttr, RecordType, Schema, TypeName};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("instance does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("fact {relation}{args} refers to parent identifier {id} that no record defines")]
    DanglingIdentifier {
        relation: TypeName,
        args: String,
        id: String,
    },
    #[error("unknown attribute {0}")]
    UnknownAttribute(String),
    #[error("relation {relation} expects {expected} arguments, got {found}")]
    ArityMismatch {
        relation: TypeName,
        expected: usize,
        found: usize,
    },
}

/// Opaque record identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecId(pub String);

impl fmt::Display for RecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(String),
    Id(RecId),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn kind(&self) -> Option<PrimKind> {
        match self {
            Value::Int(_) => Some(PrimKind::Int),
            Value::Str(_) => Some(PrimKind::String),
            Value::Id(_) => None,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Int(i) => Json::from(*i),
            Value::Str(s) => Json::String(s.clone()),
            Value::Id(id) => Json::String(id.0.clone()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(&Json::String(s.clone()).to_string()),
            Value::Id(id) => write!(f, "<{id}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Prim(Value),
    Nested(Vec<Record>),
}

/// One record value; fields follow the schema's attribute order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    pub fields: Vec<Field>,
}

impl Record {
    fn canonical(&self) -> Record {
        Record {
            fields: self
                .fields
                .iter()
                .map(|f| match f {
                    Field::Prim(v) => Field::Prim(v.clone()),
                    Field::Nested(children) => Field::Nested(canonical_set(children)),
                })
                .collect(),
        }
    }
}

fn canonical_set(records: &[Record]) -> Vec<Record> {
    let set: BTreeSet<Record> = records.iter().map(Record::canonical).collect();
    set.into_iter().collect()
}

/// Top-level record sets keyed by record type. Equality is set equality at
/// every nesting level.
#[derive(Debug, Clone, Default)]
pub struct Instance {
    pub relations: IndexMap<TypeName, Vec<Record>>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        instances_equal(self, other)
    }
}

impl Eq for Instance {}

impl Instance {
    pub fn new() -> Self {
        Instance::default()
    }

    pub fn records(&self, relation: &str) -> &[Record] {
        self.relations
            .get(relation)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.relations.values().all(Vec::is_empty)
    }

    /// Number of records at every nesting level.
    pub fn record_count(&self) -> usize {
        fn count(records: &[Record]) -> usize {
            records
                .iter()
                .map(|r| {
                    1 + r
                        .fields
                        .iter()
                        .map(|f| match f {
                            Field::Nested(c) => count(c),
                            Field::Prim(_) => 0,
                        })
                        .sum::<usize>()
                })
                .sum()
        }
        self.relations.values().map(|r| count(r)).sum()
    }

    /// Sorted, deduplicated form with empty relations dropped.
    pub fn canonical(&self) -> BTreeMap<TypeName, Vec<Record>> {
        self.relations
            .iter()
            .filter(|(_, rs)| !rs.is_empty())
            .map(|(name, rs)| (name.clone(), canonical_set(rs)))
            .collect()
    }

    pub fn from_json(schema: &Schema, json: &Json) -> Result<Instance, InstanceError> {
        let obj = json
            .as_object()
            .ok_or_else(|| mismatch("instance must be a JSON object of top-level records"))?;
        let mut relations = IndexMap::new();
        for (name, records) in obj {
            if !schema.top_level_records().contains(name) {
                return Err(mismatch(format!("`{name}` is not a top-level record type")));
            }
            let rec = schema.record(name).expect("top-level names are records");
            relations.insert(name.clone(), parse_records(schema, rec, records)?);
        }
        Ok(Instance { relations })
    }

    pub fn parse(schema: &Schema, text: &str) -> Result<Instance, InstanceError> {
        let json: Json =
            serde_json::from_str(text).map_err(|e| mismatch(format!("invalid JSON: {e}")))?;
        Instance::from_json(schema, &json)
    }

    pub fn to_json(&self, schema: &Schema) -> Json {
        let mut obj = Map::new();
        for name in schema.top_level_records() {
            if let Some(records) = self.relations.get(name) {
                let rec = schema.record(name).expect("top-level names are records");
                obj.insert(name.clone(), records_to_json(schema, rec, records));
            }
        }
        Json::Object(obj)
    }
}

fn mismatch(msg: impl Into<String>) -> InstanceError {
    InstanceError::SchemaMismatch(msg.into())
}

fn parse_records(
    schema: &Schema,
    rec: &RecordType,
    json: &Json,
) -> Result<Vec<Record>, InstanceError> {
    let items = json
        .as_array()
        .ok_or_else(|| mismatch(format!("records of `{}` must be an array", rec.name)))?;
    items
        .iter()
        .map(|item| {
            let obj = item
                .as_object()
                .ok_or_else(|| mismatch(format!("`{}` record must be an object", rec.name)))?;
            if let Some(extra) = obj.keys().find(|k| rec.attr_index(k).is_none()) {
                return Err(mismatch(format!(
                    "`{}` has no attribute `{extra}`",
                    rec.name
                )));
            }
            let mut fields = Vec::with_capacity(rec.attrs.len());
            for attr in &rec.attrs {
                let value = obj.get(&attr.name).ok_or_else(|| {
                    mismatch(format!(
                        "`{}` record lacks attribute `{}`",
                        rec.name, attr.name
                    ))
                })?;
                fields.push(match attr.kind {
                    AttrKind::Prim(kind) => {
                        Field::Prim(parse_prim(kind, value).ok_or_else(|| {
                            mismatch(format!(
                                "`{}.{}` expects {kind:?}, got {value}",
                                rec.name, attr.name
                            ))
                        })?)
                    }
                    AttrKind::Record => {
                        let child = schema.record(&attr.name).expect("validated schema");
                        Field::Nested(parse_records(schema, child, value)?)
                    }
                });
            }
            Ok(Record { fields })
        })
        .collect()
}

fn parse_prim(kind: PrimKind, json: &Json) -> Option<Value> {
    match (kind, json) {
        (PrimKind::Int, Json::Number(n)) => n.as_i64().map(Value::Int),
        (PrimKind::String, Json::String(s)) => Some(Value::Str(s.clone())),
        _ => None,
    }
}

fn records_to_json(schema: &Schema, rec: &RecordType, records: &[Record]) -> Json {
    Json::Array(
        records
            .iter()
            .map(|r| {
                let mut obj = Map::new();
                for (attr, field) in rec.attrs.iter().zip(&r.fields) {
                    let value = match field {
                        Field::Prim(v) => v.to_json(),
                        Field::Nested(children) => {
                            let child = schema.record(&attr.name).expect("validated schema");
                            records_to_json(schema, child, children)
                        }
                    };
                    obj.insert(attr.name.clone(), value);
                }
                Json::Object(obj)
            })
            .collect(),
    )
}

/// Set equality at every nesting level, ignoring record order.
pub fn instances_equal(a: &Instance, b: &Instance) -> bool {
    a.canonical() == b.canonical()
}

pub type Tuple = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fact {
    pub relation: TypeName,
    pub args: Tuple,
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.relation, TupleDisplay(&self.args))
    }
}

pub struct TupleDisplay<'a>(pub &'a [Value]);

impl fmt::Display for TupleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Ground facts grouped by relation, with set semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactBase {
    relations: BTreeMap<TypeName, BTreeSet<Tuple>>,
}

impl FactBase {
    pub fn new() -> Self {
        FactBase::default()
    }

    /// Adds a fact; returns whether it was new.
    pub fn insert(&mut self, relation: &str, args: Tuple) -> Result<bool, InstanceError> {
        let set = self.relations.entry(relation.to_owned()).or_default();
        if let Some(existing) = set.iter().next() {
            if existing.len() != args.len() {
                return Err(InstanceError::ArityMismatch {
                    relation: relation.to_owned(),
                    expected: existing.len(),
                    found: args.len(),
                });
            }
        }
        Ok(set.insert(args))
    }

    pub fn tuples(&self, relation: &str) -> impl Iterator<Item = &Tuple> {
        self.relations.get(relation).into_iter().flatten()
    }

    pub fn relation(&self, relation: &str) -> Option<&BTreeSet<Tuple>> {
        self.relations.get(relation)
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    /// Arity shared by the relation's facts, if it has any.
    pub fn arity(&self, relation: &str) -> Option<usize> {
        self.relations
            .get(relation)
            .and_then(|s| s.iter().next())
            .map(Vec::len)
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.relations.iter().flat_map(|(rel, tuples)| {
            tuples.iter().map(move |t| Fact {
                relation: rel.clone(),
                args: t.clone(),
            })
        })
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.relations
            .get(&fact.relation)
            .is_some_and(|s| s.contains(&fact.args))
    }

    pub fn is_subset(&self, other: &FactBase) -> bool {
        self.relations.iter().all(|(rel, tuples)| {
            let theirs = other.relations.get(rel);
            tuples.iter().all(|t| theirs.is_some_and(|s| s.contains(t)))
        })
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Result<FactBase, InstanceError> {
        let mut fb = FactBase::new();
        for fact in facts {
            fb.insert(&fact.relation, fact.args)?;
        }
        Ok(fb)
    }
}

impl fmt::Display for FactBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in self.facts() {
            writeln!(f, "{fact}")?;
        }
        Ok(())
    }
}

/// Converts an instance to facts. Identifiers are `N#k`, numbered per record
/// type in document order starting from 1.
/// A relation's facts laid out as rows under attribute-name headers. Nested
/// relations lead with a column named after the parent record type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub relation: TypeName,
    pub header: Vec<String>,
    pub rows: Vec<Tuple>,
}

impl Table {
    pub fn to_json(&self) -> Json {
        serde_json::json!({
            "relation": self.relation,
            "header": self.header,
            "rows": self
                .rows
                .iter()
                .map(|r| Json::Array(r.iter().map(Value::to_json).collect()))
                .collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(ToString::to_string).collect())
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                cells
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.header[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |f: &mut fmt::Formatter<'_>, row: &[String]| -> fmt::Result {
            let padded: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:<w$}"))
                .collect();
            writeln!(f, "  {}", padded.join(" | ").trim_end())
        };
        writeln!(f, "{}", self.relation)?;
        line(f, &self.header)?;
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        writeln!(f, "  {}", rule.join("-+-"))?;
        for row in &cells {
            line(f, row)?;
        }
        Ok(())
    }
}

/// Facts from per-relation rows in the layout of [`tables`]:
/// `{"Rel": [[v, ...], ...]}`. Identifier positions take strings.
pub fn facts_from_rows(schema: &Schema, json: &Json) -> Result<FactBase, InstanceError> {
    let obj = json
        .as_object()
        .ok_or_else(|| mismatch("rows must be a JSON object keyed by relation"))?;
    let mut fb = FactBase::new();
    for (name, rows) in obj {
        let rec = schema
            .record(name)
            .ok_or_else(|| mismatch(format!("unknown relation `{name}`")))?;
        let rows = rows
            .as_array()
            .ok_or_else(|| mismatch(format!("rows of `{name}` must be an array")))?;
        for row in rows {
            let cells = row
                .as_array()
                .ok_or_else(|| mismatch(format!("row of `{name}` must be an array")))?;
            if cells.len() != rec.arity() {
                return Err(InstanceError::ArityMismatch {
                    relation: name.clone(),
                    expected: rec.arity(),
                    found: cells.len(),
                });
            }
            let kinds = rec
                .parent
                .iter()
                .map(|_| AttrKind::Record)
                .chain(rec.attrs.iter().map(|a| a.kind));
            let args = kinds
                .zip(cells)
                .map(|(kind, cell)| match (kind, cell) {
                    (AttrKind::Prim(PrimKind::Int), Json::Number(n)) => n.as_i64().map(Value::Int),
                    (AttrKind::Prim(PrimKind::String), Json::String(s)) => Some(Value::str(s)),
                    (AttrKind::Record, Json::String(s)) => Some(Value::Id(RecId(s.clone()))),
                    _ => None,
                })
                .collect::<Option<Tuple>>()
                .ok_or_else(|| mismatch(format!("row {row} does not fit `{name}`")))?;
            fb.insert(name, args)?;
        }
    }
    Ok(fb)
}

/// One table per relation of `schema`, in schema order, including empty ones.
pub fn tables(schema: &Schema, fb: &FactBase) -> Vec<Table> {
    schema
        .top_level_records()
        .iter()
        .flat_map(|top| schema.nest(top))
        .map(|rec| {
            let mut header: Vec<String> = rec.parent.iter().cloned().collect();
            header.extend(rec.attrs.iter().map(|a| a.name.clone()));
            Table {
                relation: rec.name.clone(),
                header,
                rows: fb.tuples(&rec.name).cloned().collect(),
            }
        })
        .collect()
}

pub fn instance_to_facts(schema: &Schema, instance: &Instance) -> Result<FactBase, InstanceError> {
    let mut fb = FactBase::new();
    let mut counters: HashMap<&str, usize> = HashMap::new();
    for (name, records) in &instance.relations {
        let rec = schema
            .record(name)
            .filter(|r| r.parent.is_none())
            .ok_or_else(|| mismatch(format!("`{name}` is not a top-level record type")))?;
        for record in records {
            emit_record(schema, rec, record, None, &mut counters, &mut fb)?;
        }
    }
    Ok(fb)
}

fn emit_record<'s>(
    schema: &'s Schema,
    rec: &'s RecordType,
    record: &Record,
    parent: Option<&RecId>,
    counters: &mut HashMap<&'s str, usize>,
    fb: &mut FactBase,
) -> Result<(), InstanceError> {
    if record.fields.len() != rec.attrs.len() {
        return Err(mismatch(format!(
            "`{}` record has {} fields, expected {}",
            rec.name,
            record.fields.len(),
            rec.attrs.len()
        )));
    }
    let counter = counters.entry(rec.name.as_str()).or_insert(0);
    *counter += 1;
    let id = RecId(format!("{}#{}", rec.name, counter));
    let mut args = Vec::with_capacity(rec.arity());
    if let Some(p) = parent {
        args.push(Value::Id(p.clone()));
    }
    for (attr, field) in rec.attrs.iter().zip(&record.fields) {
        match (attr.kind, field) {
            (AttrKind::Prim(kind), Field::Prim(v)) if v.kind() == Some(kind) => {
                args.push(v.clone())
            }
            (AttrKind::Record, Field::Nested(children)) => {
                args.push(Value::Id(id.clone()));
                let child = schema.record(&attr.name).expect("validated schema");
                for c in children {
                    emit_record(schema, child, c, Some(&id), counters, fb)?;
                }
            }
            _ => {
                return Err(mismatch(format!(
                    "field `{}` of `{}` does not match its declared type",
                    attr.name, rec.name
                )))
            }
        }
    }
    fb.insert(&rec.name, args)?;
    Ok(())
}

/// Rebuilds nested records from facts by chasing parent identifiers.
pub fn facts_to_instance(schema: &Schema, fb: &FactBase) -> Result<Instance, InstanceError> {
    let mut children: HashMap<&str, HashMap<&Value, Vec<&Tuple>>> = HashMap::new();
    for name in fb.relation_names() {
        let rec = schema
            .record(name)
            .ok_or_else(|| mismatch(format!("facts for unknown relation `{name}`")))?;
        for t in fb.tuples(name) {
            if t.len() != rec.arity() {
                return Err(InstanceError::ArityMismatch {
                    relation: name.to_owned(),
                    expected: rec.arity(),
                    found: t.len(),
                });
            }
            if rec.is_nested() {
                children
                    .entry(rec.name.as_str())
                    .or_default()
                    .entry(&t[0])
                    .or_default()
                    .push(t);
            }
        }
    }

    // Every child fact must hang off some parent fact's record position.
    for rec in schema.records().filter(|r| r.is_nested()) {
        let Some(by_parent) = children.get(rec.name.as_str()) else {
            continue;
        };
        let parent = schema.record(rec.parent.as_deref().unwrap()).unwrap();
        let pos = parent.position_of(parent.attr_index(&rec.name).unwrap());
        let defined: BTreeSet<&Value> = fb.tuples(&parent.name).map(|t| &t[pos]).collect();
        for (id, tuples) in by_parent {
            if !defined.contains(id) {
                return Err(InstanceError::DanglingIdentifier {
                    relation: rec.name.clone(),
                    args: TupleDisplay(tuples[0]).to_string(),
                    id: id.to_string(),
                });
            }
        }
    }

    let mut instance = Instance::new();
    for name in schema.top_level_records() {
        let rec = schema.record(name).unwrap();
        let records: Vec<Record> = fb
            .tuples(name)
            .map(|t| build_record(schema, rec, t, &children))
            .collect();
        if !records.is_empty() {
            instance.relations.insert(name.clone(), records);
        }
    }
    Ok(instance)
}

fn build_record(
    schema: &Schema,
    rec: &RecordType,
    tuple: &Tuple,
    children: &HashMap<&str, HashMap<&Value, Vec<&Tuple>>>,
) -> Record {
    let fields = rec
        .attrs
        .iter()
        .enumerate()
        .map(|(i, attr)| {
            let value = &tuple[rec.position_of(i)];
            match attr.kind {
                AttrKind::Prim(_) => Field::Prim(value.clone()),
                AttrKind::Record => {
                    let child = schema.record(&attr.name).unwrap();
                    let nested = children
                        .get(child.name.as_str())
                        .and_then(|m| m.get(value))
                        .map(|ts| {
                            ts.iter()
                                .map(|t| build_record(schema, child, t, children))
                                .collect()
                        })
                        .unwrap_or_default();
                    Field::Nested(nested)
                }
            }
        })
        .collect();
    Record { fields }
}

/// Projects one relation of `fb` onto primitive attributes, returning
/// sub-tuples in declaration order.
pub fn project(
    schema: &Schema,
    fb: &FactBase,
    attrs: &[QualifiedAttr],
) -> Result<BTreeSet<Tuple>, InstanceError> {
    let first = attrs
        .first()
        .ok_or_else(|| InstanceError::UnknownAttribute("empty attribute set".into()))?;
    let rec = schema
        .record(&first.owner)
        .ok_or_else(|| InstanceError::UnknownAttribute(first.to_string()))?;
    let mut positions = Vec::with_capacity(attrs.len());
    for attr in attrs {
        if attr.owner != rec.name {
            return Err(InstanceError::UnknownAttribute(format!(
                "{attr} is not an attribute of {}",
                rec.name
            )));
        }
        if schema.prim_kind(attr).is_none() {
            return Err(InstanceError::UnknownAttribute(attr.to_string()));
        }
        positions.push(schema.fact_position(attr).unwrap());
    }
    positions.sort_unstable();
    positions.dedup();
    Ok(fb
        .tuples(&rec.name)
        .map(|t| positions.iter().map(|&p| t[p].clone()).collect())
        .collect())
}

/// An input-output example pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: Instance,
    pub output: Instance,
}

impl Example {
    pub fn from_json(
        source: &Schema,
        target: &Schema,
        json: &Json,
    ) -> Result<Example, InstanceError> {
        let input = json
            .get("input")
            .ok_or_else(|| mismatch("example lacks `input`"))?;
        let output = json
            .get("output")
            .ok_or_else(|| mismatch("example lacks `output`"))?;
        Ok(Example {
            input: Instance::from_json(source, input)?,
            output: Instance::from_json(target, output)?,
        })
    }

    pub fn parse(source: &Schema, target: &Schema, text: &str) -> Result<Example, InstanceError> {
        let json: Json =
            serde_json::from_str(text).map_err(|e| mismatch(format!("invalid JSON: {e}")))?;
        Example::from_json(source, target, &json)
    }

    pub fn to_json(&self, source: &Schema, target: &Schema) -> Json {
        let mut obj = Map::new();
        obj.insert("input".into(), self.input.to_json(source));
        obj.insert("output".into(), self.output.to_json(target));
        Json::Object(obj)
    }
}
