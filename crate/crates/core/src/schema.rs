//! Database schemas as non-recursive record types.
//!
//! A schema maps type names to either a primitive kind or an ordered list of
//! attribute names. Record-typed attributes name a nested record type, which
//! gives every record at most one parent. Primitive attribute names may be
//! reused across records; internally every attribute is qualified by the
//! record that owns it.

use std::collections::{HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

pub type TypeName = String;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed schema: {0}")]
    Format(String),
    #[error("record `{record}` refers to undefined type `{name}`")]
    UnknownTypeName { record: TypeName, name: TypeName },
    #[error("record types form a cycle through `{0}`")]
    CyclicSchema(TypeName),
    #[error("attribute `{name}` appears more than once under `{record}`")]
    DuplicateAttribute { record: TypeName, name: TypeName },
    #[error("record `{0}` is nested under more than one parent")]
    MultipleParents(TypeName),
    #[error("invalid top-level record list: {0}")]
    InvalidTop(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrimKind {
    Int,
    String,
}

impl PrimKind {
    fn as_str(self) -> &'static str {
        match self {
            PrimKind::Int => "Int",
            PrimKind::String => "String",
        }
    }
}

/// Definition of a type name, as in the surface syntax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeDef {
    Prim(PrimKind),
    Record(Vec<TypeName>),
}

/// An attribute together with the record type that holds it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QualifiedAttr {
    pub owner: TypeName,
    pub name: TypeName,
}

impl QualifiedAttr {
    pub fn new(owner: impl Into<TypeName>, name: impl Into<TypeName>) -> Self {
        QualifiedAttr {
            owner: owner.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for QualifiedAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.owner, self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Prim(PrimKind),
    /// Nested record; the child record type has the attribute's name.
    Record,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: TypeName,
    pub kind: AttrKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordType {
    pub name: TypeName,
    pub attrs: Vec<Attribute>,
    pub parent: Option<TypeName>,
}

impl RecordType {
    pub fn is_nested(&self) -> bool {
        self.parent.is_some()
    }

    /// Number of arguments of the relation's facts: one per attribute plus a
    /// leading parent identifier for nested records.
    pub fn arity(&self) -> usize {
        self.attrs.len() + usize::from(self.is_nested())
    }

    /// Fact argument position of the attribute at `index`.
    pub fn position_of(&self, index: usize) -> usize {
        index + usize::from(self.is_nested())
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    records: IndexMap<TypeName, RecordType>,
    top: Vec<TypeName>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema, SchemaError> {
        let json: Json = serde_json::from_str(text)?;
        Schema::from_json(&json)
    }

    pub fn from_json(json: &Json) -> Result<Schema, SchemaError> {
        let obj = json
            .as_object()
            .ok_or_else(|| SchemaError::Format("schema must be a JSON object".into()))?;
        let types = obj
            .get("types")
            .and_then(Json::as_object)
            .ok_or_else(|| SchemaError::Format("missing `types` object".into()))?;
        let mut defs: IndexMap<TypeName, TypeDef> = IndexMap::new();
        for (name, def) in types {
            defs.insert(name.clone(), parse_def(name, def)?);
        }
        let top = match obj.get("top") {
            None => None,
            Some(Json::Array(items)) => Some(
                items
                    .iter()
                    .map(|v| {
                        v.as_str().map(str::to_owned).ok_or_else(|| {
                            SchemaError::InvalidTop("entries must be strings".into())
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Some(_) => return Err(SchemaError::InvalidTop("`top` must be an array".into())),
        };
        Schema::from_defs(&defs, top)
    }

    /// Builds a schema from surface definitions. Keys of the form
    /// `Owner.attr` give a primitive kind for one record's attribute only.
    pub fn from_defs(
        defs: &IndexMap<TypeName, TypeDef>,
        top: Option<Vec<TypeName>>,
    ) -> Result<Schema, SchemaError> {
        let mut records: IndexMap<TypeName, RecordType> = IndexMap::new();
        let mut parents: HashMap<TypeName, TypeName> = HashMap::new();
        for (name, def) in defs {
            let TypeDef::Record(attr_names) = def else {
                continue;
            };
            if name.contains('.') {
                return Err(SchemaError::Format(format!(
                    "record name `{name}` must not contain `.`"
                )));
            }
            let mut seen = HashSet::new();
            let mut attrs = Vec::with_capacity(attr_names.len());
            for attr in attr_names {
                if !seen.insert(attr.as_str()) {
                    return Err(SchemaError::DuplicateAttribute {
                        record: name.clone(),
                        name: attr.clone(),
                    });
                }
                let qualified = format!("{name}.{attr}");
                let kind = match defs.get(&qualified).or_else(|| defs.get(attr)) {
                    Some(TypeDef::Prim(kind)) => AttrKind::Prim(*kind),
                    Some(TypeDef::Record(_)) if defs.contains_key(&qualified) => {
                        return Err(SchemaError::Format(format!(
                            "qualified key `{qualified}` must define a primitive"
                        )))
                    }
                    Some(TypeDef::Record(_)) => {
                        if let Some(previous) = parents.insert(attr.clone(), name.clone()) {
                            if previous != *name {
                                return Err(SchemaError::MultipleParents(attr.clone()));
                            }
                        }
                        AttrKind::Record
                    }
                    None => {
                        return Err(SchemaError::UnknownTypeName {
                            record: name.clone(),
                            name: attr.clone(),
                        })
                    }
                };
                attrs.push(Attribute {
                    name: attr.clone(),
                    kind,
                });
            }
            records.insert(
                name.clone(),
                RecordType {
                    name: name.clone(),
                    attrs,
                    parent: None,
                },
            );
        }
        for (child, parent) in &parents {
            if let Some(rec) = records.get_mut(child) {
                rec.parent = Some(parent.clone());
            }
        }
        check_acyclic(&records)?;

        let roots: Vec<TypeName> = records
            .values()
            .filter(|r| r.parent.is_none())
            .map(|r| r.name.clone())
            .collect();
        let top = match top {
            None => roots,
            Some(listed) => {
                let mut seen = HashSet::new();
                for name in &listed {
                    match records.get(name) {
                        None => {
                            return Err(SchemaError::InvalidTop(format!(
                                "`{name}` is not a record"
                            )))
                        }
                        Some(r) if r.parent.is_some() => {
                            return Err(SchemaError::InvalidTop(format!("`{name}` is nested")))
                        }
                        _ => {}
                    }
                    if !seen.insert(name.as_str()) {
                        return Err(SchemaError::InvalidTop(format!("`{name}` listed twice")));
                    }
                }
                if let Some(missing) = roots.iter().find(|r| !seen.contains(r.as_str())) {
                    return Err(SchemaError::InvalidTop(format!(
                        "`{missing}` is not listed"
                    )));
                }
                listed
            }
        };
        Ok(Schema { records, top })
    }

    pub fn to_json(&self) -> Json {
        let mut kinds: IndexMap<&str, Option<PrimKind>> = IndexMap::new();
        for rec in self.records.values() {
            for attr in &rec.attrs {
                if let AttrKind::Prim(kind) = attr.kind {
                    kinds
                        .entry(attr.name.as_str())
                        .and_modify(|k| {
                            if *k != Some(kind) {
                                *k = None;
                            }
                        })
                        .or_insert(Some(kind));
                }
            }
        }
        let mut types = Map::new();
        for rec in self.records.values() {
            let names = rec
                .attrs
                .iter()
                .map(|a| Json::String(a.name.clone()))
                .collect();
            let mut def = Map::new();
            def.insert("record".into(), Json::Array(names));
            types.insert(rec.name.clone(), Json::Object(def));
        }
        for rec in self.records.values() {
            for attr in &rec.attrs {
                let AttrKind::Prim(kind) = attr.kind else {
                    continue;
                };
                let key = match kinds[attr.name.as_str()] {
                    Some(_) => attr.name.clone(),
                    None => format!("{}.{}", rec.name, attr.name),
                };
                types.insert(key, Json::String(kind.as_str().into()));
            }
        }
        let mut obj = Map::new();
        obj.insert("types".into(), Json::Object(types));
        obj.insert(
            "top".into(),
            Json::Array(self.top.iter().cloned().map(Json::String).collect()),
        );
        Json::Object(obj)
    }

    pub fn record(&self, name: &str) -> Option<&RecordType> {
        self.records.get(name)
    }

    /// All record types in declaration order.
    pub fn records(&self) -> impl Iterator<Item = &RecordType> {
        self.records.values()
    }

    pub fn top_level_records(&self) -> &[TypeName] {
        &self.top
    }

    /// Every primitive attribute, records in declaration order.
    pub fn prim_attrbs(&self) -> Vec<QualifiedAttr> {
        self.records
            .values()
            .flat_map(|rec| {
                rec.attrs
                    .iter()
                    .filter(|a| matches!(a.kind, AttrKind::Prim(_)))
                    .map(move |a| QualifiedAttr::new(rec.name.clone(), a.name.clone()))
            })
            .collect()
    }

    /// Primitive attributes of one record, in declaration order.
    pub fn prim_attrs_of(&self, record: &str) -> Vec<QualifiedAttr> {
        self.records
            .get(record)
            .map(|rec| {
                rec.attrs
                    .iter()
                    .filter(|a| matches!(a.kind, AttrKind::Prim(_)))
                    .map(|a| QualifiedAttr::new(rec.name.clone(), a.name.clone()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Containing record of a record type, or of a primitive attribute name
    /// owned by exactly one record.
    pub fn parent(&self, name: &str) -> Option<&str> {
        if let Some(rec) = self.records.get(name) {
            return rec.parent.as_deref();
        }
        let mut owners = self
            .records
            .values()
            .filter(|r| r.attrs.iter().any(|a| a.name == name))
            .map(|r| r.name.as_str());
        match (owners.next(), owners.next()) {
            (Some(owner), None) => Some(owner),
            _ => None,
        }
    }

    pub fn prim_kind(&self, attr: &QualifiedAttr) -> Option<PrimKind> {
        let rec = self.records.get(&attr.owner)?;
        rec.attrs
            .iter()
            .find(|a| a.name == attr.name)
            .and_then(|a| match a.kind {
                AttrKind::Prim(kind) => Some(kind),
                AttrKind::Record => None,
            })
    }

    /// Fact argument position of a primitive or record-typed attribute.
    pub fn fact_position(&self, attr: &QualifiedAttr) -> Option<usize> {
        let rec = self.records.get(&attr.owner)?;
        rec.attr_index(&attr.name).map(|i| rec.position_of(i))
    }

    /// Chain of record types from the top-level ancestor down to `name`.
    pub fn ancestry(&self, name: &str) -> Vec<&RecordType> {
        let mut chain = Vec::new();
        let mut cur = self.records.get(name);
        while let Some(rec) = cur {
            chain.push(rec);
            cur = rec.parent.as_deref().and_then(|p| self.records.get(p));
        }
        chain.reverse();
        chain
    }

    /// `name` followed by every record transitively nested in it, pre-order.
    pub fn nest(&self, name: &str) -> Vec<&RecordType> {
        let mut out = Vec::new();
        if let Some(rec) = self.records.get(name) {
            out.push(rec);
            for attr in &rec.attrs {
                if attr.kind == AttrKind::Record {
                    out.extend(self.nest(&attr.name));
                }
            }
        }
        out
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_rec(s: &Schema, f: &mut fmt::Formatter<'_>, rec: &RecordType) -> fmt::Result {
            write!(f, "{}: {{", rec.name)?;
            for (i, attr) in rec.attrs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                match attr.kind {
                    AttrKind::Prim(kind) => write!(f, "{}: {}", attr.name, kind.as_str())?,
                    AttrKind::Record => write_rec(s, f, &s.records[&attr.name])?,
                }
            }
            write!(f, "}}")
        }
        for name in &self.top {
            write_rec(self, f, &self.records[name])?;
            writeln!(f)?;
        }
        Ok(())
    }
}

fn parse_def(name: &str, def: &Json) -> Result<TypeDef, SchemaError> {
    match def {
        Json::String(s) if s == "Int" => Ok(TypeDef::Prim(PrimKind::Int)),
        Json::String(s) if s == "String" => Ok(TypeDef::Prim(PrimKind::String)),
        Json::Object(obj) => {
            let attrs = obj.get("record").and_then(Json::as_array).ok_or_else(|| {
                SchemaError::Format(format!("type `{name}` must be {{\"record\": [...]}}"))
            })?;
            attrs
                .iter()
                .map(|a| {
                    a.as_str().map(str::to_owned).ok_or_else(|| {
                        SchemaError::Format(format!("attributes of `{name}` must be strings"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()
                .map(TypeDef::Record)
        }
        other => Err(SchemaError::Format(format!(
            "unsupported definition for `{name}`: {other}"
        ))),
    }
}

fn check_acyclic(records: &IndexMap<TypeName, RecordType>) -> Result<(), SchemaError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit<'a>(
        name: &'a str,
        records: &'a IndexMap<TypeName, RecordType>,
        marks: &mut HashMap<&'a str, Mark>,
    ) -> Result<(), SchemaError> {
        match marks.get(name) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => return Err(SchemaError::CyclicSchema(name.to_owned())),
            None => {}
        }
        marks.insert(name, Mark::Active);
        for attr in &records[name].attrs {
            if attr.kind == AttrKind::Record {
                visit(&attr.name, records, marks)?;
            }
        }
        marks.insert(name, Mark::Done);
        Ok(())
    }
    let mut marks = HashMap::new();
    for name in records.keys() {
        visit(name, records, &mut marks)?;
    }
    Ok(())
}
