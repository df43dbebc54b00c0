//! Attribute mapping inferred from value-set containment.
//!
//! `a' ∈ Ψ(a)` when every value of `a'` in its example instance also occurs
//! as a value of the source attribute `a` in the example input.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;

use crate::instance::{instance_to_facts, Example, FactBase, InstanceError, Value};
use crate::schema::{QualifiedAttr, Schema};

/// An attribute on either side of the mapping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrRef {
    Source(QualifiedAttr),
    Target(QualifiedAttr),
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrRef::Source(a) => write!(f, "{a}"),
            AttrRef::Target(a) => write!(f, "target {a}"),
        }
    }
}

/// Ψ: source primitive attribute → attributes whose values it contains.
/// Keys follow source declaration order; each image lists source attributes
/// before target attributes, both in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributeMapping {
    map: IndexMap<QualifiedAttr, Vec<AttrRef>>,
}

impl AttributeMapping {
    pub fn get(&self, a: &QualifiedAttr) -> &[AttrRef] {
        self.map.get(a).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QualifiedAttr, &[AttrRef])> {
        self.map.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.map.values().all(Vec::is_empty)
    }

    pub fn contains(&self, a: &QualifiedAttr, image: &AttrRef) -> bool {
        self.get(a).contains(image)
    }

    /// Source attributes whose image contains the target attribute `t`.
    pub fn sources_of_target(&self, t: &QualifiedAttr) -> Vec<&QualifiedAttr> {
        let wanted = AttrRef::Target(t.clone());
        self.map
            .iter()
            .filter(|(_, v)| v.contains(&wanted))
            .map(|(k, _)| k)
            .collect()
    }

    /// Whether two source attributes alias each other in either direction.
    pub fn aliases(&self, a: &QualifiedAttr, b: &QualifiedAttr) -> bool {
        self.contains(a, &AttrRef::Source(b.clone()))
            || self.contains(b, &AttrRef::Source(a.clone()))
    }
}

impl fmt::Display for AttributeMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, image) in &self.map {
            if image.is_empty() {
                continue;
            }
            let parts: Vec<String> = image.iter().map(ToString::to_string).collect();
            writeln!(f, "{a} -> {{{}}}", parts.join(", "))?;
        }
        Ok(())
    }
}

/// Value set of every primitive attribute, collected across all records.
pub fn value_sets(schema: &Schema, fb: &FactBase) -> HashMap<QualifiedAttr, BTreeSet<Value>> {
    let mut sets = HashMap::new();
    for attr in schema.prim_attrbs() {
        let pos = schema
            .fact_position(&attr)
            .expect("primitive attribute has a position");
        let values: BTreeSet<Value> = fb.tuples(&attr.owner).map(|t| t[pos].clone()).collect();
        sets.insert(attr, values);
    }
    sets
}

pub fn infer_attr_mapping(
    source: &Schema,
    target: &Schema,
    example: &Example,
) -> Result<AttributeMapping, InstanceError> {
    infer_attr_mapping_all(source, target, std::slice::from_ref(example))
}

/// Ψ over several examples, comparing the union of each attribute's values
/// across all of them.
pub fn infer_attr_mapping_all(
    source: &Schema,
    target: &Schema,
    examples: &[Example],
) -> Result<AttributeMapping, InstanceError> {
    let mut src_values: HashMap<QualifiedAttr, BTreeSet<Value>> = HashMap::new();
    let mut tgt_values: HashMap<QualifiedAttr, BTreeSet<Value>> = HashMap::new();
    for e in examples {
        for (a, vs) in value_sets(source, &instance_to_facts(source, &e.input)?) {
            src_values.entry(a).or_default().extend(vs);
        }
        for (a, vs) in value_sets(target, &instance_to_facts(target, &e.output)?) {
            tgt_values.entry(a).or_default().extend(vs);
        }
    }
    let empty = BTreeSet::new();
    let src_attrs = source.prim_attrbs();
    let tgt_attrs = target.prim_attrbs();
    let mut map = IndexMap::new();
    for a in &src_attrs {
        let va = src_values.get(a).unwrap_or(&empty);
        let contained =
            |vs: Option<&BTreeSet<Value>>| vs.is_some_and(|vs| !vs.is_empty() && vs.is_subset(va));
        let mut image: Vec<AttrRef> = src_attrs
            .iter()
            .filter(|b| *b != a && contained(src_values.get(*b)))
            .map(|b| AttrRef::Source(b.clone()))
            .collect();
        image.extend(
            tgt_attrs
                .iter()
                .filter(|t| contained(tgt_values.get(*t)))
                .map(|t| AttrRef::Target(t.clone())),
        );
        map.insert(a.clone(), image);
    }
    Ok(AttributeMapping { map })
}
