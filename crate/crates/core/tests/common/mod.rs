#![allow(dead_code)]

pub mod gen;

use std::path::PathBuf;

use datamig::instance::Example;
use datamig::schema::Schema;

pub fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name]
        .iter()
        .collect();
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn schema(name: &str) -> Schema {
    Schema::parse(&fixture(name)).unwrap()
}

pub struct Task {
    pub source: Schema,
    pub target: Schema,
    pub example: Example,
}

fn task(source: &str, target: &str, example: &str) -> Task {
    let source = schema(source);
    let target = schema(target);
    let example = Example::parse(&source, &target, &fixture(example)).unwrap();
    Task {
        source,
        target,
        example,
    }
}

/// Nested university document to a flat admissions table.
pub fn univ() -> Task {
    task(
        "univ_source.json",
        "admission_target.json",
        "univ_example.json",
    )
}

/// Employees and departments to a joined table, from a single-row example.
pub fn worksin() -> Task {
    task(
        "employee_source.json",
        "worksin_target.json",
        "worksin_example.json",
    )
}

pub const UNIV_PROGRAM: &str =
    "Admission(grad,ug,num) :- Univ(id1,grad,v1), Admit(v1,id2,num), Univ(id2,ug,_).\n";
