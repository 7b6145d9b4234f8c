//! Operator catalog: loading, docstring reference resolution, platform
//! filtering and heuristic categorisation.
//!
//! A catalog document is JSON Lines. The first non-blank line is a header
//! carrying `schema_version`; every following line is one operator record.
//! See `docs/catalog-schema.md` for the field list.

mod category;
mod dag;
mod filter;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Dtype;

pub use category::{categorize, CategoryRule, CategoryRules, MatchKind, OperatorCategory};
pub use dag::{resolve_docstrings, DocstringDag};
pub use filter::{filter_operators, FilterPolicy};

pub const CATALOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported catalog schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("duplicate operator `{0}`")]
    DuplicateOperator(String),
    #[error("operator `{from}` references unknown operator `{to}`")]
    DanglingReference { from: String, to: String },
    #[error("docstring reference cycle through `{0}`")]
    CycleDetected(String),
    #[error("operator `{0}` is not in the docstring graph")]
    UnknownOperator(String),
    #[error("operator `{0}` has an empty docstring")]
    MissingDocstring(String),
}

/// One sample configuration for OpInfo-style test generation. Shapes are
/// listed per input tensor; args/kwargs are passed through verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SampleSpec {
    pub shapes: Vec<Vec<usize>>,
    #[serde(default)]
    pub args: Vec<serde_json::Value>,
    #[serde(default)]
    pub kwargs: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub name: String,
    pub docstring: String,
    pub referenced_ops: Vec<String>,
    pub dtypes: BTreeSet<Dtype>,
    pub test_count: u32,
    pub tags: BTreeSet<String>,
    pub category: OperatorCategory,
    #[serde(default)]
    pub samples: Vec<SampleSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    name: String,
    docstring: String,
    #[serde(default)]
    references: Vec<String>,
    #[serde(default)]
    dtypes: Vec<String>,
    #[serde(default)]
    test_count: u32,
    #[serde(default)]
    tags: Vec<String>,
    /// Docstring-only nodes take part in reference resolution but are never
    /// scheduled for generation.
    #[serde(default)]
    doc_only: bool,
    #[serde(default)]
    samples: Vec<SampleSpec>,
}

/// Immutable after load; share it behind an `Arc` across sessions.
#[derive(Debug, Clone)]
pub struct OperatorCatalog {
    operators: BTreeMap<String, OperatorSpec>,
    dag: DocstringDag,
    fingerprint: String,
}

impl OperatorCatalog {
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&OperatorSpec> {
        self.operators.get(name)
    }

    /// Operators in name order.
    pub fn operators(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.operators.values()
    }

    pub fn dag(&self) -> &DocstringDag {
        &self.dag
    }

    /// Content hash over every record; reports from the same catalog share it.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn resolve_docstrings(&self, name: &str) -> Result<String, CatalogError> {
        let op = self
            .get(name)
            .ok_or_else(|| CatalogError::UnknownOperator(name.to_string()))?;
        resolve_docstrings(op, &self.dag)
    }

    /// Builds a catalog from already-constructed specs. Used by tests and by
    /// synthetic campaigns; the same validation as [`load_catalog`] applies.
    pub fn from_specs(
        specs: Vec<OperatorSpec>,
        doc_only: Vec<(String, String)>,
    ) -> Result<Self, CatalogError> {
        let mut dag = DocstringDag::default();
        let mut operators = BTreeMap::new();
        for (name, doc) in &doc_only {
            if dag.contains(name) {
                return Err(CatalogError::DuplicateOperator(name.clone()));
            }
            dag.add_node(name, doc);
        }
        for spec in specs {
            if spec.name.is_empty() {
                return Err(CatalogError::Parse {
                    line: 0,
                    message: "operator name must be nonempty".into(),
                });
            }
            if dag.contains(&spec.name) {
                return Err(CatalogError::DuplicateOperator(spec.name));
            }
            dag.add_node(&spec.name, &spec.docstring);
            operators.insert(spec.name.clone(), spec);
        }
        for spec in operators.values() {
            for target in &spec.referenced_ops {
                if !dag.contains(target) {
                    return Err(CatalogError::DanglingReference {
                        from: spec.name.clone(),
                        to: target.clone(),
                    });
                }
                dag.add_edge(&spec.name, target)?;
            }
        }
        dag.check_acyclic()?;
        let fingerprint = fingerprint(&operators, &doc_only);
        Ok(Self {
            operators,
            dag,
            fingerprint,
        })
    }
}

fn fingerprint(ops: &BTreeMap<String, OperatorSpec>, doc_only: &[(String, String)]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(CATALOG_SCHEMA_VERSION.to_be_bytes());
    for spec in ops.values() {
        let bytes = serde_json::to_vec(spec).expect("operator specs serialize");
        hasher.update((bytes.len() as u64).to_be_bytes());
        hasher.update(&bytes);
    }
    let mut docs: Vec<_> = doc_only.iter().collect();
    docs.sort();
    for (name, doc) in docs {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(doc.as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}

/// Loads a catalog document using the bundled category rule table.
pub fn load_catalog(source: &str) -> Result<OperatorCatalog, CatalogError> {
    load_catalog_with_rules(source, &CategoryRules::bundled())
}

pub fn load_catalog_with_rules(
    source: &str,
    rules: &CategoryRules,
) -> Result<OperatorCatalog, CatalogError> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header_text) = lines.next().ok_or(CatalogError::Parse {
        line: 1,
        message: "missing schema header".into(),
    })?;
    let header: Header = serde_json::from_str(header_text).map_err(|e| CatalogError::Parse {
        line: header_line,
        message: format!("invalid header: {e}"),
    })?;
    if header.schema_version != CATALOG_SCHEMA_VERSION {
        return Err(CatalogError::SchemaVersion {
            found: header.schema_version,
            expected: CATALOG_SCHEMA_VERSION,
        });
    }

    let mut specs = Vec::new();
    let mut doc_only = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, text) in lines {
        let record: Record = serde_json::from_str(text).map_err(|e| CatalogError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.name.trim().is_empty() {
            return Err(CatalogError::Parse {
                line,
                message: "operator name must be nonempty".into(),
            });
        }
        if !seen.insert(record.name.clone()) {
            return Err(CatalogError::DuplicateOperator(record.name));
        }
        if record.doc_only {
            doc_only.push((record.name, record.docstring));
            continue;
        }
        let dtypes = record
            .dtypes
            .iter()
            .map(|d| d.parse::<Dtype>())
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| CatalogError::Parse {
                line,
                message: e.to_string(),
            })?;
        let category = categorize(&record.name, rules);
        specs.push(OperatorSpec {
            name: record.name,
            docstring: record.docstring,
            referenced_ops: record.references,
            dtypes,
            test_count: record.test_count,
            tags: record.tags.into_iter().collect(),
            category,
            samples: record.samples,
        });
    }
    OperatorCatalog::from_specs(specs, doc_only)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(lines: &[&str]) -> String {
        let mut s = String::from("{\"schema_version\": 1}\n");
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    #[test]
    fn loads_three_operators() {
        let src = doc(&[
            r#"{"name":"exp","docstring":"exp(input) -> Tensor","dtypes":["float32"],"test_count":40}"#,
            r#"{"name":"argmax","docstring":"argmax(input) -> LongTensor","dtypes":["float32"],"test_count":60}"#,
            r#"{"name":"diag","docstring":"diag(input, diagonal=0) -> Tensor","dtypes":["int32"],"test_count":30}"#,
        ]);
        let cat = load_catalog(&src).unwrap();
        assert_eq!(cat.len(), 3);
        assert_eq!(cat.get("argmax").unwrap().category, OperatorCategory::Reduction);
    }

    #[test]
    fn duplicate_names_rejected() {
        let src = doc(&[
            r#"{"name":"exp","docstring":"a"}"#,
            r#"{"name":"exp","docstring":"b"}"#,
        ]);
        assert_eq!(
            load_catalog(&src).unwrap_err(),
            CatalogError::DuplicateOperator("exp".into())
        );
    }

    #[test]
    fn argmax_references_max() {
        let src = doc(&[
            r#"{"name":"argmax","docstring":"argmax doc","references":["max"]}"#,
            r#"{"name":"max","docstring":"max doc"}"#,
        ]);
        let cat = load_catalog(&src).unwrap();
        assert_eq!(cat.dag().edges("argmax"), &["max".to_string()]);
    }

    #[test]
    fn dangling_reference_rejected() {
        let src = doc(&[r#"{"name":"argmax","docstring":"d","references":["max"]}"#]);
        assert!(matches!(
            load_catalog(&src).unwrap_err(),
            CatalogError::DanglingReference { .. }
        ));
    }

    #[test]
    fn doc_only_nodes_resolve_but_are_not_operators() {
        let src = doc(&[
            r#"{"name":"argmax","docstring":"argmax doc","references":["max"]}"#,
            r#"{"name":"max","docstring":"max doc","doc_only":true}"#,
        ]);
        let cat = load_catalog(&src).unwrap();
        assert_eq!(cat.len(), 1);
        assert_eq!(cat.resolve_docstrings("argmax").unwrap(), "argmax doc\n\nmax doc");
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(load_catalog(""), Err(CatalogError::Parse { .. })));
        assert!(matches!(
            load_catalog("{\"schema_version\": 2}\n"),
            Err(CatalogError::SchemaVersion { found: 2, .. })
        ));
        let bad_dtype = doc(&[r#"{"name":"x","docstring":"d","dtypes":["complex64"]}"#]);
        assert!(matches!(load_catalog(&bad_dtype), Err(CatalogError::Parse { line: 2, .. })));
        let unknown_field = doc(&[r#"{"name":"x","docstring":"d","colour":"red"}"#]);
        assert!(matches!(load_catalog(&unknown_field), Err(CatalogError::Parse { .. })));
        let cyclic = doc(&[
            r#"{"name":"a","docstring":"a","references":["b"]}"#,
            r#"{"name":"b","docstring":"b","references":["a"]}"#,
        ]);
        assert!(matches!(load_catalog(&cyclic), Err(CatalogError::CycleDetected(_))));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = load_catalog(&doc(&[r#"{"name":"exp","docstring":"a"}"#])).unwrap();
        let b = load_catalog(&doc(&[r#"{"name":"exp","docstring":"a"}"#])).unwrap();
        let c = load_catalog(&doc(&[r#"{"name":"exp","docstring":"b"}"#])).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
