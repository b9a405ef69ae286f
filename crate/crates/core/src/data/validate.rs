use std::collections::HashSet;
use std::fmt;

use super::{FieldDescriptor, Snapshot};

/// One broken invariant, located by block index and (when relevant) field.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub block: Option<usize>,
    pub field: Option<String>,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    NoBlocks,
    UnorderedExtents,
    NonPositiveSpacing,
    EmptyFieldName,
    DuplicateFieldName,
    ZeroComponents,
    FieldLengthMismatch { expected: usize, actual: usize },
    SchemaMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::NoBlocks => f.write_str("snapshot has no blocks")?,
            ViolationKind::UnorderedExtents => f.write_str("extent max below min")?,
            ViolationKind::NonPositiveSpacing => f.write_str("non-positive spacing")?,
            ViolationKind::EmptyFieldName => f.write_str("empty field name")?,
            ViolationKind::DuplicateFieldName => f.write_str("duplicate field name")?,
            ViolationKind::ZeroComponents => f.write_str("zero components")?,
            ViolationKind::FieldLengthMismatch { expected, actual } => {
                write!(f, "field length mismatch (expected {expected}, got {actual})")?
            }
            ViolationKind::SchemaMismatch => f.write_str("field schema differs from block 0")?,
        }
        if let Some(b) = self.block {
            write!(f, " in block {b}")?;
        }
        if let Some(name) = &self.field {
            write!(f, ", field '{name}'")?;
        }
        Ok(())
    }
}

/// Checks every data-model invariant of `s`. An empty list means valid.
pub fn validate_snapshot(s: &Snapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.blocks.is_empty() {
        out.push(Violation {
            block: None,
            field: None,
            kind: ViolationKind::NoBlocks,
        });
        return out;
    }

    let schema: Vec<FieldDescriptor> = s.blocks[0].fields.iter().map(|f| f.descriptor()).collect();

    for (bi, b) in s.blocks.iter().enumerate() {
        let at = |kind, field: Option<&str>| Violation {
            block: Some(bi),
            field: field.map(str::to_string),
            kind,
        };
        if !b.extents.is_ordered() {
            out.push(at(ViolationKind::UnorderedExtents, None));
        }
        if b.spacing.iter().any(|&h| !(h > 0.0)) {
            out.push(at(ViolationKind::NonPositiveSpacing, None));
        }

        let mut seen = HashSet::new();
        for fa in &b.fields {
            if fa.name.is_empty() {
                out.push(at(ViolationKind::EmptyFieldName, None));
            } else if !seen.insert(fa.name.as_str()) {
                out.push(at(ViolationKind::DuplicateFieldName, Some(&fa.name)));
            }
            if fa.components == 0 {
                out.push(at(ViolationKind::ZeroComponents, Some(&fa.name)));
                continue;
            }
            if b.extents.is_ordered() {
                let expected = fa.components as usize * b.extents.count(fa.association);
                if fa.values.len() != expected {
                    out.push(at(
                        ViolationKind::FieldLengthMismatch {
                            expected,
                            actual: fa.values.len(),
                        },
                        Some(&fa.name),
                    ));
                }
            }
        }

        if bi > 0 {
            let same = b.fields.len() == schema.len()
                && b.fields.iter().all(|fa| schema.contains(&fa.descriptor()));
            if !same {
                out.push(at(ViolationKind::SchemaMismatch, None));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Block, Extents, FieldArray};

    fn snap(values: Vec<f64>, spacing: [f64; 3]) -> Snapshot {
        Snapshot {
            time: 0.0,
            step: 1,
            producer_id: 0,
            blocks: vec![Block {
                origin: [0.0; 3],
                spacing,
                extents: Extents::from_dims(2, 2, 1),
                fields: vec![FieldArray::point_scalar("temperature", values)],
            }],
        }
    }

    #[test]
    fn consistent_block_is_ok() {
        assert!(validate_snapshot(&snap(vec![0.0; 4], [1.0; 3])).is_empty());
    }

    #[test]
    fn short_field_is_reported() {
        let v = validate_snapshot(&snap(vec![0.0; 3], [1.0; 3]));
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("field length mismatch"));
        assert_eq!(v[0].field.as_deref(), Some("temperature"));
    }

    #[test]
    fn zero_spacing_is_reported() {
        let v = validate_snapshot(&snap(vec![0.0; 4], [1.0, 0.0, 1.0]));
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("non-positive spacing"));
    }

    #[test]
    fn schema_drift_and_duplicates() {
        let mut s = snap(vec![0.0; 4], [1.0; 3]);
        let mut b = s.blocks[0].clone();
        b.fields[0].name = "pressure".into();
        s.blocks.push(b);
        s.blocks[0]
            .fields
            .push(FieldArray::point_scalar("temperature", vec![0.0; 4]));
        let kinds: Vec<_> = validate_snapshot(&s).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::DuplicateFieldName));
        assert!(kinds.contains(&ViolationKind::SchemaMismatch));
    }

    #[test]
    fn empty_snapshot() {
        let s = Snapshot {
            time: 0.0,
            step: 0,
            producer_id: 0,
            blocks: vec![],
        };
        assert_eq!(validate_snapshot(&s)[0].kind, ViolationKind::NoBlocks);
    }
}
