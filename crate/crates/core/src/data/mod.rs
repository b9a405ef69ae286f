//! Structured-grid data model shared by the solver, bridge, transport and sinks.
//!
//! A [`Snapshot`] is one timestep's worth of data from one producer: a list of
//! [`Block`]s, each a structured-points grid carrying named [`FieldArray`]s.
//! Everything is plain owned data; values are never aliased into solver
//! buffers.

mod assemble;
mod validate;

pub use assemble::{assemble_global, AssembleError, Layout};
pub use validate::{validate_snapshot, Violation};

use std::fmt;

/// Entity type a field array is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Association {
    Point,
    Cell,
}

impl Association {
    /// Wire tag used by the staging codec.
    pub fn tag(self) -> u8 {
        match self {
            Association::Point => 0,
            Association::Cell => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Association::Point),
            1 => Some(Association::Cell),
            _ => None,
        }
    }
}

impl fmt::Display for Association {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Association::Point => f.write_str("point"),
            Association::Cell => f.write_str("cell"),
        }
    }
}

/// A named array of `components`-tuples, one tuple per point or cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldArray {
    pub name: String,
    pub association: Association,
    pub components: u32,
    pub values: Vec<f64>,
}

impl FieldArray {
    pub fn new(
        name: impl Into<String>,
        association: Association,
        components: u32,
        values: Vec<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            association,
            components,
            values,
        }
    }

    /// Single-component point field.
    pub fn point_scalar(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self::new(name, Association::Point, 1, values)
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor {
            name: self.name.clone(),
            association: self.association,
            components: self.components,
        }
    }

    /// Number of tuples, i.e. `values.len() / components`.
    pub fn tuples(&self) -> usize {
        if self.components == 0 {
            0
        } else {
            self.values.len() / self.components as usize
        }
    }
}

/// Inclusive index extents `(i_min, i_max, j_min, j_max, k_min, k_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Extents(pub [i64; 6]);

impl Extents {
    pub fn new(i: (i64, i64), j: (i64, i64), k: (i64, i64)) -> Self {
        Extents([i.0, i.1, j.0, j.1, k.0, k.1])
    }

    /// Extents of an `nx × ny × nz` point grid starting at index zero.
    pub fn from_dims(nx: usize, ny: usize, nz: usize) -> Self {
        Extents([0, nx as i64 - 1, 0, ny as i64 - 1, 0, nz as i64 - 1])
    }

    pub fn min(&self, axis: usize) -> i64 {
        self.0[2 * axis]
    }

    pub fn max(&self, axis: usize) -> i64 {
        self.0[2 * axis + 1]
    }

    pub fn is_ordered(&self) -> bool {
        (0..3).all(|a| self.max(a) >= self.min(a))
    }

    /// Points along `axis`; negative spans report 0.
    pub fn points_along(&self, axis: usize) -> usize {
        let span = self.max(axis) - self.min(axis);
        if span < 0 {
            0
        } else {
            span as usize + 1
        }
    }

    pub fn point_dims(&self) -> [usize; 3] {
        [self.points_along(0), self.points_along(1), self.points_along(2)]
    }

    pub fn point_count(&self) -> usize {
        self.point_dims().iter().product()
    }

    /// Cells per axis. An axis with a single point is flat and contributes a
    /// factor of one; a block with no non-flat axis has no cells.
    pub fn cell_dims(&self) -> [usize; 3] {
        let p = self.point_dims();
        [
            p[0].saturating_sub(1).max(1),
            p[1].saturating_sub(1).max(1),
            p[2].saturating_sub(1).max(1),
        ]
    }

    pub fn cell_count(&self) -> usize {
        let p = self.point_dims();
        if p.iter().any(|&n| n == 0) || p.iter().all(|&n| n == 1) {
            return 0;
        }
        self.cell_dims().iter().product()
    }

    /// Entity count for a given association.
    pub fn count(&self, association: Association) -> usize {
        match association {
            Association::Point => self.point_count(),
            Association::Cell => self.cell_count(),
        }
    }
}

/// One structured-points grid with its field arrays.
///
/// Values are stored x-fastest: the flat index of point `(i, j, k)` relative
/// to the block minimum is `i + nx * (j + ny * k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub extents: Extents,
    pub fields: Vec<FieldArray>,
}

impl Block {
    pub fn field(&self, name: &str) -> Option<&FieldArray> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn point_count(&self) -> usize {
        self.extents.point_count()
    }

    pub fn cell_count(&self) -> usize {
        self.extents.cell_count()
    }

    /// Sum of all field value lengths, in f64 words.
    pub fn value_count(&self) -> usize {
        self.fields.iter().map(|f| f.values.len()).sum()
    }
}

/// A timestamped set of blocks from one producer.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub step: u64,
    pub producer_id: u32,
    pub blocks: Vec<Block>,
}

impl Snapshot {
    /// Describes the snapshot as a single mesh.
    pub fn metadata(&self, mesh_name: &str) -> MeshMetadata {
        let mut global = [i64::MAX, i64::MIN, i64::MAX, i64::MIN, i64::MAX, i64::MIN];
        for b in &self.blocks {
            for axis in 0..3 {
                global[2 * axis] = global[2 * axis].min(b.extents.min(axis));
                global[2 * axis + 1] = global[2 * axis + 1].max(b.extents.max(axis));
            }
        }
        MeshMetadata {
            mesh_name: mesh_name.to_string(),
            global_extents: Extents(global),
            fields: self
                .blocks
                .first()
                .map(|b| b.fields.iter().map(FieldArray::descriptor).collect())
                .unwrap_or_default(),
            block_count: self.blocks.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDescriptor {
    pub name: String,
    pub association: Association,
    pub components: u32,
}

/// Mesh-level description of a snapshot without the payload.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshMetadata {
    pub mesh_name: String,
    pub global_extents: Extents,
    pub fields: Vec<FieldDescriptor>,
    pub block_count: usize,
}

impl MeshMetadata {
    /// True when every block of `s` carries exactly the described fields.
    pub fn describes(&self, s: &Snapshot) -> bool {
        s.blocks.len() == self.block_count
            && s.blocks.iter().all(|b| {
                b.fields.len() == self.fields.len()
                    && b.fields.iter().zip(&self.fields).all(|(f, d)| &f.descriptor() == d)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_flat_block() {
        let e = Extents::from_dims(2, 2, 1);
        assert_eq!(e.point_count(), 4);
        assert_eq!(e.cell_count(), 1);
        let e = Extents::from_dims(64, 64, 1);
        assert_eq!(e.cell_count(), 63 * 63);
        assert_eq!(Extents::from_dims(1, 1, 1).cell_count(), 0);
        assert_eq!(Extents::from_dims(5, 1, 1).cell_count(), 4);
    }

    #[test]
    fn metadata_matches_blocks() {
        let b = Block {
            origin: [0.0; 3],
            spacing: [1.0; 3],
            extents: Extents::new((4, 7), (0, 3), (0, 0)),
            fields: vec![FieldArray::point_scalar("t", vec![0.0; 16])],
        };
        let s = Snapshot {
            time: 0.0,
            step: 0,
            producer_id: 0,
            blocks: vec![b],
        };
        let m = s.metadata("rbc");
        assert_eq!(m.global_extents, Extents::new((4, 7), (0, 3), (0, 0)));
        assert_eq!(m.block_count, 1);
        assert!(m.describes(&s));
    }
}
