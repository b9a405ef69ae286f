use thiserror::Error;

use super::{Association, Block, Extents, FieldArray};

/// How producer blocks are laid out in the global grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Layout {
    /// Blocks abut along x with no ghost overlap, in input order.
    #[default]
    TileX,
}

#[derive(Debug, Error, PartialEq)]
pub enum AssembleError {
    #[error("no blocks to assemble")]
    Empty,
    #[error("block {0}: field schema differs from block 0")]
    SchemaMismatch(usize),
    #[error("block {0}: spacing differs from block 0")]
    SpacingMismatch(usize),
    #[error("block {0}: y/z extent shape differs from block 0")]
    ExtentShapeMismatch(usize),
    #[error("field '{0}' is cell-centered; only point fields tile across blocks")]
    CellField(String),
}

/// Concatenates blocks into one global block.
///
/// The result takes its origin and index minimum from the first block; its
/// x-extent covers the sum of the inputs' x point counts. A single block is
/// returned unchanged.
pub fn assemble_global(blocks: &[Block], layout: Layout) -> Result<Block, AssembleError> {
    let Layout::TileX = layout;
    let first = blocks.first().ok_or(AssembleError::Empty)?;
    if blocks.len() == 1 {
        return Ok(first.clone());
    }

    let [_, ny, nz] = first.extents.point_dims();
    for (bi, b) in blocks.iter().enumerate().skip(1) {
        if b.spacing != first.spacing {
            return Err(AssembleError::SpacingMismatch(bi));
        }
        let d = b.extents.point_dims();
        if d[1] != ny || d[2] != nz {
            return Err(AssembleError::ExtentShapeMismatch(bi));
        }
        let same = b.fields.len() == first.fields.len()
            && b
                .fields
                .iter()
                .zip(&first.fields)
                .all(|(a, f)| a.descriptor() == f.descriptor());
        if !same {
            return Err(AssembleError::SchemaMismatch(bi));
        }
    }
    if let Some(f) = first.fields.iter().find(|f| f.association == Association::Cell) {
        return Err(AssembleError::CellField(f.name.clone()));
    }

    let widths: Vec<usize> = blocks.iter().map(|b| b.extents.points_along(0)).collect();
    let nx_global: usize = widths.iter().sum();
    let i_min = first.extents.min(0);
    let extents = Extents([
        i_min,
        i_min + nx_global as i64 - 1,
        first.extents.min(1),
        first.extents.max(1),
        first.extents.min(2),
        first.extents.max(2),
    ]);

    let fields = first
        .fields
        .iter()
        .enumerate()
        .map(|(fi, proto)| {
            let nc = proto.components as usize;
            let mut values = vec![0.0; nx_global * ny * nz * nc];
            let mut x_offset = 0;
            for (b, &nx) in blocks.iter().zip(&widths) {
                let src = &b.fields[fi].values;
                for k in 0..nz {
                    for j in 0..ny {
                        let row_src = (j + ny * k) * nx * nc;
                        let row_dst = (x_offset + nx_global * (j + ny * k)) * nc;
                        values[row_dst..row_dst + nx * nc]
                            .copy_from_slice(&src[row_src..row_src + nx * nc]);
                    }
                }
                x_offset += nx;
            }
            FieldArray::new(proto.name.clone(), proto.association, proto.components, values)
        })
        .collect();

    Ok(Block {
        origin: first.origin,
        spacing: first.spacing,
        extents,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_snapshot, Snapshot};

    fn block(k: i64, nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Block {
        let mut vals = Vec::with_capacity(nx * ny);
        let mut vel = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                vals.push(f(i, j));
                vel.push(f(i, j));
                vel.push(-f(i, j));
            }
        }
        Block {
            origin: [k as f64 * nx as f64, 0.0, 0.0],
            spacing: [1.0, 1.0, 1.0],
            extents: Extents::new((k * nx as i64, (k + 1) * nx as i64 - 1), (0, ny as i64 - 1), (0, 0)),
            fields: vec![
                FieldArray::point_scalar("s", vals),
                FieldArray::new("velocity", Association::Point, 2, vel),
            ],
        }
    }

    #[test]
    fn single_block_is_identity() {
        let b = block(0, 4, 3, |i, j| (i * 10 + j) as f64);
        assert_eq!(assemble_global(std::slice::from_ref(&b), Layout::TileX).unwrap(), b);
    }

    #[test]
    fn two_blocks_brute_force_index_check() {
        let a = block(0, 4, 8, |i, j| (100 * i + j) as f64);
        let b = block(1, 4, 8, |i, j| (1000 + 100 * i + j) as f64);
        let g = assemble_global(&[a.clone(), b.clone()], Layout::TileX).unwrap();
        assert_eq!(g.extents, Extents::new((0, 7), (0, 7), (0, 0)));
        assert_eq!(g.point_count(), a.point_count() + b.point_count());
        let s = &g.fields[0].values;
        let v = &g.fields[1].values;
        for j in 0..8 {
            for gi in 0..8 {
                let (src, li) = if gi < 4 { (&a, gi) } else { (&b, gi - 4) };
                let want = src.fields[0].values[li + 4 * j];
                assert_eq!(s[gi + 8 * j], want);
                assert_eq!(v[2 * (gi + 8 * j) + 1], src.fields[1].values[2 * (li + 4 * j) + 1]);
            }
        }
        // global (i=5, j=3) is block-2 local (i=1, j=3)
        assert_eq!(s[5 + 8 * 3], b.fields[0].values[1 + 4 * 3]);
        let snap = Snapshot {
            time: 0.0,
            step: 0,
            producer_id: 0,
            blocks: vec![g],
        };
        assert!(validate_snapshot(&snap).is_empty());
    }

    #[test]
    fn rejects_mismatches() {
        let a = block(0, 4, 8, |_, _| 0.0);
        let mut b = block(1, 4, 8, |_, _| 0.0);
        b.spacing[0] = 0.5;
        assert_eq!(
            assemble_global(&[a.clone(), b], Layout::TileX),
            Err(AssembleError::SpacingMismatch(1))
        );
        let c = block(1, 4, 7, |_, _| 0.0);
        assert_eq!(
            assemble_global(&[a.clone(), c], Layout::TileX),
            Err(AssembleError::ExtentShapeMismatch(1))
        );
        let mut d = block(1, 4, 8, |_, _| 0.0);
        d.fields.pop();
        assert_eq!(
            assemble_global(&[a, d], Layout::TileX),
            Err(AssembleError::SchemaMismatch(1))
        );
        assert_eq!(assemble_global(&[], Layout::TileX), Err(AssembleError::Empty));
    }
}
