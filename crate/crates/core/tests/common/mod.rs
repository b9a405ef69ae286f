#![allow(dead_code)]

use nekmini::data::{Association, Block, Extents, FieldArray, Snapshot};
use proptest::prelude::*;
use rand::Rng;

/// Bitwise equality, so NaN payloads and signed zeros count.
pub fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn blocks_bit_equal(a: &Block, b: &Block) -> bool {
    same_bits(&a.origin, &b.origin)
        && same_bits(&a.spacing, &b.spacing)
        && a.extents == b.extents
        && a.fields.len() == b.fields.len()
        && a.fields.iter().zip(&b.fields).all(|(f, g)| {
            f.name == g.name
                && f.association == g.association
                && f.components == g.components
                && same_bits(&f.values, &g.values)
        })
}

pub fn snapshots_bit_equal(a: &Snapshot, b: &Snapshot) -> bool {
    a.step == b.step
        && a.time.to_bits() == b.time.to_bits()
        && a.producer_id == b.producer_id
        && a.blocks.len() == b.blocks.len()
        && a.blocks.iter().zip(&b.blocks).all(|(x, y)| blocks_bit_equal(x, y))
}

/// A valid block with random geometry and fields. `finite` restricts values
/// to finite numbers; otherwise any bit pattern may appear.
pub fn random_block(rng: &mut impl Rng, finite: bool, allow_cells: bool) -> Block {
    let nx = rng.random_range(1..7usize);
    let ny = rng.random_range(1..7usize);
    let nz = rng.random_range(1..3usize);
    let i0 = rng.random_range(-5..6i64);
    let extents = Extents::new((i0, i0 + nx as i64 - 1), (0, ny as i64 - 1), (0, nz as i64 - 1));
    let nfields = rng.random_range(1..4usize);
    let mut fields = Vec::new();
    for f in 0..nfields {
        let association = if allow_cells && extents.cell_count() > 0 && rng.random_bool(0.3) {
            Association::Cell
        } else {
            Association::Point
        };
        let components = rng.random_range(1..4u32);
        let n = extents.count(association) * components as usize;
        let values = (0..n)
            .map(|_| {
                if finite {
                    let m: f64 = rng.random_range(-1.0..1.0);
                    m * 10f64.powi(rng.random_range(-30..30))
                } else {
                    f64::from_bits(rng.next_u64())
                }
            })
            .collect();
        fields.push(FieldArray::new(format!("f{f}_{}", rng.random_range(0..1000)), association, components, values));
    }
    Block {
        origin: [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-1.0..1.0)],
        spacing: [rng.random_range(1e-3..2.0), rng.random_range(1e-3..2.0), rng.random_range(1e-3..2.0)],
        extents,
        fields,
    }
}

pub fn random_snapshot(rng: &mut impl Rng, finite: bool, allow_cells: bool) -> Snapshot {
    let blocks = (0..rng.random_range(1..3)).map(|_| random_block(rng, finite, allow_cells)).collect();
    Snapshot {
        time: rng.random_range(0.0..100.0),
        step: rng.random_range(0..1_000_000),
        producer_id: rng.random_range(0..16),
        blocks,
    }
}

/// Proptest wrapper over `random_block`, driven by a seed.
pub fn arb_block(finite: bool) -> impl Strategy<Value = Block> {
    any::<u64>().prop_map(move |seed| {
        use rand::SeedableRng;
        random_block(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), finite, true)
    })
}

pub fn arb_snapshot(finite: bool) -> impl Strategy<Value = Snapshot> {
    any::<u64>().prop_map(move |seed| {
        use rand::SeedableRng;
        random_snapshot(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), finite, true)
    })
}

/// `k` point-data tiles of random widths that abut along x, all `ny` rows
/// tall, each with one two-component field "q" of arbitrary bit patterns.
pub fn random_tiles(rng: &mut impl Rng, k: usize, ny: usize) -> Vec<Block> {
    let mut x0 = 0i64;
    (0..k)
        .map(|_| {
            let nx = rng.random_range(1..7i64);
            let extents = Extents::new((x0, x0 + nx - 1), (0, ny as i64 - 1), (0, 0));
            let values = (0..2 * extents.point_count()).map(|_| f64::from_bits(rng.random())).collect();
            let b = Block {
                origin: [x0 as f64 * 0.25, 0.0, 0.0],
                spacing: [0.25, 0.5, 1.0],
                extents,
                fields: vec![FieldArray::new("q", Association::Point, 2, values)],
            };
            x0 += nx;
            b
        })
        .collect()
}

/// Whether `global` holds every tile's values at its x-offset, bit for bit.
pub fn tiles_match(global: &Block, tiles: &[Block]) -> bool {
    let total = global.extents.points_along(0);
    let ny = global.extents.points_along(1);
    let Some(g) = global.field("q") else { return false };
    let mut x0 = 0;
    for t in tiles {
        let nx = t.extents.points_along(0);
        let q = &t.fields[0].values;
        for j in 0..ny {
            for i in 0..nx {
                for c in 0..2 {
                    if g.values[2 * (x0 + i + total * j) + c].to_bits() != q[2 * (i + nx * j) + c].to_bits() {
                        return false;
                    }
                }
            }
        }
        x0 += nx;
    }
    x0 == total
}
