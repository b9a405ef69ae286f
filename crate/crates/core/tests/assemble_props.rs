use nekmini::data::{assemble_global, validate_snapshot, Block, Extents, FieldArray, Layout, Snapshot};
use proptest::prelude::*;

/// Blocks tiling x with widths `widths`, all `ny` rows tall. Point `(i, j)`
/// of the global grid carries value `1000 * j + i` in field "v" and the pair
/// `(i, -j)` in the two-component field "w".
fn tiles(widths: &[usize], ny: usize) -> Vec<Block> {
    let mut start = 0i64;
    widths
        .iter()
        .map(|&w| {
            let mut v = Vec::new();
            let mut pair = Vec::new();
            for j in 0..ny {
                for i in 0..w {
                    let gi = start + i as i64;
                    v.push(1000.0 * j as f64 + gi as f64);
                    pair.extend([gi as f64, -(j as f64)]);
                }
            }
            let b = Block {
                origin: [start as f64 * 0.5, 0.0, 0.0],
                spacing: [0.5, 0.5, 1.0],
                extents: Extents::new((start, start + w as i64 - 1), (0, ny as i64 - 1), (0, 0)),
                fields: vec![
                    FieldArray::point_scalar("v", v),
                    FieldArray::new("w", nekmini::data::Association::Point, 2, pair),
                ],
            };
            start += w as i64;
            b
        })
        .collect()
}

proptest! {
    #[test]
    fn tilex_preserves_points_and_positions(widths in prop::collection::vec(1usize..9, 1..6), ny in 1usize..9) {
        let blocks = tiles(&widths, ny);
        let g = assemble_global(&blocks, Layout::TileX).unwrap();
        let total: usize = widths.iter().sum();
        prop_assert_eq!(g.point_count(), blocks.iter().map(Block::point_count).sum::<usize>());
        prop_assert_eq!(g.extents.point_dims(), [total, ny, 1]);
        prop_assert_eq!(g.origin, blocks[0].origin);
        let snap = Snapshot { time: 0.0, step: 0, producer_id: 0, blocks: vec![g.clone()] };
        prop_assert!(validate_snapshot(&snap).is_empty());
        let v = &g.field("v").unwrap().values;
        let w = &g.field("w").unwrap().values;
        for j in 0..ny {
            for i in 0..total {
                let idx = i + total * j;
                prop_assert_eq!(v[idx], 1000.0 * j as f64 + i as f64);
                prop_assert_eq!(w[2 * idx], i as f64);
                prop_assert_eq!(w[2 * idx + 1], -(j as f64));
            }
        }
    }

    #[test]
    fn mismatched_heights_are_rejected(a in 1usize..5, b in 1usize..5, ny in 1usize..6) {
        let mut blocks = tiles(&[a], ny);
        blocks.extend(tiles(&[b], ny + 1));
        prop_assert!(assemble_global(&blocks, Layout::TileX).is_err());
    }
}
