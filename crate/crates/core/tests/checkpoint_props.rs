mod common;

use common::{arb_snapshot, blocks_bit_equal};
use nekmini::data::{Association, Block};
use nekmini::sinks::{binary_checkpoint_size, checkpoint_read, checkpoint_write, CheckpointFormat};
use proptest::prelude::*;

/// The file layout stores point fields before cell fields.
fn point_first(b: &Block) -> Block {
    let mut b = b.clone();
    b.fields.sort_by_key(|f| f.association == Association::Cell);
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_round_trip_is_bit_exact(s in arb_snapshot(false)) {
        let dir = tempfile::tempdir().unwrap();
        let (paths, total) = checkpoint_write(&s, dir.path(), CheckpointFormat::Binary).unwrap();
        prop_assert_eq!(paths.len(), s.blocks.len());
        let mut on_disk = 0;
        for (p, b) in paths.iter().zip(&s.blocks) {
            let back = checkpoint_read(p).unwrap();
            prop_assert_eq!(back.step, s.step);
            prop_assert_eq!(back.producer_id, s.producer_id);
            prop_assert_eq!(back.time.to_bits(), s.time.to_bits());
            prop_assert!(blocks_bit_equal(&back.block, &point_first(b)));
            let len = std::fs::metadata(p).unwrap().len();
            prop_assert_eq!(len, binary_checkpoint_size(&s, b).unwrap());
            on_disk += len;
        }
        prop_assert_eq!(on_disk, total);
    }

    #[test]
    fn ascii_round_trip_is_exact_for_finite_values(s in arb_snapshot(true)) {
        let dir = tempfile::tempdir().unwrap();
        let (paths, _) = checkpoint_write(&s, dir.path(), CheckpointFormat::Ascii).unwrap();
        for (p, b) in paths.iter().zip(&s.blocks) {
            let back = checkpoint_read(p).unwrap();
            prop_assert_eq!(back.time.to_bits(), s.time.to_bits());
            prop_assert!(blocks_bit_equal(&back.block, &point_first(b)));
        }
    }

    #[test]
    fn rewriting_is_byte_identical(s in arb_snapshot(false)) {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (pa, _) = checkpoint_write(&s, a.path(), CheckpointFormat::Binary).unwrap();
        let (pb, _) = checkpoint_write(&s, b.path(), CheckpointFormat::Binary).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            prop_assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
}

