//! Runs alone in its own process so the high-water mark starts low.

use std::hint::black_box;

use nekmini::harness::measure_memory_hwm;

#[test]
fn touching_100_mib_raises_the_high_water_mark() {
    let before = measure_memory_hwm().unwrap();
    assert!(before > 0);
    let n = 100 << 20;
    let mut buf = vec![0u8; n];
    for i in (0..n).step_by(4096) {
        buf[i] = (i / 4096) as u8 | 1;
    }
    black_box(&mut buf);
    let after = measure_memory_hwm().unwrap();
    assert!(after >= before + n as u64, "before {before} after {after}");
    let again = measure_memory_hwm().unwrap();
    drop(buf);
    let freed = measure_memory_hwm().unwrap();
    assert!(again >= after && freed >= again);
}
