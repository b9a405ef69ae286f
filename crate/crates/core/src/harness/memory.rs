use std::fmt;
#[cfg(target_os = "linux")]
use std::sync::atomic::{AtomicU64, Ordering};

/// Peak resident set size could not be read.
#[derive(Debug)]
pub struct MemoryError(pub String);

impl fmt::Display for MemoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot measure peak RSS: {}", self.0)
    }
}

impl std::error::Error for MemoryError {}

/// Largest value any call has returned in this process.
#[cfg(target_os = "linux")]
static SEEN: AtomicU64 = AtomicU64::new(0);

/// Peak resident set size of the calling process, in bytes.
///
/// The kernel's figure can dip by a few pages in multithreaded processes,
/// since it is summed from per-CPU counters, so the result is also folded
/// into a running maximum.
#[cfg(target_os = "linux")]
pub fn measure_memory_hwm() -> Result<u64, MemoryError> {
    let status =
        std::fs::read_to_string("/proc/self/status").map_err(|e| MemoryError(format!("/proc/self/status: {e}")))?;
    let hwm = parse_vm_hwm(&status).ok_or_else(|| MemoryError("no VmHWM line in /proc/self/status".into()))?;
    Ok(SEEN.fetch_max(hwm, Ordering::Relaxed).max(hwm))
}

#[cfg(not(target_os = "linux"))]
pub fn measure_memory_hwm() -> Result<u64, MemoryError> {
    Err(MemoryError(format!("unsupported platform {}", std::env::consts::OS)))
}

#[cfg_attr(not(target_os = "linux"), allow(dead_code))]
fn parse_vm_hwm(status: &str) -> Option<u64> {
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let mut parts = line["VmHWM:".len()..].split_whitespace();
    let value: u64 = parts.next()?.parse().ok()?;
    match parts.next() {
        Some("kB") | None => Some(value * 1024),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_status_line() {
        let s = "Name:\tx\nVmPeak:\t  100 kB\nVmHWM:\t    2048 kB\nVmRSS:\t 1 kB\n";
        assert_eq!(parse_vm_hwm(s), Some(2048 * 1024));
        assert_eq!(parse_vm_hwm("VmRSS: 1 kB"), None);
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn positive_and_monotone() {
        let a = measure_memory_hwm().unwrap();
        let b = measure_memory_hwm().unwrap();
        assert!(a > 0);
        assert!(b >= a);
    }
}
