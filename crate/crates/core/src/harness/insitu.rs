use std::time::Instant;

use log::info;

use super::records::*;
use super::{create_dir, measure_memory_hwm, summarize, HarnessError, Mode, RunConfig};
use crate::bridge::{initialize_in, BridgeHandle, BridgeSummary, StepReport};
use crate::solver::{init_state, snapshot_of, step_in_place, SolverState};

#[derive(Clone, Debug)]
pub struct InsituOutcome {
    pub label: String,
    pub steps: u64,
    pub timings: Vec<TimingRecord>,
    pub bytes: Vec<ByteRecord>,
    pub memory: MemoryRecord,
    pub summary: Vec<SummaryRow>,
    pub bridge: BridgeSummary,
    /// Wall time of the whole loop, initial analysis included.
    pub elapsed_seconds: f64,
    pub sink_failures: u64,
}

impl InsituOutcome {
    /// Recorded solve, copy and sink time divided by solver steps.
    pub fn time_per_step(&self) -> f64 {
        let total: f64 = self.timings.iter().filter(|t| t.phase.is_step_part()).map(|t| t.seconds).sum();
        total / self.steps as f64
    }

    pub fn sink_bytes(&self) -> u64 {
        self.bytes.iter().map(|b| b.bytes).sum()
    }
}

/// One configuration's solver, bridge and records.
struct Run<'a> {
    cfg: &'a RunConfig,
    bridge: BridgeHandle,
    state: SolverState,
    timings: Vec<TimingRecord>,
    bytes: Vec<ByteRecord>,
    failures: u64,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, HarnessError> {
        if cfg.mode != Mode::Insitu {
            return Err(HarnessError::InvalidRun("in situ runs need mode insitu".into()));
        }
        cfg.validate()?;
        create_dir(&cfg.output_dir)?;
        Ok(Self {
            cfg,
            bridge: initialize_in(&cfg.bridge_config()?, &cfg.output_dir)?,
            state: init_state(&cfg.solver)?,
            timings: Vec::with_capacity(3 * cfg.steps as usize + 3),
            bytes: Vec::new(),
            failures: 0,
        })
    }

    fn push(&mut self, step: u64, phase: Phase, seconds: f64) {
        self.timings.push(TimingRecord {
            label: self.cfg.label.clone(),
            step,
            phase,
            seconds,
        });
    }

    fn record(&mut self, step: u64, solve: f64, report: &StepReport, copy: f64) {
        self.push(step, Phase::Solve, solve);
        self.push(step, Phase::SnapshotCopy, copy);
        self.push(step, Phase::Sink, report.total_seconds());
        for r in &report.sinks {
            self.push(step, Phase::SinkKind(r.kind), r.seconds);
            self.bytes.push(ByteRecord {
                label: self.cfg.label.clone(),
                step,
                phase: Phase::SinkKind(r.kind),
                bytes: r.bytes,
            });
            self.failures += r.error.is_some() as u64;
        }
    }

    /// Step 0 analyses the initial state when something triggers there;
    /// later steps advance the solver first.
    fn advance(&mut self, n: u64) -> Result<(), HarnessError> {
        let solve = if n == 0 {
            if !self.bridge.wants(0) {
                return Ok(());
            }
            0.0
        } else {
            let t0 = Instant::now();
            step_in_place(&mut self.state, &self.cfg.solver)?;
            t0.elapsed().as_secs_f64()
        };
        let state = &self.state;
        let (report, copy) = self.bridge.update_with(n, || snapshot_of(state, 0, 0))?;
        self.record(n, solve, &report, copy);
        Ok(())
    }

    fn finish(self, elapsed_seconds: f64) -> Result<InsituOutcome, HarnessError> {
        let cfg = self.cfg;
        let bridge = self.bridge.finalize();
        let memory = MemoryRecord {
            label: cfg.label.clone(),
            role: "insitu".into(),
            peak_rss_bytes: measure_memory_hwm()?,
        };
        let summary = summarize(&self.timings, &self.bytes)?;
        let dir = &cfg.output_dir;
        write_timings(&dir.join(TIMINGS_FILE), &self.timings)?;
        write_bytes(&dir.join(BYTES_FILE), &self.bytes)?;
        write_memory(&dir.join(MEMORY_FILE), std::slice::from_ref(&memory))?;
        write_summary(&dir.join(SUMMARY_FILE), &summary)?;
        let out = InsituOutcome {
            label: cfg.label.clone(),
            steps: cfg.steps,
            timings: self.timings,
            bytes: self.bytes,
            memory,
            summary,
            bridge,
            elapsed_seconds,
            sink_failures: self.failures,
        };
        info!(
            "{}: {} steps, {:.6e} s per step, {} sink bytes, peak RSS {} bytes",
            out.label,
            out.steps,
            out.time_per_step(),
            out.sink_bytes(),
            out.memory.peak_rss_bytes
        );
        Ok(out)
    }
}

/// Runs the solver for `cfg.steps` steps with the bridge updated after every
/// step, and writes `timings.csv`, `bytes.csv`, `memory.csv` and
/// `summary.csv` into `cfg.output_dir`.
///
/// Step 0 is the initial state: the bridge sees it only if some sink
/// triggers there, and its solve time is recorded as zero.
pub fn run_insitu(cfg: &RunConfig) -> Result<InsituOutcome, HarnessError> {
    let mut run = Run::new(cfg)?;
    let start = Instant::now();
    for n in 0..=cfg.steps {
        run.advance(n)?;
    }
    run.finish(start.elapsed().as_secs_f64())
}

/// Runs several in situ configurations side by side in one process,
/// advancing each by one step in turn (rotating who goes first), so slow
/// drift in machine speed is shared by all of them. Each configuration
/// gets the same outputs as from [`run_insitu`]. Peak RSS is that of the
/// shared process.
pub fn run_insitu_interleaved(cfgs: &[RunConfig]) -> Result<Vec<InsituOutcome>, HarnessError> {
    let steps = cfgs.first().ok_or(HarnessError::NoData)?.steps;
    if cfgs.iter().any(|c| c.steps != steps) {
        return Err(HarnessError::InvalidRun("interleaved runs need equal step counts".into()));
    }
    let mut runs = cfgs.iter().map(Run::new).collect::<Result<Vec<_>, _>>()?;
    let start = Instant::now();
    let k = runs.len();
    for n in 0..=steps {
        for r in 0..k {
            runs[(r + n as usize) % k].advance(n)?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    runs.into_iter().map(|r| r.finish(elapsed)).collect()
}
