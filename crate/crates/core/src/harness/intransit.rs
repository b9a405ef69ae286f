use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use log::info;

use super::records::*;
use super::{create_dir, measure_memory_hwm, report, HarnessError, Mode, RunConfig};
use crate::bridge::{initialize_in, should_trigger, AnalysisSpec, BridgeSummary};
use crate::sinks::AnalysisKind;
use crate::solver::{init_state, snapshot_of, step_in_place};
use crate::staging::{connect, Endpoint, EndpointConfig, ProducerConfig, ServeSummary};

pub const STATUS_FILE: &str = "status.txt";
/// First stdout line of an endpoint process, followed by the bound address.
pub const LISTENING_PREFIX: &str = "listening on ";

/// How `run_intransit` starts the endpoint and producers.
#[derive(Clone, Debug)]
pub enum Launch {
    /// Threads of the calling process.
    Threads,
    /// Child processes of the given `nekmini` executable.
    Spawn { exe: PathBuf },
}

#[derive(Clone, Debug)]
pub struct ProducerOutcome {
    pub producer_id: u32,
    pub label: String,
    pub timings: Vec<TimingRecord>,
    pub bytes: Vec<ByteRecord>,
    pub memory: MemoryRecord,
}

impl ProducerOutcome {
    /// Bytes streamed for snapshot steps (handshake and Bye excluded).
    pub fn payload_bytes(&self) -> u64 {
        self.bytes.iter().filter(|b| b.phase == Phase::Transport).map(|b| b.bytes).sum()
    }

    pub fn steps_streamed(&self) -> usize {
        self.bytes.iter().filter(|b| b.phase == Phase::Transport).count()
    }

    /// Per-step totals of solve, snapshot copy and transport.
    pub fn step_times(&self) -> Vec<f64> {
        let mut per: BTreeMap<u64, f64> = BTreeMap::new();
        for t in self.timings.iter().filter(|t| t.phase.is_step_part()) {
            *per.entry(t.step).or_default() += t.seconds;
        }
        per.into_values().collect()
    }

    /// Per-step totals of the steps that streamed a snapshot.
    pub fn streamed_step_times(&self) -> Vec<f64> {
        let streamed: std::collections::BTreeSet<u64> =
            self.bytes.iter().filter(|b| b.phase == Phase::Transport).map(|b| b.step).collect();
        let mut per: BTreeMap<u64, f64> = BTreeMap::new();
        for t in self.timings.iter().filter(|t| t.phase.is_step_part() && streamed.contains(&t.step)) {
            *per.entry(t.step).or_default() += t.seconds;
        }
        per.into_values().collect()
    }
}

#[derive(Clone, Debug)]
pub struct EndpointOutcome {
    pub label: String,
    pub timings: Vec<TimingRecord>,
    pub bytes: Vec<ByteRecord>,
    pub memory: MemoryRecord,
    pub steps_completed: u64,
    pub incomplete_steps: u64,
    pub rejected_connections: u64,
    pub aborted: Option<String>,
}

impl EndpointOutcome {
    pub fn sink_bytes(&self) -> u64 {
        self.bytes.iter().map(|b| b.bytes).sum()
    }
}

#[derive(Clone, Debug)]
pub struct IntransitOutcome {
    pub endpoint: EndpointOutcome,
    pub producers: Vec<ProducerOutcome>,
    pub summary: Vec<SummaryRow>,
    /// Sum of every process's peak RSS.
    pub aggregate_peak_rss: u64,
}

pub fn producer_label(label: &str, id: u32) -> String {
    format!("{label}-p{id}")
}

pub fn endpoint_label(label: &str) -> String {
    format!("{label}-endpoint")
}

/// Runs one producer: an independent solver that streams every
/// `cfg.stream_frequency`-th step to `cfg.endpoint_address`. The solver
/// seed is offset by `producer_id` and the block sits at x-index
/// `producer_id * nx`. Records go to `cfg.output_dir`.
pub fn run_producer(cfg: &RunConfig, producer_id: u32) -> Result<ProducerOutcome, HarnessError> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let label = producer_label(&cfg.label, producer_id);
    let mut params = cfg.solver.clone();
    params.seed = params.seed.wrapping_add(producer_id as u64);
    let mut state = init_state(&params)?;
    let origin = producer_id as i64 * params.nx as i64;
    let stream = AnalysisSpec::new(AnalysisKind::Null, cfg.stream_frequency);
    let mut conn = connect(&ProducerConfig::new(cfg.endpoint_address.clone(), producer_id))?;

    let mut timings = Vec::with_capacity(3 * cfg.steps as usize + 3);
    let mut bytes = Vec::new();
    let row = |step, phase, seconds| TimingRecord {
        label: label.clone(),
        step,
        phase,
        seconds,
    };
    for n in 0..=cfg.steps {
        let solve = if n == 0 {
            0.0
        } else {
            let t0 = Instant::now();
            step_in_place(&mut state, &params)?;
            t0.elapsed().as_secs_f64()
        };
        let triggered = should_trigger(&stream, n, cfg.stream_step_zero);
        if n == 0 && !triggered {
            continue;
        }
        let (mut copy, mut transport) = (0.0, 0.0);
        if triggered {
            let t0 = Instant::now();
            let snap = snapshot_of(&state, producer_id, origin);
            copy = t0.elapsed().as_secs_f64();
            let before = conn.bytes_sent();
            let t1 = Instant::now();
            conn.send_step(&snap)?;
            transport = t1.elapsed().as_secs_f64();
            bytes.push(ByteRecord {
                label: label.clone(),
                step: n,
                phase: Phase::Transport,
                bytes: conn.bytes_sent() - before,
            });
        }
        timings.push(row(n, Phase::Solve, solve));
        timings.push(row(n, Phase::SnapshotCopy, copy));
        timings.push(row(n, Phase::Transport, transport));
    }
    conn.close()?;
    let memory = MemoryRecord {
        label: label.clone(),
        role: format!("producer-{producer_id}"),
        peak_rss_bytes: measure_memory_hwm()?,
    };
    let dir = &cfg.output_dir;
    write_timings(&dir.join(TIMINGS_FILE), &timings)?;
    write_bytes(&dir.join(BYTES_FILE), &bytes)?;
    write_memory(&dir.join(MEMORY_FILE), std::slice::from_ref(&memory))?;
    Ok(ProducerOutcome {
        producer_id,
        label,
        timings,
        bytes,
        memory,
    })
}

/// Serves `cfg.producers` producers on `cfg.endpoint_address` with the
/// configured bridge, calling `on_listen` once the socket is bound. Sink
/// outputs and records go to `cfg.output_dir`.
pub fn run_endpoint(
    cfg: &RunConfig,
    on_listen: impl FnOnce(SocketAddr),
) -> Result<(EndpointOutcome, BridgeSummary, ServeSummary), HarnessError> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let label = endpoint_label(&cfg.label);
    let mut bridge = initialize_in(&cfg.bridge_config()?, &cfg.output_dir)?;
    let mut ecfg = EndpointConfig::new(cfg.endpoint_address.clone(), cfg.producers);
    ecfg.ack_delay = cfg.ack_delay;
    let endpoint = Endpoint::bind(ecfg)?;
    on_listen(endpoint.local_addr().map_err(|e| HarnessError::io(Path::new(&cfg.endpoint_address), e))?);
    let serve = endpoint.serve(&mut bridge)?;
    let bridge_summary = bridge.finalize();

    let mut timings = Vec::new();
    let mut bytes = Vec::new();
    for s in &serve.steps {
        let row = |phase, seconds| TimingRecord {
            label: label.clone(),
            step: s.step,
            phase,
            seconds,
        };
        timings.push(row(Phase::Gather, s.gather_seconds));
        timings.push(row(Phase::Assemble, s.assemble_seconds));
        timings.push(row(Phase::Sink, s.bridge_seconds));
        for r in &s.report.sinks {
            timings.push(row(Phase::SinkKind(r.kind), r.seconds));
            bytes.push(ByteRecord {
                label: label.clone(),
                step: s.step,
                phase: Phase::SinkKind(r.kind),
                bytes: r.bytes,
            });
        }
    }
    let memory = MemoryRecord {
        label: label.clone(),
        role: "endpoint".into(),
        peak_rss_bytes: measure_memory_hwm()?,
    };
    let outcome = EndpointOutcome {
        label,
        timings,
        bytes,
        memory,
        steps_completed: serve.steps.len() as u64,
        incomplete_steps: serve.incomplete_steps,
        rejected_connections: serve.rejected_connections,
        aborted: serve.aborted.clone(),
    };
    write_endpoint_records(&cfg.output_dir, &outcome)?;
    Ok((outcome, bridge_summary, serve))
}

fn write_endpoint_records(dir: &Path, o: &EndpointOutcome) -> Result<(), HarnessError> {
    write_timings(&dir.join(TIMINGS_FILE), &o.timings)?;
    write_bytes(&dir.join(BYTES_FILE), &o.bytes)?;
    write_memory(&dir.join(MEMORY_FILE), std::slice::from_ref(&o.memory))?;
    let status = format!(
        "steps_completed={}\nincomplete_steps={}\nrejected_connections={}\naborted={}\n",
        o.steps_completed,
        o.incomplete_steps,
        o.rejected_connections,
        o.aborted.as_deref().unwrap_or("")
    );
    let path = dir.join(STATUS_FILE);
    std::fs::write(&path, status).map_err(|e| HarnessError::io(&path, e))
}

fn read_endpoint_records(dir: &Path) -> Result<EndpointOutcome, HarnessError> {
    let path = dir.join(STATUS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let num = |k: &str| -> Result<u64, HarnessError> {
        kv.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| HarnessError::Schema {
            path: path.clone(),
            reason: format!("missing or invalid '{k}'"),
        })
    };
    let memory = read_memory(&dir.join(MEMORY_FILE))?.into_iter().next().ok_or(HarnessError::NoData)?;
    Ok(EndpointOutcome {
        label: memory.label.clone(),
        timings: read_timings(&dir.join(TIMINGS_FILE))?,
        bytes: read_bytes(&dir.join(BYTES_FILE))?,
        steps_completed: num("steps_completed")?,
        incomplete_steps: num("incomplete_steps")?,
        rejected_connections: num("rejected_connections")?,
        aborted: kv.get("aborted").filter(|v| !v.is_empty()).map(|v| v.to_string()),
        memory,
    })
}

fn read_producer_records(dir: &Path, producer_id: u32) -> Result<ProducerOutcome, HarnessError> {
    let memory = read_memory(&dir.join(MEMORY_FILE))?.into_iter().next().ok_or(HarnessError::NoData)?;
    Ok(ProducerOutcome {
        producer_id,
        label: memory.label.clone(),
        timings: read_timings(&dir.join(TIMINGS_FILE))?,
        bytes: read_bytes(&dir.join(BYTES_FILE))?,
        memory,
    })
}

fn endpoint_dir(base: &Path) -> PathBuf {
    base.join("endpoint")
}

fn producer_dir(base: &Path, id: u32) -> PathBuf {
    base.join(format!("producer-{id}"))
}

/// Runs one endpoint and `cfg.producers` producers, then writes a merged
/// `memory.csv` (per-process rows plus an `aggregate` row), `summary.csv`
/// and `chart.svg` into `cfg.output_dir`.
pub fn run_intransit(cfg: &RunConfig, launch: &Launch) -> Result<IntransitOutcome, HarnessError> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    let base = cfg.output_dir.clone();
    let mut ecfg = cfg.clone();
    ecfg.mode = Mode::IntransitEndpoint;
    ecfg.output_dir = endpoint_dir(&base);
    let pcfg = |id: u32, addr: &str| {
        let mut c = cfg.clone();
        c.mode = Mode::IntransitProducer;
        c.output_dir = producer_dir(&base, id);
        c.endpoint_address = addr.to_string();
        c
    };

    match launch {
        Launch::Threads => {
            let (tx, rx) = mpsc::channel();
            let ep = thread::spawn(move || run_endpoint(&ecfg, |a| tx.send(a).unwrap_or(())).map(|r| r.0));
            let addr = match rx.recv() {
                Ok(a) => a.to_string(),
                Err(_) => return Err(ep.join().expect("endpoint thread panicked").err().unwrap_or(HarnessError::NoData)),
            };
            let handles: Vec<_> = (0..cfg.producers)
                .map(|id| {
                    let c = pcfg(id, &addr);
                    thread::spawn(move || run_producer(&c, id))
                })
                .collect();
            let mut first_err = None;
            for h in handles {
                if let Err(e) = h.join().expect("producer thread panicked") {
                    first_err.get_or_insert(e);
                }
            }
            let ep = ep.join().expect("endpoint thread panicked");
            if let Some(e) = first_err {
                return Err(e);
            }
            ep?;
        }
        Launch::Spawn { exe } => {
            let mut endpoint = spawn_endpoint(exe, &ecfg)?;
            let addr = read_listen_line(&mut endpoint, &ecfg.output_dir)?;
            let mut producers = Vec::new();
            for id in 0..cfg.producers {
                producers.push((id, spawn_producer(exe, &pcfg(id, &addr), id)?));
            }
            let mut first_err = None;
            for (id, child) in producers {
                if let Err(e) = wait_child(child, &format!("producer {id}"), &producer_dir(&base, id)) {
                    first_err.get_or_insert(e);
                }
            }
            let ep = wait_child(endpoint, "endpoint", &ecfg.output_dir);
            if let Some(e) = first_err {
                return Err(e);
            }
            ep?;
        }
    }

    let endpoint = read_endpoint_records(&endpoint_dir(&base))?;
    let producers = (0..cfg.producers)
        .map(|id| read_producer_records(&producer_dir(&base, id), id))
        .collect::<Result<Vec<_>, _>>()?;
    let mut memory: Vec<MemoryRecord> = producers.iter().map(|p| p.memory.clone()).collect();
    memory.push(endpoint.memory.clone());
    let aggregate_peak_rss = memory.iter().map(|m| m.peak_rss_bytes).sum();
    memory.push(MemoryRecord {
        label: cfg.label.clone(),
        role: "aggregate".into(),
        peak_rss_bytes: aggregate_peak_rss,
    });
    write_memory(&base.join(MEMORY_FILE), &memory)?;
    let summary = report(&base)?;
    info!(
        "{}: {} producers, {} endpoint steps, aggregate peak RSS {aggregate_peak_rss} bytes",
        cfg.label, cfg.producers, endpoint.steps_completed
    );
    Ok(IntransitOutcome {
        endpoint,
        producers,
        summary,
        aggregate_peak_rss,
    })
}

/// Arguments shared by both child roles.
fn common_args(cmd: &mut Command, cfg: &RunConfig) {
    cmd.arg("--output").arg(&cfg.output_dir).arg("--label").arg(&cfg.label);
}

fn stderr_file(dir: &Path) -> Result<File, HarnessError> {
    create_dir(dir)?;
    let path = dir.join("stderr.log");
    File::create(&path).map_err(|e| HarnessError::io(&path, e))
}

fn spawn_endpoint(exe: &Path, cfg: &RunConfig) -> Result<Child, HarnessError> {
    let mut cmd = Command::new(exe);
    cmd.arg("endpoint")
        .arg("--listen")
        .arg(&cfg.endpoint_address)
        .arg("--producers")
        .arg(cfg.producers.to_string())
        .arg("--ack-delay-ms")
        .arg(cfg.ack_delay.as_millis().to_string());
    if let Some(p) = &cfg.bridge_config_path {
        cmd.arg("--config").arg(p);
    }
    common_args(&mut cmd, cfg);
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(stderr_file(&cfg.output_dir)?);
    cmd.spawn().map_err(|e| HarnessError::io(exe, e))
}

fn spawn_producer(exe: &Path, cfg: &RunConfig, id: u32) -> Result<Child, HarnessError> {
    let s = &cfg.solver;
    let mut cmd = Command::new(exe);
    cmd.arg("producer")
        .arg("--endpoint")
        .arg(&cfg.endpoint_address)
        .arg("--id")
        .arg(id.to_string())
        .arg("--steps")
        .arg(cfg.steps.to_string())
        .arg("--frequency")
        .arg(cfg.stream_frequency.to_string())
        .args(["--nx", &s.nx.to_string(), "--ny", &s.ny.to_string()])
        .args(["--rayleigh", &s.rayleigh.to_string(), "--prandtl", &s.prandtl.to_string()])
        .args(["--dt", &s.dt.to_string(), "--seed", &s.seed.to_string()])
        .args(["--amplitude", &s.perturbation_amplitude.to_string()]);
    if !cfg.stream_step_zero {
        cmd.arg("--no-step-zero");
    }
    common_args(&mut cmd, cfg);
    cmd.stdin(Stdio::null()).stdout(Stdio::null()).stderr(stderr_file(&cfg.output_dir)?);
    cmd.spawn().map_err(|e| HarnessError::io(exe, e))
}

fn read_listen_line(child: &mut Child, dir: &Path) -> Result<String, HarnessError> {
    let stdout = child.stdout.take().expect("stdout is piped");
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).map_err(|e| HarnessError::io(dir, e))?;
    match line.trim().strip_prefix(LISTENING_PREFIX) {
        Some(addr) => Ok(addr.to_string()),
        None => {
            let _ = child.kill();
            let status = child.wait().map(|s| s.to_string()).unwrap_or_default();
            Err(HarnessError::Child {
                role: "endpoint".into(),
                status,
                stderr: std::fs::read_to_string(dir.join("stderr.log")).unwrap_or_default(),
            })
        }
    }
}

fn wait_child(mut child: Child, role: &str, dir: &Path) -> Result<(), HarnessError> {
    let status = child.wait().map_err(|e| HarnessError::io(dir, e))?;
    if status.success() {
        Ok(())
    } else {
        Err(HarnessError::Child {
            role: role.into(),
            status: status.to_string(),
            stderr: std::fs::read_to_string(dir.join("stderr.log")).unwrap_or_default(),
        })
    }
}
