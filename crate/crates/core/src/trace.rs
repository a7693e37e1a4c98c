//! Causal traces: every conduction change of a transistor (or, at gate
//! fidelity, every gate output change) stamped with the clock edge, the
//! micro-step, the instruction and the source line that caused it.
//!
//! Wire format: JSON Lines. The first line is `{"hdr":{...}}`; every
//! following line is one event with keys in the fixed order
//! `c, id, s, g, u, ia, op, src`, no whitespace, sorted by `(c, id)`.
//! A trace's identity is the SHA-256 of its bytes.

use crate::compiler::MachineImage;
use crate::gates::LogicValue;
use crate::isa::{mnemonic_of_opcode, MEM_WORDS};
use crate::isa_vm::{Delivery, HaltReason, InputProvider, InputRecord};
use crate::lang::SourceProgram;
use crate::micro::{
    run_micro, Activity, ActivitySink, CycleCtx, Fidelity, MicroError, MicroLimits, MicroMachine, MicroRun,
    FETCH_STEPS,
};
use crate::switch::{DeviceParams, FetCond};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, PipeWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TRACE_FORMAT_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Transistor conduction changes.
    Fet,
    /// Gate output changes.
    Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: u32,
    /// Digest of the machine image.
    pub image: String,
    /// Digest of the scripted input at the start of the run.
    pub input: String,
    pub fidelity: Fidelity,
    pub granularity: Granularity,
    pub params: Option<DeviceParams>,
    pub filter: Option<String>,
    /// How entropy-port words were produced, if any: `recorded` or `replayed`.
    pub entropy: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    hdr: TraceHeader,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Clock edge.
    pub c: u64,
    /// Transistor or gate path.
    pub id: String,
    /// New state: `ON`/`OFF`/`UNK` for transistors, `0`/`1`/`X` for gates.
    pub s: String,
    /// Gate the element belongs to.
    pub g: String,
    /// Micro-pc; absent during reset and boot.
    pub u: Option<u8>,
    /// Address of the instruction being fetched or executed.
    pub ia: Option<u16>,
    /// Mnemonic, or `RESET` / `BOOT`.
    pub op: String,
    pub src: Option<u32>,
}

#[derive(Serialize)]
struct EventRef<'a> {
    c: u64,
    id: &'a str,
    s: &'a str,
    g: &'a str,
    u: Option<u8>,
    ia: Option<u16>,
    op: &'a str,
    src: Option<u32>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("traces are not comparable: {0}")]
    Incompatible(String),
    #[error("event index {index} out of range ({len} events)")]
    IndexOutOfRange { index: u64, len: u64 },
    #[error(transparent)]
    Run(#[from] MicroError),
}

/// Counts and hashes everything written through it.
struct HashingWriter<W: Write> {
    inner: BufWriter<W>,
    hash: Sha256,
    /// Hash of everything after the header line.
    body: Option<Sha256>,
    bytes: u64,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hash.update(&buf[..n]);
        if let Some(b) = &mut self.body {
            b.update(&buf[..n]);
        }
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub digest: String,
    /// Digest of the event lines alone; equal for runs whose events match
    /// even when their headers do not.
    pub events_digest: String,
    pub events: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceConfig {
    /// Keep only elements whose path starts with this prefix.
    pub filter: Option<String>,
    pub entropy: Option<String>,
}

/// Streams a run's activity to a writer, one cycle at a time.
pub struct Tracer<W: Write> {
    out: HashingWriter<W>,
    ids: Vec<String>,
    gates: Vec<usize>,
    gate_ids: Vec<String>,
    rank: Vec<u32>,
    keep: Vec<bool>,
    src: Vec<Option<u32>>,
    pending: Vec<(u32, u32, &'static str)>,
    events: u64,
}

impl<W: Write> Tracer<W> {
    /// Writes the header immediately.
    pub fn new(m: &MicroMachine, img: &MachineImage, input_digest: &str, cfg: &TraceConfig, out: W) -> io::Result<Self> {
        let c = m.circuit();
        let gate_ids: Vec<String> = c.gates.iter().map(|g| g.id.clone()).collect();
        let (ids, gates, granularity) = match &m.transistors {
            Some(t) => (
                t.fets.iter().map(|f| f.id.clone()).collect::<Vec<_>>(),
                t.provenance.clone(),
                Granularity::Fet,
            ),
            None => (gate_ids.clone(), (0..gate_ids.len()).collect(), Granularity::Gate),
        };
        let mut order: Vec<u32> = (0..ids.len() as u32).collect();
        order.sort_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
        let mut rank = vec![0; ids.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i as usize] = r as u32;
        }
        let keep = ids
            .iter()
            .map(|id| cfg.filter.as_deref().is_none_or(|p| id.starts_with(p)))
            .collect();
        let mut src = vec![None; MEM_WORDS];
        for e in &img.source_map {
            src[e.addr as usize] = e.src;
        }
        let header = TraceHeader {
            format: TRACE_FORMAT_VERSION,
            image: img.digest(),
            input: input_digest.to_string(),
            fidelity: m.fidelity,
            granularity,
            params: m.params(),
            filter: cfg.filter.clone(),
            entropy: cfg.entropy.clone(),
        };
        let mut out = HashingWriter {
            inner: BufWriter::with_capacity(1 << 16, out),
            hash: Sha256::new(),
            body: None,
            bytes: 0,
        };
        serde_json::to_writer(&mut out, &HeaderLine { hdr: header })?;
        out.write_all(b"\n")?;
        out.body = Some(Sha256::new());
        Ok(Self {
            out,
            ids,
            gates,
            gate_ids,
            rank,
            keep,
            src,
            pending: Vec::new(),
            events: 0,
        })
    }

    fn push(&mut self, idx: usize, state: &'static str) {
        if self.keep[idx] {
            let seq = self.pending.len() as u32;
            self.pending.push((self.rank[idx], seq, state));
        }
    }

    pub fn finish(mut self) -> io::Result<TraceSummary> {
        self.out.flush()?;
        Ok(TraceSummary {
            digest: hex::encode(self.out.hash.clone().finalize()),
            events_digest: hex::encode(self.out.body.clone().unwrap_or_default().finalize()),
            events: self.events,
            bytes: self.out.bytes,
        })
    }
}

fn logic_name(v: LogicValue) -> &'static str {
    match v {
        LogicValue::Zero => "0",
        LogicValue::One => "1",
        LogicValue::X => "X",
    }
}

impl<W: Write> ActivitySink for Tracer<W> {
    fn gate_change(&mut self, gate: usize, v: LogicValue) {
        self.push(gate, logic_name(v));
    }

    fn fet_change(&mut self, fet: usize, c: FetCond) {
        self.push(fet, c.name());
    }

    fn end_cycle(&mut self, ctx: &CycleCtx) -> io::Result<()> {
        self.pending.sort_unstable_by_key(|&(rank, seq, _)| (rank, seq));
        let by_rank = {
            // rank -> element index, built lazily once
            let mut v = vec![0u32; self.rank.len()];
            if !self.pending.is_empty() {
                for (i, &r) in self.rank.iter().enumerate() {
                    v[r as usize] = i as u32;
                }
            }
            v
        };
        let (u, ia, op, src) = match ctx.activity {
            Activity::Reset => (None, None, "RESET", None),
            Activity::Boot => (None, None, "BOOT", None),
            Activity::Instr { addr, upc, word } => (
                Some(upc),
                Some(addr),
                mnemonic_of_opcode((word >> 12) as u8),
                self.src[addr as usize],
            ),
        };
        for &(rank, _, s) in &self.pending {
            let idx = by_rank[rank as usize] as usize;
            let ev = EventRef {
                c: ctx.edge,
                id: &self.ids[idx],
                s,
                g: &self.gate_ids[self.gates[idx]],
                u,
                ia,
                op,
                src,
            };
            serde_json::to_writer(&mut self.out, &ev)?;
            self.out.write_all(b"\n")?;
        }
        self.events += self.pending.len() as u64;
        self.pending.clear();
        Ok(())
    }
}

/// Runs `img` with a tracer attached, writing the trace to `out`.
pub fn trace_run<W: Write>(
    m: &MicroMachine,
    img: &MachineImage,
    input: &mut InputProvider,
    limits: MicroLimits,
    cfg: &TraceConfig,
    out: W,
) -> Result<(MicroRun, TraceSummary), TraceError> {
    let mut tracer = Tracer::new(m, img, &input.script_digest(), cfg, out)?;
    let run = run_micro(m, img, input, limits, Some(&mut tracer))?;
    Ok((run, tracer.finish()?))
}

/// SHA-256 of a trace file.
pub fn trace_digest(path: &Path) -> Result<String, TraceError> {
    let mut h = Sha256::new();
    let mut r = BufReader::with_capacity(1 << 16, File::open(path)?);
    loop {
        let buf = r.fill_buf()?;
        if buf.is_empty() {
            break;
        }
        h.update(buf);
        let n = buf.len();
        r.consume(n);
    }
    Ok(hex::encode(h.finalize()))
}

/// Streaming reader over a trace.
pub struct TraceReader<R: BufRead> {
    r: R,
    header: TraceHeader,
    line: u64,
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, TraceError> {
        Self::new(BufReader::with_capacity(1 << 16, File::open(path)?))
    }
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut r: R) -> Result<Self, TraceError> {
        let mut first = String::new();
        r.read_line(&mut first)?;
        let h: HeaderLine = serde_json::from_str(first.trim_end()).map_err(|e| TraceError::Malformed {
            line: 1,
            message: e.to_string(),
        })?;
        Ok(Self {
            r,
            header: h.hdr,
            line: 1,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    /// Next raw event line without its terminator, with its cycle.
    fn next_raw(&mut self, buf: &mut String) -> Result<Option<u64>, TraceError> {
        buf.clear();
        if self.r.read_line(buf)? == 0 {
            return Ok(None);
        }
        self.line += 1;
        if buf.ends_with('\n') {
            buf.pop();
        }
        let bad = |line| TraceError::Malformed {
            line,
            message: "expected an event starting with {\"c\":".into(),
        };
        let digits = buf.strip_prefix("{\"c\":").ok_or_else(|| bad(self.line))?;
        let end = digits.find(',').ok_or_else(|| bad(self.line))?;
        digits[..end].parse().map(Some).map_err(|_| bad(self.line))
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = String::new();
        match self.next_raw(&mut buf) {
            Ok(None) => None,
            Err(e) => Some(Err(e)),
            Ok(Some(_)) => Some(serde_json::from_str(&buf).map_err(|e| TraceError::Malformed {
                line: self.line,
                message: e.to_string(),
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleDiff {
    pub c: u64,
    /// Events present only in the first trace (multiset difference).
    pub only_a: u64,
    pub only_b: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDiff {
    pub identical: bool,
    pub first_divergence: Option<u64>,
    /// Index of the first event of each trace that breaks the agreement.
    pub first_event_a: Option<u64>,
    pub first_event_b: Option<u64>,
    /// Cycles whose event groups differ.
    pub cycles: Vec<CycleDiff>,
    pub events_a: u64,
    pub events_b: u64,
    pub only_a: u64,
    pub only_b: u64,
}

impl TraceDiff {
    pub fn to_text(&self) -> String {
        match self.first_divergence {
            None => format!("Identical ({} events)\n", self.events_a),
            Some(c) => format!(
                "Diverged at cycle {c}\n  events: {} vs {}\n  differing cycles: {}\n  only in first: {}, only in second: {}\n",
                self.events_a,
                self.events_b,
                self.cycles.len(),
                self.only_a,
                self.only_b
            ),
        }
    }
}

fn check_compatible(a: &TraceHeader, b: &TraceHeader) -> Result<(), TraceError> {
    let mut why = Vec::new();
    if a.format != b.format {
        why.push("format");
    }
    if a.fidelity != b.fidelity || a.granularity != b.granularity {
        why.push("fidelity");
    }
    if a.params != b.params {
        why.push("device parameters");
    }
    if a.filter != b.filter {
        why.push("filter");
    }
    if why.is_empty() {
        Ok(())
    } else {
        Err(TraceError::Incompatible(format!("{} differ", why.join(", "))))
    }
}

/// One cycle's worth of raw lines from a trace.
struct Grouped<R: BufRead> {
    r: TraceReader<R>,
    peek: Option<(u64, String)>,
    index: u64,
}

impl<R: BufRead> Grouped<R> {
    fn new(mut r: TraceReader<R>) -> Result<Self, TraceError> {
        let mut buf = String::new();
        let peek = r.next_raw(&mut buf)?.map(|c| (c, buf));
        Ok(Self { r, peek, index: 0 })
    }

    fn cycle(&self) -> Option<u64> {
        self.peek.as_ref().map(|(c, _)| *c)
    }

    /// Takes every line of cycle `c`; returns the index of the first.
    fn take(&mut self, c: u64, out: &mut Vec<String>) -> Result<u64, TraceError> {
        out.clear();
        let start = self.index;
        while self.cycle() == Some(c) {
            let (_, line) = self.peek.take().expect("peeked");
            out.push(line);
            let mut buf = String::new();
            self.peek = self.r.next_raw(&mut buf)?.map(|c| (c, buf));
        }
        self.index += out.len() as u64;
        Ok(start)
    }
}

fn multiset_difference(a: &[String], b: &[String]) -> (u64, u64) {
    let mut a: Vec<&String> = a.iter().collect();
    let mut b: Vec<&String> = b.iter().collect();
    a.sort();
    b.sort();
    let (mut i, mut j, mut only_a, mut only_b) = (0, 0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(b[j]) {
            std::cmp::Ordering::Less => {
                only_a += 1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                only_b += 1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    (only_a + (a.len() - i) as u64, only_b + (b.len() - j) as u64)
}

/// Streaming diff of two traces read from `a` and `b`.
pub fn diff_readers<A: BufRead, B: BufRead>(a: TraceReader<A>, b: TraceReader<B>) -> Result<TraceDiff, TraceError> {
    diff_with_lines(a, b).map(|(d, _, _)| d)
}

/// Like [`diff_readers`], also returning the first divergent line of each side.
fn diff_with_lines<A: BufRead, B: BufRead>(
    a: TraceReader<A>,
    b: TraceReader<B>,
) -> Result<(TraceDiff, Option<String>, Option<String>), TraceError> {
    check_compatible(a.header(), b.header())?;
    let (mut ga, mut gb) = (Grouped::new(a)?, Grouped::new(b)?);
    let mut d = TraceDiff {
        identical: true,
        first_divergence: None,
        first_event_a: None,
        first_event_b: None,
        cycles: Vec::new(),
        events_a: 0,
        events_b: 0,
        only_a: 0,
        only_b: 0,
    };
    let (mut first_a, mut first_b) = (None, None);
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    loop {
        let c = match (ga.cycle(), gb.cycle()) {
            (None, None) => break,
            (Some(x), None) | (None, Some(x)) => x,
            (Some(x), Some(y)) => x.min(y),
        };
        let sa = ga.take(c, &mut la)?;
        let sb = gb.take(c, &mut lb)?;
        d.events_a += la.len() as u64;
        d.events_b += lb.len() as u64;
        if la == lb {
            continue;
        }
        if d.first_divergence.is_none() {
            let k = la.iter().zip(&lb).take_while(|(x, y)| x == y).count();
            d.first_divergence = Some(c);
            d.first_event_a = (k < la.len()).then_some(sa + k as u64);
            d.first_event_b = (k < lb.len()).then_some(sb + k as u64);
            first_a = la.get(k).cloned();
            first_b = lb.get(k).cloned();
        }
        let (oa, ob) = multiset_difference(&la, &lb);
        d.only_a += oa;
        d.only_b += ob;
        d.cycles.push(CycleDiff { c, only_a: oa, only_b: ob });
    }
    d.identical = d.first_divergence.is_none();
    Ok((d, first_a, first_b))
}

pub fn diff_traces(a: &Path, b: &Path) -> Result<TraceDiff, TraceError> {
    diff_readers(TraceReader::open(a)?, TraceReader::open(b)?)
}

/// The chain of causes behind one trace event, from the element up to
/// the source line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceChain {
    pub index: u64,
    pub cycle: u64,
    pub element: String,
    pub state: String,
    pub gate: String,
    /// `reset`, `boot`, `fetch` or `execute`.
    pub phase: String,
    pub micro_pc: Option<u8>,
    pub micro_op: Option<String>,
    pub instr_addr: Option<u16>,
    pub mnemonic: String,
    pub asm_line: Option<u32>,
    pub asm_text: Option<String>,
    pub source_line: Option<u32>,
    pub source_text: Option<String>,
}

impl ProvenanceChain {
    pub fn to_text(&self) -> String {
        let mut links = vec![
            format!("{} -> {}", self.element, self.state),
            format!("gate {}", self.gate),
        ];
        if let (Some(u), Some(op)) = (self.micro_pc, &self.micro_op) {
            links.push(format!("micro-op {u} ({}) [{op}]", self.phase));
        } else {
            links.push(self.phase.clone());
        }
        if let Some(a) = self.instr_addr {
            links.push(format!("instruction {a:#05x} {}", self.mnemonic));
        }
        if let (Some(l), Some(t)) = (self.asm_line, &self.asm_text) {
            links.push(format!("asm line {l}: {t}"));
        }
        if let Some(l) = self.source_line {
            match &self.source_text {
                Some(t) => links.push(format!("source line {l}: {}", t.trim())),
                None => links.push(format!("source line {l}")),
            }
        }
        format!("cycle {}: {}\n", self.cycle, links.join("\n  <- "))
    }
}

fn describe(op: &crate::micro::MicroOp) -> String {
    format!(
        "bus={:?} dest={} alu={:?} mem={:?} io={:?} branch={:?}",
        op.bus,
        op.dest_names(),
        op.alu,
        op.mem,
        op.io,
        op.branch
    )
}

/// Resolves event `index` (0-based, header excluded) of a trace through
/// the image's source map and, if given, the source text.
pub fn provenance_of(
    trace: &Path,
    index: u64,
    img: &MachineImage,
    source: Option<&SourceProgram>,
) -> Result<ProvenanceChain, TraceError> {
    let mut r = TraceReader::open(trace)?;
    let mut buf = String::new();
    let mut seen = 0;
    while r.next_raw(&mut buf)?.is_some() {
        if seen == index {
            let ev: TraceEvent = serde_json::from_str(&buf).map_err(|e| TraceError::Malformed {
                line: r.line,
                message: e.to_string(),
            })?;
            return Ok(resolve_event(index, ev, img, source));
        }
        seen += 1;
    }
    Err(TraceError::IndexOutOfRange { index, len: seen })
}

pub fn resolve_event(index: u64, ev: TraceEvent, img: &MachineImage, source: Option<&SourceProgram>) -> ProvenanceChain {
    let rom = crate::micro::MicrocodeRom::new();
    let phase = match (ev.op.as_str(), ev.u) {
        ("RESET", _) => "reset",
        ("BOOT", _) => "boot",
        (_, Some(u)) if (u as usize) < FETCH_STEPS => "fetch",
        _ => "execute",
    };
    let opcode = (0..16u8).find(|&o| mnemonic_of_opcode(o) == ev.op);
    let micro_op = match (opcode, ev.u) {
        (Some(o), Some(u)) => rom.get(o, u as usize).map(describe),
        _ => None,
    };
    let entry = ev.ia.and_then(|a| img.source_at(a));
    let source_text = match (source, ev.src) {
        (Some(s), Some(l)) => s.text.lines().nth(l as usize - 1).map(str::to_string),
        _ => None,
    };
    ProvenanceChain {
        index,
        cycle: ev.c,
        element: ev.id,
        state: ev.s,
        gate: ev.g,
        phase: phase.into(),
        micro_pc: ev.u,
        micro_op,
        instr_addr: ev.ia,
        mnemonic: ev.op,
        asm_line: entry.map(|e| e.asm_line),
        asm_text: entry.map(|e| e.text.clone()),
        source_line: ev.src,
        source_text,
    }
}

/// One traced execution to run as part of a pair.
pub struct TraceJob<'a> {
    pub image: &'a MachineImage,
    pub input: InputProvider,
    pub cfg: TraceConfig,
    /// Also write the trace to this file.
    pub save: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TracedRun {
    pub run: MicroRun,
    pub summary: TraceSummary,
    /// Digest of the scripted input before the run.
    pub input_digest: String,
    pub deliveries: Vec<Delivery>,
}

/// The outcome of [`run_pair`].
#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub a: TracedRun,
    pub b: TracedRun,
    pub diff: TraceDiff,
    /// First divergent event of each side, if any.
    pub first_a: Option<TraceEvent>,
    pub first_b: Option<TraceEvent>,
}

struct Tee<W: Write> {
    pipe: PipeWriter,
    file: Option<BufWriter<W>>,
}

impl<W: Write> Write for Tee<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.pipe.write_all(buf)?;
        if let Some(f) = &mut self.file {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.pipe.flush()?;
        if let Some(f) = &mut self.file {
            f.flush()?;
        }
        Ok(())
    }
}

fn traced_job(m: &MicroMachine, mut job: TraceJob, limits: MicroLimits, pipe: PipeWriter) -> Result<TracedRun, TraceError> {
    let file = job.save.as_ref().map(File::create).transpose()?.map(BufWriter::new);
    let input_digest = job.input.script_digest();
    let (run, summary) = trace_run(m, job.image, &mut job.input, limits, &job.cfg, Tee { pipe, file })?;
    Ok(TracedRun {
        run,
        summary,
        input_digest,
        deliveries: job.input.deliveries().to_vec(),
    })
}

fn parse_event(line: Option<String>) -> Result<Option<TraceEvent>, TraceError> {
    line.map(|l| {
        serde_json::from_str(&l).map_err(|e| TraceError::Malformed {
            line: 0,
            message: e.to_string(),
        })
    })
    .transpose()
}

/// Runs two traced executions side by side and diffs their traces while
/// they are produced, so neither trace has to be stored.
pub fn run_pair(m: &MicroMachine, a: TraceJob, b: TraceJob, limits: MicroLimits) -> Result<PairOutcome, TraceError> {
    let (ra, wa) = io::pipe()?;
    let (rb, wb) = io::pipe()?;
    let (ta, tb, diff) = std::thread::scope(|s| {
        let ha = s.spawn(|| traced_job(m, a, limits, wa));
        let hb = s.spawn(|| traced_job(m, b, limits, wb));
        let diff = (|| {
            let x = TraceReader::new(BufReader::with_capacity(1 << 16, ra))?;
            let y = TraceReader::new(BufReader::with_capacity(1 << 16, rb))?;
            diff_with_lines(x, y)
        })();
        // readers are dropped here, so a writer blocked on a failed diff
        // sees a broken pipe rather than hanging
        let ta = ha.join().expect("trace thread panicked");
        let tb = hb.join().expect("trace thread panicked");
        (ta, tb, diff)
    });
    // a diff failure explains the writers' broken pipes, so report it first
    let (diff, la, lb) = diff?;
    Ok(PairOutcome {
        a: ta?,
        b: tb?,
        diff,
        first_a: parse_event(la)?,
        first_b: parse_event(lb)?,
    })
}

/// One side of a counterfactual comparison.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub image: MachineImage,
    pub input: Vec<InputRecord>,
    pub source: Option<SourceProgram>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub label: String,
    pub image: String,
    pub trace: TraceSummary,
    pub halt: HaltReason,
    pub outputs: Vec<(u8, u16)>,
    pub edges: u64,
}

impl RunOutcome {
    fn new(s: &RunSpec, t: &TracedRun) -> Self {
        Self {
            label: s.label.clone(),
            image: s.image.digest(),
            trace: t.summary.clone(),
            halt: t.run.result.halt,
            outputs: t.run.result.outputs(),
            edges: t.run.edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub schema: u32,
    pub fidelity: Fidelity,
    pub a: RunOutcome,
    pub b: RunOutcome,
    pub diff: TraceDiff,
    /// Provenance of the first divergent event, taken from the first run
    /// when it has one there and from the second otherwise.
    pub provenance: Option<ProvenanceChain>,
}

impl CounterfactualReport {
    pub fn to_text(&self) -> String {
        let words = |o: &RunOutcome| o.outputs.iter().map(|(_, w)| w.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        for o in [&self.a, &self.b] {
            s.push_str(&format!(
                "{}: outputs [{}], {:?} after {} edges, trace {}\n",
                o.label,
                words(o),
                o.halt,
                o.edges,
                o.trace.digest
            ));
        }
        s.push_str(&self.diff.to_text());
        if let Some(p) = &self.provenance {
            s.push_str("first divergent event:\n");
            s.push_str(&p.to_text());
        }
        s
    }
}

/// Runs both sides, diffs their traces and explains the first divergence.
/// With `save_dir`, traces are kept as `<label>.trace.jsonl` there.
pub fn counterfactual_report(
    m: &MicroMachine,
    a: &RunSpec,
    b: &RunSpec,
    limits: MicroLimits,
    cfg: &TraceConfig,
    save_dir: Option<&Path>,
) -> Result<CounterfactualReport, TraceError> {
    if save_dir.is_some() && a.label == b.label {
        return Err(TraceError::Incompatible("both runs have the same label".into()));
    }
    fn job<'s>(s: &'s RunSpec, cfg: &TraceConfig, save_dir: Option<&Path>) -> TraceJob<'s> {
        TraceJob {
            image: &s.image,
            input: InputProvider::scripted(&s.input),
            cfg: cfg.clone(),
            save: save_dir.map(|d| d.join(format!("{}.trace.jsonl", s.label))),
        }
    }
    let out = run_pair(m, job(a, cfg, save_dir), job(b, cfg, save_dir), limits)?;
    let provenance = match (&out.diff.first_event_a, out.first_a, out.first_b) {
        (Some(i), Some(ev), _) => Some(resolve_event(*i, ev, &a.image, a.source.as_ref())),
        (_, None, Some(ev)) => Some(resolve_event(out.diff.first_event_b.unwrap_or(0), ev, &b.image, b.source.as_ref())),
        _ => None,
    };
    Ok(CounterfactualReport {
        schema: REPORT_SCHEMA_VERSION,
        fidelity: m.fidelity,
        a: RunOutcome::new(a, &out.a),
        b: RunOutcome::new(b, &out.b),
        diff: out.diff,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::build_image;
    use crate::corpus::guest;
    use crate::micro::{build_machine, Fidelity};

    fn traced(m: &MicroMachine, img: &MachineImage, words: &[u16], cfg: &TraceConfig) -> (Vec<u8>, TraceSummary) {
        let mut buf = Vec::new();
        let (_, s) = trace_run(m, img, &mut InputProvider::words(words), MicroLimits::instructions(5000), cfg, &mut buf)
            .unwrap();
        (buf, s)
    }

    fn reader(b: &[u8]) -> TraceReader<&[u8]> {
        TraceReader::new(b).unwrap()
    }

    #[test]
    fn wire_format_is_fixed() {
        let m = build_machine(Fidelity::Gate);
        let img = MachineImage::empty();
        let (bytes, sum) = traced(&m, &img, &[], &TraceConfig::default());
        let text = String::from_utf8(bytes.clone()).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("{\"hdr\":{\"format\":1,"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("{\"c\":0,\"id\":\""), "{first}");
        assert!(first.ends_with(",\"u\":null,\"ia\":null,\"op\":\"RESET\",\"src\":null}"));
        assert!(!first.contains(' '));
        assert_eq!(sum.digest, hex::encode(Sha256::digest(&bytes)));
        assert_eq!(sum.bytes, bytes.len() as u64);
        let events: Vec<TraceEvent> = reader(&bytes).map(Result::unwrap).collect();
        assert_eq!(events.len() as u64, sum.events);
        for w in events.windows(2) {
            assert!((w[0].c, &w[0].id) <= (w[1].c, &w[1].id));
        }
    }

    #[test]
    fn filter_keeps_exactly_the_matching_subsequence() {
        let m = build_machine(Fidelity::Gate);
        let g = guest("gcd").unwrap();
        let img = build_image(&g.source()).unwrap();
        let (all, _) = traced(&m, &img, &[1071, 462], &TraceConfig::default());
        let cfg = TraceConfig {
            filter: Some("alu/".into()),
            entropy: None,
        };
        let (alu, _) = traced(&m, &img, &[1071, 462], &cfg);
        let want: Vec<TraceEvent> = reader(&all).map(Result::unwrap).filter(|e| e.id.starts_with("alu/")).collect();
        let got: Vec<TraceEvent> = reader(&alu).map(Result::unwrap).collect();
        assert!(!got.is_empty());
        assert_eq!(got, want);
    }

    #[test]
    fn identical_runs_give_identical_bytes_and_an_identical_diff() {
        let m = build_machine(Fidelity::Gate);
        let img = build_image(&guest("fib").unwrap().source()).unwrap();
        let (a, sa) = traced(&m, &img, &[], &TraceConfig::default());
        let (b, sb) = traced(&m, &img, &[], &TraceConfig::default());
        assert_eq!(sa, sb);
        assert_eq!(a, b);
        let d = diff_readers(reader(&a), reader(&b)).unwrap();
        assert!(d.identical);
        assert_eq!(d.events_a, sa.events);
    }

    #[test]
    fn differing_input_diverges_at_the_first_differing_read() {
        let m = build_machine(Fidelity::Gate);
        let img = build_image(&guest("bubblesort").unwrap().source()).unwrap();
        let (a, _) = traced(&m, &img, &[5, 1, 4, 2, 8], &TraceConfig::default());
        let (b, _) = traced(&m, &img, &[1, 2, 4, 5, 8], &TraceConfig::default());
        let d = diff_readers(reader(&a), reader(&b)).unwrap();
        let c = d.first_divergence.unwrap();
        let ev: Vec<TraceEvent> = reader(&a).map(Result::unwrap).filter(|e| e.c == c).collect();
        assert!(ev.iter().all(|e| e.op == "IN" && e.u == Some(3)));
        // nothing before the first IN's execute step differs
        let first_in = reader(&a).map(Result::unwrap).find(|e| e.op == "IN" && e.u == Some(3)).unwrap();
        assert_eq!(first_in.c, c);
    }

    #[test]
    fn incompatible_headers_are_rejected() {
        let g = build_machine(Fidelity::Gate);
        let img = MachineImage::empty();
        let (a, _) = traced(&g, &img, &[], &TraceConfig::default());
        let cfg = TraceConfig {
            filter: Some("ctl/".into()),
            entropy: None,
        };
        let (b, _) = traced(&g, &img, &[], &cfg);
        assert!(matches!(diff_readers(reader(&a), reader(&b)), Err(TraceError::Incompatible(_))));
    }

    #[test]
    fn reset_events_have_reset_provenance() {
        let m = build_machine(Fidelity::Gate);
        let img = MachineImage::empty();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.trace.jsonl");
        trace_run(&m, &img, &mut InputProvider::new(), MicroLimits::instructions(3), &TraceConfig::default(), File::create(&p).unwrap())
            .unwrap();
        let chain = provenance_of(&p, 0, &img, None).unwrap();
        assert_eq!(chain.phase, "reset");
        assert_eq!(chain.source_line, None);
        assert_eq!(chain.instr_addr, None);
        assert!(matches!(provenance_of(&p, u64::MAX, &img, None), Err(TraceError::IndexOutOfRange { .. })));
    }

    #[test]
    fn multiset_difference_counts() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(multiset_difference(&s(&["a", "b", "b"]), &s(&["b", "c"])), (2, 1));
        assert_eq!(multiset_difference(&s(&["a"]), &s(&["a"])), (0, 0));
    }

    fn spec(label: &str, name: &str) -> RunSpec {
        let g = guest(name).unwrap();
        RunSpec {
            label: label.into(),
            image: build_image(&g.source()).unwrap(),
            input: g.input_records(),
            source: Some(g.source()),
        }
    }

    #[test]
    fn piped_pair_matches_file_diff() {
        let m = build_machine(Fidelity::Gate);
        let dir = tempfile::tempdir().unwrap();
        let a = spec("a", "bubblesort");
        let mut b = spec("b", "bubblesort");
        b.input[2].word = 9;
        let r = counterfactual_report(&m, &a, &b, MicroLimits::instructions(5000), &TraceConfig::default(), Some(dir.path()))
            .unwrap();
        let pa = dir.path().join("a.trace.jsonl");
        let pb = dir.path().join("b.trace.jsonl");
        assert_eq!(trace_digest(&pa).unwrap(), r.a.trace.digest);
        assert_eq!(trace_digest(&pb).unwrap(), r.b.trace.digest);
        assert_eq!(diff_traces(&pa, &pb).unwrap(), r.diff);
        let p = r.provenance.unwrap();
        assert_eq!(p, provenance_of(&pa, r.diff.first_event_a.unwrap(), &a.image, a.source.as_ref()).unwrap());
        assert_eq!(p.mnemonic, "IN");
    }

    #[test]
    fn comparator_flip_is_traced_to_the_comparison() {
        let m = build_machine(Fidelity::Gate);
        let a = spec("ascending", "bubblesort");
        let b = spec("descending", "bubblesort_desc");
        let r = counterfactual_report(&m, &a, &b, MicroLimits::instructions(5000), &TraceConfig::default(), None).unwrap();
        let wa: Vec<u16> = r.a.outputs.iter().map(|o| o.1).collect();
        let mut wb: Vec<u16> = r.b.outputs.iter().map(|o| o.1).collect();
        wb.reverse();
        assert_eq!(wa, [1, 2, 4, 5, 8]);
        assert_eq!(wa, wb);
        assert!(!r.diff.identical);
        let p = r.provenance.clone().unwrap();
        assert_eq!(p.source_line, Some(14));
        assert!(p.source_text.unwrap().contains("if A[i-1] > A[i]"));
        assert!(r.to_text().contains("source line 14"));
    }

    #[test]
    fn identical_images_report_identical() {
        let m = build_machine(Fidelity::Gate);
        let r = counterfactual_report(&m, &spec("x", "gcd"), &spec("y", "gcd"), MicroLimits::instructions(5000), &TraceConfig::default(), None)
            .unwrap();
        assert!(r.diff.identical && r.provenance.is_none());
        assert_eq!(r.a.outputs, r.b.outputs);
        assert_eq!(r.a.trace, r.b.trace);
    }

    #[test]
    fn jump_to_next_reencoding_keeps_outputs_but_changes_the_trace() {
        use crate::compiler::{assemble, compile, AssemblyProgram};
        let g = guest("gcd").unwrap();
        let asm = compile(&crate::lang::check_source(&g.source()).unwrap()).unwrap().to_text();
        // insert a jump to the very next instruction before the first line of code
        let mut lines: Vec<String> = asm.lines().map(str::to_string).collect();
        let at = lines.iter().position(|l| l.trim_start().starts_with("IN")).unwrap();
        lines.insert(at, "    JMP L.reenc".into());
        lines.insert(at + 1, "L.reenc:".into());
        let img = assemble(&AssemblyProgram::parse(&lines.join("\n")).unwrap()).unwrap();
        let m = build_machine(Fidelity::Gate);
        let a = spec("orig", "gcd");
        let b = RunSpec {
            label: "reenc".into(),
            image: img,
            ..a.clone()
        };
        let r = counterfactual_report(&m, &a, &b, MicroLimits::instructions(5000), &TraceConfig::default(), None).unwrap();
        assert_eq!(r.a.outputs, r.b.outputs);
        assert!(!r.diff.identical);
    }

    #[test]
    fn fetch_prefix_events_stop_at_the_instruction() {
        let m = build_machine(Fidelity::Gate);
        let g = guest("gcd").unwrap();
        let img = build_image(&g.source()).unwrap();
        let (bytes, _) = traced(&m, &img, &[1071, 462], &TraceConfig::default());
        let (i, ev) = reader(&bytes)
            .map(Result::unwrap)
            .enumerate()
            .find(|(_, e)| e.u == Some(0))
            .unwrap();
        let p = resolve_event(i as u64, ev, &img, None);
        assert_eq!(p.phase, "fetch");
        assert!(p.micro_pc.unwrap() < FETCH_STEPS as u8);
        assert!(p.instr_addr.is_some() && p.asm_line.is_some());
    }
}
