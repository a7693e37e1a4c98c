//! Supervenience scenarios: pairs of traced runs that either repeat each
//! other edge for edge, or diverge because something outside the initial
//! machine state (a late load, sensor input, a seed, entropy) differs.
//!
//! Scenario files are TOML:
//!
//! ```toml
//! version = 1
//! name = "sort replay"
//! kind = "fixed_program"        # delayed_load | interactive | adaptive | entropy
//! program = "corpus:bubblesort" # or a path to a .mhl source or .img file
//! fidelity = "gate"             # or "switch"
//! max_instructions = 20000
//! input = [[0, 5], [0, 1]]      # (port, word) records shared by every run
//! streams = [[[0, 5]], [[0, 6]]] # interactive: one stream per run
//! load_delays = [0, 6]          # delayed_load: idle polls before the load
//! seeds = [1, 2]                # adaptive: start-time word on port 1
//! entropy_files = ["a.json", "b.json"]
//! live_entropy = false
//! ```

use crate::compiler::{build_image, BuildError, ImageError, MachineImage, SourceMapEntry};
use crate::corpus::guest;
use crate::isa::{AluOp, Instr};
use crate::isa_vm::{Delivery, HaltReason, InputProvider, InputRecord, MachineState, VmError, WordSource};
use crate::lang::SourceProgram;
use crate::micro::{build_machine, Fidelity, MicroLimits, FETCH_STEPS};
use crate::trace::{run_pair, TraceConfig, TraceDiff, TraceError, TraceJob, TracedRun};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;
pub const ENTROPY_FILE_VERSION: u32 = 1;
/// The port entropy words arrive on.
pub const ENTROPY_PORT: u8 = 2;
/// The port the adaptive guest reads its start-time seed from.
pub const SEED_PORT: u8 = 1;
/// The port the bootloader polls.
pub const LOAD_PORT: u8 = 3;
/// Where the bootloader lives; loaded programs must fit below it.
pub const LOADER_BASE: u16 = 0x1E0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FixedProgram,
    DelayedLoad,
    Interactive,
    Adaptive,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub kind: ScenarioKind,
    pub program: String,
    #[serde(default = "default_fidelity")]
    pub fidelity: Fidelity,
    #[serde(default = "default_max")]
    pub max_instructions: u64,
    #[serde(default)]
    pub input: Vec<(u8, u16)>,
    #[serde(default)]
    pub streams: Vec<Vec<(u8, u16)>>,
    #[serde(default)]
    pub load_delays: Vec<u32>,
    #[serde(default)]
    pub seeds: Vec<u16>,
    #[serde(default)]
    pub entropy_files: Vec<PathBuf>,
    #[serde(default)]
    pub live_entropy: bool,
}

fn default_fidelity() -> Fidelity {
    Fidelity::Gate
}

fn default_max() -> u64 {
    100_000
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("corrupt entropy file {path}: {message}")]
    Entropy { path: PathBuf, message: String },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

fn read(path: &Path) -> Result<Vec<u8>, LabError> {
    fs::read(path).map_err(|source| LabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn records(v: &[(u8, u16)]) -> Vec<InputRecord> {
    v.iter().map(|&(port, word)| InputRecord { port, word }).collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let bytes = read(path)?;
        Self::parse(&String::from_utf8_lossy(&bytes))
    }

    fn validate(&self) -> Result<(), LabError> {
        let bad = |m: &str| Err(LabError::Invalid(m.into()));
        if self.version != SCENARIO_VERSION {
            return Err(LabError::Invalid(format!("unsupported version {}", self.version)));
        }
        if self.max_instructions == 0 {
            return bad("max_instructions must be positive");
        }
        if self.input.iter().chain(self.streams.iter().flatten()).any(|r| r.0 > 7) {
            return bad("ports are 0..=7");
        }
        let extras = [
            ("streams", !self.streams.is_empty(), ScenarioKind::Interactive, self.streams.len()),
            ("load_delays", !self.load_delays.is_empty(), ScenarioKind::DelayedLoad, self.load_delays.len()),
            ("seeds", !self.seeds.is_empty(), ScenarioKind::Adaptive, self.seeds.len()),
            ("entropy_files", !self.entropy_files.is_empty(), ScenarioKind::Entropy, self.entropy_files.len()),
        ];
        for (key, present, kind, n) in extras {
            if present && kind != self.kind {
                return Err(LabError::Invalid(format!("{key} only applies to {kind:?} scenarios")));
            }
            if kind == self.kind && !(kind == ScenarioKind::Entropy && self.live_entropy) && n < 2 {
                return Err(LabError::Invalid(format!("{key} needs at least two entries")));
            }
        }
        if self.live_entropy && self.kind != ScenarioKind::Entropy {
            return bad("live_entropy only applies to entropy scenarios");
        }
        if self.live_entropy && !self.entropy_files.is_empty() {
            return bad("live_entropy records its own two streams; drop entropy_files");
        }
        Ok(())
    }
}

/// A replayable record of entropy-port words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyFile {
    pub version: u32,
    /// `recorded` when drawn from the host.
    pub mode: String,
    pub port: u8,
    pub words: Vec<u16>,
}

impl EntropyFile {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let bytes = read(path)?;
        let e: EntropyFile = serde_json::from_slice(&bytes).map_err(|e| LabError::Entropy {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if e.version != ENTROPY_FILE_VERSION || e.port != ENTROPY_PORT {
            return Err(LabError::Entropy {
                path: path.to_path_buf(),
                message: format!("expected version {ENTROPY_FILE_VERSION} on port {ENTROPY_PORT}"),
            });
        }
        Ok(e)
    }

    pub fn save(&self, path: &Path) -> Result<(), LabError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn records(&self) -> Vec<InputRecord> {
        self.words.iter().map(|&word| InputRecord { port: self.port, word }).collect()
    }
}

/// Draws words from the operating system's entropy pool.
pub struct HostEntropy(StdRng);

impl HostEntropy {
    pub fn new() -> Self {
        Self(StdRng::from_os_rng())
    }
}

impl Default for HostEntropy {
    fn default() -> Self {
        Self::new()
    }
}

impl WordSource for HostEntropy {
    fn next_word(&mut self) -> Option<u16> {
        Some(self.0.random())
    }
}

/// How an entropy provider should be built.
pub enum EntropyMode<'a> {
    /// Live host entropy; every delivery is logged by the provider.
    Record,
    Replay(&'a EntropyFile),
}

/// An input provider serving the entropy port.
pub fn entropy_source(mode: EntropyMode) -> InputProvider {
    match mode {
        EntropyMode::Record => InputProvider::new().with_source(ENTROPY_PORT, Box::new(HostEntropy::new())),
        EntropyMode::Replay(f) => InputProvider::scripted(&f.records()),
    }
}

/// The entropy words a provider actually delivered, as a replay file.
pub fn recorded_entropy(deliveries: &[Delivery]) -> EntropyFile {
    EntropyFile {
        version: ENTROPY_FILE_VERSION,
        mode: "recorded".into(),
        port: ENTROPY_PORT,
        words: deliveries.iter().filter(|d| d.port == ENTROPY_PORT).map(|d| d.word).collect(),
    }
}

/// The OneMax hill climber used by adaptive scenarios.
pub fn ga_guest_program() -> SourceProgram {
    guest("onemax").expect("onemax is in the corpus").source()
}

/// An image holding only a bootloader at [`LOADER_BASE`]. It polls port 3
/// until a nonzero word arrives, takes that as a word count, copies that
/// many further port-3 words to address 0 upward, clears its registers and
/// jumps to 0. `program`'s source map is merged in so traces of the loaded
/// code still resolve to source lines.
pub fn loader_image(program: &MachineImage) -> MachineImage {
    let b = LOADER_BASE;
    let code = [
        Instr::In { rd: 1, port: LOAD_PORT },
        Instr::Jz { rd: 1, addr: b },
        Instr::LoadI { rd: 2, imm: 0 },
        Instr::LoadI { rd: 4, imm: 1 },
        Instr::In { rd: 3, port: LOAD_PORT },
        Instr::Store { rd: 3, rs: 2, off: 0 },
        Instr::Alu { op: AluOp::Add, rd: 2, rs: 2, rt: 4 },
        Instr::Alu { op: AluOp::Sub, rd: 1, rs: 1, rt: 4 },
        Instr::Jz { rd: 1, addr: b + 10 },
        Instr::Jmp { addr: b + 4 },
        Instr::LoadI { rd: 2, imm: 0 },
        Instr::LoadI { rd: 3, imm: 0 },
        Instr::LoadI { rd: 4, imm: 0 },
        Instr::Jmp { addr: 0 },
    ];
    let mut img = MachineImage::empty();
    img.entry_point = b;
    img.source_map = program.source_map.iter().filter(|e| e.addr < b).cloned().collect();
    for (i, ins) in code.iter().enumerate() {
        let addr = b + i as u16;
        img.words[addr as usize] = ins.encode();
        img.source_map.push(SourceMapEntry {
            addr,
            asm_line: i as u32,
            text: ins.to_string(),
            src: None,
        });
    }
    img.symbols.insert("loader".into(), b);
    img
}

/// Words `program` occupies, counted from address 0.
fn program_extent(program: &MachineImage) -> usize {
    let last_word = program.words.iter().rposition(|&w| w != 0).map_or(0, |i| i + 1);
    let last_mapped = program.source_map.iter().map(|e| e.addr as usize + 1).max().unwrap_or(0);
    let last_symbol = program.symbols.values().map(|&a| a as usize + 1).max().unwrap_or(0);
    last_word.max(last_mapped).max(last_symbol)
}

/// The port-3 stream for a load after `delay` idle polls.
pub fn load_stream(program: &MachineImage, delay: u32) -> Result<Vec<InputRecord>, LabError> {
    let n = program_extent(program);
    if n == 0 || n > LOADER_BASE as usize || program.entry_point != 0 {
        return Err(LabError::Invalid(format!(
            "delayed loads need a program entered at 0 that fits below {LOADER_BASE:#x} (this one spans {n} words)"
        )));
    }
    let mut v = vec![InputRecord { port: LOAD_PORT, word: 0 }; delay as usize];
    v.push(InputRecord {
        port: LOAD_PORT,
        word: n as u16,
    });
    v.extend(program.words[..n].iter().map(|&word| InputRecord { port: LOAD_PORT, word }));
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// Clock edge at which the first differing outside influence entered.
    pub edge: u64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    DiachronicHolds,
    DiachronicFails { first_divergence: u64, witness: Witness },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunDigests {
    pub label: String,
    pub image: String,
    pub input: String,
    pub initial_state: String,
    pub trace: String,
    /// Digest of the trace without its header line.
    pub trace_events_digest: String,
    pub trace_events: u64,
    pub final_state: String,
    pub outputs: Vec<(u8, u16)>,
    pub outputs_digest: String,
    pub halt: HaltReason,
    pub edges: u64,
    pub instructions: u64,
    /// `recorded` or `replayed` for entropy runs.
    pub entropy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDiff {
    pub a: String,
    pub b: String,
    pub diff: TraceDiff,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema: u32,
    pub name: String,
    pub kind: ScenarioKind,
    pub fidelity: Fidelity,
    pub runs: Vec<RunDigests>,
    pub diffs: Vec<PairDiff>,
    pub verdict: Verdict,
    pub narrative: String,
}

impl ScenarioReport {
    pub fn holds(&self) -> bool {
        self.verdict == Verdict::DiachronicHolds
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("scenario {} ({:?}, {} fidelity)\n", self.name, self.kind, self.fidelity);
        for r in &self.runs {
            let words: Vec<String> = r.outputs.iter().map(|o| o.1.to_string()).collect();
            s.push_str(&format!(
                "  {}: {:?} after {} instructions / {} edges, outputs [{}]\n    trace {}\n",
                r.label,
                r.halt,
                r.instructions,
                r.edges,
                words.join(" "),
                r.trace
            ));
        }
        for d in &self.diffs {
            s.push_str(&format!("  {} vs {}: {}", d.a, d.b, d.diff.to_text()));
        }
        match &self.verdict {
            Verdict::DiachronicHolds => s.push_str("verdict: diachronic supervenience holds\n"),
            Verdict::DiachronicFails { first_divergence, witness } => s.push_str(&format!(
                "verdict: diachronic supervenience fails; first divergence at edge {first_divergence}\n  witness at edge {}: {}\n",
                witness.edge, witness.description
            )),
        }
        s.push_str(&self.narrative);
        s.push('\n');
        s
    }
}

/// One run to perform.
#[derive(Debug, Clone)]
struct Plan {
    label: String,
    image: MachineImage,
    input: Vec<InputRecord>,
    /// Serve the entropy port from the host instead of the script.
    live: bool,
    entropy: Option<String>,
}

fn load_program(spec: &str, base: &Path) -> Result<MachineImage, LabError> {
    if let Some(name) = spec.strip_prefix("corpus:") {
        let g = guest(name).ok_or_else(|| LabError::Invalid(format!("no corpus program {name:?}")))?;
        return Ok(build_image(&g.source())?);
    }
    let path = base.join(spec);
    let bytes = read(&path)?;
    if path.extension().is_some_and(|e| e == "img") {
        Ok(MachineImage::from_bytes(&bytes)?)
    } else {
        let src = SourceProgram::new(path.display().to_string(), String::from_utf8_lossy(&bytes));
        Ok(build_image(&src)?)
    }
}

fn plans(s: &Scenario, base: &Path) -> Result<Vec<Plan>, LabError> {
    let program = load_program(&s.program, base)?;
    let shared = records(&s.input);
    let plan = |label: String, image: &MachineImage, extra: Vec<InputRecord>| Plan {
        label,
        image: image.clone(),
        input: extra.into_iter().chain(shared.iter().copied()).collect(),
        live: false,
        entropy: None,
    };
    Ok(match s.kind {
        ScenarioKind::FixedProgram => (1..=2).map(|i| plan(format!("run{i}"), &program, vec![])).collect(),
        ScenarioKind::Interactive => s
            .streams
            .iter()
            .enumerate()
            .map(|(i, st)| plan(format!("stream{}", i + 1), &program, records(st)))
            .collect(),
        ScenarioKind::Adaptive => s
            .seeds
            .iter()
            .map(|&seed| plan(format!("seed{seed}"), &program, vec![InputRecord { port: SEED_PORT, word: seed }]))
            .collect(),
        ScenarioKind::DelayedLoad => {
            let loader = loader_image(&program);
            s.load_delays
                .iter()
                .map(|&d| Ok(plan(format!("delay{d}"), &loader, load_stream(&program, d)?)))
                .collect::<Result<_, LabError>>()?
        }
        ScenarioKind::Entropy if s.live_entropy => (1..=2)
            .map(|i| Plan {
                live: true,
                entropy: Some("recorded".into()),
                ..plan(format!("live{i}"), &program, vec![])
            })
            .collect(),
        ScenarioKind::Entropy => s
            .entropy_files
            .iter()
            .map(|f| {
                let label = f.file_stem().map_or("entropy".into(), |x| x.to_string_lossy().into_owned());
                Ok(Plan {
                    entropy: Some("replayed".into()),
                    ..plan(label, &program, EntropyFile::load(&base.join(f))?.records())
                })
            })
            .collect::<Result<_, LabError>>()?,
    })
}

fn outputs_digest(outputs: &[(u8, u16)]) -> String {
    let mut h = Sha256::new();
    for (p, w) in outputs {
        h.update([*p]);
        h.update(w.to_be_bytes());
    }
    hex::encode(h.finalize())
}

fn digests(p: &Plan, t: &TracedRun) -> RunDigests {
    let outputs = t.run.result.outputs();
    RunDigests {
        label: p.label.clone(),
        image: p.image.digest(),
        input: t.input_digest.clone(),
        initial_state: MachineState::boot(&p.image).digest(),
        trace: t.summary.digest.clone(),
        trace_events_digest: t.summary.events_digest.clone(),
        trace_events: t.summary.events,
        final_state: t.run.result.state.digest(),
        outputs_digest: outputs_digest(&outputs),
        outputs,
        halt: t.run.result.halt,
        edges: t.run.edges,
        instructions: t.run.result.state.cycle,
        entropy: p.entropy.clone(),
    }
}

/// The first outside influence on which two runs disagree.
fn witness(pa: &Plan, a: &TracedRun, pb: &Plan, b: &TracedRun) -> Witness {
    if pa.image != pb.image {
        return Witness {
            edge: 0,
            description: "the runs start from different memory images".into(),
        };
    }
    let (da, db) = (&a.deliveries, &b.deliveries);
    let k = da.iter().zip(db).take_while(|(x, y)| x == y).count();
    let side = match (da.get(k), db.get(k)) {
        (Some(d), _) => Some((d, a, &pa.label, db.get(k))),
        (None, Some(d)) => Some((d, b, &pb.label, None)),
        (None, None) => None,
    };
    match side {
        Some((d, run, label, other)) => {
            let edge = run.run.instr_edges.get(d.cycle as usize).map_or(run.run.edges, |e| e + FETCH_STEPS as u64);
            let other = match other {
                Some(o) => format!("word {} at instruction {}", o.word, o.cycle),
                None => "nothing".into(),
            };
            Witness {
                edge,
                description: format!(
                    "input read #{} on port {}: {label} got word {} at instruction {}, the other run got {other}",
                    k + 1,
                    d.port,
                    d.word,
                    d.cycle
                ),
            }
        }
        None => Witness {
            edge: 0,
            description: "the runs consumed identical input from identical images".into(),
        },
    }
}

fn narrative(kind: ScenarioKind, holds: bool) -> String {
    let text = match (kind, holds) {
        (ScenarioKind::FixedProgram, true) => {
            "Both runs began from the same image with the same scripted input and no other channel into the machine. \
             Every clock edge of the second run repeated the first, so the later state was fixed by the initial one."
        }
        (ScenarioKind::DelayedLoad, false) => {
            "The initial state held only a bootloader; the program arrived through a port at a time chosen outside \
             the machine. The traces part at the first poll where one run sees the load and the other still idles, \
             so the state before the load did not determine the state after it."
        }
        (ScenarioKind::Interactive, false) => {
            "The program and initial state were identical and the input streams were not. The traces agree until the \
             first differing word is read, then split; that word was not present anywhere in the initial state."
        }
        (ScenarioKind::Adaptive, false) => {
            "A hill-climbing search seeded from its start time took different paths under different seeds. The \
             transistor-level history differs from the seed read onward even where the final fitness agrees."
        }
        (ScenarioKind::Entropy, false) => {
            "The guest branched on words from an entropy port. Different streams produce different traces from the \
             first differing word; replaying a recorded stream reproduces its trace exactly."
        }
        (_, true) => {
            "All runs shared image, input and device model, so they repeated each other exactly; the later state was \
             fixed by the earlier one."
        }
        (_, false) => {
            "The runs diverged; the witness names the first influence from outside the initial state on which they \
             disagree."
        }
    };
    text.into()
}

/// Executes a scenario. With `save`, traces (and any freshly recorded
/// entropy) are written to that directory.
pub fn run_scenario(s: &Scenario, base: &Path, save: Option<&Path>) -> Result<ScenarioReport, LabError> {
    s.validate()?;
    let plans = plans(s, base)?;
    let m = build_machine(s.fidelity);
    let limits = MicroLimits::instructions(s.max_instructions);
    let mut runs: Vec<Option<RunDigests>> = vec![None; plans.len()];
    let mut diffs = Vec::new();
    let mut verdict = Verdict::DiachronicHolds;
    for i in 0..plans.len() {
        for j in i + 1..plans.len() {
            let job = |p: &Plan, first: bool| TraceJob {
                image: &plans[if first { i } else { j }].image,
                input: if p.live {
                    let mut e = entropy_source(EntropyMode::Record);
                    for r in &p.input {
                        e.push(r.port, r.word);
                    }
                    e
                } else {
                    InputProvider::scripted(&p.input)
                },
                cfg: TraceConfig {
                    filter: None,
                    entropy: p.entropy.clone(),
                },
                save: save.filter(|_| runs[if first { i } else { j }].is_none()).map(|d| d.join(format!("{}.trace.jsonl", p.label))),
            };
            let (pa, pb) = (&plans[i], &plans[j]);
            let out = run_pair(&m, job(pa, true), job(pb, false), limits)?;
            for (p, t) in [(pa, &out.a), (pb, &out.b)] {
                if let (true, Some(dir)) = (p.live, save) {
                    recorded_entropy(&t.deliveries).save(&dir.join(format!("{}.entropy.json", p.label)))?;
                }
            }
            runs[i].get_or_insert_with(|| digests(pa, &out.a));
            runs[j].get_or_insert_with(|| digests(pb, &out.b));
            let w = (!out.diff.identical).then(|| witness(pa, &out.a, pb, &out.b));
            if let (Some(c), Some(w)) = (out.diff.first_divergence, &w) {
                if w.edge > c {
                    return Err(LabError::Inconsistent(format!("witness edge {} after divergence {c}", w.edge)));
                }
                let earlier = match &verdict {
                    Verdict::DiachronicHolds => true,
                    Verdict::DiachronicFails { first_divergence, .. } => c < *first_divergence,
                };
                if earlier {
                    verdict = Verdict::DiachronicFails {
                        first_divergence: c,
                        witness: w.clone(),
                    };
                }
            }
            diffs.push(PairDiff {
                a: pa.label.clone(),
                b: pb.label.clone(),
                diff: out.diff,
                witness: w,
            });
        }
    }
    let runs: Vec<RunDigests> = runs.into_iter().map(|r| r.expect("every run is in some pair")).collect();
    // verdict soundness and the closed-system case, checked on every report
    let same_traces = runs.windows(2).all(|w| w[0].trace == w[1].trace);
    if same_traces != (verdict == Verdict::DiachronicHolds) {
        return Err(LabError::Inconsistent("verdict disagrees with trace digests".into()));
    }
    let closed = plans.iter().all(|p| !p.live) && plans.windows(2).all(|w| w[0].image == w[1].image && w[0].input == w[1].input);
    if closed && !same_traces {
        return Err(LabError::Inconsistent("runs with equal image and input produced different traces".into()));
    }
    let holds = verdict == Verdict::DiachronicHolds;
    Ok(ScenarioReport {
        schema: crate::trace::REPORT_SCHEMA_VERSION,
        name: s.name.clone(),
        kind: s.kind,
        fidelity: s.fidelity,
        runs,
        diffs,
        verdict,
        narrative: narrative(s.kind, holds),
    })
}
