use clap::{Args, Parser, Subcommand, ValueEnum};
use emst_core::compiler::{assemble, build_image, compile, disassemble, AssemblyProgram, MachineImage, IMAGE_VERSION};
use emst_core::gates::{equivalent, equivalent_cut, Equivalence, Netlist, NETLIST_FORMAT_VERSION};
use emst_core::isa_vm::{self, HaltReason, InputProvider, InputRecord, RunResult};
use emst_core::lab::{run_scenario, Scenario, ENTROPY_FILE_VERSION, SCENARIO_VERSION};
use emst_core::lang::{check_source, SourceProgram};
use emst_core::micro::{build_machine, run_micro, Fidelity, MicroLimits};
use emst_core::physics::{self, DrudeParams, JunctionParams};
use emst_core::trace::{
    counterfactual_report, diff_traces, trace_run, RunSpec, TraceConfig, REPORT_SCHEMA_VERSION, TRACE_FORMAT_VERSION,
};
use serde_json::json;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Trap(String),
    #[error("{0}")]
    Verify(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Trap(_) => 3,
            CliError::Verify(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn version_text() -> String {
    format!(
        "emst {}\nimage format {IMAGE_VERSION}\nnetlist format {NETLIST_FORMAT_VERSION}\ntrace format {TRACE_FORMAT_VERSION}\n\
         report schema {REPORT_SCHEMA_VERSION}\nscenario format {SCENARIO_VERSION}\nentropy file format {ENTROPY_FILE_VERSION}",
        env!("CARGO_PKG_VERSION")
    )
}

/// Compiler, machine simulators and causal tracer for a small stored-program computer.
#[derive(Parser)]
#[command(name = "emst", disable_version_flag = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args)]
struct Global {
    /// Instruction cap for every run.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    max_cycles: u64,
    /// Simulation fidelity for micro-level work.
    #[arg(long, global = true)]
    fidelity: Option<Fidelity>,
    /// Refuse anything that draws on host entropy.
    #[arg(long, global = true)]
    seedless: bool,
    /// Output file or directory.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Print the program and file-format versions.
    #[arg(long, short = 'V')]
    version: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a source program to assembly.
    Compile { source: PathBuf },
    /// Assemble to a machine image.
    Asm { asm: PathBuf },
    /// Disassemble a machine image.
    Disasm { image: PathBuf },
    /// Run a program (.mhl, .asm or .img).
    Run {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = Level::Isa)]
        level: Level,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Run at micro level with a tracer attached, or compare two programs.
    Trace {
        program: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Keep only elements under this path prefix.
        #[arg(long)]
        filter: Option<String>,
        /// Second program for a counterfactual comparison.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Input file for the second program (defaults to the first's).
        #[arg(long)]
        against_input: Option<PathBuf>,
    },
    /// Compare two trace files.
    Diff { a: PathBuf, b: PathBuf },
    /// Exhaustively check two netlists for equivalence.
    Equiv {
        a: PathBuf,
        b: PathBuf,
        /// Compare sequential netlists cycle by cycle at their state elements.
        #[arg(long)]
        cut: bool,
    },
    /// Evaluate a device-physics kernel as CSV.
    Device {
        #[command(subcommand)]
        kernel: Kernel,
    },
    /// Run a supervenience scenario file.
    Lab { scenario: PathBuf },
}

#[derive(Args)]
struct InputArgs {
    /// JSON array of {"port", "word"} records.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Words for port 0, comma separated.
    #[arg(long, value_delimiter = ',')]
    words: Vec<u16>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Isa,
    Micro,
    Switch,
}

#[derive(Subcommand)]
enum Kernel {
    /// Tight-binding band E(k) across the zone.
    Band {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        eps0: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Monatomic-chain phonon dispersion.
    Phonon {
        #[arg(long, default_value_t = 1.0)]
        spring: f64,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Drude conductivity.
    Drude {
        /// Carrier density, m^-3.
        #[arg(long, default_value_t = 8.5e28)]
        n: f64,
        /// Collision time, s.
        #[arg(long, default_value_t = 2.5e-14)]
        tau: f64,
        /// Carrier mass, kg.
        #[arg(long, default_value_t = physics::ELECTRON_MASS)]
        mass: f64,
    },
    /// Closed-form depletion width of an abrupt junction.
    Depletion {
        #[command(flatten)]
        j: Junction,
    },
    /// Numeric Poisson profile of an abrupt junction.
    Poisson {
        #[command(flatten)]
        j: Junction,
        #[arg(long, default_value_t = 512)]
        grid: usize,
    },
}

#[derive(Args)]
struct Junction {
    /// Acceptor density, m^-3.
    #[arg(long, default_value_t = 1e22)]
    na: f64,
    /// Donor density, m^-3.
    #[arg(long, default_value_t = 1e22)]
    nd: f64,
    /// Permittivity, F/m.
    #[arg(long, default_value_t = 11.7 * 8.8541878128e-12)]
    eps: f64,
    /// Built-in potential, V.
    #[arg(long, default_value_t = 0.7)]
    v_bi: f64,
    /// Applied forward bias, V.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    v_applied: f64,
}

impl Junction {
    fn params(&self) -> JunctionParams {
        JunctionParams {
            na: self.na,
            nd: self.nd,
            eps_s: self.eps,
            v_bi: self.v_bi,
            v_applied: self.v_applied,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|_| CliError::Input(format!("{}: not UTF-8", path.display())))
}

fn read_source(path: &Path) -> Result<SourceProgram> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(SourceProgram::new(path.display().to_string(), String::from_utf8_lossy(&bytes)))
}

/// Loads a program from source, assembly or image by extension; the
/// source, when there is one, comes along for provenance.
fn load_program(path: &Path) -> Result<(MachineImage, Option<SourceProgram>)> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("img") => {
            let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            Ok((MachineImage::from_bytes(&bytes).map_err(input_err)?, None))
        }
        Some("asm") => {
            let a = AssemblyProgram::parse(&read_text(path)?).map_err(input_err)?;
            Ok((assemble(&a).map_err(input_err)?, None))
        }
        _ => {
            let src = read_source(path)?;
            Ok((build_image(&src).map_err(input_err)?, Some(src)))
        }
    }
}

fn load_input(file: Option<&Path>, words: &[u16]) -> Result<Vec<InputRecord>> {
    let mut recs = match file {
        Some(p) => InputProvider::parse_records(&read_text(p)?).map_err(input_err)?,
        None => Vec::new(),
    };
    recs.extend(words.iter().map(|&word| InputRecord { port: 0, word }));
    Ok(recs)
}

fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn halt_check(h: HaltReason) -> Result<()> {
    match h {
        HaltReason::Halted => Ok(()),
        other => Err(CliError::Trap(format!("run ended with {other:?}"))),
    }
}

fn outputs_text(r: &RunResult) -> String {
    r.outputs().iter().map(|(p, w)| format!("out {p} {w}\n")).collect()
}

fn fidelity_or(g: &Global, default: Fidelity) -> Fidelity {
    g.fidelity.unwrap_or(default)
}

fn dispatch(g: &Global, cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Compile { source } => {
            let src = read_source(&source)?;
            let checked = check_source(&src).map_err(input_err)?;
            emit(g, &compile(&checked).map_err(input_err)?.to_text())
        }
        Cmd::Asm { asm } => {
            let out = g.out.as_ref().ok_or_else(|| CliError::Usage("asm needs --out <image>".into()))?;
            let a = AssemblyProgram::parse(&read_text(&asm)?).map_err(input_err)?;
            let img = assemble(&a).map_err(input_err)?;
            fs::write(out, img.to_bytes()).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))
        }
        Cmd::Disasm { image } => {
            let (img, _) = load_program(&image)?;
            emit(g, &disassemble(&img).to_text())
        }
        Cmd::Run { program, level, input } => {
            let (img, _) = load_program(&program)?;
            let mut p = InputProvider::scripted(&load_input(input.input.as_deref(), &input.words)?);
            let (r, edges) = match level {
                Level::Isa => (isa_vm::run(&img, &mut p, g.max_cycles).map_err(input_err)?, None),
                Level::Micro | Level::Switch => {
                    let f = if matches!(level, Level::Switch) { Fidelity::Switch } else { fidelity_or(g, Fidelity::Gate) };
                    let m = build_machine(f);
                    let run = run_micro(&m, &img, &mut p, MicroLimits::instructions(g.max_cycles), None).map_err(input_err)?;
                    (run.result, Some(run.edges))
                }
            };
            let text = if g.json {
                to_json(&json!({
                    "halt": r.halt,
                    "instructions": r.state.cycle,
                    "edges": edges,
                    "outputs": r.outputs(),
                    "final_state": r.state.digest(),
                }))
            } else {
                outputs_text(&r)
            };
            emit(g, &text)?;
            halt_check(r.halt)
        }
        Cmd::Trace {
            program,
            input,
            filter,
            against,
            against_input,
        } => {
            let m = build_machine(fidelity_or(g, Fidelity::Switch));
            let recs = load_input(input.input.as_deref(), &input.words)?;
            let cfg = TraceConfig { filter, entropy: None };
            let limits = MicroLimits::instructions(g.max_cycles);
            let (img, source) = load_program(&program)?;
            if let Some(other) = against {
                let (img_b, source_b) = load_program(&other)?;
                let recs_b = match against_input {
                    Some(p) => load_input(Some(&p), &[])?,
                    None => recs.clone(),
                };
                let a = RunSpec {
                    label: "a".into(),
                    image: img,
                    input: recs,
                    source,
                };
                let b = RunSpec {
                    label: "b".into(),
                    image: img_b,
                    input: recs_b,
                    source: source_b,
                };
                if let Some(dir) = &g.out {
                    fs::create_dir_all(dir).map_err(input_err)?;
                }
                let r = counterfactual_report(&m, &a, &b, limits, &cfg, g.out.as_deref()).map_err(input_err)?;
                print!("{}", if g.json { to_json(&r) } else { r.to_text() });
                return Ok(());
            }
            let out = g.out.as_ref().ok_or_else(|| CliError::Usage("trace needs --out <file.trace.jsonl>".into()))?;
            let file = File::create(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
            let mut p = InputProvider::scripted(&recs);
            let (run, summary) = trace_run(&m, &img, &mut p, limits, &cfg, file).map_err(input_err)?;
            if g.json {
                print!("{}", to_json(&json!({"halt": run.result.halt, "edges": run.edges, "trace": summary})));
            } else {
                print!("{}", outputs_text(&run.result));
                println!("{} events, {} bytes, sha256 {}", summary.events, summary.bytes, summary.digest);
            }
            halt_check(run.result.halt)
        }
        Cmd::Diff { a, b } => {
            let d = diff_traces(&a, &b).map_err(input_err)?;
            emit(g, &if g.json { to_json(&d) } else { d.to_text() })
        }
        Cmd::Equiv { a, b, cut } => {
            let na = Netlist::load(&a).map_err(input_err)?;
            let nb = Netlist::load(&b).map_err(input_err)?;
            let r = if cut { equivalent_cut(&na, &nb) } else { equivalent(&na, &nb) }.map_err(input_err)?;
            match r {
                Equivalence::Equivalent => {
                    emit(g, "Equivalent\n")
                }
                Equivalence::Counterexample { row, inputs } => {
                    let assign: Vec<String> = inputs.iter().map(|(n, v)| format!("{n}={}", *v as u8)).collect();
                    emit(g, &format!("Counterexample at row {row}: {}\n", assign.join(" ")))?;
                    Err(CliError::Verify("netlists differ".into()))
                }
            }
        }
        Cmd::Device { kernel } => emit(g, &device(kernel)?),
        Cmd::Lab { scenario } => {
            let s = Scenario::load(&scenario).map_err(input_err)?;
            if g.seedless && s.live_entropy {
                return Err(CliError::Usage("--seedless forbids live entropy".into()));
            }
            let mut s = s;
            if let Some(f) = g.fidelity {
                s.fidelity = f;
            }
            if let Some(dir) = &g.out {
                fs::create_dir_all(dir).map_err(input_err)?;
            }
            let base = scenario.parent().unwrap_or(Path::new("."));
            let r = run_scenario(&s, base, g.out.as_deref()).map_err(input_err)?;
            print!("{}", if g.json { to_json(&r) } else { r.to_text() });
            Ok(())
        }
    }
}

fn device(k: Kernel) -> Result<String> {
    let csv = match k {
        Kernel::Band { eps0, t, a, points } => {
            physics::band_energies(eps0, t, a, &physics::zone_samples(a, points)).map_err(input_err)?.to_csv()
        }
        Kernel::Phonon { spring, mass, a, points } => physics::phonon_dispersion(spring, mass, a, &physics::zone_samples(a, points))
            .map_err(input_err)?
            .to_csv(),
        Kernel::Drude { n, tau, mass } => {
            let sigma = physics::drude_conductivity(&DrudeParams { n, tau, mass }).map_err(input_err)?;
            physics::csv("n_per_m3,tau_s,mass_kg,sigma_S_per_m", std::iter::once(vec![n, tau, mass, sigma]))
        }
        Kernel::Depletion { j } => {
            let d = physics::depletion_width(&j.params()).map_err(input_err)?;
            physics::csv("w_m,x_n_m,x_p_m", std::iter::once(vec![d.w, d.x_n, d.x_p]))
        }
        Kernel::Poisson { j, grid } => physics::poisson_depletion_profile(&j.params(), grid).map_err(input_err)?.to_csv(),
    };
    Ok(csv)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.global.version {
        println!("{}", version_text());
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.cmd else {
        eprintln!("no subcommand given; see --help");
        return ExitCode::from(1);
    };
    match dispatch(&cli.global, cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
