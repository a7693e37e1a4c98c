use super::circuit::{Circuit, FlatGate};
use super::GateKind;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const NETLIST_FORMAT_VERSION: u32 = 1;

/// A gate inside one netlist; its id is its output net name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub output: String,
    pub kind: GateKind,
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    pub module: Arc<Netlist>,
    /// Child port name to parent net.
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Netlist {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<Gate>,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("net `{0}` has more than one driver")]
    MultipleDrivers(String),
    #[error("net `{0}` is used but never driven")]
    Undriven(String),
    #[error("combinational cycle through {0:?}")]
    CombinationalCycle(Vec<String>),
    #[error("gate `{gate}`: {kind} cannot take {got} inputs")]
    Arity { gate: String, kind: GateKind, got: usize },
    #[error("instance `{instance}` leaves port `{port}` unbound")]
    UnboundPort { instance: String, port: String },
    #[error("instance `{instance}` has no port `{port}`")]
    UnknownPort { instance: String, port: String },
    #[error("module `{0}` passes an input straight to an output")]
    Passthrough(String),
}

impl Netlist {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn is_sequential(&self) -> bool {
        self.gates.iter().any(|g| g.kind.is_sequential())
            || self.instances.iter().any(|i| i.module.is_sequential())
    }

    /// Number of primitive gates after flattening.
    pub fn gate_count(&self) -> usize {
        self.gates.len() + self.instances.iter().map(|i| i.module.gate_count()).sum::<usize>()
    }

    /// Every hierarchical net name after flattening.
    pub fn nodes(&self) -> Result<Vec<String>, NetlistError> {
        Ok(self.flatten()?.net_names.clone())
    }

    /// Resolves instances into one flat circuit and checks structure: single
    /// drivers, no undriven nets, no combinational cycles.
    pub fn flatten(&self) -> Result<Circuit, NetlistError> {
        let mut gates = Vec::new();
        flatten_into(self, "", &HashMap::new(), &mut gates)?;
        Circuit::build(&self.name, &self.inputs, &self.outputs, gates)
    }

    pub fn check(&self) -> Result<(), NetlistError> {
        self.flatten().map(|_| ())
    }

    /// Canonical text form. Gates are sorted by output net and instances
    /// by name; instances refer to `<module>.net`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, ".model {}", self.name).unwrap();
        if !self.inputs.is_empty() {
            writeln!(s, ".inputs {}", self.inputs.join(" ")).unwrap();
        }
        if !self.outputs.is_empty() {
            writeln!(s, ".outputs {}", self.outputs.join(" ")).unwrap();
        }
        let mut gates: Vec<_> = self.gates.iter().collect();
        gates.sort_by(|a, b| a.output.cmp(&b.output));
        for g in gates {
            writeln!(s, "{} = {}({})", g.output, g.kind, g.inputs.join(", ")).unwrap();
        }
        let mut insts: Vec<_> = self.instances.iter().collect();
        insts.sort_by(|a, b| a.name.cmp(&b.name));
        for i in insts {
            write!(s, ".inst {} {}.net", i.name, i.module.name).unwrap();
            for (p, n) in &i.bindings {
                write!(s, " {p}={n}").unwrap();
            }
            s.push('\n');
        }
        s.push_str(".end\n");
        s
    }

    /// Writes this module and every submodule as `<name>.net` files.
    pub fn save_hierarchy(&self, dir: &Path) -> std::io::Result<()> {
        let mut seen = HashSet::new();
        self.save_rec(dir, &mut seen)
    }

    fn save_rec(&self, dir: &Path, seen: &mut HashSet<String>) -> std::io::Result<()> {
        if !seen.insert(self.name.clone()) {
            return Ok(());
        }
        std::fs::write(dir.join(format!("{}.net", self.name)), self.to_text())?;
        for i in &self.instances {
            i.module.save_rec(dir, seen)?;
        }
        Ok(())
    }

    /// Parses one file's text; `resolve` supplies the modules named by
    /// `.inst` lines.
    pub fn parse(
        text: &str,
        resolve: &mut dyn FnMut(&str) -> Result<Arc<Netlist>, NetlistError>,
    ) -> Result<Netlist, NetlistError> {
        let mut nl = Netlist::new("top");
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let perr = |message: String| NetlistError::Parse { line, message };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut words = body.split_whitespace();
            match words.next() {
                Some(".model") => {
                    nl.name = words.next().ok_or_else(|| perr("missing model name".into()))?.to_string();
                }
                Some(".inputs") => nl.inputs.extend(words.map(str::to_string)),
                Some(".outputs") => nl.outputs.extend(words.map(str::to_string)),
                Some(".end") => break,
                Some(".inst") => {
                    let name = words.next().ok_or_else(|| perr("missing instance name".into()))?;
                    let file = words.next().ok_or_else(|| perr("missing module file".into()))?;
                    let module = resolve(file)?;
                    let mut bindings = BTreeMap::new();
                    for b in words {
                        let (p, n) = b
                            .split_once('=')
                            .ok_or_else(|| perr(format!("binding `{b}` is not port=net")))?;
                        bindings.insert(p.to_string(), n.to_string());
                    }
                    nl.instances.push(Instance {
                        name: name.to_string(),
                        module,
                        bindings,
                    });
                }
                Some(d) if d.starts_with('.') => return Err(perr(format!("unknown directive `{d}`"))),
                Some(_) => nl.gates.push(parse_gate(body).map_err(perr)?),
                None => {}
            }
        }
        for g in &nl.gates {
            if !g.kind.arity_ok(g.inputs.len()) {
                return Err(NetlistError::Arity {
                    gate: g.output.clone(),
                    kind: g.kind,
                    got: g.inputs.len(),
                });
            }
        }
        Ok(nl)
    }

    /// Parses text whose `.inst` lines name no files.
    pub fn parse_flat(text: &str) -> Result<Netlist, NetlistError> {
        Self::parse(text, &mut |f| {
            Err(NetlistError::Io {
                path: f.to_string(),
                message: "submodules not available".into(),
            })
        })
    }

    /// Loads a netlist file, resolving `.inst` files relative to it, and
    /// checks its structure.
    pub fn load(path: &Path) -> Result<Netlist, NetlistError> {
        let mut cache = HashMap::new();
        let nl = load_rec(path, &mut cache, &mut Vec::new())?;
        nl.check()?;
        Ok(nl)
    }
}

fn load_rec(
    path: &Path,
    cache: &mut HashMap<std::path::PathBuf, Arc<Netlist>>,
    stack: &mut Vec<std::path::PathBuf>,
) -> Result<Netlist, NetlistError> {
    let io = |e: std::io::Error| NetlistError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let canon = path.canonicalize().map_err(io)?;
    if stack.contains(&canon) {
        return Err(NetlistError::Io {
            path: path.display().to_string(),
            message: "recursive instantiation".into(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(io)?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    stack.push(canon);
    let result = Netlist::parse(&text, &mut |file| {
        let child = dir.join(file);
        if let Some(m) = child.canonicalize().ok().and_then(|c| cache.get(&c)) {
            return Ok(m.clone());
        }
        let m = Arc::new(load_rec(&child, cache, stack)?);
        if let Ok(c) = child.canonicalize() {
            cache.insert(c, m.clone());
        }
        Ok(m)
    });
    stack.pop();
    result
}

fn parse_gate(body: &str) -> Result<Gate, String> {
    let (out, rhs) = body.split_once('=').ok_or("expected `<out> = KIND(...)`")?;
    let out = out.trim();
    if out.is_empty() || out.contains(char::is_whitespace) {
        return Err(format!("bad output net `{out}`"));
    }
    let rhs = rhs.trim();
    let open = rhs.find('(').ok_or("missing `(`")?;
    if !rhs.ends_with(')') {
        return Err("missing `)`".into());
    }
    let kind: GateKind = rhs[..open].trim().parse()?;
    let args = rhs[open + 1..rhs.len() - 1].trim();
    let inputs = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',').map(|a| a.trim().to_string()).collect()
    };
    if inputs.iter().any(|i| i.is_empty()) {
        return Err("empty input net".into());
    }
    Ok(Gate {
        output: out.to_string(),
        kind,
        inputs,
    })
}

fn flatten_into(
    nl: &Netlist,
    prefix: &str,
    alias: &HashMap<String, String>,
    out: &mut Vec<FlatGate>,
) -> Result<(), NetlistError> {
    let resolve = |n: &str| alias.get(n).cloned().unwrap_or_else(|| format!("{prefix}{n}"));
    if nl.outputs.iter().any(|o| nl.inputs.contains(o)) {
        return Err(NetlistError::Passthrough(nl.name.clone()));
    }
    for g in &nl.gates {
        if !g.kind.arity_ok(g.inputs.len()) {
            return Err(NetlistError::Arity {
                gate: format!("{prefix}{}", g.output),
                kind: g.kind,
                got: g.inputs.len(),
            });
        }
        out.push(FlatGate {
            id: format!("{prefix}{}", g.output),
            kind: g.kind,
            inputs: g.inputs.iter().map(|i| resolve(i)).collect(),
            output: resolve(&g.output),
        });
    }
    for inst in &nl.instances {
        let m = &inst.module;
        let mut child_alias = HashMap::new();
        for (port, net) in &inst.bindings {
            if !m.inputs.contains(port) && !m.outputs.contains(port) {
                return Err(NetlistError::UnknownPort {
                    instance: format!("{prefix}{}", inst.name),
                    port: port.clone(),
                });
            }
            child_alias.insert(port.clone(), resolve(net));
        }
        if let Some(p) = m.inputs.iter().chain(&m.outputs).find(|p| !inst.bindings.contains_key(*p)) {
            return Err(NetlistError::UnboundPort {
                instance: format!("{prefix}{}", inst.name),
                port: p.clone(),
            });
        }
        flatten_into(m, &format!("{prefix}{}/", inst.name), &child_alias, out)?;
    }
    Ok(())
}
