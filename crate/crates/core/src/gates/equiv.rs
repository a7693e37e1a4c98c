use super::circuit::Circuit;
use super::netlist::{Netlist, NetlistError};
use super::LogicValue;
use rayon::prelude::*;
use thiserror::Error;

pub const MAX_EQUIV_INPUTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    /// The first differing row in counting order, first input as the most
    /// significant bit.
    Counterexample { row: u64, inputs: Vec<(String, bool)> },
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Equivalence::Equivalent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("netlist `{0}` is sequential")]
    Sequential(String),
    #[error("{0} inputs exceed the exhaustive limit of {MAX_EQUIV_INPUTS}")]
    TooManyInputs(usize),
    #[error("port signatures differ: {0}")]
    PortMismatch(String),
}

struct View<'a> {
    c: &'a Circuit,
    /// Canonical state slot to position in the circuit's state vector.
    state_slot: Vec<usize>,
    observed: Vec<usize>,
}

impl<'a> View<'a> {
    fn new(c: &'a Circuit, state_ids: &[String]) -> Self {
        let state_slot: Vec<usize> = state_ids.iter().map(|id| c.dff_position(id).unwrap()).collect();
        let mut observed = c.outputs.clone();
        observed.extend(state_slot.iter().map(|&p| c.gate_inputs[c.dffs[p]][0]));
        Self {
            c,
            state_slot,
            observed,
        }
    }
}

/// Exhaustive comparison of two combinational netlists with the same port
/// names.
pub fn equivalent(a: &Netlist, b: &Netlist) -> Result<Equivalence, EquivError> {
    equivalent_circuits(&a.flatten()?, &b.flatten()?)
}

pub fn equivalent_circuits(a: &Circuit, b: &Circuit) -> Result<Equivalence, EquivError> {
    for c in [a, b] {
        if c.is_sequential() {
            return Err(EquivError::Sequential(c.name.clone()));
        }
    }
    compare(a, b, &[])
}

/// Compares sequential netlists by cutting at their flip-flops: state
/// outputs become inputs and next-state values become outputs. Both sides
/// must use the same flip-flop ids.
pub fn equivalent_cut(a: &Netlist, b: &Netlist) -> Result<Equivalence, EquivError> {
    let (a, b) = (a.flatten()?, b.flatten()?);
    let mut ids_a: Vec<String> = a.dff_ids().into_iter().map(String::from).collect();
    let mut ids_b: Vec<String> = b.dff_ids().into_iter().map(String::from).collect();
    ids_a.sort();
    ids_b.sort();
    if ids_a != ids_b {
        return Err(EquivError::PortMismatch("flip-flop ids differ".into()));
    }
    compare(&a, &b, &ids_a)
}

fn compare(a: &Circuit, b: &Circuit, state_ids: &[String]) -> Result<Equivalence, EquivError> {
    if a.input_names() != b.input_names() {
        return Err(EquivError::PortMismatch(format!(
            "inputs {:?} vs {:?}",
            a.input_names(),
            b.input_names()
        )));
    }
    if a.output_names() != b.output_names() {
        return Err(EquivError::PortMismatch(format!(
            "outputs {:?} vs {:?}",
            a.output_names(),
            b.output_names()
        )));
    }
    let n_in = a.inputs.len();
    let k = n_in + state_ids.len();
    if k > MAX_EQUIV_INPUTS {
        return Err(EquivError::TooManyInputs(k));
    }
    let (va, vb) = (View::new(a, state_ids), View::new(b, state_ids));
    let rows = 1u64 << k;
    const CHUNK: u64 = 1 << 12;
    let chunks = rows.div_ceil(CHUNK);
    let first = (0..chunks).into_par_iter().find_map_first(|ch| {
        let (mut ba, mut bb) = (Buffers::new(&va, n_in), Buffers::new(&vb, n_in));
        (ch * CHUNK..((ch + 1) * CHUNK).min(rows)).find(|&row| ba.eval(&va, row, k) != bb.eval(&vb, row, k))
    });
    Ok(match first {
        None => Equivalence::Equivalent,
        Some(row) => {
            let names = a
                .input_names()
                .into_iter()
                .map(String::from)
                .chain(state_ids.iter().cloned());
            let inputs = names
                .enumerate()
                .map(|(j, n)| (n, (row >> (k - 1 - j)) & 1 == 1))
                .collect();
            Equivalence::Counterexample { row, inputs }
        }
    })
}

struct Buffers {
    ins: Vec<LogicValue>,
    state: Vec<LogicValue>,
    vals: Vec<LogicValue>,
    out: Vec<LogicValue>,
}

impl Buffers {
    fn new(v: &View, n_in: usize) -> Self {
        Self {
            ins: vec![LogicValue::X; n_in],
            state: vec![LogicValue::X; v.c.dffs.len()],
            vals: vec![LogicValue::X; v.c.net_count()],
            out: vec![LogicValue::X; v.observed.len()],
        }
    }

    fn eval(&mut self, v: &View, row: u64, k: usize) -> &[LogicValue] {
        let bit = |j: usize| LogicValue::from_bool((row >> (k - 1 - j)) & 1 == 1);
        let n_in = self.ins.len();
        for j in 0..n_in {
            self.ins[j] = bit(j);
        }
        for (s, &p) in v.state_slot.iter().enumerate() {
            self.state[p] = bit(n_in + s);
        }
        v.c.settle_into(&mut self.vals, &self.ins, &self.state);
        for (o, &n) in self.out.iter_mut().zip(&v.observed) {
            *o = self.vals[n];
        }
        &self.out
    }
}
