use super::netlist::NetlistError;
use super::{eval_unchecked, GateKind, LogicValue};
use std::collections::{HashMap, VecDeque};

/// A primitive gate after flattening: hierarchical id plus resolved nets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatGate {
    pub id: String,
    pub kind: GateKind,
    pub inputs: Vec<String>,
    pub output: String,
}

/// A flat, structurally checked netlist ready for simulation. Nets and
/// gates are addressed by index.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub name: String,
    pub net_names: Vec<String>,
    net_index: HashMap<String, usize>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub gates: Vec<FlatGate>,
    pub gate_inputs: Vec<Vec<usize>>,
    pub gate_output: Vec<usize>,
    /// Combinational gates in topological order.
    pub order: Vec<usize>,
    /// Gate indices of the flip-flops; state vectors follow this order.
    pub dffs: Vec<usize>,
}

/// Result of a clock edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeReport {
    pub state: Vec<LogicValue>,
    /// Flip-flops (positions in `dffs`) that captured X.
    pub x_captured: Vec<usize>,
}

impl Circuit {
    pub(crate) fn build(
        name: &str,
        inputs: &[String],
        outputs: &[String],
        gates: Vec<FlatGate>,
    ) -> Result<Self, NetlistError> {
        let mut net_names = Vec::new();
        let mut net_index = HashMap::new();
        let mut intern = |n: &str, names: &mut Vec<String>| -> usize {
            *net_index.entry(n.to_string()).or_insert_with(|| {
                names.push(n.to_string());
                names.len() - 1
            })
        };
        // driver: None = undriven, Some(None) = input port, Some(Some(g)) = gate
        let mut driver: Vec<Option<Option<usize>>> = Vec::new();
        let mut in_idx = Vec::new();
        for i in inputs {
            let n = intern(i, &mut net_names);
            driver.resize(net_names.len(), None);
            if driver[n].is_some() {
                return Err(NetlistError::MultipleDrivers(i.clone()));
            }
            driver[n] = Some(None);
            in_idx.push(n);
        }
        let mut gate_output = Vec::with_capacity(gates.len());
        for (gi, g) in gates.iter().enumerate() {
            let n = intern(&g.output, &mut net_names);
            driver.resize(net_names.len(), None);
            if driver[n].is_some() {
                return Err(NetlistError::MultipleDrivers(g.output.clone()));
            }
            driver[n] = Some(Some(gi));
            gate_output.push(n);
        }
        let mut gate_inputs = Vec::with_capacity(gates.len());
        for g in &gates {
            let ins: Vec<usize> = g.inputs.iter().map(|i| intern(i, &mut net_names)).collect();
            gate_inputs.push(ins);
        }
        let out_idx: Vec<usize> = outputs.iter().map(|o| intern(o, &mut net_names)).collect();
        driver.resize(net_names.len(), None);
        if let Some(n) = driver.iter().position(|d| d.is_none()) {
            return Err(NetlistError::Undriven(net_names[n].clone()));
        }

        // Kahn's algorithm over combinational edges; flip-flop outputs act
        // as sources.
        let mut fanout: Vec<Vec<usize>> = vec![Vec::new(); net_names.len()];
        let mut pending = vec![0usize; gates.len()];
        for (gi, g) in gates.iter().enumerate() {
            if g.kind.is_sequential() {
                continue;
            }
            for &n in &gate_inputs[gi] {
                if let Some(Some(src)) = driver[n] {
                    if !gates[src].kind.is_sequential() {
                        fanout[n].push(gi);
                        pending[gi] += 1;
                    }
                }
            }
        }
        let mut queue: VecDeque<usize> = (0..gates.len())
            .filter(|&g| !gates[g].kind.is_sequential() && pending[g] == 0)
            .collect();
        let mut order = Vec::new();
        while let Some(g) = queue.pop_front() {
            order.push(g);
            for &h in &fanout[gate_output[g]] {
                pending[h] -= 1;
                if pending[h] == 0 {
                    queue.push_back(h);
                }
            }
        }
        let dffs: Vec<usize> = (0..gates.len()).filter(|&g| gates[g].kind.is_sequential()).collect();
        if order.len() + dffs.len() != gates.len() {
            let stuck = (0..gates.len())
                .filter(|&g| !gates[g].kind.is_sequential() && pending[g] > 0)
                .map(|g| gates[g].id.clone())
                .collect();
            return Err(NetlistError::CombinationalCycle(stuck));
        }
        Ok(Self {
            name: name.to_string(),
            net_names,
            net_index,
            inputs: in_idx,
            outputs: out_idx,
            gates,
            gate_inputs,
            gate_output,
            order,
            dffs,
        })
    }

    pub fn net(&self, name: &str) -> Option<usize> {
        self.net_index.get(name).copied()
    }

    pub fn net_count(&self) -> usize {
        self.net_names.len()
    }

    pub fn is_sequential(&self) -> bool {
        !self.dffs.is_empty()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|&n| self.net_names[n].as_str()).collect()
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.outputs.iter().map(|&n| self.net_names[n].as_str()).collect()
    }

    pub fn dff_ids(&self) -> Vec<&str> {
        self.dffs.iter().map(|&g| self.gates[g].id.as_str()).collect()
    }

    /// Position of a flip-flop in state vectors, by gate id.
    pub fn dff_position(&self, id: &str) -> Option<usize> {
        self.dffs.iter().position(|&g| self.gates[g].id == id)
    }

    /// State before any reset: every flip-flop unknown.
    pub fn power_on_state(&self) -> Vec<LogicValue> {
        vec![LogicValue::X; self.dffs.len()]
    }

    /// Net values after combinational settling with the given primary
    /// inputs (in port order) and flip-flop outputs held at `state`.
    pub fn settle(&self, inputs: &[LogicValue], state: &[LogicValue]) -> Vec<LogicValue> {
        let mut vals = vec![LogicValue::X; self.net_count()];
        self.settle_into(&mut vals, inputs, state);
        vals
    }

    pub fn settle_into(&self, vals: &mut [LogicValue], inputs: &[LogicValue], state: &[LogicValue]) {
        self.settle_in_order(&self.order, vals, inputs, state)
    }

    /// Settles using a caller-supplied topological order of the
    /// combinational gates.
    pub fn settle_in_order(
        &self,
        order: &[usize],
        vals: &mut [LogicValue],
        inputs: &[LogicValue],
        state: &[LogicValue],
    ) {
        assert_eq!(inputs.len(), self.inputs.len(), "input vector width");
        assert_eq!(state.len(), self.dffs.len(), "state vector width");
        for (&n, &v) in self.inputs.iter().zip(inputs) {
            vals[n] = v;
        }
        for (&g, &v) in self.dffs.iter().zip(state) {
            vals[self.gate_output[g]] = v;
        }
        for &g in order {
            let v = eval_unchecked(self.gates[g].kind, self.gate_inputs[g].iter().map(|&n| vals[n]));
            vals[self.gate_output[g]] = v;
        }
    }

    /// Settles from named inputs; every input port must be assigned.
    pub fn settle_named(
        &self,
        assignment: &HashMap<String, LogicValue>,
        state: &[LogicValue],
    ) -> Result<Vec<LogicValue>, NetlistError> {
        let ins = self
            .inputs
            .iter()
            .map(|&n| {
                assignment
                    .get(&self.net_names[n])
                    .copied()
                    .ok_or_else(|| NetlistError::Undriven(self.net_names[n].clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.settle(&ins, state))
    }

    /// Every flip-flop captures its settled D value; captures use pre-edge
    /// values only.
    pub fn clock_edge(&self, vals: &[LogicValue]) -> EdgeReport {
        let mut x_captured = Vec::new();
        let state = self
            .dffs
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let d = vals[self.gate_inputs[g][0]];
                if d == LogicValue::X {
                    x_captured.push(i);
                }
                d
            })
            .collect();
        EdgeReport { state, x_captured }
    }

    pub fn value(&self, vals: &[LogicValue], net: &str) -> Option<LogicValue> {
        self.net(net).map(|n| vals[n])
    }

    /// Reads nets as an unsigned word, bit 0 first; `None` if any bit is X.
    pub fn word(vals: &[LogicValue], nets: &[usize]) -> Option<u64> {
        nets.iter().enumerate().try_fold(0u64, |acc, (i, &n)| {
            vals[n].to_bool().map(|b| acc | ((b as u64) << i))
        })
    }

    /// Net indices of a bus `name[0] .. name[width-1]`.
    pub fn bus(&self, name: &str, width: usize) -> Option<Vec<usize>> {
        (0..width).map(|i| self.net(&format!("{name}[{i}]"))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::Netlist;
    use super::*;
    use LogicValue::*;

    #[test]
    fn half_adder_settles() {
        let c = Netlist::parse_flat(".inputs a b\n.outputs s c\ns = XOR(a, b)\nc = AND(a, b)\n")
            .unwrap()
            .flatten()
            .unwrap();
        let v = c.settle(&[One, One], &[]);
        assert_eq!(c.value(&v, "s"), Some(Zero));
        assert_eq!(c.value(&v, "c"), Some(One));
    }

    #[test]
    fn unknown_inputs_spread_except_constants() {
        let c = Netlist::parse_flat(".inputs a\n.outputs y k\nk = CONST1()\ny = AND(a, k)\n")
            .unwrap()
            .flatten()
            .unwrap();
        let v = c.settle(&[X], &[]);
        assert_eq!(c.value(&v, "y"), Some(X));
        assert_eq!(c.value(&v, "k"), Some(One));
    }

    #[test]
    fn dff_captures_and_flags_x() {
        let c = Netlist::parse_flat(".inputs d\n.outputs q\nq = DFF(d)\n").unwrap().flatten().unwrap();
        let v = c.settle(&[One], &c.power_on_state());
        assert_eq!(c.clock_edge(&v).state, vec![One]);
        let v = c.settle(&[X], &[One]);
        let r = c.clock_edge(&v);
        assert_eq!(r.state, vec![X]);
        assert_eq!(r.x_captured, vec![0]);
    }

    #[test]
    fn edge_is_atomic_for_swapping_registers() {
        // Two flip-flops feeding each other swap on every edge.
        let c = Netlist::parse_flat(".outputs a b\na = DFF(b)\nb = DFF(a)\n").unwrap().flatten().unwrap();
        let v = c.settle(&[], &[One, Zero]);
        assert_eq!(c.clock_edge(&v).state, vec![Zero, One]);
    }

    #[test]
    fn missing_named_input_rejected() {
        let c = Netlist::parse_flat(".inputs a b\n.outputs y\ny = OR(a, b)\n").unwrap().flatten().unwrap();
        let mut m = HashMap::new();
        m.insert("a".to_string(), One);
        assert!(c.settle_named(&m, &[]).is_err());
        m.insert("b".to_string(), X);
        assert_eq!(c.value(&c.settle_named(&m, &[]).unwrap(), "y"), Some(One));
    }
}
