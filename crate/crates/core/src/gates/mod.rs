//! Gate-level logic: three-valued evaluation, hierarchical netlists, block
//! synthesis and exhaustive equivalence checking.

mod blocks;
mod circuit;
mod equiv;
mod netlist;

pub use blocks::{synthesize_block, synthesize_variant, BlockKind, Builder, Realization, SynthError};
pub use circuit::{Circuit, EdgeReport, FlatGate};
pub use equiv::{equivalent, equivalent_circuits, equivalent_cut, EquivError, Equivalence, MAX_EQUIV_INPUTS};
pub use netlist::{Gate, Instance, Netlist, NetlistError, NETLIST_FORMAT_VERSION};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum LogicValue {
    Zero,
    One,
    /// Unknown or uninitialized.
    #[default]
    X,
}

impl LogicValue {
    pub fn from_bool(b: bool) -> Self {
        if b {
            LogicValue::One
        } else {
            LogicValue::Zero
        }
    }

    pub fn to_bool(self) -> Option<bool> {
        match self {
            LogicValue::Zero => Some(false),
            LogicValue::One => Some(true),
            LogicValue::X => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != LogicValue::X
    }

    pub fn not(self) -> Self {
        match self {
            LogicValue::Zero => LogicValue::One,
            LogicValue::One => LogicValue::Zero,
            LogicValue::X => LogicValue::X,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            LogicValue::Zero => '0',
            LogicValue::One => '1',
            LogicValue::X => 'X',
        }
    }
}

impl From<bool> for LogicValue {
    fn from(b: bool) -> Self {
        Self::from_bool(b)
    }
}

impl fmt::Display for LogicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    And,
    Or,
    Not,
    Nand,
    Nor,
    Xor,
    Dff,
    Const0,
    Const1,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::And,
        GateKind::Or,
        GateKind::Not,
        GateKind::Nand,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Dff,
        GateKind::Const0,
        GateKind::Const1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::And => "AND",
            GateKind::Or => "OR",
            GateKind::Not => "NOT",
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Dff => "DFF",
            GateKind::Const0 => "CONST0",
            GateKind::Const1 => "CONST1",
        }
    }

    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            GateKind::Not | GateKind::Dff => n == 1,
            GateKind::Const0 | GateKind::Const1 => n == 0,
            _ => n >= 2,
        }
    }

    pub fn is_sequential(self) -> bool {
        self == GateKind::Dff
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown gate kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} cannot take {got} inputs")]
pub struct ArityError {
    pub kind: GateKind,
    pub got: usize,
}

/// Evaluates one gate over three-valued inputs; a result is known whenever
/// the known inputs force it.
pub fn eval_gate(kind: GateKind, inputs: &[LogicValue]) -> Result<LogicValue, ArityError> {
    if !kind.arity_ok(inputs.len()) {
        return Err(ArityError {
            kind,
            got: inputs.len(),
        });
    }
    Ok(eval_unchecked(kind, inputs.iter().copied()))
}

pub(crate) fn eval_unchecked(kind: GateKind, inputs: impl Iterator<Item = LogicValue>) -> LogicValue {
    use LogicValue::*;
    let conj = |it: &mut dyn Iterator<Item = LogicValue>, dom: LogicValue| {
        let mut unknown = false;
        for v in it {
            if v == dom {
                return dom;
            }
            unknown |= v == X;
        }
        if unknown {
            X
        } else {
            dom.not()
        }
    };
    let mut inputs = inputs;
    match kind {
        GateKind::And => conj(&mut inputs, Zero),
        GateKind::Nand => conj(&mut inputs, Zero).not(),
        GateKind::Or => conj(&mut inputs, One),
        GateKind::Nor => conj(&mut inputs, One).not(),
        GateKind::Xor => {
            let mut acc = false;
            for v in inputs {
                match v.to_bool() {
                    Some(b) => acc ^= b,
                    None => return X,
                }
            }
            LogicValue::from_bool(acc)
        }
        GateKind::Not => inputs.next().unwrap_or(X).not(),
        GateKind::Dff => inputs.next().unwrap_or(X),
        GateKind::Const0 => Zero,
        GateKind::Const1 => One,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use LogicValue::*;

    #[test]
    fn dominance_and_indeterminacy() {
        assert_eq!(eval_gate(GateKind::And, &[One, One]).unwrap(), One);
        assert_eq!(eval_gate(GateKind::And, &[Zero, X]).unwrap(), Zero);
        assert_eq!(eval_gate(GateKind::Or, &[X, One]).unwrap(), One);
        assert_eq!(eval_gate(GateKind::Xor, &[One, X]).unwrap(), X);
        assert_eq!(eval_gate(GateKind::Nand, &[X, X]).unwrap(), X);
        assert_eq!(eval_gate(GateKind::Const1, &[]).unwrap(), One);
    }

    #[test]
    fn arity_checked() {
        assert!(eval_gate(GateKind::Not, &[One, Zero]).is_err());
        assert!(eval_gate(GateKind::And, &[One]).is_err());
        assert!(eval_gate(GateKind::Const0, &[One]).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in GateKind::ALL {
            assert_eq!(k.name().parse::<GateKind>().unwrap(), k);
        }
    }

    fn lv() -> impl Strategy<Value = LogicValue> {
        prop_oneof![Just(Zero), Just(One), Just(X)]
    }

    proptest! {
        #[test]
        fn refining_x_never_flips_known_output(
            k in 0usize..6,
            ins in proptest::collection::vec(lv(), 2..5),
            fill in proptest::collection::vec(any::<bool>(), 5),
        ) {
            let kind = [GateKind::And, GateKind::Or, GateKind::Nand, GateKind::Nor, GateKind::Xor, GateKind::Not][k];
            let ins = if kind == GateKind::Not { ins[..1].to_vec() } else { ins };
            let before = eval_gate(kind, &ins).unwrap();
            let refined: Vec<_> = ins.iter().zip(&fill).map(|(v, b)| if *v == X { LogicValue::from(*b) } else { *v }).collect();
            let after = eval_gate(kind, &refined).unwrap();
            prop_assert!(after.is_known());
            if before.is_known() {
                prop_assert_eq!(before, after);
            }
        }
    }
}
