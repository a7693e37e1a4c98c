//! Guest programs shipped with the crate, with a default input for each.

use crate::isa_vm::{InputProvider, InputRecord};
use crate::lang::SourceProgram;

#[derive(Debug, Clone, Copy)]
pub struct Guest {
    pub name: &'static str,
    pub text: &'static str,
    /// Default `(port, word)` stream.
    pub input: &'static [(u8, u16)],
}

impl Guest {
    pub fn source(&self) -> SourceProgram {
        SourceProgram::new(self.name, self.text)
    }

    pub fn input_records(&self) -> Vec<InputRecord> {
        self.input.iter().map(|&(port, word)| InputRecord { port, word }).collect()
    }

    pub fn provider(&self) -> InputProvider {
        InputProvider::scripted(&self.input_records())
    }
}

/// The canonical sorting workload's data.
pub const BUBBLESORT_DATA: [u16; 5] = [5, 1, 4, 2, 8];

pub const GUESTS: &[Guest] = &[
    Guest {
        name: "bubblesort",
        text: include_str!("../corpus/bubblesort.mhl"),
        input: &[(0, 5), (0, 1), (0, 4), (0, 2), (0, 8)],
    },
    Guest {
        name: "bubblesort_desc",
        text: include_str!("../corpus/bubblesort_desc.mhl"),
        input: &[(0, 5), (0, 1), (0, 4), (0, 2), (0, 8)],
    },
    Guest {
        name: "fib",
        text: include_str!("../corpus/fib.mhl"),
        input: &[],
    },
    Guest {
        name: "gcd",
        text: include_str!("../corpus/gcd.mhl"),
        input: &[(0, 1071), (0, 462)],
    },
    Guest {
        name: "sieve",
        text: include_str!("../corpus/sieve.mhl"),
        input: &[],
    },
    Guest {
        name: "max",
        text: include_str!("../corpus/max.mhl"),
        input: &[(0, 17), (0, 3), (0, 900), (0, 12), (0, 899), (0, 0), (0, 64), (0, 5)],
    },
    Guest {
        name: "onemax",
        text: include_str!("../corpus/onemax.mhl"),
        input: &[(1, 1)],
    },
    Guest {
        name: "entropy",
        text: include_str!("../corpus/entropy.mhl"),
        input: &[(2, 0x3A71), (2, 0x0C44), (2, 0x9D03), (2, 0x0001), (2, 0x7FFE), (2, 0x5555), (2, 0x1234), (2, 0xFFFF)],
    },
];

pub fn guest(name: &str) -> Option<&'static Guest> {
    GUESTS.iter().find(|g| g.name == name)
}
