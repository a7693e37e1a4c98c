use super::asm::*;
use super::image::{MachineImage, SourceMapEntry};
use crate::isa::{Instr, MEM_WORDS};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssembleError {
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("operand `{operand}` of `{instr}` out of range")]
    ImmediateOutOfRange { instr: String, operand: String },
    #[error("program needs {0} words; memory holds {MEM_WORDS}")]
    CapacityExceeded(usize),
}

fn resolve(labels: &BTreeMap<String, u16>, t: &Target) -> Result<u16, AssembleError> {
    match t {
        Target::Addr(a) => Ok(*a),
        Target::Label(l) => labels
            .get(l)
            .copied()
            .ok_or_else(|| AssembleError::UndefinedLabel(l.clone())),
    }
}

fn out_of_range(i: &AsmInstr, operand: impl ToString) -> AssembleError {
    AssembleError::ImmediateOutOfRange {
        instr: i.to_string(),
        operand: operand.to_string(),
    }
}

fn encode(i: &AsmInstr, labels: &BTreeMap<String, u16>) -> Result<u16, AssembleError> {
    let branch = |t: &Target, limit: u16| -> Result<u16, AssembleError> {
        let a = resolve(labels, t)?;
        if a >= limit {
            Err(out_of_range(i, t))
        } else {
            Ok(a)
        }
    };
    let instr = match i {
        AsmInstr::Word(w) => return Ok(*w),
        AsmInstr::Halt => Instr::Halt,
        AsmInstr::LoadI { rd, imm } => {
            let v: i32 = match imm {
                Imm::Value(v) => *v as i32,
                Imm::Addr(l) => resolve(labels, &Target::Label(l.clone()))? as i32,
                Imm::Hi(l) => (resolve(labels, &Target::Label(l.clone()))? as i16 >> 8) as i32,
                Imm::Lo(l) => (resolve(labels, &Target::Label(l.clone()))? & 0xFF) as i32,
            };
            if !(-256..=255).contains(&v) {
                return Err(out_of_range(i, imm));
            }
            Instr::LoadI {
                rd: *rd,
                imm: v as i16,
            }
        }
        AsmInstr::Load { rd, rs, off } => Instr::Load {
            rd: *rd,
            rs: *rs,
            off: *off,
        },
        AsmInstr::Store { rd, rs, off } => Instr::Store {
            rd: *rd,
            rs: *rs,
            off: *off,
        },
        AsmInstr::Alu { op, rd, rs, rt } => Instr::Alu {
            op: *op,
            rd: *rd,
            rs: *rs,
            rt: *rt,
        },
        AsmInstr::Not { rd, rs } => Instr::Not { rd: *rd, rs: *rs },
        AsmInstr::Jmp(t) => Instr::Jmp {
            addr: branch(t, 4096)?,
        },
        AsmInstr::Jz(rd, t) => Instr::Jz {
            rd: *rd,
            addr: branch(t, 512)?,
        },
        AsmInstr::Jn(rd, t) => Instr::Jn {
            rd: *rd,
            addr: branch(t, 512)?,
        },
        AsmInstr::In { rd, port } => Instr::In {
            rd: *rd,
            port: *port,
        },
        AsmInstr::Out { rd, port } => Instr::Out {
            rd: *rd,
            port: *port,
        },
    };
    Ok(instr.encode())
}

/// Resolves labels and encodes the program. Code is laid out from address
/// 0; data directives follow the last instruction.
pub fn assemble(a: &AssemblyProgram) -> Result<MachineImage, AssembleError> {
    let total = a.code_words() + a.data_words();
    if total > MEM_WORDS {
        return Err(AssembleError::CapacityExceeded(total));
    }
    let mut labels = BTreeMap::new();
    let mut define = |name: &str, addr: usize| {
        if labels.insert(name.to_string(), addr as u16).is_some() {
            Err(AssembleError::DuplicateLabel(name.to_string()))
        } else {
            Ok(())
        }
    };
    let mut addr = 0usize;
    for line in &a.lines {
        if let Some(l) = &line.label {
            define(l, addr)?;
        }
        if line.instr.is_some() {
            addr += 1;
        }
    }
    for d in &a.data {
        define(&d.label, addr)?;
        addr += d.init.len();
    }

    let mut img = MachineImage::empty();
    let mut pc = 0usize;
    for (idx, line) in a.lines.iter().enumerate() {
        if let Some(i) = &line.instr {
            img.words[pc] = encode(i, &labels)?;
            img.source_map.push(SourceMapEntry {
                addr: pc as u16,
                asm_line: idx as u32,
                text: i.to_string(),
                src: line.source_line,
            });
            pc += 1;
        }
    }
    for d in &a.data {
        img.words[pc..pc + d.init.len()].copy_from_slice(&d.init);
        pc += d.init.len();
    }
    img.entry_point = match &a.entry {
        Some(t) => {
            let e = resolve(&labels, t)?;
            if e as usize >= MEM_WORDS {
                return Err(out_of_range(&AsmInstr::Jmp(t.clone()), t));
            }
            e
        }
        None => 0,
    };
    img.symbols = labels;
    Ok(img)
}

/// Renders every word of the image; words that are not canonical
/// encodings become `.word` lines so that reassembly is bit-exact.
pub fn disassemble(img: &MachineImage) -> AssemblyProgram {
    let lines = img
        .words
        .iter()
        .enumerate()
        .map(|(addr, &w)| {
            let instr = match Instr::decode_canonical(w) {
                Some(i) => to_asm(i),
                None => AsmInstr::Word(w),
            };
            AsmLine::instr(instr, img.source_at(addr as u16).and_then(|e| e.src))
        })
        .collect();
    AssemblyProgram {
        lines,
        data: Vec::new(),
        entry: (img.entry_point != 0).then_some(Target::Addr(img.entry_point)),
    }
}

fn to_asm(i: Instr) -> AsmInstr {
    match i {
        Instr::Halt => AsmInstr::Halt,
        Instr::LoadI { rd, imm } => AsmInstr::LoadI {
            rd,
            imm: Imm::Value(imm),
        },
        Instr::Load { rd, rs, off } => AsmInstr::Load { rd, rs, off },
        Instr::Store { rd, rs, off } => AsmInstr::Store { rd, rs, off },
        Instr::Alu { op, rd, rs, rt } => AsmInstr::Alu { op, rd, rs, rt },
        Instr::Not { rd, rs } => AsmInstr::Not { rd, rs },
        Instr::Jmp { addr } => AsmInstr::Jmp(Target::Addr(addr)),
        Instr::Jz { rd, addr } => AsmInstr::Jz(rd, Target::Addr(addr)),
        Instr::Jn { rd, addr } => AsmInstr::Jn(rd, Target::Addr(addr)),
        Instr::In { rd, port } => AsmInstr::In { rd, port },
        Instr::Out { rd, port } => AsmInstr::Out { rd, port },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn asm(text: &str) -> Result<MachineImage, AssembleError> {
        assemble(&AssemblyProgram::parse(text).unwrap())
    }

    #[test]
    fn halt_and_loadi_words() {
        let img = asm("HALT\nLOADI r1, 5\n").unwrap();
        assert_eq!(&img.words[..2], &[0x0000, 0x1205]);
        assert!(img.words[2..].iter().all(|w| *w == 0));
        assert_eq!(img.source_map.len(), 2);
    }

    #[test]
    fn label_errors() {
        assert_eq!(asm("JMP nowhere\n"), Err(AssembleError::UndefinedLabel("nowhere".into())));
        assert_eq!(asm("a:\nHALT\na:\nHALT\n"), Err(AssembleError::DuplicateLabel("a".into())));
        assert!(matches!(asm("LOADI r1, 300\n"), Err(AssembleError::ImmediateOutOfRange { .. })));
    }

    #[test]
    fn conditional_branch_targets_limited_to_nine_bits() {
        let mut text = String::from("JZ r1, far\n");
        for _ in 0..600 {
            text.push_str("HALT\n");
        }
        text.push_str("far:\nHALT\n");
        assert!(matches!(asm(&text), Err(AssembleError::ImmediateOutOfRange { .. })));
    }

    #[test]
    fn data_labels_follow_code() {
        let img = asm("LOADI r6, x\nLOADI r1, hi(y)\nLOADI r2, lo(y)\n.data\nx: .space 3\ny: .word 9\n").unwrap();
        assert_eq!(img.symbol("x"), Some(3));
        assert_eq!(img.symbol("y"), Some(6));
        assert_eq!(img.words[1], 0x1200);
        assert_eq!(img.words[2], 0x1406);
        assert_eq!(img.words[6], 9);
    }

    #[test]
    fn zero_image_disassembles_to_halts() {
        let d = disassemble(&MachineImage::empty());
        assert_eq!(d.lines.len(), 4096);
        assert!(d.instructions().all(|i| *i == AsmInstr::Halt));
    }

    proptest! {
        #[test]
        fn disassembly_reassembles_bit_exact(words in proptest::collection::vec(any::<u16>(), 0..64)) {
            let img = MachineImage::from_words(&words);
            let again = assemble(&disassemble(&img)).unwrap();
            prop_assert_eq!(again.words, img.words);
        }
    }
}
