mod common;

use common::{agree, interpret, ProgramGen};
use emst_core::compiler::build_image;
use emst_core::corpus::GUESTS;
use emst_core::isa_vm::{run, InputProvider, InputRecord};
use emst_core::lang::{check_source, SourceProgram};
use proptest::prelude::*;

const MAX_CYCLES: u64 = 2_000_000;

fn check(name: &str, text: &str, input: &[(u8, u16)]) -> Result<(), String> {
    let src = SourceProgram::new(name, text);
    let checked = check_source(&src).map_err(|e| format!("{name}: {e}\n{text}"))?;
    let img = build_image(&src).map_err(|e| format!("{name}: {e}\n{text}"))?;
    let recs: Vec<InputRecord> = input.iter().map(|&(port, word)| InputRecord { port, word }).collect();
    let r = run(&img, &mut InputProvider::scripted(&recs), MAX_CYCLES).unwrap();
    let o = interpret(&checked.ast, input, MAX_CYCLES);
    agree(&checked.ast, &img, &r, &o).map_err(|e| format!("{name}: {e}\n{text}"))
}

#[test]
fn corpus_matches_the_interpreter() {
    for g in GUESTS {
        check(g.name, g.text, g.input).unwrap();
    }
}

#[test]
fn random_programs_match_the_interpreter() {
    let mut gen = ProgramGen::new(0x5EED);
    let mut halts = std::collections::BTreeMap::new();
    for i in 0..200 {
        let (text, input) = gen.program();
        check(&format!("gen{i}"), &text, &input).unwrap();
        let src = SourceProgram::new("g", text.as_str());
        let r = run(&build_image(&src).unwrap(), &mut InputProvider::scripted(
            &input.iter().map(|&(port, word)| InputRecord { port, word }).collect::<Vec<_>>(),
        ), MAX_CYCLES)
        .unwrap();
        *halts.entry(format!("{:?}", r.halt)).or_insert(0) += 1;
    }
    // the generator must exercise both normal halts and input exhaustion
    assert!(halts.len() >= 2, "{halts:?}");
}

#[test]
fn out_of_range_index_traps_in_both() {
    let text = "var A[3];\nvar i;\ni = 2;\nA[i] = 7;\ni = i + 1;\nwrite A[i];\n";
    check("oob", text, &[]).unwrap();
    let text = "var A[3];\nvar i;\ni = 65535;\nA[i] = 1;\n";
    check("oob_neg", text, &[]).unwrap();
}

#[test]
fn comparisons_at_the_wrap_boundary() {
    let pairs = [(0u16, 0x8000u16), (0x8000, 0), (0x7FFF, 0xFFFF), (1, 0xFFFF), (0x4000, 0xC000), (5, 5)];
    for (a, b) in pairs {
        let text = format!(
            "var a;\nvar b;\nread a;\nread b;\nwrite a < b;\nwrite a > b;\nwrite a <= b;\nwrite a >= b;\nwrite a = b;\nwrite a != b;\n"
        );
        check("cmp", &text, &[(0, a), (0, b)]).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn generated_programs_agree(seed in any::<u64>()) {
        let (text, input) = ProgramGen::new(seed).program();
        prop_assert!(check("prop", &text, &input).is_ok(), "{}", check("prop", &text, &input).unwrap_err());
    }
}
