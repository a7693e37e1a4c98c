//! The downward translation chain: checked program to assembly to image.

mod asm;
mod assemble;
mod codegen;
mod image;

pub use asm::{AsmInstr, AsmLine, AsmParseError, AssemblyProgram, DataDirective, Imm, Target};
pub use assemble::{assemble, disassemble, AssembleError};
pub use codegen::{compile, CompileError, TRAP_LABEL, TRAP_WORD};
pub use image::{ImageError, MachineImage, SourceMapEntry, IMAGE_MAGIC, IMAGE_VERSION};

use crate::lang::{check_source, FrontendError, SourceProgram};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}

/// Source text all the way down to a machine image.
pub fn build_image(src: &SourceProgram) -> Result<MachineImage, BuildError> {
    let checked = check_source(src)?;
    let asm = compile(&checked)?;
    Ok(assemble(&asm)?)
}
