//! A layered toy computer: a small imperative language compiled to a 16-bit
//! instruction set, executed by an interpreter, a gate-level microcoded
//! machine and a switch-level transistor simulation, with causal tracing
//! and scenario experiments on top.

pub mod compiler;
pub mod corpus;
pub mod gates;
pub mod isa;
pub mod isa_vm;
pub mod lab;
pub mod lang;
pub mod micro;
pub mod physics;
pub mod switch;
pub mod trace;
