//! Packing of narrow integer arithmetic onto FPGA DSP slices.
//!
//! The crate works on a minimal single-block SSA IR (`.sir` text files). The
//! packing passes find additions, subtractions, multiplications and
//! multiply-add trees that fit sub-word DSP modes, group compatible ones into
//! tuples and rewrite every tuple as one call to a `silvia.*` intrinsic. The
//! intrinsics are executed by a bit-exact DSP emulator ([`dsp`]), which lets
//! the reference interpreter ([`interp`]) check the packed code against the
//! original on random and corner-case inputs.
//!
//! ```text
//! %a0 = load i8 @a[0]
//! %c0 = mul i8 %a0, %b            %r = call i48 @silvia.mul2x8(%a0, %a1, %b)
//! %a1 = load i8 @a[1]      ==>    %c0.pk = extract i8 %r, 0
//! %c1 = mul i8 %a1, %b            %c1.pk = extract i8 %r, 1
//! ```

pub mod analysis;
pub mod ddg;
pub mod dsp;
pub mod interp;
pub mod intrinsic;
pub mod ir;
pub mod pass;
pub mod pipeline;

pub use ir::{Function, Instruction, Opcode, Signedness, Type, Value, Width};
