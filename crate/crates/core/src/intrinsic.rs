//! Names and shapes of the `silvia.*` packed-DSP intrinsics.
//!
//! | callee                      | operands                      | lanes |
//! |-----------------------------|-------------------------------|-------|
//! | `silvia.add4x12` / `sub4x12`| `x0..x3, y0..y3`              | 4     |
//! | `silvia.add2x24` / `sub2x24`| `x0, x1, y0, y1`              | 2     |
//! | `silvia.mul2x8`             | `a, b, c`                     | 2     |
//! | `silvia.mad2x8.chain<L>`    | `a1..aL, b1..bL, c1..cL`      | 2     |
//! | `silvia.mul4x4`             | `a0..a3, b`                   | 4     |

use crate::dsp::{AddOp, SimdAddMode};
use crate::ir::INTRINSIC_PREFIX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    SimdAdd { mode: SimdAddMode, op: AddOp },
    /// Factor-2 multiply-add cascade of `len` DSPs. `len == 1` is the plain
    /// two-multiplication form.
    MadChain { len: usize },
    Mul4x4,
}

impl Intrinsic {
    pub fn parse(callee: &str) -> Option<Intrinsic> {
        let rest = callee.strip_prefix(INTRINSIC_PREFIX)?;
        Some(match rest {
            "add4x12" => Intrinsic::SimdAdd { mode: SimdAddMode::Four12, op: AddOp::Add },
            "sub4x12" => Intrinsic::SimdAdd { mode: SimdAddMode::Four12, op: AddOp::Sub },
            "add2x24" => Intrinsic::SimdAdd { mode: SimdAddMode::Two24, op: AddOp::Add },
            "sub2x24" => Intrinsic::SimdAdd { mode: SimdAddMode::Two24, op: AddOp::Sub },
            "mul2x8" => Intrinsic::MadChain { len: 1 },
            "mul4x4" => Intrinsic::Mul4x4,
            _ => {
                let len: usize = rest.strip_prefix("mad2x8.chain")?.parse().ok()?;
                if len < 2 {
                    return None;
                }
                Intrinsic::MadChain { len }
            }
        })
    }

    pub fn callee(&self) -> String {
        let body = match *self {
            Intrinsic::SimdAdd { mode, op } => {
                let op = match op {
                    AddOp::Add => "add",
                    AddOp::Sub => "sub",
                };
                match mode {
                    SimdAddMode::Four12 => format!("{op}4x12"),
                    SimdAddMode::Two24 => format!("{op}2x24"),
                }
            }
            Intrinsic::MadChain { len: 1 } => "mul2x8".to_string(),
            Intrinsic::MadChain { len } => format!("mad2x8.chain{len}"),
            Intrinsic::Mul4x4 => "mul4x4".to_string(),
        };
        format!("{INTRINSIC_PREFIX}{body}")
    }

    pub fn arity(&self) -> usize {
        match *self {
            Intrinsic::SimdAdd { mode, .. } => 2 * mode.lanes(),
            Intrinsic::MadChain { len } => 3 * len,
            Intrinsic::Mul4x4 => 5,
        }
    }

    pub fn lanes(&self) -> usize {
        match *self {
            Intrinsic::SimdAdd { mode, .. } => mode.lanes(),
            Intrinsic::MadChain { .. } => 2,
            Intrinsic::Mul4x4 => 4,
        }
    }

    /// Number of physical DSP slices the call occupies.
    pub fn dsp_units(&self) -> usize {
        match *self {
            Intrinsic::MadChain { len } => len,
            _ => 1,
        }
    }
}
