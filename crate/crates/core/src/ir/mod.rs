//! Minimal single-block SSA IR.
//!
//! Every value carries an explicit bit width and signedness. Memory is a set
//! of named arrays addressed with constant indices, which is what fully
//! unrolled kernels look like after the front end.

use std::collections::HashMap;
use std::fmt;

mod parse;
mod print;
mod validate;

pub use parse::{parse, parse_unvalidated, ParseError};
pub use print::print;
pub use validate::{validate, Diagnostic};

/// Bit width of an integer value, `1..=64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Width(u8);

impl Width {
    pub const MAX: u32 = 64;

    pub fn new(bits: u32) -> Option<Width> {
        (1..=Self::MAX).contains(&bits).then_some(Width(bits as u8))
    }

    pub fn bits(self) -> u32 {
        self.0 as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Signedness {
    Signed,
    Unsigned,
}

impl Signedness {
    pub fn is_signed(self) -> bool {
        self == Signedness::Signed
    }
}

/// An integer type: `i8` is signed, `u8` unsigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Type {
    pub width: Width,
    pub sign: Signedness,
}

impl Type {
    pub fn new(bits: u32, sign: Signedness) -> Option<Type> {
        Width::new(bits).map(|width| Type { width, sign })
    }

    pub fn signed(bits: u32) -> Type {
        Type::new(bits, Signedness::Signed).expect("width in 1..=64")
    }

    pub fn unsigned(bits: u32) -> Type {
        Type::new(bits, Signedness::Unsigned).expect("width in 1..=64")
    }

    pub fn bits(self) -> u32 {
        self.width.bits()
    }

    pub fn min(self) -> i128 {
        match self.sign {
            Signedness::Signed => -(1i128 << (self.bits() - 1)),
            Signedness::Unsigned => 0,
        }
    }

    pub fn max(self) -> i128 {
        match self.sign {
            Signedness::Signed => (1i128 << (self.bits() - 1)) - 1,
            Signedness::Unsigned => (1i128 << self.bits()) - 1,
        }
    }

    pub fn fits(self, v: i128) -> bool {
        (self.min()..=self.max()).contains(&v)
    }

    /// Two's-complement wraparound of `v` into this type's range.
    pub fn wrap(self, v: i128) -> i128 {
        let modulus = 1i128 << self.bits();
        let low = v.rem_euclid(modulus);
        if self.sign.is_signed() && low > self.max() {
            low - modulus
        } else {
            low
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.sign {
            Signedness::Signed => 'i',
            Signedness::Unsigned => 'u',
        };
        write!(f, "{prefix}{}", self.bits())
    }
}

/// An SSA operand: a named value (argument or instruction result) or a typed
/// constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Var(String),
    Const { value: i128, ty: Type },
}

impl Value {
    pub fn var(name: impl Into<String>) -> Value {
        Value::Var(name.into())
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Value::Var(n) => Some(n),
            Value::Const { .. } => None,
        }
    }
}

/// `@array[index]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemLoc {
    pub array: String,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CastOp {
    SExt,
    ZExt,
    Trunc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    SExt,
    ZExt,
    Trunc,
    /// Reads one lane out of a packed intrinsic result.
    Extract,
    Load,
    Store,
    Call,
    Ret,
}

impl Opcode {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::SExt => "sext",
            Opcode::ZExt => "zext",
            Opcode::Trunc => "trunc",
            Opcode::Extract => "extract",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Call => "call",
            Opcode::Ret => "ret",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Some(match s {
            "add" => Opcode::Add,
            "sub" => Opcode::Sub,
            "mul" => Opcode::Mul,
            "sext" => Opcode::SExt,
            "zext" => Opcode::ZExt,
            "trunc" => Opcode::Trunc,
            "extract" => Opcode::Extract,
            "load" => Opcode::Load,
            "store" => Opcode::Store,
            "call" => Opcode::Call,
            "ret" => Opcode::Ret,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstKind {
    Binary { op: BinOp, lhs: Value, rhs: Value },
    /// `from` is the operand type; the result type lives on the instruction.
    Cast { op: CastOp, value: Value, from: Type },
    Extract { packed: Value, lane: u32 },
    Load { loc: MemLoc },
    Store { value: Value, loc: MemLoc },
    Call { callee: String, args: Vec<Value> },
    Ret { value: Option<Value> },
}

/// One IR instruction. `ty` is the result type, or the stored/returned value
/// type for `store` and `ret`; it is `None` for a void call or a bare `ret`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub result: Option<String>,
    pub ty: Option<Type>,
    pub kind: InstKind,
}

/// Callee prefix reserved for packed-DSP intrinsics.
pub const INTRINSIC_PREFIX: &str = "silvia.";

impl Instruction {
    pub fn binary(result: &str, op: BinOp, ty: Type, lhs: Value, rhs: Value) -> Instruction {
        Instruction {
            result: Some(result.to_string()),
            ty: Some(ty),
            kind: InstKind::Binary { op, lhs, rhs },
        }
    }

    pub fn load(result: &str, ty: Type, array: &str, index: u64) -> Instruction {
        Instruction {
            result: Some(result.to_string()),
            ty: Some(ty),
            kind: InstKind::Load {
                loc: MemLoc { array: array.to_string(), index },
            },
        }
    }

    pub fn store(ty: Type, value: Value, array: &str, index: u64) -> Instruction {
        Instruction {
            result: None,
            ty: Some(ty),
            kind: InstKind::Store {
                value,
                loc: MemLoc { array: array.to_string(), index },
            },
        }
    }

    pub fn cast(result: &str, op: CastOp, from: Type, to: Type, value: Value) -> Instruction {
        Instruction {
            result: Some(result.to_string()),
            ty: Some(to),
            kind: InstKind::Cast { op, value, from },
        }
    }

    pub fn call(result: Option<&str>, ty: Option<Type>, callee: &str, args: Vec<Value>) -> Instruction {
        Instruction {
            result: result.map(str::to_string),
            ty,
            kind: InstKind::Call { callee: callee.to_string(), args },
        }
    }

    pub fn extract(result: &str, ty: Type, packed: &str, lane: u32) -> Instruction {
        Instruction {
            result: Some(result.to_string()),
            ty: Some(ty),
            kind: InstKind::Extract { packed: Value::var(packed), lane },
        }
    }

    pub fn opcode(&self) -> Opcode {
        match &self.kind {
            InstKind::Binary { op: BinOp::Add, .. } => Opcode::Add,
            InstKind::Binary { op: BinOp::Sub, .. } => Opcode::Sub,
            InstKind::Binary { op: BinOp::Mul, .. } => Opcode::Mul,
            InstKind::Cast { op: CastOp::SExt, .. } => Opcode::SExt,
            InstKind::Cast { op: CastOp::ZExt, .. } => Opcode::ZExt,
            InstKind::Cast { op: CastOp::Trunc, .. } => Opcode::Trunc,
            InstKind::Extract { .. } => Opcode::Extract,
            InstKind::Load { .. } => Opcode::Load,
            InstKind::Store { .. } => Opcode::Store,
            InstKind::Call { .. } => Opcode::Call,
            InstKind::Ret { .. } => Opcode::Ret,
        }
    }

    /// Value operands in textual order.
    pub fn operands(&self) -> Vec<&Value> {
        match &self.kind {
            InstKind::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Cast { value, .. } => vec![value],
            InstKind::Extract { packed, .. } => vec![packed],
            InstKind::Load { .. } => vec![],
            InstKind::Store { value, .. } => vec![value],
            InstKind::Call { args, .. } => args.iter().collect(),
            InstKind::Ret { value } => value.iter().collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Value> {
        match &mut self.kind {
            InstKind::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            InstKind::Cast { value, .. } => vec![value],
            InstKind::Extract { packed, .. } => vec![packed],
            InstKind::Load { .. } => vec![],
            InstKind::Store { value, .. } => vec![value],
            InstKind::Call { args, .. } => args.iter_mut().collect(),
            InstKind::Ret { value } => value.iter_mut().collect(),
        }
    }

    /// Names of the SSA values this instruction reads.
    pub fn used_names(&self) -> impl Iterator<Item = &str> {
        self.operands().into_iter().filter_map(Value::name)
    }

    pub fn mem_loc(&self) -> Option<&MemLoc> {
        match &self.kind {
            InstKind::Load { loc } | InstKind::Store { loc, .. } => Some(loc),
            _ => None,
        }
    }

    pub fn callee(&self) -> Option<&str> {
        match &self.kind {
            InstKind::Call { callee, .. } => Some(callee),
            _ => None,
        }
    }

    /// A call into the packed-DSP intrinsic namespace. These have no memory
    /// effects and are executed by the DSP emulator.
    pub fn is_intrinsic_call(&self) -> bool {
        self.callee().is_some_and(|c| c.starts_with(INTRINSIC_PREFIX))
    }

    /// A call to anything outside the intrinsic namespace; may touch memory.
    pub fn is_opaque_call(&self) -> bool {
        self.callee().is_some() && !self.is_intrinsic_call()
    }

    /// Instructions that must survive dead-code elimination.
    pub fn has_side_effects(&self) -> bool {
        matches!(self.kind, InstKind::Store { .. } | InstKind::Ret { .. }) || self.is_opaque_call()
    }

    /// Replace every use of `from` with `to`; returns the number of rewrites.
    pub fn replace_uses(&mut self, from: &str, to: &Value) -> usize {
        let mut n = 0;
        for v in self.operands_mut() {
            if v.name() == Some(from) {
                *v = to.clone();
                n += 1;
            }
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

/// A loop-carried dependence annotation: `;; carried %src -> %dst distance d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Carried {
    pub src: String,
    pub dst: String,
    pub distance: u32,
}

/// A function with exactly one basic block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Instruction>,
    pub carried: Vec<Carried>,
}

impl Function {
    pub fn new(name: &str, params: Vec<Param>, body: Vec<Instruction>) -> Function {
        Function {
            name: name.to_string(),
            params,
            body,
            carried: Vec::new(),
        }
    }

    /// Index of the defining instruction for every instruction result.
    pub fn def_indices(&self) -> HashMap<&str, usize> {
        self.body
            .iter()
            .enumerate()
            .filter_map(|(i, inst)| inst.result.as_deref().map(|r| (r, i)))
            .collect()
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Declared type of a named value (argument or instruction result).
    pub fn type_of(&self, name: &str) -> Option<Type> {
        if let Some(p) = self.param(name) {
            return Some(p.ty);
        }
        self.body
            .iter()
            .find(|i| i.result.as_deref() == Some(name))
            .and_then(|i| i.ty)
    }

    pub fn value_type(&self, v: &Value) -> Option<Type> {
        match v {
            Value::Var(n) => self.type_of(n),
            Value::Const { ty, .. } => Some(*ty),
        }
    }

    /// Returns a name of the form `{base}`, `{base}.1`, ... not yet used in
    /// this function.
    pub fn fresh_name(&self, base: &str) -> String {
        let taken = |n: &str| {
            self.param(n).is_some() || self.body.iter().any(|i| i.result.as_deref() == Some(n))
        };
        if !taken(base) {
            return base.to_string();
        }
        (1..)
            .map(|k| format!("{base}.{k}"))
            .find(|n| !taken(n))
            .expect("unbounded name space")
    }

    pub fn count_opcode(&self, op: Opcode) -> usize {
        self.body.iter().filter(|i| i.opcode() == op).count()
    }
}
