use std::collections::{HashMap, HashSet};
use std::fmt;

use super::*;

/// One violated structural invariant. `index` is the instruction position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    DuplicateDef { value: String, index: Option<usize> },
    UseBeforeDef { value: String, index: usize },
    UndefinedValue { value: String, index: usize },
    WidthMismatch { index: usize, detail: String },
    BadCast { index: usize, detail: String },
    ConstantOverflow { index: usize, value: i128 },
    ArrayTypeConflict { array: String, index: usize },
    BadExtract { index: usize },
    RetNotLast { index: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::DuplicateDef { value, .. } => write!(f, "%{value} is defined more than once"),
            Diagnostic::UseBeforeDef { value, index } => {
                write!(f, "instruction {index} uses %{value} before its definition")
            }
            Diagnostic::UndefinedValue { value, index } => {
                write!(f, "instruction {index} uses undefined %{value}")
            }
            Diagnostic::WidthMismatch { index, detail } => {
                write!(f, "width mismatch in instruction {index}: {detail}")
            }
            Diagnostic::BadCast { index, detail } => write!(f, "bad cast in instruction {index}: {detail}"),
            Diagnostic::ConstantOverflow { index, value } => {
                write!(f, "constant {value} in instruction {index} does not fit its type")
            }
            Diagnostic::ArrayTypeConflict { array, index } => {
                write!(f, "instruction {index} accesses @{array} with a conflicting element type")
            }
            Diagnostic::BadExtract { index } => {
                write!(f, "instruction {index} extracts from a value that is not a call result")
            }
            Diagnostic::RetNotLast { index } => write!(f, "ret at {index} is not the last instruction"),
        }
    }
}

/// Checks every type and SSA invariant. Returns one diagnostic per violation.
pub fn validate(f: &Function) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let mut defined_at: HashMap<&str, Option<usize>> = HashMap::new();
    for p in &f.params {
        if defined_at.insert(&p.name, None).is_some() {
            diags.push(Diagnostic::DuplicateDef { value: p.name.clone(), index: None });
        }
    }
    for (i, inst) in f.body.iter().enumerate() {
        if let Some(r) = &inst.result {
            if defined_at.contains_key(r.as_str()) {
                diags.push(Diagnostic::DuplicateDef { value: r.clone(), index: Some(i) });
            } else {
                defined_at.insert(r, Some(i));
            }
        }
    }

    let types: HashMap<&str, Type> = f
        .params
        .iter()
        .map(|p| (p.name.as_str(), p.ty))
        .chain(
            f.body
                .iter()
                .filter_map(|i| Some((i.result.as_deref()?, i.ty?))),
        )
        .collect();
    let call_results: HashSet<&str> = f
        .body
        .iter()
        .filter(|i| i.callee().is_some())
        .filter_map(|i| i.result.as_deref())
        .collect();

    let mut array_types: HashMap<&str, Type> = HashMap::new();
    let last = f.body.len().saturating_sub(1);

    for (i, inst) in f.body.iter().enumerate() {
        for v in inst.operands() {
            match v {
                Value::Var(n) => match defined_at.get(n.as_str()) {
                    None => diags.push(Diagnostic::UndefinedValue { value: n.clone(), index: i }),
                    Some(Some(d)) if *d >= i => {
                        diags.push(Diagnostic::UseBeforeDef { value: n.clone(), index: i })
                    }
                    _ => {}
                },
                Value::Const { value, ty } => {
                    if !ty.fits(*value) {
                        diags.push(Diagnostic::ConstantOverflow { index: i, value: *value });
                    }
                }
            }
        }
        let width_of = |v: &Value| -> Option<u32> {
            match v {
                Value::Var(n) => types.get(n.as_str()).map(|t| t.bits()),
                Value::Const { ty, .. } => Some(ty.bits()),
            }
        };
        let mismatch = |detail: String| Diagnostic::WidthMismatch { index: i, detail };

        match &inst.kind {
            InstKind::Binary { lhs, rhs, .. } => {
                let w = inst.ty.map(|t| t.bits());
                for v in [lhs, rhs] {
                    if let (Some(vw), Some(w)) = (width_of(v), w) {
                        if vw != w {
                            diags.push(mismatch(format!("operand is {vw} bits, result is {w}")));
                            break;
                        }
                    }
                }
            }
            InstKind::Cast { op, value, from } => {
                if let Some(vw) = width_of(value) {
                    if vw != from.bits() {
                        diags.push(mismatch(format!("operand is {vw} bits, cast says {}", from.bits())));
                    }
                }
                if let Some(to) = inst.ty {
                    let ok = match op {
                        CastOp::SExt | CastOp::ZExt => to.bits() > from.bits(),
                        CastOp::Trunc => to.bits() < from.bits(),
                    };
                    if !ok {
                        diags.push(Diagnostic::BadCast {
                            index: i,
                            detail: format!("{} from {} to {}", inst.opcode().mnemonic(), from, to),
                        });
                    }
                }
            }
            InstKind::Store { value, loc } => {
                if let (Some(vw), Some(t)) = (width_of(value), inst.ty) {
                    if vw != t.bits() {
                        diags.push(mismatch(format!("stored value is {vw} bits, store says {}", t.bits())));
                    }
                }
                if let Some(t) = inst.ty {
                    check_array(&mut array_types, &mut diags, &loc.array, t, i);
                }
            }
            InstKind::Load { loc } => {
                if let Some(t) = inst.ty {
                    check_array(&mut array_types, &mut diags, &loc.array, t, i);
                }
            }
            InstKind::Ret { value: Some(v) } => {
                if let (Some(vw), Some(t)) = (width_of(v), inst.ty) {
                    if vw != t.bits() {
                        diags.push(mismatch(format!("returned value is {vw} bits, ret says {}", t.bits())));
                    }
                }
            }
            InstKind::Extract { packed, .. } => {
                if packed.name().is_some_and(|n| !call_results.contains(n)) {
                    diags.push(Diagnostic::BadExtract { index: i });
                }
            }
            InstKind::Ret { value: None } | InstKind::Call { .. } => {}
        }
        if inst.opcode() == Opcode::Ret && i != last {
            diags.push(Diagnostic::RetNotLast { index: i });
        }
    }
    diags
}

fn check_array<'a>(
    array_types: &mut HashMap<&'a str, Type>,
    diags: &mut Vec<Diagnostic>,
    array: &'a str,
    ty: Type,
    index: usize,
) {
    match array_types.get(array) {
        Some(t) if *t != ty => diags.push(Diagnostic::ArrayTypeConflict { array: array.to_string(), index }),
        Some(_) => {}
        None => {
            array_types.insert(array, ty);
        }
    }
}
