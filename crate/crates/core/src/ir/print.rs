use std::fmt::Write;

use super::*;

fn value(v: &Value) -> String {
    match v {
        Value::Var(n) => format!("%{n}"),
        Value::Const { value, .. } => value.to_string(),
    }
}

fn call_arg(v: &Value) -> String {
    match v {
        Value::Var(n) => format!("%{n}"),
        Value::Const { value, ty } => format!("{ty} {value}"),
    }
}

fn loc(l: &MemLoc) -> String {
    format!("@{}[{}]", l.array, l.index)
}

fn instruction(inst: &Instruction) -> String {
    let ty = inst.ty.map(|t| t.to_string()).unwrap_or_default();
    let body = match &inst.kind {
        InstKind::Binary { lhs, rhs, .. } => {
            format!("{} {ty} {}, {}", inst.opcode().mnemonic(), value(lhs), value(rhs))
        }
        InstKind::Cast { value: v, from, .. } => {
            format!("{} {from} {} to {ty}", inst.opcode().mnemonic(), value(v))
        }
        InstKind::Extract { packed, lane } => format!("extract {ty} {}, {lane}", value(packed)),
        InstKind::Load { loc: l } => format!("load {ty} {}", loc(l)),
        InstKind::Store { value: v, loc: l } => format!("store {ty} {}, {}", value(v), loc(l)),
        InstKind::Call { callee, args } => {
            let args: Vec<String> = args.iter().map(call_arg).collect();
            match inst.ty {
                Some(t) => format!("call {t} @{callee}({})", args.join(", ")),
                None => format!("call @{callee}({})", args.join(", ")),
            }
        }
        InstKind::Ret { value: Some(v) } => format!("ret {ty} {}", value(v)),
        InstKind::Ret { value: None } => "ret".to_string(),
    };
    match &inst.result {
        Some(r) => format!("%{r} = {body}"),
        None => body,
    }
}

/// Canonical text form. Parsing the output yields a structurally equal
/// function.
pub fn print(f: &Function) -> String {
    let mut out = String::new();
    let params: Vec<String> = f.params.iter().map(|p| format!("%{}: {}", p.name, p.ty)).collect();
    let _ = writeln!(out, "func @{}({}) {{", f.name, params.join(", "));
    for inst in &f.body {
        let _ = writeln!(out, "  {}", instruction(inst));
    }
    out.push_str("}\n");
    for c in &f.carried {
        let _ = writeln!(out, ";; carried %{} -> %{} distance {}", c.src, c.dst, c.distance);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn constant_only_add() {
        let f = parse("func @k() {\n%x = add i8 3, -4\nret\n}").unwrap();
        assert_eq!(print(&f), "func @k() {\n  %x = add i8 3, -4\n  ret\n}\n");
    }

    #[test]
    fn round_trip_covers_every_form() {
        let text = "\
func @all(%x: i8, %y: u4) {
  %a = add i8 %x, 1
  %s = sub i8 %a, %x
  %m = mul i8 %s, %a
  %w = zext u4 %y to i16
  %v = sext i8 %m to i16
  %t = trunc i16 %v to u4
  %l = load u12 @arr[7]
  store u12 %l, @out[0]
  %r = call i48 @silvia.mul2x8(%x, %a, i8 5)
  %e = extract i16 %r, 1
  call @sink(%e)
  ret i16 %w
}
;; carried %a -> %x distance 3
";
        let f = parse(text).unwrap();
        assert_eq!(print(&f), text);
        assert_eq!(parse(&print(&f)).unwrap(), f);
    }
}
