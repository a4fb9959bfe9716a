use thiserror::Error;

use super::validate::{validate, Diagnostic};
use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("use of %{0} before its definition")]
    UseBeforeDef(String),
    #[error("%{0} is defined more than once")]
    DuplicateDef(String),
    #[error("width mismatch in instruction {0}")]
    WidthMismatch(usize),
    #[error("{0}")]
    Invalid(Diagnostic),
}

impl From<Diagnostic> for ParseError {
    fn from(d: Diagnostic) -> ParseError {
        match d {
            Diagnostic::UseBeforeDef { value, .. } => ParseError::UseBeforeDef(value),
            Diagnostic::DuplicateDef { value, .. } => ParseError::DuplicateDef(value),
            Diagnostic::WidthMismatch { index, .. } => ParseError::WidthMismatch(index),
            other => ParseError::Invalid(other),
        }
    }
}

/// Parses `.sir` text and checks every structural invariant.
pub fn parse(text: &str) -> Result<Function, ParseError> {
    let f = parse_unvalidated(text)?;
    match validate(&f).into_iter().next() {
        Some(d) => Err(d.into()),
        None => Ok(f),
    }
}

/// Parses `.sir` text without running the validator. Useful for producing
/// deliberately broken functions.
pub fn parse_unvalidated(text: &str) -> Result<Function, ParseError> {
    let tokens = lex(text)?;
    Parser { tokens, pos: 0 }.function()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Local(String),
    Global(String),
    Ident(String),
    Int(i128),
    Punct(&'static str),
    Newline,
    Carried(Carried),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, col, message: message.into() }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lno, line) in text.split('\n').enumerate() {
        let line_no = lno + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == ';' {
                let rest: String = chars[i..].iter().collect();
                if let Some(ann) = rest.strip_prefix(";;") {
                    let ann = ann.trim();
                    if ann.starts_with("carried") {
                        let carried = parse_carried(ann).ok_or_else(|| {
                            syntax(line_no, col, "expected `;; carried %src -> %dst distance N`")
                        })?;
                        out.push(Token { tok: Tok::Carried(carried), line: line_no, col });
                    }
                }
                break;
            }
            let tok = match c {
                '%' | '@' => {
                    let start = i + 1;
                    let mut j = start;
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    if j == start {
                        return Err(syntax(line_no, col, format!("expected a name after `{c}`")));
                    }
                    let name: String = chars[start..j].iter().collect();
                    i = j;
                    if c == '%' {
                        Tok::Local(name)
                    } else {
                        Tok::Global(name)
                    }
                }
                '-' if chars.get(i + 1) == Some(&'>') => {
                    i += 2;
                    Tok::Punct("->")
                }
                '-' | '0'..='9' => {
                    let mut j = i + 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    let lit: String = chars[i..j].iter().collect();
                    let v = lit
                        .parse::<i128>()
                        .map_err(|_| syntax(line_no, col, format!("bad integer literal `{lit}`")))?;
                    i = j;
                    Tok::Int(v)
                }
                '(' | ')' | '{' | '}' | '[' | ']' | ',' | '=' | ':' => {
                    i += 1;
                    Tok::Punct(match c {
                        '(' => "(",
                        ')' => ")",
                        '{' => "{",
                        '}' => "}",
                        '[' => "[",
                        ']' => "]",
                        ',' => ",",
                        '=' => "=",
                        _ => ":",
                    })
                }
                c if is_ident_char(c) => {
                    let mut j = i;
                    while j < chars.len() && is_ident_char(chars[j]) {
                        j += 1;
                    }
                    let word: String = chars[i..j].iter().collect();
                    i = j;
                    Tok::Ident(word)
                }
                other => return Err(syntax(line_no, col, format!("unexpected character `{other}`"))),
            };
            out.push(Token { tok, line: line_no, col });
        }
        out.push(Token { tok: Tok::Newline, line: line_no, col: chars.len() + 1 });
    }
    let (line, col) = out.last().map_or((1, 1), |t| (t.line, t.col));
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

fn parse_carried(ann: &str) -> Option<Carried> {
    let words: Vec<&str> = ann.split_whitespace().collect();
    match words.as_slice() {
        ["carried", src, "->", dst, "distance", d] => Some(Carried {
            src: src.strip_prefix('%')?.to_string(),
            dst: dst.strip_prefix('%')?.to_string(),
            distance: d.parse().ok()?,
        }),
        _ => None,
    }
}

fn parse_type(word: &str) -> Option<Type> {
    let sign = match word.chars().next()? {
        'i' => Signedness::Signed,
        'u' => Signedness::Unsigned,
        _ => return None,
    };
    let digits = &word[1..];
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Type::new(digits.parse().ok()?, sign)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(syntax(line, col, message))
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`"))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(w) if w == kw => {
                self.bump();
                Ok(())
            }
            _ => self.err(format!("expected `{kw}`")),
        }
    }

    /// Skips newlines, collecting any carried annotations on the way.
    fn skip_newlines(&mut self, carried: &mut Vec<Carried>) {
        loop {
            match self.peek() {
                Tok::Newline => {
                    self.bump();
                }
                Tok::Carried(c) => {
                    carried.push(c.clone());
                    self.bump();
                }
                _ => break,
            }
        }
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::Ident(w) => match parse_type(&w) {
                Some(t) => {
                    self.bump();
                    Ok(t)
                }
                None => self.err(format!("expected a type like `i8` or `u12`, found `{w}`")),
            },
            _ => self.err("expected a type"),
        }
    }

    fn local(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            Tok::Local(n) => Ok(n),
            _ => {
                self.pos -= 1;
                self.err("expected a `%value`")
            }
        }
    }

    fn int(&mut self) -> Result<i128, ParseError> {
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok(v)
            }
            _ => self.err("expected an integer"),
        }
    }

    /// A value whose constant form takes the type from context.
    fn value(&mut self, ty: Type) -> Result<Value, ParseError> {
        match self.peek().clone() {
            Tok::Local(n) => {
                self.bump();
                Ok(Value::Var(n))
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Value::Const { value: v, ty })
            }
            _ => self.err("expected a `%value` or integer constant"),
        }
    }

    /// A call argument: `%x` or a typed constant `i8 3`.
    fn call_arg(&mut self) -> Result<Value, ParseError> {
        if let Tok::Local(n) = self.peek().clone() {
            self.bump();
            return Ok(Value::Var(n));
        }
        let ty = self.ty()?;
        let value = self.int()?;
        Ok(Value::Const { value, ty })
    }

    fn mem_loc(&mut self) -> Result<MemLoc, ParseError> {
        let array = match self.peek().clone() {
            Tok::Global(n) => {
                self.bump();
                n
            }
            _ => return self.err("expected `@array[index]`"),
        };
        self.expect("[")?;
        let index = self.int()?;
        if index < 0 || index > u64::MAX as i128 {
            return self.err("array index must be a non-negative constant");
        }
        self.expect("]")?;
        Ok(MemLoc { array, index: index as u64 })
    }

    fn function(mut self) -> Result<Function, ParseError> {
        let mut carried = Vec::new();
        self.skip_newlines(&mut carried);
        self.keyword("func")?;
        let name = match self.bump() {
            Tok::Global(n) => n,
            _ => {
                self.pos -= 1;
                return self.err("expected `@name` after `func`");
            }
        };
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.eat(")") {
            loop {
                let pname = self.local()?;
                self.expect(":")?;
                let ty = self.ty()?;
                params.push(Param { name: pname, ty });
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect("{")?;
        let mut body = Vec::new();
        loop {
            self.skip_newlines(&mut carried);
            if self.eat("}") {
                break;
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.err("unexpected end of input, expected `}`");
            }
            body.push(self.instruction()?);
            match self.peek() {
                Tok::Newline | Tok::Carried(_) => {}
                Tok::Punct("}") => {}
                _ => return self.err("expected end of line after instruction"),
            }
        }
        self.skip_newlines(&mut carried);
        if !matches!(self.peek(), Tok::Eof) {
            return self.err("unexpected text after the function body");
        }
        Ok(Function { name, params, body, carried })
    }

    fn instruction(&mut self) -> Result<Instruction, ParseError> {
        let result = if let Tok::Local(n) = self.peek().clone() {
            self.bump();
            self.expect("=")?;
            Some(n)
        } else {
            None
        };
        let (line, col) = self.here();
        let op = match self.bump() {
            Tok::Ident(w) => Opcode::from_mnemonic(&w)
                .ok_or_else(|| syntax(line, col, format!("unknown opcode `{w}`")))?,
            _ => return Err(syntax(line, col, "expected an opcode")),
        };
        let needs_result = !matches!(op, Opcode::Store | Opcode::Ret | Opcode::Call);
        if needs_result && result.is_none() {
            return Err(syntax(line, col, format!("`{}` must define a value", op.mnemonic())));
        }
        if matches!(op, Opcode::Store | Opcode::Ret) && result.is_some() {
            return Err(syntax(line, col, format!("`{}` does not produce a value", op.mnemonic())));
        }
        let inst = match op {
            Opcode::Add | Opcode::Sub | Opcode::Mul => {
                let ty = self.ty()?;
                let lhs = self.value(ty)?;
                self.expect(",")?;
                let rhs = self.value(ty)?;
                let bop = match op {
                    Opcode::Add => BinOp::Add,
                    Opcode::Sub => BinOp::Sub,
                    _ => BinOp::Mul,
                };
                Instruction { result, ty: Some(ty), kind: InstKind::Binary { op: bop, lhs, rhs } }
            }
            Opcode::SExt | Opcode::ZExt | Opcode::Trunc => {
                let from = self.ty()?;
                let value = self.value(from)?;
                self.keyword("to")?;
                let to = self.ty()?;
                let cop = match op {
                    Opcode::SExt => CastOp::SExt,
                    Opcode::ZExt => CastOp::ZExt,
                    _ => CastOp::Trunc,
                };
                Instruction { result, ty: Some(to), kind: InstKind::Cast { op: cop, value, from } }
            }
            Opcode::Extract => {
                let ty = self.ty()?;
                let packed = Value::Var(self.local()?);
                self.expect(",")?;
                let lane = self.int()?;
                if !(0..=u32::MAX as i128).contains(&lane) {
                    return self.err("lane index out of range");
                }
                Instruction { result, ty: Some(ty), kind: InstKind::Extract { packed, lane: lane as u32 } }
            }
            Opcode::Load => {
                let ty = self.ty()?;
                let loc = self.mem_loc()?;
                Instruction { result, ty: Some(ty), kind: InstKind::Load { loc } }
            }
            Opcode::Store => {
                let ty = self.ty()?;
                let value = self.value(ty)?;
                self.expect(",")?;
                let loc = self.mem_loc()?;
                Instruction { result: None, ty: Some(ty), kind: InstKind::Store { value, loc } }
            }
            Opcode::Call => {
                let ty = match self.peek() {
                    Tok::Ident(_) => Some(self.ty()?),
                    _ => None,
                };
                if result.is_some() != ty.is_some() {
                    return Err(syntax(line, col, "a call has a result type iff it defines a value"));
                }
                let callee = match self.bump() {
                    Tok::Global(n) => n,
                    _ => {
                        self.pos -= 1;
                        return self.err("expected `@callee`");
                    }
                };
                self.expect("(")?;
                let mut args = Vec::new();
                if !self.eat(")") {
                    loop {
                        args.push(self.call_arg()?);
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Instruction { result, ty, kind: InstKind::Call { callee, args } }
            }
            Opcode::Ret => match self.peek() {
                Tok::Ident(_) => {
                    let ty = self.ty()?;
                    let value = self.value(ty)?;
                    Instruction { result: None, ty: Some(ty), kind: InstKind::Ret { value: Some(value) } }
                }
                _ => Instruction { result: None, ty: None, kind: InstKind::Ret { value: None } },
            },
        };
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHARED_FACTOR: &str = "\
; c[i] = a[i] * b, unrolled twice
func @shared_factor(%b: i8) {
  %a0 = load i8 @a[0]
  %c0 = mul i8 %a0, %b
  store i8 %c0, @c[0]
  %a1 = load i8 @a[1]
  %c1 = mul i8 %a1, %b
  store i8 %c1, @c[1]
}
";

    #[test]
    fn parses_unrolled_multiply_kernel() {
        let f = parse(SHARED_FACTOR).unwrap();
        assert_eq!(f.body.len(), 6);
        assert_eq!(f.params.len(), 1);
        assert_eq!(f.body[1].opcode(), Opcode::Mul);
        assert_eq!(f.body[2].mem_loc().unwrap().index, 0);
    }

    #[test]
    fn parses_lone_ret() {
        let f = parse("func @e() { ret }").unwrap();
        assert_eq!(f.body.len(), 1);
        assert_eq!(f.body[0].opcode(), Opcode::Ret);
    }

    #[test]
    fn rejects_use_before_def() {
        let text = "func @f(%z: i8) {\n  %x = add i8 %y, %z\n  %y = add i8 %z, %z\n}\n";
        assert_eq!(parse(text), Err(ParseError::UseBeforeDef("y".into())));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("func @f() {\n  %x = frob i8 1, 2\n}\n").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reads_carried_annotations_anywhere() {
        let text = "func @f(%x: i8) {\n  %a = add i8 %x, 1 ;; carried %a -> %a distance 2\n}\n;; carried %a -> %a distance 1\n";
        let f = parse(text).unwrap();
        assert_eq!(f.carried.len(), 2);
        assert_eq!(f.carried[0].distance, 2);
        assert!(parse("func @f() {\n}\n;; carried %a -> b\n").is_err());
    }

    #[test]
    fn typed_call_arguments() {
        let f = parse("func @f(%x: i8) {\n  %r = call i48 @silvia.mul2x8(%x, i8 -3, %x)\n  %p = extract i16 %r, 1\n  ret i16 %p\n}\n").unwrap();
        let args = f.body[0].operands();
        assert_eq!(args[1], &Value::Const { value: -3, ty: Type::signed(8) });
    }
}
