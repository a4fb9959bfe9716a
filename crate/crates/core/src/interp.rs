//! Reference interpreter and randomized equivalence checking.
//!
//! Arithmetic wraps at the result width. `silvia.*` calls run on the DSP
//! emulator, so a packed function and its scalar original can be compared
//! directly on the same inputs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::effective_width;
use crate::dsp::{self, DspError, MadChainParams};
use crate::intrinsic::Intrinsic;
use crate::ir::{BinOp, CastOp, Function, InstKind, Signedness, Type, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("call to unknown function @{0}")]
    UnknownCallee(String),
    #[error("read of uninitialized @{array}[{index}]")]
    UninitializedRead { array: String, index: u64 },
    #[error("value {value} of %{name} does not fit {ty}")]
    WidthViolation { name: String, value: i128, ty: Type },
    #[error("no value supplied for argument %{0}")]
    MissingArgument(String),
    #[error("malformed intrinsic call to @{0}")]
    BadIntrinsic(String),
    #[error("DSP emulation failed: {0}")]
    Dsp(#[from] DspError),
    #[error("signatures differ: {0}")]
    SignatureMismatch(String),
}

/// Input state: argument values and initial array contents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Env {
    pub scalars: BTreeMap<String, i128>,
    pub arrays: BTreeMap<String, Vec<i128>>,
}

/// What a run exposes: final array contents and the return value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub arrays: BTreeMap<String, Vec<Option<i128>>>,
    pub ret: Option<i128>,
}

#[derive(Debug, Clone)]
enum Slot {
    Scalar(i128),
    Lanes(Vec<i128>),
}

/// Element type and length of every array the function touches.
pub fn array_shapes(f: &Function) -> BTreeMap<String, (Type, u64)> {
    let mut shapes: BTreeMap<String, (Type, u64)> = BTreeMap::new();
    for inst in &f.body {
        if let (Some(loc), Some(ty)) = (inst.mem_loc(), inst.ty) {
            let e = shapes.entry(loc.array.clone()).or_insert((ty, 0));
            e.1 = e.1.max(loc.index + 1);
        }
    }
    shapes
}

/// Arrays that are read by at least one load.
fn input_arrays(f: &Function) -> BTreeMap<String, (Type, u64)> {
    let mut shapes = array_shapes(f);
    shapes.retain(|name, _| {
        f.body
            .iter()
            .any(|i| matches!(&i.kind, InstKind::Load { loc } if &loc.array == name))
    });
    shapes
}

fn cast(op: CastOp, from: Type, to: Type, v: i128) -> i128 {
    let bits = match op {
        CastOp::SExt => Type::signed(from.bits()).wrap(v),
        CastOp::ZExt => Type::unsigned(from.bits()).wrap(v),
        CastOp::Trunc => v,
    };
    to.wrap(bits)
}

fn to_i64(v: i128) -> Result<i64, InterpError> {
    i64::try_from(v).map_err(|_| InterpError::Dsp(DspError::OperandOverflow { value: i64::MAX, bits: 64 }))
}

/// Semantic parameters of one intrinsic call, fixed by the effective widths
/// of its operands.
#[derive(Debug, Clone, Copy)]
enum CallSpec {
    SimdAdd { mode: dsp::SimdAddMode, op: dsp::AddOp },
    Chain(MadChainParams),
    Quad { b_signed: bool },
}

fn call_spec(f: &Function, callee: &str, args: &[Value]) -> Result<CallSpec, InterpError> {
    let intr = Intrinsic::parse(callee).ok_or_else(|| InterpError::UnknownCallee(callee.to_string()))?;
    if args.len() != intr.arity() {
        return Err(InterpError::BadIntrinsic(callee.to_string()));
    }
    Ok(match intr {
        Intrinsic::SimdAdd { mode, op } => CallSpec::SimdAdd { mode, op },
        Intrinsic::MadChain { len } => {
            let ew = |vs: &[Value]| vs.iter().map(|v| effective_width(v, f)).collect::<Vec<_>>();
            CallSpec::Chain(MadChainParams::for_operands(
                &ew(&args[..len]),
                &ew(&args[len..2 * len]),
                &ew(&args[2 * len..]),
            ))
        }
        Intrinsic::Mul4x4 => CallSpec::Quad { b_signed: effective_width(&args[4], f).1.is_signed() },
    })
}

fn eval_call(spec: CallSpec, vals: &[i128]) -> Result<Vec<i128>, InterpError> {
    let vals: Vec<i64> = vals.iter().map(|&v| to_i64(v)).collect::<Result<_, _>>()?;
    let widen = |v: Vec<i64>| v.into_iter().map(i128::from).collect();
    match spec {
        CallSpec::SimdAdd { mode, op } => {
            let lanes = mode.lanes();
            let out = dsp::simd_add(mode, &vals[..lanes], &vals[lanes..], op, Signedness::Signed)?;
            Ok(widen(out))
        }
        CallSpec::Chain(params) => {
            let len = params.len;
            let word = dsp::mad_chain_pack(&vals[..len], &vals[len..2 * len], &vals[2 * len..], &params)?;
            let (pa, pb) = dsp::mad_chain_extract(word, &params);
            Ok(vec![pa as i128, pb as i128])
        }
        CallSpec::Quad { b_signed } => {
            let a = [vals[0], vals[1], vals[2], vals[3]];
            let (out, fix) = dsp::quad4_pack(a, vals[4], b_signed)?;
            Ok(widen(dsp::quad4_extract(out, fix, b_signed).to_vec()))
        }
    }
}

/// A function prepared for repeated execution.
#[derive(Debug, Clone)]
pub struct Program<'f> {
    f: &'f Function,
    calls: Vec<Option<Result<CallSpec, InterpError>>>,
    shapes: BTreeMap<String, (Type, u64)>,
}

impl<'f> Program<'f> {
    pub fn new(f: &'f Function) -> Program<'f> {
        let calls = f
            .body
            .iter()
            .map(|i| match &i.kind {
                InstKind::Call { callee, args } => Some(call_spec(f, callee, args)),
                _ => None,
            })
            .collect();
        Program { f, calls, shapes: array_shapes(f) }
    }

    /// Executes the function once.
    pub fn run(&self, env: &Env) -> Result<Observation, InterpError> {
        let f = self.f;
        let mut slots: HashMap<&str, Slot> = HashMap::with_capacity(f.body.len() + f.params.len());
        for p in &f.params {
            let v = *env
                .scalars
                .get(&p.name)
                .ok_or_else(|| InterpError::MissingArgument(p.name.clone()))?;
            if !p.ty.fits(v) {
                return Err(InterpError::WidthViolation { name: p.name.clone(), value: v, ty: p.ty });
            }
            slots.insert(&p.name, Slot::Scalar(v));
        }
        let mut memory: BTreeMap<String, Vec<Option<i128>>> = BTreeMap::new();
        for (name, (ty, len)) in &self.shapes {
            let init = env.arrays.get(name);
            let len = (*len as usize).max(init.map_or(0, Vec::len));
            let cells = (0..len)
                .map(|i| init.and_then(|a| a.get(i).copied()))
                .collect::<Vec<_>>();
            for c in cells.iter().flatten() {
                if !ty.fits(*c) {
                    return Err(InterpError::WidthViolation { name: name.clone(), value: *c, ty: *ty });
                }
            }
            memory.insert(name.clone(), cells);
        }
        // Arrays this function no longer reads are still part of the state.
        for (name, contents) in &env.arrays {
            memory
                .entry(name.clone())
                .or_insert_with(|| contents.iter().copied().map(Some).collect());
        }

        let scalar = |slots: &HashMap<&str, Slot>, v: &Value| -> i128 {
            match v {
                Value::Const { value, .. } => *value,
                Value::Var(n) => match slots.get(n.as_str()) {
                    Some(Slot::Scalar(x)) => *x,
                    // validated IR never reads a lane bundle as a scalar
                    _ => 0,
                },
            }
        };

        let mut ret = None;
        for (idx, inst) in f.body.iter().enumerate() {
            let ty = inst.ty;
            let result = match &inst.kind {
                InstKind::Binary { op, lhs, rhs } => {
                    let (a, b) = (scalar(&slots, lhs), scalar(&slots, rhs));
                    let t = ty.expect("typed binary");
                    let v = match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                    };
                    Some(Slot::Scalar(t.wrap(v)))
                }
                InstKind::Cast { op, value, from } => {
                    let v = scalar(&slots, value);
                    Some(Slot::Scalar(cast(*op, *from, ty.expect("typed cast"), v)))
                }
                InstKind::Extract { packed, lane } => {
                    let t = ty.expect("typed extract");
                    let lanes = match packed.name().and_then(|n| slots.get(n)) {
                        Some(Slot::Lanes(l)) => l,
                        _ => return Err(InterpError::BadIntrinsic(format!("extract at {idx}"))),
                    };
                    let v = lanes
                        .get(*lane as usize)
                        .ok_or_else(|| InterpError::BadIntrinsic(format!("lane {lane} at {idx}")))?;
                    Some(Slot::Scalar(t.wrap(*v)))
                }
                InstKind::Load { loc } => {
                    let v = memory
                        .get(&loc.array)
                        .and_then(|a| a.get(loc.index as usize).copied().flatten())
                        .ok_or_else(|| InterpError::UninitializedRead { array: loc.array.clone(), index: loc.index })?;
                    Some(Slot::Scalar(v))
                }
                InstKind::Store { value, loc } => {
                    let v = ty.expect("typed store").wrap(scalar(&slots, value));
                    let cells = memory.get_mut(&loc.array).expect("shape covers every access");
                    cells[loc.index as usize] = Some(v);
                    None
                }
                InstKind::Call { args, .. } => {
                    let spec = self.calls[idx].clone().expect("call spec prepared")?;
                    let vals: Vec<i128> = args.iter().map(|a| scalar(&slots, a)).collect();
                    Some(Slot::Lanes(eval_call(spec, &vals)?))
                }
                InstKind::Ret { value } => {
                    ret = value.as_ref().map(|v| scalar(&slots, v));
                    None
                }
            };
            if let (Some(r), Some(slot)) = (&inst.result, result) {
                slots.insert(r, slot);
            }
        }
        Ok(Observation { arrays: memory, ret })
    }
}

/// Executes the function once.
pub fn run(f: &Function, env: &Env) -> Result<Observation, InterpError> {
    Program::new(f).run(env)
}

/// Deterministic edge-case input families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    Zero,
    Max,
    Min,
    /// Maximum and minimum alternating by position.
    Alternating,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::Zero, Corner::Max, Corner::Min, Corner::Alternating];

    fn pick(self, ty: Type, pos: usize) -> i128 {
        match self {
            Corner::Zero => 0,
            Corner::Max => ty.max(),
            Corner::Min => ty.min(),
            Corner::Alternating if pos.is_multiple_of(2) => ty.max(),
            Corner::Alternating => ty.min(),
        }
    }
}

/// Argument and input-array layout shared by two functions under comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<(String, Type)>,
    pub arrays: BTreeMap<String, (Type, u64)>,
}

impl Signature {
    pub fn of(f: &Function) -> Signature {
        Signature {
            params: f.params.iter().map(|p| (p.name.clone(), p.ty)).collect(),
            arrays: input_arrays(f),
        }
    }

    /// Merges the input arrays of two functions; parameters must agree.
    pub fn unify(a: &Function, b: &Function) -> Result<Signature, InterpError> {
        let (sa, sb) = (Signature::of(a), Signature::of(b));
        if sa.params != sb.params {
            return Err(InterpError::SignatureMismatch(format!(
                "parameters of @{} and @{} differ",
                a.name, b.name
            )));
        }
        let mut arrays = sa.arrays;
        for (name, (ty, len)) in sb.arrays {
            let e = arrays.entry(name.clone()).or_insert((ty, len));
            if e.0 != ty {
                return Err(InterpError::SignatureMismatch(format!("element type of @{name} differs")));
            }
            e.1 = e.1.max(len);
        }
        Ok(Signature { params: sa.params, arrays })
    }

    pub fn corner_env(&self, corner: Corner) -> Env {
        let mut pos = 0;
        let mut next = |ty: Type| {
            let v = corner.pick(ty, pos);
            pos += 1;
            v
        };
        let scalars = self.params.iter().map(|(n, t)| (n.clone(), next(*t))).collect();
        let arrays = self
            .arrays
            .iter()
            .map(|(n, (t, len))| (n.clone(), (0..*len).map(|_| next(*t)).collect()))
            .collect();
        Env { scalars, arrays }
    }

    /// Uniform over each value's declared range.
    pub fn random_env(&self, rng: &mut impl Rng) -> Env {
        let scalars = self
            .params
            .iter()
            .map(|(n, t)| (n.clone(), rng.gen_range(t.min()..=t.max())))
            .collect();
        let arrays = self
            .arrays
            .iter()
            .map(|(n, (t, len))| (n.clone(), (0..*len).map(|_| rng.gen_range(t.min()..=t.max())).collect()))
            .collect();
        Env { scalars, arrays }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub env: Env,
    pub left: Observation,
    pub right: Result<Observation, InterpError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent { runs: usize },
    Differs(Box<Counterexample>),
}

impl Equivalence {
    pub fn holds(&self) -> bool {
        matches!(self, Equivalence::Equivalent { .. })
    }
}

/// Compares the observable behavior of `a` and `b` on the corner inputs and
/// `trials` seeded random inputs. `a` is the reference; an error while
/// running it is reported as an error, an error in `b` as a difference.
pub fn equivalent(a: &Function, b: &Function, trials: usize, seed: u64) -> Result<Equivalence, InterpError> {
    let sig = Signature::unify(a, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envs = Corner::ALL
        .iter()
        .map(|c| sig.corner_env(*c))
        .chain((0..trials).map(|_| sig.random_env(&mut rng)).collect::<Vec<_>>());
    let (pa, pb) = (Program::new(a), Program::new(b));
    let mut runs = 0;
    for env in envs {
        let left = pa.run(&env)?;
        let right = pb.run(&env);
        runs += 1;
        if right.as_ref() != Ok(&left) {
            return Ok(Equivalence::Differs(Box::new(Counterexample { env, left, right })));
        }
    }
    Ok(Equivalence::Equivalent { runs })
}

impl fmt::Display for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in &self.scalars {
            writeln!(f, "{n} = {v}")?;
        }
        for (n, vs) in &self.arrays {
            let items: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{n} = [{}]", items.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("env line {line}: {message}")]
pub struct EnvParseError {
    pub line: usize,
    pub message: String,
}

impl std::str::FromStr for Env {
    type Err = EnvParseError;

    /// `name = value` and `array = [v, v, ...]` lines; `;` starts a comment.
    fn from_str(s: &str) -> Result<Env, EnvParseError> {
        let mut env = Env::default();
        for (i, raw) in s.lines().enumerate() {
            let err = |message: &str| EnvParseError { line: i + 1, message: message.to_string() };
            let line = raw.split(';').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, rhs) = line.split_once('=').ok_or_else(|| err("expected `name = value`"))?;
            let name = name.trim().trim_start_matches(['%', '@']).to_string();
            let rhs = rhs.trim();
            if let Some(inner) = rhs.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let vals = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<i128>().map_err(|_| err("bad integer in array")))
                    .collect::<Result<Vec<_>, _>>()?;
                env.arrays.insert(name, vals);
            } else {
                let v = rhs.parse::<i128>().map_err(|_| err("bad integer"))?;
                env.scalars.insert(name, v);
            }
        }
        Ok(env)
    }
}
