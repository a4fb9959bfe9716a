//! Use-def chains, ordering constraints and insertion intervals.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::ir::{CastOp, Function, InstKind, Signedness, Type, Value, Width};

/// Definition site and uses of one SSA value. `def` is `None` for function
/// arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseDef {
    pub def: Option<usize>,
    pub uses: Vec<usize>,
}

impl UseDef {
    /// Definition index with arguments mapped to -1.
    pub fn def_index(&self) -> i64 {
        self.def.map_or(-1, |d| d as i64)
    }
}

pub fn use_def_chains(f: &Function) -> BTreeMap<String, UseDef> {
    let mut chains: BTreeMap<String, UseDef> = f
        .params
        .iter()
        .map(|p| (p.name.clone(), UseDef { def: None, uses: Vec::new() }))
        .collect();
    for (i, inst) in f.body.iter().enumerate() {
        if let Some(r) = &inst.result {
            chains.insert(r.clone(), UseDef { def: Some(i), uses: Vec::new() });
        }
    }
    for (i, inst) in f.body.iter().enumerate() {
        let mut seen = HashSet::new();
        for n in inst.used_names() {
            if seen.insert(n) {
                if let Some(ud) = chains.get_mut(n) {
                    ud.uses.push(i);
                }
            }
        }
    }
    chains
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OrderReason {
    DataDep,
    MemAlias,
    CallBarrier,
    /// Everything precedes the block's `ret`.
    Terminator,
}

/// `before` must stay ahead of `after` in any legal reordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderConstraint {
    pub before: usize,
    pub after: usize,
    pub reason: OrderReason,
}

/// Every pairwise ordering constraint of the block, sorted and deduplicated.
///
/// Distinct arrays never alias and neither do distinct constant indices of
/// one array. Loads and stores of the same cell are ordered whenever at least
/// one of them is a store. Opaque calls are barriers for memory and for each
/// other; `silvia.*` intrinsics are pure.
pub fn order_constraints(f: &Function) -> Vec<OrderConstraint> {
    let mut out = BTreeSet::new();
    let defs = f.def_indices();
    for (j, inst) in f.body.iter().enumerate() {
        for n in inst.used_names() {
            if let Some(&i) = defs.get(n) {
                if i < j {
                    out.insert(OrderConstraint { before: i, after: j, reason: OrderReason::DataDep });
                }
            }
        }
    }
    let body = &f.body;
    for j in 0..body.len() {
        for i in 0..j {
            let (a, b) = (&body[i], &body[j]);
            if let (Some(la), Some(lb)) = (a.mem_loc(), b.mem_loc()) {
                let writes = matches!(a.kind, InstKind::Store { .. }) || matches!(b.kind, InstKind::Store { .. });
                if writes && la == lb {
                    out.insert(OrderConstraint { before: i, after: j, reason: OrderReason::MemAlias });
                }
            }
            let touches = |x: &crate::ir::Instruction| x.mem_loc().is_some() || x.is_opaque_call();
            if (a.is_opaque_call() && touches(b)) || (b.is_opaque_call() && touches(a)) {
                out.insert(OrderConstraint { before: i, after: j, reason: OrderReason::CallBarrier });
            }
            if matches!(b.kind, InstKind::Ret { .. }) {
                out.insert(OrderConstraint { before: i, after: j, reason: OrderReason::Terminator });
            }
        }
    }
    out.into_iter().collect()
}

/// Last-definition / first-use window of an entity. A packed call may sit at
/// any index in `last_def + 1 ..= first_use`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub last_def: i64,
    pub first_use: i64,
}

impl Interval {
    pub fn has_room(&self) -> bool {
        self.last_def < self.first_use
    }

    /// Earliest legal insertion index.
    pub fn insertion_index(&self) -> Option<usize> {
        self.has_room().then(|| (self.last_def + 1) as usize)
    }

    pub fn intersection(&self, other: &Interval) -> Interval {
        Interval {
            last_def: self.last_def.max(other.last_def),
            first_use: self.first_use.min(other.first_use),
        }
    }
}

pub fn intervals_intersect(a: &Interval, b: &Interval) -> bool {
    a.last_def < b.first_use && b.last_def < a.first_use
}

/// Interval of the entity made of the instructions at `nodes`. Def-use edges
/// internal to the entity are ignored; results without external uses push
/// `first_use` to the block length.
pub fn entity_interval(nodes: &[usize], f: &Function) -> Interval {
    let members: HashSet<usize> = nodes.iter().copied().collect();
    let chains = use_def_chains(f);
    let mut last_def = -1i64;
    let mut first_use = f.body.len() as i64;
    for &n in nodes {
        let inst = &f.body[n];
        for name in inst.used_names() {
            if let Some(ud) = chains.get(name) {
                if ud.def.is_some_and(|d| members.contains(&d)) {
                    continue;
                }
                last_def = last_def.max(ud.def_index());
            }
        }
        if let Some(ud) = inst.result.as_deref().and_then(|r| chains.get(r)) {
            for &u in &ud.uses {
                if !members.contains(&u) {
                    first_use = first_use.min(u as i64);
                }
            }
        }
    }
    Interval { last_def, first_use }
}

/// Numeric range a value can take, tightened through cast chains.
fn value_range(v: &Value, f: &Function, depth: usize) -> (i128, i128) {
    let name = match v {
        Value::Const { value, .. } => return (*value, *value),
        Value::Var(n) => n,
    };
    let full = |t: Type| (t.min(), t.max());
    if let Some(p) = f.param(name) {
        return full(p.ty);
    }
    let Some(inst) = f.body.iter().find(|i| i.result.as_deref() == Some(name.as_str())) else {
        return (0, 0);
    };
    let Some(to) = inst.ty else { return (0, 0) };
    let InstKind::Cast { op, value, from } = &inst.kind else {
        return full(to);
    };
    if depth > f.body.len() {
        return full(to);
    }
    let (lo, hi) = value_range(value, f, depth + 1);
    let within = |(lo, hi): (i128, i128), t: Type| t.fits(lo) && t.fits(hi);
    let fb = from.bits();
    match op {
        CastOp::SExt => {
            let as_signed = Type::signed(fb);
            let r = if within((lo, hi), as_signed) { (lo, hi) } else { full(as_signed) };
            if r.0 < 0 && !to.sign.is_signed() {
                full(to)
            } else {
                r
            }
        }
        CastOp::ZExt => {
            if lo >= 0 {
                (lo, hi)
            } else {
                full(Type::unsigned(fb))
            }
        }
        CastOp::Trunc => {
            if within((lo, hi), to) {
                (lo, hi)
            } else {
                full(to)
            }
        }
    }
}

fn bits_for_unsigned(hi: i128) -> u32 {
    (128 - hi.leading_zeros()).max(1)
}

fn range_to_width((lo, hi): (i128, i128)) -> (Width, Signedness) {
    if lo >= 0 {
        let bits = bits_for_unsigned(hi).min(Width::MAX);
        (Width::new(bits).expect("bits in range"), Signedness::Unsigned)
    } else {
        // Smallest b with -2^(b-1) <= lo and hi < 2^(b-1).
        let neg = bits_for_unsigned(-(lo + 1)) + 1;
        let pos = if hi >= 0 { bits_for_unsigned(hi) + 1 } else { 1 };
        let bits = neg.max(pos).min(Width::MAX);
        (Width::new(bits).expect("bits in range"), Signedness::Signed)
    }
}

/// Narrowest (width, signedness) that holds every value `v` can take.
///
/// Plain arguments and instruction results report their declared type.
/// Extension and truncation chains are walked so that, for example, a
/// `zext` of an unsigned 4-bit value reports `(4, Unsigned)` regardless of
/// the container width.
pub fn effective_width(v: &Value, f: &Function) -> (Width, Signedness) {
    let declared = match v {
        Value::Var(n) => f.type_of(n),
        Value::Const { .. } => None,
    };
    let is_cast = |n: &str| {
        f.body
            .iter()
            .any(|i| i.result.as_deref() == Some(n) && matches!(i.kind, InstKind::Cast { .. }))
    };
    match (v, declared) {
        (Value::Var(n), Some(t)) if !is_cast(n) => (t.width, t.sign),
        _ => range_to_width(value_range(v, f, 0)),
    }
}
