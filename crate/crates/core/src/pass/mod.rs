//! Generic packing driver shared by the add and multiply-add passes.
//!
//! A pass supplies [`PassHooks`]; [`run_on_block`] does the rest: collect
//! candidates, sink their uses as late as possible, group them into tuples,
//! rewrite every full tuple as one intrinsic call and clean up.

pub mod add;
pub mod muladd;

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::analysis::{entity_interval, intervals_intersect, order_constraints, Interval};
use crate::intrinsic::Intrinsic;
use crate::ir::{validate, Diagnostic, Function, Instruction, Type, Value};

pub use add::{AddConfig, AddPass};
pub use muladd::{MuladdConfig, MuladdPass};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    AddSub,
    MadTree,
}

/// An instruction, or a tree of instructions, eligible for packing.
///
/// Members are named by their SSA results so that a candidate stays valid
/// while the block is reordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub kind: CandidateKind,
    /// Every instruction of the candidate, root last.
    pub nodes: Vec<String>,
    pub root: String,
    /// Multiplication leaves of a MAD tree; the root itself for an add.
    pub leaves: Vec<String>,
    /// Result type of the root.
    pub ty: Type,
}

impl Candidate {
    pub fn indices(&self, f: &Function) -> Vec<usize> {
        let defs = f.def_indices();
        self.nodes.iter().filter_map(|n| defs.get(n.as_str()).copied()).collect()
    }

    pub fn interval(&self, f: &Function) -> Interval {
        entity_interval(&self.indices(f), f)
    }

    /// True if one of `self`'s instructions reads the root of `other`.
    fn reads(&self, other: &Candidate, f: &Function) -> bool {
        self.indices(f)
            .into_iter()
            .any(|i| f.body[i].used_names().any(|n| n == other.root))
    }

    pub fn depends_on(&self, other: &Candidate, f: &Function) -> bool {
        self.reads(other, f) || other.reads(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tuple {
    pub members: Vec<Candidate>,
    /// Intersection of the member intervals.
    pub interval: Interval,
}

impl Tuple {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn nodes(&self, f: &Function) -> Vec<usize> {
        self.members.iter().flat_map(|c| c.indices(f)).collect()
    }
}

/// Instructions emitted for one tuple, ready to be spliced in at the
/// insertion point, plus the value that replaces each member root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Emitted {
    pub insts: Vec<Instruction>,
    pub replacements: Vec<(String, String)>,
    /// Set when the tuple paired trees with different leaf counts.
    pub unequal_trees: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PassError {
    #[error("tuple rooted at %{0} has no legal insertion point")]
    NoInsertionPoint(String),
    #[error("packing produced invalid IR: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidOutput(Vec<Diagnostic>),
    #[error("chain of {len} exceeds the cap of {cap}")]
    ChainTooLong { len: usize, cap: usize },
}

/// Pass-specific behavior plugged into the generic driver.
pub trait PassHooks {
    /// Spec string of the pass, e.g. `muladd:8`.
    fn name(&self) -> String;
    fn candidates(&self, f: &Function) -> Vec<Candidate>;
    fn can_pack(&self, f: &Function, t: &Tuple, c: &Candidate) -> bool;
    fn is_full(&self, t: &Tuple) -> bool;
    fn pack(&self, f: &Function, t: &Tuple, names: &mut NameGen) -> Result<Emitted, PassError>;
    /// Scalar instructions this pass tries to absorb.
    fn counts(&self, inst: &Instruction) -> bool;
    /// Intrinsics this pass emits.
    fn emits(&self, i: &Intrinsic) -> bool;
}

/// Hands out SSA names unused in a function and in everything issued so far.
#[derive(Debug, Clone)]
pub struct NameGen {
    taken: HashSet<String>,
}

impl NameGen {
    pub fn new(f: &Function) -> NameGen {
        let taken = f
            .params
            .iter()
            .map(|p| p.name.clone())
            .chain(f.body.iter().filter_map(|i| i.result.clone()))
            .collect();
        NameGen { taken }
    }

    pub fn fresh(&mut self, base: &str) -> String {
        let name = if !self.taken.contains(base) {
            base.to_string()
        } else {
            (1..)
                .map(|k| format!("{base}.{k}"))
                .find(|n| !self.taken.contains(n))
                .expect("unbounded name space")
        };
        self.taken.insert(name.clone());
        name
    }
}

/// Sinks every use of the candidate's root to the latest position the
/// ordering constraints allow. Other instructions keep their relative order.
pub fn move_uses_alap(f: &Function, cand: &Candidate) -> Function {
    let mut out = f.clone();
    let members: HashSet<usize> = cand.indices(f).into_iter().collect();
    let Some(&root) = f.def_indices().get(cand.root.as_str()) else {
        return out;
    };
    let mut uses: Vec<usize> = (root + 1..f.body.len())
        .filter(|&u| !members.contains(&u) && f.body[u].used_names().any(|n| n == cand.root))
        .collect();
    // Latest first, so earlier uses can sink past the ones already moved.
    uses.reverse();
    for u in uses {
        // Only positions after `u` have moved so far, so `u` is still valid.
        let cs = order_constraints(&out);
        let stop = cs
            .iter()
            .filter(|c| c.before == u)
            .map(|c| c.after)
            .min()
            .unwrap_or(out.body.len());
        let inst = out.body.remove(u);
        out.body.insert(stop - 1, inst);
    }
    out
}

/// Greedy first-fit grouping in program order of the candidate roots.
pub fn get_tuples(cands: &[Candidate], f: &Function, hooks: &dyn PassHooks) -> Vec<Tuple> {
    let defs = f.def_indices();
    let mut order: Vec<&Candidate> = cands.iter().collect();
    order.sort_by_key(|c| defs.get(c.root.as_str()).copied().unwrap_or(usize::MAX));
    let mut tuples: Vec<Tuple> = Vec::new();
    for c in order {
        let iv = c.interval(f);
        let slot = tuples.iter().position(|t| {
            !hooks.is_full(t)
                && intervals_intersect(&t.interval, &iv)
                && !t.members.iter().any(|m| m.depends_on(c, f))
                && hooks.can_pack(f, t, c)
        });
        match slot {
            Some(k) => {
                let t = &mut tuples[k];
                t.interval = t.interval.intersection(&iv);
                t.members.push(c.clone());
            }
            None => tuples.push(Tuple { members: vec![c.clone()], interval: iv }),
        }
    }
    tuples
}

/// Splices `emitted` in at the earliest point of the tuple's interval and
/// rewires every external use of the member roots.
pub fn replace_tuple(f: &Function, t: &Tuple, emitted: &Emitted) -> Result<Function, PassError> {
    let iv = entity_interval(&t.nodes(f), f);
    let at = iv
        .insertion_index()
        .ok_or_else(|| PassError::NoInsertionPoint(t.members[0].root.clone()))?;
    let mut out = f.clone();
    let n = emitted.insts.len();
    for (k, inst) in emitted.insts.iter().enumerate() {
        out.body.insert(at + k, inst.clone());
    }
    for (root, repl) in &emitted.replacements {
        let to = Value::var(repl.clone());
        for (i, inst) in out.body.iter_mut().enumerate() {
            if !(at..at + n).contains(&i) {
                inst.replace_uses(root, &to);
            }
        }
        for c in &mut out.carried {
            if &c.src == root {
                c.src = repl.clone();
            }
            if &c.dst == root {
                c.dst = repl.clone();
            }
        }
    }
    Ok(out)
}

/// Removes unused side-effect-free instructions until nothing changes.
pub fn dead_code_elim(f: &Function) -> Function {
    let mut out = f.clone();
    loop {
        let used: HashSet<String> = out
            .body
            .iter()
            .flat_map(|i| i.used_names().map(str::to_string).collect::<Vec<_>>())
            .collect();
        let before = out.body.len();
        out.body
            .retain(|i| i.has_side_effects() || i.result.as_ref().is_some_and(|r| used.contains(r)));
        if out.body.len() == before {
            break;
        }
    }
    let defined: HashSet<&str> = out.body.iter().filter_map(|i| i.result.as_deref()).collect();
    let carried = out
        .carried
        .iter()
        .filter(|c| defined.contains(c.src.as_str()) && defined.contains(c.dst.as_str()))
        .cloned()
        .collect();
    out.carried = carried;
    out
}

/// What a pass changed, in scalar-op and DSP-unit terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct PassStats {
    pub pass: String,
    pub candidates: usize,
    pub tuples: usize,
    pub calls: usize,
    /// Targeted scalar ops in the input.
    pub ops: usize,
    /// Targeted scalar ops still present in the output.
    pub leftover: usize,
    /// DSP units of the calls this pass emitted.
    pub packed_units: usize,
    /// Tuples that paired MAD trees with different leaf counts.
    pub unequal_trees: usize,
    /// Full tuples left scalar because their insertion window closed.
    pub skipped: usize,
}

impl PassStats {
    pub fn packed_ops(&self) -> usize {
        self.ops - self.leftover
    }

    pub fn units_before(&self) -> usize {
        self.ops
    }

    pub fn units_after(&self) -> usize {
        self.leftover + self.packed_units
    }

    /// Ops per unit, `None` when the input had nothing to pack.
    pub fn density(&self) -> Option<f64> {
        (self.ops > 0).then(|| self.ops as f64 / self.units_after() as f64)
    }
}

fn emitted_units(f: &Function, hooks: &dyn PassHooks) -> (usize, usize) {
    f.body
        .iter()
        .filter_map(|i| Intrinsic::parse(i.callee()?))
        .filter(|i| hooks.emits(i))
        .fold((0, 0), |(calls, units), i| (calls + 1, units + i.dsp_units()))
}

/// Candidates with their uses sunk, and the full tuples that would be packed.
pub fn plan(f: &Function, hooks: &dyn PassHooks) -> (Function, Vec<Candidate>, Vec<Tuple>) {
    let cands = hooks.candidates(f);
    let mut g = f.clone();
    let defs = f.def_indices();
    let mut order: Vec<&Candidate> = cands.iter().collect();
    order.sort_by_key(|c| defs.get(c.root.as_str()).copied());
    for c in order {
        g = move_uses_alap(&g, c);
    }
    let tuples = get_tuples(&cands, &g, hooks)
        .into_iter()
        .filter(|t| hooks.is_full(t))
        .collect();
    (g, cands, tuples)
}

/// Runs one pass over the function's block.
///
/// When no tuple gets packed the input is returned untouched, including
/// its original instruction order.
/// Runs the pass until a round packs nothing. Leaves re-emitted as scalar ops
/// by one round can pair up in the next.
pub fn run_on_block(f: &Function, hooks: &dyn PassHooks) -> Result<(Function, PassStats), PassError> {
    let (mut out, mut stats) = run_round(f, hooks)?;
    while stats.tuples > 0 {
        let (next, round) = run_round(&out, hooks)?;
        if round.tuples == 0 {
            stats.skipped = round.skipped;
            break;
        }
        out = next;
        stats.tuples += round.tuples;
        stats.unequal_trees += round.unequal_trees;
        stats.skipped = round.skipped;
    }
    let (calls_in, units_in) = emitted_units(f, hooks);
    let (calls_out, units_out) = emitted_units(&out, hooks);
    stats.calls = calls_out - calls_in;
    stats.packed_units = units_out - units_in;
    stats.leftover = out.body.iter().filter(|i| hooks.counts(i)).count();
    Ok((out, stats))
}

fn run_round(f: &Function, hooks: &dyn PassHooks) -> Result<(Function, PassStats), PassError> {
    let (mut g, cands, tuples) = plan(f, hooks);
    let mut stats = PassStats {
        pass: hooks.name(),
        candidates: cands.len(),
        ops: f.body.iter().filter(|i| hooks.counts(i)).count(),
        ..PassStats::default()
    };
    let mut names = NameGen::new(f);
    for t in &tuples {
        let emitted = hooks.pack(&g, t, &mut names)?;
        match replace_tuple(&g, t, &emitted) {
            Ok(next) => {
                g = next;
                stats.tuples += 1;
                stats.unequal_trees += usize::from(emitted.unequal_trees);
            }
            Err(PassError::NoInsertionPoint(_)) => stats.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let out = if stats.tuples == 0 { f.clone() } else { dead_code_elim(&g) };
    let diags = validate(&out);
    if !diags.is_empty() {
        return Err(PassError::InvalidOutput(diags));
    }
    Ok((out, stats))
}

/// Map from result name to the instruction defining it.
pub(crate) fn defs_by_name(f: &Function) -> HashMap<&str, &Instruction> {
    f.body
        .iter()
        .filter_map(|i| i.result.as_deref().map(|r| (r, i)))
        .collect()
}
