//! Packing of narrow multiplications and multiply-add trees.
//!
//! With 8-bit operands, two MAD trees that share one factor per product are
//! computed together by a cascade of DSPs (`silvia.mad2x8.chain<L>`), split
//! into several balanced cascades when the low result field could overflow.
//! With 4-bit operands, four products by one common factor share a single
//! DSP (`silvia.mul4x4`).

use std::collections::{HashMap, HashSet};

use crate::analysis::{effective_width, use_def_chains};
use crate::dsp::MadChainParams;
use crate::intrinsic::Intrinsic;
use crate::ir::{BinOp, Function, InstKind, Instruction, Signedness, Type, Value};

use super::{defs_by_name, Candidate, CandidateKind, Emitted, NameGen, PassError, PassHooks, Tuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuladdConfig {
    /// 8 for factor-2 packing, 4 for factor-4.
    pub op_size: u32,
    /// User cap on cascade length, applied on top of the overflow bound.
    pub max_chain_len: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct MuladdPass {
    pub cfg: MuladdConfig,
}

/// One product of tree A matched with one of tree B through a shared factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafPair {
    pub leaf_a: String,
    pub leaf_b: String,
    pub a: Value,
    pub b: Value,
    pub c: Value,
}

fn mul_operands(f: &Function, leaf: &str) -> Option<(Value, Value)> {
    let defs = defs_by_name(f);
    match &defs.get(leaf)?.kind {
        InstKind::Binary { op: BinOp::Mul, lhs, rhs } => Some((lhs.clone(), rhs.clone())),
        _ => None,
    }
}

/// Greedy matching in program order: every leaf of `a` takes the first
/// unmatched leaf of `b` that shares an operand with it.
pub fn match_leaves(f: &Function, a: &Candidate, b: &Candidate) -> Vec<LeafPair> {
    let mut taken = HashSet::new();
    let mut pairs = Vec::new();
    for la in &a.leaves {
        let Some((x1, x2)) = mul_operands(f, la) else { continue };
        for lb in &b.leaves {
            if taken.contains(lb) {
                continue;
            }
            let Some((y1, y2)) = mul_operands(f, lb) else { continue };
            let shared = [(&x2, &x1, &y2, &y1), (&x2, &x1, &y1, &y2), (&x1, &x2, &y2, &y1), (&x1, &x2, &y1, &y2)]
                .into_iter()
                .find(|(cx, _, cy, _)| cx == cy);
            if let Some((c, a_op, _, b_op)) = shared {
                taken.insert(lb.clone());
                pairs.push(LeafPair {
                    leaf_a: la.clone(),
                    leaf_b: lb.clone(),
                    a: a_op.clone(),
                    b: b_op.clone(),
                    c: c.clone(),
                });
                break;
            }
        }
    }
    pairs
}

/// Sizes of `n` cascades covering `k` pairs, differing by at most one.
pub fn balanced_chains(k: usize, cap: usize) -> Vec<usize> {
    if k == 0 || cap == 0 {
        return Vec::new();
    }
    let n = k.div_ceil(cap);
    (0..n).map(|i| k / n + usize::from(i < k % n)).collect()
}

impl MuladdPass {
    pub fn new(op_size: u32, max_chain_len: Option<usize>) -> MuladdPass {
        MuladdPass { cfg: MuladdConfig { op_size, max_chain_len } }
    }

    fn factor4(&self) -> bool {
        self.cfg.op_size == 4
    }

    fn eligible_mul(&self, f: &Function, inst: &Instruction) -> bool {
        match &inst.kind {
            InstKind::Binary { op: BinOp::Mul, lhs, rhs } => [lhs, rhs]
                .iter()
                .all(|v| effective_width(v, f).0.bits() <= self.cfg.op_size),
            _ => false,
        }
    }

    fn mad_trees(&self, f: &Function) -> Vec<Candidate> {
        let chains = use_def_chains(f);
        let single_use = |n: &str| chains.get(n).is_some_and(|ud| ud.uses.len() == 1);
        // name -> (nodes, leaves)
        let mut trees: HashMap<String, (Vec<String>, Vec<String>)> = HashMap::new();
        let mut consumed = HashSet::new();
        let mut order = Vec::new();
        for inst in &f.body {
            let (Some(r), Some(ty)) = (&inst.result, inst.ty) else { continue };
            if self.eligible_mul(f, inst) {
                trees.insert(r.clone(), (vec![r.clone()], vec![r.clone()]));
                order.push((r.clone(), ty));
                continue;
            }
            let InstKind::Binary { op: BinOp::Add, lhs: Value::Var(l), rhs: Value::Var(rr) } = &inst.kind else {
                continue;
            };
            if l == rr || !single_use(l) || !single_use(rr) {
                continue;
            }
            let (Some(lt), Some(rt)) = (trees.get(l), trees.get(rr)) else { continue };
            let mut nodes = lt.0.clone();
            nodes.extend(rt.0.iter().cloned());
            nodes.push(r.clone());
            let mut leaves = lt.1.clone();
            leaves.extend(rt.1.iter().cloned());
            consumed.insert(l.clone());
            consumed.insert(rr.clone());
            trees.insert(r.clone(), (nodes, leaves));
            order.push((r.clone(), ty));
        }
        let defs = f.def_indices();
        order
            .into_iter()
            .filter(|(r, _)| !consumed.contains(r))
            .map(|(r, ty)| {
                let (mut nodes, leaves) = trees.remove(&r).expect("tree recorded");
                nodes.sort_by_key(|n| defs[n.as_str()]);
                Candidate { kind: CandidateKind::MadTree, nodes, root: r, leaves, ty }
            })
            .collect()
    }

    fn chain_cap(&self, f: &Function, pairs: &[LeafPair]) -> usize {
        let ew = |v: &Value| effective_width(v, f);
        let a: Vec<_> = pairs.iter().map(|p| ew(&p.a)).collect();
        let b: Vec<_> = pairs.iter().map(|p| ew(&p.b)).collect();
        let c: Vec<_> = pairs.iter().map(|p| ew(&p.c)).collect();
        let bound = MadChainParams::for_operands(&a, &b, &c).max_len();
        let bound = usize::try_from(bound).unwrap_or(usize::MAX);
        self.cfg.max_chain_len.map_or(bound, |m| m.min(bound))
    }

    /// Operand shared by every member together with the per-member other
    /// operand, when the members form a legal factor-4 group.
    fn common_factor(&self, f: &Function, members: &[&Candidate]) -> Option<(Value, Vec<Value>)> {
        let ops: Vec<(Value, Value)> = members
            .iter()
            .map(|m| mul_operands(f, &m.root))
            .collect::<Option<_>>()?;
        let small = |v: &Value| effective_width(v, f).0.bits() <= 4;
        let small_unsigned = |v: &Value| {
            let (w, s) = effective_width(v, f);
            w.bits() <= 4 && s == Signedness::Unsigned
        };
        [ops[0].0.clone(), ops[0].1.clone()].into_iter().find_map(|b| {
            if !small(&b) {
                return None;
            }
            let others = ops
                .iter()
                .map(|(x, y)| {
                    if *y == b {
                        Some(x.clone())
                    } else if *x == b {
                        Some(y.clone())
                    } else {
                        None
                    }
                })
                .collect::<Option<Vec<_>>>()?;
            others.iter().all(small_unsigned).then_some((b, others))
        })
    }

    fn pack_factor2(&self, f: &Function, t: &Tuple, names: &mut NameGen) -> Result<Emitted, PassError> {
        let (ta, tb) = (&t.members[0], &t.members[1]);
        let pairs = match_leaves(f, ta, tb);
        let cap = self.chain_cap(f, &pairs);
        let mut insts = Vec::new();
        let mut terms_a = Vec::new();
        let mut terms_b = Vec::new();
        let mut start = 0;
        for len in balanced_chains(pairs.len(), cap) {
            if len > cap {
                return Err(PassError::ChainTooLong { len, cap });
            }
            let chunk = &pairs[start..start + len];
            start += len;
            let args = chunk
                .iter()
                .map(|p| p.a.clone())
                .chain(chunk.iter().map(|p| p.b.clone()))
                .chain(chunk.iter().map(|p| p.c.clone()))
                .collect();
            let call = names.fresh("silvia");
            let callee = Intrinsic::MadChain { len }.callee();
            insts.push(Instruction::call(Some(&call), Some(Type::signed(48)), &callee, args));
            for (lane, m, terms) in [(0, ta, &mut terms_a), (1, tb, &mut terms_b)] {
                let x = names.fresh(&format!("{}.pk", m.root));
                insts.push(Instruction::extract(&x, m.ty, &call, lane));
                terms.push(x);
            }
        }
        let matched: HashSet<&str> = pairs
            .iter()
            .flat_map(|p| [p.leaf_a.as_str(), p.leaf_b.as_str()])
            .collect();
        for (m, terms) in [(ta, &mut terms_a), (tb, &mut terms_b)] {
            for leaf in m.leaves.iter().filter(|l| !matched.contains(l.as_str())) {
                let (x, y) = mul_operands(f, leaf).expect("leaf is a mul");
                let copy = names.fresh(&format!("{leaf}.s"));
                insts.push(Instruction::binary(&copy, BinOp::Mul, m.ty, x, y));
                terms.push(copy);
            }
        }
        let mut replacements = Vec::new();
        for (m, terms) in [(ta, terms_a), (tb, terms_b)] {
            let mut acc = terms[0].clone();
            for term in &terms[1..] {
                let sum = names.fresh(&format!("{}.sum", m.root));
                insts.push(Instruction::binary(&sum, BinOp::Add, m.ty, Value::var(acc), Value::var(term.clone())));
                acc = sum;
            }
            replacements.push((m.root.clone(), acc));
        }
        Ok(Emitted { insts, replacements, unequal_trees: ta.leaves.len() != tb.leaves.len() })
    }

    fn pack_factor4(&self, f: &Function, t: &Tuple, names: &mut NameGen) -> Result<Emitted, PassError> {
        let members: Vec<&Candidate> = t.members.iter().collect();
        let (b, mut args) = self
            .common_factor(f, &members)
            .expect("tuple was formed under can_pack");
        args.push(b);
        let call = names.fresh("silvia");
        let mut insts = vec![Instruction::call(
            Some(&call),
            Some(Type::signed(48)),
            &Intrinsic::Mul4x4.callee(),
            args,
        )];
        let mut replacements = Vec::new();
        for (lane, m) in t.members.iter().enumerate() {
            let x = names.fresh(&format!("{}.pk", m.root));
            insts.push(Instruction::extract(&x, m.ty, &call, lane as u32));
            replacements.push((m.root.clone(), x));
        }
        Ok(Emitted { insts, replacements, unequal_trees: false })
    }
}

impl PassHooks for MuladdPass {
    fn name(&self) -> String {
        format!("muladd:{}", self.cfg.op_size)
    }

    /// Maximal MAD trees for factor-2; single products for factor-4, which
    /// cannot sum inside the DSP.
    fn candidates(&self, f: &Function) -> Vec<Candidate> {
        if !self.factor4() {
            return self.mad_trees(f);
        }
        f.body
            .iter()
            .filter(|i| self.eligible_mul(f, i))
            .filter_map(|i| {
                let r = i.result.clone()?;
                Some(Candidate {
                    kind: CandidateKind::MadTree,
                    nodes: vec![r.clone()],
                    root: r.clone(),
                    leaves: vec![r],
                    ty: i.ty?,
                })
            })
            .collect()
    }

    fn can_pack(&self, f: &Function, t: &Tuple, c: &Candidate) -> bool {
        if self.factor4() {
            let members: Vec<&Candidate> = t.members.iter().chain([c]).collect();
            return self.common_factor(f, &members).is_some();
        }
        let Some(a) = t.members.first() else { return true };
        let pairs = match_leaves(f, a, c);
        !pairs.is_empty()
            && pairs.len() == a.leaves.len().min(c.leaves.len())
            && self.chain_cap(f, &pairs) >= 1
    }

    fn is_full(&self, t: &Tuple) -> bool {
        t.len() == if self.factor4() { 4 } else { 2 }
    }

    fn pack(&self, f: &Function, t: &Tuple, names: &mut NameGen) -> Result<Emitted, PassError> {
        if self.factor4() {
            self.pack_factor4(f, t, names)
        } else {
            self.pack_factor2(f, t, names)
        }
    }

    fn counts(&self, inst: &Instruction) -> bool {
        inst.opcode() == crate::ir::Opcode::Mul
    }

    fn emits(&self, i: &Intrinsic) -> bool {
        match i {
            Intrinsic::MadChain { .. } => !self.factor4(),
            Intrinsic::Mul4x4 => self.factor4(),
            Intrinsic::SimdAdd { .. } => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::equivalent;
    use crate::ir::{parse, print, validate, Opcode};
    use crate::pass::run_on_block;

    const SHARED_FACTOR: &str = "func @shared_factor(%b: i8) {
  %a0 = load i8 @a[0]
  %c0 = mul i8 %a0, %b
  store i8 %c0, @c[0]
  %a1 = load i8 @a[1]
  %c1 = mul i8 %a1, %b
  store i8 %c1, @c[1]
}";

    /// Two dot products of length `k` over a shared vector `x`.
    fn dots(k: usize, ty: &str) -> String {
        let mut s = String::from("func @d() {\n");
        for j in 0..k {
            s += &format!("  %x{j} = load {ty} @x[{j}]\n");
        }
        for r in 0..2 {
            for j in 0..k {
                s += &format!("  %m{r}_{j} = load {ty} @m{r}[{j}]\n  %p{r}_{j} = mul {ty} %m{r}_{j}, %x{j}\n");
            }
            let mut acc = format!("p{r}_0");
            for j in 1..k {
                s += &format!("  %s{r}_{j} = add {ty} %{acc}, %p{r}_{j}\n");
                acc = format!("s{r}_{j}");
            }
            s += &format!("  store {ty} %{acc}, @y[{r}]\n");
        }
        s + "}\n"
    }

    fn chain_lens(f: &Function) -> Vec<usize> {
        f.body
            .iter()
            .filter_map(|i| match Intrinsic::parse(i.callee()?)? {
                Intrinsic::MadChain { len } => Some(len),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn tree_detection() {
        let p = MuladdPass::new(8, None);
        let f = parse("func @f(%a0: i8, %c0: i8, %a1: i8, %c1: i8) {\n  %p = mul i8 %a0, %c0\n  %q = mul i8 %a1, %c1\n  %d = add i8 %p, %q\n  ret i8 %d\n}").unwrap();
        let cs = p.candidates(&f);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].leaves, ["p", "q"]);
        assert_eq!(cs[0].nodes, ["p", "q", "d"]);

        let f = parse("func @f(%a: i8, %c: i8, %d: i8) {\n  %p = mul i8 %a, %c\n  %s = add i8 %p, %d\n  ret i8 %s\n}").unwrap();
        let cs = p.candidates(&f);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].root, "p");

        let f = parse("func @f(%a: i16, %c: i8) {\n  %w = sext i8 %c to i16\n  %p = mul i16 %a, %w\n  %q = mul i16 %w, %w\n  ret i16 %q\n}").unwrap();
        let roots: Vec<_> = p.candidates(&f).into_iter().map(|c| c.root).collect();
        assert_eq!(roots, ["q"]);
    }

    #[test]
    fn shared_use_splits_trees() {
        let p = MuladdPass::new(8, None);
        let f = parse("func @f(%a: i8, %c: i8) {\n  %p = mul i8 %a, %c\n  %q = mul i8 %c, %c\n  %d = add i8 %p, %q\n  store i8 %p, @o[0]\n  store i8 %d, @o[1]\n}").unwrap();
        let roots: Vec<_> = p.candidates(&f).into_iter().map(|c| c.root).collect();
        assert_eq!(roots, ["p", "q"]);
    }

    #[test]
    fn can_pack_needs_shared_factor() {
        let p = MuladdPass::new(8, None);
        let f = parse(&dots(3, "i8")).unwrap();
        let cs = p.candidates(&f);
        assert_eq!(cs.len(), 2);
        let t = Tuple { members: vec![cs[0].clone()], interval: cs[0].interval(&f) };
        assert!(p.can_pack(&f, &t, &cs[1]));
        let pairs = match_leaves(&f, &cs[0], &cs[1]);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[1].c, Value::var("x1"));
        assert_eq!(pairs[1].a, Value::var("m0_1"));

        let g = parse("func @f(%a: i8, %b: i8, %c: i8, %d: i8) {\n  %p = mul i8 %a, %b\n  %q = mul i8 %c, %d\n  store i8 %p, @o[0]\n  store i8 %q, @o[1]\n}").unwrap();
        let cs = p.candidates(&g);
        let t = Tuple { members: vec![cs[0].clone()], interval: cs[0].interval(&g) };
        assert!(!p.can_pack(&g, &t, &cs[1]));
    }

    #[test]
    fn balanced_partition() {
        assert_eq!(balanced_chains(7, 7), [7]);
        assert_eq!(balanced_chains(8, 7), [4, 4]);
        assert_eq!(balanced_chains(7, 3), [3, 2, 2]);
        assert_eq!(balanced_chains(8, 3), [3, 3, 2]);
        assert!(balanced_chains(0, 3).is_empty());
        for k in 1..40 {
            for cap in 1..10 {
                let c = balanced_chains(k, cap);
                assert_eq!(c.iter().sum::<usize>(), k);
                assert_eq!(c.len(), k.div_ceil(cap));
                assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
                assert!(c.iter().all(|&l| l <= cap));
            }
        }
    }

    #[test]
    fn shared_factor_packs_into_one_call() {
        let f = parse(SHARED_FACTOR).unwrap();
        let (g, stats) = run_on_block(&f, &MuladdPass::new(8, None)).unwrap();
        assert_eq!(g.count_opcode(Opcode::Mul), 0);
        assert_eq!(g.count_opcode(Opcode::Call), 1);
        assert!(print(&g).contains("call i48 @silvia.mul2x8(%a0, %a1, %b)"));
        assert_eq!((stats.ops, stats.units_after()), (2, 1));
        assert!(equivalent(&f, &g, 500, 3).unwrap().holds());
    }

    #[test]
    fn chain_splitting() {
        for (k, cap, expect, adds) in [
            (7, None, vec![7], 0),
            (8, None, vec![4, 4], 1),
            (7, Some(3), vec![3, 2, 2], 2),
        ] {
            let f = parse(&dots(k, "i8")).unwrap();
            let (g, stats) = run_on_block(&f, &MuladdPass::new(8, cap)).unwrap();
            assert!(validate(&g).is_empty());
            assert_eq!(chain_lens(&g), expect, "k={k}");
            assert_eq!(g.count_opcode(Opcode::Add), 2 * adds, "k={k}");
            assert_eq!(stats.units_after(), k);
            assert!(equivalent(&f, &g, 400, k as u64).unwrap().holds(), "k={k}");
        }
    }

    #[test]
    fn unsigned_operands_shorten_chains() {
        let f = parse(&dots(5, "u8")).unwrap();
        let (g, _) = run_on_block(&f, &MuladdPass::new(8, None)).unwrap();
        assert_eq!(chain_lens(&g), [3, 2]);
        assert!(equivalent(&f, &g, 400, 9).unwrap().holds());
    }

    #[test]
    fn unequal_trees_keep_extra_leaf_scalar() {
        let f = parse("func @f(%x: i8, %y: i8, %m: i8, %n: i8, %k: i8) {\n  %p = mul i8 %m, %x\n  %q = mul i8 %k, %y\n  %s = add i8 %p, %q\n  %r = mul i8 %n, %x\n  store i8 %s, @o[0]\n  store i8 %r, @o[1]\n}").unwrap();
        let (g, stats) = run_on_block(&f, &MuladdPass::new(8, None)).unwrap();
        assert_eq!(stats.unequal_trees, 1);
        assert_eq!(g.count_opcode(Opcode::Mul), 1);
        assert!(equivalent(&f, &g, 400, 2).unwrap().holds());
    }

    #[test]
    fn factor4_groups() {
        let mut s = String::from("func @q(%b: i4) {\n");
        for i in 0..4 {
            s += &format!("  %a{i} = load u4 @a[{i}]\n  %x{i} = zext u4 %a{i} to i8\n");
        }
        s += "  %bb = sext i4 %b to i8\n";
        for i in 0..4 {
            s += &format!("  %p{i} = mul i8 %x{i}, %bb\n  store i8 %p{i}, @p[{i}]\n");
        }
        s += "}\n";
        let f = parse(&s).unwrap();
        let pass = MuladdPass::new(4, None);
        let (g, stats) = run_on_block(&f, &pass).unwrap();
        assert_eq!(g.count_opcode(Opcode::Call), 1);
        assert_eq!(stats.density(), Some(4.0));
        assert!(equivalent(&f, &g, 400, 4).unwrap().holds());

        // A signed non-shared operand rules the group out.
        let signed = s.replace("zext u4 %a0", "sext u4 %a0");
        let f = parse(&signed).unwrap();
        let (_, stats) = run_on_block(&f, &pass).unwrap();
        assert_eq!(stats.tuples, 0);
    }
}
