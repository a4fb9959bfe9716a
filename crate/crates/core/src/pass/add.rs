//! SIMD packing of narrow additions or subtractions (four 12-bit or two
//! 24-bit lanes of the 48-bit ALU).

use crate::analysis::effective_width;
use crate::dsp::{AddOp, SimdAddMode};
use crate::intrinsic::Intrinsic;
use crate::ir::{BinOp, Function, InstKind, Instruction, Type, Value};

use super::{Candidate, CandidateKind, Emitted, NameGen, PassError, PassHooks, Tuple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddConfig {
    pub mode: SimdAddMode,
    pub op: AddOp,
}

#[derive(Debug, Clone, Copy)]
pub struct AddPass {
    pub cfg: AddConfig,
}

impl AddPass {
    pub fn new(mode: SimdAddMode, op: AddOp) -> AddPass {
        AddPass { cfg: AddConfig { mode, op } }
    }

    fn binop(&self) -> BinOp {
        match self.cfg.op {
            AddOp::Add => BinOp::Add,
            AddOp::Sub => BinOp::Sub,
        }
    }

    /// Whether one scalar op computes the same value in a lane. Both operands
    /// must fit the lane. Then either the result is no wider than the lane,
    /// so the lane's wraparound agrees with the result's, or the exact
    /// result is small enough to come back unwrapped.
    fn fits_lane(&self, f: &Function, ty: Type, lhs: &Value, rhs: &Value) -> bool {
        let w = self.cfg.mode.lane_width();
        let (lw, ls) = effective_width(lhs, f);
        let (rw, rs) = effective_width(rhs, f);
        if lw.bits() > w || rw.bits() > w {
            return false;
        }
        if ty.bits() <= w {
            return true;
        }
        let range = |bits: u32, signed: bool| {
            let t = if signed { Type::signed(bits) } else { Type::unsigned(bits) };
            (t.min(), t.max())
        };
        let (llo, lhi) = range(lw.bits(), ls.is_signed());
        let (rlo, rhi) = range(rw.bits(), rs.is_signed());
        let (lo, hi) = match self.cfg.op {
            AddOp::Add => (llo + rlo, lhi + rhi),
            AddOp::Sub => (llo - rhi, lhi - rlo),
        };
        let lane = Type::signed(w);
        lane.fits(lo) && lane.fits(hi)
    }
}

impl PassHooks for AddPass {
    fn name(&self) -> String {
        let op = match self.cfg.op {
            AddOp::Add => "add",
            AddOp::Sub => "sub",
        };
        format!("{op}:{}", self.cfg.mode.lane_width())
    }

    fn candidates(&self, f: &Function) -> Vec<Candidate> {
        f.body
            .iter()
            .filter_map(|inst| {
                let InstKind::Binary { op, lhs, rhs } = &inst.kind else {
                    return None;
                };
                let (root, ty) = (inst.result.as_ref()?, inst.ty?);
                (*op == self.binop() && self.fits_lane(f, ty, lhs, rhs)).then(|| Candidate {
                    kind: CandidateKind::AddSub,
                    nodes: vec![root.clone()],
                    root: root.clone(),
                    leaves: vec![root.clone()],
                    ty,
                })
            })
            .collect()
    }

    /// Any set of independent lanes fits the SIMD ALU.
    fn can_pack(&self, _f: &Function, _t: &Tuple, _c: &Candidate) -> bool {
        true
    }

    fn is_full(&self, t: &Tuple) -> bool {
        t.len() == self.cfg.mode.lanes()
    }

    fn pack(&self, f: &Function, t: &Tuple, names: &mut NameGen) -> Result<Emitted, PassError> {
        let defs = super::defs_by_name(f);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for m in &t.members {
            if let InstKind::Binary { lhs, rhs, .. } = &defs[m.root.as_str()].kind {
                xs.push(lhs.clone());
                ys.push(rhs.clone());
            }
        }
        let intr = Intrinsic::SimdAdd { mode: self.cfg.mode, op: self.cfg.op };
        let call = names.fresh("silvia");
        xs.extend(ys);
        let mut insts = vec![Instruction::call(Some(&call), Some(Type::signed(48)), &intr.callee(), xs)];
        let mut replacements = Vec::new();
        for (lane, m) in t.members.iter().enumerate() {
            let x = names.fresh(&format!("{}.pk", m.root));
            insts.push(Instruction::extract(&x, m.ty, &call, lane as u32));
            replacements.push((m.root.clone(), x));
        }
        Ok(Emitted { insts, replacements, unequal_trees: false })
    }

    fn counts(&self, inst: &Instruction) -> bool {
        matches!(&inst.kind, InstKind::Binary { op, .. } if *op == self.binop())
    }

    fn emits(&self, i: &Intrinsic) -> bool {
        matches!(i, Intrinsic::SimdAdd { mode, op } if *mode == self.cfg.mode && *op == self.cfg.op)
    }
}
