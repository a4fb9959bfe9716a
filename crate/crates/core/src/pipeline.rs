//! Pass pipelines, packing statistics and the II diagnostic over a pipeline.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::ddg::{build_dep_graph, packed_min_ii, CycleReport, DdgError, Latencies};
use crate::dsp::{AddOp, SimdAddMode};
use crate::ir::{Function, Opcode};
use crate::pass::{plan, run_on_block, AddPass, MuladdPass, PassError, PassHooks, PassStats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("invalid pass spec `{0}` (expected add:12, add:24, sub:12, sub:24, muladd:8 or muladd:4)")]
    BadSpec(String),
    #[error("--max-chain-len must be at least 1")]
    BadChainLen,
    #[error("empty pass list")]
    Empty,
    #[error(transparent)]
    Pass(#[from] PassError),
    #[error(transparent)]
    Ddg(#[from] DdgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassSpec {
    Add { op: AddOp, mode: SimdAddMode },
    Muladd { op_size: u32 },
}

impl FromStr for PassSpec {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<PassSpec, PipelineError> {
        let bad = || PipelineError::BadSpec(s.to_string());
        let (op, size) = s.trim().split_once(':').ok_or_else(bad)?;
        let mode = |size: &str| match size {
            "12" => Ok(SimdAddMode::Four12),
            "24" => Ok(SimdAddMode::Two24),
            _ => Err(bad()),
        };
        match op {
            "add" => Ok(PassSpec::Add { op: AddOp::Add, mode: mode(size)? }),
            "sub" => Ok(PassSpec::Add { op: AddOp::Sub, mode: mode(size)? }),
            "muladd" => match size {
                "8" => Ok(PassSpec::Muladd { op_size: 8 }),
                "4" => Ok(PassSpec::Muladd { op_size: 4 }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PassSpec::Add { op, mode } => {
                let op = if *op == AddOp::Add { "add" } else { "sub" };
                write!(f, "{op}:{}", mode.lane_width())
            }
            PassSpec::Muladd { op_size } => write!(f, "muladd:{op_size}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub passes: Vec<PassSpec>,
    pub max_chain_len: Option<usize>,
}

impl PipelineConfig {
    /// Parses a comma-separated pass list.
    pub fn parse(passes: &str, max_chain_len: Option<usize>) -> Result<PipelineConfig, PipelineError> {
        let passes = passes
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        PipelineConfig { passes, max_chain_len }.checked()
    }

    /// Factor-4 then factor-2 for kernels with multiplications, otherwise
    /// four12 then two24 additions.
    pub fn preset(f: &Function, max_chain_len: Option<usize>) -> PipelineConfig {
        let passes = if f.count_opcode(Opcode::Mul) > 0 {
            vec![PassSpec::Muladd { op_size: 4 }, PassSpec::Muladd { op_size: 8 }]
        } else {
            vec![
                PassSpec::Add { op: AddOp::Add, mode: SimdAddMode::Four12 },
                PassSpec::Add { op: AddOp::Add, mode: SimdAddMode::Two24 },
            ]
        };
        PipelineConfig { passes, max_chain_len }
    }

    pub fn checked(self) -> Result<PipelineConfig, PipelineError> {
        if self.passes.is_empty() {
            return Err(PipelineError::Empty);
        }
        if self.max_chain_len == Some(0) {
            return Err(PipelineError::BadChainLen);
        }
        Ok(self)
    }

    pub fn hooks(&self) -> Vec<Box<dyn PassHooks>> {
        self.passes
            .iter()
            .map(|p| -> Box<dyn PassHooks> {
                match *p {
                    PassSpec::Add { op, mode } => Box::new(AddPass::new(mode, op)),
                    PassSpec::Muladd { op_size } => Box::new(MuladdPass::new(op_size, self.max_chain_len)),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub passes: Vec<PassStats>,
    /// Packable scalar ops in the input, one unit each.
    pub units_before: usize,
    /// Packed DSP units plus packable scalar ops left over.
    pub units_after: usize,
    pub density: Option<f64>,
}

/// Runs every pass in order.
pub fn run_pipeline(f: &Function, cfg: &PipelineConfig) -> Result<(Function, StatsReport), PipelineError> {
    let hooks = cfg.hooks();
    let counted = |g: &Function| {
        g.body
            .iter()
            .filter(|i| hooks.iter().any(|h| h.counts(i)))
            .count()
    };
    let mut g = f.clone();
    let mut passes: Vec<PassStats> = Vec::new();
    // A later pass can take apart a tree an earlier one left unpaired, so
    // sweep until nothing packs. Every packed tuple removes scalar ops, which
    // bounds the number of sweeps.
    loop {
        let mut packed = 0;
        for (k, h) in hooks.iter().enumerate() {
            let (next, stats) = run_on_block(&g, h.as_ref())?;
            g = next;
            packed += stats.tuples;
            match passes.get_mut(k) {
                None => passes.push(stats),
                Some(p) => {
                    p.tuples += stats.tuples;
                    p.calls += stats.calls;
                    p.packed_units += stats.packed_units;
                    p.unequal_trees += stats.unequal_trees;
                    p.skipped = stats.skipped;
                    p.leftover = stats.leftover;
                }
            }
        }
        if packed == 0 {
            break;
        }
    }
    let units_before = counted(f);
    let units_after = counted(&g) + passes.iter().map(|p| p.packed_units).sum::<usize>();
    let density = (units_before > 0).then(|| units_before as f64 / units_after as f64);
    Ok((g, StatsReport { passes, units_before, units_after, density }))
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let density = |d: Option<f64>| d.map_or("n/a".to_string(), |d| format!("{d:.2}"));
        writeln!(
            f,
            "{:<10} {:>6} {:>6} {:>6} {:>6} {:>8} {:>6} {:>8}",
            "pass", "cands", "tuples", "calls", "ops", "leftover", "units", "ops/unit"
        )?;
        for p in &self.passes {
            writeln!(
                f,
                "{:<10} {:>6} {:>6} {:>6} {:>6} {:>8} {:>6} {:>8}",
                p.pass,
                p.candidates,
                p.tuples,
                p.calls,
                p.ops,
                p.leftover,
                p.units_after(),
                density(p.density())
            )?;
            if p.unequal_trees > 0 {
                writeln!(f, "  note: {} tuple(s) paired MAD trees of different sizes", p.unequal_trees)?;
            }
            if p.skipped > 0 {
                writeln!(f, "  note: {} tuple(s) left scalar, no insertion point", p.skipped)?;
            }
        }
        writeln!(
            f,
            "units {} -> {}, density {}",
            self.units_before,
            self.units_after,
            density(self.density)
        )
    }
}

/// II impact of one tuple a pass would pack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleImpact {
    pub pass: String,
    pub roots: Vec<String>,
    pub report: CycleReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdgReport {
    pub min_ii: u64,
    pub critical_cycle: Vec<String>,
    pub tuples: Vec<TupleImpact>,
}

impl DdgReport {
    pub fn raised(&self) -> impl Iterator<Item = &TupleImpact> {
        self.tuples.iter().filter(|t| t.report.introduced_critical)
    }
}

/// Evaluates every tuple each pass would form. Passes are applied in turn so
/// that later passes see the packed code of earlier ones.
pub fn ddg_report(f: &Function, cfg: &PipelineConfig, lat: &Latencies) -> Result<DdgReport, PipelineError> {
    let (min_ii, cycle) = build_dep_graph(f, lat)?.min_ii()?;
    let g0 = build_dep_graph(f, lat)?;
    let critical_cycle = g0.labels(&cycle);
    let mut tuples = Vec::new();
    let mut g = f.clone();
    for h in cfg.hooks() {
        let (planned, _, ts) = plan(&g, h.as_ref());
        let graph = build_dep_graph(&planned, lat)?;
        for t in &ts {
            let nodes: Vec<usize> = t.members.iter().flat_map(|c| c.indices(&planned)).collect();
            tuples.push(TupleImpact {
                pass: h.name(),
                roots: t.members.iter().map(|c| c.root.clone()).collect(),
                report: packed_min_ii(&graph, &nodes)?,
            });
        }
        g = run_on_block(&g, h.as_ref())?.0;
    }
    Ok(DdgReport { min_ii, critical_cycle, tuples })
}

impl fmt::Display for DdgReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "minII={}", self.min_ii)?;
        if !self.critical_cycle.is_empty() {
            let names: Vec<String> = self.critical_cycle.iter().map(|n| format!("%{n}")).collect();
            write!(f, " critical cycle: {} -> %{}", names.join(" -> "), self.critical_cycle[0])?;
        }
        writeln!(f)?;
        for t in &self.tuples {
            let flag = if t.report.introduced_critical { " II-RAISED" } else { "" };
            writeln!(
                f,
                "minII={}; pack{{{}}} → minII={}{flag} [{}]",
                t.report.min_ii,
                t.roots.join(","),
                t.report.packed_min_ii,
                t.pass
            )?;
        }
        if self.raised().next().is_none() {
            writeln!(f, "minII={}; no tuple raises II", self.min_ii)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    #[test]
    fn spec_strings() {
        for s in ["add:12", "add:24", "sub:12", "sub:24", "muladd:8", "muladd:4"] {
            assert_eq!(s.parse::<PassSpec>().unwrap().to_string(), s);
        }
        for s in ["add:8", "muladd:12", "mul:8", "add"] {
            assert!(s.parse::<PassSpec>().is_err(), "{s}");
        }
        assert_eq!(PipelineConfig::parse("", None), Err(PipelineError::Empty));
        assert_eq!(PipelineConfig::parse("add:12", Some(0)), Err(PipelineError::BadChainLen));
    }

    #[test]
    fn preset_follows_kernel_kind() {
        let muls = parse("func @f(%x: i8) {\n  %y = mul i8 %x, %x\n  ret i8 %y\n}").unwrap();
        let adds = parse("func @f(%x: i8) {\n  %y = add i8 %x, %x\n  ret i8 %y\n}").unwrap();
        let names = |c: PipelineConfig| c.passes.iter().map(|p| p.to_string()).collect::<Vec<_>>();
        assert_eq!(names(PipelineConfig::preset(&muls, None)), ["muladd:4", "muladd:8"]);
        assert_eq!(names(PipelineConfig::preset(&adds, None)), ["add:12", "add:24"]);
    }

    #[test]
    fn empty_kernel_density_is_na() {
        let f = parse("func @e() { ret }").unwrap();
        let cfg = PipelineConfig::parse("add:12", None).unwrap();
        let (g, stats) = run_pipeline(&f, &cfg).unwrap();
        assert_eq!(g, f);
        assert_eq!(stats.density, None);
        assert!(stats.to_string().contains("density n/a"));
    }
}
