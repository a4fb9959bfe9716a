//! Data-dependence graphs and the recurrence-constrained minimum initiation
//! interval.
//!
//! Every cycle θ of the graph bounds the initiation interval from below by
//! `ceil(latency(θ) / distance(θ))`. Merging instructions into one packed
//! call can close new cycles and raise that bound; [`packed_min_ii`]
//! measures the effect.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::analysis::order_constraints;
use crate::ir::{Function, Opcode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DdgError {
    #[error("carried annotation names unknown value %{0}")]
    InvalidAnnotation(String),
    #[error("dependence cycle with zero total distance through {}", .0.join(", "))]
    ZeroDistanceCycle(Vec<String>),
    #[error("bad latency override `{0}`")]
    BadLatency(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub latency: u32,
}

/// A dependence from `src` to `dst`, `distance` iterations apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DepGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// Cycle latency per opcode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Latencies(BTreeMap<Opcode, u32>);

impl Default for Latencies {
    /// One cycle for arithmetic, loads and calls; stores, casts, lane
    /// extraction and `ret` are free.
    fn default() -> Latencies {
        let mut m = BTreeMap::new();
        for op in [Opcode::Add, Opcode::Sub, Opcode::Mul, Opcode::Load, Opcode::Call] {
            m.insert(op, 1);
        }
        for op in [Opcode::Store, Opcode::Ret, Opcode::SExt, Opcode::ZExt, Opcode::Trunc, Opcode::Extract] {
            m.insert(op, 0);
        }
        Latencies(m)
    }
}

impl Latencies {
    pub fn get(&self, op: Opcode) -> u32 {
        self.0.get(&op).copied().unwrap_or(1)
    }

    pub fn set(&mut self, op: Opcode, cycles: u32) {
        self.0.insert(op, cycles);
    }

    /// Applies `op=N` overrides separated by commas, e.g. `mul=3,load=2`.
    pub fn with_overrides(mut self, spec: &str) -> Result<Latencies, DdgError> {
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || DdgError::BadLatency(item.to_string());
            let (op, n) = item.split_once('=').ok_or_else(bad)?;
            let op = Opcode::from_mnemonic(op.trim()).ok_or_else(bad)?;
            let n = n.trim().parse().map_err(|_| bad())?;
            self.set(op, n);
        }
        Ok(self)
    }
}

fn label(f: &Function, i: usize) -> String {
    match &f.body[i].result {
        Some(r) => r.clone(),
        None => format!("{}#{i}", f.body[i].opcode().mnemonic()),
    }
}

/// One node per instruction; intra-iteration edges from the ordering
/// constraints, loop-carried edges from the `;; carried` annotations.
pub fn build_dep_graph(f: &Function, lat: &Latencies) -> Result<DepGraph, DdgError> {
    let nodes = (0..f.body.len())
        .map(|i| Node { label: label(f, i), latency: lat.get(f.body[i].opcode()) })
        .collect();
    let mut edges: BTreeSet<Edge> = order_constraints(f)
        .into_iter()
        .map(|c| Edge { src: c.before, dst: c.after, distance: 0 })
        .collect();
    let defs = f.def_indices();
    let find = |n: &str| defs.get(n).copied().ok_or_else(|| DdgError::InvalidAnnotation(n.to_string()));
    for c in &f.carried {
        edges.insert(Edge { src: find(&c.src)?, dst: find(&c.dst)?, distance: c.distance });
    }
    Ok(DepGraph { nodes, edges: edges.into_iter().collect() })
}

impl DepGraph {
    pub fn labels(&self, cycle: &[usize]) -> Vec<String> {
        cycle.iter().map(|&n| self.nodes[n].label.clone()).collect()
    }

    fn edge_latency(&self, e: &Edge) -> i64 {
        self.nodes[e.src].latency as i64
    }

    /// Fails if intra-iteration edges alone form a cycle.
    pub fn check_zero_distance(&self) -> Result<(), DdgError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let zero: Vec<&Edge> = self.edges.iter().filter(|e| e.distance == 0).collect();
        for e in &zero {
            indeg[e.dst] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for e in zero.iter().filter(|e| e.src == v) {
                indeg[e.dst] -= 1;
                if indeg[e.dst] == 0 {
                    stack.push(e.dst);
                }
            }
        }
        if seen == n {
            return Ok(());
        }
        let stuck = (0..n).filter(|&v| indeg[v] > 0).map(|v| self.nodes[v].label.clone()).collect();
        Err(DdgError::ZeroDistanceCycle(stuck))
    }

    /// A cycle with `latency - ii * distance > 0`, if any (Bellman-Ford on
    /// longest paths from a virtual source).
    fn positive_cycle(&self, ii: i64) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut dist = vec![0i64; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut last = None;
        for _ in 0..=n {
            last = None;
            for e in &self.edges {
                let w = self.edge_latency(e) - ii * e.distance as i64;
                if dist[e.src] + w > dist[e.dst] {
                    dist[e.dst] = dist[e.src] + w;
                    pred[e.dst] = Some(e.src);
                    last = Some(e.dst);
                }
            }
            last?;
        }
        let mut v = last?;
        for _ in 0..n {
            v = pred[v]?;
        }
        let mut cycle = vec![v];
        let mut u = pred[v]?;
        while u != v {
            cycle.push(u);
            u = pred[u]?;
        }
        cycle.reverse();
        Some(cycle)
    }

    /// Minimum II and one cycle attaining it, by binary search over II with
    /// positive-cycle detection. Acyclic graphs give 1 and an empty cycle.
    pub fn min_ii(&self) -> Result<(u64, Vec<usize>), DdgError> {
        self.check_zero_distance()?;
        let total: i64 = self.nodes.iter().map(|n| n.latency as i64).sum();
        let (mut lo, mut hi) = (1i64, total.max(1));
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.positive_cycle(mid).is_some() {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let critical = self.positive_cycle(lo - 1).unwrap_or_default();
        Ok((lo as u64, critical))
    }

    /// Same bound by enumerating every elementary cycle. Exponential; meant
    /// for small graphs and as a cross-check.
    pub fn min_ii_enumerate(&self) -> Result<(u64, Vec<usize>), DdgError> {
        self.check_zero_distance()?;
        let n = self.nodes.len();
        let mut out: Vec<Vec<&Edge>> = vec![Vec::new(); n];
        for e in &self.edges {
            out[e.src].push(e);
        }
        let mut best = (1u64, Vec::new());
        let mut path: Vec<usize> = Vec::new();
        let mut on_path = vec![false; n];
        for s in 0..n {
            self.cycles_from(s, s, 0, 0, &out, &mut path, &mut on_path, &mut best);
        }
        Ok(best)
    }

    #[allow(clippy::too_many_arguments)]
    fn cycles_from(
        &self,
        start: usize,
        v: usize,
        lat: u64,
        dist: u64,
        out: &[Vec<&Edge>],
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        best: &mut (u64, Vec<usize>),
    ) {
        path.push(v);
        on_path[v] = true;
        let lat = lat + self.nodes[v].latency as u64;
        for e in &out[v] {
            let d = dist + e.distance as u64;
            if e.dst == start {
                let ii = lat.div_ceil(d);
                if ii > best.0 || (best.1.is_empty() && lat > 0) {
                    *best = (ii.max(best.0), path.clone());
                }
            } else if e.dst > start && !on_path[e.dst] {
                self.cycles_from(start, e.dst, lat, d, out, path, on_path, best);
            }
        }
        path.pop();
        on_path[v] = false;
    }

    /// Merges `members` into one node with the largest member latency.
    /// Zero-distance edges between members disappear; carried ones become
    /// self-loops.
    pub fn contract(&self, members: &[usize]) -> DepGraph {
        let set: BTreeSet<usize> = members.iter().copied().collect();
        let Some(&rep) = set.first() else { return self.clone() };
        let mut remap = HashMap::new();
        let mut nodes = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if set.contains(&i) && i != rep {
                continue;
            }
            remap.insert(i, nodes.len());
            nodes.push(node.clone());
        }
        let sup = remap[&rep];
        nodes[sup] = Node {
            label: format!("{{{}}}", self.labels(&set.iter().copied().collect::<Vec<_>>()).join(",")),
            latency: set.iter().map(|&i| self.nodes[i].latency).max().unwrap_or(0),
        };
        let map = |i: usize| if set.contains(&i) { sup } else { remap[&i] };
        let edges: BTreeSet<Edge> = self
            .edges
            .iter()
            .map(|e| Edge { src: map(e.src), dst: map(e.dst), distance: e.distance })
            .filter(|e| !(e.src == e.dst && e.distance == 0))
            .collect();
        DepGraph { nodes, edges: edges.into_iter().collect() }
    }
}

/// Effect of packing one set of instructions on the minimum II.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleReport {
    pub min_ii: u64,
    pub critical_cycle: Vec<String>,
    pub packed_min_ii: u64,
    pub introduced_critical: bool,
}

pub fn packed_min_ii(g: &DepGraph, members: &[usize]) -> Result<CycleReport, DdgError> {
    let (min_ii, cycle) = g.min_ii()?;
    let merged = g.contract(members);
    let (packed, _) = merged.min_ii()?;
    Ok(CycleReport {
        min_ii,
        critical_cycle: g.labels(&cycle),
        packed_min_ii: packed,
        introduced_critical: packed > min_ii,
    })
}

impl fmt::Display for CycleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "minII={} → minII={}", self.min_ii, self.packed_min_ii)?;
        if self.introduced_critical {
            write!(f, " II-RAISED")?;
        }
        Ok(())
    }
}
