use proptest::prelude::*;

use dsp_slp::ddg::{packed_min_ii, DepGraph, Edge, Node};
use dsp_slp::dsp::{simd_add, AddOp, SimdAddMode};
use dsp_slp::interp::equivalent;
use dsp_slp::ir::{parse, print, validate, Signedness};
use dsp_slp::pipeline::{run_pipeline, PipelineConfig};

#[derive(Debug, Clone)]
enum Op {
    Load(u64),
    LoadNibble(u64),
    Mul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Store(usize, bool, u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..6u64).prop_map(Op::Load),
        1 => (0..4u64).prop_map(Op::LoadNibble),
        4 => (any::<usize>(), 0..4usize).prop_map(|(a, f)| Op::Mul(a, f)),
        2 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Add(a, b)),
        1 => (any::<usize>(), any::<usize>()).prop_map(|(a, b)| Op::Sub(a, b)),
        2 => (any::<usize>(), any::<bool>(), 0..6u64).prop_map(|(a, x, i)| Op::Store(a, x, i)),
    ]
}

/// Straight-line i8 kernel text. Products use one of a few shared factors so
/// the passes find something to pack.
fn render(ops: &[Op], ret: bool) -> String {
    let mut out = String::from("func @k(%k: i8, %j: i8, %h: u4) {\n  %hz = zext u4 %h to i8\n");
    let mut vals: Vec<String> = vec!["k".into()];
    let factors = ["%k", "%j", "%hz", "3"];
    for (n, op) in ops.iter().enumerate() {
        let pick = |i: usize| vals[i % vals.len()].clone();
        match op {
            Op::Load(i) => {
                out += &format!("  %l{n} = load i8 @x[{i}]\n");
                vals.push(format!("l{n}"));
            }
            Op::LoadNibble(i) => {
                out += &format!("  %t{n} = load u4 @u[{i}]\n  %z{n} = zext u4 %t{n} to i8\n");
                vals.push(format!("z{n}"));
            }
            Op::Mul(a, f) => {
                out += &format!("  %v{n} = mul i8 %{}, {}\n", pick(*a), factors[*f]);
                vals.push(format!("v{n}"));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let m = if matches!(op, Op::Add(..)) { "add" } else { "sub" };
                out += &format!("  %v{n} = {m} i8 %{}, %{}\n", pick(*a), pick(*b));
                vals.push(format!("v{n}"));
            }
            Op::Store(a, to_x, i) => {
                let arr = if *to_x { "x" } else { "o" };
                out += &format!("  store i8 %{}, @{arr}[{i}]\n", pick(*a));
            }
        }
    }
    if ret {
        out += &format!("  ret i8 %{}\n", vals.last().unwrap());
    }
    out + "}\n"
}

fn kernel() -> impl Strategy<Value = String> {
    (prop::collection::vec(op(), 0..40), any::<bool>()).prop_map(|(ops, ret)| render(&ops, ret))
}

const PIPELINES: &[&str] = &[
    "muladd:8",
    "muladd:4",
    "add:12",
    "sub:24",
    "muladd:4,muladd:8,add:12,add:24,sub:12,sub:24",
];

fn graph() -> impl Strategy<Value = (DepGraph, Vec<usize>)> {
    (1..=12usize)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0..=4u32, n),
                prop::collection::vec((0..n, 0..n, 0..=3u32), 0..=2 * n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(lats, raw, pick)| {
            let nodes = lats
                .iter()
                .enumerate()
                .map(|(i, &latency)| Node { label: format!("n{i}"), latency })
                .collect();
            // Zero-distance edges only point forward, so every cycle is carried.
            let mut edges: Vec<Edge> = raw
                .into_iter()
                .map(|(src, dst, d)| Edge { src, dst, distance: if src < dst { d } else { d.max(1) } })
                .collect();
            edges.sort();
            edges.dedup();
            let members = (0..pick.len()).filter(|&i| pick[i]).collect();
            (DepGraph { nodes, edges }, members)
        })
}

/// Whether some member reaches another through zero-distance edges, which
/// the packing legality check rules out.
fn dependent(g: &DepGraph, members: &[usize]) -> bool {
    members.iter().any(|&m| {
        let mut seen = vec![false; g.nodes.len()];
        let mut stack = vec![m];
        while let Some(v) = stack.pop() {
            for e in g.edges.iter().filter(|e| e.src == v && e.distance == 0) {
                if !seen[e.dst] {
                    seen[e.dst] = true;
                    stack.push(e.dst);
                }
            }
        }
        members.iter().any(|&o| o != m && seen[o])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn print_parse_round_trip(text in kernel()) {
        let f = parse(&text).unwrap();
        prop_assert!(validate(&f).is_empty());
        let printed = print(&f);
        prop_assert_eq!(parse(&printed).unwrap(), f);
        prop_assert_eq!(print(&parse(&printed).unwrap()), printed);
    }

    #[test]
    fn packing_preserves_behavior(text in kernel(), which in 0..PIPELINES.len(), cap in prop::option::of(1..=7usize)) {
        let f = parse(&text).unwrap();
        let cfg = PipelineConfig::parse(PIPELINES[which], cap).unwrap();
        let (g, stats) = run_pipeline(&f, &cfg).unwrap();
        prop_assert!(validate(&g).is_empty());
        prop_assert!(stats.units_after <= stats.units_before);
        let verdict = equivalent(&f, &g, 64, 7).unwrap();
        prop_assert!(verdict.holds(), "{}\n{}\n{:?}", text, print(&g), verdict);
        let (again, stats) = run_pipeline(&g, &cfg).unwrap();
        prop_assert_eq!(stats.passes.iter().map(|p| p.tuples).sum::<usize>(), 0);
        prop_assert_eq!(again, g);
    }

    #[test]
    fn min_ii_algorithms_agree((g, _) in graph()) {
        prop_assert_eq!(g.min_ii().unwrap().0, g.min_ii_enumerate().unwrap().0);
    }

    #[test]
    fn contraction_never_lowers_min_ii((g, members) in graph()) {
        prop_assume!(!dependent(&g, &members));
        let r = packed_min_ii(&g, &members).unwrap();
        prop_assert!(r.packed_min_ii >= r.min_ii, "{:?}", r);
    }

    #[test]
    fn simd_lanes_are_independent(
        two24 in any::<bool>(),
        sub in any::<bool>(),
        seed in prop::collection::vec((any::<i32>(), any::<i32>()), 4),
        lane in 0..4usize,
        bit in 0..23u32,
    ) {
        let mode = if two24 { SimdAddMode::Two24 } else { SimdAddMode::Four12 };
        let op = if sub { AddOp::Sub } else { AddOp::Add };
        let (w, lanes) = (mode.lane_width(), mode.lanes());
        let fold = |v: i32| (v as i64).rem_euclid(1 << w) - (1 << (w - 1));
        let xs: Vec<i64> = seed.iter().take(lanes).map(|p| fold(p.0)).collect();
        let ys: Vec<i64> = seed.iter().take(lanes).map(|p| fold(p.1)).collect();
        let (lane, bit) = (lane % lanes, bit % (w - 1));
        let mut flipped = xs.clone();
        flipped[lane] ^= 1 << bit;
        let a = simd_add(mode, &xs, &ys, op, Signedness::Signed).unwrap();
        let b = simd_add(mode, &flipped, &ys, op, Signedness::Signed).unwrap();
        for l in (0..lanes).filter(|&l| l != lane) {
            prop_assert_eq!(a[l], b[l]);
        }
    }
}
