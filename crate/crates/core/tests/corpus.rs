mod common;

use dsp_slp::intrinsic::Intrinsic;
use dsp_slp::ir::{parse, print, validate, Opcode};
use dsp_slp::pipeline::{run_pipeline, PipelineConfig};

#[test]
fn every_kernel_round_trips() {
    for (name, path) in common::corpus() {
        let f = parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(validate(&f).is_empty(), "{name}");
        let again = parse(&print(&f)).unwrap();
        assert_eq!(again, f, "{name}");
    }
}

fn chain_lengths(passes: &str, cap: Option<usize>) -> Vec<usize> {
    let f = common::kernel("mvm");
    let (g, _) = run_pipeline(&f, &PipelineConfig::parse(passes, cap).unwrap()).unwrap();
    let mut lens: Vec<usize> = g
        .body
        .iter()
        .filter_map(|i| match i.callee().and_then(Intrinsic::parse) {
            Some(Intrinsic::MadChain { len }) => Some(len),
            _ => None,
        })
        .collect();
    lens.sort();
    lens
}

#[test]
fn mvm_chains_respect_cap() {
    // Eight-term dot products split evenly under the signed bound of 7.
    assert_eq!(chain_lengths("muladd:8", None), vec![4; 8]);
    assert_eq!(chain_lengths("muladd:8", Some(3)), [vec![2; 4], vec![3; 8]].concat());
    let f = common::kernel("mvm");
    let (g, _) = run_pipeline(&f, &PipelineConfig::parse("muladd:8", Some(1)).unwrap()).unwrap();
    assert_eq!(g.count_opcode(Opcode::Mul), 0);
}

#[test]
fn preset_packs_every_kernel_with_work() {
    for (name, _) in common::corpus() {
        let f = common::kernel(&name);
        let (_, stats) = run_pipeline(&f, &PipelineConfig::preset(&f, None)).unwrap();
        if let Some(d) = stats.density {
            assert!(d >= 1.0, "{name}: {d}");
        }
        assert!(stats.units_after <= stats.units_before, "{name}");
    }
}
