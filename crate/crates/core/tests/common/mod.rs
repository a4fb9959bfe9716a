#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dsp_slp::ir::{parse, Function};

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// Every `.sir` kernel in the corpus, sorted by file name.
pub fn corpus() -> Vec<(String, PathBuf)> {
    let mut out: Vec<(String, PathBuf)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "sir").then(|| (p.file_stem().unwrap().to_string_lossy().into_owned(), p))
        })
        .collect();
    out.sort();
    out
}

pub fn kernel(name: &str) -> Function {
    let text = std::fs::read_to_string(corpus_dir().join(format!("{name}.sir"))).expect("kernel file");
    parse(&text).expect("kernel parses")
}

/// Pass pipelines exercised on every kernel, as CLI arguments.
pub const PIPELINES: &[&[&str]] = &[
    &["--passes", "add:12"],
    &["--passes", "add:24"],
    &["--passes", "sub:12"],
    &["--passes", "sub:24"],
    &["--passes", "muladd:8"],
    &["--passes", "muladd:4"],
    &["--passes", "muladd:8", "--max-chain-len", "3"],
    &["--passes", "muladd:8", "--max-chain-len", "1"],
    &["--passes", "muladd:4,muladd:8"],
    &["--passes", "add:12,add:24"],
    &["--passes", "sub:12,sub:24"],
    &["--passes", "muladd:8,add:12"],
    &["--passes", "muladd:4,muladd:8,add:12,add:24,sub:12,sub:24"],
    &["--preset", "paper"],
];

/// The pipeline arguments as a library configuration.
pub fn config_for(args: &[&str], f: &Function) -> dsp_slp::pipeline::PipelineConfig {
    use dsp_slp::pipeline::PipelineConfig;
    let chain = args
        .iter()
        .position(|a| *a == "--max-chain-len")
        .map(|i| args[i + 1].parse().unwrap());
    match args.iter().position(|a| *a == "--passes") {
        Some(i) => PipelineConfig::parse(args[i + 1], chain).unwrap(),
        None => PipelineConfig::preset(f, chain),
    }
}
