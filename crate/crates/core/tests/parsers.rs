//! Parser robustness: the fuzz corpus round-trips, and arbitrary or mutated
//! inputs never panic.

use std::fs;
use std::path::PathBuf;

use lvhba::cli::RunConfig;
use lvhba::solver::trace::{csv_string, read_csv};
use lvhba::solver::Trace;
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.clone(), fs::read(p).unwrap()))
        .collect()
}

fn config_round_trip(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    let Ok(config) = RunConfig::parse(text) else {
        return false;
    };
    let canonical = config.to_config_text();
    let again = RunConfig::parse(&canonical).expect("canonical config text parses");
    assert_eq!(again.to_config_text(), canonical);
    assert_eq!(again, config);
    true
}

fn csv_round_trip(data: &[u8]) -> bool {
    let Ok(records) = read_csv(data) else {
        return false;
    };
    let written = csv_string(&records);
    let again = read_csv(written.as_bytes()).expect("written trace parses");
    assert_eq!(csv_string(&again), written);
    true
}

fn json_round_trip(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else {
        return false;
    };
    let Ok(trace) = Trace::from_json(text) else {
        return false;
    };
    let written = trace.to_json();
    assert_eq!(Trace::from_json(&written).unwrap().to_json(), written);
    true
}

#[test]
fn corpus_seeds_round_trip() {
    let parsed: Vec<_> = corpus("config_parse")
        .iter()
        .map(|(p, d)| (p.file_name().unwrap().to_owned(), config_round_trip(d)))
        .collect();
    assert!(
        parsed.iter().filter(|(_, ok)| *ok).count() >= 4,
        "{parsed:?}"
    );
    assert!(parsed.iter().any(|(n, ok)| n == "invalid.cfg" && !ok));
    for (p, d) in corpus("trace_csv") {
        assert!(csv_round_trip(&d), "{}", p.display());
    }
    for (p, d) in corpus("trace_json") {
        assert!(json_round_trip(&d), "{}", p.display());
    }
}

/// Byte-level mutations of a seed: overwrite, insert and truncate.
fn mutated(seed: Vec<u8>) -> impl Strategy<Value = Vec<u8>> {
    let len = seed.len();
    prop::collection::vec((0..len.max(1), any::<u8>(), 0u8..3), 0..8).prop_map(move |edits| {
        let mut out = seed.clone();
        for (at, byte, kind) in edits {
            let at = at.min(out.len());
            match kind {
                0 if at < out.len() => out[at] = byte,
                1 => out.insert(at, byte),
                _ => out.truncate(at.max(1)),
            }
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn arbitrary_bytes_never_panic(data in prop::collection::vec(any::<u8>(), 0..256)) {
        config_round_trip(&data);
        csv_round_trip(&data);
        json_round_trip(&data);
    }

    #[test]
    fn mutated_configs_never_panic(data in mutated(fs::read(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config_parse/strongly_convex.cfg")).unwrap())) {
        config_round_trip(&data);
    }

    #[test]
    fn mutated_csv_traces_never_panic(data in mutated(fs::read(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/trace_csv/merely_convex.csv")).unwrap())) {
        csv_round_trip(&data);
    }

    #[test]
    fn mutated_json_traces_never_panic(data in mutated(fs::read(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/trace_json/merely_convex.json")).unwrap())) {
        json_round_trip(&data);
    }
}
