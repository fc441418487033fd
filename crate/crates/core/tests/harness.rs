//! Sweep outputs: file layout, round trips and the lower-bound relation.

use hosc::harness::{read_records, run_sweep, write_outputs, Algorithm, Caps, ExperimentConfig, SweepPoint, CSV_HEADER};
use hosc::model::params::chain_constant;
use hosc::model::Regime;

fn config(sweep: Vec<SweepPoint>, algorithms: Vec<Algorithm>) -> ExperimentConfig {
    ExperimentConfig {
        sweep,
        algorithms,
        regime: Regime::High,
        seeds: vec![3],
        output_dir: None,
        caps: Caps { chain_len: 128, max_iters: 256, ..Caps::default() },
        stop_on_success: true,
    }
}

fn point(k: usize, d: f64) -> SweepPoint {
    SweepPoint { k, lambda: 1e-3, mu_k: chain_constant(k), d, eps: 1e-11 }
}

#[test]
fn empty_sweep_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_sweep(&config(Vec::new(), vec![Algorithm::Gd])).unwrap();
    assert!(records.is_empty());
    write_outputs(&records, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(csv.trim_end(), CSV_HEADER.join(","));
    assert!(std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap().is_empty());
}

#[test]
fn gradient_descent_record_respects_the_lower_bound() {
    let records = run_sweep(&config(vec![point(2, 10.0)], vec![Algorithm::Gd])).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert!(r.error.is_none(), "{:?}", r.error);
    assert!(r.lower_bound.t_lower > 0.0);
    assert!(r.respects_lower_bound());
    assert_eq!(r.queries, r.series.len());
}

#[test]
fn records_round_trip_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_sweep(&config(vec![point(2, 10.0), point(3, 30.0)], vec![Algorithm::Combined, Algorithm::Crn])).unwrap();
    assert_eq!(records.len(), 4);
    write_outputs(&records, dir.path()).unwrap();
    let back = read_records(&dir.path().join("records.jsonl")).unwrap();
    assert_eq!(back, records);
}

#[test]
fn records_follow_point_algorithm_seed_order() {
    let mut cfg = config(vec![point(2, 10.0), point(2, 30.0)], vec![Algorithm::Gd, Algorithm::Combined]);
    cfg.seeds = vec![1, 2];
    let records = run_sweep(&cfg).unwrap();
    let order: Vec<_> = records.iter().map(|r| (r.d, r.algorithm, r.seed)).collect();
    let mut expected = Vec::new();
    for d in [10.0, 30.0] {
        for a in [Algorithm::Gd, Algorithm::Combined] {
            for s in [1, 2] {
                expected.push((d, a, s));
            }
        }
    }
    assert_eq!(order, expected);
}
