use std::fs;

use swarmlab::harness::runlog::{read_phi_sidecar, write_phi_sidecar};
use swarmlab::harness::{
    load_runlog, load_runlogs, persist_runlog, run_ensemble, run_single, EnsembleReport, ExperimentConfig,
    ExperimentKind, HarnessError, InitConfig, RunLog,
};
use swarmlab::numerics::BigReal;
use swarmlab::potential::PotentialTrace;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentKind::Exp1,
        particles: 2,
        dims: 5,
        init: InitConfig::Special { scale: 300, stagnating: 3, dstar: 2 },
        iterations: 600,
        runs: 3,
        base_seed: 100,
        keep_traces: true,
        ..Default::default()
    }
}

#[test]
fn save_load_save_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let log = RunLog::new(&cfg, run_single(&cfg, 1).unwrap());
    let path = persist_runlog(&log, dir.path()).unwrap();
    let loaded = load_runlog(&path).unwrap();
    assert_eq!(loaded.outcome.seed, 101);
    assert_eq!(loaded.outcome.trace.as_ref().unwrap().psi, log.outcome.trace.as_ref().unwrap().psi);
    assert_eq!(loaded.outcome.trace.as_ref().unwrap().phi, log.outcome.trace.as_ref().unwrap().phi);

    let before: Vec<Vec<u8>> = ["json", "csv", "phi"].iter().map(|x| fs::read(path.with_extension(x)).unwrap()).collect();
    let again = tempfile::tempdir().unwrap();
    let path2 = persist_runlog(&loaded, again.path()).unwrap();
    let after: Vec<Vec<u8>> = ["json", "csv", "phi"].iter().map(|x| fs::read(path2.with_extension(x)).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn tampered_fingerprint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { keep_traces: false, ..small_config() };
    let path = persist_runlog(&RunLog::new(&cfg, run_single(&cfg, 0).unwrap()), dir.path()).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    let tampered = text.replace("\"particles\": 2", "\"particles\": 3");
    fs::write(&path, tampered).unwrap();
    assert!(matches!(load_runlog(&path), Err(HarnessError::CorruptLog(_))));

    let future = text.replace("\"format_version\": 1", "\"format_version\": 99");
    fs::write(&path, future).unwrap();
    assert!(matches!(load_runlog(&path), Err(HarnessError::VersionMismatch { found: 99, expected: 1 })));
}

#[test]
fn tiny_potentials_survive_the_sidecar_exactly() {
    let mut trace = PotentialTrace::new(1);
    let tiny: BigReal = "64:0xb504f333f9de6485p-8064".parse().unwrap();
    assert_eq!(tiny.exponent(), Some(-8000));
    let row = vec![BigReal::from_i64(3, 64), tiny.clone(), tiny.neg()];
    trace.push_sample(4, &row).unwrap();
    let mut bytes = Vec::new();
    write_phi_sidecar(&trace, &mut bytes).unwrap();
    let back = read_phi_sidecar(bytes.as_slice()).unwrap();
    assert_eq!(back.first_sample, 4);
    assert_eq!(back.phi[0][1].to_hex_string(), tiny.to_hex_string());
    assert_eq!(back.phi[0][2], tiny.neg());

    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    assert!(matches!(read_phi_sidecar(corrupt.as_slice()), Err(HarnessError::CorruptLog(_))));
}

#[test]
fn reports_from_stored_logs_match_inline_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { keep_traces: false, ..small_config() };
    let outcomes = run_ensemble(&cfg, Some(2), |_| {}).unwrap();
    for o in &outcomes {
        persist_runlog(&RunLog::new(&cfg, o.clone()), dir.path()).unwrap();
    }
    let loaded: Vec<_> = load_runlogs(dir.path()).unwrap().into_iter().map(|l| l.outcome).collect();
    assert_eq!(loaded, outcomes);
    let inline = serde_json::to_vec(&EnsembleReport::build(&cfg, &outcomes).unwrap()).unwrap();
    let stored = serde_json::to_vec(&EnsembleReport::build(&cfg, &loaded).unwrap()).unwrap();
    assert_eq!(inline, stored);
}
