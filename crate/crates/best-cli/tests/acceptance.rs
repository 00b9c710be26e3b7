//! Acceptance suite: one test per criterion, each printing a single
//! `criterion NN [PASS|FAIL]` line (visible with `--nocapture`).
//!
//! Criteria 1–3 reproduce the headline experiment orderings; 4–10 are the
//! property suites (consensus safety, finality arithmetic, admission filter,
//! gradients, softmax/VRI, chain audit, determinism).

use std::collections::BTreeMap;
use std::fs;

use best_core::assessment::{
    self, batch_loss_and_grad, countermeasure, forward, vri_from_probs, Architecture, Countermeasure,
    LabeledSequence, Mode, ModelParams, RiskLevel, Thresholds, FEATURES, NUM_CLASSES, SEQ_LEN,
};
use best_core::consensus::finality_reached;
use best_core::crypto::{generate_identity, IdentityKind, PublicKey};
use best_core::ledger::{build_block, AdmissionVerdict, Chain};
use best_core::netsim::{FaultAction, FaultEntry, FaultScript, NodeId, US_PER_SEC};
use best_core::scenario::{
    reproduce_accuracy_sweep, reproduce_loss_curves, run_scenario, ExperimentConfig, ALL_SCHEMES,
};
use best_core::telemetry::{World, WorldConfig, A_MAX, V_MAX_MPS};
use rand_core::{RngCore, SeedableRng};

fn report(criterion: u32, desc: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion:02} [{}] {desc}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed — {desc}: {detail}");
}

// -- 1. Loss-curve ordering over 5 seeds ------------------------------------

#[test]
fn criterion_01_loss_curve_ordering() {
    let mut finals = [0.0f64; 4]; // per scheme, summed over seeds
    let seeds = [1u64, 2, 3, 4, 5];
    for &seed in &seeds {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.malicious_count = 50;
        cfg.train.iterations = 50;
        let curves = reproduce_loss_curves(&cfg).unwrap();
        assert!(curves.iterations >= 50);
        for (i, run) in curves.runs.iter().enumerate() {
            assert_eq!(run.scheme, ALL_SCHEMES[i]);
            assert_eq!(run.loss_trace.len(), curves.iterations);
            finals[i] += run.final_train_loss;
        }
    }
    for f in &mut finals {
        *f /= seeds.len() as f64;
    }
    let [lb, db, lc, _dc] = finals;
    let detail = format!(
        "mean final loss over 5 seeds: lstm_blockchain={lb:.4} dnn_blockchain={db:.4} lstm_central={lc:.4}"
    );
    report(
        1,
        "lstm_blockchain beats dnn_blockchain and lstm_central, final loss <= 0.35",
        lb < db && lb < lc && lb <= 0.35,
        &detail,
    );
}

// -- 2. Accuracy stability under the malicious sweep ------------------------

#[test]
fn criterion_02_accuracy_sweep_stability() {
    let cfg = ExperimentConfig::default();
    let counts = [0u32, 25, 50, 75, 100];
    let grid = reproduce_accuracy_sweep(&cfg, &counts).unwrap();
    assert_eq!(grid.rows.len(), counts.len());
    let col = |j: usize| grid.rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let lb = col(0);
    let lc = col(2);
    let dc = col(3);
    let lb_min = lb.iter().cloned().fold(f64::INFINITY, f64::min);
    let lb_max = lb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lc_drop = lc[0] - lc[counts.len() - 1];
    let dc_drop = dc[0] - dc[counts.len() - 1];
    let detail = format!(
        "lstm_blockchain band=[{lb_min:.4},{lb_max:.4}] lstm_central drop={lc_drop:.4} dnn_central drop={dc_drop:.4}"
    );
    report(
        2,
        "blockchain LSTM stays >=85% within a 5-point band; centralized schemes lose >=10 points",
        lb_min >= 0.85 && (lb_max - lb_min) <= 0.05 && lc_drop >= 0.10 && dc_drop >= 0.10,
        &detail,
    );
}

// -- 3. Throughput and signaling overhead -----------------------------------

#[test]
fn criterion_03_throughput_and_signaling() {
    let cfg = ExperimentConfig::default(); // all honest, instant links
    let result = run_scenario(&cfg).unwrap();
    let m = &result.metrics;
    let committee = cfg.committee_size as u64;
    let replicas = cfg.rsu_count as u64;
    let expected_per_round: BTreeMap<&str, u64> = [
        ("propose", committee - 1),
        ("reply", committee - 1),
        ("announce", replicas - 1),
    ]
    .into();
    let mut per_round_ok = true;
    for round in 0..cfg.duration_s {
        let Some(kinds) = m.signaling_by_round.get(&round) else {
            per_round_ok = false;
            break;
        };
        for (kind, want) in &expected_per_round {
            if kinds.get(*kind).copied().unwrap_or(0) != *want {
                per_round_ok = false;
            }
        }
    }
    let expected_total = cfg.duration_s * (2 * (committee - 1) + (replicas - 1));
    let detail = format!(
        "blocks={}/{}s signaling_total={} (expected {expected_total})",
        m.blocks_finalized, cfg.duration_s, m.signaling_total
    );
    report(
        3,
        "exactly 1 block/s and (M-1)+(M-1)+(N-1) signaling messages per round",
        m.blocks_finalized == cfg.duration_s
            && per_round_ok
            && m.signaling_total == expected_total,
        &detail,
    );
}

// -- 4. Exhaustive byzantine safety at M=4, f=1 ------------------------------

#[test]
fn criterion_04_byzantine_safety_exhaustive() {
    // One byzantine node, every per-round behavior pattern over 3 rounds:
    // victims x 5^3 behavior codes (silent, reject-all, approve-all,
    // invalid proposal, equivocation).
    let mut runs = 0u32;
    let mut disagreements = 0u32;
    for victim in 0..5u32 {
        for pattern in 0..125u32 {
            let codes = [
                1 + pattern % 5,
                1 + (pattern / 5) % 5,
                1 + (pattern / 25) % 5,
            ];
            let mut cfg = ExperimentConfig::default();
            cfg.seed = 40_000 + u64::from(victim * 125 + pattern);
            cfg.rsu_count = 5;
            cfg.cav_count = 4;
            cfg.committee_size = 4;
            cfg.duration_s = 3;
            cfg.faults = FaultScript {
                entries: codes
                    .iter()
                    .enumerate()
                    .map(|(round, &code)| FaultEntry {
                        time_us: round as u64 * US_PER_SEC + 100_000,
                        node: NodeId::Rsu(victim),
                        action: FaultAction::Byzantine(code),
                    })
                    .collect(),
            };
            let result = run_scenario(&cfg).unwrap();
            runs += 1;
            // Safety: no two honest replicas may hold conflicting finalized
            // blocks at any height (prefix agreement).
            let honest: Vec<&Chain> = result
                .nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != victim as usize)
                .map(|(_, n)| &n.chain)
                .collect();
            for a in &honest {
                a.audit().unwrap();
            }
            for i in 0..honest.len() {
                for j in i + 1..honest.len() {
                    let depth = honest[i].blocks.len().min(honest[j].blocks.len());
                    if honest[i].blocks[..depth] != honest[j].blocks[..depth] {
                        disagreements += 1;
                    }
                }
            }
        }
    }
    let detail = format!("{runs} adversarial runs, {disagreements} finalized disagreements");
    report(
        4,
        "exhaustive M=4 f=1 byzantine patterns never finalize conflicting blocks",
        disagreements == 0 && runs == 625,
        &detail,
    );
}

// -- 5. Finality arithmetic --------------------------------------------------

#[test]
fn criterion_05_finality_arithmetic() {
    let mut checked = 0u32;
    let mut ok = true;
    for m in 4..=10u32 {
        for approvals in 0..=m {
            let brute = 3 * approvals > 2 * m; // approvals > 2M/3, exactly
            if finality_reached(approvals, m) != brute {
                ok = false;
            }
            checked += 1;
        }
    }
    report(
        5,
        "finalization equals brute-force approvals > 2M/3 for M in 4..=10",
        ok,
        &format!("{checked} (approvals, M) pairs"),
    );
}

// -- 6. Admission filter against an independent reference checker ------------

/// Independently coded four-rule checker: registry, signature, freshness,
/// kinematic plausibility, in that order.
fn reference_verdict(
    registry: &std::collections::BTreeSet<PublicKey>,
    history: &BTreeMap<PublicKey, best_core::telemetry::StatusRecord>,
    record: &best_core::telemetry::StatusRecord,
) -> AdmissionVerdict {
    const EPS: f64 = 1e-6;
    if !registry.contains(&record.vehicle) {
        return AdmissionVerdict::RejectUnknownIdentity;
    }
    if !record.verify_signature() {
        return AdmissionVerdict::RejectBadSignature;
    }
    let Some(prev) = history.get(&record.vehicle) else {
        return AdmissionVerdict::Admit;
    };
    if record.timestamp <= prev.timestamp {
        return AdmissionVerdict::RejectStale;
    }
    let dt = (record.timestamp - prev.timestamp) as f64;
    if (record.state.velocity - prev.state.velocity).abs() > A_MAX * dt + EPS {
        return AdmissionVerdict::RejectImplausible;
    }
    let dx = record.state.position[0] - prev.state.position[0];
    let dy = record.state.position[1] - prev.state.position[1];
    if (dx * dx + dy * dy).sqrt() > V_MAX_MPS * dt + 0.5 * A_MAX * dt * dt + EPS {
        return AdmissionVerdict::RejectImplausible;
    }
    AdmissionVerdict::Admit
}

#[test]
fn criterion_06_admission_filter_reference() {
    let mut world = World::new(WorldConfig {
        seed: 99,
        rsu_count: 10,
        cav_count: 480,
        forger_unregistered: 10,
        forger_implausible: 5,
        forger_replay: 5,
    });
    let registry: std::collections::BTreeSet<PublicKey> =
        world.registered_keys().into_iter().collect();
    let mut chain = Chain::new(registry.iter().copied());
    let (_, producer_key) = generate_identity(0xACCE97, IdentityKind::Rsu);
    let mut history: BTreeMap<PublicKey, best_core::telemetry::StatusRecord> = BTreeMap::new();

    let mut total = 0u32;
    let mut mismatches = 0u32;
    let mut forged_admitted = 0u32;
    let mut genuine_rejected = 0u32;
    for t in 0..20u64 {
        let mut pending = Vec::new();
        for addressed in world.emit_records(t) {
            total += 1;
            let verdict = chain.admission_check(&addressed.record);
            let reference = reference_verdict(&registry, &history, &addressed.record);
            if verdict != reference {
                mismatches += 1;
            }
            match (addressed.forged, verdict) {
                (true, AdmissionVerdict::Admit) => forged_admitted += 1,
                (false, v) if v != AdmissionVerdict::Admit => genuine_rejected += 1,
                _ => {}
            }
            if verdict == AdmissionVerdict::Admit {
                history.insert(addressed.record.vehicle, addressed.record);
                pending.push(best_core::ledger::Transaction::new(addressed.record));
            }
        }
        let (block, spill) = build_block(&pending, chain.tip(), t, &producer_key).unwrap();
        assert!(spill.is_empty());
        chain.append(block);
        world.step(1.0);
    }
    chain.audit().unwrap();
    let detail = format!(
        "{total} records: {mismatches} reference mismatches, {forged_admitted} forged admitted, {genuine_rejected} genuine rejected"
    );
    report(
        6,
        "10^4 mixed records: verdicts match the reference checker, forged 100% rejected, genuine 0% rejected",
        total >= 10_000 && mismatches == 0 && forged_admitted == 0 && genuine_rejected == 0,
        &detail,
    );
}

// -- 7. Gradient check -------------------------------------------------------

fn toy_batch(seed: u64, n: usize) -> Vec<LabeledSequence> {
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut unit = |r: &mut rand_chacha::ChaCha20Rng| (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (0..n)
        .map(|_| {
            let mut features = [[0.0; FEATURES]; SEQ_LEN];
            for row in &mut features {
                for f in row.iter_mut() {
                    *f = unit(&mut rng);
                }
            }
            LabeledSequence {
                features,
                mask: [true; SEQ_LEN],
                label: RiskLevel::from_index((rng.next_u64() % 4) as usize),
                vehicle: PublicKey([0u8; 32]),
            }
        })
        .collect()
}

#[test]
fn criterion_07_gradient_check() {
    let data = toy_batch(7, 4);
    let batch: Vec<&LabeledSequence> = data.iter().collect();
    let mut worst = 0.0f64;
    for (arch, hidden) in [(Architecture::Lstm2, 6), (Architecture::Dnn4, 0)] {
        let params = ModelParams::init(arch, hidden, 0.0, 11);
        let (_, grad) = batch_loss_and_grad(&params, &batch, None);
        // Sample parameters evenly across the whole flat vector so every
        // tensor is covered.
        let n = params.weights.len();
        let samples: Vec<usize> = (0..400).map(|k| k * n / 400).collect();
        let h = 1e-5;
        for &i in &samples {
            let mut plus = params.clone();
            plus.weights[i] += h;
            let mut minus = params.clone();
            minus.weights[i] -= h;
            let (lp, _) = batch_loss_and_grad(&plus, &batch, None);
            let (lm, _) = batch_loss_and_grad(&minus, &batch, None);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    report(
        7,
        "analytic gradients match central finite differences within 1e-4 (both architectures)",
        worst < 1e-4,
        &format!("worst relative error {worst:.2e}"),
    );
}

// -- 8. Softmax and VRI invariants -------------------------------------------

#[test]
fn criterion_08_softmax_and_vri_invariants() {
    let data = toy_batch(21, 50);
    let mut ok = true;
    let mut detail = String::from("softmax/vri over 100 forward passes");
    for (k, (arch, hidden)) in [(Architecture::Lstm2, 5), (Architecture::Dnn4, 0)]
        .into_iter()
        .enumerate()
    {
        let params = ModelParams::init(arch, hidden, 0.0, 31 + k as u64);
        for seq in &data {
            let p = forward(&params, seq, Mode::Infer).unwrap();
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x <= 0.0) {
                ok = false;
                detail = format!("bad softmax output: {p:?} (sum {sum})");
            }
            let vri = vri_from_probs(&p);
            if !(vri > 0.0 && vri <= 1.0) {
                ok = false;
                detail = format!("vri {vri} outside (0,1]");
            }
        }
    }
    // Countermeasure partition: exactly one action per vri, with exact
    // boundary semantics at alpha and beta.
    let th = Thresholds::default();
    let cases = [
        (th.alpha, Countermeasure::None),
        (f64::from_bits(th.alpha.to_bits() + 1), Countermeasure::Warning),
        (th.beta, Countermeasure::Warning),
        (f64::from_bits(th.beta.to_bits() + 1), Countermeasure::Suspension),
        (1e-6, Countermeasure::None),
        (1.0, Countermeasure::Suspension),
    ];
    for (vri, want) in cases {
        if countermeasure(vri, &th) != want {
            ok = false;
            detail = format!("countermeasure({vri}) != {want:?}");
        }
    }
    report(
        8,
        "softmax sums to 1 within 1e-9 with positive parts; vri in (0,1]; countermeasure boundaries exact",
        ok,
        &detail,
    );
}

// -- 9. Chain audit via the CLI ----------------------------------------------

const SMALL_TOML: &str = r#"
seed = 5
rsu_count = 8
cav_count = 30
malicious_count = 5
committee_size = 4
duration_s = 10
hidden = 8

[train]
iterations = 10
batch = 64
"#;

#[test]
fn criterion_09_chain_audit_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    fs::write(&cfg_path, SMALL_TOML).unwrap();
    let out = dir.path().join("out");
    let argv = |args: &[&str]| {
        let mut v = vec!["best".to_string()];
        v.extend(args.iter().map(|s| s.to_string()));
        v
    };
    let dump_code = best_cli::cli(argv(&[
        "chain",
        "dump",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let dump_path = out.join("chain.jsonl");
    let verify_code = best_cli::cli(argv(&["chain", "verify", dump_path.to_str().unwrap()]));

    // Flip one hex digit inside the third line's tx_root and re-verify.
    let text = fs::read_to_string(&dump_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let target = lines[2];
    let pos = target.find("\"tx_root\":\"").unwrap() + "\"tx_root\":\"".len();
    let mut corrupted_line = target.to_string();
    let old = corrupted_line.as_bytes()[pos];
    let new = if old == b'0' { b'1' } else { b'0' };
    unsafe { corrupted_line.as_bytes_mut()[pos] = new };
    let mut corrupted = lines.clone();
    corrupted[2] = &corrupted_line;
    let bad_path = dir.path().join("corrupted.jsonl");
    fs::write(&bad_path, corrupted.join("\n") + "\n").unwrap();
    let corrupt_code = best_cli::cli(argv(&["chain", "verify", bad_path.to_str().unwrap()]));

    let detail = format!(
        "dump exit={dump_code} verify exit={verify_code} corrupted verify exit={corrupt_code}"
    );
    report(
        9,
        "chain verify passes on an experiment dump and exits 2 after a one-byte corruption",
        dump_code == 0 && verify_code == 0 && corrupt_code == 2,
        &detail,
    );
}

// -- 10. Byte-identical fig5 determinism -------------------------------------

#[test]
fn criterion_10_fig5_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("small.toml");
    fs::write(&cfg_path, SMALL_TOML).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("out{run}"));
        let code = best_cli::cli([
            "best",
            "fig5",
            cfg_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        outputs.push(fs::read(out.join("fig5.csv")).unwrap());
    }
    let identical = outputs[0] == outputs[1];
    report(
        10,
        "repeated fig5 runs with a fixed seed produce byte-identical CSVs",
        identical,
        &format!("{} bytes each", outputs[0].len()),
    );
}
