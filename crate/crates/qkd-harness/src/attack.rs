//! Adversarial scenarios: every known way to cheat the key-confirmation
//! exchange, staged against the real machines and the real KME cores.
//!
//! Each scenario runs in its own fresh deployment. The suite's invariant is
//! that **no scenario ends with a live TLS-QKD connection**: either a side
//! rejects with the precise alert the attack deserves, or — for the
//! post-handshake tampering case — the record layer refuses the forged
//! record and the connection dies. A scenario additionally checks that the
//! *reason* matches: a replayed seed must be called a replayed seed, not a
//! generic failure.

use serde::Serialize;
use tls_qkd::consts::{
    CHALLENGE_CIPHERTEXT_LEN, REC_APPLICATION_DATA, REC_CHALLENGE_ACK, REC_HANDSHAKE,
};
use tls_qkd::handshake::ModePolicy;
use tls_qkd::kme::KmeReply;
use tls_qkd::wire::{decode_server_hello, encode_challenge_ack, peek_content_type};
use tls_qkd::AlertCode;

use crate::nodes::{AckStrategy, SideEnd, SLAVE_SERIAL};
use crate::scenario::{Harness, MasterPlan, RunPlan, ScenarioReport, ScenarioSpec};
use crate::sim::{Interceptor, LinkId, NodeId, Passthrough, Payload};

/// One adversarial scenario's verdict.
#[derive(Debug, Clone, Serialize)]
pub struct AttackRow {
    /// Scenario name.
    pub scenario: &'static str,
    /// What the adversary does.
    pub attack: &'static str,
    /// The rejection the protocol owes this attack.
    pub expected: &'static str,
    /// What actually happened.
    pub observed: String,
    /// Whether the scenario ended with a live established connection —
    /// `true` here means the attack won.
    pub connection_established: bool,
    /// Whether observed behavior matched expectations exactly.
    pub passed: bool,
}

/// The whole suite's findings.
#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    /// Result of the honest control run, which must establish TLS-QKD for
    /// the rejections to mean anything.
    pub baseline: String,
    /// Whether the control run established.
    pub baseline_ok: bool,
    /// One row per attack.
    pub rows: Vec<AttackRow>,
    /// Baseline established and every attack was rejected as expected.
    pub all_passed: bool,
}

impl AttackReport {
    /// Pretty JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table rendering.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "baseline (honest): {} [{}]\n\n",
            self.baseline,
            if self.baseline_ok { "ok" } else { "FAIL" }
        ));
        out.push_str(&format!(
            "{:<26} {:<30} {:<44} {}\n",
            "scenario", "expected", "observed", "verdict"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<26} {:<30} {:<44} {}\n",
                row.scenario,
                row.expected,
                row.observed,
                if row.passed { "rejected ✓" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "\nsuite verdict: {}\n",
            if self.all_passed {
                "every attack rejected"
            } else {
                "ATTACK SURVIVED — see failing rows"
            }
        ));
        out
    }
}

/// A man-in-the-middle on the SAE link that answers the slave's challenge by
/// reflecting the challenge ciphertext back as the acknowledgement,
/// suppressing the honest answer.
struct AckReflector {
    captured: Option<[u8; CHALLENGE_CIPHERTEXT_LEN]>,
}

impl Interceptor for AckReflector {
    fn intercept(&mut self, link: LinkId, from: NodeId, payload: Payload) -> Vec<Payload> {
        if link != LinkId::SaeWan {
            return vec![payload];
        }
        if let Payload::Record(bytes) = &payload {
            match (from, peek_content_type(bytes)) {
                (NodeId::SlaveSae, Ok(REC_HANDSHAKE)) => {
                    if let Ok(hello) = decode_server_hello(bytes) {
                        self.captured = hello.challenge;
                    }
                }
                (NodeId::MasterSae, Ok(REC_CHALLENGE_ACK)) => {
                    if let Some(challenge) = self.captured.take() {
                        return vec![Payload::Record(encode_challenge_ack(&challenge))];
                    }
                }
                _ => {}
            }
        }
        vec![payload]
    }
}

/// A compromised path between the master SAE and its KME that flips one bit
/// of the delivered key material, leaving the identifier intact.
struct KeyCopyCorruptor;

impl Interceptor for KeyCopyCorruptor {
    fn intercept(&mut self, link: LinkId, _from: NodeId, mut payload: Payload) -> Vec<Payload> {
        if link == LinkId::MasterLan {
            if let Payload::KmeAnswer {
                reply: KmeReply::NewKey { material, .. },
                ..
            } = &mut payload
            {
                material[0] ^= 0x01;
            }
        }
        vec![payload]
    }
}

fn fresh_harness(seed: u64) -> Harness {
    Harness::new(ScenarioSpec {
        seed,
        pool_keys: 4,
        ..ScenarioSpec::default()
    })
}

fn observed(report: &ScenarioReport) -> String {
    let mut out = format!("master {}; slave {}", report.master, report.slave);
    if let Some(status) = report.slave_kme_error {
        out.push_str(&format!("; slave KME status {status}"));
    }
    out
}

fn scripted_ack_row(
    seed: u64,
    scenario: &'static str,
    attack: &'static str,
    strategy: AckStrategy,
    expected_alert: AlertCode,
    expected: &'static str,
) -> AttackRow {
    let harness = fresh_harness(seed);
    let report = harness.run_plan(RunPlan {
        seed,
        master: MasterPlan::Scripted(strategy),
        slave_policy: ModePolicy::QkdPreferred,
        slave_serial: SLAVE_SERIAL,
        interceptor: Box::new(Passthrough),
        fault: None,
    });
    let slave_rejected = matches!(
        &report.outcome.slave_end,
        SideEnd::Rejected { alert_sent: Some(code), .. } if *code == expected_alert
    );
    let adversary_alerted =
        matches!(&report.outcome.master_end, SideEnd::PeerAlert(code) if *code == expected_alert);
    AttackRow {
        scenario,
        attack,
        expected,
        observed: observed(&report),
        connection_established: report.is_established(),
        passed: slave_rejected && adversary_alerted && !report.is_established(),
    }
}

/// Runs every adversarial scenario against fresh deployments seeded from
/// `seed` and collects the verdicts.
pub fn run_attack_suite(seed: u64) -> AttackReport {
    let mut rows = Vec::new();

    // Control: the honest handshake must work, or rejections below are vacuous.
    let baseline = fresh_harness(seed).run_handshake(seed);
    let baseline_ok = baseline.established_mode.as_deref() == Some("TLS-QKD");

    rows.push(scripted_ack_row(
        seed.wrapping_add(1),
        "corrupted-key-blind-ack",
        "client's key copy is corrupted; it can't read the challenge and sends a guessed ack sealed under its wrong key",
        AckStrategy::BlindCorruptKey,
        AlertCode::BadAuth,
        "slave rejects ack: BadAuth",
    ));

    // Challenge reflection: a wire adversary suppresses the honest ack and
    // echoes the challenge ciphertext back.
    {
        let run_seed = seed.wrapping_add(2);
        let harness = fresh_harness(run_seed);
        let report = harness.run_plan(RunPlan {
            seed: run_seed,
            master: MasterPlan::Machine(ModePolicy::QkdPreferred),
            slave_policy: ModePolicy::QkdPreferred,
            slave_serial: SLAVE_SERIAL,
            interceptor: Box::new(AckReflector { captured: None }),
            fault: None,
        });
        // The honest master counts itself established the moment it answers
        // the challenge; the slave's rejection then reaches it as a late
        // alert. What matters: the slave refuses, so no usable connection
        // exists.
        let slave_rejected = matches!(
            &report.outcome.slave_end,
            SideEnd::Rejected { alert_sent: Some(AlertCode::BadAuth), .. }
        );
        let master_heard_rejection = report.outcome.late_alerts.0 == Some(AlertCode::BadAuth);
        rows.push(AttackRow {
            scenario: "challenge-reflection",
            attack: "wire adversary replaces the ack with the challenge ciphertext itself",
            expected: "slave rejects ack: BadAuth",
            observed: observed(&report),
            connection_established: report.is_established(),
            passed: slave_rejected && master_heard_rejection && !report.is_established(),
        });
    }

    rows.push(scripted_ack_row(
        seed.wrapping_add(3),
        "seed-replay",
        "client opens the challenge honestly but answers with the challenge's own seed instead of a fresh one",
        AckStrategy::ReplaySeed,
        AlertCode::SeedReplayed,
        "slave rejects ack: SeedReplayed",
    ));

    rows.push(scripted_ack_row(
        seed.wrapping_add(4),
        "stale-token",
        "client authenticates its ack correctly but returns a token it invented",
        AckStrategy::WrongToken,
        AlertCode::TokenMismatch,
        "slave rejects ack: TokenMismatch",
    ));

    // Unauthorized retrieval: the server's certificate is not the SAE the
    // key was reserved for; the KME's 401 aborts the handshake.
    {
        let run_seed = seed.wrapping_add(5);
        let harness = fresh_harness(run_seed);
        let report = harness.run_plan(RunPlan {
            seed: run_seed,
            master: MasterPlan::Machine(ModePolicy::QkdPreferred),
            slave_policy: ModePolicy::QkdPreferred,
            slave_serial: 4444,
            interceptor: Box::new(Passthrough),
            fault: None,
        });
        let slave_rejected = matches!(
            &report.outcome.slave_end,
            SideEnd::Rejected { alert_sent: Some(AlertCode::KeyUnavailable), .. }
        );
        let kme_said_401 = report.slave_kme_error == Some(401);
        let master_alerted = matches!(
            &report.outcome.master_end,
            SideEnd::PeerAlert(AlertCode::KeyUnavailable)
        );
        rows.push(AttackRow {
            scenario: "foreign-key-request",
            attack: "server presents an unregistered certificate when retrieving the reserved key",
            expected: "KME answers 401; slave aborts: KeyUnavailable",
            observed: observed(&report),
            connection_established: report.is_established(),
            passed: slave_rejected && kme_said_401 && master_alerted && !report.is_established(),
        });
    }

    // Downgrade: the server will only do classical; a QKD-only client must
    // refuse rather than follow.
    {
        let run_seed = seed.wrapping_add(6);
        let harness = fresh_harness(run_seed);
        let report = harness.run_plan(RunPlan {
            seed: run_seed,
            master: MasterPlan::Machine(ModePolicy::QkdOnly),
            slave_policy: ModePolicy::ClassicalOnly,
            slave_serial: SLAVE_SERIAL,
            interceptor: Box::new(Passthrough),
            fault: None,
        });
        let master_refused = matches!(
            &report.outcome.master_end,
            SideEnd::Rejected { alert_sent: Some(AlertCode::DowngradeRefused), .. }
        );
        let slave_informed = matches!(
            &report.outcome.slave_end,
            SideEnd::PeerAlert(AlertCode::DowngradeRefused)
        );
        rows.push(AttackRow {
            scenario: "downgrade-to-classical",
            attack: "server answers a QKD offer with a classical hello; client policy is QKD-only",
            expected: "master refuses: DowngradeRefused",
            observed: observed(&report),
            connection_established: report.is_established(),
            passed: master_refused && slave_informed && !report.is_established(),
        });
    }

    // Post-handshake tampering: the handshake completes honestly, then a
    // wire adversary flips one ciphertext bit. AEAD must refuse the record,
    // killing the connection.
    {
        let run_seed = seed.wrapping_add(7);
        let harness = fresh_harness(run_seed);
        let mut report = harness.run_handshake(run_seed);
        let handshake_ok = report.established_mode.as_deref() == Some("TLS-QKD");
        let mut clean_roundtrip = false;
        let mut tamper_rejected = false;
        if let (Some(master), Some(slave)) = (
            report.outcome.master_established.as_mut(),
            report.outcome.slave_established.as_mut(),
        ) {
            let clean = master
                .protection
                .seal(REC_APPLICATION_DATA, b"telemetry 1")
                .expect("sealing succeeds");
            clean_roundtrip = slave.protection.open(&clean).ok()
                == Some((REC_APPLICATION_DATA, b"telemetry 1".to_vec()));
            let mut tampered = master
                .protection
                .seal(REC_APPLICATION_DATA, b"telemetry 2")
                .expect("sealing succeeds");
            let flip = tampered.len() - 1;
            tampered[flip] ^= 0x01;
            tamper_rejected = slave.protection.open(&tampered).is_err();
        }
        rows.push(AttackRow {
            scenario: "record-bit-flip",
            attack: "one ciphertext bit of a post-handshake record is flipped in transit",
            expected: "record layer refuses the record; connection dies",
            observed: format!(
                "handshake {}; clean record {}; tampered record {}",
                if handshake_ok { "established" } else { "failed" },
                if clean_roundtrip { "delivered" } else { "failed" },
                if tamper_rejected { "rejected" } else { "ACCEPTED" },
            ),
            // The connection is dead the moment a record fails to open.
            connection_established: !(handshake_ok && tamper_rejected),
            passed: handshake_ok && clean_roundtrip && tamper_rejected,
        });
    }

    // Corrupted key copy with an honest client: the client itself detects
    // that it cannot open the challenge and aborts.
    {
        let run_seed = seed.wrapping_add(8);
        let harness = fresh_harness(run_seed);
        let report = harness.run_plan(RunPlan {
            seed: run_seed,
            master: MasterPlan::Machine(ModePolicy::QkdPreferred),
            slave_policy: ModePolicy::QkdPreferred,
            slave_serial: SLAVE_SERIAL,
            interceptor: Box::new(KeyCopyCorruptor),
            fault: None,
        });
        let master_refused = matches!(
            &report.outcome.master_end,
            SideEnd::Rejected { alert_sent: Some(AlertCode::WrongQuantumKey), .. }
        );
        let slave_informed = matches!(
            &report.outcome.slave_end,
            SideEnd::PeerAlert(AlertCode::WrongQuantumKey)
        );
        rows.push(AttackRow {
            scenario: "corrupted-key-copy",
            attack: "the key material delivered to the honest client is corrupted en route",
            expected: "master aborts: WrongQuantumKey",
            observed: observed(&report),
            connection_established: report.is_established(),
            passed: master_refused && slave_informed && !report.is_established(),
        });
    }

    let all_passed = baseline_ok && rows.iter().all(|r| r.passed && !r.connection_established);
    AttackReport {
        baseline: format!("master {}; slave {}", baseline.master, baseline.slave),
        baseline_ok,
        rows,
        all_passed,
    }
}
