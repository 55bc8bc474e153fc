//! End-to-end handshake behavior: mode negotiation, key confirmation,
//! failure signaling, and terminal-state discipline.

use tls_qkd::consts::REC_APPLICATION_DATA;
use tls_qkd::handshake::{
    EstablishedMode, HandshakeError, HsAction, MasterConfig, MasterHandshake, ModePolicy,
    SlaveConfig, SlaveHandshake, Phase,
};
use tls_qkd::kme::{KmeAccess, KmeFailure, KmeReply, KmeRequest};
use tls_qkd::testutil::{run_pair, test_rng, SharedPool, StubKme};
use tls_qkd::AlertCode;

const MASTER_SAE: i64 = 101;
const SLAVE_SAE: i64 = 202;

fn qkd_pair(pool: &SharedPool) -> (StubKme, StubKme) {
    (pool.stub(MASTER_SAE), pool.stub(SLAVE_SAE))
}

#[test]
fn qkd_pair_establishes_in_three_flights_and_exchanges_data() {
    let pool = SharedPool::with_keys(4);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let outcome = run_pair(
        MasterConfig::qkd(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        &mut master_kme,
        &mut slave_kme,
        7,
    );

    let mut master = outcome.master.expect("master should establish");
    let mut slave = outcome.slave.expect("slave should establish");
    assert_eq!(master.mode, EstablishedMode::TlsQkd);
    assert_eq!(slave.mode, EstablishedMode::TlsQkd);

    // Three flights: ClientHello, ServerHello, challenge ack.
    assert_eq!(outcome.master_sent.len(), 2, "hello and ack");
    assert_eq!(outcome.slave_sent.len(), 1, "server hello only");

    // The pool handed out exactly one key and the slave consumed it.
    assert_eq!(pool.fresh_key_count(), 3);
    assert!(master_kme
        .requests
        .iter()
        .any(|r| matches!(r, KmeRequest::NewKey { slave_sae_id } if *slave_sae_id == SLAVE_SAE)));
    assert!(slave_kme
        .requests
        .iter()
        .any(|r| matches!(r, KmeRequest::KeyById { master_sae_id, .. } if *master_sae_id == MASTER_SAE)));

    // Application data flows in both directions under the derived protection.
    let record = master.protection.seal(REC_APPLICATION_DATA, b"hello slave").unwrap();
    let (ct, pt) = slave.protection.open(&record).unwrap();
    assert_eq!((ct, pt.as_slice()), (REC_APPLICATION_DATA, &b"hello slave"[..]));

    let record = slave.protection.seal(REC_APPLICATION_DATA, b"hello master").unwrap();
    let (ct, pt) = master.protection.open(&record).unwrap();
    assert_eq!((ct, pt.as_slice()), (REC_APPLICATION_DATA, &b"hello master"[..]));
}

#[test]
fn mode_negotiation_matrix() {
    let cases = [
        (ModePolicy::QkdPreferred, ModePolicy::QkdPreferred, EstablishedMode::TlsQkd),
        (ModePolicy::QkdPreferred, ModePolicy::ClassicalOnly, EstablishedMode::Classical),
        (ModePolicy::ClassicalOnly, ModePolicy::QkdPreferred, EstablishedMode::Classical),
        (ModePolicy::ClassicalOnly, ModePolicy::ClassicalOnly, EstablishedMode::Classical),
    ];
    for (master_policy, slave_policy, expected) in cases {
        let pool = SharedPool::with_keys(2);
        let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
        let master_cfg = match master_policy {
            ModePolicy::ClassicalOnly => MasterConfig::classical_only(),
            _ => MasterConfig::qkd(SLAVE_SAE),
        };
        let outcome = run_pair(
            master_cfg,
            SlaveConfig { policy: slave_policy },
            &mut master_kme,
            &mut slave_kme,
            11,
        );
        let mut master = outcome
            .master
            .unwrap_or_else(|e| panic!("{master_policy:?}/{slave_policy:?}: master failed: {e}"));
        let mut slave = outcome
            .slave
            .unwrap_or_else(|e| panic!("{master_policy:?}/{slave_policy:?}: slave failed: {e}"));
        assert_eq!(master.mode, expected, "{master_policy:?}/{slave_policy:?}");
        assert_eq!(slave.mode, expected, "{master_policy:?}/{slave_policy:?}");

        // Whatever the mode, the derived channels interoperate.
        let record = master.protection.seal(REC_APPLICATION_DATA, b"ping").unwrap();
        assert_eq!(slave.protection.open(&record).unwrap().1, b"ping");
        let record = slave.protection.seal(REC_APPLICATION_DATA, b"pong").unwrap();
        assert_eq!(master.protection.open(&record).unwrap().1, b"pong");

        // A classical master never touches the key pool. (A QKD master that
        // ends up downgraded has already spent its reservation — covered in
        // its own test below.)
        if master_policy == ModePolicy::ClassicalOnly {
            assert_eq!(pool.fresh_key_count(), 2, "{master_policy:?}/{slave_policy:?}");
        }
    }
}

#[test]
fn qkd_only_master_refuses_downgrade() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let outcome = run_pair(
        MasterConfig::qkd_only(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::ClassicalOnly,
        },
        &mut master_kme,
        &mut slave_kme,
        13,
    );
    assert!(matches!(
        outcome.master,
        Err(HandshakeError::DowngradeRefused)
    ));
    // The slave learns why via the alert.
    assert!(matches!(
        outcome.slave,
        Err(HandshakeError::PeerAlert(AlertCode::DowngradeRefused))
    ));
}

#[test]
fn qkd_only_slave_refuses_classical_client() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let outcome = run_pair(
        MasterConfig::classical_only(),
        SlaveConfig {
            policy: ModePolicy::QkdOnly,
        },
        &mut master_kme,
        &mut slave_kme,
        17,
    );
    assert!(matches!(
        outcome.slave,
        Err(HandshakeError::DowngradeRefused)
    ));
    assert!(matches!(
        outcome.master,
        Err(HandshakeError::PeerAlert(AlertCode::DowngradeRefused))
    ));
}

#[test]
fn master_kme_outage_aborts_before_any_hello() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    master_kme.fail_with = Some(KmeFailure::Unreachable("refused".to_string()));
    let outcome = run_pair(
        MasterConfig::qkd(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        &mut master_kme,
        &mut slave_kme,
        19,
    );
    assert!(matches!(
        outcome.master,
        Err(HandshakeError::Kme(KmeFailure::Unreachable(_)))
    ));
    // Only the abort alert ever hit the wire — no hello leaked.
    assert_eq!(outcome.master_sent.len(), 1);
    assert_eq!(outcome.master_sent[0][0], 0x15, "alert record");
    assert!(matches!(
        outcome.slave,
        Err(HandshakeError::PeerAlert(AlertCode::KeyUnavailable))
    ));
}

#[test]
fn slave_kme_missing_key_alerts_key_unavailable() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    slave_kme.fail_with = Some(KmeFailure::KeyNotFound);
    let outcome = run_pair(
        MasterConfig::qkd(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        &mut master_kme,
        &mut slave_kme,
        23,
    );
    assert!(matches!(
        outcome.slave,
        Err(HandshakeError::Kme(KmeFailure::KeyNotFound))
    ));
    assert!(matches!(
        outcome.master,
        Err(HandshakeError::PeerAlert(AlertCode::KeyUnavailable))
    ));
}

/// Hands the slave's KME replies through, but corrupts retrieved key
/// material: the two endpoints end up holding different 256-bit keys, as
/// they would after a desynchronized or tampered delivery.
struct WrongKeyKme {
    inner: StubKme,
}

impl KmeAccess for WrongKeyKme {
    fn perform(&mut self, request: &KmeRequest) -> KmeReply {
        match self.inner.perform(request) {
            KmeReply::KeyMaterial(mut material) => {
                material[0] ^= 0x01;
                KmeReply::KeyMaterial(material)
            }
            other => other,
        }
    }
}

#[test]
fn mismatched_keys_surface_as_wrong_quantum_key() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, slave_kme) = qkd_pair(&pool);
    let mut slave_kme = WrongKeyKme { inner: slave_kme };
    let outcome = run_pair(
        MasterConfig::qkd(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        &mut master_kme,
        &mut slave_kme,
        29,
    );
    // The master cannot open the challenge sealed under the slave's key.
    assert!(matches!(
        outcome.master,
        Err(HandshakeError::WrongQuantumKey)
    ));
    assert!(matches!(
        outcome.slave,
        Err(HandshakeError::PeerAlert(AlertCode::WrongQuantumKey))
    ));
}

/// Drives one machine's action list by hand, answering KME requests and
/// collecting outbound records.
fn chase(
    actions: Result<Vec<HsAction>, HandshakeError>,
    step_kme: &mut dyn KmeAccess,
    feed: &mut dyn FnMut(KmeReply) -> Result<Vec<HsAction>, HandshakeError>,
) -> (Vec<Vec<u8>>, Option<EstablishedMode>) {
    let mut records = Vec::new();
    let mut established = None;
    let mut pending = actions;
    loop {
        let actions = pending.expect("honest step should not fail");
        let mut next = None;
        for action in actions {
            match action {
                HsAction::SendRecord(r) => records.push(r),
                HsAction::KmeRequest(req) => {
                    let reply = step_kme.perform(&req);
                    next = Some(feed(reply));
                }
                HsAction::Established(e) => established = Some(e.mode),
            }
        }
        match next {
            Some(p) => pending = p,
            None => return (records, established),
        }
    }
}

#[test]
fn tampered_ack_fails_auth_and_leaves_the_slave_failed() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let mut master = MasterHandshake::new(MasterConfig::qkd(SLAVE_SAE), test_rng(31));
    let mut slave = SlaveHandshake::new(
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        test_rng(32),
    );

    let (master_out, _) = chase(master.start(), &mut master_kme, &mut |r| {
        master.on_kme_reply(r)
    });
    let client_hello = master_out.into_iter().next().expect("client hello");

    let (slave_out, _) = chase(slave.on_record(&client_hello), &mut slave_kme, &mut |r| {
        slave.on_kme_reply(r)
    });
    let server_hello = slave_out.into_iter().next().expect("server hello");

    let (mut master_out, established) =
        chase(master.on_record(&server_hello), &mut master_kme, &mut |_| {
            unreachable!("no further KME traffic")
        });
    assert_eq!(established, Some(EstablishedMode::TlsQkd));
    let mut ack = master_out.pop().expect("challenge ack");

    // Flip one ciphertext bit.
    ack[20] ^= 0x40;
    let err = slave.on_record(&ack).unwrap_err();
    assert!(matches!(err, HandshakeError::BadAuth), "got {err:?}");
    assert_eq!(err.alert_to_send(), Some(AlertCode::BadAuth));
    assert_eq!(slave.phase(), Phase::Failed);
}

#[test]
fn established_machines_refuse_further_handshake_input() {
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let outcome = run_pair(
        MasterConfig::qkd(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        &mut master_kme,
        &mut slave_kme,
        37,
    );
    assert!(outcome.master.is_ok() && outcome.slave.is_ok());

    // Rebuild a fresh established pair directly to poke at the machines.
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let mut master = MasterHandshake::new(MasterConfig::qkd(SLAVE_SAE), test_rng(38));
    let mut slave = SlaveHandshake::new(
        SlaveConfig {
            policy: ModePolicy::QkdPreferred,
        },
        test_rng(39),
    );
    let (master_out, _) = chase(master.start(), &mut master_kme, &mut |r| {
        master.on_kme_reply(r)
    });
    let (slave_out, _) = chase(
        slave.on_record(&master_out[0]),
        &mut slave_kme,
        &mut |r| slave.on_kme_reply(r),
    );
    let (master_out, _) = chase(
        master.on_record(&slave_out[0]),
        &mut master_kme,
        &mut |_| unreachable!(),
    );
    slave.on_record(&master_out[0]).expect("honest ack");
    assert_eq!(master.phase(), Phase::Established);
    assert_eq!(slave.phase(), Phase::Established);

    // Terminal machines reject any further input without changing phase.
    assert!(master.on_record(&[0x16, 0x0E, 0x00, 0x00, 0x00]).is_err());
    assert!(slave.on_record(&[0x16, 0x0E, 0x00, 0x00, 0x00]).is_err());
    assert!(master
        .on_kme_reply(KmeReply::OwnSaeId(MASTER_SAE))
        .is_err());
    assert_eq!(master.phase(), Phase::Established);
    assert_eq!(slave.phase(), Phase::Established);
}

#[test]
fn failed_machines_stay_failed() {
    let mut slave = SlaveHandshake::new(
        SlaveConfig {
            policy: ModePolicy::QkdOnly,
        },
        test_rng(41),
    );
    // A classical hello to a QKD-only slave fails it…
    let classical_hello = {
        let pool = SharedPool::with_keys(1);
        let mut kme = pool.stub(MASTER_SAE);
        let mut master = MasterHandshake::new(MasterConfig::classical_only(), test_rng(42));
        let (out, _) = chase(master.start(), &mut kme, &mut |_| unreachable!());
        out.into_iter().next().unwrap()
    };
    assert!(matches!(
        slave.on_record(&classical_hello).unwrap_err(),
        HandshakeError::DowngradeRefused
    ));
    assert_eq!(slave.phase(), Phase::Failed);

    // …and it stays failed no matter what arrives afterwards.
    assert!(slave.on_record(&classical_hello).is_err());
    assert!(slave
        .on_kme_reply(KmeReply::OwnSaeId(SLAVE_SAE))
        .is_err());
    assert_eq!(slave.phase(), Phase::Failed);
}

#[test]
fn qkd_master_talks_to_classical_slave_without_touching_the_pool_twice() {
    // A QkdPreferred master burns one reserved key when the slave turns out
    // to be classical: the key was reserved before the downgrade was known.
    let pool = SharedPool::with_keys(2);
    let (mut master_kme, mut slave_kme) = qkd_pair(&pool);
    let outcome = run_pair(
        MasterConfig::qkd(SLAVE_SAE),
        SlaveConfig {
            policy: ModePolicy::ClassicalOnly,
        },
        &mut master_kme,
        &mut slave_kme,
        43,
    );
    assert_eq!(
        outcome.established_modes(),
        Some((EstablishedMode::Classical, EstablishedMode::Classical))
    );
    assert_eq!(pool.fresh_key_count(), 1, "the reserved key is spent");
    // The classical slave never asked its KME for anything.
    assert!(slave_kme.requests.is_empty());
}
