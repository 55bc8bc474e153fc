//! Routing, authorization, and key lifecycle behaviour, exercised through the
//! transport-free request handler exactly as the TLS listeners invoke it.
//!
//! Two cores ("KME A" and "KME B") are wired with mirrored key material the
//! way a real link would be provisioned, so master-side and slave-side
//! behaviour can both be driven, including the full A-reserves → B-activates
//! → B-delivers handoff.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use qkd_kme::config::{
    AdminConfig, KmeConfig, ListenConfig, MaterialConfig, PeerConfig, SaeConfig, TlsConfig,
};
use qkd_kme::{
    handle, ActivationMsg, ActivationNotifier, ApiResponse, KeyContainer, KmeCore, ListenerRole,
    NotifyFailure,
};
use qkd_keystore::{derive_key_uuid, KeyState, KeyStore, KmeId, SaeId};

const KME_A: KmeId = 1;
const KME_B: KmeId = 2;
const MASTER_SAE: SaeId = 101; // homed on A, serial 1101
const SLAVE_SAE: SaeId = 202; // homed on B, serial 2202
const OTHER_B_SAE: SaeId = 203; // homed on B, serial 2203
const LOCAL_SAE: SaeId = 303; // homed on A, serial 3303
const MASTER_SERIAL: u64 = 1101;
const SLAVE_SERIAL: u64 = 2202;
const OTHER_B_SERIAL: u64 = 2203;
const PEER_A_SERIAL: u64 = 5001; // KME A's own certificate
const PEER_B_SERIAL: u64 = 5002; // KME B's own certificate
const ADMIN_SERIAL: u64 = 9001;
const UNKNOWN_SERIAL: u64 = 7777;

/// Test double for the peer link: records every activation instead of
/// posting it, and can be switched into an outage.
#[derive(Clone, Default)]
struct RecordingNotifier(Arc<RecorderInner>);

#[derive(Default)]
struct RecorderInner {
    sent: Mutex<Vec<(KmeId, ActivationMsg)>>,
    fail: AtomicBool,
}

impl RecordingNotifier {
    fn sent(&self) -> Vec<(KmeId, ActivationMsg)> {
        self.0.sent.lock().unwrap().clone()
    }

    fn set_outage(&self, outage: bool) {
        self.0.fail.store(outage, Ordering::SeqCst);
    }
}

impl ActivationNotifier for RecordingNotifier {
    async fn notify(
        &self,
        peer: &PeerConfig,
        activation: &ActivationMsg,
    ) -> Result<(), NotifyFailure> {
        if self.0.fail.load(Ordering::SeqCst) {
            return Err(NotifyFailure::Unreachable("injected outage".into()));
        }
        self.0
            .sent
            .lock()
            .unwrap()
            .push((peer.kme_id, activation.clone()));
        Ok(())
    }
}

fn registry() -> Vec<SaeConfig> {
    vec![
        SaeConfig {
            sae_id: MASTER_SAE,
            cert_serial: MASTER_SERIAL,
            home_kme: KME_A,
        },
        SaeConfig {
            sae_id: SLAVE_SAE,
            cert_serial: SLAVE_SERIAL,
            home_kme: KME_B,
        },
        SaeConfig {
            sae_id: OTHER_B_SAE,
            cert_serial: OTHER_B_SERIAL,
            home_kme: KME_B,
        },
        SaeConfig {
            sae_id: LOCAL_SAE,
            cert_serial: 3303,
            home_kme: KME_A,
        },
    ]
}

fn config_for(kme_id: KmeId) -> KmeConfig {
    let (peer_id, peer_serial) = if kme_id == KME_A {
        (KME_B, PEER_B_SERIAL)
    } else {
        (KME_A, PEER_A_SERIAL)
    };
    let config = KmeConfig {
        kme_id,
        listen: ListenConfig {
            sae: "127.0.0.1:0".parse().unwrap(),
            kme: "127.0.0.1:0".parse().unwrap(),
            admin: "127.0.0.1:0".parse().unwrap(),
        },
        material: MaterialConfig {
            dir: PathBuf::from("unused-in-router-tests"),
            journal: None,
        },
        tls: TlsConfig {
            cert: PathBuf::from("unused.pem"),
            key: PathBuf::from("unused.key"),
            ca: PathBuf::from("unused-ca.pem"),
        },
        notify_timeout_ms: 1000,
        peers: vec![PeerConfig {
            kme_id: peer_id,
            address: "127.0.0.1:1".into(),
            cert_serial: peer_serial,
        }],
        saes: registry(),
        admins: vec![AdminConfig {
            cert_serial: ADMIN_SERIAL,
        }],
    };
    config.validate().expect("test config is valid");
    config
}

fn material(index: usize) -> [u8; 32] {
    [index as u8 + 1; 32]
}

fn stream(count: usize) -> Vec<u8> {
    (0..count).flat_map(material).collect()
}

/// A core for `kme_id` holding `keys` mirrored keys toward its one peer.
fn core_with_keys(kme_id: KmeId, keys: usize) -> (KmeCore<RecordingNotifier>, RecordingNotifier) {
    let peer = if kme_id == KME_A { KME_B } else { KME_A };
    let store = KeyStore::new();
    store.ingest_bytes(peer, &stream(keys)).unwrap();
    let notifier = RecordingNotifier::default();
    let core = KmeCore::new(&config_for(kme_id), store, notifier.clone());
    (core, notifier)
}

async fn call(
    core: &KmeCore<RecordingNotifier>,
    role: ListenerRole,
    method: &str,
    url: &str,
    serial: Option<u64>,
    body: &[u8],
) -> ApiResponse {
    let (path, query) = match url.split_once('?') {
        Some((path, query)) => (path, Some(query)),
        None => (url, None),
    };
    handle(core, role, method, path, query, serial, body).await
}

fn container(response: &ApiResponse) -> KeyContainer {
    assert_eq!(response.status, 200, "body: {}", response.body);
    serde_json::from_value(response.body.clone()).expect("key container body")
}

fn activation_body(key_id: &str, master: SaeId, slave: SaeId) -> Vec<u8> {
    serde_json::to_vec(&ActivationMsg {
        key_id: key_id.into(),
        master_sae_id: master,
        slave_sae_id: slave,
    })
    .unwrap()
}

#[tokio::test]
async fn enc_keys_delivers_front_of_pool_and_notifies_peer() {
    let (core, notifier) = core_with_keys(KME_A, 3);
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;

    let container = container(&response);
    assert_eq!(container.keys.len(), 1);
    let entry = &container.keys[0];
    let expected_uuid = derive_key_uuid(&material(0));
    assert_eq!(entry.key_id, expected_uuid.to_string());
    assert_eq!(BASE64.decode(&entry.key).unwrap(), material(0));

    // The peer KME was told, with exactly the delivered pairing.
    assert_eq!(
        notifier.sent(),
        vec![(
            KME_B,
            ActivationMsg {
                key_id: expected_uuid.to_string(),
                master_sae_id: MASTER_SAE,
                slave_sae_id: SLAVE_SAE,
            }
        )]
    );
    // The local copy is held RESERVED; only the slave's side consumes.
    assert_eq!(
        core.store().state_of(&expected_uuid).unwrap().0,
        KeyState::Reserved
    );
}

#[tokio::test]
async fn enc_keys_caller_must_be_a_registered_sae() {
    let (core, notifier) = core_with_keys(KME_A, 1);
    for (serial, expected_reason) in [
        (None, "client certificate required"),
        (Some(UNKNOWN_SERIAL), "unknown client certificate"),
        // A known admin certificate is still not an SAE.
        (Some(ADMIN_SERIAL), "unauthorized"),
    ] {
        let response = call(
            &core,
            ListenerRole::Sae,
            "POST",
            "/api/v1/keys/202/enc_keys",
            serial,
            b"",
        )
        .await;
        assert_eq!(response.status, 401, "serial {serial:?}");
        assert_eq!(response.body["reason"], expected_reason, "serial {serial:?}");
    }
    assert!(notifier.sent().is_empty(), "no activation may have left");
    assert_eq!(core.store().status(KME_B).stored_key_count, 1);
}

#[tokio::test]
async fn enc_keys_unroutable_slaves_are_404() {
    let (core, _) = core_with_keys(KME_A, 1);
    // Unregistered SAE.
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/999/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 404);
    assert_eq!(response.body["reason"], "no route to SAE 999");

    // Registered, but homed on this same KME: keys exist only on inter-KME
    // links, so there is no pool to draw from.
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/303/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 404);
    assert_eq!(response.body["reason"], "no route to SAE 303");
}

#[tokio::test]
async fn enc_keys_exhaustion_is_503_with_pinned_reason() {
    let (core, _) = core_with_keys(KME_A, 2);
    for _ in 0..2 {
        let response = call(
            &core,
            ListenerRole::Sae,
            "POST",
            "/api/v1/keys/202/enc_keys",
            Some(MASTER_SERIAL),
            b"",
        )
        .await;
        assert_eq!(response.status, 200);
    }
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 503);
    assert_eq!(response.body["reason"], "key pool exhausted");

    let status = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/keys/202/status",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(status.body["stored_key_count"], 0);
}

#[tokio::test]
async fn notify_failure_rolls_back_and_preserves_delivery_order() {
    let (core, notifier) = core_with_keys(KME_A, 2);
    notifier.set_outage(true);
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 502);
    assert!(
        response.body["reason"]
            .as_str()
            .unwrap()
            .starts_with("peer notification failed"),
        "body: {}",
        response.body
    );
    // Nothing was burned: the pool is exactly as before.
    assert_eq!(core.store().status(KME_B).stored_key_count, 2);

    // Once the peer link heals, the same front key is handed out — the
    // failed attempt left no gap in the pool.
    notifier.set_outage(false);
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    let container = container(&response);
    assert_eq!(
        container.keys[0].key_id,
        derive_key_uuid(&material(0)).to_string()
    );
}

#[tokio::test]
async fn activation_then_one_time_delivery_on_slave_kme() {
    let (core_b, _) = core_with_keys(KME_B, 2);
    let uuid = derive_key_uuid(&material(0)).to_string();

    let response = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        &activation_body(&uuid, MASTER_SAE, SLAVE_SAE),
    )
    .await;
    assert_eq!(response.status, 200, "body: {}", response.body);
    assert_eq!(response.body["result"], "activated");

    let url = format!("/api/v1/keys/101/dec_keys?key_ID={uuid}");
    let response = call(
        &core_b,
        ListenerRole::Sae,
        "GET",
        &url,
        Some(SLAVE_SERIAL),
        b"",
    )
    .await;
    let container = container(&response);
    assert_eq!(BASE64.decode(&container.keys[0].key).unwrap(), material(0));

    // A second retrieval of a consumed key is gone for good.
    let response = call(
        &core_b,
        ListenerRole::Sae,
        "GET",
        &url,
        Some(SLAVE_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 410);
    assert_eq!(response.body["reason"], "key already consumed");
}

#[tokio::test]
async fn dec_keys_rejection_table() {
    let (core_b, _) = core_with_keys(KME_B, 2);
    let uuid = derive_key_uuid(&material(0)).to_string();
    let activate = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        &activation_body(&uuid, MASTER_SAE, SLAVE_SAE),
    )
    .await;
    assert_eq!(activate.status, 200);

    let good_url = format!("/api/v1/keys/101/dec_keys?key_ID={uuid}");
    let unknown_uuid = derive_key_uuid(&material(9)).to_string();
    let cases: Vec<(String, Option<u64>, u16, &str)> = vec![
        // No certificate / unknown certificate: refused before routing.
        (good_url.clone(), None, 401, "no certificate"),
        (good_url.clone(), Some(UNKNOWN_SERIAL), 401, "unknown serial"),
        // A different SAE on this KME must not receive the key.
        (good_url.clone(), Some(OTHER_B_SERIAL), 401, "wrong slave"),
        // Naming the wrong master SAE in the path is an authorization
        // failure, not a lookup failure: the key exists, but not for the
        // pairing the caller claims.
        (
            format!("/api/v1/keys/203/dec_keys?key_ID={uuid}"),
            Some(SLAVE_SERIAL),
            401,
            "wrong master in path",
        ),
        (
            format!("/api/v1/keys/101/dec_keys?key_ID={unknown_uuid}"),
            Some(SLAVE_SERIAL),
            404,
            "unknown key id",
        ),
        (
            "/api/v1/keys/101/dec_keys?key_ID=not-a-uuid".to_string(),
            Some(SLAVE_SERIAL),
            400,
            "malformed key id",
        ),
        (
            "/api/v1/keys/101/dec_keys".to_string(),
            Some(SLAVE_SERIAL),
            400,
            "missing key_ID",
        ),
    ];
    for (url, serial, expected_status, label) in cases {
        let response = call(&core_b, ListenerRole::Sae, "GET", &url, serial, b"").await;
        assert_eq!(response.status, expected_status, "case: {label}");
    }

    // None of the rejections consumed the key.
    let response = call(
        &core_b,
        ListenerRole::Sae,
        "GET",
        &good_url,
        Some(SLAVE_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 200, "key survived the rejected attempts");
}

#[tokio::test]
async fn activation_replay_table() {
    let (core_b, _) = core_with_keys(KME_B, 2);
    let uuid = derive_key_uuid(&material(0)).to_string();
    let unknown_uuid = derive_key_uuid(&material(9)).to_string();

    let fresh = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        &activation_body(&uuid, MASTER_SAE, SLAVE_SAE),
    )
    .await;
    assert_eq!((fresh.status, &fresh.body["result"]), (200, &"activated".into()));

    // A retransmit of the identical activation is idempotent.
    let replay = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        &activation_body(&uuid, MASTER_SAE, SLAVE_SAE),
    )
    .await;
    assert_eq!(
        (replay.status, &replay.body["result"]),
        (200, &"already-active".into())
    );

    // Any disagreement with the recorded pairing is a conflict.
    for (master, slave, label) in [
        (LOCAL_SAE, SLAVE_SAE, "different master"),
        (MASTER_SAE, OTHER_B_SAE, "different slave"),
    ] {
        let response = call(
            &core_b,
            ListenerRole::Kme,
            "POST",
            "/api/v1/internal/activate",
            Some(PEER_A_SERIAL),
            &activation_body(&uuid, master, slave),
        )
        .await;
        assert_eq!(response.status, 409, "case: {label}");
    }

    // Unknown key: the pools may have diverged; refuse loudly.
    let response = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        &activation_body(&unknown_uuid, MASTER_SAE, SLAVE_SAE),
    )
    .await;
    assert_eq!(response.status, 404);

    // Only federated peers may activate: an SAE certificate (or none) is
    // refused even on the right listener with a well-formed body.
    for serial in [Some(SLAVE_SERIAL), Some(ADMIN_SERIAL), None] {
        let response = call(
            &core_b,
            ListenerRole::Kme,
            "POST",
            "/api/v1/internal/activate",
            serial,
            &activation_body(&uuid, MASTER_SAE, SLAVE_SAE),
        )
        .await;
        assert_eq!(response.status, 401, "serial {serial:?}");
    }

    // Unparseable body.
    let response = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        b"{not json",
    )
    .await;
    assert_eq!(response.status, 400);
}

#[tokio::test]
async fn status_reports_link_pool() {
    let (core, _) = core_with_keys(KME_A, 3);
    let response = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/keys/202/status",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 200);
    assert_eq!(response.body["source_KME_ID"], KME_A);
    assert_eq!(response.body["target_KME_ID"], KME_B);
    assert_eq!(response.body["key_size"], 256);
    assert_eq!(response.body["stored_key_count"], 3);
    assert_eq!(response.body["max_keys_per_request"], 1);

    let enc = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(enc.status, 200);
    let response = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/keys/202/status",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.body["stored_key_count"], 2);

    // Status follows the same routing rules as reservation.
    let response = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/keys/999/status",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 404);
}

#[tokio::test]
async fn sae_info_me_reports_registered_id() {
    let (core, _) = core_with_keys(KME_A, 1);
    let response = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/sae/info/me",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 200);
    assert_eq!(response.body["SAE_ID"], MASTER_SAE);

    let response = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/sae/info/me",
        Some(ADMIN_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 401, "an admin is not an SAE");
}

#[tokio::test]
async fn entropy_route_is_admin_gated_and_reports_material() {
    let peer = KME_B;
    let store = KeyStore::new();
    // One all-zero key. (Identical materials share an identifier, so a
    // constant stream can only ever yield one key.)
    store.ingest_bytes(peer, &[0u8; 32]).unwrap();
    let core = KmeCore::new(&config_for(KME_A), store, RecordingNotifier::default());

    // Only the admin credential may read entropy.
    for serial in [Some(MASTER_SERIAL), Some(PEER_B_SERIAL), None] {
        let response = call(
            &core,
            ListenerRole::Admin,
            "GET",
            "/api/v1/admin/entropy/2",
            serial,
            b"",
        )
        .await;
        assert_eq!(response.status, 401, "serial {serial:?}");
    }

    let response = call(
        &core,
        ListenerRole::Admin,
        "GET",
        "/api/v1/admin/entropy/2",
        Some(ADMIN_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 200);
    assert_eq!(response.body["peer_kme_id"], peer);
    assert_eq!(response.body["total_bytes"], 32);
    // Constant material has zero entropy — the broken-source alarm case.
    assert_eq!(response.body["entropy_bits_per_byte"], 0.0);
    assert_eq!(response.body["stored_key_count"], 1);
    assert_eq!(response.body["total_key_count"], 1);

    // A link that never ingested anything has no report to give.
    let response = call(
        &core,
        ListenerRole::Admin,
        "GET",
        "/api/v1/admin/entropy/42",
        Some(ADMIN_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 404);
}

#[tokio::test]
async fn unauthenticated_requests_get_only_401_everywhere() {
    let (core, _) = core_with_keys(KME_A, 2);
    let paths = [
        "/",
        "/api",
        "/api/v1",
        "/api/v1/keys/202/enc_keys",
        "/api/v1/keys/202/enc_keys?x=1",
        "/api/v1/keys/101/dec_keys?key_ID=00000000-0000-5000-8000-000000000000",
        "/api/v1/keys/202/status",
        "/api/v1/sae/info/me",
        "/api/v1/internal/activate",
        "/api/v1/admin/entropy/2",
        "/api/v1/admin/entropy/999",
        "/api/v1/keys/not-a-number/enc_keys",
        "/no/such/route",
        "/../../etc/passwd",
    ];
    let methods = ["GET", "POST", "PUT", "DELETE", "PATCH"];
    let roles = [ListenerRole::Sae, ListenerRole::Kme, ListenerRole::Admin];
    for role in roles {
        for method in methods {
            for path in paths {
                for serial in [None, Some(UNKNOWN_SERIAL)] {
                    let response = call(&core, role, method, path, serial, b"{}").await;
                    assert_eq!(
                        response.status, 401,
                        "{role:?} {method} {path} serial {serial:?} leaked {}",
                        response.status
                    );
                }
            }
        }
    }
    // No probe touched the pool.
    assert_eq!(core.store().status(KME_B).stored_key_count, 2);
}

#[tokio::test]
async fn routes_are_scoped_to_their_listener() {
    let (core, _) = core_with_keys(KME_A, 2);
    // Key delivery exists only on the SAE listener.
    let response = call(
        &core,
        ListenerRole::Kme,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(PEER_B_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 404);
    // Activation exists only on the KME listener.
    let response = call(
        &core,
        ListenerRole::Sae,
        "POST",
        "/api/v1/internal/activate",
        Some(MASTER_SERIAL),
        &activation_body("x", 1, 2),
    )
    .await;
    assert_eq!(response.status, 404);
    // Entropy exists only on the admin listener.
    let response = call(
        &core,
        ListenerRole::Sae,
        "GET",
        "/api/v1/admin/entropy/2",
        Some(ADMIN_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 404);

    // Wrong method on an existing route.
    let response = call(
        &core,
        ListenerRole::Kme,
        "GET",
        "/api/v1/internal/activate",
        Some(PEER_B_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 405);
    let response = call(
        &core,
        ListenerRole::Sae,
        "DELETE",
        "/api/v1/keys/202/status",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    assert_eq!(response.status, 405);
}

/// The full inter-KME handoff, with the recorded activation hand-carried
/// from A to B the way A's HTTP notifier would deliver it.
#[tokio::test]
async fn mirrored_cores_hand_the_same_key_across() {
    let (core_a, notifier_a) = core_with_keys(KME_A, 3);
    let (core_b, _) = core_with_keys(KME_B, 3);

    let response = call(
        &core_a,
        ListenerRole::Sae,
        "POST",
        "/api/v1/keys/202/enc_keys",
        Some(MASTER_SERIAL),
        b"",
    )
    .await;
    let master_container = container(&response);
    let delivered = &master_container.keys[0];

    let (peer, activation) = notifier_a.sent().pop().expect("one activation sent");
    assert_eq!(peer, KME_B);
    let response = call(
        &core_b,
        ListenerRole::Kme,
        "POST",
        "/api/v1/internal/activate",
        Some(PEER_A_SERIAL),
        &serde_json::to_vec(&activation).unwrap(),
    )
    .await;
    assert_eq!(response.status, 200);

    let response = call(
        &core_b,
        ListenerRole::Sae,
        "GET",
        &format!(
            "/api/v1/keys/{}/dec_keys?key_ID={}",
            MASTER_SAE, activation.key_id
        ),
        Some(SLAVE_SERIAL),
        b"",
    )
    .await;
    let slave_container = container(&response);
    assert_eq!(slave_container.keys[0].key, delivered.key);
    assert_eq!(slave_container.keys[0].key_id, delivered.key_id);
}
