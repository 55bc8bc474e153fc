//! The blocking drivers, run over real TCP sockets.

use std::net::{TcpListener, TcpStream};
use std::thread;

use tls_qkd::handshake::{EstablishedMode, HandshakeError, MasterConfig, ModePolicy, SlaveConfig};
use tls_qkd::testutil::{test_rng, SharedPool};
use tls_qkd::{run_master_handshake, run_slave_handshake, ConnectionError};
use tls_qkd::AlertCode;

const MASTER_SAE: i64 = 7001;
const SLAVE_SAE: i64 = 7002;

#[test]
fn qkd_session_over_tcp_echoes_large_payloads() {
    let pool = SharedPool::with_keys(2);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();

    let slave_pool = pool.clone();
    let server = thread::spawn(move || -> Result<(), String> {
        let (mut sock, _) = listener.accept().map_err(|e| e.to_string())?;
        let mut kme = slave_pool.stub(SLAVE_SAE);
        let mut conn = run_slave_handshake(
            &mut sock,
            &mut kme,
            SlaveConfig {
                policy: ModePolicy::QkdPreferred,
            },
            test_rng(2),
        )
        .map_err(|e| e.to_string())?;
        if conn.mode() != EstablishedMode::TlsQkd {
            return Err("expected a qkd session".to_string());
        }
        // Echo exactly what arrives, then observe the clean shutdown.
        let payload = conn.recv_exact(&mut sock, 40_000).map_err(|e| e.to_string())?;
        conn.send(&mut sock, &payload).map_err(|e| e.to_string())?;
        match conn.recv(&mut sock) {
            Err(ConnectionError::Closed) => Ok(()),
            other => Err(format!("expected Closed, got {other:?}")),
        }
    });

    let mut sock = TcpStream::connect(addr).unwrap();
    let mut kme = pool.stub(MASTER_SAE);
    let mut conn = run_master_handshake(
        &mut sock,
        &mut kme,
        MasterConfig::qkd(SLAVE_SAE),
        test_rng(1),
    )
    .unwrap();
    assert_eq!(conn.mode(), EstablishedMode::TlsQkd);

    // 40 kB forces fragmentation across three records.
    let payload: Vec<u8> = (0..40_000u32).map(|i| (i % 251) as u8).collect();
    conn.send(&mut sock, &payload).unwrap();
    let echoed = conn.recv_exact(&mut sock, payload.len()).unwrap();
    assert_eq!(echoed, payload);
    drop(sock);

    server.join().unwrap().unwrap();
}

#[test]
fn downgrade_refusal_reaches_the_peer_as_an_alert_over_tcp() {
    let pool = SharedPool::with_keys(2);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();

    let slave_pool = pool.clone();
    let server = thread::spawn(move || {
        let (mut sock, _) = listener.accept().unwrap();
        let mut kme = slave_pool.stub(SLAVE_SAE);
        run_slave_handshake(
            &mut sock,
            &mut kme,
            SlaveConfig {
                policy: ModePolicy::ClassicalOnly,
            },
            test_rng(4),
        )
        .map(|conn| conn.mode())
    });

    let mut sock = TcpStream::connect(addr).unwrap();
    let mut kme = pool.stub(MASTER_SAE);
    let err = run_master_handshake(
        &mut sock,
        &mut kme,
        MasterConfig::qkd_only(SLAVE_SAE),
        test_rng(3),
    )
    .unwrap_err();
    assert!(matches!(err, HandshakeError::DowngradeRefused), "got {err:?}");

    let slave_result = server.join().unwrap();
    assert!(
        matches!(
            slave_result,
            Err(HandshakeError::PeerAlert(AlertCode::DowngradeRefused))
        ),
        "got {slave_result:?}"
    );
}

#[test]
fn classical_session_over_tcp() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();

    let server = thread::spawn(move || {
        let (mut sock, _) = listener.accept().unwrap();
        let pool = SharedPool::with_keys(0);
        let mut kme = pool.stub(SLAVE_SAE);
        let mut conn = run_slave_handshake(
            &mut sock,
            &mut kme,
            SlaveConfig {
                policy: ModePolicy::ClassicalOnly,
            },
            test_rng(6),
        )
        .unwrap();
        assert_eq!(conn.mode(), EstablishedMode::Classical);
        let greeting = conn.recv(&mut sock).unwrap();
        conn.send(&mut sock, &greeting).unwrap();
    });

    let mut sock = TcpStream::connect(addr).unwrap();
    let pool = SharedPool::with_keys(0);
    let mut kme = pool.stub(MASTER_SAE);
    let mut conn = run_master_handshake(
        &mut sock,
        &mut kme,
        MasterConfig::classical_only(),
        test_rng(5),
    )
    .unwrap();
    assert_eq!(conn.mode(), EstablishedMode::Classical);
    conn.send(&mut sock, b"over tcp").unwrap();
    assert_eq!(conn.recv(&mut sock).unwrap(), b"over tcp");
    server.join().unwrap();
}
