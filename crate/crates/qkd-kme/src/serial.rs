//! Extraction of the caller identity — the certificate serial number — from
//! a presented client certificate.

use thiserror::Error;
use x509_parser::prelude::{FromDer, X509Certificate};

/// Why a presented certificate could not be reduced to a serial number.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SerialError {
    #[error("certificate does not parse: {0}")]
    BadDer(String),
    #[error("serial number does not fit in 64 bits")]
    Oversized,
}

/// Parse a DER certificate and return its serial number as a `u64`.
///
/// All certificates in a deployment are issued by the deployment's own CA,
/// which assigns small sequential serials, so a serial wider than 64 bits is
/// treated as foreign and rejected rather than truncated.
pub fn serial_from_der(der: &[u8]) -> Result<u64, SerialError> {
    let (_, cert) =
        X509Certificate::from_der(der).map_err(|e| SerialError::BadDer(e.to_string()))?;
    let raw = cert.tbs_certificate.raw_serial();
    // DER encodes integers sign-extended; a serial of e.g. 0x80 arrives as
    // [0x00, 0x80]. Leading zero octets carry no value.
    let significant: &[u8] = {
        let mut bytes = raw;
        while let Some((&0, rest)) = bytes.split_first() {
            bytes = rest;
        }
        bytes
    };
    if significant.len() > 8 {
        return Err(SerialError::Oversized);
    }
    Ok(significant.iter().fold(0u64, |acc, &b| acc << 8 | b as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use qkd_testcert::{CertAuthority, CertRole};
    use rustls_pemfile::certs;

    fn issued_der(serial: u64) -> Vec<u8> {
        let ca = CertAuthority::new("Serial Test CA").unwrap();
        let issued = ca
            .issue("peer", serial, &["localhost"], CertRole::Client)
            .unwrap();
        let der = certs(&mut issued.cert_pem.as_bytes())
            .next()
            .unwrap()
            .unwrap()
            .to_vec();
        der
    }

    #[test]
    fn recovers_small_serial() {
        assert_eq!(serial_from_der(&issued_der(42)).unwrap(), 42);
    }

    #[test]
    fn recovers_serial_with_high_bit_in_leading_byte() {
        // 0x80... serials gain a DER sign byte; extraction must ignore it.
        assert_eq!(
            serial_from_der(&issued_der(0x8000_0000_0000_0001)).unwrap(),
            0x8000_0000_0000_0001
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            serial_from_der(&[0x30, 0x03, 0x01, 0x01, 0xff]),
            Err(SerialError::BadDer(_))
        ));
    }
}
