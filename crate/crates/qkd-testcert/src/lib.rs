//! A tiny certificate authority for KME/SAE deployments.
//!
//! Every identity in the key-delivery system — KMEs, SAEs, admin clients —
//! authenticates over mutual TLS, and the KME maps each peer certificate's
//! *serial number* to a registered identity. This crate mints a self-signed
//! CA and issues end-entity certificates with caller-chosen serials so that
//! mapping can be provisioned deterministically.
//!
//! Certificates are ECDSA P-256, which every endpoint in the workspace
//! accepts. Issued PEMs are written by the caller; nothing here touches the
//! filesystem.

#![forbid(unsafe_code)]

use rcgen::{
    BasicConstraints, CertificateParams, CertifiedIssuer, DnType, ExtendedKeyUsagePurpose, IsCa,
    KeyPair, KeyUsagePurpose, SerialNumber,
};

/// Re-exported error type: everything here fails with the generator's error.
pub type CertError = rcgen::Error;

/// Which TLS roles an issued certificate may assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertRole {
    /// TLS server only.
    Server,
    /// TLS client only.
    Client,
    /// Both roles — a KME is a server to SAEs and a client to peer KMEs.
    ServerAndClient,
}

impl CertRole {
    fn extended_usages(self) -> Vec<ExtendedKeyUsagePurpose> {
        match self {
            CertRole::Server => vec![ExtendedKeyUsagePurpose::ServerAuth],
            CertRole::Client => vec![ExtendedKeyUsagePurpose::ClientAuth],
            CertRole::ServerAndClient => vec![
                ExtendedKeyUsagePurpose::ServerAuth,
                ExtendedKeyUsagePurpose::ClientAuth,
            ],
        }
    }
}

/// A certificate issued by a [`CertAuthority`], serialized and ready to use.
#[derive(Debug, Clone)]
pub struct IssuedCert {
    /// Leaf certificate, PEM.
    pub cert_pem: String,
    /// Private key, PKCS#8 PEM.
    pub key_pem: String,
    /// The serial number carried by the certificate.
    pub serial: u64,
}

/// A self-signed certificate authority that issues end-entity certificates
/// with caller-chosen serial numbers.
pub struct CertAuthority {
    issuer: CertifiedIssuer<'static, KeyPair>,
    ca_key_pem: String,
}

impl CertAuthority {
    /// Mints a fresh CA with the given common name.
    pub fn new(common_name: &str) -> Result<CertAuthority, CertError> {
        let key = KeyPair::generate()?;
        let ca_key_pem = key.serialize_pem();
        let mut params = CertificateParams::new(Vec::<String>::new())?;
        params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
        params
            .distinguished_name
            .push(DnType::CommonName, common_name);
        params.key_usages = vec![
            KeyUsagePurpose::KeyCertSign,
            KeyUsagePurpose::CrlSign,
            KeyUsagePurpose::DigitalSignature,
        ];
        let issuer = CertifiedIssuer::self_signed(params, key)?;
        Ok(CertAuthority { issuer, ca_key_pem })
    }

    /// The CA certificate, PEM — this is every endpoint's trust root.
    pub fn ca_cert_pem(&self) -> String {
        self.issuer.pem()
    }

    /// The CA private key, PEM. Only needed to issue further certificates.
    pub fn ca_key_pem(&self) -> &str {
        &self.ca_key_pem
    }

    /// Issues an end-entity certificate.
    ///
    /// `san` entries are DNS names, except strings that parse as IP
    /// addresses, which become IP SANs.
    pub fn issue(
        &self,
        common_name: &str,
        serial: u64,
        san: &[&str],
        role: CertRole,
    ) -> Result<IssuedCert, CertError> {
        let key = KeyPair::generate()?;
        let san: Vec<String> = san.iter().map(|s| s.to_string()).collect();
        let mut params = CertificateParams::new(san)?;
        params
            .distinguished_name
            .push(DnType::CommonName, common_name);
        params.serial_number = Some(SerialNumber::from(serial));
        params.use_authority_key_identifier_extension = true;
        params.key_usages = vec![KeyUsagePurpose::DigitalSignature];
        params.extended_key_usages = role.extended_usages();
        let cert = params.signed_by(&key, &self.issuer)?;
        Ok(IssuedCert {
            cert_pem: cert.pem(),
            key_pem: key.serialize_pem(),
            serial,
        })
    }
}
