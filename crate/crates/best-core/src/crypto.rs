//! Identity, signing, verification, and digest primitives shared by every
//! other module.
//!
//! Simulation grade but structurally faithful: forging a signature requires
//! the matching private key. One fixed 256-bit digest (SHA-256) and one
//! deterministic signature scheme (Ed25519) sit behind this interface so the
//! rest of the system never names a concrete algorithm.

use alloc::string::String;
use alloc::vec::Vec;

use ed25519_dalek::{Signer, Verifier};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// Fixed-length cryptographic digest over a canonical byte serialization.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Digest(#[serde(with = "serde_hex32")] pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; DIGEST_LEN] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl core::fmt::Debug for Digest {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

/// 32-byte deterministic digest of a message.
pub fn digest(message: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(message);
    Digest(h.finalize().into())
}

/// Verification key. Vehicles and RSUs carry the same primitive; the role is
/// contextual (record signing, block production, validation replies).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "serde_hex32")] pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<PublicKey> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; PUBLIC_KEY_LEN] = bytes.try_into().ok()?;
        Some(PublicKey(arr))
    }
}

impl core::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

/// Signature bound to the public key that produced it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    #[serde(with = "serde_sig_bytes")]
    pub bytes: [u8; SIGNATURE_LEN],
    pub signer: PublicKey,
}

impl core::fmt::Debug for Signature {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.bytes[..8]))
    }
}

/// Keys and digests travel as lowercase hex in every serialized artifact.
mod serde_hex32 {
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        hex::encode(b).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v: Vec<u8> = hex::decode(&s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("bad hex length"))
    }
}

mod serde_sig_bytes {
    use super::SIGNATURE_LEN;
    use alloc::string::String;
    use alloc::vec::Vec;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8; SIGNATURE_LEN], s: S) -> Result<S::Ok, S::Error> {
        hex::encode(b).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; SIGNATURE_LEN], D::Error> {
        let s = String::deserialize(d)?;
        let v: Vec<u8> = hex::decode(&s).map_err(serde::de::Error::custom)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("bad signature length"))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum IdentityKind {
    Vehicle,
    Rsu,
}

/// A participant identity. The id is derived from the public key by digesting
/// it, so no two identities share a public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Identity {
    pub id: Digest,
    pub public_key: PublicKey,
    pub kind: IdentityKind,
}

/// Private signing key. Kept out of every serialized artifact.
#[derive(Clone)]
pub struct PrivateKey(ed25519_dalek::SigningKey);

impl core::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "PrivateKey(..)")
    }
}

/// Deterministically derive an identity and its private key from a seed.
///
/// Distinct seeds yield distinct keys except with negligible probability: the
/// key material is a 256-bit digest of (seed, kind).
pub fn generate_identity(seed: u64, kind: IdentityKind) -> (Identity, PrivateKey) {
    let mut material = [0u8; 16];
    material[..8].copy_from_slice(&seed.to_be_bytes());
    material[8] = match kind {
        IdentityKind::Vehicle => 0,
        IdentityKind::Rsu => 1,
    };
    material[9..16].copy_from_slice(b"best-id");
    let secret = digest(&material);
    let signing = ed25519_dalek::SigningKey::from_bytes(&secret.0);
    let public = PublicKey(signing.verifying_key().to_bytes());
    let identity = Identity {
        id: digest(&public.0),
        public_key: public,
        kind,
    };
    (identity, PrivateKey(signing))
}

impl PrivateKey {
    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.0.verifying_key().to_bytes())
    }
}

/// Sign a message. Signing is deterministic: same key and message, same bytes.
pub fn sign(message: &[u8], key: &PrivateKey) -> Signature {
    let sig = key.0.sign(message);
    Signature {
        bytes: sig.to_bytes(),
        signer: key.public_key(),
    }
}

/// Verify a signature against a message and public key.
pub fn verify(message: &[u8], signature: &Signature, public_key: &PublicKey) -> bool {
    if signature.signer != *public_key {
        return false;
    }
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&public_key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.bytes);
    vk.verify(message, &sig).is_ok()
}

/// Canonical byte writer: fixed field order, fixed-width big-endian integers,
/// length-prefixed byte sequences. Digest stability depends on this.
#[derive(Default)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn fixed(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn opt_f64(&mut self, v: Option<f64>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(x) => self.u8(1).f64(x),
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Types with a total, injective canonical serialization. Whatever gets
/// signed or digested goes through this.
pub trait Canonical {
    fn write_canonical(&self, w: &mut CanonicalWriter);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        self.write_canonical(&mut w);
        w.finish()
    }

    fn canonical_digest(&self) -> Digest {
        digest(&self.canonical_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Golden value for the chosen digest: SHA-256 of the empty input.
    const SHA256_EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

    #[test]
    fn digest_of_empty_matches_reference_constant() {
        assert_eq!(digest(b"").to_hex(), SHA256_EMPTY);
    }

    #[test]
    fn digest_is_deterministic() {
        assert_eq!(digest(b"hello"), digest(b"hello"));
    }

    #[test]
    fn digest_collision_scan_on_random_corpus() {
        // Brute-force collision scan over 10^4 distinct messages.
        use rand_core::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(42);
        let mut seen = std::collections::HashSet::new();
        for i in 0u32..10_000 {
            let mut msg = [0u8; 24];
            rng.fill_bytes(&mut msg[..20]);
            msg[20..].copy_from_slice(&i.to_be_bytes()); // force distinctness
            assert!(seen.insert(digest(&msg)), "collision at message {i}");
        }
    }

    #[test]
    fn identity_generation_is_deterministic_and_distinct() {
        let (a1, _) = generate_identity(7, IdentityKind::Vehicle);
        let (a2, _) = generate_identity(7, IdentityKind::Vehicle);
        assert_eq!(a1, a2);
        let (b, _) = generate_identity(8, IdentityKind::Vehicle);
        assert_ne!(a1.public_key, b.public_key);
    }

    #[test]
    fn identity_id_is_digest_of_public_key() {
        let (id, _) = generate_identity(7, IdentityKind::Rsu);
        assert_eq!(id.id, digest(&id.public_key.0));
    }

    #[test]
    fn sign_verify_round_trip() {
        let (id, key) = generate_identity(1, IdentityKind::Vehicle);
        let sig = sign(b"status", &key);
        assert!(verify(b"status", &sig, &id.public_key));
    }

    #[test]
    fn tampered_message_fails_verification() {
        let (id, key) = generate_identity(1, IdentityKind::Vehicle);
        let sig = sign(b"status", &key);
        assert!(!verify(b"statut", &sig, &id.public_key));
    }

    #[test]
    fn wrong_key_fails_verification() {
        let (_, key) = generate_identity(1, IdentityKind::Vehicle);
        let (other, _) = generate_identity(2, IdentityKind::Vehicle);
        let sig = sign(b"status", &key);
        assert!(!verify(b"status", &sig, &other.public_key));
    }

    proptest! {
        // Adversarial generator: replay under another key, truncation,
        // key-swap. None of these may verify without the private key.
        #[test]
        fn unforgeability_at_simulation_grade(
            msg in proptest::collection::vec(any::<u8>(), 0..64),
            flip in 0usize..64,
            seed_a in 0u64..1000,
            seed_b in 1000u64..2000,
        ) {
            let (id_a, key_a) = generate_identity(seed_a, IdentityKind::Vehicle);
            let (id_b, _) = generate_identity(seed_b, IdentityKind::Vehicle);
            let sig = sign(&msg, &key_a);

            // key-swap: signature replayed under a different public key
            prop_assert!(!verify(&msg, &sig, &id_b.public_key));
            let swapped = Signature { bytes: sig.bytes, signer: id_b.public_key };
            prop_assert!(!verify(&msg, &swapped, &id_b.public_key));

            // truncation / bit flip of the signature body
            let mut mangled = sig;
            mangled.bytes[flip % SIGNATURE_LEN] ^= 0x01;
            prop_assert!(!verify(&msg, &mangled, &id_a.public_key));

            // replay against an extended message
            let mut extended = msg.clone();
            extended.push(0);
            prop_assert!(!verify(&extended, &sig, &id_a.public_key));
        }
    }
}
