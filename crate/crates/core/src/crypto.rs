//! Hashing, signatures, and envelope encryption used by every transaction.
//!
//! One fixed algorithm per role: SHA-256 for digests, Ed25519 for
//! signatures, and a hybrid envelope (X25519 key agreement + ChaCha20-
//! Poly1305) for log payloads. A single [`KeyPair`] serves both roles:
//! signing uses the Ed25519 form directly, encryption converts the key to
//! its birationally equivalent X25519 form, so the announced data key can
//! both sign key-update transactions and decrypt stored logs.

use alloc::vec::Vec;
use core::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::ChaCha20Poly1305;
use ed25519_dalek::{Signer, Verifier};
use rand_core::CryptoRngCore;
use sha2::{Digest as _, Sha256, Sha512};

pub const DIGEST_LEN: usize = 32;
pub const KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Largest plaintext an envelope will carry.
pub const MAX_PLAINTEXT_LEN: usize = 1 << 20;

/// Domain separator mixed into the envelope key derivation.
const ENVELOPE_KDF_DOMAIN: &[u8] = b"icsguard.envelope.v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CryptoError {
    /// Seed material must be exactly 32 bytes.
    BadSeedLength(usize),
    /// Key material must be exactly 32 bytes.
    BadKeyLength(usize),
    /// Signatures must be exactly 64 bytes.
    BadSignatureLength(usize),
    /// The public key bytes do not decode to a valid curve point.
    InvalidKey,
    /// Plaintext exceeds [`MAX_PLAINTEXT_LEN`].
    PlaintextTooLong(usize),
    /// Authenticated decryption failed (wrong key or tampered ciphertext).
    AuthenticationFailed,
    /// Envelope bytes are truncated or structurally invalid.
    MalformedEnvelope,
}

impl fmt::Display for CryptoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CryptoError::BadSeedLength(n) => write!(f, "seed must be 32 bytes, got {n}"),
            CryptoError::BadKeyLength(n) => write!(f, "key must be 32 bytes, got {n}"),
            CryptoError::BadSignatureLength(n) => {
                write!(f, "signature must be 64 bytes, got {n}")
            }
            CryptoError::InvalidKey => write!(f, "public key is not a valid curve point"),
            CryptoError::PlaintextTooLong(n) => {
                write!(f, "plaintext of {n} bytes exceeds {MAX_PLAINTEXT_LEN}")
            }
            CryptoError::AuthenticationFailed => write!(f, "envelope authentication failed"),
            CryptoError::MalformedEnvelope => write!(f, "malformed envelope"),
        }
    }
}

impl core::error::Error for CryptoError {}

/// 32-byte SHA-256 digest. Houses transaction ids and block hashes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; DIGEST_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Digest(")?;
        write_hex(f, &self.0[..8])?;
        f.write_str("..)")
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(f, &self.0)
    }
}

/// Ed25519 public key bytes; opaque to the ledger.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadKeyLength(bytes.len()))?;
        Ok(PublicKey(arr))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PublicKey(")?;
        write_hex(f, &self.0[..8])?;
        f.write_str("..)")
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hex(f, &self.0)
    }
}

/// Ed25519 secret seed. Never part of any serialized chain artifact; the
/// `Debug` impl redacts the bytes so they cannot leak through logging.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_LEN]);

impl SecretKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadSeedLength(bytes.len()))?;
        Ok(SecretKey(arr))
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// Signing/encryption keypair. See the module docs for the dual role.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    /// Derive a keypair from a 32-byte seed. Same seed, same pair; used for
    /// reproducible simulation fixtures.
    pub fn from_seed(seed: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = seed
            .try_into()
            .map_err(|_| CryptoError::BadSeedLength(seed.len()))?;
        let signing = ed25519_dalek::SigningKey::from_bytes(&arr);
        Ok(KeyPair {
            public: PublicKey(signing.verifying_key().to_bytes()),
            secret: SecretKey(arr),
        })
    }

    /// Generate a keypair from the supplied entropy source.
    pub fn generate(rng: &mut impl CryptoRngCore) -> Self {
        let mut seed = [0u8; KEY_LEN];
        rng.fill_bytes(&mut seed);
        KeyPair::from_seed(&seed).expect("seed is 32 bytes")
    }
}

/// Ed25519 signature bytes.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SIGNATURE_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::BadSignatureLength(bytes.len()))?;
        Ok(Signature(arr))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Signature(")?;
        write_hex(f, &self.0[..8])?;
        f.write_str("..)")
    }
}

/// Compute the SHA-256 digest of `data`.
pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// Sign `message` under the Ed25519 key derived from `secret`.
pub fn sign(secret: &SecretKey, message: &[u8]) -> Signature {
    let signing = ed25519_dalek::SigningKey::from_bytes(&secret.0);
    Signature(signing.sign(message).to_bytes())
}

/// Verify an Ed25519 signature. Returns `false` for any mismatch, including
/// public-key bytes that do not decode to a curve point; length errors are
/// impossible here because [`PublicKey`] and [`Signature`] enforce them at
/// construction.
pub fn verify(public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&public.0) else {
        return false;
    };
    let signature = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(message, &signature).is_ok()
}

/// Hybrid-encrypted log payload: an ephemeral X25519 public key standing in
/// for the wrapped symmetric key, a fresh nonce, the ChaCha20-Poly1305
/// ciphertext, and its authentication tag.
#[derive(Clone, PartialEq, Eq)]
pub struct Envelope {
    pub wrapped_key: [u8; KEY_LEN],
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub auth_tag: [u8; TAG_LEN],
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Envelope")
            .field("ciphertext_len", &self.ciphertext.len())
            .finish_non_exhaustive()
    }
}

impl Envelope {
    /// Canonical byte form: `wrapped_key || nonce || auth_tag || ciphertext`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(KEY_LEN + NONCE_LEN + TAG_LEN + self.ciphertext.len());
        out.extend_from_slice(&self.wrapped_key);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.auth_tag);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < KEY_LEN + NONCE_LEN + TAG_LEN {
            return Err(CryptoError::MalformedEnvelope);
        }
        let (wrapped, rest) = bytes.split_at(KEY_LEN);
        let (nonce, rest) = rest.split_at(NONCE_LEN);
        let (tag, ciphertext) = rest.split_at(TAG_LEN);
        Ok(Envelope {
            wrapped_key: wrapped.try_into().expect("split length"),
            nonce: nonce.try_into().expect("split length"),
            ciphertext: ciphertext.to_vec(),
            auth_tag: tag.try_into().expect("split length"),
        })
    }
}

/// X25519 secret scalar matching an Ed25519 seed: the standard birational
/// conversion, `clamp(SHA-512(seed)[0..32])`.
fn x25519_secret_of(secret: &SecretKey) -> [u8; 32] {
    let h = Sha512::digest(secret.0);
    let mut scalar = [0u8; 32];
    scalar.copy_from_slice(&h[..32]);
    scalar[0] &= 248;
    scalar[31] &= 127;
    scalar[31] |= 64;
    scalar
}

/// Montgomery-form (X25519) public key of an Ed25519 public key.
fn x25519_public_of(public: &PublicKey) -> Result<[u8; 32], CryptoError> {
    let vk =
        ed25519_dalek::VerifyingKey::from_bytes(&public.0).map_err(|_| CryptoError::InvalidKey)?;
    Ok(vk.to_montgomery().to_bytes())
}

fn envelope_key(shared: &[u8; 32], ephemeral_pk: &[u8; 32], recipient: &PublicKey) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(ENVELOPE_KDF_DOMAIN);
    hasher.update(shared);
    hasher.update(ephemeral_pk);
    hasher.update(recipient.0);
    hasher.finalize().into()
}

/// Encrypt `plaintext` so that only the holder of the secret key matching
/// `pk_data` can read it. Each call draws a fresh ephemeral key and nonce,
/// so equal plaintexts produce unequal envelopes.
pub fn envelope_encrypt(
    pk_data: &PublicKey,
    plaintext: &[u8],
    rng: &mut impl CryptoRngCore,
) -> Result<Envelope, CryptoError> {
    if plaintext.len() > MAX_PLAINTEXT_LEN {
        return Err(CryptoError::PlaintextTooLong(plaintext.len()));
    }
    let recipient_mont = x25519_public_of(pk_data)?;
    let mut ephemeral = [0u8; 32];
    rng.fill_bytes(&mut ephemeral);
    let ephemeral_secret = x25519_dalek::StaticSecret::from(ephemeral);
    let ephemeral_pk = x25519_dalek::PublicKey::from(&ephemeral_secret).to_bytes();
    let shared = x25519_dalek::x25519(ephemeral_secret.to_bytes(), recipient_mont);
    let key = envelope_key(&shared, &ephemeral_pk, pk_data);

    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new((&key).into());
    let mut sealed = cipher
        .encrypt((&nonce).into(), plaintext)
        .map_err(|_| CryptoError::PlaintextTooLong(plaintext.len()))?;
    let tag_at = sealed.len() - TAG_LEN;
    let auth_tag: [u8; TAG_LEN] = sealed[tag_at..].try_into().expect("tag length");
    sealed.truncate(tag_at);
    Ok(Envelope {
        wrapped_key: ephemeral_pk,
        nonce,
        ciphertext: sealed,
        auth_tag,
    })
}

/// Open an envelope with the recipient secret key. Fails with
/// [`CryptoError::AuthenticationFailed`] on any key mismatch or tampering;
/// no partial plaintext is ever returned.
pub fn envelope_decrypt(sk_data: &SecretKey, env: &Envelope) -> Result<Vec<u8>, CryptoError> {
    let scalar = x25519_secret_of(sk_data);
    let shared = x25519_dalek::x25519(scalar, env.wrapped_key);
    let recipient = KeyPair::from_seed(sk_data.as_bytes()).expect("seed is 32 bytes");
    let key = envelope_key(&shared, &env.wrapped_key, &recipient.public);

    let mut sealed = Vec::with_capacity(env.ciphertext.len() + TAG_LEN);
    sealed.extend_from_slice(&env.ciphertext);
    sealed.extend_from_slice(&env.auth_tag);
    let cipher = ChaCha20Poly1305::new((&key).into());
    cipher
        .decrypt((&env.nonce).into(), sealed.as_slice())
        .map_err(|_| CryptoError::AuthenticationFailed)
}

pub(crate) fn write_hex(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    for b in bytes {
        write!(f, "{b:02x}")?;
    }
    Ok(())
}

/// Lowercase hex of `bytes`, used by exports and reports.
pub fn to_hex(bytes: &[u8]) -> alloc::string::String {
    use core::fmt::Write;
    let mut s = alloc::string::String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Parse hex into bytes; `None` on odd length or non-hex characters.
pub fn from_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    s.as_bytes()
        .chunks_exact(2)
        .map(|pair| {
            let hi = (pair[0] as char).to_digit(16)?;
            let lo = (pair[1] as char).to_digit(16)?;
            Some((hi * 16 + lo) as u8)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::{RngCore, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha12Rng {
        rand_chacha::ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn hash_is_deterministic_and_32_bytes() {
        let mut r = rng(1);
        for _ in 0..100 {
            let mut buf = [0u8; 57];
            r.fill_bytes(&mut buf);
            let a = hash(&buf);
            let b = hash(&buf);
            assert_eq!(a, b);
            assert_eq!(a.as_bytes().len(), 32);
        }
    }

    #[test]
    fn hash_of_empty_matches_sha256_test_vector() {
        // Published SHA-256 digest of the empty string.
        let expected =
            hex::decode("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
                .unwrap();
        assert_eq!(hash(b"").as_bytes().as_slice(), expected.as_slice());
    }

    #[test]
    fn hash_differs_on_single_bit_flips() {
        let mut r = rng(2);
        for _ in 0..1000 {
            let mut buf = [0u8; 24];
            r.fill_bytes(&mut buf);
            let original = hash(&buf);
            let bit = (r.next_u32() as usize) % (buf.len() * 8);
            let mut flipped = buf;
            flipped[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(original, hash(&flipped));
        }
    }

    #[test]
    fn hash_has_no_collisions_over_random_inputs() {
        let mut r = rng(3);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..100_000 {
            let mut buf = [0u8; 16];
            r.fill_bytes(&mut buf);
            seen.insert(hash(&buf));
        }
        // With 10^5 random 16-byte inputs, duplicate *inputs* are already
        // vanishingly unlikely, so every digest must be distinct.
        assert_eq!(seen.len(), 100_000);
    }

    #[test]
    fn keypair_from_seed_is_deterministic() {
        let seed = [7u8; 32];
        let a = KeyPair::from_seed(&seed).unwrap();
        let b = KeyPair::from_seed(&seed).unwrap();
        assert_eq!(a.public, b.public);
        assert_eq!(a.secret, b.secret);
    }

    #[test]
    fn keypair_rejects_malformed_seed_length() {
        assert_eq!(
            KeyPair::from_seed(&[0u8; 31]).unwrap_err(),
            CryptoError::BadSeedLength(31)
        );
    }

    #[test]
    fn distinct_seeds_yield_distinct_public_keys() {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0u32..10_000 {
            let mut seed = [0u8; 32];
            seed[..4].copy_from_slice(&i.to_be_bytes());
            seen.insert(KeyPair::from_seed(&seed).unwrap().public);
        }
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn generated_keypair_round_trips_sign_verify() {
        let pair = KeyPair::generate(&mut rng(4));
        let sig = sign(&pair.secret, b"hello");
        assert!(verify(&pair.public, b"hello", &sig));
    }

    #[test]
    fn sign_verify_round_trip_on_empty_message() {
        let pair = KeyPair::from_seed(&[1u8; 32]).unwrap();
        let sig = sign(&pair.secret, b"");
        assert!(verify(&pair.public, b"", &sig));
    }

    #[test]
    fn verify_fails_under_different_public_key() {
        let a = KeyPair::from_seed(&[1u8; 32]).unwrap();
        let b = KeyPair::from_seed(&[2u8; 32]).unwrap();
        let sig = sign(&a.secret, b"msg");
        assert!(!verify(&b.public, b"msg", &sig));
    }

    #[test]
    fn verify_fails_on_message_bit_flips() {
        let pair = KeyPair::from_seed(&[3u8; 32]).unwrap();
        let mut r = rng(5);
        for _ in 0..100 {
            let mut msg = [0u8; 40];
            r.fill_bytes(&mut msg);
            let sig = sign(&pair.secret, &msg);
            let bit = (r.next_u32() as usize) % (msg.len() * 8);
            let mut tampered = msg;
            tampered[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&pair.public, &tampered, &sig));
        }
    }

    #[test]
    fn verify_fails_on_signature_bit_flips() {
        let pair = KeyPair::from_seed(&[4u8; 32]).unwrap();
        let mut r = rng(6);
        for _ in 0..100 {
            let sig = sign(&pair.secret, b"payload");
            let bit = (r.next_u32() as usize) % (SIGNATURE_LEN * 8);
            let mut tampered = sig.0;
            tampered[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&pair.public, b"payload", &Signature(tampered)));
        }
    }

    #[test]
    fn malformed_lengths_are_reported_distinctly() {
        assert_eq!(
            PublicKey::from_slice(&[0u8; 16]).unwrap_err(),
            CryptoError::BadKeyLength(16)
        );
        assert_eq!(
            Signature::from_slice(&[0u8; 63]).unwrap_err(),
            CryptoError::BadSignatureLength(63)
        );
    }

    #[test]
    fn envelope_round_trips_a_log_record() {
        let pair = KeyPair::from_seed(&[9u8; 32]).unwrap();
        let mut r = rng(7);
        let mut record = [0u8; 100];
        r.fill_bytes(&mut record);
        let env = envelope_encrypt(&pair.public, &record, &mut r).unwrap();
        let opened = envelope_decrypt(&pair.secret, &env).unwrap();
        assert_eq!(opened.as_slice(), record.as_slice());
    }

    #[test]
    fn envelope_decrypt_with_unrelated_key_fails_authentication() {
        let owner = KeyPair::from_seed(&[10u8; 32]).unwrap();
        let stranger = KeyPair::from_seed(&[11u8; 32]).unwrap();
        let mut r = rng(8);
        let env = envelope_encrypt(&owner.public, b"secret log line", &mut r).unwrap();
        assert_eq!(
            envelope_decrypt(&stranger.secret, &env).unwrap_err(),
            CryptoError::AuthenticationFailed
        );
    }

    #[test]
    fn repeated_encryption_of_same_plaintext_differs() {
        let pair = KeyPair::from_seed(&[12u8; 32]).unwrap();
        let mut r = rng(9);
        for _ in 0..100 {
            let a = envelope_encrypt(&pair.public, b"same plaintext", &mut r).unwrap();
            let b = envelope_encrypt(&pair.public, b"same plaintext", &mut r).unwrap();
            assert_ne!(a.to_bytes(), b.to_bytes());
            assert_ne!(a.ciphertext, b.ciphertext);
        }
    }

    #[test]
    fn ciphertext_does_not_leak_plaintext_prefix() {
        let pair = KeyPair::from_seed(&[13u8; 32]).unwrap();
        let mut r = rng(10);
        for _ in 0..100 {
            let mut msg = [0u8; 64];
            r.fill_bytes(&mut msg);
            let env = envelope_encrypt(&pair.public, &msg, &mut r).unwrap();
            assert_ne!(&env.ciphertext[..8], &msg[..8]);
        }
    }

    #[test]
    fn truncated_envelope_is_malformed() {
        let pair = KeyPair::from_seed(&[14u8; 32]).unwrap();
        let mut r = rng(11);
        let env = envelope_encrypt(&pair.public, b"log", &mut r).unwrap();
        let bytes = env.to_bytes();
        assert_eq!(
            Envelope::from_bytes(&bytes[..KEY_LEN + NONCE_LEN + TAG_LEN - 1]).unwrap_err(),
            CryptoError::MalformedEnvelope
        );
        // Round trip of the intact bytes still opens.
        let reparsed = Envelope::from_bytes(&bytes).unwrap();
        assert_eq!(envelope_decrypt(&pair.secret, &reparsed).unwrap(), b"log");
    }

    #[test]
    fn oversized_plaintext_is_rejected() {
        let pair = KeyPair::from_seed(&[15u8; 32]).unwrap();
        let big = alloc::vec![0u8; MAX_PLAINTEXT_LEN + 1];
        assert_eq!(
            envelope_encrypt(&pair.public, &big, &mut rng(12)).unwrap_err(),
            CryptoError::PlaintextTooLong(MAX_PLAINTEXT_LEN + 1)
        );
    }

    #[test]
    fn envelope_round_trips_across_sizes() {
        let pair = KeyPair::from_seed(&[16u8; 32]).unwrap();
        let mut r = rng(13);
        for len in [0usize, 1, 2, 31, 32, 33, 1024] {
            let mut msg = alloc::vec![0u8; len];
            r.fill_bytes(&mut msg);
            let env = envelope_encrypt(&pair.public, &msg, &mut r).unwrap();
            assert_eq!(envelope_decrypt(&pair.secret, &env).unwrap(), msg);
        }
    }

    #[test]
    fn hex_round_trip() {
        let bytes = [0x00u8, 0x7f, 0xff, 0x0a];
        let s = to_hex(&bytes);
        assert_eq!(s, "007fff0a");
        assert_eq!(from_hex(&s).unwrap(), bytes);
        assert!(from_hex("abc").is_none());
        assert!(from_hex("zz").is_none());
    }
}
