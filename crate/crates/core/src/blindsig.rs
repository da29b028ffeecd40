//! RSA full-domain-hash blind signatures.
//!
//! The wallet blinds the selector of its genesis record with a fresh factor
//! `r`, the issuer signs the blinded value with the plate key, and the wallet
//! strips `r` to obtain an ordinary signature on the original message:
//!
//! ```text
//! blind(m, r)       = H(m) * r^e        mod n
//! sign_blinded(m')  = m'^d              mod n
//! unblind(s', r)    = s' * r^-1         mod n   (= H(m)^d)
//! verify(m, s)      = s^e == H(m)       mod n
//! ```

use std::fmt;

use num_bigint_dig::{BigUint, ModInverse};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use rsa::traits::{PrivateKeyParts, PublicKeyParts};
use rsa::RsaPrivateKey;
use thiserror::Error;

use crate::codec::{selector, tags, Canonical, CodecError, Decoder, Digest, Encoder};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlindError {
    #[error("blinding factor is not a unit modulo the issuer modulus")]
    InvalidFactor,
    #[error("blinded message is not reduced modulo the issuer modulus")]
    MalformedMessage,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("malformed key: {0}")]
    MalformedKey(String),
}

/// Modulus size. `Test` keeps property tests and simulations fast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyProfile {
    Test,
    Production,
    Bits(usize),
}

impl KeyProfile {
    pub fn bits(self) -> usize {
        match self {
            KeyProfile::Test => 512,
            KeyProfile::Production => 2048,
            KeyProfile::Bits(b) => b,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IssuerPublicKey {
    n: BigUint,
    e: BigUint,
}

impl IssuerPublicKey {
    pub fn new(n: BigUint, e: BigUint) -> Self {
        IssuerPublicKey { n, e }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    pub fn exponent(&self) -> &BigUint {
        &self.e
    }

    /// Width in bytes of blinded messages and signatures under this key.
    pub fn width(&self) -> usize {
        self.n.bits().div_ceil(8)
    }

    /// Stable identifier: the selector of the encoded key.
    pub fn id(&self) -> Digest {
        selector(self)
    }
}

impl fmt::Debug for IssuerPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "IssuerPublicKey({} bits, id {})",
            self.n.bits(),
            &self.id().to_hex()[..12]
        )
    }
}

impl Canonical for IssuerPublicKey {
    const TAG: u8 = tags::ISSUER_PUBLIC_KEY;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.bytes(&self.n.to_bytes_be())
            .bytes(&self.e.to_bytes_be());
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let n = BigUint::from_bytes_be(&dec.bytes()?);
        let e = BigUint::from_bytes_be(&dec.bytes()?);
        if n.is_zero() || e.is_zero() {
            return Err(CodecError::Invalid("issuer key"));
        }
        Ok(IssuerPublicKey { n, e })
    }
}

/// A plate's signing key, bound to one denomination.
#[derive(Clone)]
pub struct IssuerKeyPair {
    public: IssuerPublicKey,
    secret: RsaPrivateKey,
    denomination: u64,
}

impl IssuerKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(
        rng: &mut R,
        profile: KeyProfile,
        denomination: u64,
    ) -> Result<Self, BlindError> {
        let secret = RsaPrivateKey::new(rng, profile.bits())
            .map_err(|e| BlindError::KeyGeneration(e.to_string()))?;
        Ok(Self::from_rsa(secret, denomination))
    }

    fn from_rsa(secret: RsaPrivateKey, denomination: u64) -> Self {
        let public = IssuerPublicKey {
            n: secret.n().clone(),
            e: secret.e().clone(),
        };
        IssuerKeyPair {
            public,
            secret,
            denomination,
        }
    }

    pub fn public(&self) -> &IssuerPublicKey {
        &self.public
    }

    pub fn denomination(&self) -> u64 {
        self.denomination
    }

    /// `n, e, d, p, q` as length-prefixed big-endian integers, prefixed by the
    /// denomination.
    pub fn secret_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(tags::ISSUER_SECRET_KEY).u64(self.denomination);
        enc.bytes(&self.secret.n().to_bytes_be())
            .bytes(&self.secret.e().to_bytes_be())
            .bytes(&self.secret.d().to_bytes_be());
        let primes = self.secret.primes();
        enc.list(primes, |e, p| {
            e.bytes(&p.to_bytes_be());
        });
        enc.finish()
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, BlindError> {
        let bad = |e: CodecError| BlindError::MalformedKey(e.to_string());
        let mut dec = Decoder::new(bytes);
        if dec.u8().map_err(bad)? != tags::ISSUER_SECRET_KEY {
            return Err(BlindError::MalformedKey("wrong tag".into()));
        }
        let denomination = dec.u64().map_err(bad)?;
        let n = BigUint::from_bytes_be(&dec.bytes().map_err(bad)?);
        let e = BigUint::from_bytes_be(&dec.bytes().map_err(bad)?);
        let d = BigUint::from_bytes_be(&dec.bytes().map_err(bad)?);
        let primes = dec
            .list(|d| d.bytes().map(|b| BigUint::from_bytes_be(&b)))
            .map_err(bad)?;
        if dec.remaining() != 0 {
            return Err(BlindError::MalformedKey("trailing bytes".into()));
        }
        let secret = RsaPrivateKey::from_components(n, e, d, primes)
            .map_err(|e| BlindError::MalformedKey(e.to_string()))?;
        Ok(Self::from_rsa(secret, denomination))
    }
}

impl fmt::Debug for IssuerKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IssuerKeyPair")
            .field("public", &self.public)
            .field("denomination", &self.denomination)
            .finish_non_exhaustive()
    }
}

/// Single-use blinding factor. Consumed by [`unblind`]. `Clone` exists so a
/// simulator can snapshot a whole world; protocol code never clones one.
#[derive(Clone)]
pub struct BlindingFactor {
    r: BigUint,
    r_inv: BigUint,
    modulus: BigUint,
}

impl BlindingFactor {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R, key: &IssuerPublicKey) -> Self {
        let width = key.width();
        loop {
            let mut buf = vec![0u8; width];
            rng.fill_bytes(&mut buf);
            if let Ok(f) = Self::from_bytes(&buf, key) {
                return f;
            }
        }
    }

    /// Accepts `r` iff `1 < r < n` and `gcd(r, n) = 1`.
    pub fn from_bytes(bytes: &[u8], key: &IssuerPublicKey) -> Result<Self, BlindError> {
        let r = BigUint::from_bytes_be(bytes);
        if r <= BigUint::one() || r >= key.n || !r.gcd(&key.n).is_one() {
            return Err(BlindError::InvalidFactor);
        }
        let r_inv = (&r)
            .mod_inverse(&key.n)
            .and_then(|v| v.to_biguint())
            .ok_or(BlindError::InvalidFactor)?;
        Ok(BlindingFactor {
            r,
            r_inv,
            modulus: key.n.clone(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.r.to_bytes_be()
    }
}

impl fmt::Debug for BlindingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BlindingFactor(..)")
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BlindedMessage(pub Vec<u8>);

impl fmt::Debug for BlindedMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BlindedMessage({}..)",
            hex::encode(&self.0[..8.min(self.0.len())])
        )
    }
}

impl Canonical for BlindedMessage {
    const TAG: u8 = tags::BLINDED_MESSAGE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(BlindedMessage(dec.bytes()?))
    }
}

/// An RSA signature value and the id of the key that produced it.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub bytes: Vec<u8>,
    pub signer: Digest,
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Signature({}.. by {})",
            hex::encode(&self.bytes[..8.min(self.bytes.len())]),
            &self.signer.to_hex()[..12]
        )
    }
}

impl Canonical for Signature {
    const TAG: u8 = tags::BLIND_SIGNATURE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.bytes(&self.bytes).digest(&self.signer);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Signature {
            bytes: dec.bytes()?,
            signer: dec.digest()?,
        })
    }
}

fn to_width(v: &BigUint, width: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    let mut out = vec![0u8; width.saturating_sub(raw.len())];
    out.extend_from_slice(&raw);
    out
}

/// Expands `message` to an integer modulo `n` by counter-mode SHA-256 over
/// the key id and the message.
pub fn full_domain_hash(message: &Digest, key: &IssuerPublicKey) -> BigUint {
    let width = key.width();
    let key_id = key.id();
    let mut out = Vec::with_capacity(width + 32);
    let mut counter: u32 = 0;
    while out.len() < width {
        let block = Digest::hash_parts(&[
            b"USO-FDH",
            &counter.to_be_bytes(),
            key_id.as_bytes(),
            message.as_bytes(),
        ]);
        out.extend_from_slice(block.as_bytes());
        counter += 1;
    }
    out.truncate(width);
    BigUint::from_bytes_be(&out) % &key.n
}

pub fn blind(
    message: &Digest,
    factor: &BlindingFactor,
    issuer_public: &IssuerPublicKey,
) -> Result<BlindedMessage, BlindError> {
    if factor.modulus != issuer_public.n {
        return Err(BlindError::InvalidFactor);
    }
    let n = &issuer_public.n;
    let h = full_domain_hash(message, issuer_public);
    let re = factor.r.modpow(&issuer_public.e, n);
    let blinded = (h * re) % n;
    Ok(BlindedMessage(to_width(&blinded, issuer_public.width())))
}

/// Signs a blinded message. Plate limits are enforced by the mint before
/// this is reached.
pub fn sign_blinded(
    blinded: &BlindedMessage,
    key: &IssuerKeyPair,
) -> Result<Signature, BlindError> {
    let n = &key.public.n;
    let m = BigUint::from_bytes_be(&blinded.0);
    if &m >= n || blinded.0.len() > key.public.width() {
        return Err(BlindError::MalformedMessage);
    }
    let s = m.modpow(key.secret.d(), n);
    Ok(Signature {
        bytes: to_width(&s, key.public.width()),
        signer: key.public.id(),
    })
}

/// Removes the blinding factor. The factor is consumed.
pub fn unblind(sig: &Signature, factor: BlindingFactor) -> Signature {
    let n = &factor.modulus;
    let s_blind = BigUint::from_bytes_be(&sig.bytes);
    let s = (s_blind * &factor.r_inv) % n;
    let width = n.bits().div_ceil(8);
    Signature {
        bytes: to_width(&s, width),
        signer: sig.signer,
    }
}

pub fn verify(message: &Digest, sig: &Signature, public: &IssuerPublicKey) -> bool {
    if sig.signer != public.id() || sig.bytes.len() != public.width() {
        return false;
    }
    let s = BigUint::from_bytes_be(&sig.bytes);
    if s >= public.n {
        return false;
    }
    s.modpow(&public.e, &public.n) == full_domain_hash(message, public)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn key(seed: u64, denom: u64) -> IssuerKeyPair {
        IssuerKeyPair::generate(
            &mut ChaCha20Rng::seed_from_u64(seed),
            KeyProfile::Test,
            denom,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_verifies() {
        let k = key(1, 100);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let m = Digest::hash(b"genesis");
        let f = BlindingFactor::random(&mut rng, k.public());
        let b = blind(&m, &f, k.public()).unwrap();
        let s = sign_blinded(&b, &k).unwrap();
        let u = unblind(&s, f);
        assert!(verify(&m, &u, k.public()));
        // the blinded signature itself is not a signature on m
        assert!(!verify(&m, &s, k.public()));
    }

    #[test]
    fn different_factors_give_different_blindings() {
        let k = key(1, 100);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = Digest::hash(b"same");
        let f1 = BlindingFactor::random(&mut rng, k.public());
        let f2 = BlindingFactor::random(&mut rng, k.public());
        assert_ne!(
            blind(&m, &f1, k.public()).unwrap(),
            blind(&m, &f2, k.public()).unwrap()
        );
    }

    #[test]
    fn wrong_factor_fails_verification() {
        let k = key(1, 100);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let m = Digest::hash(b"m");
        let f = BlindingFactor::random(&mut rng, k.public());
        let other = BlindingFactor::random(&mut rng, k.public());
        let s = sign_blinded(&blind(&m, &f, k.public()).unwrap(), &k).unwrap();
        assert!(!verify(&m, &unblind(&s, other), k.public()));
    }

    #[test]
    fn unblind_is_deterministic() {
        let k = key(1, 100);
        let m = Digest::hash(b"m");
        let bytes = [7u8; 40];
        let f = BlindingFactor::from_bytes(&bytes, k.public()).unwrap();
        let s = sign_blinded(&blind(&m, &f, k.public()).unwrap(), &k).unwrap();
        let a = unblind(&s, f);
        let b = unblind(&s, BlindingFactor::from_bytes(&bytes, k.public()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn factor_range_checked() {
        let k = key(1, 100);
        assert_eq!(
            BlindingFactor::from_bytes(&[1], k.public()).unwrap_err(),
            BlindError::InvalidFactor
        );
        assert_eq!(
            BlindingFactor::from_bytes(&[0], k.public()).unwrap_err(),
            BlindError::InvalidFactor
        );
        let n = k.public().modulus().to_bytes_be();
        assert!(BlindingFactor::from_bytes(&n, k.public()).is_err());
        // a factor sharing a prime with n is not invertible
        let p = k.secret.primes()[0].to_bytes_be();
        assert!(BlindingFactor::from_bytes(&p, k.public()).is_err());
    }

    #[test]
    fn factor_bound_to_its_key() {
        let k5 = key(1, 5);
        let k10 = key(2, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let f = BlindingFactor::random(&mut rng, k5.public());
        assert_eq!(
            blind(&Digest::hash(b"m"), &f, k10.public()).unwrap_err(),
            BlindError::InvalidFactor
        );
    }

    #[test]
    fn key_separation_between_denominations() {
        let k5 = key(1, 5);
        let k10 = key(2, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let m = Digest::hash(b"m");
        let f = BlindingFactor::random(&mut rng, k5.public());
        let s = unblind(
            &sign_blinded(&blind(&m, &f, k5.public()).unwrap(), &k5).unwrap(),
            f,
        );
        assert!(verify(&m, &s, k5.public()));
        assert!(!verify(&m, &s, k10.public()));
        // even with the signer id rewritten
        let forged = Signature {
            bytes: s.bytes.clone(),
            signer: k10.public().id(),
        };
        assert!(!verify(&m, &forged, k10.public()));
    }

    #[test]
    fn flipped_message_bit_fails() {
        let k = key(1, 100);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let m = Digest::hash(b"m");
        let f = BlindingFactor::random(&mut rng, k.public());
        let s = unblind(
            &sign_blinded(&blind(&m, &f, k.public()).unwrap(), &k).unwrap(),
            f,
        );
        let mut flipped = m;
        flipped.0[0] ^= 1;
        assert!(!verify(&flipped, &s, k.public()));
    }

    #[test]
    fn oversized_blinded_message_rejected() {
        let k = key(1, 100);
        let too_big = BlindedMessage(vec![0xff; k.public().width()]);
        assert_eq!(
            sign_blinded(&too_big, &k).unwrap_err(),
            BlindError::MalformedMessage
        );
    }

    #[test]
    fn secret_key_bytes_round_trip() {
        let k = key(11, 50);
        let back = IssuerKeyPair::from_secret_bytes(&k.secret_bytes()).unwrap();
        assert_eq!(back.public(), k.public());
        assert_eq!(back.denomination(), 50);
    }

    #[test]
    fn malformed_signature_is_false_not_panic() {
        let k = key(1, 100);
        let m = Digest::hash(b"m");
        let junk = Signature {
            bytes: vec![1, 2, 3],
            signer: k.public().id(),
        };
        assert!(!verify(&m, &junk, k.public()));
        let over = Signature {
            bytes: vec![0xff; k.public().width()],
            signer: k.public().id(),
        };
        assert!(!verify(&m, &over, k.public()));
    }
}
