//! Ordinary (non-blind) signatures: owner authorization, relay endorsements,
//! central-bank certificates and minter record signatures. Ed25519.

use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use crate::codec::{CodecError, Decoder, Digest, Encoder};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn verify(&self, message: &[u8], sig: &AuthSignature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify_strict(message, &sig).is_ok()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let v = hex::decode(s).map_err(|e| CodecError::Hex(e.to_string()))?;
        Ok(PublicKey(
            v.try_into()
                .map_err(|_| CodecError::Invalid("public key length"))?,
        ))
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(PublicKey(dec.fixed()?))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..16])
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct AuthSignature(pub [u8; 64]);

impl AuthSignature {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(AuthSignature(dec.fixed()?))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let v = hex::decode(s).map_err(|e| CodecError::Hex(e.to_string()))?;
        Ok(AuthSignature(
            v.try_into()
                .map_err(|_| CodecError::Invalid("signature length"))?,
        ))
    }
}

impl fmt::Debug for AuthSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AuthSignature({}..)", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone)]
pub struct AuthKeyPair {
    signing: SigningKey,
}

impl AuthKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        AuthKeyPair {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_secret_bytes(bytes: &[u8; 32]) -> Self {
        AuthKeyPair {
            signing: SigningKey::from_bytes(bytes),
        }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> AuthSignature {
        AuthSignature(self.signing.sign(message).to_bytes())
    }

    pub fn sign_digest(&self, d: &Digest) -> AuthSignature {
        self.sign(d.as_bytes())
    }
}

impl fmt::Debug for AuthKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AuthKeyPair")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_and_reject() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = AuthKeyPair::generate(&mut rng);
        let b = AuthKeyPair::generate(&mut rng);
        let sig = a.sign(b"hello");
        assert!(a.public().verify(b"hello", &sig));
        assert!(!a.public().verify(b"hellp", &sig));
        assert!(!b.public().verify(b"hello", &sig));
        assert!(!PublicKey([0xff; 32]).verify(b"hello", &sig));
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = AuthKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(9));
        let b = AuthKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(a.public(), b.public());
    }
}
