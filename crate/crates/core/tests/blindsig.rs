use std::sync::OnceLock;

use num_bigint_dig::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use uso_cbdc::blindsig::{
    blind, full_domain_hash, sign_blinded, unblind, verify, BlindingFactor, IssuerKeyPair,
    KeyProfile,
};
use uso_cbdc::codec::Digest;

fn key() -> &'static IssuerKeyPair {
    static KEY: OnceLock<IssuerKeyPair> = OnceLock::new();
    KEY.get_or_init(|| {
        IssuerKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(77), KeyProfile::Test, 100).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// unblind(sign(blind(m, r)), r) is a signature on m, checked here by
    /// raising it to e directly.
    #[test]
    fn round_trip(m in any::<[u8; 32]>(), seed in any::<u64>()) {
        let k = key();
        let message = Digest(m);
        let factor = BlindingFactor::random(&mut ChaCha20Rng::seed_from_u64(seed), k.public());
        let blinded = blind(&message, &factor, k.public()).unwrap();
        let sig = unblind(&sign_blinded(&blinded, k).unwrap(), factor);
        prop_assert!(verify(&message, &sig, k.public()));
        let s = BigUint::from_bytes_be(&sig.bytes);
        prop_assert_eq!(s.modpow(k.public().exponent(), k.public().modulus()), full_domain_hash(&message, k.public()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signature_binds_the_message(m in any::<[u8; 32]>(), other in any::<[u8; 32]>(), seed in any::<u64>()) {
        prop_assume!(m != other);
        let k = key();
        let factor = BlindingFactor::random(&mut ChaCha20Rng::seed_from_u64(seed), k.public());
        let blinded = blind(&Digest(m), &factor, k.public()).unwrap();
        let sig = unblind(&sign_blinded(&blinded, k).unwrap(), factor);
        prop_assert!(!verify(&Digest(other), &sig, k.public()));
    }

    /// The signer sees neither the hash nor a repeatable value.
    #[test]
    fn blinding_hides_the_message(m in any::<[u8; 32]>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        let k = key();
        let message = Digest(m);
        let fa = BlindingFactor::random(&mut ChaCha20Rng::seed_from_u64(a), k.public());
        let fb = BlindingFactor::random(&mut ChaCha20Rng::seed_from_u64(b), k.public());
        let ba = blind(&message, &fa, k.public()).unwrap();
        let bb = blind(&message, &fb, k.public()).unwrap();
        prop_assert_ne!(&ba, &bb);
        prop_assert_ne!(BigUint::from_bytes_be(&ba.0), full_domain_hash(&message, k.public()));
    }
}

#[test]
fn other_key_rejects() {
    let k = key();
    let other = IssuerKeyPair::generate(&mut ChaCha20Rng::seed_from_u64(78), KeyProfile::Test, 100)
        .unwrap();
    let message = Digest([9; 32]);
    let factor = BlindingFactor::random(&mut ChaCha20Rng::seed_from_u64(1), k.public());
    let blinded = blind(&message, &factor, k.public()).unwrap();
    let sig = unblind(&sign_blinded(&blinded, k).unwrap(), factor);
    assert!(!verify(&message, &sig, other.public()));
}
