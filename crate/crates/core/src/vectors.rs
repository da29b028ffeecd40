//! Golden test vectors: fixed inputs run through the codec, the Merkle
//! tree, Ed25519 and the blind signature scheme. The text is stable across
//! runs and platforms so other implementations can check against it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::blindsig::{self, BlindingFactor, IssuerKeyPair, KeyProfile};
use crate::codec::{encode, selector, Digest};
use crate::keys::AuthKeyPair;
use crate::relay::{merkle, CycleEntry, RelayPosition};

fn vector_leaf(i: u64) -> Digest {
    merkle::leaf_hash(&CycleEntry::new(
        Digest::hash(&i.to_be_bytes()),
        Digest::hash(&(i + 1000).to_be_bytes()),
    ))
}

pub fn golden() -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| out.push_str(&format!("{k} {v}\n"));

    line("sha256.empty", Digest::hash(b"").to_hex());
    line("sha256.abc", Digest::hash(b"abc").to_hex());

    let entry = CycleEntry::new(Digest::hash(b"state"), Digest::hash(b"successor"));
    line("cycle-entry.bytes", encode(&entry).to_hex());
    line("cycle-entry.selector", selector(&entry).to_hex());
    let position = RelayPosition {
        relay_id: "root".into(),
        sequence: 7,
    };
    line("relay-position.bytes", encode(&position).to_hex());
    line("relay-position.selector", position.digest().to_hex());

    for n in [0u64, 1, 2, 3, 5, 8] {
        let leaves: Vec<Digest> = (0..n).map(vector_leaf).collect();
        line(
            &format!("merkle.root.{n}"),
            merkle::root_of(&leaves).to_hex(),
        );
    }

    let owner = AuthKeyPair::from_secret_bytes(&[7; 32]);
    line("ed25519.public", owner.public().to_hex());
    line("ed25519.sig", hex::encode(owner.sign(b"vector").0));

    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let plate = IssuerKeyPair::generate(&mut rng, KeyProfile::Test, 100).expect("key generation");
    let public = plate.public();
    line("rsa.n", hex::encode(public.modulus().to_bytes_be()));
    line("rsa.e", hex::encode(public.exponent().to_bytes_be()));
    let message = Digest::hash(b"vector");
    line(
        "fdh",
        hex::encode(blindsig::full_domain_hash(&message, public).to_bytes_be()),
    );
    let factor = BlindingFactor::random(&mut rng, public);
    line("blind.factor", hex::encode(factor.to_bytes()));
    let blinded = blindsig::blind(&message, &factor, public).expect("blind");
    line("blind.message", hex::encode(&blinded.0));
    let signed = blindsig::sign_blinded(&blinded, &plate).expect("sign");
    line("blind.signature", hex::encode(&signed.bytes));
    let sig = blindsig::unblind(&signed, factor);
    line("unblinded.signature", hex::encode(&sig.bytes));
    line(
        "unblinded.verifies",
        blindsig::verify(&message, &sig, public).to_string(),
    );
    out
}
