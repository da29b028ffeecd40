//! Shared fixture for unit tests: a central bank, one local relay under a
//! root relay, and a minter with a 100 and a 50 plate.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::asset::{create_genesis, create_transfer, Asset, OwnerLock, PopStep, TrustRoots};
use crate::blindsig::{blind, unblind, BlindedMessage, BlindingFactor, KeyProfile, Signature};
use crate::codec::Digest;
use crate::keys::AuthKeyPair;
use crate::mint::{Consumed, Minter, MintingPlate, PlateLimits, Voucher};
use crate::relay::{Relay, RelayConfig, RelayDirectory};

#[derive(Clone)]
pub struct Kit {
    pub rng: ChaCha20Rng,
    pub bank: AuthKeyPair,
    pub relay: Relay,
    pub root: Relay,
    pub minter: Minter,
    pub cycle: u64,
    vouchers: u64,
}

pub const LIMITS: PlateLimits = PlateLimits {
    cap_in_flight: 1_000,
    cap_cumulative: 10_000,
    expiry: 1_000,
};

impl Kit {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bank = AuthKeyPair::generate(&mut rng);
        let mut relay =
            Relay::new(RelayConfig::new("local").with_parent("root"), &mut rng).unwrap();
        let mut root = Relay::new(RelayConfig::new("root"), &mut rng).unwrap();
        root.register_child("local".into(), relay.trust());
        relay.commit_cycle(0).unwrap();
        root.commit_cycle(0).unwrap();
        let mut relays = RelayDirectory::new();
        relays.insert("local".into(), relay.trust());
        relays.insert("root".into(), root.trust());
        let trust = TrustRoots {
            central_bank: bank.public(),
            relays,
        };
        let mut minter = Minter::new("m1", AuthKeyPair::generate(&mut rng), trust);
        for (id, d) in [("p100", 100), ("p50", 50)] {
            let p = MintingPlate::create(&mut rng, &bank, id, d, LIMITS, KeyProfile::Test).unwrap();
            minter.install_plate(p);
        }
        Kit {
            rng,
            bank,
            relay,
            root,
            minter,
            cycle: 1,
            vouchers: 0,
        }
    }

    pub fn trust(&self) -> TrustRoots {
        let mut relays = RelayDirectory::new();
        relays.insert("local".into(), self.relay.trust());
        relays.insert("root".into(), self.root.trust());
        TrustRoots {
            central_bank: self.bank.public(),
            relays,
        }
    }

    pub fn voucher(&mut self, value: u64) -> Voucher {
        self.vouchers += 1;
        Voucher::issue(&self.bank, format!("v{}", self.vouchers), value)
    }

    /// A fresh genesis for `plate_id`, its blinding factor and blinded
    /// request, and the owner key.
    pub fn template(
        &mut self,
        plate_id: &str,
    ) -> (Asset, BlindingFactor, BlindedMessage, AuthKeyPair) {
        let plate = self.minter.plate(plate_id).unwrap();
        let cert = plate.certificate.clone();
        let key = plate.key.public().clone();
        let owner = AuthKeyPair::generate(&mut self.rng);
        let anchor = self.relay.latest().unwrap().clone();
        let g = create_genesis(
            OwnerLock::key(owner.public()),
            anchor.digest(),
            cert,
            plate.denomination,
            &self.bank.public(),
        )
        .unwrap();
        let factor = BlindingFactor::random(&mut self.rng, &key);
        let blinded = blind(&g.digest(), &factor, &key).unwrap();
        (Asset::new(g, anchor), factor, blinded, owner)
    }

    /// Withdraws a fresh asset against a voucher.
    pub fn withdraw(&mut self, plate_id: &str) -> (Asset, Signature, AuthKeyPair) {
        let d = self.minter.plate(plate_id).unwrap().denomination;
        let v = self.voucher(d);
        let (a, factor, blinded, owner) = self.template(plate_id);
        let (s, _) = self
            .minter
            .recycle(plate_id, Consumed::Voucher(&v), &blinded, self.cycle)
            .unwrap();
        (a, unblind(&s, factor), owner)
    }

    pub fn register(&mut self, asset: &Asset) -> Asset {
        let entry = asset.last_entry().unwrap();
        self.relay.submit(entry).unwrap();
        let c = self.relay.commit_cycle(self.cycle).unwrap();
        self.cycle += 1;
        let inclusion = self.relay.prove_inclusion(&entry).unwrap();
        asset
            .with_step(PopStep {
                entry,
                inclusion,
                commitment: c,
                aggregation: vec![],
            })
            .unwrap()
    }

    /// Transfers and registers in one step.
    pub fn pay(
        &mut self,
        asset: &Asset,
        validity: Option<&Signature>,
        from: &AuthKeyPair,
        to: OwnerLock,
        commitment: Option<Digest>,
    ) -> Asset {
        let u = create_transfer(asset, validity, to, commitment, from, None).unwrap();
        self.register(&asset.with_update(u))
    }

    /// A withdrawn asset surrendered to the minter.
    pub fn spent_asset(&mut self, plate_id: &str) -> Asset {
        let (a, sig, owner) = self.withdraw(plate_id);
        let to = OwnerLock::key(self.minter.public_key());
        self.pay(&a, Some(&sig), &owner, to, None)
    }
}
