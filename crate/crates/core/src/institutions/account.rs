use crate::codec::{selector, tags, Canonical, CodecError, Decoder, Digest, Encoder};
use crate::keys::{AuthKeyPair, AuthSignature, PublicKey};

/// What a recipient commitment commits to. Only the digest ever travels in
/// an asset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountDetails {
    pub bank_id: String,
    pub account_id: String,
    /// Random salt so the commitment cannot be brute-forced from a small
    /// account number space.
    pub salt: [u8; 16],
}

impl Canonical for AccountDetails {
    const TAG: u8 = tags::ACCOUNT_DETAILS;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.str(&self.bank_id)
            .str(&self.account_id)
            .fixed(&self.salt);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(AccountDetails {
            bank_id: dec.str()?,
            account_id: dec.str()?,
            salt: dec.fixed()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BankAccount {
    pub account_id: String,
    /// KYC stand-in: an opaque label.
    pub owner: String,
    pub balance: u64,
    pub details: AccountDetails,
}

impl BankAccount {
    pub fn commitment(&self) -> Digest {
        selector(&self.details)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecipientCertificateBody {
    pub bank_id: String,
    pub recipient: PublicKey,
}

impl Canonical for RecipientCertificateBody {
    const TAG: u8 = tags::RECIPIENT_CERTIFICATE_BODY;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.str(&self.bank_id);
        self.recipient.encode(enc);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(RecipientCertificateBody {
            bank_id: dec.str()?,
            recipient: PublicKey::decode(dec)?,
        })
    }
}

/// A bank's statement that a receiving key belongs to one of its vetted
/// customers. Payers may demand one before paying a merchant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecipientCertificate {
    pub body: RecipientCertificateBody,
    pub signature: AuthSignature,
}

impl RecipientCertificate {
    pub fn issue(bank_key: &AuthKeyPair, bank_id: &str, recipient: PublicKey) -> Self {
        let body = RecipientCertificateBody {
            bank_id: bank_id.to_string(),
            recipient,
        };
        RecipientCertificate {
            signature: bank_key.sign_digest(&selector(&body)),
            body,
        }
    }

    pub fn verify(&self, bank_key: &PublicKey, recipient: &PublicKey) -> bool {
        self.body.recipient == *recipient
            && bank_key.verify(selector(&self.body).as_bytes(), &self.signature)
    }
}

impl Canonical for RecipientCertificate {
    const TAG: u8 = tags::RECIPIENT_CERTIFICATE;

    fn encode_fields(&self, enc: &mut Encoder) {
        enc.object(&self.body);
        self.signature.encode(enc);
    }

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(RecipientCertificate {
            body: dec.object()?,
            signature: AuthSignature::decode(dec)?,
        })
    }
}
