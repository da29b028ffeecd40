//! Canonical byte encoding and the selector hash.
//!
//! Every protocol object is encoded as a one-byte type tag followed by its
//! fields in schema order. Integers are big-endian and fixed width, digests
//! and keys are written raw at their fixed width, and variable-length byte
//! strings carry a `u32` length prefix. Nested objects are written with their
//! own tag, so every encoding is self-delimiting and the scheme is injective
//! per type.
//!
//! The selector of an object is SHA-256 over its full canonical encoding.

use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Type tags. Each schema type owns exactly one.
pub mod tags {
    pub const ISSUER_PUBLIC_KEY: u8 = 0x10;
    pub const ISSUER_SECRET_KEY: u8 = 0x11;
    pub const BLIND_SIGNATURE: u8 = 0x12;
    pub const BLINDED_MESSAGE: u8 = 0x13;
    pub const DENOMINATION_CLAIM: u8 = 0x20;
    pub const DENOMINATION_CERTIFICATE: u8 = 0x21;
    pub const OWNER_LOCK: u8 = 0x22;
    pub const GENESIS_RECORD: u8 = 0x23;
    pub const UPDATE_BODY: u8 = 0x24;
    pub const ASSET_UPDATE: u8 = 0x25;
    pub const POP_STEP: u8 = 0x26;
    pub const AGGREGATION_HOP: u8 = 0x27;
    pub const PROOF_OF_PROVENANCE: u8 = 0x28;
    pub const ASSET: u8 = 0x29;
    pub const CYCLE_ENTRY: u8 = 0x30;
    pub const COMMITMENT_BODY: u8 = 0x31;
    pub const ENDORSEMENT: u8 = 0x32;
    pub const RELAY_COMMITMENT: u8 = 0x33;
    pub const INCLUSION_PROOF: u8 = 0x34;
    pub const RELAY_POSITION: u8 = 0x35;
    pub const EQUIVOCATION_EVIDENCE: u8 = 0x36;
    pub const VOUCHER_BODY: u8 = 0x40;
    pub const VOUCHER: u8 = 0x41;
    pub const MONITORING_RECORD: u8 = 0x42;
    pub const ACCOUNT_DETAILS: u8 = 0x50;
    pub const RECIPIENT_CERTIFICATE_BODY: u8 = 0x51;
    pub const RECIPIENT_CERTIFICATE: u8 = 0x52;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("expected type tag {expected:#04x}, found {found:#04x}")]
    WrongTag { expected: u8, found: u8 },
    #[error("{0} trailing bytes after object")]
    TrailingBytes(usize),
    #[error("invalid value for {0}")]
    Invalid(&'static str),
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    /// SHA-256 of raw bytes.
    pub fn hash(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    /// SHA-256 over the concatenation of `parts`.
    pub fn hash_parts(parts: &[&[u8]]) -> Digest {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Digest(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Digest, CodecError> {
        let v = hex::decode(s).map_err(|e| CodecError::Hex(e.to_string()))?;
        let arr: [u8; 32] = v
            .try_into()
            .map_err(|_| CodecError::Invalid("digest length"))?;
        Ok(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// The canonical encoding of one protocol object.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CanonicalBytes(pub Vec<u8>);

impl CanonicalBytes {
    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl AsRef<[u8]> for CanonicalBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Raw fixed-width bytes. The decoder must know the width.
    pub fn fixed(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.fixed(&d.0)
    }

    /// Length-prefixed byte string.
    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        let len = u32::try_from(v.len()).expect("byte field longer than u32::MAX");
        self.u32(len);
        self.fixed(v)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn object<T: Canonical>(&mut self, v: &T) -> &mut Self {
        self.u8(T::TAG);
        v.encode_fields(self);
        self
    }

    pub fn option<T, F>(&mut self, v: Option<&T>, mut f: F) -> &mut Self
    where
        F: FnMut(&mut Self, &T),
    {
        match v {
            None => self.u8(0),
            Some(x) => {
                self.u8(1);
                f(self, x);
                self
            }
        }
    }

    pub fn list<T, F>(&mut self, items: &[T], mut f: F) -> &mut Self
    where
        F: FnMut(&mut Self, &T),
    {
        let len = u32::try_from(items.len()).expect("list longer than u32::MAX");
        self.u32(len);
        for it in items {
            f(self, it);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CodecError::Invalid("bool")),
        }
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn digest(&mut self) -> Result<Digest, CodecError> {
        Ok(Digest(self.fixed::<32>()?))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::Invalid("utf-8 string"))
    }

    pub fn object<T: Canonical>(&mut self) -> Result<T, CodecError> {
        let found = self.u8()?;
        if found != T::TAG {
            return Err(CodecError::WrongTag {
                expected: T::TAG,
                found,
            });
        }
        T::decode_fields(self)
    }

    pub fn option<T, F>(&mut self, mut f: F) -> Result<Option<T>, CodecError>
    where
        F: FnMut(&mut Self) -> Result<T, CodecError>,
    {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(f(self)?)),
            _ => Err(CodecError::Invalid("option flag")),
        }
    }

    pub fn list<T, F>(&mut self, mut f: F) -> Result<Vec<T>, CodecError>
    where
        F: FnMut(&mut Self) -> Result<T, CodecError>,
    {
        let len = self.u32()? as usize;
        // every element takes at least one byte
        if len > self.remaining() {
            return Err(CodecError::Truncated(self.pos));
        }
        (0..len).map(|_| f(self)).collect()
    }
}

/// A protocol object with a fixed canonical schema.
pub trait Canonical: Sized {
    const TAG: u8;

    fn encode_fields(&self, enc: &mut Encoder);

    fn decode_fields(dec: &mut Decoder<'_>) -> Result<Self, CodecError>;

    fn to_canonical(&self) -> CanonicalBytes {
        let mut enc = Encoder::new();
        enc.object(self);
        CanonicalBytes(enc.finish())
    }

    fn from_canonical(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let v = dec.object::<Self>()?;
        match dec.remaining() {
            0 => Ok(v),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

pub fn encode<T: Canonical>(object: &T) -> CanonicalBytes {
    object.to_canonical()
}

pub fn decode<T: Canonical>(bytes: &[u8]) -> Result<T, CodecError> {
    T::from_canonical(bytes)
}

/// The selector function: SHA-256 of the canonical encoding.
pub fn selector<T: Canonical>(object: &T) -> Digest {
    Digest::hash(object.to_canonical().as_slice())
}
