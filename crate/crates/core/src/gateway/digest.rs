use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use super::{ChatMessage, GenerationParams, Role};

/// SHA-256 content digest of a request (or of a cache key derived from one).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Self(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize)]
struct CanonicalMessage<'a> {
    role: Role,
    text: &'a str,
    images: Vec<&'a str>,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    messages: Vec<CanonicalMessage<'a>>,
    params: &'a GenerationParams,
}

/// Digest of the request content: message order, roles, texts, image hashes
/// and generation parameters all contribute.
pub fn request_digest(messages: &[ChatMessage], params: &GenerationParams) -> Digest {
    let canonical = CanonicalRequest {
        messages: messages
            .iter()
            .map(|m| CanonicalMessage {
                role: m.role,
                text: &m.text,
                images: m.image_refs.iter().map(|r| r.hash()).collect(),
            })
            .collect(),
        params,
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    Digest::of_bytes(&bytes)
}

/// Cache key: the request digest bound to the model that answered it.
pub fn cache_key(model_name: &str, request: &Digest) -> Digest {
    let mut bytes = Vec::with_capacity(model_name.len() + 33);
    bytes.extend_from_slice(model_name.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&request.0);
    Digest::of_bytes(&bytes)
}
