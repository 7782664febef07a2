//! Model files.
//!
//! A file is one header line followed by a JSON body:
//!
//! ```text
//! omniforest-model v1 sha256=<hex digest of body> len=<body bytes>
//! {"format_version":1,"learner":{...}}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learner::OmniLearner;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "omniforest-model";

#[derive(Serialize)]
struct BodyRef<'a> {
    format_version: u32,
    learner: &'a OmniLearner,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Body {
    format_version: u32,
    learner: OmniLearner,
}

pub fn to_bytes(learner: &OmniLearner) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(&BodyRef {
        format_version: FORMAT_VERSION,
        learner,
    })
    .map_err(|e| Error::Corrupt(format!("cannot encode model: {e}")))?;
    let digest = hex::encode(Sha256::digest(&body));
    let mut out = format!(
        "{MAGIC} v{FORMAT_VERSION} sha256={digest} len={}\n",
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<OmniLearner> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Corrupt("missing model header".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Corrupt("header is not text".into()))?;
    let body = &bytes[newline + 1..];
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(Error::Corrupt("not an omniforest model file".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Corrupt("malformed version in header".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let digest = parts
        .next()
        .and_then(|v| v.strip_prefix("sha256="))
        .ok_or_else(|| Error::Corrupt("missing checksum in header".into()))?;
    let len: usize = parts
        .next()
        .and_then(|v| v.strip_prefix("len="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Corrupt("missing length in header".into()))?;
    if parts.next().is_some() {
        return Err(Error::Corrupt("trailing header fields".into()));
    }
    if body.len() != len {
        return Err(Error::Corrupt(format!(
            "body is {} bytes, header says {len}; file truncated or extended",
            body.len()
        )));
    }
    if hex::encode(Sha256::digest(body)) != digest {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let parsed: Body = serde_json::from_slice(body)
        .map_err(|e| Error::Corrupt(format!("invalid model body: {e}")))?;
    if parsed.format_version != version {
        return Err(Error::Corrupt("header and body versions differ".into()));
    }
    parsed.learner.check()?;
    Ok(parsed.learner)
}

pub fn save_model(learner: &OmniLearner, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(learner)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<OmniLearner> {
    from_bytes(&fs::read(path)?)
}
