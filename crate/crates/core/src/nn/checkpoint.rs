//! Versioned JSON checkpoint envelope.
//!
//! Every checkpoint file is one JSON object:
//!
//! ```json
//! { "format": "arld-checkpoint", "version": 1, "kind": "network", "payload": { ... } }
//! ```
//!
//! `kind` names the payload type (`network`, `agent`, `buffer`, `expert`).
//! Floats are written with shortest round-trip formatting and parsed with
//! correct rounding, so a loaded network reproduces forward passes bit-exactly.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::QNetwork;
use crate::error::{Error, Result};

pub const FORMAT: &str = "arld-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    payload: T,
}

pub fn to_string<T: Serialize>(kind: &str, payload: &T) -> Result<String> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        payload,
    };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_str<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.format != FORMAT || env.version != VERSION {
        return Err(Error::CheckpointVersion {
            format: env.format,
            version: env.version,
        });
    }
    if env.kind != kind {
        return Err(Error::Config(format!(
            "checkpoint holds a {:?}, expected {kind:?}",
            env.kind
        )));
    }
    Ok(serde_json::from_value(env.payload)?)
}

pub fn save<T: Serialize>(path: impl AsRef<Path>, kind: &str, payload: &T) -> Result<()> {
    fs::write(path, to_string(kind, payload)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>, kind: &str) -> Result<T> {
    from_str(kind, &fs::read_to_string(path)?)
}

pub fn save_network(path: impl AsRef<Path>, net: &QNetwork) -> Result<()> {
    save(path, "network", net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<QNetwork> {
    let net: QNetwork = load(path, "network")?;
    net.validate()?;
    Ok(net)
}
