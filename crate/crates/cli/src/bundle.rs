//! Result bundles: machine-readable records plus a provenance block, written
//! as line-delimited JSON with a versioned schema. With a fixed config and
//! seed, re-running a command reproduces the bundle byte for byte, so no
//! timestamps or environment state belong here.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// FNV-1a over the canonical JSON encoding of a config: changes exactly when
/// a semantic field changes.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in json.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub record: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub core_version: &'static str,
    pub cli_version: &'static str,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, seed: Option<u64>, config: &T) -> Self {
        Self {
            record: "provenance",
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            config_hash: config_hash(config),
            core_version: env!("CARGO_PKG_VERSION"),
            cli_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// An ordered set of JSON records headed by a provenance line.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub records: Vec<serde_json::Value>,
}

impl ResultBundle {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            provenance,
            records: Vec::new(),
        }
    }

    pub fn push<T: Serialize>(&mut self, record: &T) {
        self.records
            .push(serde_json::to_value(record).expect("record serializes"));
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.provenance).expect("provenance serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, self.to_jsonl())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Cfg {
        a: u32,
        b: String,
    }

    #[test]
    fn hash_tracks_semantic_fields() {
        let c1 = Cfg {
            a: 1,
            b: "x".into(),
        };
        let c2 = Cfg {
            a: 1,
            b: "x".into(),
        };
        let c3 = Cfg {
            a: 2,
            b: "x".into(),
        };
        assert_eq!(config_hash(&c1), config_hash(&c2));
        assert_ne!(config_hash(&c1), config_hash(&c3));
    }
}
