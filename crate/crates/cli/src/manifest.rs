//! Run manifests and parameter files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    /// SHA-256 of every input file, keyed by path as given.
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub duration_s: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digests<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<BTreeMap<String, String>> {
    paths
        .into_iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
        .collect()
}

/// Loads a parameter object for `command`. A manifest contributes its
/// `parameters`; any other JSON object is taken as the parameters directly.
pub fn load_parameters(path: &Path, command: &str) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Value::Object(mut map) = value else {
        bail!("{}: expected a JSON object", path.display());
    };
    if map.contains_key("parameters") && map.contains_key("command") {
        let recorded = map.get("command").and_then(Value::as_str).unwrap_or_default();
        if recorded != command {
            bail!("{}: manifest is for `{recorded}`, not `{command}`", path.display());
        }
        return Ok(map.remove("parameters").unwrap_or(Value::Null));
    }
    Ok(Value::Object(map))
}
