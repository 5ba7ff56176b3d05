use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Written once before training starts and never modified afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub kind: String,
    pub fold: usize,
    pub folds: usize,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputFile>,
    pub started_at_unix: u64,
}

/// Completion record written next to the manifest when training ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunStatus {
    pub finished_at_unix: u64,
    pub epochs_completed: usize,
    pub steps: usize,
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub fn input_file(path: &Path) -> Result<InputFile, CliError> {
    Ok(InputFile {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// `key = value` lines as a map.
pub fn config_map(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Keys that may change between a run and its resumption.
const RESUMABLE: &[&str] = &["epochs"];

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let p = dir.join(FILE);
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::io(&p, e))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let p = dir.join(FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(&p, e))?;
        fs::write(&p, text + "\n").map_err(|e| CliError::io(&p, e))
    }

    /// Rejects a resumption whose inputs, split or configuration differ from
    /// the recorded run. Paths may differ; contents may not.
    pub fn check_resume(&self, current: &RunManifest) -> Result<(), CliError> {
        let mismatch = |what: String| CliError::Data(format!("manifest mismatch on resume: {what}"));
        for (k, a, b) in [
            ("seed", self.seed.to_string(), current.seed.to_string()),
            ("kind", self.kind.clone(), current.kind.clone()),
            ("fold", self.fold.to_string(), current.fold.to_string()),
            ("folds", self.folds.to_string(), current.folds.to_string()),
        ] {
            if a != b {
                return Err(mismatch(format!("{k} was {a}, now {b}")));
            }
        }
        let keys: std::collections::BTreeSet<&String> = self.inputs.keys().chain(current.inputs.keys()).collect();
        for k in keys {
            match (self.inputs.get(k), current.inputs.get(k)) {
                (Some(a), Some(b)) if a.sha256 == b.sha256 => {}
                (Some(a), Some(b)) => {
                    return Err(mismatch(format!(
                        "{k} sha256 was {}, now {} ({})",
                        a.sha256, b.sha256, b.path
                    )))
                }
                (Some(_), None) => return Err(mismatch(format!("{k} was given, now missing"))),
                (None, _) => return Err(mismatch(format!("{k} was not part of the run"))),
            }
        }
        let strip = |m: &BTreeMap<String, String>| {
            let mut m = m.clone();
            for k in RESUMABLE {
                m.remove(*k);
            }
            m
        };
        let (a, b) = (strip(&self.config), strip(&current.config));
        if let Some(k) = a.keys().chain(b.keys()).find(|k| a.get(*k) != b.get(*k)) {
            return Err(mismatch(format!(
                "config `{k}` was {}, now {}",
                a.get(k).map_or("unset", String::as_str),
                b.get(k).map_or("unset", String::as_str)
            )));
        }
        Ok(())
    }
}
