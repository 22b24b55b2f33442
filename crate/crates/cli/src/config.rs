//! Resolved run configuration.
//!
//! Every command works from a flat string map. Layers are applied in order
//! defaults < preset < config file < flags, so later layers win. The resolved
//! map is what the manifest stores, and replaying it reproduces the run.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub type ConfigMap = BTreeMap<String, String>;

/// Marks a user-facing configuration problem (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('_', "-")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<ConfigMap> {
    let mut out = ConfigMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(usage(format!(
                "config line {}: expected `key = value`, got {raw:?}",
                n + 1
            )));
        };
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config_text(&text)
}

/// Synthetic-data keys plus the learner defaults that match them.
pub fn preset(name: &str) -> Result<ConfigMap> {
    let pairs: &[(&str, &str)] = match name {
        "paper-desk" => &[
            ("grid", "24x24x12"),
            ("networks", "10"),
            ("blobs", "3"),
            ("radius-min", "2"),
            ("radius-max", "6"),
            ("timepoints", "50"),
            ("noise", "0.05"),
            ("sparsity-per-voxel", "3"),
            ("atoms", "10"),
            ("sparsity", "3"),
            ("clusters", "10"),
        ],
        "tiny" => &[
            ("grid", "8x8x4"),
            ("networks", "4"),
            ("blobs", "2"),
            ("radius-min", "1.5"),
            ("radius-max", "3"),
            ("timepoints", "16"),
            ("noise", "0.05"),
            ("sparsity-per-voxel", "2"),
            ("atoms", "4"),
            ("sparsity", "2"),
            ("clusters", "4"),
        ],
        other => {
            return Err(usage(format!(
                "unknown preset {other:?} (expected paper-desk or tiny)"
            )))
        }
    };
    let mut m: ConfigMap = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    m.insert("preset".into(), name.into());
    Ok(m)
}

/// Applies the layers in precedence order.
pub fn resolve(
    defaults: ConfigMap,
    file: Option<ConfigMap>,
    flags: ConfigMap,
) -> Result<ConfigMap> {
    let preset_name = flags
        .get("preset")
        .or_else(|| file.as_ref().and_then(|f| f.get("preset")))
        .cloned();
    let mut out = defaults;
    if let Some(p) = preset_name {
        out.extend(preset(&p)?);
    }
    if let Some(f) = file {
        out.extend(f);
    }
    out.extend(flags);
    Ok(out)
}

/// Typed access to a resolved map.
pub struct Settings<'a>(pub &'a ConfigMap);

impl Settings<'_> {
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.0.get(key).map(|s| s.as_str()) {
            None | Some("") | Some("none") => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| usage(format!("invalid value {v:?} for `{key}`: {e}"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key)?
            .ok_or_else(|| usage(format!("missing required setting `{key}`")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.get::<PathBuf>(key)
    }

    pub fn opt_path(&self, key: &str) -> Result<Option<PathBuf>> {
        self.opt::<PathBuf>(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.get::<String>(key)?.as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            v => Err(usage(format!("invalid boolean {v:?} for `{key}`"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = self.get::<String>(key)?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| usage(format!("invalid entry {s:?} in `{key}`: {e}")))
            })
            .collect()
    }

    /// `NXxNYxNZ`, e.g. `24x24x12`.
    pub fn grid(&self, key: &str) -> Result<[usize; 3]> {
        let raw = self.get::<String>(key)?;
        let parts: Vec<&str> = raw.split(['x', 'X', ',']).map(str::trim).collect();
        if parts.len() != 3 {
            bail!(UsageError(format!("grid {raw:?} must look like 24x24x12")));
        }
        let mut g = [0usize; 3];
        for (slot, p) in g.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|e| usage(format!("invalid grid dimension {p:?} in {raw:?}: {e}")))?;
        }
        Ok(g)
    }
}

/// Records `value` under `key` when present.
pub fn put<T: ToString>(m: &mut ConfigMap, key: &str, value: Option<T>) {
    if let Some(v) = value {
        m.insert(key.to_string(), v.to_string());
    }
}

/// Absolute form of an input path so manifests replay from any directory.
pub fn absolute(p: &Path) -> Result<String> {
    let abs = std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))?;
    Ok(abs.to_string_lossy().into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> ConfigMap {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn config_text_parsing() {
        let m = parse_config_text("# comment\nnoise = 0.1  # trailing\ngroup_threshold=0.8\n\n")
            .unwrap();
        assert_eq!(m, map(&[("noise", "0.1"), ("group-threshold", "0.8")]));
        assert!(parse_config_text("just words").is_err());
    }

    #[test]
    fn precedence_is_flags_file_preset_defaults() {
        let defaults = map(&[("noise", "0"), ("seed", "0"), ("atoms", "5")]);
        let file = map(&[("preset", "tiny"), ("noise", "0.2")]);
        let flags = map(&[("seed", "9")]);
        let r = resolve(defaults, Some(file), flags).unwrap();
        assert_eq!(r["noise"], "0.2");
        assert_eq!(r["seed"], "9");
        assert_eq!(r["atoms"], "4");
        assert_eq!(r["grid"], "8x8x4");
    }

    #[test]
    fn grid_and_lists() {
        let m = map(&[
            ("grid", "24x24x12"),
            ("fractions", "0.25, 0.5,1"),
            ("bad", "3x4"),
        ]);
        let s = Settings(&m);
        assert_eq!(s.grid("grid").unwrap(), [24, 24, 12]);
        assert_eq!(s.list::<f64>("fractions").unwrap(), vec![0.25, 0.5, 1.0]);
        assert!(s.grid("bad").is_err());
        assert!(s.get::<f64>("missing").is_err());
    }
}
