//! Config-file loading and artifact output.
//!
//! A config file is TOML with one table per subcommand (`[simulate]`,
//! `[positivity]`, ...) whose keys mirror the command's options. A top-level
//! `seed` applies to every section that does not set its own. Flags are
//! applied on top of the loaded section, and the merged result is what gets
//! recorded next to each artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        Ok(ConfigFile { table })
    }

    /// Deserializes the `[name]` table, falling back to defaults for
    /// missing keys.
    pub fn section<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let mut section = match self.table.get(name) {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => anyhow::bail!("config key `{name}` must be a table"),
            None => toml::Table::new(),
        };
        if let Some(seed) = self.table.get("seed") {
            section.entry("seed").or_insert_with(|| seed.clone());
        }
        toml::Value::Table(section)
            .try_into()
            .with_context(|| format!("invalid `[{name}]` config section"))
    }
}

/// Parses a kebab-case (or lowercase) variant name through serde, so flag
/// values match config-file spellings.
pub fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Meta<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: &'a C,
}

pub struct Output {
    pub dir: PathBuf,
}

impl Output {
    /// `explicit` as given, otherwise `default_name` inside the output
    /// directory.
    pub fn path(&self, explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.dir.join(default_name))
    }

    /// Writes `contents` to `path` and the resolved config to
    /// `<path>.meta.json`. Neither file carries a timestamp.
    pub fn write<C: Serialize>(&self, path: &Path, contents: &str, command: &str, seed: Option<u64>, config: &C) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
        let meta = Meta {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
        };
        let mut meta_path = path.as_os_str().to_owned();
        meta_path.push(".meta.json");
        let meta_path = PathBuf::from(meta_path);
        fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
            .with_context(|| format!("writing {}", meta_path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synthcause_core::dgp::Regime;
    use synthcause_core::simengine::SimConfig;

    #[test]
    fn top_level_seed_fills_sections() {
        let cfg = ConfigFile {
            table: "seed = 9\n[simulate]\nreps = 10\n".parse().unwrap(),
        };
        let sim: SimConfig = cfg.section("simulate").unwrap();
        assert_eq!((sim.seed, sim.reps), (9, 10));
    }

    #[test]
    fn section_seed_wins() {
        let cfg = ConfigFile {
            table: "seed = 9\n[simulate]\nseed = 4\n".parse().unwrap(),
        };
        let sim: SimConfig = cfg.section("simulate").unwrap();
        assert_eq!(sim.seed, 4);
    }

    #[test]
    fn kebab_matches_serde_names() {
        assert_eq!(kebab::<Regime>("observational").unwrap(), Regime::Observational);
        assert!(kebab::<Regime>("nope").is_err());
    }
}
