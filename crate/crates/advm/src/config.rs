//! Line-based config files (`advm.cfg`, `derivative_<NAME>.cfg`,
//! `target_<NAME>.cfg`).
//!
//! The format is deliberately small: `[section]` headers, `key = value`
//! entries, `;`/`#` comments and blank lines. Section order and repetition
//! are preserved because derivative specs repeat `[register …]` and
//! `[field …]` sections. Everything unknown is an error — config typos must
//! not silently change what a regression run means.

use std::fmt;
use std::path::{Path, PathBuf};

/// A config file failed to parse or carried invalid content.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}:{line}: {message}", path = .path.display())]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: u32,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: &Path, line: u32, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}

/// One `key = value` entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IniEntry {
    pub key: String,
    pub value: String,
    pub line: u32,
}

/// One `[section]` with its entries, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IniSection {
    pub name: String,
    pub line: u32,
    pub entries: Vec<IniEntry>,
}

impl IniSection {
    /// Value of `key`, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.key == key)
            .map(|e| e.value.as_str())
    }

    /// Value of `key`, or a config error naming the section.
    pub fn require(&self, path: &Path, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| {
            ConfigError::new(
                path,
                self.line,
                format!("section [{}] is missing key '{key}'", self.name),
            )
        })
    }
}

/// A parsed config file: ordered sections, duplicates allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IniFile {
    pub path: PathBuf,
    pub sections: Vec<IniSection>,
}

impl IniFile {
    /// First section with this exact name.
    pub fn section(&self, name: &str) -> Option<&IniSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// All sections whose name starts with `prefix` (e.g. `"register "`).
    pub fn sections_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = &'a IniSection> {
        self.sections
            .iter()
            .filter(move |s| s.name.starts_with(prefix))
    }
}

/// Parse config text. Entries outside any section are errors.
pub fn parse_ini(path: &Path, text: &str) -> Result<IniFile, ConfigError> {
    let mut file = IniFile {
        path: path.to_path_buf(),
        sections: Vec::new(),
    };
    for (index, raw) in text.lines().enumerate() {
        let line = index as u32 + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::new(path, line, "unclosed section header"));
            };
            let name = name.trim();
            if name.is_empty() {
                return Err(ConfigError::new(path, line, "empty section name"));
            }
            file.sections.push(IniSection {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ConfigError::new(
                path,
                line,
                format!("expected 'key = value', found '{trimmed}'"),
            ));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::new(path, line, "empty key"));
        }
        let entry = IniEntry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        };
        match file.sections.last_mut() {
            Some(section) => section.entries.push(entry),
            None => {
                return Err(ConfigError::new(
                    path,
                    line,
                    "entry before any [section] header",
                ));
            }
        }
    }
    Ok(file)
}

/// Read and parse a config file from disk.
pub fn load_ini(path: &Path) -> Result<IniFile, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path, 0, format!("cannot read config: {e}")))?;
    parse_ini(path, &text)
}

/// Split a comma-separated value into trimmed, non-empty items.
pub fn comma_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parse an integer value that may be decimal or `0x` hex.
pub fn parse_number(path: &Path, line: u32, key: &str, value: &str) -> Result<u32, ConfigError> {
    let parsed = if let Some(hex) = value
        .strip_prefix("0x")
        .or_else(|| value.strip_prefix("0X"))
    {
        u32::from_str_radix(hex, 16)
    } else {
        value.parse::<u32>()
    };
    parsed.map_err(|_| {
        ConfigError::new(
            path,
            line,
            format!("key '{key}' needs a 32-bit number, found '{value}'"),
        )
    })
}

/// The root `advm.cfg`: where the global layer lives, which derivatives are
/// registered, and optional selection defaults. A missing file is an empty
/// config — a tree without global dirs or registered derivatives is legal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdvmConfig {
    /// Root-relative directories holding global-layer sources.
    pub global_dirs: Vec<PathBuf>,
    /// Registered derivative names.
    pub derivatives: Vec<String>,
    /// Default derivative for commands that need a selection.
    pub default_derivative: Option<String>,
    /// Default target for commands that need a selection.
    pub default_target: Option<String>,
}

/// The fixed name of the root config file.
pub const ADVM_CFG: &str = "advm.cfg";

/// Load `<root>/advm.cfg` (missing file ⇒ defaults).
pub fn load_advm_cfg(root: &Path) -> Result<AdvmConfig, ConfigError> {
    let path = root.join(ADVM_CFG);
    if !path.exists() {
        return Ok(AdvmConfig::default());
    }
    let ini = load_ini(&path)?;
    let mut config = AdvmConfig::default();
    for section in &ini.sections {
        match section.name.as_str() {
            "system" => {
                for entry in &section.entries {
                    match entry.key.as_str() {
                        "global_dirs" => {
                            for dir in comma_list(&entry.value) {
                                let dir = PathBuf::from(dir);
                                if dir.is_absolute() {
                                    return Err(ConfigError::new(
                                        &path,
                                        entry.line,
                                        "global_dirs entries must be relative paths",
                                    ));
                                }
                                config.global_dirs.push(dir);
                            }
                        }
                        other => {
                            return Err(ConfigError::new(
                                &path,
                                entry.line,
                                format!("unknown key '{other}' in [system]"),
                            ));
                        }
                    }
                }
            }
            "derivatives" => {
                for entry in &section.entries {
                    match entry.key.as_str() {
                        "names" => config.derivatives.extend(comma_list(&entry.value)),
                        other => {
                            return Err(ConfigError::new(
                                &path,
                                entry.line,
                                format!("unknown key '{other}' in [derivatives]"),
                            ));
                        }
                    }
                }
            }
            "defaults" => {
                for entry in &section.entries {
                    match entry.key.as_str() {
                        "derivative" => config.default_derivative = Some(entry.value.clone()),
                        "target" => config.default_target = Some(entry.value.clone()),
                        other => {
                            return Err(ConfigError::new(
                                &path,
                                entry.line,
                                format!("unknown key '{other}' in [defaults]"),
                            ));
                        }
                    }
                }
            }
            other => {
                return Err(ConfigError::new(
                    &path,
                    section.line,
                    format!("unknown section [{other}]"),
                ));
            }
        }
    }
    Ok(config)
}

impl fmt::Display for AdvmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[system]")?;
        let dirs: Vec<_> = self
            .global_dirs
            .iter()
            .map(|d| d.display().to_string())
            .collect();
        writeln!(f, "global_dirs = {}", dirs.join(", "))?;
        writeln!(f, "[derivatives]")?;
        writeln!(f, "names = {}", self.derivatives.join(", "))?;
        if self.default_derivative.is_some() || self.default_target.is_some() {
            writeln!(f, "[defaults]")?;
            if let Some(d) = &self.default_derivative {
                writeln!(f, "derivative = {d}")?;
            }
            if let Some(t) = &self.default_target {
                writeln!(f, "target = {t}")?;
            }
        }
        Ok(())
    }
}
