//! Release labels: content-addressed freezing of a verification tree.
//!
//! A release label is a digest hierarchy. Every environment gets a digest
//! over its files (sorted paths, length-framed content — never timestamps),
//! the global layer gets one, and the system digest covers the sorted list
//! of those sub-labels. Labelling the same tree twice is byte-identical;
//! enumerating environments in a different order changes nothing.
//!
//! Two files serialize a label: `release.lock` holds the per-environment,
//! globals and system digests; `release.manifest` holds one digest per file
//! so a later drift check can name exactly what changed instead of only
//! which environment. Labelling refuses to run while the linter reports
//! errors — a release is a statement that the tree was clean.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::env_model::SystemLayout;
use crate::lint::{Diagnostic, Severity};

/// File name of the digest summary.
pub const RELEASE_LOCK: &str = "release.lock";
/// File name of the per-file digest companion.
pub const RELEASE_MANIFEST: &str = "release.manifest";

/// One environment's digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvLabel {
    pub env: String,
    /// Hex SHA-256 over the environment's files.
    pub digest: String,
}

/// The complete label of a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemLabel {
    /// Sorted by environment name.
    pub envs: Vec<EnvLabel>,
    pub globals_digest: String,
    pub system_digest: String,
}

/// Per-file digests backing a label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    /// Environment name → root-relative path → content digest.
    pub env_files: BTreeMap<String, BTreeMap<PathBuf, String>>,
    /// Root-relative path → content digest, for the global layer.
    pub global_files: BTreeMap<PathBuf, String>,
}

/// Labelling or lock handling failed.
#[derive(Debug, thiserror::Error)]
pub enum ReleaseError {
    #[error("cannot read {path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{count} lint error(s) block release labelling")]
    LintErrorsPresent { count: usize },
    #[error("{path}:{line}: malformed lock: {detail}", path = .path.display())]
    MalformedLock {
        path: PathBuf,
        line: u32,
        detail: String,
    },
    #[error("environment '{env}' appears twice in the lock")]
    DuplicateEnvName { env: String },
}

fn read_file(path: &Path) -> Result<Vec<u8>, ReleaseError> {
    std::fs::read(path).map_err(|source| ReleaseError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Hex SHA-256 of one file's content.
pub fn file_digest(path: &Path) -> Result<String, ReleaseError> {
    Ok(hex::encode(Sha256::digest(read_file(path)?)))
}

/// All regular files under `dir`, as sorted root-relative paths. Hidden
/// entries are skipped, matching discovery.
fn files_under(root: &Path, dir: &Path) -> Result<Vec<PathBuf>, ReleaseError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'))
    {
        let entry = entry.map_err(|e| ReleaseError::Io {
            path: dir.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() {
            if let Ok(rel) = entry.path().strip_prefix(root) {
                files.push(rel.to_path_buf());
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Digest a sorted list of files: for each, the root-relative path, a zero
/// byte, the content length (8 bytes little-endian) and the content. The
/// framing keeps `("a", "bc")` distinct from `("ab", "c")`.
fn digest_file_list(root: &Path, rels: &[PathBuf]) -> Result<String, ReleaseError> {
    let mut hasher = Sha256::new();
    for rel in rels {
        hasher.update(rel.display().to_string().as_bytes());
        hasher.update([0u8]);
        let content = read_file(&root.join(rel))?;
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(&content);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Digest one environment (every file under its directory).
pub fn compute_env_label(layout: &SystemLayout, env_name: &str) -> Result<EnvLabel, ReleaseError> {
    let env = layout.env(env_name).ok_or_else(|| ReleaseError::Io {
        path: PathBuf::from(env_name),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such environment"),
    })?;
    let files = files_under(&layout.root, &layout.root.join(&env.dir))?;
    Ok(EnvLabel {
        env: env.name.clone(),
        digest: digest_file_list(&layout.root, &files)?,
    })
}

fn compute_globals_digest(layout: &SystemLayout) -> Result<String, ReleaseError> {
    let mut files = Vec::new();
    for dir in &layout.config.global_dirs {
        files.extend(files_under(&layout.root, &layout.root.join(dir))?);
    }
    files.sort();
    digest_file_list(&layout.root, &files)
}

/// Combine per-environment labels and the global-layer digest into the
/// system digest. Input order does not matter: labels are sorted by
/// environment name before hashing, so any permutation composes identically.
pub fn compose_system_digest(envs: &[EnvLabel], globals_digest: &str) -> String {
    let mut sorted: Vec<&EnvLabel> = envs.iter().collect();
    sorted.sort_by(|a, b| a.env.cmp(&b.env));
    let mut hasher = Sha256::new();
    for label in sorted {
        hasher.update(format!("env {} {}\n", label.env, label.digest).as_bytes());
    }
    hasher.update(format!("globals {globals_digest}\n").as_bytes());
    hex::encode(hasher.finalize())
}

/// Digest the whole tree without any lint gate (used for drift checks).
pub fn compute_system_label(layout: &SystemLayout) -> Result<SystemLabel, ReleaseError> {
    let mut envs = Vec::with_capacity(layout.envs.len());
    for env in &layout.envs {
        envs.push(compute_env_label(layout, &env.name)?);
    }
    envs.sort_by(|a, b| a.env.cmp(&b.env));
    let globals_digest = compute_globals_digest(layout)?;
    let system_digest = compose_system_digest(&envs, &globals_digest);
    Ok(SystemLabel {
        envs,
        globals_digest,
        system_digest,
    })
}

/// Per-file digests for the whole tree.
pub fn compute_manifest(layout: &SystemLayout) -> Result<Manifest, ReleaseError> {
    let mut manifest = Manifest::default();
    for env in &layout.envs {
        let mut files = BTreeMap::new();
        for rel in files_under(&layout.root, &layout.root.join(&env.dir))? {
            let digest = file_digest(&layout.root.join(&rel))?;
            files.insert(rel, digest);
        }
        manifest.env_files.insert(env.name.clone(), files);
    }
    for dir in &layout.config.global_dirs {
        for rel in files_under(&layout.root, &layout.root.join(dir))? {
            let digest = file_digest(&layout.root.join(&rel))?;
            manifest.global_files.insert(rel, digest);
        }
    }
    Ok(manifest)
}

/// Label a tree for release. Lint errors (not warnings) block the label.
pub fn label_system(
    layout: &SystemLayout,
    diagnostics: &[Diagnostic],
) -> Result<SystemLabel, ReleaseError> {
    let errors = diagnostics
        .iter()
        .filter(|d| d.severity() == Severity::Error)
        .count();
    if errors > 0 {
        return Err(ReleaseError::LintErrorsPresent { count: errors });
    }
    compute_system_label(layout)
}

impl SystemLabel {
    /// The lock file: sorted `env` lines, one `globals`, one `system`.
    pub fn to_lock_text(&self) -> String {
        let mut out = String::new();
        for label in &self.envs {
            out.push_str(&format!("env {} {}\n", label.env, label.digest));
        }
        out.push_str(&format!("globals {}\n", self.globals_digest));
        out.push_str(&format!("system {}\n", self.system_digest));
        out
    }
}

fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Parse lock text. The system digest is recomputed from the env and
/// globals lines and must match — a lock that disagrees with itself is
/// refused.
pub fn parse_lock_text(path: &Path, text: &str) -> Result<SystemLabel, ReleaseError> {
    let malformed = |line: u32, detail: String| ReleaseError::MalformedLock {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut envs = Vec::new();
    let mut seen = BTreeSet::new();
    let mut globals_digest = None;
    let mut system_digest = None;
    for (index, raw) in text.lines().enumerate() {
        let line = index as u32 + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.as_slice() {
            ["env", name, digest] if is_hex_digest(digest) => {
                if !seen.insert(name.to_string()) {
                    return Err(ReleaseError::DuplicateEnvName {
                        env: name.to_string(),
                    });
                }
                envs.push(EnvLabel {
                    env: name.to_string(),
                    digest: digest.to_string(),
                });
            }
            ["globals", digest] if is_hex_digest(digest) => {
                if globals_digest.replace(digest.to_string()).is_some() {
                    return Err(malformed(line, "second 'globals' line".to_string()));
                }
            }
            ["system", digest] if is_hex_digest(digest) => {
                if system_digest.replace(digest.to_string()).is_some() {
                    return Err(malformed(line, "second 'system' line".to_string()));
                }
            }
            _ => {
                return Err(malformed(
                    line,
                    format!("expected 'env NAME DIGEST', 'globals DIGEST' or 'system DIGEST', got '{raw}'"),
                ));
            }
        }
    }
    let globals_digest =
        globals_digest.ok_or_else(|| malformed(0, "missing 'globals' line".to_string()))?;
    let system_digest =
        system_digest.ok_or_else(|| malformed(0, "missing 'system' line".to_string()))?;
    envs.sort_by(|a, b| a.env.cmp(&b.env));
    let recomputed = compose_system_digest(&envs, &globals_digest);
    if recomputed != system_digest {
        return Err(malformed(
            0,
            "system digest does not match the env and globals lines".to_string(),
        ));
    }
    Ok(SystemLabel {
        envs,
        globals_digest,
        system_digest,
    })
}

impl Manifest {
    /// `env NAME PATH DIGEST` lines, then `global PATH DIGEST` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (env, files) in &self.env_files {
            for (path, digest) in files {
                out.push_str(&format!("env {} {} {}\n", env, path.display(), digest));
            }
        }
        for (path, digest) in &self.global_files {
            out.push_str(&format!("global {} {}\n", path.display(), digest));
        }
        out
    }
}

/// Parse manifest text.
pub fn parse_manifest_text(path: &Path, text: &str) -> Result<Manifest, ReleaseError> {
    let malformed = |line: u32, detail: String| ReleaseError::MalformedLock {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut manifest = Manifest::default();
    for (index, raw) in text.lines().enumerate() {
        let line = index as u32 + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        match fields.as_slice() {
            ["env", env, rel, digest] if is_hex_digest(digest) => {
                manifest
                    .env_files
                    .entry(env.to_string())
                    .or_default()
                    .insert(PathBuf::from(rel), digest.to_string());
            }
            ["global", rel, digest] if is_hex_digest(digest) => {
                manifest
                    .global_files
                    .insert(PathBuf::from(rel), digest.to_string());
            }
            _ => {
                return Err(malformed(
                    line,
                    format!("expected 'env NAME PATH DIGEST' or 'global PATH DIGEST', got '{raw}'"),
                ));
            }
        }
    }
    Ok(manifest)
}

/// Write `release.lock` and `release.manifest` at the root.
pub fn write_release(
    root: &Path,
    label: &SystemLabel,
    manifest: &Manifest,
) -> Result<(), ReleaseError> {
    let write = |name: &str, text: String| {
        std::fs::write(root.join(name), text).map_err(|source| ReleaseError::Io {
            path: root.join(name),
            source,
        })
    };
    write(RELEASE_LOCK, label.to_lock_text())?;
    write(RELEASE_MANIFEST, manifest.to_text())
}

/// Read the release files at the root, if any. A lock without a manifest is
/// fine (drift checks then degrade to environment granularity).
pub fn read_release(root: &Path) -> Result<Option<(SystemLabel, Option<Manifest>)>, ReleaseError> {
    let lock_path = root.join(RELEASE_LOCK);
    if !lock_path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&lock_path).map_err(|source| ReleaseError::Io {
        path: lock_path.clone(),
        source,
    })?;
    let label = parse_lock_text(&lock_path, &text)?;
    let manifest_path = root.join(RELEASE_MANIFEST);
    let manifest = if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|source| ReleaseError::Io {
            path: manifest_path.clone(),
            source,
        })?;
        Some(parse_manifest_text(&manifest_path, &text)?)
    } else {
        None
    };
    Ok(Some((label, manifest)))
}

/// One drifted file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDrift {
    pub path: PathBuf,
    pub kind: DriftKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    Added,
    Removed,
    Changed,
}

impl fmt::Display for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DriftKind::Added => "added",
            DriftKind::Removed => "removed",
            DriftKind::Changed => "changed",
        })
    }
}

/// One difference between a frozen label and the current tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Drift {
    EnvAdded {
        env: String,
    },
    EnvRemoved {
        env: String,
    },
    /// `files` is empty when no manifest was available to name them.
    EnvChanged {
        env: String,
        files: Vec<FileDrift>,
    },
    GlobalsChanged {
        files: Vec<FileDrift>,
    },
}

/// The outcome of a frozen-tree check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DriftReport {
    pub drifts: Vec<Drift>,
}

impl DriftReport {
    pub fn is_clean(&self) -> bool {
        self.drifts.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for drift in &self.drifts {
            match drift {
                Drift::EnvAdded { env } => out.push_str(&format!("added env '{env}'\n")),
                Drift::EnvRemoved { env } => out.push_str(&format!("removed env '{env}'\n")),
                Drift::EnvChanged { env, files } => {
                    out.push_str(&format!("changed env '{env}'\n"));
                    for file in files {
                        out.push_str(&format!("  {}: {}\n", file.kind, file.path.display()));
                    }
                }
                Drift::GlobalsChanged { files } => {
                    out.push_str("changed global layer\n");
                    for file in files {
                        out.push_str(&format!("  {}: {}\n", file.kind, file.path.display()));
                    }
                }
            }
        }
        out
    }
}

fn diff_files(old: &BTreeMap<PathBuf, String>, new: &BTreeMap<PathBuf, String>) -> Vec<FileDrift> {
    let mut drifts = Vec::new();
    for (path, old_digest) in old {
        match new.get(path) {
            None => drifts.push(FileDrift {
                path: path.clone(),
                kind: DriftKind::Removed,
            }),
            Some(new_digest) if new_digest != old_digest => drifts.push(FileDrift {
                path: path.clone(),
                kind: DriftKind::Changed,
            }),
            Some(_) => {}
        }
    }
    for path in new.keys() {
        if !old.contains_key(path) {
            drifts.push(FileDrift {
                path: path.clone(),
                kind: DriftKind::Added,
            });
        }
    }
    drifts.sort_by(|a, b| a.path.cmp(&b.path));
    drifts
}

/// Compare the current tree against a frozen label. With a manifest the
/// report names each drifted file; without one it degrades to environment
/// granularity.
pub fn check_frozen(
    layout: &SystemLayout,
    lock: &SystemLabel,
    manifest: Option<&Manifest>,
) -> Result<DriftReport, ReleaseError> {
    let current = compute_system_label(layout)?;
    let current_manifest = match manifest {
        Some(_) => Some(compute_manifest(layout)?),
        None => None,
    };

    let frozen_envs: BTreeMap<&str, &str> = lock
        .envs
        .iter()
        .map(|l| (l.env.as_str(), l.digest.as_str()))
        .collect();
    let current_envs: BTreeMap<&str, &str> = current
        .envs
        .iter()
        .map(|l| (l.env.as_str(), l.digest.as_str()))
        .collect();

    let mut drifts = Vec::new();
    let empty = BTreeMap::new();
    for (&env, &frozen_digest) in &frozen_envs {
        match current_envs.get(env) {
            None => drifts.push(Drift::EnvRemoved {
                env: env.to_string(),
            }),
            Some(&current_digest) if current_digest != frozen_digest => {
                let files = match (manifest, &current_manifest) {
                    (Some(old), Some(new)) => diff_files(
                        old.env_files.get(env).unwrap_or(&empty),
                        new.env_files.get(env).unwrap_or(&empty),
                    ),
                    _ => Vec::new(),
                };
                drifts.push(Drift::EnvChanged {
                    env: env.to_string(),
                    files,
                });
            }
            Some(_) => {}
        }
    }
    for &env in current_envs.keys() {
        if !frozen_envs.contains_key(env) {
            drifts.push(Drift::EnvAdded {
                env: env.to_string(),
            });
        }
    }
    if current.globals_digest != lock.globals_digest {
        let files = match (manifest, &current_manifest) {
            (Some(old), Some(new)) => diff_files(&old.global_files, &new.global_files),
            _ => Vec::new(),
        };
        drifts.push(Drift::GlobalsChanged { files });
    }

    Ok(DriftReport { drifts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::discover;
    use crate::lint::lint;

    fn write(root: &Path, rel: &str, content: &str) {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, content).unwrap();
    }

    fn sample_tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write(
            root,
            "advm.cfg",
            "[system]\nglobal_dirs = global_lib\n[derivatives]\nnames = A\n",
        );
        write(
            root,
            "global_lib/crc.asm",
            "proc global_crc\n    ret\nendp\n",
        );
        for env in ["alpha", "beta"] {
            write(root, &format!("{env}/test_plan.txt"), "plan\n");
            write(
                root,
                &format!("{env}/Abstraction_Layer/globals.inc"),
                "#define WIDTH 5\n",
            );
            write(
                root,
                &format!("{env}/test_one/src/test.asm"),
                "    mov d0, WIDTH\n    pass\n",
            );
        }
        dir
    }

    fn label_of(dir: &tempfile::TempDir) -> SystemLabel {
        let layout = discover(dir.path()).unwrap();
        compute_system_label(&layout).unwrap()
    }

    #[test]
    fn relabelling_an_unchanged_tree_is_byte_identical() {
        let dir = sample_tree();
        let first = label_of(&dir).to_lock_text();
        let second = label_of(&dir).to_lock_text();
        assert_eq!(first, second);
    }

    #[test]
    fn the_system_digest_ignores_env_enumeration_order() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let label = compute_system_label(&layout).unwrap();

        let mut shuffled = layout.clone();
        shuffled.envs.reverse();
        let relabelled = compute_system_label(&shuffled).unwrap();
        assert_eq!(label.system_digest, relabelled.system_digest);
        assert_eq!(label.to_lock_text(), relabelled.to_lock_text());
    }

    #[test]
    fn editing_one_env_changes_only_its_digest() {
        let dir = sample_tree();
        let before = label_of(&dir);
        write(
            dir.path(),
            "alpha/Abstraction_Layer/globals.inc",
            "#define WIDTH 6\n",
        );
        let after = label_of(&dir);
        assert_ne!(before.envs[0].digest, after.envs[0].digest, "alpha");
        assert_eq!(before.envs[1].digest, after.envs[1].digest, "beta");
        assert_eq!(before.globals_digest, after.globals_digest);
        assert_ne!(before.system_digest, after.system_digest);
    }

    #[test]
    fn labels_depend_on_content_not_timestamps() {
        let dir = sample_tree();
        let before = label_of(&dir);
        // Rewrite a file with identical bytes (fresh mtime).
        let path = dir.path().join("alpha/test_one/src/test.asm");
        let content = std::fs::read(&path).unwrap();
        std::fs::write(&path, content).unwrap();
        assert_eq!(before, label_of(&dir));
    }

    #[test]
    fn lint_errors_block_labelling_but_warnings_do_not() {
        let dir = sample_tree();
        // A magic number is a warning.
        write(
            dir.path(),
            "alpha/test_one/src/test.asm",
            "    mov d0, 7\n    pass\n",
        );
        let layout = discover(dir.path()).unwrap();
        let report = lint(&layout).unwrap();
        assert!(!report.has_errors());
        assert!(label_system(&layout, &report.diagnostics).is_ok());

        // A direct global call is an error.
        write(
            dir.path(),
            "alpha/test_one/src/test.asm",
            "    call global_crc\n    pass\n",
        );
        let layout = discover(dir.path()).unwrap();
        let report = lint(&layout).unwrap();
        assert!(report.has_errors());
        assert!(matches!(
            label_system(&layout, &report.diagnostics),
            Err(ReleaseError::LintErrorsPresent { count: 1 })
        ));
    }

    #[test]
    fn lock_text_round_trips() {
        let dir = sample_tree();
        let label = label_of(&dir);
        let text = label.to_lock_text();
        let parsed = parse_lock_text(Path::new(RELEASE_LOCK), &text).unwrap();
        assert_eq!(parsed, label);
    }

    #[test]
    fn malformed_locks_are_refused() {
        let p = Path::new(RELEASE_LOCK);
        let good = label_of(&sample_tree()).to_lock_text();

        assert!(matches!(
            parse_lock_text(p, "env alpha nothex\n"),
            Err(ReleaseError::MalformedLock { .. })
        ));
        assert!(matches!(
            parse_lock_text(p, &good.replace("system", "sistem")),
            Err(ReleaseError::MalformedLock { .. })
        ));
        // Dropping the globals line.
        let no_globals: String = good
            .lines()
            .filter(|l| !l.starts_with("globals"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            parse_lock_text(p, &no_globals),
            Err(ReleaseError::MalformedLock { .. })
        ));
        // Duplicating an env line.
        let first_env = good.lines().next().unwrap();
        let duplicated = format!("{first_env}\n{good}");
        assert!(matches!(
            parse_lock_text(p, &duplicated),
            Err(ReleaseError::DuplicateEnvName { .. })
        ));
        // Tampering with an env digest breaks the system digest check.
        let tampered = good.replacen('a', "b", 1);
        if tampered != good {
            assert!(parse_lock_text(p, &tampered).is_err());
        }
    }

    #[test]
    fn manifest_round_trips() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let manifest = compute_manifest(&layout).unwrap();
        let text = manifest.to_text();
        let parsed = parse_manifest_text(Path::new(RELEASE_MANIFEST), &text).unwrap();
        assert_eq!(parsed, manifest);
        assert!(manifest.env_files["alpha"]
            .contains_key(Path::new("alpha/Abstraction_Layer/globals.inc")));
        assert!(manifest
            .global_files
            .contains_key(Path::new("global_lib/crc.asm")));
    }

    #[test]
    fn an_unchanged_tree_checks_clean() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let lock = compute_system_label(&layout).unwrap();
        let manifest = compute_manifest(&layout).unwrap();
        let report = check_frozen(&layout, &lock, Some(&manifest)).unwrap();
        assert!(report.is_clean(), "{}", report.render());
    }

    #[test]
    fn drift_names_the_changed_file_when_a_manifest_exists() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let lock = compute_system_label(&layout).unwrap();
        let manifest = compute_manifest(&layout).unwrap();

        write(
            dir.path(),
            "alpha/Abstraction_Layer/globals.inc",
            "#define WIDTH 6\n",
        );
        let layout = discover(dir.path()).unwrap();
        let report = check_frozen(&layout, &lock, Some(&manifest)).unwrap();
        assert_eq!(
            report.drifts,
            vec![Drift::EnvChanged {
                env: "alpha".to_string(),
                files: vec![FileDrift {
                    path: PathBuf::from("alpha/Abstraction_Layer/globals.inc"),
                    kind: DriftKind::Changed,
                }],
            }]
        );
        assert_eq!(
            report.render(),
            "changed env 'alpha'\n  changed: alpha/Abstraction_Layer/globals.inc\n"
        );

        // Without the manifest the report degrades to the env level.
        let report = check_frozen(&layout, &lock, None).unwrap();
        assert_eq!(
            report.drifts,
            vec![Drift::EnvChanged {
                env: "alpha".to_string(),
                files: Vec::new(),
            }]
        );
    }

    #[test]
    fn added_and_removed_envs_and_global_files_are_reported() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let lock = compute_system_label(&layout).unwrap();
        let manifest = compute_manifest(&layout).unwrap();

        std::fs::remove_dir_all(dir.path().join("beta")).unwrap();
        write(dir.path(), "gamma/test_plan.txt", "plan\n");
        write(
            dir.path(),
            "gamma/Abstraction_Layer/globals.inc",
            "#define W 1\n",
        );
        write(
            dir.path(),
            "global_lib/util.asm",
            "proc global_util\n    ret\nendp\n",
        );

        let layout = discover(dir.path()).unwrap();
        let report = check_frozen(&layout, &lock, Some(&manifest)).unwrap();
        assert!(report.drifts.contains(&Drift::EnvRemoved {
            env: "beta".to_string()
        }));
        assert!(report.drifts.contains(&Drift::EnvAdded {
            env: "gamma".to_string()
        }));
        assert!(report.drifts.iter().any(|d| matches!(
            d,
            Drift::GlobalsChanged { files }
                if files == &[FileDrift {
                    path: PathBuf::from("global_lib/util.asm"),
                    kind: DriftKind::Added,
                }]
        )));
    }
}
