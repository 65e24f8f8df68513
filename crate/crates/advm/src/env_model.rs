//! The on-disk shape of a verification tree.
//!
//! A system root holds an `advm.cfg`, zero or more global-layer directories
//! (shared code the verification team does not own), and one directory per
//! test environment. Every environment carries a `test_plan.txt`, an
//! `Abstraction_Layer/` directory (at least `globals.inc`, usually also
//! `base_functions.asm`) and one directory per test cell; all cells of an
//! environment share an identical directory shape.
//!
//! Discovery classifies every dialect source file into exactly one of three
//! layers. Structural problems (missing plan, missing abstraction layer,
//! inconsistent cells, files belonging to no layer) are collected as
//! findings rather than aborting, so the linter can report them alongside
//! everything else; only I/O and config-syntax problems are hard errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};

use walkdir::WalkDir;

use crate::config::{self, AdvmConfig, ConfigError};

/// Fixed name of the abstraction-layer directory inside an environment.
pub const ABSTRACTION_DIR: &str = "Abstraction_Layer";
/// Fixed name of the per-environment test plan.
pub const TEST_PLAN: &str = "test_plan.txt";
/// Fixed name of the global-defines file.
pub const GLOBALS_INC: &str = "globals.inc";
/// Conventional name of the base-functions file.
pub const BASE_FUNCTIONS: &str = "base_functions.asm";

/// Which layer a source file belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Layer {
    /// Directed tests inside test cells. Owned by test writers.
    TestLayer,
    /// Global defines and base functions. The only layer that may know
    /// derivative or target specifics.
    AbstractionLayer,
    /// Shared code owned outside verification (imported wholesale).
    GlobalLayer,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::TestLayer => "test",
            Layer::AbstractionLayer => "abstraction",
            Layer::GlobalLayer => "global",
        })
    }
}

/// One test cell: a directory holding directed-test sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCell {
    pub name: String,
    /// Root-relative cell directory.
    pub dir: PathBuf,
    /// Root-relative dialect sources inside the cell, sorted.
    pub sources: Vec<PathBuf>,
}

/// One test environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvLayout {
    pub name: String,
    /// Root-relative environment directory.
    pub dir: PathBuf,
    /// `test_plan.txt`, when present.
    pub test_plan: Option<PathBuf>,
    /// `Abstraction_Layer/`, when present.
    pub abstraction_dir: Option<PathBuf>,
    /// `Abstraction_Layer/globals.inc`, when present.
    pub globals_inc: Option<PathBuf>,
    /// `Abstraction_Layer/base_functions.asm`, when present.
    pub base_functions: Option<PathBuf>,
    /// Test cells, sorted by name.
    pub cells: Vec<TestCell>,
}

/// A structural nonconformance found during discovery. These become lint
/// diagnostics (rule ADVM005) and are data, not hard errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructuralFinding {
    /// Environment has no `test_plan.txt`.
    MissingTestPlan { env: String },
    /// Environment has no usable abstraction layer.
    MissingAbstractionLayer { env: String, detail: String },
    /// Test cells of one environment have differing directory shapes.
    InconsistentTestCells { env: String, detail: String },
    /// A dialect source that belongs to no layer.
    UnclassifiableFile { path: PathBuf },
}

impl StructuralFinding {
    /// The path a diagnostic should point at (env dir or file).
    pub fn path(&self) -> PathBuf {
        match self {
            StructuralFinding::MissingTestPlan { env }
            | StructuralFinding::MissingAbstractionLayer { env, .. }
            | StructuralFinding::InconsistentTestCells { env, .. } => PathBuf::from(env),
            StructuralFinding::UnclassifiableFile { path } => path.clone(),
        }
    }

    /// Human description used in diagnostics.
    pub fn describe(&self) -> String {
        match self {
            StructuralFinding::MissingTestPlan { .. } => {
                format!("environment has no {TEST_PLAN}")
            }
            StructuralFinding::MissingAbstractionLayer { detail, .. } => detail.clone(),
            StructuralFinding::InconsistentTestCells { detail, .. } => detail.clone(),
            StructuralFinding::UnclassifiableFile { .. } => {
                "source file belongs to no layer (not in a global dir, abstraction layer or test cell)"
                    .to_string()
            }
        }
    }
}

/// The discovered system: environments, global dirs and the file
/// classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemLayout {
    /// The root passed to [`discover`].
    pub root: PathBuf,
    pub config: AdvmConfig,
    /// Environments, sorted by name.
    pub envs: Vec<EnvLayout>,
    /// Every dialect source file (root-relative) with its layer.
    pub classification: BTreeMap<PathBuf, Layer>,
    /// Structural nonconformances, in discovery order.
    pub findings: Vec<StructuralFinding>,
}

/// Discovery failed outright (structure problems are findings instead).
#[derive(Debug, thiserror::Error)]
pub enum DiscoverError {
    #[error("cannot read {path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configured global dir {dir} does not exist", dir = .0.display())]
    MissingGlobalDir(PathBuf),
}

/// A path that no layer claims.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("path {path} is not part of the discovered layout", path = .0.display())]
pub struct UnknownPath(pub PathBuf);

/// Is this a dialect source file?
fn is_source(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("asm") | Some("inc")
    )
}

fn sorted_child_dirs(dir: &Path) -> Result<Vec<PathBuf>, DiscoverError> {
    let mut dirs = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|source| DiscoverError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| DiscoverError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if path.is_dir() && !name.starts_with('.') {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Relative subdirectory paths under `dir`, recursively — the "shape" used
/// for the cell-consistency check.
fn dir_shape(dir: &Path) -> BTreeSet<PathBuf> {
    WalkDir::new(dir)
        .min_depth(1)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_dir())
        .filter_map(|e| e.path().strip_prefix(dir).ok().map(Path::to_path_buf))
        .collect()
}

/// All dialect sources under `dir`, root-relative, sorted.
fn sources_under(root: &Path, dir: &Path) -> Vec<PathBuf> {
    let mut sources: Vec<PathBuf> = WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && is_source(e.path()))
        .filter_map(|e| e.path().strip_prefix(root).ok().map(Path::to_path_buf))
        .collect();
    sources.sort();
    sources
}

/// Walk a system root and build its layout.
///
/// Every directory directly under the root that holds dialect sources (or
/// env markers) is treated as an environment unless `advm.cfg` lists it as a
/// global dir. Running discovery twice on an unchanged tree yields the same
/// layout.
pub fn discover(root: &Path) -> Result<SystemLayout, DiscoverError> {
    let config = config::load_advm_cfg(root)?;
    let mut layout = SystemLayout {
        root: root.to_path_buf(),
        config: config.clone(),
        envs: Vec::new(),
        classification: BTreeMap::new(),
        findings: Vec::new(),
    };

    // Global dirs first: they are configured truth and must exist.
    for dir in &config.global_dirs {
        let abs = root.join(dir);
        if !abs.is_dir() {
            return Err(DiscoverError::MissingGlobalDir(dir.clone()));
        }
        for source in sources_under(root, &abs) {
            layout.classification.insert(source, Layer::GlobalLayer);
        }
    }

    let global_first_components: BTreeSet<&std::ffi::OsStr> = config
        .global_dirs
        .iter()
        .filter_map(|d| d.components().next())
        .filter_map(|c| match c {
            Component::Normal(name) => Some(name),
            _ => None,
        })
        .collect();

    for child in sorted_child_dirs(root)? {
        let name_os = child.file_name().unwrap_or_default();
        if global_first_components.contains(name_os) {
            continue;
        }
        let name = name_os.to_string_lossy().to_string();
        let has_plan = child.join(TEST_PLAN).is_file();
        let abstraction = child.join(ABSTRACTION_DIR);
        let has_sources = !sources_under(root, &child).is_empty();
        if !has_plan && !abstraction.is_dir() && !has_sources {
            // Not an environment — e.g. a docs directory. Ignore it.
            continue;
        }

        let rel_dir = PathBuf::from(&name);
        let mut env = EnvLayout {
            name: name.clone(),
            dir: rel_dir.clone(),
            test_plan: None,
            abstraction_dir: None,
            globals_inc: None,
            base_functions: None,
            cells: Vec::new(),
        };

        if has_plan {
            env.test_plan = Some(rel_dir.join(TEST_PLAN));
        } else {
            layout
                .findings
                .push(StructuralFinding::MissingTestPlan { env: name.clone() });
        }

        if abstraction.is_dir() {
            env.abstraction_dir = Some(rel_dir.join(ABSTRACTION_DIR));
            let globals = abstraction.join(GLOBALS_INC);
            if globals.is_file() {
                env.globals_inc = Some(rel_dir.join(ABSTRACTION_DIR).join(GLOBALS_INC));
            } else {
                layout
                    .findings
                    .push(StructuralFinding::MissingAbstractionLayer {
                        env: name.clone(),
                        detail: format!("{ABSTRACTION_DIR} has no {GLOBALS_INC}"),
                    });
            }
            let base = abstraction.join(BASE_FUNCTIONS);
            if base.is_file() {
                env.base_functions = Some(rel_dir.join(ABSTRACTION_DIR).join(BASE_FUNCTIONS));
            }
            for source in sources_under(root, &abstraction) {
                layout
                    .classification
                    .insert(source, Layer::AbstractionLayer);
            }
        } else {
            layout
                .findings
                .push(StructuralFinding::MissingAbstractionLayer {
                    env: name.clone(),
                    detail: format!("environment has no {ABSTRACTION_DIR} directory"),
                });
        }

        // Test cells: every other child directory.
        let mut reference_shape: Option<(String, BTreeSet<PathBuf>)> = None;
        for cell_dir in sorted_child_dirs(&child)? {
            let cell_name = cell_dir
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .to_string();
            if cell_name == ABSTRACTION_DIR {
                continue;
            }
            let shape = dir_shape(&cell_dir);
            match &reference_shape {
                None => reference_shape = Some((cell_name.clone(), shape)),
                Some((first_name, first_shape)) => {
                    if &shape != first_shape {
                        layout
                            .findings
                            .push(StructuralFinding::InconsistentTestCells {
                                env: name.clone(),
                                detail: format!(
                                    "cell '{cell_name}' directory shape differs from cell '{first_name}'"
                                ),
                            });
                    }
                }
            }
            let sources = sources_under(root, &cell_dir);
            for source in &sources {
                layout
                    .classification
                    .insert(source.clone(), Layer::TestLayer);
            }
            env.cells.push(TestCell {
                name: cell_name,
                dir: rel_dir.join(cell_dir.file_name().unwrap_or_default()),
                sources,
            });
        }

        layout.envs.push(env);
    }
    layout.envs.sort_by(|a, b| a.name.cmp(&b.name));

    // Anything with a dialect extension that no layer claimed.
    for entry in WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            // Skip hidden entries, but never the root itself (its directory
            // name is none of our business).
            e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.')
        })
        .filter_map(Result::ok)
    {
        if !entry.file_type().is_file() || !is_source(entry.path()) {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        if !layout.classification.contains_key(rel) {
            layout.findings.push(StructuralFinding::UnclassifiableFile {
                path: rel.to_path_buf(),
            });
        }
    }

    Ok(layout)
}

impl SystemLayout {
    /// Look up an environment by name.
    pub fn env(&self, name: &str) -> Option<&EnvLayout> {
        self.envs.iter().find(|e| e.name == name)
    }

    /// Which layer does `path` belong to? Accepts root-relative paths or
    /// absolute paths under the root.
    pub fn layer_of(&self, path: &Path) -> Result<Layer, UnknownPath> {
        let rel = if path.is_absolute() {
            path.strip_prefix(&self.root)
                .map_err(|_| UnknownPath(path.to_path_buf()))?
        } else {
            path
        };
        self.classification
            .get(rel)
            .copied()
            .ok_or_else(|| UnknownPath(path.to_path_buf()))
    }
}

/// Split an environment name into comparison tokens: underscores and
/// lower-to-upper case boundaries separate tokens; tokens compare
/// case-insensitively. `"page_ctrl_SLE88B"` → `page`, `ctrl`, `sle88b`.
pub fn name_tokens(name: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in name.chars() {
        if c == '_' {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current).to_lowercase());
            }
            prev_lower = false;
            continue;
        }
        if prev_lower && c.is_ascii_uppercase() && !current.is_empty() {
            tokens.push(std::mem::take(&mut current).to_lowercase());
        }
        prev_lower = c.is_ascii_lowercase();
        current.push(c);
    }
    if !current.is_empty() {
        tokens.push(current.to_lowercase());
    }
    tokens
}

/// Does the environment name embed a registered derivative name?
///
/// The match is token-based, not substring-based: an env called `stable`
/// does not trip over a derivative called `LE8`. Returns the first matching
/// derivative.
pub fn check_env_name(env_name: &str, derivatives: &[String]) -> Option<String> {
    let tokens = name_tokens(env_name);
    for derivative in derivatives {
        let lowered = derivative.to_lowercase();
        if tokens.contains(&lowered) {
            return Some(derivative.clone());
        }
    }
    None
}

/// Best-effort layer for paths outside any discovered layout (used when a
/// single file is resolved without a system root): anything under an
/// `Abstraction_Layer` directory counts as abstraction layer, everything
/// else as test layer.
pub fn heuristic_layer(path: &Path) -> Layer {
    let in_abstraction = path
        .components()
        .any(|c| matches!(c, Component::Normal(name) if name == ABSTRACTION_DIR));
    if in_abstraction {
        Layer::AbstractionLayer
    } else {
        Layer::TestLayer
    }
}
