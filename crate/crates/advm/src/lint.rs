//! Layer-discipline checks over a discovered tree.
//!
//! Tests stay portable when everything derivative- or target-specific lives
//! in the abstraction layer. The linter flags the ways tests sidestep it:
//! including global code directly, calling global procedures directly,
//! hard-coding numbers, branching on the selection, and defining values
//! locally. It also reports structural problems and environments named
//! after a derivative.
//!
//! Every diagnostic renders as `path:line:col: RULE: message [evidence]`
//! where the message is fixed per rule and the evidence carries the
//! specifics. Structural diagnostics (whole-environment problems) use line
//! and column 0. A baseline file can mute known findings by fingerprint:
//! rule, path and a hash of the evidence — deliberately not line/column, so
//! unrelated edits do not churn the baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dialect::{self, Directive, LineContent, Opcode, OperandKind, ParseError, SourceUnit};
use crate::env_model::{check_env_name, Layer, SystemLayout};

/// The rule catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    /// ADVM001: a test includes a global-layer file directly.
    DirectGlobalInclude,
    /// ADVM002: a test calls a global-layer procedure directly.
    DirectGlobalCall,
    /// ADVM003: a numeric operand with no define behind it.
    MagicNumber,
    /// ADVM004: a test branches on the derivative/target selection.
    SelectionConditionalInTest,
    /// ADVM005: the tree deviates from the canonical structure.
    StructureViolation,
    /// ADVM006: an environment is named after a derivative.
    DerivativeNamedEnv,
    /// ADVM007: a test defines a value locally.
    TestLayerDefine,
}

/// How bad a finding is. Errors block release labelling; warnings do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::DirectGlobalInclude,
        Rule::DirectGlobalCall,
        Rule::MagicNumber,
        Rule::SelectionConditionalInTest,
        Rule::StructureViolation,
        Rule::DerivativeNamedEnv,
        Rule::TestLayerDefine,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::DirectGlobalInclude => "ADVM001",
            Rule::DirectGlobalCall => "ADVM002",
            Rule::MagicNumber => "ADVM003",
            Rule::SelectionConditionalInTest => "ADVM004",
            Rule::StructureViolation => "ADVM005",
            Rule::DerivativeNamedEnv => "ADVM006",
            Rule::TestLayerDefine => "ADVM007",
        }
    }

    pub fn from_id(id: &str) -> Option<Rule> {
        Rule::ALL.iter().copied().find(|r| r.id() == id)
    }

    pub fn severity(self) -> Severity {
        match self {
            Rule::DirectGlobalInclude
            | Rule::DirectGlobalCall
            | Rule::SelectionConditionalInTest
            | Rule::StructureViolation => Severity::Error,
            Rule::MagicNumber | Rule::DerivativeNamedEnv | Rule::TestLayerDefine => {
                Severity::Warning
            }
        }
    }

    /// The fixed message printed for every finding of this rule.
    pub fn message(self) -> &'static str {
        match self {
            Rule::DirectGlobalInclude => "test includes a global-layer file directly",
            Rule::DirectGlobalCall => "test calls a global-layer procedure directly",
            Rule::MagicNumber => "numeric operand without a define",
            Rule::SelectionConditionalInTest => "derivative or target conditional in a test",
            Rule::StructureViolation => "environment structure violation",
            Rule::DerivativeNamedEnv => "environment name embeds a derivative name",
            Rule::TestLayerDefine => "define in a test file",
        }
    }

    /// A paragraph explaining the rule and the usual fix.
    pub fn explain(self) -> &'static str {
        match self {
            Rule::DirectGlobalInclude => {
                "Tests must reach shared code through their environment's abstraction \
                 layer. Including a global-layer file directly couples the test to code \
                 the verification team does not own; when that code moves or changes \
                 register usage, every such test breaks. Include the file from \
                 base_functions.asm instead and call a wrapper."
            }
            Rule::DirectGlobalCall => {
                "Calling a global-layer procedure from a test hard-wires the global \
                 code's register convention into the test. Wrap the call in a base \
                 function; porting then means adjusting one wrapper instead of every \
                 test."
            }
            Rule::MagicNumber => {
                "A bare number in a test or base function usually encodes a property of \
                 one derivative (a field width, an address, a page count). Name it with \
                 #define in globals.inc so a port only touches the abstraction layer. \
                 The values 0 and 1 and shift distances taken from a define are exempt."
            }
            Rule::SelectionConditionalInTest => {
                "#ifdef DERIV_*/TARGET_* belongs in the abstraction layer. A test that \
                 branches on the selection is no longer one test: it silently verifies \
                 different things per derivative and cannot be reviewed as a unit."
            }
            Rule::StructureViolation => {
                "Environments follow one shape: test_plan.txt, Abstraction_Layer/ with \
                 globals.inc, and uniformly shaped test cells. Tooling (release \
                 labelling, regression) relies on that shape; deviations are reported \
                 here rather than silently skipped."
            }
            Rule::DerivativeNamedEnv => {
                "An environment named after a derivative invites derivative-specific \
                 tests. Environments verify a module across all derivatives; the \
                 selection, not the directory name, decides what they run against."
            }
            Rule::TestLayerDefine => {
                "Defines in test files fragment the abstraction layer: the same \
                 quantity ends up defined in several places with drifting values. \
                 Move the define to globals.inc (duplicate defines are refused, so \
                 collisions surface immediately)."
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub rule: Rule,
    /// Root-relative file, or the environment directory for structural
    /// findings.
    pub path: PathBuf,
    /// 0 for structural findings.
    pub line: u32,
    /// 0 for structural findings.
    pub col: u32,
    /// The variable part: which name, which value, which file.
    pub evidence: String,
}

impl Diagnostic {
    pub fn severity(&self) -> Severity {
        self.rule.severity()
    }

    /// `rule path hash` — the baseline identity of this finding.
    pub fn fingerprint(&self) -> String {
        format!(
            "{} {} {}",
            self.rule.id(),
            self.path.display(),
            evidence_hash(&self.evidence)
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}: {} [{}]",
            self.path.display(),
            self.line,
            self.col,
            self.rule.id(),
            self.rule.message(),
            self.evidence
        )
    }
}

/// First 16 hex digits of the evidence's SHA-256.
fn evidence_hash(evidence: &str) -> String {
    let digest = Sha256::digest(evidence.as_bytes());
    hex::encode(&digest[..8])
}

/// The outcome of a lint run, sorted by path, line, column, rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LintReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl LintReport {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.severity() == Severity::Error)
    }

    pub fn error_count(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.severity() == Severity::Error)
            .count()
    }

    pub fn warning_count(&self) -> usize {
        self.diagnostics.len() - self.error_count()
    }

    /// One line per diagnostic.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for diag in &self.diagnostics {
            out.push_str(&diag.to_string());
            out.push('\n');
        }
        out
    }

    /// Drop findings the baseline already acknowledges.
    pub fn without_baselined(&self, baseline: &Baseline) -> LintReport {
        LintReport {
            diagnostics: self
                .diagnostics
                .iter()
                .filter(|d| !baseline.contains(d))
                .cloned()
                .collect(),
        }
    }
}

/// Lint failed to run at all (the tree itself not being clean is a report,
/// not an error).
#[derive(Debug, thiserror::Error)]
pub enum LintError {
    #[error("cannot read {path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Parse(Vec<ParseError>),
}

/// Known-findings file: one `rule path hash` triple per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Baseline {
    entries: BTreeSet<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("baseline line {line}: expected 'rule path hash', got '{text}'")]
pub struct MalformedBaseline {
    pub line: u32,
    pub text: String,
}

impl Baseline {
    pub fn parse(text: &str) -> Result<Baseline, MalformedBaseline> {
        let mut entries = BTreeSet::new();
        for (index, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 || Rule::from_id(fields[0]).is_none() {
                return Err(MalformedBaseline {
                    line: index as u32 + 1,
                    text: line.to_string(),
                });
            }
            entries.insert(fields.join(" "));
        }
        Ok(Baseline { entries })
    }

    pub fn from_diagnostics<'d>(diags: impl IntoIterator<Item = &'d Diagnostic>) -> Baseline {
        Baseline {
            entries: diags.into_iter().map(Diagnostic::fingerprint).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(entry);
            out.push('\n');
        }
        out
    }

    pub fn contains(&self, diag: &Diagnostic) -> bool {
        self.entries.contains(&diag.fingerprint())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Resolve `include` lexically against the directory of `from` (both
/// root-relative). Returns None when the path escapes the root.
fn normalize_include(from: &Path, include: &str) -> Option<PathBuf> {
    let mut stack: Vec<OsString> = from
        .parent()
        .map(|dir| {
            dir.components()
                .filter_map(|c| match c {
                    Component::Normal(n) => Some(n.to_os_string()),
                    _ => None,
                })
                .collect()
        })
        .unwrap_or_default();
    for component in Path::new(include).components() {
        match component {
            Component::Normal(name) => stack.push(name.to_os_string()),
            Component::ParentDir => {
                stack.pop()?;
            }
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(stack.iter().collect())
}

/// Procedure definitions relevant to the call rule.
struct ProcIndex {
    /// Global-layer procedure name to defining file.
    global: BTreeMap<String, PathBuf>,
    /// Environment name to the procedure names its abstraction layer defines.
    per_env: BTreeMap<String, BTreeSet<String>>,
}

fn env_of(rel: &Path) -> Option<String> {
    match rel.components().next()? {
        Component::Normal(name) => Some(name.to_string_lossy().to_string()),
        _ => None,
    }
}

/// Run every rule over a discovered tree. Reads and parses each classified
/// source file; an unparseable file aborts the run.
pub fn lint(layout: &SystemLayout) -> Result<LintReport, LintError> {
    let mut units: Vec<(PathBuf, Layer, SourceUnit)> = Vec::new();
    for (rel, layer) in &layout.classification {
        let abs = layout.root.join(rel);
        let source = std::fs::read_to_string(&abs).map_err(|source| LintError::Io {
            path: rel.clone(),
            source,
        })?;
        let unit = dialect::parse_unit(rel, &source).map_err(LintError::Parse)?;
        units.push((rel.clone(), *layer, unit));
    }

    let mut procs = ProcIndex {
        global: BTreeMap::new(),
        per_env: BTreeMap::new(),
    };
    for (rel, layer, unit) in &units {
        match layer {
            Layer::GlobalLayer => {
                for decl in unit.procedures() {
                    procs
                        .global
                        .entry(decl.name.to_string())
                        .or_insert_with(|| rel.clone());
                }
            }
            Layer::AbstractionLayer => {
                if let Some(env) = env_of(rel) {
                    let names = procs.per_env.entry(env).or_default();
                    for decl in unit.procedures() {
                        names.insert(decl.name.to_string());
                    }
                }
            }
            Layer::TestLayer => {}
        }
    }

    let mut diagnostics = Vec::new();

    for finding in &layout.findings {
        diagnostics.push(Diagnostic {
            rule: Rule::StructureViolation,
            path: finding.path(),
            line: 0,
            col: 0,
            evidence: finding.describe(),
        });
    }

    for env in &layout.envs {
        if let Some(derivative) = check_env_name(&env.name, &layout.config.derivatives) {
            diagnostics.push(Diagnostic {
                rule: Rule::DerivativeNamedEnv,
                path: env.dir.clone(),
                line: 0,
                col: 0,
                evidence: format!("'{}' embeds '{}'", env.name, derivative),
            });
        }
    }

    for (rel, layer, unit) in &units {
        lint_unit(rel, *layer, unit, layout, &procs, &mut diagnostics);
    }

    diagnostics.sort_by(|a, b| {
        (a.path.as_path(), a.line, a.col, a.rule).cmp(&(b.path.as_path(), b.line, b.col, b.rule))
    });
    Ok(LintReport { diagnostics })
}

fn lint_unit(
    rel: &Path,
    layer: Layer,
    unit: &SourceUnit,
    layout: &SystemLayout,
    procs: &ProcIndex,
    diagnostics: &mut Vec<Diagnostic>,
) {
    if layer == Layer::GlobalLayer {
        // Global code is imported as-is; its style is not ours to police.
        return;
    }
    let env = env_of(rel);
    for line in &unit.lines {
        match &line.content {
            LineContent::Directive(directive) => {
                if layer == Layer::TestLayer {
                    lint_test_directive(rel, line.number, directive, layout, diagnostics);
                }
            }
            LineContent::Instr(instr) => {
                if layer == Layer::TestLayer {
                    lint_call_target(rel, line.number, instr, env.as_deref(), procs, diagnostics);
                }
                lint_magic_numbers(rel, line.number, instr, diagnostics);
            }
            _ => {}
        }
    }
}

fn lint_test_directive(
    rel: &Path,
    line: u32,
    directive: &Directive,
    layout: &SystemLayout,
    diagnostics: &mut Vec<Diagnostic>,
) {
    match directive {
        Directive::Define { name, name_col, .. } => {
            diagnostics.push(Diagnostic {
                rule: Rule::TestLayerDefine,
                path: rel.to_path_buf(),
                line,
                col: *name_col,
                evidence: name.clone(),
            });
        }
        Directive::Include { path, path_col } => {
            let Some(target) = normalize_include(rel, path) else {
                return;
            };
            if layout.classification.get(&target) == Some(&Layer::GlobalLayer) {
                diagnostics.push(Diagnostic {
                    rule: Rule::DirectGlobalInclude,
                    path: rel.to_path_buf(),
                    line,
                    col: *path_col,
                    evidence: target.display().to_string(),
                });
            }
        }
        Directive::Ifdef { name, name_col } | Directive::Ifndef { name, name_col } => {
            if is_selection_define(name) {
                diagnostics.push(Diagnostic {
                    rule: Rule::SelectionConditionalInTest,
                    path: rel.to_path_buf(),
                    line,
                    col: *name_col,
                    evidence: name.clone(),
                });
            }
        }
        Directive::If { guard, guard_col } => {
            let mut names = Vec::new();
            guard.collect_defines(&mut names);
            if let Some(name) = names.iter().find(|n| is_selection_define(n)) {
                diagnostics.push(Diagnostic {
                    rule: Rule::SelectionConditionalInTest,
                    path: rel.to_path_buf(),
                    line,
                    col: *guard_col,
                    evidence: name.clone(),
                });
            }
        }
        Directive::Else | Directive::Endif => {}
    }
}

fn is_selection_define(name: &str) -> bool {
    name.starts_with("DERIV_") || name.starts_with("TARGET_")
}

fn lint_call_target(
    rel: &Path,
    line: u32,
    instr: &dialect::Instruction,
    env: Option<&str>,
    procs: &ProcIndex,
    diagnostics: &mut Vec<Diagnostic>,
) {
    if instr.opcode != Opcode::Call {
        return;
    }
    let Some(operand) = instr.operands.first() else {
        return;
    };
    let OperandKind::Name(name) = &operand.kind else {
        return;
    };
    // A wrapper in the environment's own abstraction layer shadows the
    // global name; calling the wrapper is exactly what we want.
    let shadowed = env
        .and_then(|e| procs.per_env.get(e))
        .is_some_and(|names| names.contains(name));
    if shadowed {
        return;
    }
    if let Some(defined_in) = procs.global.get(name) {
        diagnostics.push(Diagnostic {
            rule: Rule::DirectGlobalCall,
            path: rel.to_path_buf(),
            line,
            col: operand.col,
            evidence: format!("{} (defined at {})", name, defined_in.display()),
        });
    }
}

fn lint_magic_numbers(
    rel: &Path,
    line: u32,
    instr: &dialect::Instruction,
    diagnostics: &mut Vec<Diagnostic>,
) {
    let shift = matches!(instr.opcode, Opcode::Shl | Opcode::Shr);
    for (index, operand) in instr.operands.iter().enumerate() {
        // Shift distances are structural (bit positions), not device data;
        // requiring defines for them would punish the idiom `shl d1, 1`.
        if shift && index == 1 {
            continue;
        }
        let expr = match &operand.kind {
            OperandKind::Imm(expr) | OperandKind::Mem(expr) => expr,
            _ => continue,
        };
        if expr.references_define() {
            continue;
        }
        // No defines involved, so this cannot fail.
        let value = crate::dialect::eval_expr(expr, &BTreeMap::new())
            .expect("define-free expression evaluates");
        if value <= 1 {
            continue;
        }
        diagnostics.push(Diagnostic {
            rule: Rule::MagicNumber,
            path: rel.to_path_buf(),
            line,
            col: operand.col,
            evidence: expr.to_string(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::discover;

    fn write(root: &Path, rel: &str, content: &str) {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, content).unwrap();
    }

    fn base_tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write(
            root,
            "advm.cfg",
            "[system]\nglobal_dirs = global_lib\n[derivatives]\nnames = A, SLE88B\n",
        );
        write(
            root,
            "global_lib/util.asm",
            "proc global_util\n    ret\nendp\n",
        );
        write(root, "pages/test_plan.txt", "plan\n");
        write(
            root,
            "pages/Abstraction_Layer/globals.inc",
            "#define PAGE_SIZE 5\n#define CTRL_ADDR 0xF0001000\n",
        );
        write(
            root,
            "pages/Abstraction_Layer/base_functions.asm",
            "#include \"../../global_lib/util.asm\"\n\
             proc wrapped_util\n\
             \x20   call global_util\n\
             \x20   ret\n\
             endp\n",
        );
        dir
    }

    fn lint_tree(dir: &tempfile::TempDir) -> LintReport {
        let layout = discover(dir.path()).unwrap();
        lint(&layout).unwrap()
    }

    fn rules_of(report: &LintReport) -> Vec<Rule> {
        report.diagnostics.iter().map(|d| d.rule).collect()
    }

    #[test]
    fn a_disciplined_test_lints_clean() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_ok/src/test.asm",
            "#include \"../../Abstraction_Layer/globals.inc\"\n\
             #include \"../../Abstraction_Layer/base_functions.asm\"\n\
             start:\n\
             \x20   mov d1, PAGE_SIZE\n\
             \x20   call wrapped_util\n\
             \x20   shl d1, 1\n\
             \x20   expect d1, PAGE_SIZE << 1\n\
             \x20   pass\n",
        );
        let report = lint_tree(&dir);
        assert!(report.diagnostics.is_empty(), "{}", report.render());
    }

    #[test]
    fn direct_global_include_fires_with_the_resolved_target() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "#include \"../../../global_lib/util.asm\"\n    pass\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(rules_of(&report), vec![Rule::DirectGlobalInclude]);
        let diag = &report.diagnostics[0];
        assert_eq!(diag.line, 1);
        assert_eq!(diag.col, 10);
        assert_eq!(diag.evidence, "global_lib/util.asm");
        assert_eq!(diag.severity(), Severity::Error);
    }

    #[test]
    fn abstraction_layer_may_include_global_files() {
        let dir = base_tree();
        // base_functions.asm in base_tree already includes the global file.
        let report = lint_tree(&dir);
        assert!(report.diagnostics.is_empty(), "{}", report.render());
    }

    #[test]
    fn direct_global_call_fires_unless_shadowed_by_a_wrapper() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "    call global_util\n    call wrapped_util\n    pass\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(rules_of(&report), vec![Rule::DirectGlobalCall]);
        let diag = &report.diagnostics[0];
        assert_eq!((diag.line, diag.col), (1, 10));
        assert_eq!(
            diag.evidence,
            "global_util (defined at global_lib/util.asm)"
        );
    }

    #[test]
    fn magic_numbers_fire_in_test_and_abstraction_layers() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/Abstraction_Layer/extra.inc",
            "proc poke\n    st [0xF0001000], d1\n    ret\nendp\n",
        );
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "    mov d0, 2\n    pass\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(
            rules_of(&report),
            vec![Rule::MagicNumber, Rule::MagicNumber]
        );
        // Sorted by path: the abstraction file precedes the test cell.
        assert_eq!(report.diagnostics[0].evidence, "0xF0001000");
        assert_eq!(report.diagnostics[1].evidence, "2");
    }

    #[test]
    fn magic_number_exemptions_hold() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_ok/src/test.asm",
            "    mov d0, 0\n\
             \x20   mov d1, 1\n\
             \x20   shl d1, 4\n\
             \x20   mov d2, PAGE_SIZE << 2\n\
             \x20   pass\n",
        );
        let report = lint_tree(&dir);
        assert!(report.diagnostics.is_empty(), "{}", report.render());
    }

    #[test]
    fn selection_conditionals_fire_only_in_tests() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/Abstraction_Layer/derived.inc",
            "#ifdef DERIV_A\n#define WIDTH 5\n#endif\n",
        );
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "#ifdef DERIV_A\n    pass\n#endif\n#if TARGET_GRM == 1\n    pass\n#endif\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(
            rules_of(&report),
            vec![
                Rule::SelectionConditionalInTest,
                Rule::SelectionConditionalInTest
            ]
        );
        assert_eq!(report.diagnostics[0].evidence, "DERIV_A");
        assert_eq!(report.diagnostics[0].col, 8);
        assert_eq!(report.diagnostics[1].evidence, "TARGET_GRM");
    }

    #[test]
    fn test_layer_defines_fire() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "#define LOCAL_TWEAK 1\n    pass\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(rules_of(&report), vec![Rule::TestLayerDefine]);
        assert_eq!(report.diagnostics[0].col, 9);
        assert_eq!(report.diagnostics[0].evidence, "LOCAL_TWEAK");
    }

    #[test]
    fn structural_findings_render_at_zero_zero() {
        let dir = base_tree();
        write(dir.path(), "broken/Abstraction_Layer/globals.inc", "\n");
        let report = lint_tree(&dir);
        assert_eq!(rules_of(&report), vec![Rule::StructureViolation]);
        let diag = &report.diagnostics[0];
        assert_eq!((diag.line, diag.col), (0, 0));
        assert_eq!(
            diag.to_string(),
            "broken:0:0: ADVM005: environment structure violation \
             [environment has no test_plan.txt]"
        );
    }

    #[test]
    fn derivative_named_envs_are_flagged() {
        let dir = base_tree();
        write(dir.path(), "timer_sle88b/test_plan.txt", "plan\n");
        write(
            dir.path(),
            "timer_sle88b/Abstraction_Layer/globals.inc",
            "#define T 1\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(rules_of(&report), vec![Rule::DerivativeNamedEnv]);
        assert_eq!(
            report.diagnostics[0].evidence,
            "'timer_sle88b' embeds 'SLE88B'"
        );
    }

    #[test]
    fn diagnostics_sort_by_path_line_col_rule() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "#define X 2\n    mov d0, 2\n    mov d1, 3\n    pass\n",
        );
        let report = lint_tree(&dir);
        let coords: Vec<(u32, u32)> = report.diagnostics.iter().map(|d| (d.line, d.col)).collect();
        let mut sorted = coords.clone();
        sorted.sort();
        assert_eq!(coords, sorted);
    }

    #[test]
    fn baseline_roundtrip_filters_known_findings() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "    mov d0, 2\n    call global_util\n    pass\n",
        );
        let report = lint_tree(&dir);
        assert_eq!(report.diagnostics.len(), 2);

        let baseline = Baseline::from_diagnostics(&report.diagnostics);
        let text = baseline.to_text();
        let reparsed = Baseline::parse(&text).unwrap();
        assert_eq!(baseline, reparsed);
        assert!(report.without_baselined(&reparsed).diagnostics.is_empty());

        // A new finding is not muted by the old baseline.
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "    mov d0, 2\n    call global_util\n    mov d5, 9\n    pass\n",
        );
        let report = lint_tree(&dir);
        let fresh = report.without_baselined(&reparsed);
        assert_eq!(fresh.diagnostics.len(), 1);
        assert_eq!(fresh.diagnostics[0].evidence, "9");
    }

    #[test]
    fn baseline_survives_line_shifts() {
        let dir = base_tree();
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "    mov d0, 2\n    pass\n",
        );
        let baseline = Baseline::from_diagnostics(&lint_tree(&dir).diagnostics);
        // Same finding, three lines lower.
        write(
            dir.path(),
            "pages/test_bad/src/test.asm",
            "\n\n\n    mov d0, 2\n    pass\n",
        );
        let report = lint_tree(&dir);
        assert!(report.without_baselined(&baseline).diagnostics.is_empty());
    }

    #[test]
    fn malformed_baselines_are_refused() {
        assert!(Baseline::parse("ADVM003 pages/test.asm abcdef0123456789\n").is_ok());
        let err = Baseline::parse("ADVM003 pages/test.asm\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(Baseline::parse("BOGUS9 pages/test.asm abcdef0123456789\n").is_err());
        // Comments and blanks are fine.
        assert!(Baseline::parse("# known\n\nADVM003 a.asm 0011223344556677\n").is_ok());
    }

    #[test]
    fn rule_ids_round_trip() {
        for rule in Rule::ALL {
            assert_eq!(Rule::from_id(rule.id()), Some(rule));
        }
        assert_eq!(Rule::from_id("ADVM999"), None);
    }
}
