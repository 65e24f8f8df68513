//! Expansion of dialect sources into a flat, runnable program.
//!
//! Resolution starts from one entry file (a directed test), follows
//! `#include` directives depth-first, applies conditional compilation
//! against a define table seeded from the derivative/target selection, and
//! links calls and jumps. The result is a flat instruction sequence: the
//! instructions written outside any `proc` form the test body at the front
//! (execution starts at index 0), procedure bodies are appended after it in
//! declaration order.
//!
//! Two rules keep porting deterministic:
//!
//! * **Conditionals evaluate at point of use.** An `#ifdef` sees exactly the
//!   defines made before it (in include order), so moving a define changes
//!   meaning — and duplicate defines are hard errors rather than silent
//!   overrides.
//! * **Instruction operands evaluate against the final table.** Operand
//!   expressions are linked in a second pass once every include has been
//!   read, so a test may name a define that its abstraction layer provides
//!   later in the walk.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::dialect::{
    eval_expr, DefineLookup, Directive, EvalError, Expr, Instruction, Line, LineContent, Opcode,
    OperandKind, ParseError, Reg, SourceUnit,
};
use crate::env_model::{heuristic_layer, Layer, SystemLayout};

/// A source coordinate, printed as `path:line` with `/` separators.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Site {
    /// Root-relative path.
    pub path: PathBuf,
    pub line: u32,
}

impl Site {
    pub fn new(path: impl Into<PathBuf>, line: u32) -> Self {
        Site {
            path: path.into(),
            line,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.path.display(), self.line)
    }
}

/// Where a define came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    /// Seeded from the derivative/target selection.
    Selection,
    /// Written in a source file.
    Source { site: Site, layer: Layer },
}

impl Provenance {
    pub fn describe(&self) -> String {
        match self {
            Provenance::Selection => "selection".to_string(),
            Provenance::Source { site, .. } => site.to_string(),
        }
    }

    /// Layer of the defining file, if the define came from one.
    pub fn layer(&self) -> Option<Layer> {
        match self {
            Provenance::Selection => None,
            Provenance::Source { layer, .. } => Some(*layer),
        }
    }
}

/// One resolved define.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefineEntry {
    pub value: u32,
    pub provenance: Provenance,
}

/// The ordered define table. Order is definition order; redefinition is an
/// error, never an override.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefineTable {
    entries: IndexMap<String, DefineEntry>,
}

impl DefineTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a define; a second definition of the same name is refused.
    pub fn define(
        &mut self,
        name: &str,
        value: u32,
        provenance: Provenance,
    ) -> Result<(), PreprocessError> {
        if let Some(existing) = self.entries.get(name) {
            return Err(PreprocessError::DuplicateDefine {
                name: name.to_string(),
                first: existing.provenance.describe(),
                second: provenance.describe(),
            });
        }
        self.entries
            .insert(name.to_string(), DefineEntry { value, provenance });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&DefineEntry> {
        self.entries.get(name)
    }

    /// Entries in definition order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &DefineEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl DefineLookup for DefineTable {
    fn lookup(&self, name: &str) -> Option<u32> {
        self.entries.get(name).map(|e| e.value)
    }
}

/// The derivative/target pair a resolution runs under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub derivative: String,
    pub target: String,
    /// Extra seed defines (e.g. from a target config).
    pub extra_defines: Vec<(String, u32)>,
}

impl Selection {
    pub fn new(derivative: impl Into<String>, target: impl Into<String>) -> Self {
        Selection {
            derivative: derivative.into(),
            target: target.into(),
            extra_defines: Vec::new(),
        }
    }

    pub fn with_defines(mut self, defines: Vec<(String, u32)>) -> Self {
        self.extra_defines = defines;
        self
    }

    /// Seed a define table: `DERIV_<derivative>` and `TARGET_<target>` are
    /// defined to 1, then any extra defines.
    pub fn seed(&self, table: &mut DefineTable) -> Result<(), PreprocessError> {
        table.define(
            &format!("DERIV_{}", self.derivative),
            1,
            Provenance::Selection,
        )?;
        table.define(&format!("TARGET_{}", self.target), 1, Provenance::Selection)?;
        for (name, value) in &self.extra_defines {
            table.define(name, *value, Provenance::Selection)?;
        }
        Ok(())
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.derivative, self.target)
    }
}

/// Resolution failed. Structural messages are prefixed `path:line:` so they
/// read like compiler output.
#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Parse(Vec<ParseError>),
    #[error("cannot read {path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate define '{name}' at {second} (first defined at {first})")]
    DuplicateDefine {
        name: String,
        first: String,
        second: String,
    },
    #[error("{site}: undefined define '{name}'")]
    UndefinedSymbol { name: String, site: Site },
    #[error("{site}: cannot find include \"{include}\"")]
    IncludeNotFound { include: String, site: Site },
    #[error("{site}: include cycle: {}", .chain.join(" -> "))]
    IncludeCycle { chain: Vec<String>, site: Site },
    #[error("{site}: {detail}")]
    UnbalancedConditional { site: Site, detail: String },
    #[error("{site}: call to unknown procedure '{name}'")]
    UnresolvedCall { name: String, site: Site },
    #[error("{site}: jump to unknown label '{name}'")]
    UndefinedLabel { name: String, site: Site },
    #[error("{second}: duplicate label '{name}' (first at {first})")]
    DuplicateLabel {
        name: String,
        first: Site,
        second: Site,
    },
    #[error("{second}: duplicate procedure '{name}' (first at {first})")]
    DuplicateProcedure {
        name: String,
        first: Site,
        second: Site,
    },
    #[error("{entry}: no executable instructions outside procedures", entry = .entry.display())]
    EmptyProgram { entry: PathBuf },
}

/// An operand with every expression evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedOperand<'n> {
    Register(Reg),
    Imm(u32),
    Mem(u32),
    Name(&'n str),
}

impl fmt::Display for ResolvedOperand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResolvedOperand::Register(r) => write!(f, "{r}"),
            ResolvedOperand::Imm(v) => write!(f, "0x{v:X}"),
            ResolvedOperand::Mem(v) => write!(f, "[0x{v:X}]"),
            ResolvedOperand::Name(n) => f.write_str(n),
        }
    }
}

/// One flat-program instruction with operands evaluated and control-flow
/// targets linked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedInstr {
    pub site: Site,
    pub opcode: Opcode,
    operands: Vec<OwnedOperand>,
    /// Flat index of the call/jump target, for control-flow opcodes.
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum OwnedOperand {
    Register(Reg),
    Imm(u32),
    Mem(u32),
    Name(String),
}

impl ResolvedInstr {
    pub fn operands(&self) -> impl Iterator<Item = ResolvedOperand<'_>> {
        self.operands.iter().map(|op| match op {
            OwnedOperand::Register(r) => ResolvedOperand::Register(*r),
            OwnedOperand::Imm(v) => ResolvedOperand::Imm(*v),
            OwnedOperand::Mem(v) => ResolvedOperand::Mem(*v),
            OwnedOperand::Name(n) => ResolvedOperand::Name(n),
        })
    }

    pub fn operand(&self, index: usize) -> Option<ResolvedOperand<'_>> {
        self.operands().nth(index)
    }
}

impl fmt::Display for ResolvedInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.opcode.mnemonic())?;
        for (i, op) in self.operands().enumerate() {
            if i == 0 {
                write!(f, " {op}")?;
            } else {
                write!(f, ", {op}")?;
            }
        }
        Ok(())
    }
}

/// The flat program: test body first, procedure bodies appended after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedProgram {
    pub instructions: Vec<ResolvedInstr>,
    /// Length of the test body; execution starts at 0 and must stay below
    /// this except inside calls.
    pub entry_len: usize,
    /// Procedure name to flat index of its first instruction.
    pub procedures: BTreeMap<String, usize>,
    /// Label name to flat index it points at.
    pub labels: BTreeMap<String, usize>,
}

impl ExpandedProgram {
    /// The flattened listing: one `path:line<TAB>instruction` per flat slot.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for instr in &self.instructions {
            out.push_str(&format!("{}\t{}\n", instr.site, instr));
        }
        out
    }
}

/// Everything a resolution produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub defines: DefineTable,
    pub program: ExpandedProgram,
    /// Root-relative paths of every unit read, in first-read order.
    pub units_read: Vec<PathBuf>,
}

/// Conditional-compilation state for one unit.
struct CondFrame {
    parent_active: bool,
    /// Has any branch of this conditional been taken yet?
    taken: bool,
    active: bool,
    else_seen: bool,
    site: Site,
}

#[derive(Default)]
struct CondStack {
    frames: Vec<CondFrame>,
}

impl CondStack {
    fn active(&self) -> bool {
        self.frames.iter().all(|f| f.active)
    }

    /// Process a directive if it is conditional scaffolding. Returns true
    /// when the directive was consumed here.
    fn handle(
        &mut self,
        directive: &Directive,
        table: &DefineTable,
        site: Site,
    ) -> Result<bool, PreprocessError> {
        match directive {
            Directive::Ifdef { name, .. } | Directive::Ifndef { name, .. } => {
                let parent_active = self.active();
                let mut cond = table.contains(name);
                if matches!(directive, Directive::Ifndef { .. }) {
                    cond = !cond;
                }
                let active = parent_active && cond;
                self.frames.push(CondFrame {
                    parent_active,
                    taken: active,
                    active,
                    else_seen: false,
                    site,
                });
                Ok(true)
            }
            Directive::If { guard, .. } => {
                let parent_active = self.active();
                // Guards in skipped regions are not evaluated: they may
                // reference defines that only exist on other branches.
                let active = if parent_active {
                    let value = eval_expr(guard, table).map_err(|e| match e {
                        EvalError::UndefinedSymbol(name) => PreprocessError::UndefinedSymbol {
                            name,
                            site: site.clone(),
                        },
                    })?;
                    value != 0
                } else {
                    false
                };
                self.frames.push(CondFrame {
                    parent_active,
                    taken: active,
                    active,
                    else_seen: false,
                    site,
                });
                Ok(true)
            }
            Directive::Else => {
                let frame = self.frames.last_mut().ok_or_else(|| {
                    PreprocessError::UnbalancedConditional {
                        site: site.clone(),
                        detail: "#else without a matching #if".to_string(),
                    }
                })?;
                if frame.else_seen {
                    return Err(PreprocessError::UnbalancedConditional {
                        site,
                        detail: "second #else for the same #if".to_string(),
                    });
                }
                frame.else_seen = true;
                frame.active = frame.parent_active && !frame.taken;
                frame.taken |= frame.active;
                Ok(true)
            }
            Directive::Endif => {
                if self.frames.pop().is_none() {
                    return Err(PreprocessError::UnbalancedConditional {
                        site,
                        detail: "#endif without a matching #if".to_string(),
                    });
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    fn finish(&self) -> Result<(), PreprocessError> {
        if let Some(frame) = self.frames.last() {
            return Err(PreprocessError::UnbalancedConditional {
                site: frame.site.clone(),
                detail: "conditional opened here is never closed".to_string(),
            });
        }
        Ok(())
    }
}

/// Apply conditional compilation to a single unit without following
/// includes: defines are added to `table`, conditional scaffolding is
/// consumed, and the surviving lines are returned. Useful for inspecting
/// what one file contributes under a given selection.
pub fn expand_conditionals(
    unit: &SourceUnit,
    table: &mut DefineTable,
    layer: Layer,
) -> Result<Vec<Line>, PreprocessError> {
    let mut stack = CondStack::default();
    let mut kept = Vec::new();
    for line in &unit.lines {
        let site = Site::new(unit.path.clone(), line.number);
        if let LineContent::Directive(directive) = &line.content {
            if stack.handle(directive, table, site.clone())? {
                continue;
            }
            if !stack.active() {
                continue;
            }
            if let Directive::Define { name, value, .. } = directive {
                let value = eval_define(name, value, table, &site)?;
                table.define(name, value, Provenance::Source { site, layer })?;
            }
            kept.push(line.clone());
            continue;
        }
        if stack.active() && !matches!(line.content, LineContent::Blank) {
            kept.push(line.clone());
        }
    }
    stack.finish()?;
    Ok(kept)
}

fn eval_define(
    name: &str,
    value: &Expr,
    table: &DefineTable,
    site: &Site,
) -> Result<u32, PreprocessError> {
    eval_expr(value, table).map_err(|e| match e {
        EvalError::UndefinedSymbol(missing) => PreprocessError::UndefinedSymbol {
            name: if missing == name {
                name.to_string()
            } else {
                missing
            },
            site: site.clone(),
        },
    })
}

/// An instruction collected in pass 1, before operand evaluation.
struct RawInstr {
    site: Site,
    instr: Instruction,
}

/// A procedure body collected in pass 1.
struct ProcBlock {
    name: String,
    site: Site,
    body: Vec<RawInstr>,
}

/// Where a label points: an offset into the test body or a procedure body.
struct LabelPos {
    proc: Option<usize>,
    offset: usize,
    site: Site,
}

/// Resolves dialect sources relative to a system root.
pub struct Resolver<'a> {
    root: PathBuf,
    layout: Option<&'a SystemLayout>,
}

impl<'a> Resolver<'a> {
    /// `root` anchors include search and path rendering; it must exist.
    pub fn new(root: &Path) -> Result<Self, PreprocessError> {
        let root = root.canonicalize().map_err(|source| PreprocessError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Resolver { root, layout: None })
    }

    /// Use a discovered layout to classify defining files by layer (without
    /// one, paths under `Abstraction_Layer/` count as abstraction layer).
    pub fn with_layout(mut self, layout: &'a SystemLayout) -> Self {
        self.layout = Some(layout);
        self
    }

    fn rel_display(&self, abs: &Path) -> PathBuf {
        abs.strip_prefix(&self.root)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| abs.to_path_buf())
    }

    fn layer_of(&self, rel: &Path) -> Layer {
        match self.layout {
            Some(layout) => layout
                .layer_of(rel)
                .unwrap_or_else(|_| heuristic_layer(rel)),
            None => heuristic_layer(rel),
        }
    }

    /// Expand `entry` (absolute, or relative to the root) under `selection`.
    pub fn resolve(
        &self,
        entry: &Path,
        selection: &Selection,
    ) -> Result<Resolution, PreprocessError> {
        let entry_abs = if entry.is_absolute() {
            entry.to_path_buf()
        } else {
            self.root.join(entry)
        };
        let mut table = DefineTable::new();
        selection.seed(&mut table)?;

        let mut walk = Walk {
            resolver: self,
            table,
            include_stack: Vec::new(),
            units_read: Vec::new(),
            seen_units: BTreeSet::new(),
            entry_stream: Vec::new(),
            procs: Vec::new(),
            proc_index: BTreeMap::new(),
            labels: BTreeMap::new(),
            current_proc: None,
        };
        walk.unit(&entry_abs, None)?;

        if walk.entry_stream.is_empty() {
            return Err(PreprocessError::EmptyProgram {
                entry: self.rel_display(&entry_abs),
            });
        }
        walk.link()
    }
}

struct Walk<'r, 'a> {
    resolver: &'r Resolver<'a>,
    table: DefineTable,
    /// Canonical paths of units currently being expanded (cycle detection).
    include_stack: Vec<PathBuf>,
    units_read: Vec<PathBuf>,
    seen_units: BTreeSet<PathBuf>,
    entry_stream: Vec<RawInstr>,
    procs: Vec<ProcBlock>,
    proc_index: BTreeMap<String, usize>,
    labels: BTreeMap<String, LabelPos>,
    current_proc: Option<usize>,
}

impl Walk<'_, '_> {
    fn unit(&mut self, abs: &Path, include_site: Option<Site>) -> Result<(), PreprocessError> {
        let canonical = abs.canonicalize().map_err(|source| PreprocessError::Io {
            path: abs.to_path_buf(),
            source,
        })?;
        if self.include_stack.contains(&canonical) {
            let mut chain: Vec<String> = self
                .include_stack
                .iter()
                .map(|p| self.resolver.rel_display(p).display().to_string())
                .collect();
            chain.push(self.resolver.rel_display(&canonical).display().to_string());
            return Err(PreprocessError::IncludeCycle {
                chain,
                site: include_site.unwrap_or_else(|| Site::new(abs.to_path_buf(), 0)),
            });
        }

        let rel = self.resolver.rel_display(&canonical);
        let source = std::fs::read_to_string(&canonical).map_err(|source| PreprocessError::Io {
            path: rel.clone(),
            source,
        })?;
        let unit = crate::dialect::parse_unit(&rel, &source).map_err(PreprocessError::Parse)?;
        if self.seen_units.insert(rel.clone()) {
            self.units_read.push(rel.clone());
        }
        let layer = self.resolver.layer_of(&rel);

        self.include_stack.push(canonical.clone());
        let result = self.lines(&unit, &canonical, layer);
        self.include_stack.pop();
        result
    }

    fn lines(
        &mut self,
        unit: &SourceUnit,
        canonical: &Path,
        layer: Layer,
    ) -> Result<(), PreprocessError> {
        let mut stack = CondStack::default();
        for line in &unit.lines {
            let site = Site::new(unit.path.clone(), line.number);
            match &line.content {
                LineContent::Blank => {}
                LineContent::Directive(directive) => {
                    if stack.handle(directive, &self.table, site.clone())? {
                        continue;
                    }
                    if !stack.active() {
                        continue;
                    }
                    match directive {
                        Directive::Define { name, value, .. } => {
                            let value = eval_define(name, value, &self.table, &site)?;
                            self.table
                                .define(name, value, Provenance::Source { site, layer })?;
                        }
                        Directive::Include { path, .. } => {
                            let target = self.find_include(canonical, path, &site)?;
                            self.unit(&target, Some(site))?;
                        }
                        _ => unreachable!("conditionals are consumed by the stack"),
                    }
                }
                LineContent::Label(name) => {
                    if !stack.active() {
                        continue;
                    }
                    let pos = LabelPos {
                        proc: self.current_proc,
                        offset: self.stream_len(),
                        site: site.clone(),
                    };
                    if let Some(first) = self.labels.get(name) {
                        return Err(PreprocessError::DuplicateLabel {
                            name: name.clone(),
                            first: first.site.clone(),
                            second: site,
                        });
                    }
                    self.labels.insert(name.clone(), pos);
                }
                LineContent::ProcStart(name) => {
                    if !stack.active() {
                        continue;
                    }
                    if let Some(&idx) = self.proc_index.get(name) {
                        return Err(PreprocessError::DuplicateProcedure {
                            name: name.clone(),
                            first: self.procs[idx].site.clone(),
                            second: site,
                        });
                    }
                    let idx = self.procs.len();
                    self.procs.push(ProcBlock {
                        name: name.clone(),
                        site,
                        body: Vec::new(),
                    });
                    self.proc_index.insert(name.clone(), idx);
                    self.current_proc = Some(idx);
                }
                LineContent::ProcEnd => {
                    if !stack.active() {
                        continue;
                    }
                    if self.current_proc.take().is_none() {
                        return Err(PreprocessError::UnbalancedConditional {
                            site,
                            detail: "endp reached without an open proc (a conditional skipped the proc line)"
                                .to_string(),
                        });
                    }
                }
                LineContent::Instr(instr) => {
                    if !stack.active() {
                        continue;
                    }
                    let raw = RawInstr {
                        site,
                        instr: instr.clone(),
                    };
                    match self.current_proc {
                        Some(idx) => self.procs[idx].body.push(raw),
                        None => self.entry_stream.push(raw),
                    }
                }
            }
        }
        stack.finish()
    }

    fn stream_len(&self) -> usize {
        match self.current_proc {
            Some(idx) => self.procs[idx].body.len(),
            None => self.entry_stream.len(),
        }
    }

    /// Search order: the including file's directory, then the root.
    fn find_include(
        &self,
        from: &Path,
        include: &str,
        site: &Site,
    ) -> Result<PathBuf, PreprocessError> {
        let mut candidates = Vec::new();
        if let Some(dir) = from.parent() {
            candidates.push(dir.join(include));
        }
        candidates.push(self.resolver.root.join(include));
        for candidate in candidates {
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
        Err(PreprocessError::IncludeNotFound {
            include: include.to_string(),
            site: site.clone(),
        })
    }

    /// Pass 2: lay out the flat program and evaluate every operand against
    /// the final define table.
    fn link(self) -> Result<Resolution, PreprocessError> {
        let entry_len = self.entry_stream.len();
        let mut proc_starts = Vec::with_capacity(self.procs.len());
        let mut next = entry_len;
        for block in &self.procs {
            proc_starts.push(next);
            next += block.body.len();
        }

        let mut procedures = BTreeMap::new();
        for (idx, block) in self.procs.iter().enumerate() {
            procedures.insert(block.name.clone(), proc_starts[idx]);
        }
        let mut labels = BTreeMap::new();
        for (name, pos) in &self.labels {
            let flat = match pos.proc {
                Some(idx) => proc_starts[idx] + pos.offset,
                None => pos.offset,
            };
            labels.insert(name.clone(), flat);
        }

        let mut instructions = Vec::with_capacity(next);
        let proc_bodies = self.procs.into_iter().flat_map(|b| b.body);
        for raw in self.entry_stream.into_iter().chain(proc_bodies) {
            instructions.push(resolve_instr(raw, &self.table, &procedures, &labels)?);
        }

        Ok(Resolution {
            defines: self.table,
            program: ExpandedProgram {
                instructions,
                entry_len,
                procedures,
                labels,
            },
            units_read: self.units_read,
        })
    }
}

fn resolve_instr(
    raw: RawInstr,
    table: &DefineTable,
    procedures: &BTreeMap<String, usize>,
    labels: &BTreeMap<String, usize>,
) -> Result<ResolvedInstr, PreprocessError> {
    let eval = |expr: &Expr| -> Result<u32, PreprocessError> {
        eval_expr(expr, table).map_err(|e| match e {
            EvalError::UndefinedSymbol(name) => PreprocessError::UndefinedSymbol {
                name,
                site: raw.site.clone(),
            },
        })
    };
    let mut operands = Vec::with_capacity(raw.instr.operands.len());
    let mut target = None;
    for operand in &raw.instr.operands {
        match &operand.kind {
            OperandKind::Register(r) => operands.push(OwnedOperand::Register(*r)),
            OperandKind::Imm(expr) => operands.push(OwnedOperand::Imm(eval(expr)?)),
            OperandKind::Mem(expr) => operands.push(OwnedOperand::Mem(eval(expr)?)),
            OperandKind::Name(name) => {
                let flat = if raw.instr.opcode == Opcode::Call {
                    *procedures
                        .get(name)
                        .ok_or_else(|| PreprocessError::UnresolvedCall {
                            name: name.clone(),
                            site: raw.site.clone(),
                        })?
                } else {
                    *labels
                        .get(name)
                        .ok_or_else(|| PreprocessError::UndefinedLabel {
                            name: name.clone(),
                            site: raw.site.clone(),
                        })?
                };
                target = Some(flat);
                operands.push(OwnedOperand::Name(name.clone()));
            }
        }
    }
    Ok(ResolvedInstr {
        site: raw.site,
        opcode: raw.instr.opcode,
        operands,
        target,
    })
}
