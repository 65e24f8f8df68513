//! Deterministic execution of expanded programs against a device model.
//!
//! A derivative config (`derivative_<NAME>.cfg` at the system root)
//! describes the memory-mapped registers of one chip variant: address,
//! width, and named bit fields with reset values. A target config
//! (`target_<NAME>.cfg`) describes the platform a run happens on — its
//! cycle budget and any extra defines it seeds.
//!
//! The machine is intentionally simple and fully deterministic: sixteen
//! 32-bit data registers, a word-addressed scratch RAM, the derivative's
//! MMIO registers, and a bounded call stack. Every instruction costs one
//! cycle. MMIO stores keep only bits covered by a field; everything else
//! reads back as zero — exactly the property the page-masking tests probe.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::{self, ConfigError};
use crate::dialect::{apply_binop, BinOp, Opcode};
use crate::preprocessor::{ExpandedProgram, ResolvedInstr, ResolvedOperand, Site};

/// One named bit field of a register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    /// Lowest bit position.
    pub start: u32,
    /// Width in bits (at least 1).
    pub size: u32,
    /// Reset value, right-aligned (fits in `size` bits).
    pub reset: u32,
}

impl FieldSpec {
    /// The field's bits within the register.
    pub fn mask(&self) -> u32 {
        let bits = if self.size >= 32 {
            u32::MAX
        } else {
            (1u32 << self.size) - 1
        };
        bits << self.start
    }
}

/// One memory-mapped register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterSpec {
    pub name: String,
    pub address: u32,
    /// Width in bits, at most 32.
    pub width: u32,
    pub fields: Vec<FieldSpec>,
}

impl RegisterSpec {
    /// Union of all field masks — the bits a store can land in.
    pub fn field_mask(&self) -> u32 {
        self.fields.iter().fold(0, |m, f| m | f.mask())
    }

    /// Register value after reset: every field's reset in place.
    pub fn reset_value(&self) -> u32 {
        self.fields.iter().fold(0, |v, f| v | (f.reset << f.start))
    }

    fn width_mask(&self) -> u32 {
        if self.width >= 32 {
            u32::MAX
        } else {
            (1u32 << self.width) - 1
        }
    }

    /// Mask applied to stores: inside the width and inside some field.
    pub fn store_mask(&self) -> u32 {
        self.width_mask() & self.field_mask()
    }
}

/// The register map of one chip variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivativeSpec {
    pub name: String,
    pub registers: Vec<RegisterSpec>,
}

/// The platform a run executes on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub name: String,
    /// Cycle budget per test.
    pub max_cycles: u64,
    /// Extra defines this target seeds into resolution.
    pub defines: Vec<(String, u32)>,
}

/// A derivative or target config could not be used.
#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no {kind} config for '{name}' at {path}", path = .path.display())]
    NotFound {
        kind: &'static str,
        name: String,
        path: PathBuf,
    },
    #[error("{path}: {detail}", path = .path.display())]
    Malformed { path: PathBuf, detail: String },
    #[error(
        "{path}: registers '{first}' and '{second}' share address 0x{address:X}",
        path = .path.display()
    )]
    DuplicateAddress {
        path: PathBuf,
        first: String,
        second: String,
        address: u32,
    },
    #[error(
        "{path}: fields '{first}' and '{second}' of register '{register}' overlap",
        path = .path.display()
    )]
    OverlappingFields {
        path: PathBuf,
        register: String,
        first: String,
        second: String,
    },
    #[error(
        "{path}: field '{field}' of register '{register}' does not fit in width {width}",
        path = .path.display()
    )]
    FieldExceedsWidth {
        path: PathBuf,
        register: String,
        field: String,
        width: u32,
    },
}

fn malformed(path: &Path, detail: impl Into<String>) -> SpecError {
    SpecError::Malformed {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Load and validate `<root>/derivative_<name>.cfg`.
pub fn load_derivative(root: &Path, name: &str) -> Result<DerivativeSpec, SpecError> {
    let path = root.join(format!("derivative_{name}.cfg"));
    if !path.is_file() {
        return Err(SpecError::NotFound {
            kind: "derivative",
            name: name.to_string(),
            path,
        });
    }
    let ini = config::load_ini(&path)?;

    let head = ini
        .section("derivative")
        .ok_or_else(|| malformed(&path, "missing [derivative] section"))?;
    let declared = head.require(&path, "name")?;
    if declared != name {
        return Err(malformed(
            &path,
            format!("file declares derivative '{declared}', expected '{name}'"),
        ));
    }

    let mut registers: Vec<RegisterSpec> = Vec::new();
    for section in &ini.sections {
        if section.name == "derivative" {
            for entry in &section.entries {
                if entry.key != "name" {
                    return Err(malformed(
                        &path,
                        format!("unknown key '{}' in [derivative]", entry.key),
                    ));
                }
            }
            continue;
        }
        if let Some(reg_name) = section.name.strip_prefix("register ") {
            let reg_name = reg_name.trim();
            if registers.iter().any(|r| r.name == reg_name) {
                return Err(malformed(
                    &path,
                    format!("register '{reg_name}' declared twice"),
                ));
            }
            let mut address = None;
            let mut width = None;
            for entry in &section.entries {
                let value = config::parse_number(&path, entry.line, &entry.key, &entry.value)?;
                match entry.key.as_str() {
                    "address" => address = Some(value),
                    "width" => width = Some(value),
                    other => {
                        return Err(malformed(
                            &path,
                            format!("unknown key '{other}' in [{}]", section.name),
                        ));
                    }
                }
            }
            let address = address
                .ok_or_else(|| malformed(&path, format!("register '{reg_name}' has no address")))?;
            let width = width
                .ok_or_else(|| malformed(&path, format!("register '{reg_name}' has no width")))?;
            if width == 0 || width > 32 {
                return Err(malformed(
                    &path,
                    format!("register '{reg_name}' width must be 1..=32, got {width}"),
                ));
            }
            if let Some(taken) = registers.iter().find(|r| r.address == address) {
                return Err(SpecError::DuplicateAddress {
                    path,
                    first: taken.name.clone(),
                    second: reg_name.to_string(),
                    address,
                });
            }
            registers.push(RegisterSpec {
                name: reg_name.to_string(),
                address,
                width,
                fields: Vec::new(),
            });
            continue;
        }
        if let Some(qualified) = section.name.strip_prefix("field ") {
            let Some((reg_name, field_name)) = qualified.trim().split_once('.') else {
                return Err(malformed(
                    &path,
                    format!(
                        "field section needs REGISTER.FIELD, got '{}'",
                        qualified.trim()
                    ),
                ));
            };
            let register = registers
                .iter_mut()
                .find(|r| r.name == reg_name)
                .ok_or_else(|| {
                    malformed(
                        &path,
                        format!("field section references unknown register '{reg_name}'"),
                    )
                })?;
            if register.fields.iter().any(|f| f.name == field_name) {
                return Err(malformed(
                    &path,
                    format!("field '{reg_name}.{field_name}' declared twice"),
                ));
            }
            let mut start = None;
            let mut size = None;
            let mut reset = 0;
            for entry in &section.entries {
                let value = config::parse_number(&path, entry.line, &entry.key, &entry.value)?;
                match entry.key.as_str() {
                    "start" => start = Some(value),
                    "size" => size = Some(value),
                    "reset" => reset = value,
                    other => {
                        return Err(malformed(
                            &path,
                            format!("unknown key '{other}' in [{}]", section.name),
                        ));
                    }
                }
            }
            let start = start
                .ok_or_else(|| malformed(&path, format!("field '{field_name}' has no start")))?;
            let size =
                size.ok_or_else(|| malformed(&path, format!("field '{field_name}' has no size")))?;
            if size == 0 {
                return Err(malformed(
                    &path,
                    format!("field '{reg_name}.{field_name}' has size 0"),
                ));
            }
            let field = FieldSpec {
                name: field_name.to_string(),
                start,
                size,
                reset,
            };
            if start.saturating_add(size) > register.width {
                return Err(SpecError::FieldExceedsWidth {
                    path,
                    register: register.name.clone(),
                    field: field.name,
                    width: register.width,
                });
            }
            if size < 32 && reset >= (1u32 << size) {
                return Err(malformed(
                    &path,
                    format!(
                        "field '{reg_name}.{field_name}' reset 0x{reset:X} does not fit in {size} bits"
                    ),
                ));
            }
            if let Some(other) = register
                .fields
                .iter()
                .find(|f| f.mask() & field.mask() != 0)
            {
                return Err(SpecError::OverlappingFields {
                    path,
                    register: register.name.clone(),
                    first: other.name.clone(),
                    second: field.name,
                });
            }
            register.fields.push(field);
            continue;
        }
        return Err(malformed(
            &path,
            format!("unknown section [{}]", section.name),
        ));
    }

    Ok(DerivativeSpec {
        name: name.to_string(),
        registers,
    })
}

/// Load and validate `<root>/target_<name>.cfg`.
pub fn load_target(root: &Path, name: &str) -> Result<TargetSpec, SpecError> {
    let path = root.join(format!("target_{name}.cfg"));
    if !path.is_file() {
        return Err(SpecError::NotFound {
            kind: "target",
            name: name.to_string(),
            path,
        });
    }
    let ini = config::load_ini(&path)?;

    let head = ini
        .section("target")
        .ok_or_else(|| malformed(&path, "missing [target] section"))?;
    let declared = head.require(&path, "name")?;
    if declared != name {
        return Err(malformed(
            &path,
            format!("file declares target '{declared}', expected '{name}'"),
        ));
    }
    let max_cycles_text = head.require(&path, "max_cycles")?;
    let max_cycles = config::parse_number(&path, head.line, "max_cycles", max_cycles_text)? as u64;

    let mut defines = Vec::new();
    for section in &ini.sections {
        match section.name.as_str() {
            "target" => {
                for entry in &section.entries {
                    if entry.key != "name" && entry.key != "max_cycles" {
                        return Err(malformed(
                            &path,
                            format!("unknown key '{}' in [target]", entry.key),
                        ));
                    }
                }
            }
            "defines" => {
                for entry in &section.entries {
                    let value = config::parse_number(&path, entry.line, &entry.key, &entry.value)?;
                    defines.push((entry.key.clone(), value));
                }
            }
            other => return Err(malformed(&path, format!("unknown section [{other}]"))),
        }
    }

    Ok(TargetSpec {
        name: name.to_string(),
        max_cycles,
        defines,
    })
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `pass` executed — every expectation held.
    Pass,
    /// An `expect` mismatched or `fail` executed.
    Fail,
    /// The cycle budget ran out.
    Timeout,
    /// The program did something the machine refuses: unmapped access,
    /// stack misuse, or running outside the test body.
    Trap,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Timeout => "timeout",
            Verdict::Trap => "trap",
        })
    }
}

/// One MMIO register's value at end of run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MmioWord {
    pub register: String,
    pub address: u32,
    pub value: u32,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub verdict: Verdict,
    /// The instruction the run ended at (or would have executed next, for
    /// timeouts).
    pub site: Option<Site>,
    /// For expectation failures.
    pub expected: Option<u32>,
    /// For expectation failures.
    pub actual: Option<u32>,
    /// Instructions executed.
    pub cycles: u64,
    /// Final MMIO state, ordered by address.
    pub mmio: Vec<MmioWord>,
    /// One human sentence about the outcome.
    pub detail: String,
}

impl RunReport {
    /// Multi-line human form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("verdict: {}\n", self.verdict));
        out.push_str(&format!("detail: {}\n", self.detail));
        if let Some(site) = &self.site {
            out.push_str(&format!("site: {site}\n"));
        }
        if let Some(expected) = self.expected {
            out.push_str(&format!("expected: 0x{expected:X}\n"));
        }
        if let Some(actual) = self.actual {
            out.push_str(&format!("actual: 0x{actual:X}\n"));
        }
        out.push_str(&format!("cycles: {}\n", self.cycles));
        for word in &self.mmio {
            out.push_str(&format!(
                "mmio {} 0x{:X} = 0x{:X}\n",
                word.register, word.address, word.value
            ));
        }
        out
    }
}

/// One executed instruction, for `--trace`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    /// 1-based.
    pub cycle: u64,
    /// Flat index before execution.
    pub pc: usize,
    pub site: Site,
    pub text: String,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.cycle, self.pc, self.site, self.text)
    }
}

/// Depth limit of the call stack.
const CALL_STACK_LIMIT: usize = 64;
/// Highest scratch-RAM word address.
const SCRATCH_TOP: u32 = 0xFFFF;

struct Machine<'p> {
    program: &'p ExpandedProgram,
    regs: [u32; 16],
    scratch: BTreeMap<u32, u32>,
    /// Address → index into `registers`.
    mmio_index: BTreeMap<u32, usize>,
    /// Address → current value (seeded with reset values).
    mmio_values: BTreeMap<u32, u32>,
    registers: Vec<RegisterSpec>,
    call_stack: Vec<usize>,
    pc: usize,
    cycles: u64,
}

enum Step {
    Continue,
    Done(Verdict, String, Option<u32>, Option<u32>),
}

impl<'p> Machine<'p> {
    fn new(program: &'p ExpandedProgram, derivative: &DerivativeSpec) -> Self {
        let mut mmio_index = BTreeMap::new();
        let mut mmio_values = BTreeMap::new();
        for (index, register) in derivative.registers.iter().enumerate() {
            mmio_index.insert(register.address, index);
            mmio_values.insert(register.address, register.reset_value());
        }
        Machine {
            program,
            regs: [0; 16],
            scratch: BTreeMap::new(),
            mmio_index,
            mmio_values,
            registers: derivative.registers.clone(),
            call_stack: Vec::new(),
            pc: 0,
            cycles: 0,
        }
    }

    fn reg(&self, instr: &ResolvedInstr, index: usize) -> usize {
        match instr.operand(index) {
            Some(ResolvedOperand::Register(r)) => r.index(),
            _ => unreachable!("operand signatures are checked at parse time"),
        }
    }

    /// Register content or immediate — the flexible second operand.
    fn value(&self, instr: &ResolvedInstr, index: usize) -> u32 {
        match instr.operand(index) {
            Some(ResolvedOperand::Register(r)) => self.regs[r.index()],
            Some(ResolvedOperand::Imm(v)) => v,
            _ => unreachable!("operand signatures are checked at parse time"),
        }
    }

    fn imm(&self, instr: &ResolvedInstr, index: usize) -> u32 {
        match instr.operand(index) {
            Some(ResolvedOperand::Imm(v)) => v,
            _ => unreachable!("operand signatures are checked at parse time"),
        }
    }

    fn mem(&self, instr: &ResolvedInstr, index: usize) -> u32 {
        match instr.operand(index) {
            Some(ResolvedOperand::Mem(v)) => v,
            _ => unreachable!("operand signatures are checked at parse time"),
        }
    }

    fn target(instr: &ResolvedInstr) -> usize {
        instr
            .target
            .expect("control-flow instructions are linked at resolution")
    }

    fn load(&self, address: u32) -> Result<u32, String> {
        if let Some(value) = self.mmio_values.get(&address) {
            return Ok(*value);
        }
        if address <= SCRATCH_TOP {
            return Ok(self.scratch.get(&address).copied().unwrap_or(0));
        }
        Err(format!("load from unmapped address 0x{address:X}"))
    }

    fn store(&mut self, address: u32, value: u32) -> Result<(), String> {
        if let Some(&index) = self.mmio_index.get(&address) {
            let mask = self.registers[index].store_mask();
            self.mmio_values.insert(address, value & mask);
            return Ok(());
        }
        if address <= SCRATCH_TOP {
            self.scratch.insert(address, value);
            return Ok(());
        }
        Err(format!("store to unmapped address 0x{address:X}"))
    }

    fn step(&mut self, instr: &ResolvedInstr) -> Step {
        match instr.opcode {
            Opcode::Mov => {
                let value = self.value(instr, 1);
                self.regs[self.reg(instr, 0)] = value;
                self.pc += 1;
            }
            Opcode::Shl | Opcode::Shr => {
                let op = if instr.opcode == Opcode::Shl {
                    BinOp::Shl
                } else {
                    BinOp::Shr
                };
                let r = self.reg(instr, 0);
                self.regs[r] = apply_binop(op, self.regs[r], self.imm(instr, 1));
                self.pc += 1;
            }
            Opcode::Or | Opcode::And | Opcode::Add | Opcode::Sub => {
                let op = match instr.opcode {
                    Opcode::Or => BinOp::BitOr,
                    Opcode::And => BinOp::BitAnd,
                    Opcode::Add => BinOp::Add,
                    _ => BinOp::Sub,
                };
                let rd = self.reg(instr, 0);
                let rs = self.reg(instr, 1);
                self.regs[rd] = apply_binop(op, self.regs[rd], self.regs[rs]);
                self.pc += 1;
            }
            Opcode::Ld => {
                let address = self.mem(instr, 1);
                match self.load(address) {
                    Ok(value) => self.regs[self.reg(instr, 0)] = value,
                    Err(detail) => return Step::Done(Verdict::Trap, detail, None, None),
                }
                self.pc += 1;
            }
            Opcode::St => {
                let address = self.mem(instr, 0);
                let value = self.regs[self.reg(instr, 1)];
                if let Err(detail) = self.store(address, value) {
                    return Step::Done(Verdict::Trap, detail, None, None);
                }
                self.pc += 1;
            }
            Opcode::Call => {
                if self.call_stack.len() >= CALL_STACK_LIMIT {
                    return Step::Done(
                        Verdict::Trap,
                        format!("call stack overflow (depth {CALL_STACK_LIMIT})"),
                        None,
                        None,
                    );
                }
                self.call_stack.push(self.pc + 1);
                self.pc = Self::target(instr);
            }
            Opcode::Ret => match self.call_stack.pop() {
                Some(return_pc) => self.pc = return_pc,
                None => {
                    return Step::Done(
                        Verdict::Trap,
                        "ret with an empty call stack".to_string(),
                        None,
                        None,
                    );
                }
            },
            Opcode::Jmp => self.pc = Self::target(instr),
            Opcode::Jz | Opcode::Jnz => {
                let zero = self.regs[self.reg(instr, 0)] == 0;
                let take = if instr.opcode == Opcode::Jz {
                    zero
                } else {
                    !zero
                };
                if take {
                    self.pc = Self::target(instr);
                } else {
                    self.pc += 1;
                }
            }
            Opcode::Expect => {
                let r = self.reg(instr, 0);
                let actual = self.regs[r];
                let expected = self.imm(instr, 1);
                if actual != expected {
                    return Step::Done(
                        Verdict::Fail,
                        format!("expect d{r}: expected 0x{expected:X}, actual 0x{actual:X}"),
                        Some(expected),
                        Some(actual),
                    );
                }
                self.pc += 1;
            }
            Opcode::Pass => {
                return Step::Done(Verdict::Pass, "pass reached".to_string(), None, None);
            }
            Opcode::Fail => {
                return Step::Done(
                    Verdict::Fail,
                    "fail instruction reached".to_string(),
                    None,
                    None,
                );
            }
        }
        Step::Continue
    }

    fn mmio_snapshot(&self) -> Vec<MmioWord> {
        self.mmio_values
            .iter()
            .map(|(&address, &value)| MmioWord {
                register: self.registers[self.mmio_index[&address]].name.clone(),
                address,
                value,
            })
            .collect()
    }

    fn run(&mut self, max_cycles: u64, mut trace: Option<&mut Vec<TraceStep>>) -> RunReport {
        loop {
            if self.cycles == max_cycles {
                let site = self
                    .program
                    .instructions
                    .get(self.pc)
                    .map(|i| i.site.clone());
                return self.report(
                    Verdict::Timeout,
                    format!("cycle limit {max_cycles} reached"),
                    site,
                    None,
                    None,
                );
            }
            if self.pc >= self.program.entry_len && self.call_stack.is_empty() {
                let site = self
                    .program
                    .instructions
                    .get(self.pc)
                    .map(|i| i.site.clone());
                return self.report(
                    Verdict::Trap,
                    "execution left the test body without an open call".to_string(),
                    site,
                    None,
                    None,
                );
            }
            if self.pc >= self.program.instructions.len() {
                return self.report(
                    Verdict::Trap,
                    "execution ran off the end of the program".to_string(),
                    None,
                    None,
                    None,
                );
            }
            let instr = &self.program.instructions[self.pc];
            self.cycles += 1;
            if let Some(steps) = trace.as_deref_mut() {
                steps.push(TraceStep {
                    cycle: self.cycles,
                    pc: self.pc,
                    site: instr.site.clone(),
                    text: instr.to_string(),
                });
            }
            match self.step(instr) {
                Step::Continue => {}
                Step::Done(verdict, detail, expected, actual) => {
                    return self.report(
                        verdict,
                        detail,
                        Some(instr.site.clone()),
                        expected,
                        actual,
                    );
                }
            }
        }
    }

    fn report(
        &self,
        verdict: Verdict,
        detail: String,
        site: Option<Site>,
        expected: Option<u32>,
        actual: Option<u32>,
    ) -> RunReport {
        RunReport {
            verdict,
            site,
            expected,
            actual,
            cycles: self.cycles,
            mmio: self.mmio_snapshot(),
            detail,
        }
    }
}

/// Execute a program under a derivative's register map and a target's cycle
/// budget.
pub fn run(
    program: &ExpandedProgram,
    derivative: &DerivativeSpec,
    target: &TargetSpec,
) -> RunReport {
    Machine::new(program, derivative).run(target.max_cycles, None)
}

/// Like [`run`], also returning one [`TraceStep`] per executed instruction.
pub fn run_traced(
    program: &ExpandedProgram,
    derivative: &DerivativeSpec,
    target: &TargetSpec,
) -> (RunReport, Vec<TraceStep>) {
    let mut steps = Vec::new();
    let report = Machine::new(program, derivative).run(target.max_cycles, Some(&mut steps));
    (report, steps)
}
