//! The `advm` command line: scaffold, lint, resolve, run, release, regress.
//!
//! This module is a thin driver over the library. Each subcommand maps to
//! one workflow and reports through the process exit code:
//!
//! * `0` — success / all tests passed
//! * `1` — test failures (or drift found by `release --check`)
//! * `2` — lint errors (or any finding under `--strict`)
//! * `3` — usage, configuration, or infrastructure error
//!
//! Selection precedence is flags, then the `ADVM_DERIVATIVE` /
//! `ADVM_TARGET` environment variables, then `[defaults]` in `advm.cfg`.
//! The environment lookup is injected so the precedence chain is testable
//! without mutating process state.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{self, AdvmConfig};
use crate::env_model::{
    self, SystemLayout, ABSTRACTION_DIR, BASE_FUNCTIONS, GLOBALS_INC, TEST_PLAN,
};
use crate::lint::{self, Baseline, Rule, Severity};
use crate::preprocessor::{Resolver, Selection};
use crate::regression::{self, RunConfig};
use crate::release;
use crate::sim;

/// Environment variable consulted for the derivative when no flag is given.
pub const DERIVATIVE_VAR: &str = "ADVM_DERIVATIVE";
/// Environment variable consulted for the target when no flag is given.
pub const TARGET_VAR: &str = "ADVM_TARGET";

#[derive(Parser)]
#[command(
    name = "advm",
    version,
    about = "Layered assembler test environments: scaffold, lint, resolve, run, release, regress"
)]
struct Cli {
    /// System root holding advm.cfg, environments, and configs.
    #[arg(long, global = true, value_name = "DIR")]
    root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a conformant environment skeleton with optional test cells.
    Scaffold {
        /// Environment name (must not embed a derivative name).
        #[arg(long, value_name = "NAME")]
        env: String,
        /// Test cell to create inside the environment; repeatable.
        #[arg(long = "cell", value_name = "NAME")]
        cells: Vec<String>,
    },
    /// Check the tree for layer violations and structural problems.
    Lint {
        /// Only report findings from these environments; repeatable.
        #[arg(long = "env", value_name = "NAME")]
        envs: Vec<String>,
        /// Treat warnings as errors for the exit code.
        #[arg(long)]
        strict: bool,
        /// Suppress findings fingerprinted in this file.
        #[arg(long, value_name = "FILE")]
        baseline: Option<PathBuf>,
        /// Write the current findings' fingerprints to this file and exit 0.
        #[arg(long, value_name = "FILE")]
        write_baseline: Option<PathBuf>,
        /// Print what a rule means (e.g. ADVM003) instead of linting.
        #[arg(long, value_name = "RULE")]
        explain: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
    /// Expand one test to its flat listing under a selection.
    Resolve {
        /// Entry file, relative to the root.
        file: PathBuf,
        #[arg(short = 'd', long, value_name = "NAME")]
        derivative: Option<String>,
        #[arg(short = 't', long, value_name = "NAME")]
        target: Option<String>,
    },
    /// Execute one test under a selection and report the verdict.
    Run {
        /// Entry file, relative to the root.
        file: PathBuf,
        #[arg(short = 'd', long, value_name = "NAME")]
        derivative: Option<String>,
        #[arg(short = 't', long, value_name = "NAME")]
        target: Option<String>,
        /// Print one line per executed instruction: cycle pc site instr.
        #[arg(long)]
        trace: bool,
    },
    /// Label the tree: write release.lock and release.manifest.
    Release {
        /// Print one environment's label without writing anything.
        #[arg(long, value_name = "NAME", conflicts_with_all = ["system", "check"])]
        env: Option<String>,
        /// Label the whole system (the default).
        #[arg(long)]
        system: bool,
        /// Compare the tree against the existing release.lock instead.
        #[arg(long, conflicts_with = "system")]
        check: bool,
    },
    /// Run every test cell under one selection.
    Regress {
        #[arg(short = 'd', long, value_name = "NAME")]
        derivative: Option<String>,
        #[arg(short = 't', long, value_name = "NAME")]
        target: Option<String>,
        /// Only run these environments; repeatable.
        #[arg(long = "env", value_name = "NAME")]
        envs: Vec<String>,
        /// Worker threads; 0 picks a sensible default.
        #[arg(short = 'j', long = "jobs", value_name = "N", default_value_t = 0)]
        jobs: usize,
        /// Refuse to run unless the tree matches release.lock.
        #[arg(long)]
        frozen: bool,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
}

/// Output shape for lint and regress.
#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    /// Readable lines for people.
    Human,
    /// Tab-separated lines for machines.
    Records,
}

/// An abnormal outcome: message for standard error plus the exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn infra(message: impl ToString) -> Failure {
        Failure {
            code: 3,
            message: message.to_string(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parse `args` and run the command. Returns the process exit code;
/// `env_var` supplies environment-variable lookups.
pub fn run_cli<I, S>(args: I, env_var: impl Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String> + Clone,
{
    let cli = match Cli::try_parse_from(args.into_iter().map(Into::into)) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not errors; everything else is usage.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return code;
        }
    };
    let root = cli
        .root
        .unwrap_or_else(|| std::env::current_dir().unwrap_or_else(|_| PathBuf::from(".")));

    let outcome = match cli.command {
        Command::Scaffold { env, cells } => cmd_scaffold(&root, &env, &cells),
        Command::Lint {
            envs,
            strict,
            baseline,
            write_baseline,
            explain,
            format,
        } => cmd_lint(
            &root,
            &envs,
            strict,
            baseline,
            write_baseline,
            explain,
            format,
        ),
        Command::Resolve {
            file,
            derivative,
            target,
        } => cmd_resolve(&root, &file, derivative, target, &env_var),
        Command::Run {
            file,
            derivative,
            target,
            trace,
        } => cmd_run(&root, &file, derivative, target, trace, &env_var),
        Command::Release {
            env,
            system: _,
            check,
        } => cmd_release(&root, env, check),
        Command::Regress {
            derivative,
            target,
            envs,
            jobs,
            frozen,
            format,
        } => cmd_regress(
            &root, derivative, target, &envs, jobs, frozen, format, &env_var,
        ),
    };

    match outcome {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("advm: {}", failure.message);
            failure.code
        }
    }
}

/// Resolve the derivative/target selection: flags beat environment
/// variables beat `[defaults]` in advm.cfg.
fn pick_selection(
    flag_derivative: Option<String>,
    flag_target: Option<String>,
    config: &AdvmConfig,
    env_var: &impl Fn(&str) -> Option<String>,
) -> Result<Selection, Failure> {
    let derivative = flag_derivative
        .or_else(|| env_var(DERIVATIVE_VAR))
        .or_else(|| config.default_derivative.clone())
        .ok_or_else(|| {
            Failure::infra(format!(
                "no derivative selected (use --derivative, {DERIVATIVE_VAR}, or [defaults] in advm.cfg)"
            ))
        })?;
    let target = flag_target
        .or_else(|| env_var(TARGET_VAR))
        .or_else(|| config.default_target.clone())
        .ok_or_else(|| {
            Failure::infra(format!(
                "no target selected (use --target, {TARGET_VAR}, or [defaults] in advm.cfg)"
            ))
        })?;
    Ok(Selection::new(derivative, target))
}

fn discover(root: &Path) -> Result<SystemLayout, Failure> {
    env_model::discover(root).map_err(Failure::infra)
}

// ---------------------------------------------------------------- scaffold

/// Substituted into the scaffold templates.
struct ScaffoldNames {
    /// The environment name as given.
    env: String,
    /// Upper-case form for define names.
    upper: String,
    /// Lower-case form for procedure names.
    lower: String,
}

fn cmd_scaffold(root: &Path, env: &str, cells: &[String]) -> CmdResult {
    let config = config::load_advm_cfg(root).map_err(Failure::infra)?;
    if let Some(derivative) = env_model::check_env_name(env, &config.derivatives) {
        return Err(Failure::infra(format!(
            "derivative-specific name: environment '{env}' embeds derivative '{derivative}'"
        )));
    }
    check_scaffold_name("environment", env)?;
    for cell in cells {
        check_scaffold_name("cell", cell)?;
        if cell == ABSTRACTION_DIR {
            return Err(Failure::infra(format!(
                "cell name '{cell}' is reserved for the abstraction layer"
            )));
        }
    }
    let env_dir = root.join(env);
    if env_dir.exists() {
        return Err(Failure::infra(format!(
            "environment '{env}' already exists at {}",
            env_dir.display()
        )));
    }

    let names = ScaffoldNames {
        env: env.to_string(),
        upper: env.to_uppercase(),
        lower: env.to_lowercase(),
    };
    let mut created = Vec::new();
    write_scaffold(
        &env_dir.join(TEST_PLAN),
        &test_plan_template(&names, cells),
        &mut created,
    )?;
    let abstraction = env_dir.join(ABSTRACTION_DIR);
    write_scaffold(
        &abstraction.join(GLOBALS_INC),
        &globals_template(&names),
        &mut created,
    )?;
    write_scaffold(
        &abstraction.join(BASE_FUNCTIONS),
        &base_functions_template(&names),
        &mut created,
    )?;
    for cell in cells {
        write_scaffold(
            &env_dir.join(cell).join("src").join("test.asm"),
            &cell_template(&names, cell),
            &mut created,
        )?;
    }
    for path in created {
        println!("created {}", path.display());
    }
    Ok(0)
}

/// Names become directories, defines, and procedure names, so keep them to
/// identifier characters.
fn check_scaffold_name(kind: &str, name: &str) -> Result<(), Failure> {
    let mut chars = name.chars();
    let valid = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if valid {
        Ok(())
    } else {
        Err(Failure::infra(format!(
            "{kind} name '{name}' must be a letter followed by letters, digits, or underscores"
        )))
    }
}

fn write_scaffold(path: &Path, content: &str, created: &mut Vec<PathBuf>) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::infra(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, content)
        .map_err(|e| Failure::infra(format!("cannot write {}: {e}", path.display())))?;
    created.push(path.to_path_buf());
    Ok(())
}

fn test_plan_template(names: &ScaffoldNames, cells: &[String]) -> String {
    let mut plan = format!(
        "{env} — test plan.\nKeep one line per test cell; this file stays greppable.\n\n",
        env = names.env
    );
    for cell in cells {
        let _ = writeln!(
            plan,
            "- {cell}: TODO describe the scenario this test drives."
        );
    }
    plan
}

fn globals_template(names: &ScaffoldNames) -> String {
    format!(
        "; {env} — Global Defines.\n\
         ; Name every derivative- and target-dependent quantity here so the\n\
         ; tests stay portable. Guarded so repeated inclusion is harmless.\n\
         #ifndef {upper}_GLOBALS\n\
         #define {upper}_GLOBALS 1\n\
         \n\
         ; Example quantity; replace with real addresses and field values.\n\
         #define {upper}_SEED 1\n\
         \n\
         #endif\n",
        env = names.env,
        upper = names.upper,
    )
}

fn base_functions_template(names: &ScaffoldNames) -> String {
    format!(
        "; {env} — Base Functions.\n\
         ; Wrap shared or device-touching sequences here; tests call these\n\
         ; wrappers instead of reaching into the global layer.\n\
         #ifndef {upper}_BASE_FUNCTIONS\n\
         #define {upper}_BASE_FUNCTIONS 1\n\
         \n\
         #include \"globals.inc\"\n\
         \n\
         ; Replace with wrappers for the sequences this environment drives.\n\
         proc {lower}_noop\n\
         \tret\n\
         endp\n\
         \n\
         #endif\n",
        env = names.env,
        upper = names.upper,
        lower = names.lower,
    )
}

fn cell_template(names: &ScaffoldNames, cell: &str) -> String {
    format!(
        "; {cell}: TODO describe the scenario this test drives.\n\
         #include \"../../{ABSTRACTION_DIR}/{GLOBALS_INC}\"\n\
         #include \"../../{ABSTRACTION_DIR}/{BASE_FUNCTIONS}\"\n\
         \n\
         \tmov d1, {upper}_SEED\n\
         \tcall {lower}_noop\n\
         \texpect d1, {upper}_SEED\n\
         \tpass\n",
        upper = names.upper,
        lower = names.lower,
    )
}

// -------------------------------------------------------------------- lint

#[allow(clippy::too_many_arguments)]
fn cmd_lint(
    root: &Path,
    envs: &[String],
    strict: bool,
    baseline: Option<PathBuf>,
    write_baseline: Option<PathBuf>,
    explain: Option<String>,
    format: Format,
) -> CmdResult {
    if let Some(id) = explain {
        let Some(rule) = Rule::from_id(&id) else {
            return Err(Failure::infra(format!(
                "unknown rule '{id}' (rules are ADVM001 through ADVM007)"
            )));
        };
        println!("{id}: {}", rule.message());
        println!();
        println!("{}", rule.explain());
        return Ok(0);
    }

    let layout = discover(root)?;
    let report = lint::lint(&layout).map_err(Failure::infra)?;

    for env in envs {
        if layout.env(env).is_none() {
            return Err(Failure::infra(format!("no environment named '{env}'")));
        }
    }
    let mut report = report;
    if !envs.is_empty() {
        report
            .diagnostics
            .retain(|d| first_component(&d.path).is_some_and(|c| envs.contains(&c)));
    }

    if let Some(path) = write_baseline {
        let baseline = Baseline::from_diagnostics(&report.diagnostics);
        fs::write(&path, baseline.to_text())
            .map_err(|e| Failure::infra(format!("cannot write {}: {e}", path.display())))?;
        eprintln!(
            "wrote {} fingerprints to {}",
            baseline.len(),
            path.display()
        );
        return Ok(0);
    }

    if let Some(path) = baseline {
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::infra(format!("cannot read {}: {e}", path.display())))?;
        let baseline = Baseline::parse(&text)
            .map_err(|e| Failure::infra(format!("{}: {e}", path.display())))?;
        report = report.without_baselined(&baseline);
    }

    match format {
        Format::Human => print!("{}", report.render()),
        Format::Records => {
            for d in &report.diagnostics {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    d.rule.id(),
                    severity_word(d.severity()),
                    d.path.display(),
                    d.line,
                    d.col,
                    d.evidence
                );
            }
        }
    }
    eprintln!(
        "{} errors, {} warnings",
        report.error_count(),
        report.warning_count()
    );

    let blocking = report.error_count() > 0 || (strict && report.warning_count() > 0);
    Ok(if blocking { 2 } else { 0 })
}

fn severity_word(severity: Severity) -> &'static str {
    match severity {
        Severity::Error => "error",
        Severity::Warning => "warning",
    }
}

fn first_component(path: &Path) -> Option<String> {
    path.components()
        .next()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
}

// --------------------------------------------------------- resolve and run

/// Load the selection's target config if it exists, and fold its extra
/// defines into the selection. `required` decides whether a missing config
/// is an error (running needs the cycle budget; resolving does not).
fn selection_with_target_defines(
    root: &Path,
    mut selection: Selection,
    required: bool,
) -> Result<(Selection, Option<sim::TargetSpec>), Failure> {
    match sim::load_target(root, &selection.target) {
        Ok(target) => {
            selection.extra_defines.extend(target.defines.clone());
            Ok((selection, Some(target)))
        }
        Err(sim::SpecError::NotFound { .. }) if !required => Ok((selection, None)),
        Err(e) => Err(Failure::infra(e)),
    }
}

fn cmd_resolve(
    root: &Path,
    file: &Path,
    derivative: Option<String>,
    target: Option<String>,
    env_var: &impl Fn(&str) -> Option<String>,
) -> CmdResult {
    let layout = discover(root)?;
    let selection = pick_selection(derivative, target, &layout.config, env_var)?;
    let (selection, _) = selection_with_target_defines(root, selection, false)?;
    let resolver = Resolver::new(root)
        .map_err(Failure::infra)?
        .with_layout(&layout);
    let resolution = resolver.resolve(file, &selection).map_err(Failure::infra)?;
    print!("{}", resolution.program.listing());
    Ok(0)
}

fn cmd_run(
    root: &Path,
    file: &Path,
    derivative: Option<String>,
    target: Option<String>,
    trace: bool,
    env_var: &impl Fn(&str) -> Option<String>,
) -> CmdResult {
    let layout = discover(root)?;
    let selection = pick_selection(derivative, target, &layout.config, env_var)?;
    let derivative_spec =
        sim::load_derivative(root, &selection.derivative).map_err(Failure::infra)?;
    let (selection, target_spec) = selection_with_target_defines(root, selection, true)?;
    let target_spec = target_spec.expect("required target config was loaded");

    let resolver = Resolver::new(root)
        .map_err(Failure::infra)?
        .with_layout(&layout);
    let resolution = resolver.resolve(file, &selection).map_err(Failure::infra)?;

    let report = if trace {
        let (report, steps) = sim::run_traced(&resolution.program, &derivative_spec, &target_spec);
        for step in steps {
            println!("{step}");
        }
        report
    } else {
        sim::run(&resolution.program, &derivative_spec, &target_spec)
    };
    print!("{}", report.render());
    Ok(if report.verdict.is_pass() { 0 } else { 1 })
}

// ----------------------------------------------------------------- release

fn cmd_release(root: &Path, env: Option<String>, check: bool) -> CmdResult {
    let layout = discover(root)?;

    if let Some(env) = env {
        if layout.env(&env).is_none() {
            return Err(Failure::infra(format!("no environment named '{env}'")));
        }
        let label = release::compute_env_label(&layout, &env).map_err(Failure::infra)?;
        println!("env {} {}", label.env, label.digest);
        return Ok(0);
    }

    if check {
        let Some((lock, manifest)) = release::read_release(root).map_err(Failure::infra)? else {
            return Err(Failure::infra(format!(
                "no {} at {} (run `advm release` first)",
                release::RELEASE_LOCK,
                root.display()
            )));
        };
        let drift =
            release::check_frozen(&layout, &lock, manifest.as_ref()).map_err(Failure::infra)?;
        return if drift.is_clean() {
            println!("release label is current");
            Ok(0)
        } else {
            print!("{}", drift.render());
            Ok(1)
        };
    }

    let report = lint::lint(&layout).map_err(Failure::infra)?;
    let label = match release::label_system(&layout, &report.diagnostics) {
        Ok(label) => label,
        Err(e @ release::ReleaseError::LintErrorsPresent { .. }) => {
            eprint!("{}", report.render());
            return Err(Failure {
                code: 2,
                message: e.to_string(),
            });
        }
        Err(e) => return Err(Failure::infra(e)),
    };
    let manifest = release::compute_manifest(&layout).map_err(Failure::infra)?;
    release::write_release(root, &label, &manifest).map_err(Failure::infra)?;
    print!("{}", label.to_lock_text());
    Ok(0)
}

// ----------------------------------------------------------------- regress

#[allow(clippy::too_many_arguments)]
fn cmd_regress(
    root: &Path,
    derivative: Option<String>,
    target: Option<String>,
    envs: &[String],
    jobs: usize,
    frozen: bool,
    format: Format,
    env_var: &impl Fn(&str) -> Option<String>,
) -> CmdResult {
    let layout = discover(root)?;
    let selection = pick_selection(derivative, target, &layout.config, env_var)?;

    let mut cases = regression::plan(&layout, None).map_err(Failure::infra)?;
    if !envs.is_empty() {
        for env in envs {
            if layout.env(env).is_none() {
                return Err(Failure::infra(format!("no environment named '{env}'")));
            }
        }
        cases.retain(|c| envs.contains(&c.env));
    }

    let config = RunConfig {
        selection,
        parallelism: jobs,
        frozen,
    };
    let summary = regression::execute(&layout, &cases, &config).map_err(Failure::infra)?;

    match format {
        Format::Human => print!("{}", summary.render_human()),
        Format::Records => print!("{}", summary.records_text()),
    }
    Ok(if summary.all_passed() { 0 } else { 1 })
}
