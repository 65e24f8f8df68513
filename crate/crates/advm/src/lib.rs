//! Tooling for assembler-driven verification: directed, self-checking
//! assembler tests kept portable across chip derivatives and execution
//! targets by routing every device-specific detail through a per-environment
//! abstraction layer.
//!
//! A verification tree looks like this (`fixtures/demo_tree` is a working
//! one):
//!
//! ```text
//! advm.cfg                      system config: global dirs, derivatives, defaults
//! derivative_A.cfg              device register map for derivative A
//! target_GRM.cfg                execution target: cycle budget, extra defines
//! global_lib/                   shared code owned outside verification
//! page_ctrl/                    one test environment
//! ├── test_plan.txt             what the environment covers, greppable
//! ├── Abstraction_Layer/
//! │   ├── globals.inc           Global Defines: a name for every value
//! │   └── base_functions.asm    wrappers around device and global code
//! └── test_page_write/          one test cell
//!     └── src/test.asm          the directed test
//! ```
//!
//! Tests reach values and procedures only through the abstraction layer, so
//! porting to a new derivative or a new target edits `globals.inc` and
//! `base_functions.asm` — never the tests themselves.
//!
//! The pipeline: [`env_model`] discovers and classifies the tree,
//! [`preprocessor`] expands one test under a derivative/target
//! [`Selection`](preprocessor::Selection) into a flat program, [`sim`] runs
//! it against the derivative's register map, [`lint`] enforces the layering,
//! [`release`] freezes content labels for reproducible regression, and
//! [`regression`] runs every cell in parallel. [`cli`] wires all of it into
//! the `advm` binary.
//!
//! ```
//! use advm::preprocessor::{Resolver, Selection};
//! use advm::{env_model, sim};
//! use std::path::Path;
//!
//! let root = Path::new("fixtures/demo_tree");
//! let layout = env_model::discover(root)?;
//! let resolver = Resolver::new(root)?.with_layout(&layout);
//! let entry = Path::new("page_ctrl/test_page_write/src/test.asm");
//! let program = resolver.resolve(entry, &Selection::new("A", "GRM"))?.program;
//!
//! let derivative = sim::load_derivative(root, "A")?;
//! let target = sim::load_target(root, "GRM")?;
//! let report = sim::run(&program, &derivative, &target);
//! assert!(report.verdict.is_pass());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! The `examples/` directory walks each stage against the bundled fixtures
//! (`cargo run -p advm --example resolve_test`):
//!
//! - **`parse_and_eval`** — dialect parsing and constant-expression evaluation
//! - **`resolve_test`** — one test resolved under two derivatives
//! - **`lint_tree`** — layering diagnostics on a tree that breaks the rules
//! - **`simulate`** — traced execution against two register maps
//! - **`release_flow`** — labels, lock files, and drift detection
//! - **`regression_flow`** — planning and running every cell of a tree
//! - **`porting_scenarios`** — derivative ports and a global-function change,
//!   absorbed without touching a test

pub mod cli;
pub mod config;
pub mod dialect;
pub mod env_model;
pub mod lint;
pub mod preprocessor;
pub mod regression;
pub mod release;
pub mod sim;
