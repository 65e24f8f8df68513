//! Batch execution: every test cell of every environment under one
//! selection.
//!
//! The unit of regression is the test cell; its entry file is always
//! `src/test.asm`. Cells run in parallel, but the summary is sorted by
//! environment and cell so two runs of the same tree compare line-for-line.
//! Infrastructure problems inside one cell (unresolvable include, missing
//! entry file) degrade to a trap verdict on that cell instead of aborting
//! the batch — a regression run answers for every cell, one way or another.
//!
//! With `frozen` set, the tree is first compared against `release.lock`;
//! any drift aborts the run, because results from a half-edited tree would
//! be attributed to the frozen label.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::env_model::SystemLayout;
use crate::preprocessor::{Resolver, Selection};
use crate::release::{self, ReleaseError};
use crate::sim::{self, RunReport, SpecError, Verdict};

/// Entry file of every test cell, relative to the cell directory.
pub const CELL_ENTRY: &str = "src/test.asm";

/// One cell scheduled to run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub env: String,
    pub cell: String,
    /// Root-relative entry file.
    pub entry: PathBuf,
}

/// One cell's outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestResult {
    pub env: String,
    pub cell: String,
    pub report: RunReport,
}

/// Verdict counts across a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub passed: usize,
    pub failed: usize,
    pub timed_out: usize,
    pub trapped: usize,
}

impl std::fmt::Display for Tally {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} passed, {} failed, {} timed out, {} trapped",
            self.passed, self.failed, self.timed_out, self.trapped
        )
    }
}

/// The outcome of a regression run.
#[derive(Debug, Clone)]
pub struct RegressionSummary {
    pub selection: Selection,
    /// Sorted by environment, then cell.
    pub results: Vec<TestResult>,
    /// Informational only — never part of any comparable output.
    pub wall_time: Duration,
}

impl RegressionSummary {
    pub fn tally(&self) -> Tally {
        let mut tally = Tally::default();
        for result in &self.results {
            match result.report.verdict {
                Verdict::Pass => tally.passed += 1,
                Verdict::Fail => tally.failed += 1,
                Verdict::Timeout => tally.timed_out += 1,
                Verdict::Trap => tally.trapped += 1,
            }
        }
        tally
    }

    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.report.verdict.is_pass())
    }

    /// Machine-comparable records: one tab-separated line per cell —
    /// env, cell, verdict, cycles, site (`-` when the run has none).
    /// Deliberately excludes wall time so reruns diff clean.
    pub fn records_text(&self) -> String {
        let mut out = String::new();
        for result in &self.results {
            let site = result
                .report
                .site
                .as_ref()
                .map(|s| s.to_string())
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                result.env, result.cell, result.report.verdict, result.report.cycles, site
            ));
        }
        out
    }

    /// Human form: one line per cell plus a closing tally.
    pub fn render_human(&self) -> String {
        let mut out = String::new();
        for result in &self.results {
            let tag = match result.report.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Timeout => "TIMEOUT",
                Verdict::Trap => "TRAP",
            };
            out.push_str(&format!(
                "{tag} {}/{} ({} cycles)",
                result.env, result.cell, result.report.cycles
            ));
            if !result.report.verdict.is_pass() {
                if let Some(site) = &result.report.site {
                    out.push_str(&format!(" at {site}"));
                }
                out.push_str(&format!(" — {}", result.report.detail));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "{} (derivative {}, target {}) in {:.2}s\n",
            self.tally(),
            self.selection.derivative,
            self.selection.target,
            self.wall_time.as_secs_f64()
        ));
        out
    }
}

/// A regression run could not start (per-cell problems become trap results
/// instead).
#[derive(Debug, thiserror::Error)]
pub enum RegressionError {
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Release(#[from] ReleaseError),
    #[error("frozen run requested but there is no {lock} at the root", lock = release::RELEASE_LOCK)]
    MissingLock,
    #[error("tree drifted from the frozen label:\n{0}")]
    FrozenDriftDetected(String),
    #[error("cannot build a thread pool: {0}")]
    ThreadPool(String),
}

/// Enumerate the cells to run, sorted by environment and cell. With a
/// filter, only that environment's cells are planned.
pub fn plan(
    layout: &SystemLayout,
    env_filter: Option<&str>,
) -> Result<Vec<TestCase>, RegressionError> {
    if let Some(name) = env_filter {
        if layout.env(name).is_none() {
            return Err(RegressionError::UnknownEnv(name.to_string()));
        }
    }
    let mut cases = Vec::new();
    for env in &layout.envs {
        if env_filter.is_some_and(|f| f != env.name) {
            continue;
        }
        for cell in &env.cells {
            cases.push(TestCase {
                env: env.name.clone(),
                cell: cell.name.clone(),
                entry: cell.dir.join(CELL_ENTRY),
            });
        }
    }
    cases.sort_by(|a, b| (&a.env, &a.cell).cmp(&(&b.env, &b.cell)));
    Ok(cases)
}

/// Knobs for [`execute`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub selection: Selection,
    /// Worker threads; 0 picks a sensible default.
    pub parallelism: usize,
    /// Require the tree to match `release.lock` before running.
    pub frozen: bool,
}

/// A run report for a cell that never reached the machine.
fn infra_trap(detail: String) -> RunReport {
    RunReport {
        verdict: Verdict::Trap,
        site: None,
        expected: None,
        actual: None,
        cycles: 0,
        mmio: Vec::new(),
        detail,
    }
}

/// Run the planned cases under one selection.
pub fn execute(
    layout: &SystemLayout,
    cases: &[TestCase],
    config: &RunConfig,
) -> Result<RegressionSummary, RegressionError> {
    if config.frozen {
        let Some((lock, manifest)) = release::read_release(&layout.root)? else {
            return Err(RegressionError::MissingLock);
        };
        let drift = release::check_frozen(layout, &lock, manifest.as_ref())?;
        if !drift.is_clean() {
            return Err(RegressionError::FrozenDriftDetected(drift.render()));
        }
    }

    let derivative = sim::load_derivative(&layout.root, &config.selection.derivative)?;
    let target = sim::load_target(&layout.root, &config.selection.target)?;
    let mut selection = config.selection.clone();
    selection.extra_defines.extend(target.defines.clone());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| RegressionError::ThreadPool(e.to_string()))?;

    let started = Instant::now();
    let mut results: Vec<TestResult> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let report = run_case(layout, case, &selection, &derivative, &target);
                TestResult {
                    env: case.env.clone(),
                    cell: case.cell.clone(),
                    report,
                }
            })
            .collect()
    });
    let wall_time = started.elapsed();

    results.sort_by(|a, b| (&a.env, &a.cell).cmp(&(&b.env, &b.cell)));
    Ok(RegressionSummary {
        selection,
        results,
        wall_time,
    })
}

fn run_case(
    layout: &SystemLayout,
    case: &TestCase,
    selection: &Selection,
    derivative: &sim::DerivativeSpec,
    target: &sim::TargetSpec,
) -> RunReport {
    let resolver = match Resolver::new(&layout.root) {
        Ok(resolver) => resolver.with_layout(layout),
        Err(e) => return infra_trap(e.to_string()),
    };
    match resolver.resolve(&case.entry, selection) {
        Ok(resolution) => sim::run(&resolution.program, derivative, target),
        Err(e) => infra_trap(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_model::discover;
    use crate::lint::lint;
    use std::path::Path;

    fn write(root: &Path, rel: &str, content: &str) {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, content).unwrap();
    }

    fn sample_tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write(root, "advm.cfg", "[derivatives]\nnames = A\n");
        write(root, "derivative_A.cfg", "[derivative]\nname = A\n");
        write(
            root,
            "target_GRM.cfg",
            "[target]\nname = GRM\nmax_cycles = 1000\n",
        );
        write(root, "pages/test_plan.txt", "plan\n");
        write(
            root,
            "pages/Abstraction_Layer/globals.inc",
            "#define WIDTH 5\n",
        );
        write(
            root,
            "pages/test_width/src/test.asm",
            "#include \"../../Abstraction_Layer/globals.inc\"\n\
             \x20   mov d0, WIDTH\n\
             \x20   expect d0, WIDTH\n\
             \x20   pass\n",
        );
        write(
            root,
            "pages/test_mismatch/src/test.asm",
            "#include \"../../Abstraction_Layer/globals.inc\"\n\
             \x20   mov d0, WIDTH\n\
             \x20   shl d0, 1\n\
             \x20   expect d0, WIDTH\n\
             \x20   pass\n",
        );
        dir
    }

    fn run_tree(dir: &tempfile::TempDir, parallelism: usize) -> RegressionSummary {
        let layout = discover(dir.path()).unwrap();
        let cases = plan(&layout, None).unwrap();
        execute(
            &layout,
            &cases,
            &RunConfig {
                selection: Selection::new("A", "GRM"),
                parallelism,
                frozen: false,
            },
        )
        .unwrap()
    }

    #[test]
    fn planning_enumerates_cells_sorted() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let cases = plan(&layout, None).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].cell, "test_mismatch");
        assert_eq!(cases[1].cell, "test_width");
        assert_eq!(
            cases[0].entry,
            PathBuf::from("pages/test_mismatch/src/test.asm")
        );

        assert_eq!(plan(&layout, Some("pages")).unwrap().len(), 2);
        assert!(matches!(
            plan(&layout, Some("nope")),
            Err(RegressionError::UnknownEnv(_))
        ));
    }

    #[test]
    fn a_batch_reports_every_cell_in_order() {
        let dir = sample_tree();
        let summary = run_tree(&dir, 1);
        assert_eq!(summary.results.len(), 2);
        let tally = summary.tally();
        assert_eq!((tally.passed, tally.failed), (1, 1));
        assert!(!summary.all_passed());
        // Three instructions each: the include contributes none.
        assert_eq!(
            summary.records_text(),
            "pages\ttest_mismatch\tfail\t3\tpages/test_mismatch/src/test.asm:4\n\
             pages\ttest_width\tpass\t3\tpages/test_width/src/test.asm:4\n"
        );
    }

    #[test]
    fn records_are_identical_across_parallelism_levels() {
        let dir = sample_tree();
        let serial = run_tree(&dir, 1).records_text();
        let parallel = run_tree(&dir, 4).records_text();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn broken_cells_trap_instead_of_aborting_the_batch() {
        let dir = sample_tree();
        // A cell whose entry file is missing entirely.
        std::fs::create_dir_all(dir.path().join("pages/test_empty/src")).unwrap();
        write(dir.path(), "pages/test_empty/src/keep.txt", "placeholder\n");
        let summary = run_tree(&dir, 1);
        assert_eq!(summary.results.len(), 3);
        let broken = &summary.results[0];
        assert_eq!(broken.cell, "test_empty");
        assert_eq!(broken.report.verdict, Verdict::Trap);
        assert!(broken.report.detail.contains("test.asm"));
        // The healthy cells still ran.
        assert_eq!(summary.tally().passed, 1);
    }

    #[test]
    fn target_defines_reach_resolution() {
        let dir = sample_tree();
        write(
            dir.path(),
            "target_RTL.cfg",
            "[target]\nname = RTL\nmax_cycles = 1000\n[defines]\nRTL_STRICT = 1\n",
        );
        write(
            dir.path(),
            "pages/test_strict/src/test.asm",
            "#ifdef RTL_STRICT\n\
             \x20   mov d0, 1\n\
             #else\n\
             \x20   mov d0, 0\n\
             #endif\n\
             \x20   expect d0, 1\n\
             \x20   pass\n",
        );
        let layout = discover(dir.path()).unwrap();
        let cases = plan(&layout, None).unwrap();
        let on_rtl = execute(
            &layout,
            &cases,
            &RunConfig {
                selection: Selection::new("A", "RTL"),
                parallelism: 1,
                frozen: false,
            },
        )
        .unwrap();
        let strict = on_rtl
            .results
            .iter()
            .find(|r| r.cell == "test_strict")
            .unwrap();
        assert_eq!(strict.report.verdict, Verdict::Pass);

        let on_grm = execute(
            &layout,
            &cases,
            &RunConfig {
                selection: Selection::new("A", "GRM"),
                parallelism: 1,
                frozen: false,
            },
        )
        .unwrap();
        let strict = on_grm
            .results
            .iter()
            .find(|r| r.cell == "test_strict")
            .unwrap();
        assert_eq!(strict.report.verdict, Verdict::Fail);
    }

    #[test]
    fn frozen_runs_require_a_clean_lock() {
        let dir = sample_tree();
        let layout = discover(dir.path()).unwrap();
        let cases = plan(&layout, None).unwrap();
        let frozen_config = RunConfig {
            selection: Selection::new("A", "GRM"),
            parallelism: 1,
            frozen: true,
        };

        // No lock at all.
        assert!(matches!(
            execute(&layout, &cases, &frozen_config),
            Err(RegressionError::MissingLock)
        ));

        // Freeze, then run clean.
        let report = lint(&layout).unwrap();
        let label = crate::release::label_system(&layout, &report.diagnostics).unwrap();
        let manifest = crate::release::compute_manifest(&layout).unwrap();
        crate::release::write_release(dir.path(), &label, &manifest).unwrap();
        assert!(execute(&layout, &cases, &frozen_config).is_ok());

        // Drift and get refused, with the file named.
        write(
            dir.path(),
            "pages/Abstraction_Layer/globals.inc",
            "#define WIDTH 6\n",
        );
        let layout = discover(dir.path()).unwrap();
        match execute(&layout, &cases, &frozen_config) {
            Err(RegressionError::FrozenDriftDetected(report)) => {
                assert!(
                    report.contains("pages/Abstraction_Layer/globals.inc"),
                    "{report}"
                );
            }
            other => panic!("expected drift, got {other:?}"),
        }
    }
}
