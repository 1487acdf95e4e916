//! Command implementations. Exit codes are a stable contract:
//! 0 success, 1 configuration error, 2 parse error, 3 backend failure,
//! 4 non-convergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use seesaw_core::backend::{
    BackendError, CompletionBackend, HttpBackend, HttpBackendConfig, ScriptedBackend,
};
use seesaw_core::engine::{execute_seesaw, execute_standard, EngineError, GroupStatus, RunMode};
use seesaw_core::metrics::{
    self, parse_calls_csv, render_csv, CallLedger, CsvKind, MeteredBackend, RunReport,
};
use seesaw_core::svg::{self, CategorySeries, Series};
use seesaw_core::tree::{designate_mains, generate_tree_text, parse_tree, render_tree};
use seesaw_core::workspace::Workspace;

use crate::config::{BackendChoice, ResolvedRun};
use crate::format::{comparison_table, mode_label};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_NONCONVERGED: i32 = 4;

fn build_backend(choice: &BackendChoice, cap: u32) -> Result<Box<dyn CompletionBackend>, i32> {
    match choice {
        BackendChoice::Script { script } => match ScriptedBackend::load_script(script) {
            Ok(backend) => Ok(Box::new(backend.with_cap(cap))),
            Err(e @ BackendError::ScriptParse { .. }) => {
                eprintln!("error: {e}");
                Err(EXIT_PARSE)
            }
            Err(e) => {
                eprintln!("error: cannot load script {}: {e}", script.display());
                Err(EXIT_CONFIG)
            }
        },
        BackendChoice::Http { base_url, model } => {
            let mut config = HttpBackendConfig::new(base_url.clone(), model.clone());
            config.cap = cap;
            match HttpBackend::from_env(config) {
                Ok(backend) => Ok(Box::new(backend)),
                Err(e) => {
                    eprintln!("error: {e}");
                    Err(EXIT_CONFIG)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// tree
// ---------------------------------------------------------------------------

pub fn cmd_tree_parse(tree_path: &Path) -> i32 {
    let text = match fs::read_to_string(tree_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", tree_path.display());
            return EXIT_CONFIG;
        }
    };
    match parse_tree(&text) {
        Ok(tree) => {
            println!("files={} dirs={}", tree.file_count(), tree.dir_count());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_PARSE
        }
    }
}

pub fn cmd_tree_render(tree_path: &Path, out: Option<&Path>) -> i32 {
    let text = match fs::read_to_string(tree_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", tree_path.display());
            return EXIT_CONFIG;
        }
    };
    let tree = match parse_tree(&text) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let rendered = render_tree(&tree);
    match out {
        Some(path) => {
            if let Err(e) = fs::write(path, rendered) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
        None => print!("{rendered}"),
    }
    EXIT_OK
}

pub fn cmd_tree_generate(choice: &BackendChoice, cap: u32, out_tree: &Path) -> i32 {
    let backend = match build_backend(choice, cap) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let session = MeteredBackend::new(backend.as_ref());
    let text = match generate_tree_text(&session) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_BACKEND;
        }
    };
    if let Err(e) = fs::write(out_tree, &text) {
        eprintln!("error: cannot write {}: {e}", out_tree.display());
        return EXIT_CONFIG;
    }
    match parse_tree(&text) {
        Ok(tree) => {
            println!(
                "wrote {} (files={} dirs={})",
                out_tree.display(),
                tree.file_count(),
                tree.dir_count()
            );
            EXIT_OK
        }
        Err(e) => {
            // The raw completion is kept on disk for inspection.
            eprintln!("error: generated listing does not parse: {e}");
            EXIT_PARSE
        }
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// Write the report JSON plus its four CSV series next to it
/// (`<stem>.calls.csv` etc.). Returns the written paths.
pub fn write_artifacts(report: &RunReport, report_path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if let Some(parent) = report_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut written = Vec::new();
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(report_path, json)?;
    written.push(report_path.to_path_buf());

    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".to_owned());
    let dir = report_path.parent().unwrap_or_else(|| Path::new(""));
    for kind in CsvKind::ALL {
        let path = dir.join(format!("{stem}.{}.csv", kind.stem()));
        fs::write(&path, render_csv(report, kind))?;
        written.push(path);
    }
    Ok(written)
}

/// Best-effort report flush for runs that die before the engine starts
/// (tree generation failure, unparseable generated tree). Only meaningful
/// once at least one call was made.
fn flush_partial(session: MeteredBackend<'_>, mode: RunMode, started: Instant, report_path: &Path) {
    let ledger = session.into_ledger();
    if ledger.is_empty() {
        return;
    }
    match metrics::summarize(&ledger, &[], mode, started.elapsed().as_secs_f64(), None) {
        Ok(report) => {
            if let Err(e) = write_artifacts(&report, report_path) {
                eprintln!("warning: could not write partial report: {e}");
            }
        }
        Err(e) => eprintln!("warning: could not summarize partial run: {e}"),
    }
}

fn engine_error_exit_code(error: &EngineError) -> i32 {
    match error {
        EngineError::Backend { .. } => EXIT_BACKEND,
        EngineError::EmptyPlan | EngineError::InvalidPolicy(_) => EXIT_CONFIG,
        EngineError::MainNotGenerated { .. } => EXIT_CONFIG,
        EngineError::Workspace(_) | EngineError::Metrics(_) => EXIT_CONFIG,
    }
}

pub fn cmd_run(run: &ResolvedRun) -> i32 {
    let backend = match build_backend(&run.backend, run.token_cap) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let session = MeteredBackend::new(backend.as_ref());
    let started = Instant::now();

    let tree_text = if run.generate_tree {
        match generate_tree_text(&session) {
            Ok(text) => {
                if let Err(e) = fs::write(&run.tree_path, &text) {
                    eprintln!("error: cannot write {}: {e}", run.tree_path.display());
                    flush_partial(session, run.mode, started, &run.report);
                    return EXIT_CONFIG;
                }
                text
            }
            Err(e) => {
                eprintln!("error: tree generation failed: {e}");
                flush_partial(session, run.mode, started, &run.report);
                return EXIT_BACKEND;
            }
        }
    } else {
        match fs::read_to_string(&run.tree_path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", run.tree_path.display());
                return EXIT_CONFIG;
            }
        }
    };

    let tree = match parse_tree(&tree_text) {
        Ok(tree) => tree,
        Err(e) => {
            eprintln!("error: {e}");
            flush_partial(session, run.mode, started, &run.report);
            return EXIT_PARSE;
        }
    };
    let plan = match designate_mains(&tree, run.main_overrides.as_ref()) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut ws = match Workspace::new(&tree, &plan, Some(&run.out)) {
        Ok(ws) => ws,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };

    let (outcomes, failure) = match run.mode {
        RunMode::Seesaw => execute_seesaw(&tree, &plan, &mut ws, &session, &run.policy),
        RunMode::Standard => execute_standard(&tree, &plan, &mut ws, &session),
    };

    let ledger = session.into_ledger();
    let loc = metrics::loc_report(&ws);
    let report = match metrics::summarize(
        &ledger,
        &outcomes,
        run.mode,
        started.elapsed().as_secs_f64(),
        Some(loc),
    ) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match write_artifacts(&report, &run.report) {
        Ok(written) => {
            print_run_summary(&report, &run.out, &written);
        }
        Err(e) => {
            eprintln!("error: cannot write report {}: {e}", run.report.display());
            return EXIT_CONFIG;
        }
    }

    if let Some(failure) = failure {
        eprintln!("error: {failure}");
        return engine_error_exit_code(&failure);
    }
    match run.mode {
        RunMode::Standard => EXIT_OK,
        RunMode::Seesaw => {
            let all_aligned = !report.group_outcomes.is_empty()
                && report
                    .group_outcomes
                    .iter()
                    .all(|o| o.status == GroupStatus::Aligned);
            if all_aligned {
                EXIT_OK
            } else {
                EXIT_NONCONVERGED
            }
        }
    }
}

fn status_word(status: GroupStatus) -> &'static str {
    match status {
        GroupStatus::Aligned => "aligned",
        GroupStatus::FixedPointUnaligned => "fixed_point_unaligned",
        GroupStatus::RoundLimit => "round_limit",
    }
}

fn print_run_summary(report: &RunReport, out_dir: &Path, written: &[PathBuf]) {
    println!("mode={}", report.mode.as_str());
    println!(
        "total_tokens={} generation_tokens={} validation_tokens={} tree_tokens={}",
        report.total_tokens, report.generation_tokens, report.validation_tokens, report.tree_tokens
    );
    println!(
        "wall_time_s={:.3} backend_time_s={:.3}",
        report.wall_time_s, report.backend_time_s
    );
    for outcome in &report.group_outcomes {
        println!(
            "group {}: {} rounds={} final_delta={:.4}",
            outcome.main_path,
            status_word(outcome.status),
            outcome.rounds_used,
            outcome.final_delta
        );
    }
    println!("workspace={}", out_dir.display());
    for path in written {
        println!("wrote {}", path.display());
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn load_report(path: &Path) -> Result<RunReport, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad report {}: {e}", path.display()))
}

pub fn cmd_report(report_paths: &[PathBuf], svg_dir: Option<&Path>) -> i32 {
    let mut reports = Vec::new();
    for path in report_paths {
        match load_report(path) {
            Ok(report) => reports.push(report),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_PARSE;
            }
        }
    }
    let refs: Vec<&RunReport> = reports.iter().collect();
    print!("{}", comparison_table(&refs));

    if let Some(dir) = svg_dir {
        if let Err(e) = write_charts(&refs, dir) {
            eprintln!("error: cannot write charts: {e}");
            return EXIT_CONFIG;
        }
        println!("charts written to {}", dir.display());
    }
    EXIT_OK
}

fn write_charts(reports: &[&RunReport], dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;

    let per_round: Vec<Series> = reports
        .iter()
        .map(|r| {
            Series::new(
                mode_label(r.mode),
                r.per_round_tokens
                    .iter()
                    .map(|(round, tokens)| (*round as f64, *tokens as f64))
                    .collect(),
            )
        })
        .collect();
    fs::write(
        dir.join("token_usage_over_iterations.svg"),
        svg::line_chart("Token Usage Over Iterations", "iteration", "tokens", &per_round),
    )?;

    let per_round_time: Vec<Series> = reports
        .iter()
        .map(|r| {
            Series::new(
                mode_label(r.mode),
                r.per_round_time_s
                    .iter()
                    .map(|(round, secs)| (*round as f64, *secs))
                    .collect(),
            )
        })
        .collect();
    fs::write(
        dir.join("execution_time_over_iterations.svg"),
        svg::line_chart(
            "Execution Time Trends Over Iterations",
            "iteration",
            "seconds",
            &per_round_time,
        ),
    )?;

    let over_time: Vec<Series> = reports
        .iter()
        .map(|r| {
            let mut elapsed = 0.0;
            let mut cumulative = 0u64;
            let points = r
                .calls
                .iter()
                .map(|c| {
                    elapsed += c.latency_s;
                    cumulative += c.total_tokens;
                    (elapsed, cumulative as f64)
                })
                .collect();
            Series::new(mode_label(r.mode), points)
        })
        .collect();
    fs::write(
        dir.join("token_usage_over_time.svg"),
        svg::line_chart("Token Usage Over Run Time", "seconds", "tokens", &over_time),
    )?;

    let categories: Vec<String> = seesaw_core::backend::Phase::ALL
        .iter()
        .map(|p| p.as_str().to_owned())
        .collect();
    let phase_series: Vec<CategorySeries> = reports
        .iter()
        .map(|r| {
            CategorySeries::new(
                mode_label(r.mode),
                categories
                    .iter()
                    .map(|phase| r.per_phase_tokens.get(phase).copied().unwrap_or(0) as f64)
                    .collect(),
            )
        })
        .collect();
    fs::write(
        dir.join("token_usage_by_phase.svg"),
        svg::bar_chart("Token Usage by Phase", &categories, &phase_series),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

pub fn cmd_replay(calls_path: &Path, mode: Option<&str>, report_out: Option<&Path>) -> i32 {
    let text = match fs::read_to_string(calls_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", calls_path.display());
            return EXIT_CONFIG;
        }
    };
    let records = match parse_calls_csv(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let mut ledger = CallLedger::new();
    for record in records {
        if let Err(e) = ledger.record(record) {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    }
    let mode = match mode {
        None => RunMode::Seesaw,
        Some(s) => match RunMode::parse(s) {
            Some(m) => m,
            None => {
                eprintln!("error: unknown mode {s:?}");
                return EXIT_CONFIG;
            }
        },
    };
    // A replay has no live clock; the sequential model's time is the sum of
    // recorded latencies.
    let wall: f64 = ledger.records().iter().map(|r| r.latency_s).sum();
    let report = match metrics::summarize(&ledger, &[], mode, wall, None) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    print!("{}", comparison_table(&[&report]));
    if let Some(path) = report_out {
        match write_artifacts(&report, path) {
            Ok(written) => {
                for p in written {
                    println!("wrote {}", p.display());
                }
            }
            Err(e) => {
                eprintln!("error: cannot write report {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_OK
}
