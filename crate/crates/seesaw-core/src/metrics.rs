//! Call metering and run reporting.
//!
//! Every backend call, including failed ones, lands in the [`CallLedger`]
//! as one [`CallRecord`]. Reports, CSV series, and charts are all derived
//! from the ledger with plain integer arithmetic, so the report's token
//! total always equals the sum over the ledger exactly.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, CompletionResult, Phase};
use crate::engine::{GroupOutcome, RunMode};
use crate::workspace::Workspace;

/// Row label used for token totals in the comparison table.
pub const TOKEN_ROW_LABEL: &str = "Token Usage (Tokens)";
/// Row label used for execution time in the comparison table.
pub const TIME_ROW_LABEL: &str = "Execution Time (Seconds)";

/// How lines are counted for the per-file report.
pub const LOC_RULE: &str = "non-blank lines (lines containing at least one non-whitespace character)";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("call seq {seq} already used or out of order")]
    DuplicateSeq { seq: u64 },
    #[error("the call ledger is empty")]
    EmptyLedger,
    #[error("CSV parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One metered backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub phase: Phase,
    pub path: Option<String>,
    pub round: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub started_at_s: f64,
    pub latency_s: f64,
    pub error: Option<String>,
}

/// Append-only record of every call in a run. Sequence numbers are strictly
/// increasing; records are immutable once appended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallLedger {
    records: Vec<CallRecord>,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, record: CallRecord) -> Result<(), MetricsError> {
        if let Some(last) = self.records.last() {
            if record.seq <= last.seq {
                return Err(MetricsError::DuplicateSeq { seq: record.seq });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.total_tokens).sum()
    }
}

/// Wraps a backend so every call, successes and failures alike, produces
/// exactly one ledger record carrying the request tags and the provider's
/// usage numbers. Failed calls are recorded with an error flag and zero
/// tokens.
pub struct MeteredBackend<'a> {
    backend: &'a dyn CompletionBackend,
    ledger: RefCell<CallLedger>,
    epoch: Instant,
}

impl<'a> MeteredBackend<'a> {
    pub fn new(backend: &'a dyn CompletionBackend) -> Self {
        Self {
            backend,
            ledger: RefCell::new(CallLedger::new()),
            epoch: Instant::now(),
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let started_at_s = self.epoch.elapsed().as_secs_f64();
        let call_started = Instant::now();
        let result = self.backend.complete(request);
        let (prompt, completion, latency_s, error) = match &result {
            Ok(r) => (r.prompt_tokens, r.completion_tokens, r.latency_s, None),
            Err(e) => (0, 0, call_started.elapsed().as_secs_f64(), Some(e.to_string())),
        };
        let mut ledger = self.ledger.borrow_mut();
        let seq = ledger.next_seq();
        ledger
            .record(CallRecord {
                seq,
                phase: request.tags.phase,
                path: request.tags.path.clone(),
                round: request.tags.round,
                prompt_tokens: prompt,
                completion_tokens: completion,
                total_tokens: prompt + completion,
                started_at_s,
                latency_s,
                error,
            })
            .expect("internally assigned seq is strictly increasing");
        result
    }

    pub fn calls_so_far(&self) -> usize {
        self.ledger.borrow().len()
    }

    pub fn into_ledger(self) -> CallLedger {
        self.ledger.into_inner()
    }
}

/// Aggregated view of one run, derived entirely from the ledger plus the
/// per-group outcomes. Serializes deterministically (fixed field order,
/// sorted maps), so re-exporting the same report is byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    /// Sum over every recorded call, all phases included.
    pub total_tokens: u64,
    /// see + saw tokens only.
    pub generation_tokens: u64,
    pub validation_tokens: u64,
    pub tree_tokens: u64,
    /// Measured wall time, floored at the longest single call latency.
    pub wall_time_s: f64,
    /// Sum of per-call latencies (for scripted runs, the simulated time).
    pub backend_time_s: f64,
    pub per_phase_tokens: BTreeMap<String, u64>,
    pub per_directory_tokens: BTreeMap<String, u64>,
    pub per_round_tokens: Vec<(u32, u64)>,
    pub per_round_time_s: Vec<(u32, f64)>,
    pub group_outcomes: Vec<GroupOutcome>,
    pub loc_rule: Option<String>,
    pub loc_by_file: Option<BTreeMap<String, usize>>,
    pub calls: Vec<CallRecord>,
}

/// Roll a ledger up into a [`RunReport`].
pub fn summarize(
    ledger: &CallLedger,
    outcomes: &[GroupOutcome],
    mode: RunMode,
    wall_time_s: f64,
    loc_by_file: Option<BTreeMap<String, usize>>,
) -> Result<RunReport, MetricsError> {
    if ledger.is_empty() {
        return Err(MetricsError::EmptyLedger);
    }
    let records = ledger.records();

    let mut per_phase_tokens: BTreeMap<String, u64> =
        Phase::ALL.iter().map(|p| (p.as_str().to_owned(), 0)).collect();
    let mut per_directory_tokens: BTreeMap<String, u64> = BTreeMap::new();
    let mut per_round_tokens: BTreeMap<u32, u64> = BTreeMap::new();
    let mut per_round_time: BTreeMap<u32, f64> = BTreeMap::new();
    let mut backend_time_s = 0.0;
    let mut max_latency: f64 = 0.0;

    for record in records {
        *per_phase_tokens
            .get_mut(record.phase.as_str())
            .expect("all phases pre-seeded") += record.total_tokens;
        let dir_key = match &record.path {
            Some(path) => path.split('/').next().unwrap_or(path).to_owned(),
            None => "(run)".to_owned(),
        };
        *per_directory_tokens.entry(dir_key).or_insert(0) += record.total_tokens;
        *per_round_tokens.entry(record.round).or_insert(0) += record.total_tokens;
        *per_round_time.entry(record.round).or_insert(0.0) += record.latency_s;
        backend_time_s += record.latency_s;
        max_latency = max_latency.max(record.latency_s);
    }

    Ok(RunReport {
        mode,
        total_tokens: ledger.total_tokens(),
        generation_tokens: per_phase_tokens["see"] + per_phase_tokens["saw"],
        validation_tokens: per_phase_tokens["validate"],
        tree_tokens: per_phase_tokens["tree"],
        wall_time_s: wall_time_s.max(max_latency),
        backend_time_s,
        per_phase_tokens,
        per_directory_tokens,
        per_round_tokens: per_round_tokens.into_iter().collect(),
        per_round_time_s: per_round_time.into_iter().collect(),
        group_outcomes: outcomes.to_vec(),
        loc_rule: loc_by_file.as_ref().map(|_| LOC_RULE.to_owned()),
        loc_by_file,
        calls: records.to_vec(),
    })
}

/// The CSV series a report can be exported as.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    /// One row per call: the full ledger.
    Calls,
    /// Tokens summed per round.
    PerIterationTokens,
    /// Cumulative tokens against cumulative backend time, one row per call.
    TokensOverTime,
    /// Token breakdown by phase and by top-level directory.
    PerPhase,
}

impl CsvKind {
    pub const ALL: [CsvKind; 4] = [
        CsvKind::Calls,
        CsvKind::PerIterationTokens,
        CsvKind::TokensOverTime,
        CsvKind::PerPhase,
    ];

    /// Stable file-name stem for this series.
    pub fn stem(self) -> &'static str {
        match self {
            CsvKind::Calls => "calls",
            CsvKind::PerIterationTokens => "per_iteration_tokens",
            CsvKind::TokensOverTime => "tokens_over_time",
            CsvKind::PerPhase => "per_phase",
        }
    }
}

const CALLS_HEADER: [&str; 10] = [
    "seq",
    "phase",
    "path",
    "round",
    "prompt_tokens",
    "completion_tokens",
    "total_tokens",
    "started_at_s",
    "latency_s",
    "error",
];

/// Render one CSV series from a report. Deterministic: same report, same
/// bytes.
pub fn render_csv(report: &RunReport, kind: CsvKind) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    match kind {
        CsvKind::Calls => {
            writer.write_record(CALLS_HEADER).expect("in-memory write");
            for r in &report.calls {
                writer
                    .write_record([
                        r.seq.to_string(),
                        r.phase.as_str().to_owned(),
                        r.path.clone().unwrap_or_default(),
                        r.round.to_string(),
                        r.prompt_tokens.to_string(),
                        r.completion_tokens.to_string(),
                        r.total_tokens.to_string(),
                        r.started_at_s.to_string(),
                        r.latency_s.to_string(),
                        r.error.clone().unwrap_or_default(),
                    ])
                    .expect("in-memory write");
            }
        }
        CsvKind::PerIterationTokens => {
            writer.write_record(["round", "total_tokens"]).expect("in-memory write");
            for (round, tokens) in &report.per_round_tokens {
                writer
                    .write_record([round.to_string(), tokens.to_string()])
                    .expect("in-memory write");
            }
        }
        CsvKind::TokensOverTime => {
            writer
                .write_record(["elapsed_s", "cumulative_tokens"])
                .expect("in-memory write");
            let mut elapsed = 0.0f64;
            let mut cumulative = 0u64;
            for r in &report.calls {
                elapsed += r.latency_s;
                cumulative += r.total_tokens;
                writer
                    .write_record([elapsed.to_string(), cumulative.to_string()])
                    .expect("in-memory write");
            }
        }
        CsvKind::PerPhase => {
            writer
                .write_record(["category_kind", "category", "total_tokens"])
                .expect("in-memory write");
            for phase in Phase::ALL {
                let tokens = report.per_phase_tokens.get(phase.as_str()).copied().unwrap_or(0);
                writer
                    .write_record(["phase".to_owned(), phase.as_str().to_owned(), tokens.to_string()])
                    .expect("in-memory write");
            }
            for (dir, tokens) in &report.per_directory_tokens {
                writer
                    .write_record(["directory".to_owned(), dir.clone(), tokens.to_string()])
                    .expect("in-memory write");
            }
        }
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn export_csv(report: &RunReport, kind: CsvKind, path: &Path) -> Result<(), MetricsError> {
    std::fs::write(path, render_csv(report, kind))?;
    Ok(())
}

/// Parse a calls CSV back into records. Numeric fields round-trip exactly
/// (integers verbatim; floats via shortest-representation formatting).
pub fn parse_calls_csv(text: &str) -> Result<Vec<CallRecord>, MetricsError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    {
        let headers = reader
            .headers()
            .map_err(|e| MetricsError::CsvParse { line: 1, reason: e.to_string() })?;
        if headers.iter().ne(CALLS_HEADER.iter().copied()) {
            return Err(MetricsError::CsvParse {
                line: 1,
                reason: format!("unexpected header: {headers:?}"),
            });
        }
    }
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| MetricsError::CsvParse { line, reason: e.to_string() })?;
        let field = |i: usize| -> Result<&str, MetricsError> {
            row.get(i).ok_or_else(|| MetricsError::CsvParse {
                line,
                reason: format!("missing column {i}"),
            })
        };
        fn parse<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, MetricsError>
        where
            T::Err: std::fmt::Display,
        {
            s.parse().map_err(|e| MetricsError::CsvParse {
                line,
                reason: format!("{what}: {e}"),
            })
        }
        let phase_str = field(1)?;
        let phase = Phase::parse(phase_str).ok_or_else(|| MetricsError::CsvParse {
            line,
            reason: format!("unknown phase {phase_str:?}"),
        })?;
        let opt = |s: &str| if s.is_empty() { None } else { Some(s.to_owned()) };
        records.push(CallRecord {
            seq: parse(field(0)?, line, "seq")?,
            phase,
            path: opt(field(2)?),
            round: parse(field(3)?, line, "round")?,
            prompt_tokens: parse(field(4)?, line, "prompt_tokens")?,
            completion_tokens: parse(field(5)?, line, "completion_tokens")?,
            total_tokens: parse(field(6)?, line, "total_tokens")?,
            started_at_s: parse(field(7)?, line, "started_at_s")?,
            latency_s: parse(field(8)?, line, "latency_s")?,
            error: opt(field(9)?),
        });
    }
    Ok(records)
}

/// Count non-blank lines per generated file. The counting rule is
/// [`LOC_RULE`] and is embedded in every report that carries LOC data.
pub fn loc_report(workspace: &Workspace) -> BTreeMap<String, usize> {
    workspace
        .generated()
        .map(|unit| {
            let loc = unit
                .content
                .lines()
                .filter(|line| !line.trim().is_empty())
                .count();
            (unit.path.clone(), loc)
        })
        .collect()
}
