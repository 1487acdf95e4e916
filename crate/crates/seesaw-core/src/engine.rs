//! The alternating generation state machine and the single-pass baseline.
//!
//! Per group, one round is: update the main file (initial generation, a
//! judge rewrite, or a regeneration), then generate each dependency in order
//! with a validation gate after every one. A failed gate ends the round; at
//! every round boundary the group is snapshotted and the summed per-file
//! distance against the previous snapshot decides between carrying on,
//! stopping at a fixed point, or stopping at the round cap. A round whose
//! gates all pass ends the group aligned.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, CompletionBackend, CompletionRequest, Phase, RequestTags,
};
use crate::metrics::{self, MeteredBackend, MetricsError, RunReport};
use crate::tree::{render_tree, MainGroup, MainPlan, ProjectTree};
use crate::validator::{self, ValidationMode, Verdict};
use crate::workspace::{aggregate_delta, UnitPhase, Workspace, WorkspaceError, WorkspaceSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Seesaw,
    Standard,
}

impl RunMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "seesaw" => Some(Self::Seesaw),
            "standard" => Some(Self::Standard),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Seesaw => "seesaw",
            Self::Standard => "standard",
        }
    }
}

/// What to do when a validation gate fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisalignmentAction {
    /// Adopt the judge's corrected main file when it provided one (falling
    /// back to regeneration otherwise), then redo the dependency loop from
    /// the first dependency.
    #[default]
    AdoptRewriteThenRestart,
    /// Always regenerate the main file, then restart from the first
    /// dependency.
    RegenerateMainThenRestart,
    /// Regenerate the main file, then resume at the dependency that failed;
    /// earlier dependencies keep their contents and verdicts.
    RegenerateMainThenResume,
}

impl MisalignmentAction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adopt_rewrite_then_restart" => Some(Self::AdoptRewriteThenRestart),
            "regenerate_main_then_restart" => Some(Self::RegenerateMainThenRestart),
            "regenerate_main_then_resume" => Some(Self::RegenerateMainThenResume),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AdoptRewriteThenRestart => "adopt_rewrite_then_restart",
            Self::RegenerateMainThenRestart => "regenerate_main_then_restart",
            Self::RegenerateMainThenResume => "regenerate_main_then_resume",
        }
    }
}

/// Knobs governing when a group's iteration stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    /// Fixed-point threshold on the summed per-file distance between
    /// consecutive rounds; a pure number, since the distance is normalized.
    pub epsilon: f64,
    pub max_rounds_per_group: u32,
    pub misalignment_action: MisalignmentAction,
    pub validation_mode: ValidationMode,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_rounds_per_group: 5,
            misalignment_action: MisalignmentAction::default(),
            validation_mode: ValidationMode::default(),
        }
    }
}

impl ConvergencePolicy {
    pub fn check(&self) -> Result<(), EngineError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(EngineError::InvalidPolicy(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.max_rounds_per_group < 1 {
            return Err(EngineError::InvalidPolicy(
                "max_rounds_per_group must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    /// A full dependency pass completed with every verdict true.
    Aligned,
    /// Consecutive rounds stopped changing (delta below epsilon) while still
    /// misaligned.
    FixedPointUnaligned,
    /// The round cap was hit while still misaligned and still moving.
    RoundLimit,
}

/// One round-boundary observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub delta: f64,
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub main_path: String,
    pub status: GroupStatus,
    pub rounds_used: u32,
    pub final_delta: f64,
    pub history: Vec<RoundRecord>,
}

/// Terminal-and-in-flight classification of a delta history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Aligned,
    FixedPointUnaligned,
    /// Deltas strictly decreasing but still at or above epsilon.
    Contracting,
    RoundLimit,
}

/// Classify a (non-empty) history of round deltas plus the latest verdict.
/// Alignment dominates; a last delta under epsilon with a false verdict is a
/// fixed point; strictly decreasing deltas are contracting; anything else is
/// out of budget.
pub fn classify_convergence(
    deltas: &[f64],
    last_verdict_aligned: bool,
    epsilon: f64,
) -> Convergence {
    if last_verdict_aligned {
        return Convergence::Aligned;
    }
    match deltas.last() {
        Some(&last) if last < epsilon => Convergence::FixedPointUnaligned,
        Some(_) if deltas.windows(2).all(|w| w[1] < w[0]) => Convergence::Contracting,
        _ => Convergence::RoundLimit,
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("the plan has no groups")]
    EmptyPlan,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("main file {main} has not been generated yet")]
    MainNotGenerated { main: String },
    #[error("{phase} call failed (group {group}, path {path}, round {round}): {source}")]
    Backend {
        group: String,
        phase: Phase,
        path: String,
        round: u32,
        source: BackendError,
    },
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Finished files from earlier groups, passed into later groups' prompts as
/// read-only context.
pub type GroupContext = Vec<(String, String)>;

fn backend_err(
    group: &MainGroup,
    phase: Phase,
    path: &str,
    round: u32,
    source: BackendError,
) -> EngineError {
    EngineError::Backend {
        group: group.main_path.clone(),
        phase,
        path: path.to_owned(),
        round,
        source,
    }
}

/// Generate or refine a group's main file from the rendered tree and the
/// current dependency states (paths only while a dependency has not been
/// generated yet). Exactly one completion, tagged `see`.
pub fn see_step(
    tree: &ProjectTree,
    group: &MainGroup,
    context: &[(String, String)],
    ws: &mut Workspace,
    session: &MeteredBackend<'_>,
    round: u32,
    mode: RunMode,
) -> Result<String, EngineError> {
    let main_path = group.main_path.as_str();
    let dep_views: Vec<(&str, Option<&str>)> = group
        .dependency_paths
        .iter()
        .map(|path| {
            let unit = ws.unit(path);
            let content = unit.filter(|u| u.revision > 0).map(|u| u.content.as_str());
            (path.as_str(), content)
        })
        .collect();
    let prompt = prompts_see(tree, main_path, &dep_views, context);
    let request = CompletionRequest::new(prompt, RequestTags::new(Phase::See, Some(main_path), round));
    let result = session
        .complete(&request)
        .map_err(|e| backend_err(group, Phase::See, main_path, round, e))?;
    let unit_phase = match mode {
        RunMode::Seesaw => UnitPhase::See,
        RunMode::Standard => UnitPhase::Standard,
    };
    ws.put_unit(main_path, result.text.clone(), unit_phase)?;
    Ok(result.text)
}

fn prompts_see(
    tree: &ProjectTree,
    main_path: &str,
    dep_views: &[(&str, Option<&str>)],
    context: &[(String, String)],
) -> String {
    crate::prompts::see_prompt(&render_tree(tree), main_path, dep_views, context)
}

/// Generate one dependency against the current main file. In see-saw mode
/// the prompt also carries the latest contents of the *other* dependencies
/// (never the target's own previous content); in standard mode the main file
/// is the only conditioning. Exactly one completion, tagged `saw`.
pub fn saw_step(
    group: &MainGroup,
    target: &str,
    context: &[(String, String)],
    ws: &mut Workspace,
    session: &MeteredBackend<'_>,
    round: u32,
    mode: RunMode,
) -> Result<String, EngineError> {
    if !group.dependency_paths.iter().any(|p| p == target) {
        return Err(EngineError::Workspace(WorkspaceError::UnknownPath {
            path: target.to_owned(),
        }));
    }
    let main = ws
        .unit(&group.main_path)
        .expect("plan paths exist in the workspace");
    if main.revision == 0 {
        return Err(EngineError::MainNotGenerated {
            main: group.main_path.clone(),
        });
    }
    let main_code = main.content.clone();
    let others: Vec<(String, String)> = match mode {
        RunMode::Seesaw => group
            .dependency_paths
            .iter()
            .filter(|p| *p != target)
            .filter_map(|p| ws.unit(p))
            .filter(|u| u.revision > 0)
            .map(|u| (u.path.clone(), u.content.clone()))
            .collect(),
        RunMode::Standard => Vec::new(),
    };
    let other_views: Vec<(&str, &str)> = others
        .iter()
        .map(|(p, c)| (p.as_str(), c.as_str()))
        .collect();
    let prompt =
        crate::prompts::saw_prompt(&group.main_path, &main_code, target, &other_views, context);
    let request = CompletionRequest::new(prompt, RequestTags::new(Phase::Saw, Some(target), round));
    let result = session
        .complete(&request)
        .map_err(|e| backend_err(group, Phase::Saw, target, round, e))?;
    let unit_phase = match mode {
        RunMode::Seesaw => UnitPhase::Saw,
        RunMode::Standard => UnitPhase::Standard,
    };
    ws.put_unit(target, result.text.clone(), unit_phase)?;
    Ok(result.text)
}

fn group_paths(group: &MainGroup) -> Vec<String> {
    std::iter::once(group.main_path.clone())
        .chain(group.dependency_paths.iter().cloned())
        .collect()
}

/// Dependencies generated so far, in group order, as borrowed units.
fn current_deps<'w>(group: &MainGroup, ws: &'w Workspace) -> Vec<&'w crate::workspace::CodeUnit> {
    group
        .dependency_paths
        .iter()
        .filter_map(|p| ws.unit(p))
        .filter(|u| u.revision > 0)
        .collect()
}

enum MainUpdate {
    AdoptRewrite(String),
    Regenerate,
}

/// Drive one group to a terminal state. See the module docs for the round
/// structure; the returned outcome carries the full per-round history.
pub fn run_group(
    tree: &ProjectTree,
    group: &MainGroup,
    context: &[(String, String)],
    ws: &mut Workspace,
    session: &MeteredBackend<'_>,
    policy: &ConvergencePolicy,
) -> Result<GroupOutcome, EngineError> {
    policy.check()?;
    let paths = group_paths(group);
    let mut prev_snapshot: WorkspaceSnapshot = ws.snapshot(&paths, 0)?;
    let mut history: Vec<RoundRecord> = Vec::new();
    let mut round: u32 = 0;
    let mut resume_at: usize = 0;
    let mut pending: Option<MainUpdate> = None;

    loop {
        match pending.take() {
            None => {
                see_step(tree, group, context, ws, session, round, RunMode::Seesaw)?;
            }
            Some(MainUpdate::AdoptRewrite(code)) => {
                ws.put_unit(&group.main_path, code, UnitPhase::ValidatorRewrite)?;
            }
            Some(MainUpdate::Regenerate) => {
                see_step(tree, group, context, ws, session, round, RunMode::Seesaw)?;
            }
        }

        let mut failure: Option<(usize, Verdict)> = None;
        for (index, dep) in group.dependency_paths.iter().enumerate().skip(resume_at) {
            saw_step(group, dep, context, ws, session, round, RunMode::Seesaw)?;
            let main = ws.unit(&group.main_path).expect("main exists");
            let deps = current_deps(group, ws);
            let verdict = validator::validate(
                main,
                &deps,
                tree,
                session,
                policy.validation_mode,
                round,
                Some(dep),
            )
            .map_err(|e| backend_err(group, Phase::Validate, dep, round, e))?;
            debug_assert!(!(verdict.aligned && verdict.modified_main.is_some()));
            if !verdict.aligned {
                failure = Some((index, verdict));
                break;
            }
        }

        let snapshot = ws.snapshot(&paths, round + 1)?;
        let delta = aggregate_delta(&prev_snapshot, &snapshot)?;
        let pass_aligned = failure.is_none();
        history.push(RoundRecord {
            round,
            delta,
            aligned: pass_aligned,
        });
        prev_snapshot = snapshot;

        if pass_aligned {
            return Ok(outcome(group, GroupStatus::Aligned, history));
        }
        if delta < policy.epsilon {
            return Ok(outcome(group, GroupStatus::FixedPointUnaligned, history));
        }
        if round + 1 >= policy.max_rounds_per_group {
            return Ok(outcome(group, GroupStatus::RoundLimit, history));
        }

        let (failed_index, verdict) = failure.expect("misaligned pass has a failure");
        pending = Some(match policy.misalignment_action {
            MisalignmentAction::AdoptRewriteThenRestart => match verdict.modified_main {
                Some(code) => MainUpdate::AdoptRewrite(code),
                None => MainUpdate::Regenerate,
            },
            MisalignmentAction::RegenerateMainThenRestart
            | MisalignmentAction::RegenerateMainThenResume => MainUpdate::Regenerate,
        });
        resume_at = match policy.misalignment_action {
            MisalignmentAction::RegenerateMainThenResume => failed_index,
            _ => 0,
        };
        round += 1;
    }
}

fn outcome(group: &MainGroup, status: GroupStatus, history: Vec<RoundRecord>) -> GroupOutcome {
    let final_delta = history.last().map_or(0.0, |r| r.delta);
    GroupOutcome {
        main_path: group.main_path.clone(),
        status,
        rounds_used: history.len() as u32,
        final_delta,
        history,
    }
}

fn check_plan(tree: &ProjectTree, plan: &MainPlan) -> Result<(), EngineError> {
    if plan.groups().is_empty() {
        return Err(EngineError::EmptyPlan);
    }
    let covered = plan.covers();
    let files: BTreeSet<&str> = tree.file_paths().into_iter().collect();
    if covered != files {
        return Err(EngineError::Workspace(WorkspaceError::PlanMismatch {
            detail: "plan does not partition the tree's files".into(),
        }));
    }
    Ok(())
}

/// Run every group in plan order against an already-metered session. Later
/// groups see earlier groups' finished files as read-only prompt context.
/// The first error stops the run; completed outcomes are returned either
/// way.
pub fn execute_seesaw(
    tree: &ProjectTree,
    plan: &MainPlan,
    ws: &mut Workspace,
    session: &MeteredBackend<'_>,
    policy: &ConvergencePolicy,
) -> (Vec<GroupOutcome>, Option<EngineError>) {
    let mut outcomes = Vec::new();
    let mut context: GroupContext = Vec::new();
    for group in plan.groups() {
        match run_group(tree, group, &context, ws, session, policy) {
            Ok(done) => {
                outcomes.push(done);
                for path in group_paths(group) {
                    if let Some(unit) = ws.unit(&path) {
                        if unit.revision > 0 {
                            context.push((unit.path.clone(), unit.content.clone()));
                        }
                    }
                }
            }
            Err(e) => return (outcomes, Some(e)),
        }
    }
    (outcomes, None)
}

fn standard_group(
    tree: &ProjectTree,
    group: &MainGroup,
    ws: &mut Workspace,
    session: &MeteredBackend<'_>,
) -> Result<GroupOutcome, EngineError> {
    let paths = group_paths(group);
    let before = ws.snapshot(&paths, 0)?;
    see_step(tree, group, &[], ws, session, 0, RunMode::Standard)?;
    for dep in &group.dependency_paths {
        saw_step(group, dep, &[], ws, session, 0, RunMode::Standard)?;
    }
    let after = ws.snapshot(&paths, 1)?;
    let delta = aggregate_delta(&before, &after)?;
    Ok(GroupOutcome {
        main_path: group.main_path.clone(),
        status: GroupStatus::Aligned,
        rounds_used: 1,
        final_delta: delta,
        history: vec![RoundRecord {
            round: 0,
            delta,
            aligned: true,
        }],
    })
}

/// The non-recursive baseline: per group, one main generation and one
/// dependency generation per file, each conditioned on the main file alone.
/// No validations, no restarts: exactly `1 + n` completions per group.
pub fn execute_standard(
    tree: &ProjectTree,
    plan: &MainPlan,
    ws: &mut Workspace,
    session: &MeteredBackend<'_>,
) -> (Vec<GroupOutcome>, Option<EngineError>) {
    let mut outcomes = Vec::new();
    for group in plan.groups() {
        match standard_group(tree, group, ws, session) {
            Ok(done) => outcomes.push(done),
            Err(e) => return (outcomes, Some(e)),
        }
    }
    (outcomes, None)
}

/// A finished (or aborted) run: the report is always present; `failure`
/// carries the error that stopped an aborted run.
#[derive(Debug)]
pub struct RunResult {
    pub report: RunReport,
    pub failure: Option<EngineError>,
}

impl RunResult {
    pub fn all_groups_aligned(&self) -> bool {
        self.failure.is_none()
            && !self.report.group_outcomes.is_empty()
            && self
                .report
                .group_outcomes
                .iter()
                .all(|o| o.status == GroupStatus::Aligned)
    }
}

fn finish_run(
    mode: RunMode,
    ws: &Workspace,
    session: MeteredBackend<'_>,
    outcomes: Vec<GroupOutcome>,
    failure: Option<EngineError>,
    started: Instant,
) -> Result<RunResult, EngineError> {
    let ledger = session.into_ledger();
    let loc = metrics::loc_report(ws);
    let report = metrics::summarize(
        &ledger,
        &outcomes,
        mode,
        started.elapsed().as_secs_f64(),
        Some(loc),
    )?;
    Ok(RunResult { report, failure })
}

/// One-shot see-saw run: builds the workspace and metered session, runs all
/// groups, and summarizes. On a backend failure the partial report is still
/// produced, with the error attached.
pub fn run_seesaw(
    tree: &ProjectTree,
    plan: &MainPlan,
    backend: &dyn CompletionBackend,
    policy: &ConvergencePolicy,
    out_root: Option<&Path>,
) -> Result<RunResult, EngineError> {
    policy.check()?;
    check_plan(tree, plan)?;
    let mut ws = Workspace::new(tree, plan, out_root)?;
    let session = MeteredBackend::new(backend);
    let started = Instant::now();
    let (outcomes, failure) = execute_seesaw(tree, plan, &mut ws, &session, policy);
    finish_run(RunMode::Seesaw, &ws, session, outcomes, failure, started)
}

/// One-shot standard run; see [`execute_standard`].
pub fn run_standard(
    tree: &ProjectTree,
    plan: &MainPlan,
    backend: &dyn CompletionBackend,
    out_root: Option<&Path>,
) -> Result<RunResult, EngineError> {
    check_plan(tree, plan)?;
    let mut ws = Workspace::new(tree, plan, out_root)?;
    let session = MeteredBackend::new(backend);
    let started = Instant::now();
    let (outcomes, failure) = execute_standard(tree, plan, &mut ws, &session);
    finish_run(RunMode::Standard, &ws, session, outcomes, failure, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptEntry, ScriptedBackend};
    use crate::tree::{designate_mains, parse_tree};

    fn two_dep_project() -> (ProjectTree, MainPlan) {
        let tree = parse_tree(
            "project/\n|-- backend\n|   |-- app.js\n|   |-- db.js\n|   |-- routes.js\n",
        )
        .unwrap();
        let plan = designate_mains(&tree, None).unwrap();
        (tree, plan)
    }

    fn happy_backend() -> ScriptedBackend {
        ScriptedBackend::new(vec![
            ScriptEntry::new(Phase::See, "main code").with_tokens(10, 20).repeatable(),
            ScriptEntry::new(Phase::Saw, "dep code").with_tokens(5, 5).repeatable(),
            ScriptEntry::new(Phase::Validate, "True").with_tokens(3, 1).repeatable(),
        ])
    }

    #[test]
    fn classify_convergence_examples() {
        assert_eq!(
            classify_convergence(&[0.8, 0.3, 0.0], false, 0.01),
            Convergence::FixedPointUnaligned
        );
        assert_eq!(classify_convergence(&[0.8], true, 0.01), Convergence::Aligned);
        assert_eq!(
            classify_convergence(&[0.5, 0.6], false, 0.01),
            Convergence::RoundLimit
        );
        assert_eq!(
            classify_convergence(&[0.9, 0.5, 0.2], false, 0.01),
            Convergence::Contracting
        );
    }

    #[test]
    fn happy_path_is_one_round_with_the_exact_call_count() {
        let (tree, plan) = two_dep_project();
        let backend = happy_backend();
        let result = run_seesaw(
            &tree,
            &plan,
            &backend,
            &ConvergencePolicy::default(),
            None,
        )
        .unwrap();
        assert!(result.failure.is_none());
        assert_eq!(result.report.group_outcomes.len(), 1);
        let outcome = &result.report.group_outcomes[0];
        assert_eq!(outcome.status, GroupStatus::Aligned);
        assert_eq!(outcome.rounds_used, 1);
        // 1 see + 2 saw + 2 validate.
        assert_eq!(result.report.calls.len(), 5);
        let phases: Vec<Phase> = result.report.calls.iter().map(|c| c.phase).collect();
        assert_eq!(
            phases,
            vec![Phase::See, Phase::Saw, Phase::Validate, Phase::Saw, Phase::Validate]
        );
    }

    #[test]
    fn ordering_no_saw_before_the_rounds_see_and_no_validate_before_its_saw() {
        let (tree, plan) = two_dep_project();
        let backend = happy_backend();
        let result =
            run_seesaw(&tree, &plan, &backend, &ConvergencePolicy::default(), None).unwrap();
        let calls = &result.report.calls;
        let see_seq = calls.iter().find(|c| c.phase == Phase::See).unwrap().seq;
        for call in calls {
            if call.phase == Phase::Saw {
                assert!(call.seq > see_seq);
                let validate = calls
                    .iter()
                    .find(|c| c.phase == Phase::Validate && c.path == call.path && c.seq > call.seq)
                    .expect("each saw is followed by its validate");
                assert_eq!(validate.seq, call.seq + 1);
            }
        }
    }

    #[test]
    fn round_zero_saw_for_second_dep_sees_first_dep_but_not_itself() {
        let (tree, plan) = two_dep_project();
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new(Phase::See, "MAIN-BODY").repeatable(),
            ScriptEntry::new(Phase::Saw, "DB-BODY").with_path("backend/db.js").repeatable(),
            ScriptEntry::new(Phase::Saw, "ROUTES-BODY").with_path("backend/routes.js").repeatable(),
            ScriptEntry::new(Phase::Validate, "True").repeatable(),
        ]);
        let result =
            run_seesaw(&tree, &plan, &backend, &ConvergencePolicy::default(), None).unwrap();
        assert!(result.all_groups_aligned());
        let requests = backend.seen_requests();
        let saw_routes = requests
            .iter()
            .find(|r| {
                r.tags.phase == Phase::Saw && r.tags.path.as_deref() == Some("backend/routes.js")
            })
            .unwrap();
        assert!(saw_routes.user_text.contains("DB-BODY"));
        assert!(saw_routes.user_text.contains("MAIN-BODY"));
        assert!(!saw_routes.user_text.contains("ROUTES-BODY"));
        // First dependency's saw has no generated siblings yet.
        let saw_db = requests
            .iter()
            .find(|r| r.tags.phase == Phase::Saw && r.tags.path.as_deref() == Some("backend/db.js"))
            .unwrap();
        assert!(saw_db.user_text.contains("(none)"));
    }

    #[test]
    fn regenerate_see_prompt_carries_previous_dependency_contents() {
        // A judge that says False (no rewrite) once forces a regeneration;
        // the round-1 see prompt must embed the round-0 dependency bodies.
        let (tree, plan) = two_dep_project();
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new(Phase::Validate, "False"),
            ScriptEntry::new(Phase::See, "main v1").repeatable(),
            ScriptEntry::new(Phase::Saw, "DB-BODY").with_path("backend/db.js").repeatable(),
            ScriptEntry::new(Phase::Saw, "ROUTES-BODY").with_path("backend/routes.js").repeatable(),
            ScriptEntry::new(Phase::Validate, "True").repeatable(),
        ]);
        let policy = ConvergencePolicy {
            misalignment_action: MisalignmentAction::RegenerateMainThenRestart,
            ..ConvergencePolicy::default()
        };
        let result = run_seesaw(&tree, &plan, &backend, &policy, None).unwrap();
        assert!(result.all_groups_aligned());
        let requests = backend.seen_requests();
        let round1_see = requests
            .iter()
            .find(|r| r.tags.phase == Phase::See && r.tags.round == 1)
            .expect("regeneration happened");
        assert!(round1_see.user_text.contains("DB-BODY"));
        // routes.js was never generated before the round-0 failure at db.js.
        assert!(round1_see.user_text.contains("backend/routes.js (not generated yet)"));
    }

    #[test]
    fn standard_mode_issues_exactly_one_plus_n_calls_and_no_validations() {
        let (tree, plan) = two_dep_project();
        let backend = happy_backend();
        let result = run_standard(&tree, &plan, &backend, None).unwrap();
        assert!(result.failure.is_none());
        assert_eq!(result.report.calls.len(), 3);
        let phases: Vec<Phase> = result.report.calls.iter().map(|c| c.phase).collect();
        assert_eq!(phases, vec![Phase::See, Phase::Saw, Phase::Saw]);
        assert_eq!(result.report.validation_tokens, 0);
    }

    #[test]
    fn standard_saw_prompt_omits_sibling_dependency_contents() {
        let (tree, plan) = two_dep_project();
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new(Phase::See, "MAIN-BODY").repeatable(),
            ScriptEntry::new(Phase::Saw, "DB-BODY").with_path("backend/db.js").repeatable(),
            ScriptEntry::new(Phase::Saw, "ROUTES-BODY").with_path("backend/routes.js").repeatable(),
        ]);
        let result = run_standard(&tree, &plan, &backend, None).unwrap();
        assert!(result.failure.is_none());
        let requests = backend.seen_requests();
        let saw_routes = requests
            .iter()
            .find(|r| {
                r.tags.phase == Phase::Saw && r.tags.path.as_deref() == Some("backend/routes.js")
            })
            .unwrap();
        assert!(saw_routes.user_text.contains("MAIN-BODY"));
        assert!(!saw_routes.user_text.contains("DB-BODY"));
    }

    #[test]
    fn zero_dependency_group_takes_one_call_in_either_mode() {
        let tree = parse_tree("project/\n|-- solo\n|   |-- app.js\n").unwrap();
        let plan = designate_mains(&tree, None).unwrap();
        let backend = happy_backend();
        let result =
            run_seesaw(&tree, &plan, &backend, &ConvergencePolicy::default(), None).unwrap();
        assert!(result.all_groups_aligned());
        assert_eq!(result.report.calls.len(), 1);

        let backend = happy_backend();
        let result = run_standard(&tree, &plan, &backend, None).unwrap();
        assert_eq!(result.report.calls.len(), 1);
    }

    #[test]
    fn empty_plan_is_rejected() {
        let empty_tree = parse_tree("project/").unwrap();
        let empty_plan = MainPlan::from_groups(vec![]).unwrap();
        let backend = happy_backend();
        let err = run_seesaw(
            &empty_tree,
            &empty_plan,
            &backend,
            &ConvergencePolicy::default(),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::EmptyPlan));
    }

    #[test]
    fn plan_not_covering_the_tree_is_rejected() {
        let tree = parse_tree("project/\n|-- a.js\n").unwrap();
        let plan = designate_mains(&tree, None).unwrap();
        let other_tree = parse_tree("project/\n|-- b.js\n").unwrap();
        let backend = happy_backend();
        let err = run_seesaw(&other_tree, &plan, &backend, &ConvergencePolicy::default(), None)
            .unwrap_err();
        assert!(matches!(err, EngineError::Workspace(WorkspaceError::PlanMismatch { .. })));
    }

    #[test]
    fn saw_step_preconditions() {
        let (tree, plan) = two_dep_project();
        let backend = happy_backend();
        let mut ws = Workspace::new(&tree, &plan, None).unwrap();
        let session = MeteredBackend::new(&backend);
        let group = &plan.groups()[0];

        // Main not generated yet.
        let err = saw_step(group, "backend/db.js", &[], &mut ws, &session, 0, RunMode::Seesaw)
            .unwrap_err();
        assert!(matches!(err, EngineError::MainNotGenerated { .. }));

        see_step(&tree, group, &[], &mut ws, &session, 0, RunMode::Seesaw).unwrap();
        // Target outside the group.
        let err = saw_step(group, "elsewhere.js", &[], &mut ws, &session, 0, RunMode::Seesaw)
            .unwrap_err();
        assert!(matches!(
            err,
            EngineError::Workspace(WorkspaceError::UnknownPath { .. })
        ));
        // And the happy case stores the dependency at revision 1.
        saw_step(group, "backend/db.js", &[], &mut ws, &session, 0, RunMode::Seesaw).unwrap();
        assert_eq!(ws.unit("backend/db.js").unwrap().revision, 1);
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let (tree, plan) = two_dep_project();
        let backend = happy_backend();
        let policy = ConvergencePolicy {
            epsilon: 0.0,
            ..ConvergencePolicy::default()
        };
        assert!(matches!(
            run_seesaw(&tree, &plan, &backend, &policy, None),
            Err(EngineError::InvalidPolicy(_))
        ));
    }

    #[test]
    fn backend_failure_aborts_with_partial_report_and_context() {
        let (tree, plan) = two_dep_project();
        // Only the see entry exists; the first saw has no match.
        let backend = ScriptedBackend::new(vec![ScriptEntry::new(Phase::See, "main")
            .with_tokens(10, 10)]);
        let result =
            run_seesaw(&tree, &plan, &backend, &ConvergencePolicy::default(), None).unwrap();
        let failure = result.failure.expect("run aborted");
        match failure {
            EngineError::Backend { phase, path, round, source, .. } => {
                assert_eq!(phase, Phase::Saw);
                assert_eq!(path, "backend/db.js");
                assert_eq!(round, 0);
                assert!(matches!(source, BackendError::NoScriptMatch { .. }));
            }
            other => panic!("unexpected failure: {other:?}"),
        }
        // Both calls (one ok, one failed) are in the ledger.
        assert_eq!(result.report.calls.len(), 2);
        assert!(result.report.calls[1].error.is_some());
        assert_eq!(result.report.total_tokens, 20);
        assert!(result.report.group_outcomes.is_empty());
    }

    #[test]
    fn revisions_are_monotone_and_only_bumped_by_generation_events() {
        let (tree, plan) = two_dep_project();
        let backend = happy_backend();
        let mut ws = Workspace::new(&tree, &plan, None).unwrap();
        let session = MeteredBackend::new(&backend);
        let policy = ConvergencePolicy::default();
        let (outcomes, failure) = execute_seesaw(&tree, &plan, &mut ws, &session, &policy);
        assert!(failure.is_none());
        assert_eq!(outcomes.len(), 1);
        for unit in ws.units() {
            assert_eq!(unit.revision, 1, "{} generated exactly once", unit.path);
        }
    }
}
