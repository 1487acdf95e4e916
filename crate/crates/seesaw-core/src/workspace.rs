//! Versioned file contents for a run, plus the inter-round distance.
//!
//! Every file of the project tree gets a [`CodeUnit`] whose revision starts
//! at 0 (nothing generated yet) and increments by exactly one on every
//! content replacement. When a workspace is rooted, contents are mirrored to
//! disk on every write so partial runs stay inspectable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{MainPlan, ProjectTree};

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("unknown path: {path}")]
    UnknownPath { path: String },
    #[error("snapshots cover different path sets: {detail}")]
    PathSetMismatch { detail: String },
    #[error("plan does not cover the tree: {detail}")]
    PlanMismatch { detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether a file is the entry point of its group or one of its dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Main,
    Dependency,
}

/// Which step last replaced a unit's content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitPhase {
    See,
    Saw,
    ValidatorRewrite,
    Standard,
}

/// One versioned file. `revision` 0 means never generated.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeUnit {
    pub path: String,
    pub role: Role,
    pub content: String,
    pub revision: u64,
    pub last_phase: Option<UnitPhase>,
}

/// Immutable copy of one group's contents at a round boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceSnapshot {
    pub round_index: u32,
    units: BTreeMap<String, String>,
}

impl WorkspaceSnapshot {
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.units.keys().map(String::as_str)
    }

    pub fn content(&self, path: &str) -> Option<&str> {
        self.units.get(path).map(String::as_str)
    }
}

/// Holds every unit of one run; single writer, mirrored to `out_root` when
/// rooted.
#[derive(Debug)]
pub struct Workspace {
    out_root: Option<PathBuf>,
    units: BTreeMap<String, CodeUnit>,
}

impl Workspace {
    /// Initialise one unit per tree file, with roles taken from the plan.
    /// The plan must cover the tree's files exactly.
    pub fn new(
        tree: &ProjectTree,
        plan: &MainPlan,
        out_root: Option<&Path>,
    ) -> Result<Self, WorkspaceError> {
        let mut roles: BTreeMap<&str, Role> = BTreeMap::new();
        for group in plan.groups() {
            roles.insert(group.main_path.as_str(), Role::Main);
            for dep in &group.dependency_paths {
                roles.insert(dep.as_str(), Role::Dependency);
            }
        }
        let mut units = BTreeMap::new();
        for path in tree.file_paths() {
            let role = roles.remove(path).ok_or_else(|| WorkspaceError::PlanMismatch {
                detail: format!("tree file {path} is not covered by the plan"),
            })?;
            units.insert(
                path.to_owned(),
                CodeUnit {
                    path: path.to_owned(),
                    role,
                    content: String::new(),
                    revision: 0,
                    last_phase: None,
                },
            );
        }
        if let Some((path, _)) = roles.into_iter().next() {
            return Err(WorkspaceError::PlanMismatch {
                detail: format!("plan path {path} is not a file in the tree"),
            });
        }
        Ok(Self {
            out_root: out_root.map(Path::to_path_buf),
            units,
        })
    }

    pub fn out_root(&self) -> Option<&Path> {
        self.out_root.as_deref()
    }

    /// Replace a unit's content, bumping its revision and mirroring to disk.
    /// The path must be a tree file; nothing touches the disk for an unknown
    /// path.
    pub fn put_unit(
        &mut self,
        path: &str,
        content: impl Into<String>,
        phase: UnitPhase,
    ) -> Result<&CodeUnit, WorkspaceError> {
        let content = content.into();
        if !self.units.contains_key(path) {
            return Err(WorkspaceError::UnknownPath { path: path.to_owned() });
        }
        if let Some(root) = &self.out_root {
            let disk_path = root.join(path);
            if let Some(parent) = disk_path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&disk_path, &content)?;
        }
        let unit = self.units.get_mut(path).expect("checked above");
        unit.content = content;
        unit.revision += 1;
        unit.last_phase = Some(phase);
        Ok(unit)
    }

    pub fn unit(&self, path: &str) -> Option<&CodeUnit> {
        self.units.get(path)
    }

    pub fn units(&self) -> impl Iterator<Item = &CodeUnit> {
        self.units.values()
    }

    /// Units that have been generated at least once.
    pub fn generated(&self) -> impl Iterator<Item = &CodeUnit> {
        self.units.values().filter(|u| u.revision > 0)
    }

    /// Snapshot the given paths (a group's main plus dependencies).
    pub fn snapshot(
        &self,
        paths: &[String],
        round_index: u32,
    ) -> Result<WorkspaceSnapshot, WorkspaceError> {
        let mut units = BTreeMap::new();
        for path in paths {
            let unit = self
                .units
                .get(path)
                .ok_or_else(|| WorkspaceError::UnknownPath { path: path.clone() })?;
            units.insert(path.clone(), unit.content.clone());
        }
        Ok(WorkspaceSnapshot { round_index, units })
    }
}

/// Normalized token-level edit distance in [0, 1]: Levenshtein over
/// ASCII-whitespace-delimited tokens divided by the longer token count.
/// Two empty texts are at distance 0. Symmetric; 0 exactly when the token
/// sequences are equal. The normalized form is not claimed to satisfy the
/// triangle inequality.
pub fn distance(a: &str, b: &str) -> f64 {
    let ta: Vec<&str> = a.split_ascii_whitespace().collect();
    let tb: Vec<&str> = b.split_ascii_whitespace().collect();
    let longest = ta.len().max(tb.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&ta, &tb) as f64 / longest as f64
}

fn levenshtein(a: &[&str], b: &[&str]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ta != tb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Sum of per-file distances between two snapshots of the same path set:
/// the change in the main file plus the change in every dependency.
pub fn aggregate_delta(
    prev: &WorkspaceSnapshot,
    next: &WorkspaceSnapshot,
) -> Result<f64, WorkspaceError> {
    if !prev.units.keys().eq(next.units.keys()) {
        let only_prev: Vec<&str> = prev
            .units
            .keys()
            .filter(|k| !next.units.contains_key(*k))
            .map(String::as_str)
            .collect();
        let only_next: Vec<&str> = next
            .units
            .keys()
            .filter(|k| !prev.units.contains_key(*k))
            .map(String::as_str)
            .collect();
        return Err(WorkspaceError::PathSetMismatch {
            detail: format!("only in prev: {only_prev:?}; only in next: {only_next:?}"),
        });
    }
    Ok(prev
        .units
        .iter()
        .map(|(path, old)| distance(old, &next.units[path]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{designate_mains, parse_tree};

    /// Independent oracle: exponential-time edit distance by direct
    /// recursion, kept free of the DP implementation above.
    fn brute_force_edit(a: &[&str], b: &[&str]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((ha, ra)), Some((hb, rb))) => {
                let sub = brute_force_edit(ra, rb) + usize::from(ha != hb);
                let del = brute_force_edit(ra, b) + 1;
                let ins = brute_force_edit(a, rb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    fn brute_distance(a: &str, b: &str) -> f64 {
        let ta: Vec<&str> = a.split_ascii_whitespace().collect();
        let tb: Vec<&str> = b.split_ascii_whitespace().collect();
        let longest = ta.len().max(tb.len());
        if longest == 0 {
            return 0.0;
        }
        brute_force_edit(&ta, &tb) as f64 / longest as f64
    }

    fn small_workspace() -> (ProjectTree, MainPlan) {
        let tree = parse_tree("project/\n|-- app.js\n|-- util.js\n").unwrap();
        let plan = designate_mains(&tree, None).unwrap();
        (tree, plan)
    }

    #[test]
    fn distance_identity_is_zero() {
        for text in ["", "a", "const x = 1;", "a b   c\nd"] {
            assert_eq!(distance(text, text), 0.0);
        }
    }

    #[test]
    fn distance_from_empty_is_one() {
        assert_eq!(distance("", "a b c"), 1.0);
        assert_eq!(distance("a b c", ""), 1.0);
    }

    #[test]
    fn distance_single_substitution_over_three_tokens() {
        let expected = brute_distance("a b c", "a b d");
        assert!((expected - 1.0 / 3.0).abs() < 1e-12);
        assert!((distance("a b c", "a b d") - expected).abs() < 1e-12);
    }

    #[test]
    fn distance_matches_brute_force_on_small_cases() {
        let cases = [
            ("a b", "b a"),
            ("x", "x y z"),
            ("one two three four", "one three four"),
            ("p q r", "s t"),
            ("same same", "same"),
        ];
        for (a, b) in cases {
            assert_eq!(distance(a, b), brute_distance(a, b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn aggregate_delta_of_identical_snapshots_is_zero() {
        let (tree, plan) = small_workspace();
        let mut ws = Workspace::new(&tree, &plan, None).unwrap();
        ws.put_unit("app.js", "const a = 1;", UnitPhase::See).unwrap();
        let paths = vec!["app.js".to_owned(), "util.js".to_owned()];
        let s1 = ws.snapshot(&paths, 0).unwrap();
        let s2 = ws.snapshot(&paths, 1).unwrap();
        assert_eq!(aggregate_delta(&s1, &s2).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_delta_sums_per_file_distances() {
        // Hand-built case: main moves by 1/3, one dependency by 1/2.
        let (tree, plan) = small_workspace();
        let mut ws = Workspace::new(&tree, &plan, None).unwrap();
        let paths = vec!["app.js".to_owned(), "util.js".to_owned()];
        ws.put_unit("app.js", "a b c", UnitPhase::See).unwrap();
        ws.put_unit("util.js", "x y", UnitPhase::Saw).unwrap();
        let before = ws.snapshot(&paths, 0).unwrap();
        ws.put_unit("app.js", "a b d", UnitPhase::See).unwrap();
        ws.put_unit("util.js", "x z", UnitPhase::Saw).unwrap();
        let after = ws.snapshot(&paths, 1).unwrap();

        let expected = brute_distance("a b c", "a b d") + brute_distance("x y", "x z");
        assert!((expected - 5.0 / 6.0).abs() < 1e-12);
        assert!((aggregate_delta(&before, &after).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn aggregate_delta_rejects_mismatched_path_sets() {
        let (tree, plan) = small_workspace();
        let ws = Workspace::new(&tree, &plan, None).unwrap();
        let s1 = ws.snapshot(&["app.js".to_owned()], 0).unwrap();
        let s2 = ws
            .snapshot(&["app.js".to_owned(), "util.js".to_owned()], 0)
            .unwrap();
        assert!(matches!(
            aggregate_delta(&s1, &s2),
            Err(WorkspaceError::PathSetMismatch { .. })
        ));
    }

    #[test]
    fn revisions_count_every_replacement() {
        let (tree, plan) = small_workspace();
        let mut ws = Workspace::new(&tree, &plan, None).unwrap();
        assert_eq!(ws.unit("app.js").unwrap().revision, 0);
        ws.put_unit("app.js", "v1", UnitPhase::See).unwrap();
        assert_eq!(ws.unit("app.js").unwrap().revision, 1);
        ws.put_unit("app.js", "v2", UnitPhase::ValidatorRewrite).unwrap();
        let unit = ws.unit("app.js").unwrap();
        assert_eq!(unit.revision, 2);
        assert_eq!(unit.content, "v2");
        assert_eq!(unit.last_phase, Some(UnitPhase::ValidatorRewrite));
    }

    #[test]
    fn put_unit_rejects_paths_outside_the_tree() {
        let (tree, plan) = small_workspace();
        let mut ws = Workspace::new(&tree, &plan, None).unwrap();
        assert!(matches!(
            ws.put_unit("nope.js", "x", UnitPhase::See),
            Err(WorkspaceError::UnknownPath { .. })
        ));
    }

    #[test]
    fn unknown_paths_never_touch_the_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (tree, plan) = small_workspace();
        let mut ws = Workspace::new(&tree, &plan, Some(dir.path())).unwrap();
        assert!(ws.put_unit("../escape.js", "x", UnitPhase::See).is_err());
        assert!(ws.put_unit("ghost.js", "x", UnitPhase::See).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        assert!(!dir.path().parent().unwrap().join("escape.js").exists());
    }

    #[test]
    fn disk_mirror_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let tree = parse_tree("project/\n|-- backend\n|   |-- app.js\n|   |-- db.js\n").unwrap();
        let plan = designate_mains(&tree, None).unwrap();
        let mut ws = Workspace::new(&tree, &plan, Some(dir.path())).unwrap();
        ws.put_unit("backend/app.js", "const app = 1;\n", UnitPhase::See)
            .unwrap();
        ws.put_unit("backend/app.js", "const app = 2;\n", UnitPhase::Saw)
            .unwrap();
        ws.put_unit("backend/db.js", "module.exports = {};\n", UnitPhase::Saw)
            .unwrap();
        for unit in ws.generated() {
            let on_disk = fs::read_to_string(dir.path().join(&unit.path)).unwrap();
            assert_eq!(on_disk, unit.content, "{}", unit.path);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn token_text() -> impl Strategy<Value = String> {
            proptest::collection::vec("[abc]{1,3}", 0..8).prop_map(|tokens| tokens.join(" "))
        }

        proptest! {
            #[test]
            fn distance_is_symmetric_and_bounded(a in token_text(), b in token_text()) {
                let d_ab = distance(&a, &b);
                let d_ba = distance(&b, &a);
                prop_assert_eq!(d_ab, d_ba);
                prop_assert!((0.0..=1.0).contains(&d_ab));
            }

            #[test]
            fn distance_zero_iff_token_sequences_equal(a in token_text(), b in token_text()) {
                let equal = a.split_ascii_whitespace().collect::<Vec<_>>()
                    == b.split_ascii_whitespace().collect::<Vec<_>>();
                prop_assert_eq!(distance(&a, &b) == 0.0, equal);
            }

            #[test]
            fn dp_agrees_with_brute_force(a in token_text(), b in token_text()) {
                prop_assert_eq!(distance(&a, &b), brute_distance(&a, &b));
            }
        }
    }
}
