//! Hierarchical project tree: parse/render the ASCII listing format and
//! split the files into generation groups.
//!
//! Grammar: the root line is a bare name, optionally suffixed `/`. Every
//! deeper level adds one 4-column prefix unit: `"|   "` while the ancestor
//! at that level still has siblings below, `"    "` otherwise. Each
//! entry line ends with `"|-- "` followed by the name. A node is a directory
//! iff it has deeper-indented successors or its name ends with `/`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::backend::{BackendError, CompletionRequest, Phase, RequestTags};
use crate::metrics::MeteredBackend;
use crate::prompts;

const UNIT_PIPE: &str = "|   ";
const UNIT_BLANK: &str = "    ";
const ENTRY_MARKER: &str = "|-- ";

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("malformed tree at line {line}: {reason}")]
    MalformedTree { line: usize, reason: String },
    #[error("invalid override: {reason}")]
    InvalidOverride { reason: String },
    #[error("tree has no files")]
    EmptyTree,
}

impl TreeError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        TreeError::MalformedTree {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Directory,
    File,
}

/// One node of the project tree. Paths are project-relative (the root's name
/// is not a path component); the root itself has the empty path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub name: String,
    pub kind: NodeKind,
    pub path: String,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn file(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: NodeKind::File,
            path: String::new(),
            children: Vec::new(),
        }
    }

    pub fn dir(name: impl Into<String>, children: Vec<TreeNode>) -> Self {
        Self {
            name: name.into(),
            kind: NodeKind::Directory,
            path: String::new(),
            children,
        }
    }

    fn is_file(&self) -> bool {
        self.kind == NodeKind::File
    }
}

/// A validated tree with cached counts. `dir_count` excludes the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectTree {
    root: TreeNode,
    file_count: usize,
    dir_count: usize,
}

impl ProjectTree {
    /// Validate a hand-built root (unique sibling names, files without
    /// children, well-formed names), fill in paths, and count nodes.
    pub fn new(mut root: TreeNode) -> Result<Self, TreeError> {
        if root.kind != NodeKind::Directory {
            return Err(TreeError::malformed(1, "root must be a directory"));
        }
        check_name(&root.name, 1)?;
        root.path = String::new();
        let mut file_count = 0;
        let mut dir_count = 0;
        finalize(&mut root, "", &mut file_count, &mut dir_count)?;
        Ok(Self {
            root,
            file_count,
            dir_count,
        })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn file_count(&self) -> usize {
        self.file_count
    }

    /// Directories excluding the root.
    pub fn dir_count(&self) -> usize {
        self.dir_count
    }

    /// All file paths in depth-first (document) order.
    pub fn file_paths(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.file_count);
        collect_files(&self.root, &mut out);
        out
    }

    pub fn contains_file(&self, path: &str) -> bool {
        fn walk(node: &TreeNode, path: &str) -> bool {
            if node.is_file() && node.path == path {
                return true;
            }
            node.children.iter().any(|c| walk(c, path))
        }
        walk(&self.root, path)
    }
}

fn collect_files<'t>(node: &'t TreeNode, out: &mut Vec<&'t str>) {
    if node.is_file() {
        out.push(node.path.as_str());
    }
    for child in &node.children {
        collect_files(child, out);
    }
}

fn check_name(name: &str, line: usize) -> Result<(), TreeError> {
    if name.is_empty() {
        return Err(TreeError::malformed(line, "empty node name"));
    }
    if name == "." || name == ".." {
        return Err(TreeError::malformed(line, format!("reserved name {name:?}")));
    }
    if name.contains('/') {
        return Err(TreeError::malformed(
            line,
            format!("name contains a path separator: {name:?}"),
        ));
    }
    if name.contains('\n') || name.contains('\r') {
        return Err(TreeError::malformed(line, "name contains a line break"));
    }
    if name != name.trim() {
        return Err(TreeError::malformed(
            line,
            format!("name has leading or trailing whitespace: {name:?}"),
        ));
    }
    Ok(())
}

fn finalize(
    node: &mut TreeNode,
    parent_path: &str,
    file_count: &mut usize,
    dir_count: &mut usize,
) -> Result<(), TreeError> {
    let mut seen = BTreeSet::new();
    for child in &mut node.children {
        check_name(&child.name, 0)?;
        if !seen.insert(child.name.clone()) {
            return Err(TreeError::malformed(
                0,
                format!("duplicate sibling name {:?} under {:?}", child.name, node.name),
            ));
        }
        child.path = if parent_path.is_empty() {
            child.name.clone()
        } else {
            format!("{parent_path}/{}", child.name)
        };
        match child.kind {
            NodeKind::File => {
                if !child.children.is_empty() {
                    return Err(TreeError::malformed(
                        0,
                        format!("child under a file node: {}", child.path),
                    ));
                }
                *file_count += 1;
            }
            NodeKind::Directory => {
                *dir_count += 1;
            }
        }
        let child_path = child.path.clone();
        finalize(child, &child_path, file_count, dir_count)?;
    }
    Ok(())
}

/// Drop one outermost fenced code block, if the text (ignoring leading blank
/// lines) starts with one. Completions often arrive fenced; the content is
/// unchanged otherwise.
pub fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim_start_matches(['\n', '\r', ' ', '\t']);
    if !trimmed.starts_with("```") {
        return text;
    }
    let after_fence = match trimmed.find('\n') {
        Some(idx) => &trimmed[idx + 1..],
        None => return text,
    };
    let mut end = after_fence.len();
    let mut offset = 0;
    for line in after_fence.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            end = offset;
            break;
        }
        offset += line.len();
    }
    &after_fence[..end]
}

struct PartialNode {
    name: String,
    slash_suffix: bool,
    children: Vec<PartialNode>,
}

fn into_tree_node(partial: PartialNode) -> TreeNode {
    let kind = if !partial.children.is_empty() || partial.slash_suffix {
        NodeKind::Directory
    } else {
        NodeKind::File
    };
    TreeNode {
        name: partial.name,
        kind,
        path: String::new(),
        children: partial.children.into_iter().map(into_tree_node).collect(),
    }
}

/// Parse the ASCII listing into a validated tree. A single outer code fence
/// is stripped first. Blank lines are skipped; the first non-blank line is
/// the root entry.
pub fn parse_tree(text: &str) -> Result<ProjectTree, TreeError> {
    let text = strip_code_fence(text);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty());

    let (root_line_no, root_line) = lines.next().ok_or_else(|| {
        TreeError::malformed(1, "empty input: no root entry")
    })?;
    if root_line.contains(ENTRY_MARKER) || root_line.starts_with(' ') || root_line.starts_with('|')
    {
        return Err(TreeError::malformed(
            root_line_no,
            "first line must be a bare root name",
        ));
    }
    let root_name = root_line.strip_suffix('/').unwrap_or(root_line);
    check_name(root_name, root_line_no)?;

    // Stack of open nodes: index == level, root at 0. Popping attaches the
    // node to its parent, so by the time a sibling arrives all earlier
    // siblings are fully attached and duplicate names are checkable.
    let mut stack: Vec<PartialNode> = vec![PartialNode {
        name: root_name.to_owned(),
        slash_suffix: true,
        children: Vec::new(),
    }];

    for (line_no, line) in lines {
        let (level, raw_name) = split_entry(line, line_no)?;
        if level > stack.len() {
            return Err(TreeError::malformed(
                line_no,
                format!(
                    "entry jumps from depth {} to depth {level}",
                    stack.len() - 1
                ),
            ));
        }
        while stack.len() > level {
            let done = stack.pop().expect("stack holds at least the root");
            stack
                .last_mut()
                .expect("root never popped inside the loop")
                .children
                .push(done);
        }
        let slash_suffix = raw_name.ends_with('/');
        let name = raw_name.strip_suffix('/').unwrap_or(raw_name);
        check_name(name, line_no)?;
        if name.starts_with(char::is_whitespace) {
            return Err(TreeError::malformed(line_no, "name begins with whitespace"));
        }
        let parent = &stack[level - 1];
        if parent.children.iter().any(|c| c.name == name) {
            return Err(TreeError::malformed(
                line_no,
                format!("duplicate sibling name {name:?}"),
            ));
        }
        stack.push(PartialNode {
            name: name.to_owned(),
            slash_suffix,
            children: Vec::new(),
        });
    }

    while stack.len() > 1 {
        let done = stack.pop().expect("len > 1");
        stack.last_mut().expect("root remains").children.push(done);
    }
    let root = stack.pop().expect("root");
    ProjectTree::new(into_tree_node(root))
}

/// Split an entry line into (level, name). Level 1 is a direct child of the
/// root; each prefix unit before the `"|-- "` marker adds one level.
fn split_entry(line: &str, line_no: usize) -> Result<(usize, &str), TreeError> {
    let mut rest = line;
    let mut units = 0;
    loop {
        if let Some(name) = rest.strip_prefix(ENTRY_MARKER) {
            return Ok((units + 1, name));
        }
        if let Some(tail) = rest.strip_prefix(UNIT_PIPE).or_else(|| rest.strip_prefix(UNIT_BLANK)) {
            rest = tail;
            units += 1;
            continue;
        }
        return Err(TreeError::malformed(
            line_no,
            format!("inconsistent indentation before {rest:?}"),
        ));
    }
}

/// Render a tree back to the listing format. The root carries a trailing
/// `/`; an empty directory keeps its `/` suffix so it re-parses as a
/// directory. `parse_tree(render_tree(t))` is structurally equal to `t`, and
/// rendering a parsed listing reproduces the original text.
pub fn render_tree(tree: &ProjectTree) -> String {
    let mut out = String::new();
    out.push_str(&tree.root.name);
    out.push_str("/\n");
    let mut ancestors: Vec<bool> = Vec::new();
    render_children(&tree.root.children, &mut ancestors, &mut out);
    out
}

fn render_children(children: &[TreeNode], ancestors: &mut Vec<bool>, out: &mut String) {
    for (i, child) in children.iter().enumerate() {
        let has_more = i + 1 < children.len();
        for &ancestor_has_more in ancestors.iter() {
            out.push_str(if ancestor_has_more { UNIT_PIPE } else { UNIT_BLANK });
        }
        out.push_str(ENTRY_MARKER);
        out.push_str(&child.name);
        if child.kind == NodeKind::Directory && child.children.is_empty() {
            out.push('/');
        }
        out.push('\n');
        ancestors.push(has_more);
        render_children(&child.children, ancestors, out);
        ancestors.pop();
    }
}

/// One generation group: a main file and the dependencies generated against
/// it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MainGroup {
    /// Override key and display name: the top-level directory, or `"."` for
    /// files sitting directly under the root.
    pub key: String,
    pub main_path: String,
    pub dependency_paths: Vec<String>,
}

/// Ordered groups partitioning the tree's files: every file appears exactly
/// once, either as a main or as a dependency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MainPlan {
    groups: Vec<MainGroup>,
}

impl MainPlan {
    /// Assemble a plan from hand-built groups. Guards the group-local
    /// invariants (a main is never its own dependency, no path appears
    /// twice); whether the plan covers a given tree is checked by the
    /// consumers that pair plans with trees.
    pub fn from_groups(groups: Vec<MainGroup>) -> Result<Self, TreeError> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for group in &groups {
            if group.dependency_paths.contains(&group.main_path) {
                return Err(TreeError::InvalidOverride {
                    reason: format!("{} is both main and dependency", group.main_path),
                });
            }
            for path in std::iter::once(&group.main_path).chain(&group.dependency_paths) {
                if !seen.insert(path) {
                    return Err(TreeError::InvalidOverride {
                        reason: format!("{path} appears in more than one group"),
                    });
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[MainGroup] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Every path covered by the plan, mains and dependencies alike.
    pub fn covers(&self) -> BTreeSet<&str> {
        self.groups
            .iter()
            .flat_map(|g| {
                std::iter::once(g.main_path.as_str())
                    .chain(g.dependency_paths.iter().map(String::as_str))
            })
            .collect()
    }
}

/// Priority class for main-file selection within a group; lower wins, ties
/// break on the lexicographically smallest path. Matching is on the
/// lowercased basename.
fn main_priority(path: &str) -> (u8, &str) {
    let basename = path.rsplit('/').next().unwrap_or(path);
    let lower = basename.to_ascii_lowercase();
    let class = if lower == "app" || lower.starts_with("app.") {
        0
    } else if lower == "index" || lower.starts_with("index.") {
        1
    } else if lower == "main" || lower.starts_with("main.") {
        2
    } else {
        3
    };
    (class, path)
}

/// Split the tree's files into groups, one per top-level directory (files
/// directly under the root form a leading group keyed `"."`). The main file
/// of each group is picked by name priority (`app.*`, then `index.*`, then
/// `main.*`, else the lexicographically first path); `overrides` maps a
/// group key to an explicit main path and wins over the heuristic.
pub fn designate_mains(
    tree: &ProjectTree,
    overrides: Option<&BTreeMap<String, String>>,
) -> Result<MainPlan, TreeError> {
    if tree.file_count() == 0 {
        return Err(TreeError::EmptyTree);
    }

    let mut buckets: Vec<(String, Vec<String>)> = Vec::new();
    let root_files: Vec<String> = tree
        .root()
        .children
        .iter()
        .filter(|c| c.is_file())
        .map(|c| c.path.clone())
        .collect();
    if !root_files.is_empty() {
        buckets.push((".".to_owned(), root_files));
    }
    for child in &tree.root().children {
        if child.kind == NodeKind::Directory {
            let mut files = Vec::new();
            collect_files(child, &mut files);
            if !files.is_empty() {
                buckets.push((child.name.clone(), files.iter().map(|s| s.to_string()).collect()));
            }
        }
    }

    let mut used_overrides: BTreeSet<String> = BTreeSet::new();
    let mut groups = Vec::with_capacity(buckets.len());
    for (key, files) in buckets {
        let main_path = match overrides.and_then(|m| m.get(&key)) {
            Some(wanted) => {
                used_overrides.insert(key.clone());
                if !tree.contains_file(wanted) {
                    return Err(TreeError::InvalidOverride {
                        reason: format!("{wanted} is not a file in the tree"),
                    });
                }
                if !files.iter().any(|f| f == wanted) {
                    return Err(TreeError::InvalidOverride {
                        reason: format!("{wanted} is not part of group {key}"),
                    });
                }
                wanted.clone()
            }
            None => files
                .iter()
                .min_by_key(|p| main_priority(p))
                .expect("buckets are non-empty")
                .clone(),
        };
        let dependency_paths = files.into_iter().filter(|f| *f != main_path).collect();
        groups.push(MainGroup {
            key,
            main_path,
            dependency_paths,
        });
    }

    if let Some(map) = overrides {
        for key in map.keys() {
            if !used_overrides.contains(key) {
                return Err(TreeError::InvalidOverride {
                    reason: format!("no group named {key}"),
                });
            }
        }
    }

    Ok(MainPlan { groups })
}

/// Ask the backend for a project tree listing using the canonical structure
/// prompt. Returns the raw completion text; callers run [`parse_tree`] on it
/// (which also strips a wrapping code fence). The call is metered under the
/// `tree` phase.
pub fn generate_tree_text(session: &MeteredBackend<'_>) -> Result<String, BackendError> {
    let request = CompletionRequest::new(
        prompts::TREE_PROMPT,
        RequestTags::new(Phase::Tree, None, 0),
    );
    Ok(session.complete(&request)?.text)
}
