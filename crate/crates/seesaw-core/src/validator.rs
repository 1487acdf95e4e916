//! Alignment validation: a deterministic relative-import check layered
//! under an LLM judge that may hand back a corrected main file.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionRequest, Phase, RequestTags};
use crate::metrics::MeteredBackend;
use crate::prompts;
use crate::tree::ProjectTree;
use crate::workspace::CodeUnit;

/// Sentinel `Finding::file` value for problems with the judge's reply itself.
pub const VERDICT_SENTINEL: &str = "(verdict)";

const RESOLVE_SUFFIXES: [&str; 4] = [".js", ".jsx", ".ts", ".json"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    UnresolvedImport,
    VerdictParseError,
    JudgeFlag,
}

/// One diagnostic attached to a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub file: String,
    pub kind: FindingKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Static,
    Llm,
    Composite,
}

/// Outcome of one validation. `aligned == true` never carries a rewrite,
/// and the static layer never rewrites code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub aligned: bool,
    pub modified_main: Option<String>,
    pub source: VerdictSource,
    pub findings: Vec<Finding>,
}

/// Which layers of the validator run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    StaticOnly,
    LlmOnly,
    #[default]
    Both,
}

impl ValidationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "static_only" => Some(Self::StaticOnly),
            "llm_only" => Some(Self::LlmOnly),
            "both" => Some(Self::Both),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StaticOnly => "static_only",
            Self::LlmOnly => "llm_only",
            Self::Both => "both",
        }
    }
}

fn import_regexes() -> &'static [Regex; 3] {
    static REGEXES: OnceLock<[Regex; 3]> = OnceLock::new();
    REGEXES.get_or_init(|| {
        [
            Regex::new(r#"require\s*\(\s*['"]([^'"]+)['"]\s*\)"#).expect("static pattern"),
            Regex::new(r#"import\s[^;]*?\bfrom\s*['"]([^'"]+)['"]"#).expect("static pattern"),
            Regex::new(r#"import\s*['"]([^'"]+)['"]"#).expect("static pattern"),
        ]
    })
}

/// Relative module references (`./`, `../`) found in `require(...)` and
/// `import ... from`/bare `import` forms, deduplicated per file.
fn relative_refs(content: &str) -> BTreeSet<String> {
    let mut refs = BTreeSet::new();
    for regex in import_regexes() {
        for capture in regex.captures_iter(content) {
            let literal = &capture[1];
            if literal.starts_with("./") || literal.starts_with("../") {
                refs.insert(literal.to_owned());
            }
        }
    }
    refs
}

/// Join a relative literal onto the importing file's directory; `None` when
/// `..` escapes above the project root.
fn resolve_relative(from_file: &str, literal: &str) -> Option<String> {
    let mut segments: Vec<&str> = from_file.split('/').collect();
    segments.pop(); // drop the file name
    for part in literal.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                segments.pop()?;
            }
            name => segments.push(name),
        }
    }
    Some(segments.join("/"))
}

fn reference_resolves(from_file: &str, literal: &str, tree: &ProjectTree) -> bool {
    let Some(base) = resolve_relative(from_file, literal) else {
        return false;
    };
    if !base.is_empty() && tree.contains_file(&base) {
        return true;
    }
    for suffix in RESOLVE_SUFFIXES {
        if tree.contains_file(&format!("{base}{suffix}")) {
            return true;
        }
    }
    tree.contains_file(&format!("{base}/index.js"))
}

/// Deterministic lower layer of the validator: resolve every relative
/// module reference in the main file and its dependencies against the tree.
/// One finding per unresolved reference; an empty list means statically
/// aligned.
pub fn static_check(main: &CodeUnit, deps: &[&CodeUnit], tree: &ProjectTree) -> Vec<Finding> {
    let mut findings = Vec::new();
    for unit in std::iter::once(main).chain(deps.iter().copied()) {
        for literal in relative_refs(&unit.content) {
            if !reference_resolves(&unit.path, &literal, tree) {
                findings.push(Finding {
                    file: unit.path.clone(),
                    kind: FindingKind::UnresolvedImport,
                    detail: format!("cannot resolve {literal:?} from {}", unit.path),
                });
            }
        }
    }
    findings
}

fn first_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    lines.find(|line| line.trim_start().starts_with("```"))?;
    let mut body = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            break;
        }
        body.push(line);
    }
    Some(body.join("\n"))
}

/// Parse a judge reply. Never fails: unintelligible input degrades to a
/// misaligned verdict carrying a parse-error finding.
///
/// Grammar: a first non-blank line of `True` (case-insensitive, trailing
/// punctuation ignored) means aligned. A first line beginning `False` means
/// misaligned; the rewrite is the first fenced code block after it, or,
/// absent a fence, everything after the `False` keyword.
pub fn parse_verdict(text: &str) -> Verdict {
    let mut lines = text.split_inclusive('\n');
    let mut consumed = 0;
    let first = loop {
        match lines.next() {
            Some(line) => {
                consumed += line.len();
                if !line.trim().is_empty() {
                    break Some(line);
                }
            }
            None => break None,
        }
    };
    let Some(first) = first else {
        return parse_error_verdict("empty reply");
    };
    let first = first.trim();
    let rest = &text[consumed.min(text.len())..];

    let keyword = first.trim_end_matches(|c: char| c.is_ascii_punctuation());
    if keyword.eq_ignore_ascii_case("true") {
        return Verdict {
            aligned: true,
            modified_main: None,
            source: VerdictSource::Llm,
            findings: Vec::new(),
        };
    }

    let lower = first.to_ascii_lowercase();
    let false_prefix = lower.starts_with("false")
        && first[5..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    if false_prefix {
        let modified_main = match first_fenced_block(rest) {
            Some(code) => Some(code),
            None => {
                let inline = first[5..].trim_start_matches([',', ':', ';']).trim();
                let mut combined = String::new();
                if !inline.is_empty() {
                    combined.push_str(inline);
                }
                let tail = rest.trim();
                if !tail.is_empty() {
                    if !combined.is_empty() {
                        combined.push('\n');
                    }
                    combined.push_str(tail);
                }
                if combined.is_empty() { None } else { Some(combined) }
            }
        };
        let detail = if modified_main.is_some() {
            "judge reported misalignment with a corrected main file"
        } else {
            "judge reported misalignment"
        };
        return Verdict {
            aligned: false,
            modified_main,
            source: VerdictSource::Llm,
            findings: vec![Finding {
                file: VERDICT_SENTINEL.to_owned(),
                kind: FindingKind::JudgeFlag,
                detail: detail.to_owned(),
            }],
        };
    }

    let mut snippet: String = first.chars().take(80).collect();
    if snippet.len() < first.len() {
        snippet.push('…');
    }
    parse_error_verdict(&format!("unrecognized verdict line: {snippet:?}"))
}

fn parse_error_verdict(detail: &str) -> Verdict {
    Verdict {
        aligned: false,
        modified_main: None,
        source: VerdictSource::Llm,
        findings: vec![Finding {
            file: VERDICT_SENTINEL.to_owned(),
            kind: FindingKind::VerdictParseError,
            detail: detail.to_owned(),
        }],
    }
}

/// Ask the judge whether the main file and its dependencies are aligned.
/// One completion, tagged `validate`; the reply goes through
/// [`parse_verdict`].
pub fn llm_validate(
    main: &CodeUnit,
    deps: &[&CodeUnit],
    session: &MeteredBackend<'_>,
    round: u32,
    tag_path: Option<&str>,
) -> Result<Verdict, BackendError> {
    let dep_views: Vec<(&str, &str)> = deps
        .iter()
        .map(|d| (d.path.as_str(), d.content.as_str()))
        .collect();
    let prompt = prompts::validate_prompt(&main.path, &main.content, &dep_views);
    let tags = RequestTags::new(
        Phase::Validate,
        Some(tag_path.unwrap_or(main.path.as_str())),
        round,
    );
    let result = session.complete(&CompletionRequest::new(prompt, tags))?;
    Ok(parse_verdict(&result.text))
}

/// The composed validator. In [`ValidationMode::Both`] the static layer runs
/// first and a resolution failure short-circuits without spending a judge
/// call; a clean static pass defers to the judge (verdict source
/// `composite`). Per call, the judge is consulted at most once.
pub fn validate(
    main: &CodeUnit,
    deps: &[&CodeUnit],
    tree: &ProjectTree,
    session: &MeteredBackend<'_>,
    mode: ValidationMode,
    round: u32,
    tag_path: Option<&str>,
) -> Result<Verdict, BackendError> {
    match mode {
        ValidationMode::StaticOnly => {
            let findings = static_check(main, deps, tree);
            Ok(Verdict {
                aligned: findings.is_empty(),
                modified_main: None,
                source: VerdictSource::Static,
                findings,
            })
        }
        ValidationMode::LlmOnly => llm_validate(main, deps, session, round, tag_path),
        ValidationMode::Both => {
            let findings = static_check(main, deps, tree);
            if !findings.is_empty() {
                return Ok(Verdict {
                    aligned: false,
                    modified_main: None,
                    source: VerdictSource::Static,
                    findings,
                });
            }
            let mut verdict = llm_validate(main, deps, session, round, tag_path)?;
            verdict.source = VerdictSource::Composite;
            Ok(verdict)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptEntry, ScriptedBackend};
    use crate::tree::parse_tree;
    use crate::workspace::{Role, UnitPhase};

    const ECOMMERCE_TREE: &str = include_str!("../tests/fixtures/ecommerce_tree.txt");

    fn unit(path: &str, content: &str) -> CodeUnit {
        CodeUnit {
            path: path.to_owned(),
            role: Role::Main,
            content: content.to_owned(),
            revision: 1,
            last_phase: Some(UnitPhase::See),
        }
    }

    #[test]
    fn resolves_relative_requires_against_the_tree() {
        let tree = parse_tree(ECOMMERCE_TREE).unwrap();
        let main = unit(
            "backend/app.js",
            r#"
const db = require('./config/db');
const routes = require('./routes');
const auth = require('./middleware/authMiddleware.js');
import productRoutes from './routes/products';
import './config/db';
"#,
        );
        assert!(static_check(&main, &[], &tree).is_empty());
    }

    #[test]
    fn flags_a_planted_missing_module() {
        let tree = parse_tree(ECOMMERCE_TREE).unwrap();
        let main = unit(
            "backend/app.js",
            "const db = require('./config/db');\nconst ghost = require('./missing');\n",
        );
        let findings = static_check(&main, &[], &tree);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].kind, FindingKind::UnresolvedImport);
        assert_eq!(findings[0].file, "backend/app.js");
        assert!(findings[0].detail.contains("./missing"));
    }

    #[test]
    fn dependencies_are_checked_too() {
        let tree = parse_tree(ECOMMERCE_TREE).unwrap();
        let main = unit("backend/app.js", "");
        let dep = unit(
            "backend/routes/auth.js",
            "const controller = require('../controllers/authController');\nconst nope = require('../nope');\n",
        );
        let findings = static_check(&main, &[&dep], &tree);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].file, "backend/routes/auth.js");
    }

    #[test]
    fn bare_module_names_are_not_relative_refs() {
        let tree = parse_tree(ECOMMERCE_TREE).unwrap();
        let main = unit(
            "backend/app.js",
            "const express = require('express');\nimport mongoose from 'mongoose';\n",
        );
        assert!(static_check(&main, &[], &tree).is_empty());
    }

    #[test]
    fn escaping_the_root_is_unresolved() {
        let tree = parse_tree("project/\n|-- a.js\n").unwrap();
        let main = unit("a.js", "require('../../outside');");
        let findings = static_check(&main, &[], &tree);
        assert_eq!(findings.len(), 1);
    }

    #[test]
    fn verdict_grammar_table() {
        // (input, aligned, has rewrite, rewrite substring, parse-error)
        let cases: [(&str, bool, bool, Option<&str>, bool); 12] = [
            ("True", true, false, None, false),
            ("true", true, false, None, false),
            ("TRUE.", true, false, None, false),
            ("\n\n  True  \n", true, false, None, false),
            ("False\n```\nconst app = 1;\n```", false, true, Some("const app = 1;"), false),
            ("False, const x = 1;", false, true, Some("const x = 1;"), false),
            ("false", false, false, None, false),
            ("False:\nline1\nline2", false, true, Some("line1\nline2"), false),
            (
                "False\n```js\nfixed();\n```\ntrailing chatter",
                false,
                true,
                Some("fixed();"),
                false,
            ),
            ("maybe?", false, false, None, true),
            ("", false, false, None, true),
            ("The code is aligned: True", false, false, None, true),
        ];
        for (input, aligned, has_rewrite, rewrite_contains, parse_error) in cases {
            let verdict = parse_verdict(input);
            assert_eq!(verdict.aligned, aligned, "aligned for {input:?}");
            assert_eq!(
                verdict.modified_main.is_some(),
                has_rewrite,
                "rewrite presence for {input:?}"
            );
            if let Some(needle) = rewrite_contains {
                let rewrite = verdict.modified_main.as_deref().unwrap();
                assert!(rewrite.contains(needle), "{rewrite:?} missing {needle:?}");
            }
            let saw_parse_error = verdict
                .findings
                .iter()
                .any(|f| f.kind == FindingKind::VerdictParseError);
            assert_eq!(saw_parse_error, parse_error, "parse error for {input:?}");
            if parse_error {
                assert_eq!(verdict.findings[0].file, VERDICT_SENTINEL);
            }
            // Core invariant on every verdict.
            assert!(!(verdict.aligned && verdict.modified_main.is_some()));
        }
    }

    #[test]
    fn fenced_rewrite_is_extracted_verbatim() {
        let verdict = parse_verdict("False\n```javascript\nconst a = 1;\nconst b = 2;\n```\n");
        assert_eq!(verdict.modified_main.as_deref(), Some("const a = 1;\nconst b = 2;"));
    }

    #[test]
    fn unterminated_fence_runs_to_the_end() {
        let verdict = parse_verdict("False\n```\nconst a = 1;");
        assert_eq!(verdict.modified_main.as_deref(), Some("const a = 1;"));
    }

    #[test]
    fn llm_validate_composes_complete_and_parse() {
        let tree = parse_tree("project/\n|-- app.js\n|-- db.js\n").unwrap();
        let backend = ScriptedBackend::new(vec![
            ScriptEntry::new(Phase::Validate, "True"),
            ScriptEntry::new(Phase::Validate, "False\n```\nrewritten\n```"),
        ]);
        let session = MeteredBackend::new(&backend);
        let main = unit("app.js", "const db = require('./db');");
        let dep = unit("db.js", "module.exports = {};");

        let v1 = llm_validate(&main, &[&dep], &session, 0, Some("db.js")).unwrap();
        assert!(v1.aligned);
        let v2 = llm_validate(&main, &[&dep], &session, 0, Some("db.js")).unwrap();
        assert!(!v2.aligned);
        assert_eq!(v2.modified_main.as_deref(), Some("rewritten"));

        let seen = backend.seen_requests();
        assert_eq!(seen.len(), 2);
        assert!(seen[0].user_text.contains("const db = require('./db');"));
        assert!(seen[0].user_text.contains("--- db.js ---"));
        assert_eq!(seen[0].tags.phase, Phase::Validate);
        assert_eq!(seen[0].tags.path.as_deref(), Some("db.js"));
        let _ = tree;
    }

    #[test]
    fn both_mode_short_circuits_on_static_findings() {
        let tree = parse_tree("project/\n|-- app.js\n").unwrap();
        let backend = ScriptedBackend::new(vec![]); // any judge call would fail
        let session = MeteredBackend::new(&backend);
        let main = unit("app.js", "require('./missing')");
        let verdict =
            validate(&main, &[], &tree, &session, ValidationMode::Both, 0, None).unwrap();
        assert!(!verdict.aligned);
        assert_eq!(verdict.source, VerdictSource::Static);
        assert!(verdict.modified_main.is_none());
        assert_eq!(session.calls_so_far(), 0);
    }

    #[test]
    fn both_mode_defers_to_the_judge_when_static_is_clean() {
        let tree = parse_tree("project/\n|-- app.js\n").unwrap();
        let backend = ScriptedBackend::new(vec![ScriptEntry::new(Phase::Validate, "True")]);
        let session = MeteredBackend::new(&backend);
        let main = unit("app.js", "const x = 1;");
        let verdict =
            validate(&main, &[], &tree, &session, ValidationMode::Both, 0, None).unwrap();
        assert!(verdict.aligned);
        assert_eq!(verdict.source, VerdictSource::Composite);
        assert_eq!(session.calls_so_far(), 1);
    }

    #[test]
    fn static_only_mode_never_calls_the_backend() {
        let tree = parse_tree("project/\n|-- app.js\n").unwrap();
        let backend = ScriptedBackend::new(vec![]);
        let session = MeteredBackend::new(&backend);
        let main = unit("app.js", "const x = 1;");
        let verdict =
            validate(&main, &[], &tree, &session, ValidationMode::StaticOnly, 0, None).unwrap();
        assert!(verdict.aligned);
        assert_eq!(verdict.source, VerdictSource::Static);
        assert_eq!(session.calls_so_far(), 0);
    }
}
