//! Run configuration: JSON config file merged with CLI flags (flags win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use seesaw_core::backend::DEFAULT_MAX_TOKENS;
use seesaw_core::engine::{ConvergencePolicy, MisalignmentAction, RunMode};
use seesaw_core::validator::ValidationMode;

/// On-disk run configuration. Every field is optional; CLI flags override.
/// The API key is not a config field; it comes from `SEESAW_API_KEY` only.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub mode: Option<String>,
    /// "script" or "http"; inferred from `script`/`base_url` when absent.
    pub backend: Option<String>,
    pub tree: Option<PathBuf>,
    pub generate_tree: Option<bool>,
    pub script: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub max_rounds: Option<u32>,
    pub validation: Option<String>,
    pub misalignment_action: Option<String>,
    pub main_overrides: Option<BTreeMap<String, String>>,
    pub token_cap: Option<u32>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}

/// Which completion provider a run talks to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Script { script: PathBuf },
    Http { base_url: String, model: String },
}

/// A fully resolved run: every knob pinned.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub mode: RunMode,
    pub tree_path: PathBuf,
    pub generate_tree: bool,
    pub backend: BackendChoice,
    pub out: PathBuf,
    pub report: PathBuf,
    pub policy: ConvergencePolicy,
    pub main_overrides: Option<BTreeMap<String, String>>,
    pub token_cap: u32,
}

/// Flag-level view of a run; `None` defers to the config file, then to
/// defaults.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub mode: Option<String>,
    pub tree: Option<PathBuf>,
    pub generate_tree: bool,
    pub script: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub max_rounds: Option<u32>,
    pub validation: Option<String>,
    pub misalignment_action: Option<String>,
    pub main_overrides: Vec<(String, String)>,
    pub token_cap: Option<u32>,
}

pub fn resolve(file: RunConfigFile, flags: RunOverrides) -> Result<ResolvedRun, String> {
    let mode_str = flags.mode.or(file.mode).unwrap_or_else(|| "seesaw".to_owned());
    let mode = RunMode::parse(&mode_str)
        .ok_or_else(|| format!("unknown mode {mode_str:?} (expected seesaw or standard)"))?;

    let tree_path = flags
        .tree
        .or(file.tree)
        .ok_or_else(|| "no tree file given (use --tree)".to_owned())?;
    let generate_tree = flags.generate_tree || file.generate_tree.unwrap_or(false);

    let script = flags.script.or(file.script);
    let base_url = flags.base_url.or(file.base_url);
    let model = flags.model.or(file.model);
    let backend_kind = match file.backend.as_deref() {
        Some("script") => Some(true),
        Some("http") => Some(false),
        Some(other) => return Err(format!("unknown backend {other:?} (expected script or http)")),
        None => None,
    };
    let use_script = match backend_kind {
        Some(kind) => kind,
        None => match (&script, &base_url) {
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(_), Some(_)) => {
                return Err("both --script and --base-url given; pick one backend".to_owned())
            }
            (None, None) => {
                return Err("no backend configured (use --script or --base-url/--model)".to_owned())
            }
        },
    };
    let backend = if use_script {
        BackendChoice::Script {
            script: script.ok_or_else(|| "script backend needs --script".to_owned())?,
        }
    } else {
        BackendChoice::Http {
            base_url: base_url.ok_or_else(|| "http backend needs --base-url".to_owned())?,
            model: model.ok_or_else(|| "http backend needs --model".to_owned())?,
        }
    };

    let validation_str = flags
        .validation
        .or(file.validation)
        .unwrap_or_else(|| ValidationMode::default().as_str().to_owned());
    let validation_mode = ValidationMode::parse(&validation_str)
        .ok_or_else(|| format!("unknown validation mode {validation_str:?}"))?;
    let action_str = flags
        .misalignment_action
        .or(file.misalignment_action)
        .unwrap_or_else(|| MisalignmentAction::default().as_str().to_owned());
    let misalignment_action = MisalignmentAction::parse(&action_str)
        .ok_or_else(|| format!("unknown misalignment action {action_str:?}"))?;

    let defaults = ConvergencePolicy::default();
    let policy = ConvergencePolicy {
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
        max_rounds_per_group: flags
            .max_rounds
            .or(file.max_rounds)
            .unwrap_or(defaults.max_rounds_per_group),
        misalignment_action,
        validation_mode,
    };
    policy.check().map_err(|e| e.to_string())?;

    let mut main_overrides = file.main_overrides.unwrap_or_default();
    for (key, value) in flags.main_overrides {
        main_overrides.insert(key, value);
    }

    Ok(ResolvedRun {
        mode,
        tree_path,
        generate_tree,
        backend,
        out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("seesaw-out")),
        report: flags
            .report
            .or(file.report)
            .unwrap_or_else(|| PathBuf::from("seesaw-report.json")),
        policy,
        main_overrides: if main_overrides.is_empty() { None } else { Some(main_overrides) },
        token_cap: flags.token_cap.or(file.token_cap).unwrap_or(DEFAULT_MAX_TOKENS),
    })
}

/// Parse one `GROUP=PATH` main override flag.
pub fn parse_override(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((key, value)) if !key.is_empty() && !value.is_empty() => {
            Ok((key.to_owned(), value.to_owned()))
        }
        _ => Err(format!("bad --main-override {raw:?} (expected GROUP=PATH)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_config_file() {
        let file: RunConfigFile = serde_json::from_str(
            r#"{"mode": "standard", "tree": "t.txt", "script": "s.jsonl", "epsilon": 0.2}"#,
        )
        .unwrap();
        let flags = RunOverrides {
            mode: Some("seesaw".into()),
            epsilon: Some(0.05),
            ..RunOverrides::default()
        };
        let resolved = resolve(file, flags).unwrap();
        assert_eq!(resolved.mode, RunMode::Seesaw);
        assert_eq!(resolved.policy.epsilon, 0.05);
        assert_eq!(resolved.backend, BackendChoice::Script { script: "s.jsonl".into() });
        assert_eq!(resolved.token_cap, DEFAULT_MAX_TOKENS);
    }

    #[test]
    fn http_backend_requires_base_url_and_model() {
        let file: RunConfigFile =
            serde_json::from_str(r#"{"tree": "t.txt", "base_url": "http://x"}"#).unwrap();
        let err = resolve(file, RunOverrides::default()).unwrap_err();
        assert!(err.contains("--model"), "{err}");
    }

    #[test]
    fn missing_backend_is_a_config_error() {
        let file: RunConfigFile = serde_json::from_str(r#"{"tree": "t.txt"}"#).unwrap();
        assert!(resolve(file, RunOverrides::default()).is_err());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfigFile>(r#"{"api_key": "nope"}"#).is_err());
    }

    #[test]
    fn override_flag_parsing() {
        assert_eq!(
            parse_override("frontend=frontend/src/index.js").unwrap(),
            ("frontend".to_owned(), "frontend/src/index.js".to_owned())
        );
        assert!(parse_override("frontend").is_err());
        assert!(parse_override("=x").is_err());
    }

    #[test]
    fn invalid_policy_values_are_rejected() {
        let file: RunConfigFile = serde_json::from_str(
            r#"{"tree": "t.txt", "script": "s.jsonl", "epsilon": 1.5}"#,
        )
        .unwrap();
        assert!(resolve(file, RunOverrides::default()).is_err());
    }
}
