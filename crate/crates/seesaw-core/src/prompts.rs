//! Prompt templates. The templates live as text assets under
//! `assets/prompts/` so every prompt a run can send is auditable in the
//! repo; this module fills their placeholders.

/// User message asking the backend for a project tree listing.
pub const TREE_PROMPT: &str = include_str!("../assets/prompts/tree.txt");

/// Main-file generation template. Placeholders: `{TREE}`, `{CONTEXT_BLOCK}`,
/// `{MAIN_PATH}`, `{DEPS_BLOCK}`.
pub const SEE_TEMPLATE: &str = include_str!("../assets/prompts/see.txt");

/// Dependency generation template. Placeholders: `{CONTEXT_BLOCK}`,
/// `{MAIN_PATH}`, `{MAIN_CODE}`, `{OTHER_DEPS_BLOCK}`, `{TARGET_PATH}`.
pub const SAW_TEMPLATE: &str = include_str!("../assets/prompts/saw.txt");

/// Judge template. Placeholders: `{MAIN_PATH}`, `{MAIN_CODE}`,
/// `{DEPS_BLOCK}`. Its reply grammar must stay in lock-step with
/// `validator::parse_verdict`.
pub const VALIDATE_TEMPLATE: &str = include_str!("../assets/prompts/validate.txt");

/// A dependency as seen by the see prompt: path plus contents once the file
/// has been generated.
pub type DepView<'a> = (&'a str, Option<&'a str>);

fn file_block(path: &str, content: &str) -> String {
    format!("--- {path} ---\n{content}\n")
}

fn listing_block(files: &[(&str, &str)]) -> String {
    if files.is_empty() {
        return "(none)\n".to_owned();
    }
    files
        .iter()
        .map(|(path, content)| file_block(path, content))
        .collect()
}

/// Read-only preamble carrying the finished files of earlier groups; empty
/// when there are none.
fn context_block(context: &[(String, String)]) -> String {
    if context.is_empty() {
        return String::new();
    }
    let mut block =
        String::from("Files already completed elsewhere in this project (read-only context):\n");
    for (path, content) in context {
        block.push_str(&file_block(path, content));
    }
    block.push('\n');
    block
}

pub fn see_prompt(
    tree_text: &str,
    main_path: &str,
    deps: &[DepView<'_>],
    context: &[(String, String)],
) -> String {
    let deps_block = if deps.is_empty() {
        "(none)\n".to_owned()
    } else {
        deps.iter()
            .map(|(path, content)| match content {
                Some(body) => file_block(path, body),
                None => format!("- {path} (not generated yet)\n"),
            })
            .collect()
    };
    SEE_TEMPLATE
        .replace("{TREE}", tree_text)
        .replace("{CONTEXT_BLOCK}", &context_block(context))
        .replace("{MAIN_PATH}", main_path)
        .replace("{DEPS_BLOCK}", &deps_block)
}

pub fn saw_prompt(
    main_path: &str,
    main_code: &str,
    target_path: &str,
    others: &[(&str, &str)],
    context: &[(String, String)],
) -> String {
    SAW_TEMPLATE
        .replace("{CONTEXT_BLOCK}", &context_block(context))
        .replace("{MAIN_PATH}", main_path)
        .replace("{MAIN_CODE}", main_code)
        .replace("{OTHER_DEPS_BLOCK}", &listing_block(others))
        .replace("{TARGET_PATH}", target_path)
}

pub fn validate_prompt(main_path: &str, main_code: &str, deps: &[(&str, &str)]) -> String {
    VALIDATE_TEMPLATE
        .replace("{MAIN_PATH}", main_path)
        .replace("{MAIN_CODE}", main_code)
        .replace("{DEPS_BLOCK}", &listing_block(deps))
}
