//! CLI front end: `tree` handling, `run` in either mode, `report`
//! comparison tables/charts, and ledger `replay`.

pub mod commands;
pub mod config;
pub mod format;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{EXIT_CONFIG, EXIT_OK};
use config::{BackendChoice, RunConfigFile, RunOverrides};

#[derive(Debug, Parser)]
#[command(
    name = "seesaw",
    version,
    about = "Drive a completion backend to generate a multi-file project, alternating main-file and dependency generation with alignment validation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, render, or generate project tree listings
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Generate a project from a tree, in see-saw or standard mode
    Run(Box<RunArgs>),
    /// Print the token/time comparison for one or two run reports
    Report {
        /// Run report JSON; repeat the flag to compare two runs
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        /// Also emit SVG charts into this directory
        #[arg(long)]
        svg_dir: Option<PathBuf>,
    },
    /// Re-summarize a stored calls CSV without any backend
    Replay {
        /// calls CSV exported by a previous run
        #[arg(long)]
        calls: PathBuf,
        /// Mode to label the rebuilt report with (seesaw|standard)
        #[arg(long)]
        mode: Option<String>,
        /// Where to write the rebuilt report JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum TreeAction {
    /// Validate a tree file and print its file/directory counts
    Parse {
        #[arg(long)]
        tree: PathBuf,
    },
    /// Parse a tree file and print (or write) its canonical rendering
    Render {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask the backend for a fresh tree listing and write it
    Generate {
        /// Replay script (JSON Lines) for the scripted backend
        #[arg(long)]
        script: Option<PathBuf>,
        /// Base URL of an OpenAI-compatible endpoint
        #[arg(long)]
        base_url: Option<String>,
        /// Model name for the HTTP backend
        #[arg(long)]
        model: Option<String>,
        /// Where to write the generated listing
        #[arg(long)]
        out_tree: PathBuf,
        /// Per-request token cap
        #[arg(long)]
        token_cap: Option<u32>,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// seesaw (default) or standard
    #[arg(long)]
    mode: Option<String>,
    /// Project tree listing to read (or to write with --generate-tree)
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Generate the tree via the backend instead of reading it
    #[arg(long)]
    generate_tree: bool,
    /// Replay script (JSON Lines) for the scripted backend
    #[arg(long)]
    script: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible endpoint
    #[arg(long)]
    base_url: Option<String>,
    /// Model name for the HTTP backend
    #[arg(long)]
    model: Option<String>,
    /// Output directory mirroring the tree
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed-point threshold on the inter-round distance
    #[arg(long)]
    epsilon: Option<f64>,
    /// Round cap per group
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Validation layers: both (default), static_only, llm_only
    #[arg(long)]
    validation: Option<String>,
    /// adopt_rewrite_then_restart (default), regenerate_main_then_restart,
    /// regenerate_main_then_resume
    #[arg(long)]
    misalignment_action: Option<String>,
    /// Where to write the report JSON (CSV series land next to it)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Explicit main file for a group, as GROUP=PATH (repeatable)
    #[arg(long = "main-override", value_name = "GROUP=PATH")]
    main_overrides: Vec<String>,
    /// Per-request token cap
    #[arg(long)]
    token_cap: Option<u32>,
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Tree { action } => match action {
            TreeAction::Parse { tree } => commands::cmd_tree_parse(&tree),
            TreeAction::Render { tree, out } => commands::cmd_tree_render(&tree, out.as_deref()),
            TreeAction::Generate {
                script,
                base_url,
                model,
                out_tree,
                token_cap,
            } => {
                let choice = match (script, base_url, model) {
                    (Some(script), None, _) => BackendChoice::Script { script },
                    (None, Some(base_url), Some(model)) => BackendChoice::Http { base_url, model },
                    _ => {
                        eprintln!(
                            "error: pick one backend: --script, or --base-url with --model"
                        );
                        return EXIT_CONFIG;
                    }
                };
                let cap = token_cap.unwrap_or(seesaw_core::backend::DEFAULT_MAX_TOKENS);
                commands::cmd_tree_generate(&choice, cap, &out_tree)
            }
        },
        Command::Run(args) => {
            let file = match &args.config {
                Some(path) => match RunConfigFile::load(path) {
                    Ok(file) => file,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_CONFIG;
                    }
                },
                None => RunConfigFile::default(),
            };
            let mut overrides = Vec::new();
            for raw in &args.main_overrides {
                match config::parse_override(raw) {
                    Ok(pair) => overrides.push(pair),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_CONFIG;
                    }
                }
            }
            let flags = RunOverrides {
                mode: args.mode,
                tree: args.tree,
                generate_tree: args.generate_tree,
                script: args.script,
                base_url: args.base_url,
                model: args.model,
                out: args.out,
                report: args.report,
                epsilon: args.epsilon,
                max_rounds: args.max_rounds,
                validation: args.validation,
                misalignment_action: args.misalignment_action,
                main_overrides: overrides,
                token_cap: args.token_cap,
            };
            match config::resolve(file, flags) {
                Ok(run) => commands::cmd_run(&run),
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Report { reports, svg_dir } => commands::cmd_report(&reports, svg_dir.as_deref()),
        Command::Replay {
            calls,
            mode,
            report,
        } => commands::cmd_replay(&calls, mode.as_deref(), report.as_deref()),
    }
}

/// Parse arguments and run. Usage errors are configuration errors (exit 1);
/// `--help`/`--version` exit 0.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli),
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            code
        }
    }
}
