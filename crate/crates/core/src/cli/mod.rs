//! Command-line front end: `gradcheck`, `train`, `eval`, `missing`, `sweep`.
//!
//! Configuration layers, lowest first: built-in defaults, `--config` file,
//! `--set key=value` pairs, dedicated flags. The seed comes from `--seed`,
//! then the config, then `CCNET_SEED`, then 0. Exit codes: 0 success,
//! 1 failed check, 2 config error, 3 I/O error.

pub mod commands;
pub mod config;
pub mod gradcheck;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, CONFIG_ECHO, SEED_ENV};
pub use gradcheck::{run_suite, CheckResult, GradcheckConfig};

use crate::error::{Error, Result};
use crate::evaluation::ProtocolFilter;

#[derive(Debug, Parser)]
#[command(name = "ccnet", version, about = "Cross-directional center loss experiments on multi-modal re-identification data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Gradcheck,
    Train,
    Eval,
    Missing,
    Sweep,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference check of every analytic gradient
    Gradcheck(Overrides),
    /// Train a model and write checkpoint, log and embeddings
    Train(Overrides),
    /// Evaluate protocol × modality-subset grid
    Eval(Overrides),
    /// Random modality-missing experiment over masked centers
    Missing(Overrides),
    /// λ/α grid: train and evaluate each cell
    Sweep(Overrides),
}

impl Command {
    pub fn split(&self) -> (CommandKind, &Overrides) {
        match self {
            Command::Gradcheck(o) => (CommandKind::Gradcheck, o),
            Command::Train(o) => (CommandKind::Train, o),
            Command::Eval(o) => (CommandKind::Eval, o),
            Command::Missing(o) => (CommandKind::Missing, o),
            Command::Sweep(o) => (CommandKind::Sweep, o),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSONL dataset manifest (default: synthetic data)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// "CCNF" embeddings aligned with the manifest
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Evaluate manifest inputs directly
    #[arg(long)]
    pub raw_features: bool,
    /// ce_only, center, hc, cdc_s, cdc_m or cdc
    #[arg(long)]
    pub loss: Option<String>,
    /// none, in, ln or alnu
    #[arg(long)]
    pub norm: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Comma-separated protocols: none, time_label, camera, viewpoint
    #[arg(long, value_delimiter = ',')]
    pub protocol: Vec<String>,
    /// Modality subset such as R+N+T; repeatable
    #[arg(long)]
    pub subset: Vec<String>,
    /// Comma-separated missing ratios
    #[arg(long, value_delimiter = ',')]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Corrupt one analytic gradient to exercise the failure path
    #[arg(long)]
    pub inject_fault: bool,
    /// Dotted override, e.g. `train.epochs=5`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

/// Builds the effective config for `kind` without touching the filesystem
/// beyond reading `--config`.
pub fn resolve_config(kind: CommandKind, o: &Overrides, env_seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::Config(format!("{}: {other}", path.display())),
        })?,
        None => RunConfig::default(),
    };
    for s in &o.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        cfg.set_path(k.trim(), v.trim())?;
    }
    if let Some(v) = &o.out {
        cfg.output_dir = v.clone();
    }
    if o.seed.is_some() {
        cfg.seed = o.seed;
    }
    if let Some(v) = &o.manifest {
        cfg.data.manifest = Some(v.clone());
    }
    if let Some(v) = &o.checkpoint {
        cfg.eval.checkpoint = Some(v.clone());
    }
    if let Some(v) = &o.embeddings {
        cfg.eval.embeddings = Some(v.clone());
    }
    if o.raw_features {
        cfg.eval.raw_features = true;
    }
    if let Some(v) = &o.loss {
        cfg.train.loss_variant = v.parse()?;
    }
    if let Some(v) = &o.norm {
        cfg.model.norm = v.parse()?;
    }
    if let Some(v) = o.lambda {
        cfg.train.lambda = v;
    }
    if let Some(v) = o.alpha {
        cfg.train.alpha = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    if !o.protocol.is_empty() {
        let ps = o.protocol.iter().map(|p| p.parse()).collect::<Result<Vec<ProtocolFilter>>>()?;
        cfg.missing.protocol = ps[0];
        cfg.sweep.protocol = ps[0];
        cfg.eval.protocols = ps;
    }
    if !o.subset.is_empty() {
        cfg.eval.subsets = o.subset.clone();
    }
    if !o.ratios.is_empty() {
        cfg.missing.ratios = o.ratios.clone();
    }
    if let Some(v) = o.trials {
        cfg.missing.trials = v;
    }
    if o.inject_fault {
        cfg.gradcheck.inject_fault = true;
    }
    cfg.resolve_seed(env_seed)?;
    cfg.validate()?;
    if matches!(kind, CommandKind::Eval | CommandKind::Missing)
        && cfg.eval.checkpoint.is_none()
        && cfg.eval.embeddings.is_none()
        && !cfg.eval.raw_features
    {
        return Err(Error::config("eval and missing need --checkpoint, --embeddings or --raw-features"));
    }
    Ok(cfg)
}

/// Resolves, echoes and runs one command.
pub fn execute(kind: CommandKind, o: &Overrides, env_seed: Option<&str>) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(kind, o, env_seed)?;
    let echo = cfg.echo()?;
    let mut files = match kind {
        CommandKind::Gradcheck => commands::cmd_gradcheck(&cfg)?,
        CommandKind::Train => commands::cmd_train(&cfg)?,
        CommandKind::Eval => commands::cmd_eval(&cfg)?,
        CommandKind::Missing => commands::cmd_missing(&cfg)?,
        CommandKind::Sweep => commands::cmd_sweep(&cfg)?,
    };
    files.insert(0, echo);
    Ok(files)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let (kind, o) = cli.command.split();
    match execute(kind, o, env_seed.as_deref()) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> (CommandKind, Overrides) {
        let cli = Cli::try_parse_from(std::iter::once("ccnet").chain(args.iter().copied())).unwrap();
        let (k, o) = cli.command.split();
        (k, o.clone())
    }

    #[test]
    fn flags_override_config_layers() {
        let (k, o) = parse(&["train", "--loss", "ce_only", "--norm", "ln", "--seed", "7", "--set", "train.epochs=4", "--epochs", "5"]);
        let cfg = resolve_config(k, &o, Some("99")).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.loss_variant.as_str(), "ce_only");
        assert_eq!(cfg.model.norm.as_str(), "ln");
    }

    #[test]
    fn env_seed_is_a_fallback() {
        let (k, o) = parse(&["gradcheck"]);
        assert_eq!(resolve_config(k, &o, Some("11")).unwrap().gradcheck.seed, 11);
        assert_eq!(resolve_config(k, &o, None).unwrap().seed, Some(0));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let (k, o) = parse(&["train", "--loss", "triplet"]);
        assert_eq!(resolve_config(k, &o, None).unwrap_err().exit_code(), 2);
        let (k, o) = parse(&["eval"]);
        assert_eq!(resolve_config(k, &o, None).unwrap_err().exit_code(), 2);
        let (k, o) = parse(&["eval", "--raw-features", "--subset", "R+X"]);
        assert_eq!(resolve_config(k, &o, None).unwrap_err().exit_code(), 2);
        let (k, o) = parse(&["train", "--config", "/nonexistent/cfg.json"]);
        assert_eq!(resolve_config(k, &o, None).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["ccnet", "frobnicate"]), 2);
        assert_eq!(main_with_args(["ccnet", "--help"]), 0);
    }
}
