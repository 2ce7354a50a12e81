//! Key-value configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment. A key is either a
//! bare argument name (`workers = 8`), applied to every subcommand accepting
//! it, or is prefixed with a subcommand path (`run.workers = 8`,
//! `topics.fit.dim = 32`). Dashes and underscores are interchangeable.
//! Values become argument defaults, so anything given on the command line wins.

use std::collections::BTreeMap;
use std::path::Path;

use clap::Command;

use crate::CliError;

pub type ConfigMap = BTreeMap<String, String>;

pub fn parse(text: &str) -> Result<ConfigMap, CliError> {
    let mut out = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", i + 1)));
        }
        let value = v.trim().trim_matches('"').to_string();
        out.insert(key, value);
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<ConfigMap, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    parse(&text)
}

/// Finds `--config <path>` or `--config=<path>` before clap sees the arguments.
pub fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Installs config values as argument defaults throughout `cmd`.
/// Keys that match no argument anywhere are rejected.
pub fn apply(cmd: Command, config: &ConfigMap) -> Result<Command, CliError> {
    let mut used = vec![false; config.len()];
    let cmd = apply_at(cmd, "", config, &mut used);
    let unknown: Vec<&str> = config
        .keys()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(k, _)| k.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::usage(format!("unknown config keys: {}", unknown.join(", "))));
    }
    Ok(cmd)
}

fn apply_at(mut cmd: Command, prefix: &str, config: &ConfigMap, used: &mut [bool]) -> Command {
    let ids: Vec<String> = cmd
        .get_arguments()
        .filter(|a| !a.is_positional() && a.get_id() != "config")
        .map(|a| a.get_id().to_string())
        .collect();
    for id in ids {
        let scoped = format!("{prefix}{id}");
        // a scoped key beats a bare one
        let hit = config
            .keys()
            .position(|k| *k == scoped)
            .or_else(|| config.keys().position(|k| *k == id));
        if let Some(i) = hit {
            used[i] = true;
            // clap wants a static default; the config lives for the whole run anyway
            let value: &'static str = Box::leak(config.values().nth(i).unwrap().clone().into_boxed_str());
            cmd = cmd.mut_arg(id.as_str(), |a| a.default_value(value).required(false));
        }
    }
    let subs: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in subs {
        let sub_prefix = format!("{prefix}{}.", name.replace('-', "_"));
        cmd = cmd.mut_subcommand(name.as_str(), |s| apply_at(s, &sub_prefix, config, used));
    }
    cmd
}
