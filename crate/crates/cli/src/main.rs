mod commands;
mod config;
mod error;
mod output;

use std::collections::BTreeMap;
use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches};

use crate::config::{lookup, parse_file, Command, RunConfig, COMMON};
use crate::error::CliError;
use crate::output::{missing_tolerances, write_error};

fn flag_arg(name: &'static str) -> Arg {
    let key = lookup(name).expect("every command key is registered");
    let long = name.replace('_', "-");
    let arg = Arg::new(name).long(long).help(key.help);
    if key.switch {
        arg.action(ArgAction::SetTrue)
    } else {
        arg.value_name("VALUE").allow_hyphen_values(true)
    }
}

fn cli() -> clap::Command {
    let mut app = clap::Command::new("multibump")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Multi-bump solutions of nonlinear Schrödinger equations with small potentials")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Command::ALL {
        let mut sub = clap::Command::new(cmd.name()).about(cmd.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Read key = value settings from FILE; flags take precedence"),
        );
        for name in COMMON.iter().chain(cmd.keys()) {
            sub = sub.arg(flag_arg(name));
        }
        app = app.subcommand(sub);
    }
    app
}

fn given_flags(m: &ArgMatches, cmd: Command) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for name in COMMON.iter().chain(cmd.keys()) {
        if m.value_source(name) != Some(ValueSource::CommandLine) {
            continue;
        }
        let value = if lookup(name).is_some_and(|k| k.switch) {
            m.get_flag(name).to_string()
        } else {
            m.get_one::<String>(name).cloned().unwrap_or_default()
        };
        out.insert(name.to_string(), value);
    }
    out
}

fn execute(cmd: Command, m: &ArgMatches) -> Result<RunConfig, (Option<PathBuf>, CliError)> {
    let file = match m.get_one::<PathBuf>("config") {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
            .and_then(|text| parse_file(&text))
            .map_err(|e| (None, e))?,
        None => BTreeMap::new(),
    };
    let cfg = RunConfig::resolve(cmd, &file, &given_flags(m, cmd)).map_err(|e| (None, e))?;
    let fail = |e: CliError| (cfg.out.clone(), e);
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| fail(CliError::Config(format!("cannot start {jobs} workers: {e}"))))?;
    }
    log::info!("running {cmd}");
    let artifacts = commands::run(&cfg).map_err(fail)?;
    let doc = artifacts.document();
    debug_assert!(missing_tolerances(&doc).is_empty(), "{:?}", missing_tolerances(&doc));
    let text = serde_json::to_string_pretty(&doc).map_err(|e| fail(e.into()))?;
    if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
        if e.kind() != ErrorKind::BrokenPipe {
            return Err(fail(e.into()));
        }
    }
    if let Some(dir) = &cfg.out {
        artifacts.write(dir, &cfg.to_file()).map_err(fail)?;
    }
    let failed = doc.get("failed").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
    if cmd == Command::Verify && failed > 0 {
        let total = doc.get("criteria").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        return Err((None, CliError::Verification { failed, total }));
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let cmd = Command::from_name(name).expect("subcommands come from Command::ALL");
    match execute(cmd, sub) {
        Ok(_) => ExitCode::SUCCESS,
        Err((out, e)) => {
            eprintln!("{}", e.to_json());
            if let Some(dir) = out {
                if let Err(io) = write_error(&dir, &e) {
                    eprintln!("cannot write {}: {io}", dir.display());
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn only_explicit_flags_are_collected() {
        let m = cli().get_matches_from(["multibump", "ground-state", "--dim", "2", "--seed", "9"]);
        let (_, sub) = m.subcommand().unwrap();
        let flags = given_flags(sub, Command::GroundState);
        assert_eq!(flags.len(), 2);
        assert_eq!(flags["dim"], "2");
    }

    #[test]
    fn switches_are_recorded_as_true() {
        let m = cli().get_matches_from(["multibump", "ledger", "--polish", "--potential", "algebraic:1"]);
        let (_, sub) = m.subcommand().unwrap();
        let flags = given_flags(sub, Command::Ledger);
        assert_eq!(flags["polish"], "true");
        assert!(!flags.contains_key("refine"));
    }
}
