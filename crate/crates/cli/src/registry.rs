//! Subcommands are registered by name behind a common trait; the argument
//! parser is assembled from the registry at startup.

use clap::{Arg, ArgAction, ArgMatches};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Value type of a flag, used both for parsing and for config-file merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Text,
    /// Comma-separated reals, e.g. `0,0.5`.
    FloatList,
    /// Comma-separated integers.
    IntList,
    /// Semicolon-separated vectors of comma-separated reals.
    FloatLists,
}

#[derive(Debug, Clone, Copy)]
pub struct Flag {
    pub name: &'static str,
    pub kind: Kind,
    pub help: &'static str,
}

pub const fn flag(name: &'static str, kind: Kind, help: &'static str) -> Flag {
    Flag { name, kind, help }
}

/// Per-invocation context shared by all commands.
pub struct Context {
    pub version: &'static str,
}

pub struct Outcome {
    pub summary: String,
    /// Set when the run finished but a numerical diagnostic failed.
    pub numerical_failure: bool,
}

pub trait Command: Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn flags(&self) -> Vec<Flag>;
    /// Default configuration, keyed by flag name.
    fn defaults(&self) -> Value;
    fn run(&self, config: Value, ctx: &Context) -> Result<Outcome, CliError>;
}

pub fn find<'a>(registry: &'a [&'a dyn Command], name: &str) -> Option<&'a dyn Command> {
    registry.iter().copied().find(|c| c.name() == name)
}

pub fn clap_command(registry: &[&dyn Command]) -> clap::Command {
    let mut app = clap::Command::new("youngreg")
        .version(youngreg::VERSION)
        .about("Experiments with averaging operators and Young ODEs driven by fractional Brownian paths")
        .subcommand_required(true)
        .arg(
            Arg::new("workers")
                .long("workers")
                .global(true)
                .value_parser(clap::value_parser!(usize))
                .help("Worker threads (falls back to YOUNGREG_WORKERS)"),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .help("JSON config file; flags take precedence over it"),
        );
    for cmd in registry {
        let mut sub = clap::Command::new(cmd.name()).about(cmd.about());
        for f in cmd.flags() {
            sub = sub.arg(
                Arg::new(f.name)
                    .long(f.name)
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(f.help),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn parse_floats(text: &str, sep: char) -> Result<Vec<f64>, CliError> {
    text.split(sep)
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("`{t}` is not a number")))
        })
        .collect()
}

pub fn parse_value(f: &Flag, raw: &str) -> Result<Value, CliError> {
    let bad = || CliError::Usage(format!("invalid value `{raw}` for --{}", f.name));
    Ok(match f.kind {
        Kind::Float => Value::from(raw.trim().parse::<f64>().map_err(|_| bad())?),
        Kind::Int => Value::from(raw.trim().parse::<u64>().map_err(|_| bad())?),
        Kind::Text => Value::from(raw),
        Kind::FloatList => Value::from(parse_floats(raw, ',')?),
        Kind::IntList => Value::from(
            raw.split(',')
                .map(|t| t.trim().parse::<u64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Kind::FloatLists => Value::from(
            raw.split(';')
                .map(|v| parse_floats(v, ','))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    })
}

/// Resolves defaults, then the config file, then explicit flags.
pub fn resolve(
    cmd: &dyn Command,
    file: Option<Value>,
    matches: &ArgMatches,
) -> Result<Value, CliError> {
    let mut merged = match cmd.defaults() {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    let known: Vec<Flag> = cmd.flags();
    if let Some(file) = file {
        let Value::Object(obj) = file else {
            return Err(CliError::Usage(
                "config file must hold a JSON object".into(),
            ));
        };
        // either a flat object or one section per subcommand
        let section = match obj.get(cmd.name()) {
            Some(Value::Object(s)) => s.clone(),
            _ => obj.into_iter().filter(|(k, _)| !k.is_empty()).collect(),
        };
        for (k, v) in section {
            if known.iter().any(|f| f.name == k) {
                merged.insert(k, v);
            } else if !is_other_section(&k) {
                return Err(CliError::Usage(format!(
                    "unknown config key `{k}` for {}",
                    cmd.name()
                )));
            }
        }
    }
    for f in &known {
        if let Some(raw) = matches.get_one::<String>(f.name) {
            merged.insert(f.name.to_string(), parse_value(f, raw)?);
        }
    }
    Ok(Value::Object(merged))
}

fn is_other_section(key: &str) -> bool {
    crate::commands::REGISTRY.iter().any(|c| c.name() == key)
}
