mod commands;
mod error;
mod output;
mod registry;

use std::process::ExitCode;

use error::CliError;
use registry::Context;

fn configure_workers(flag: Option<usize>) -> Result<(), CliError> {
    let env = std::env::var("YOUNGREG_WORKERS").ok();
    let workers = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("YOUNGREG_WORKERS=`{v}` is not a count")))?,
        ),
        (None, None) => None,
    };
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Usage("worker count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run() -> Result<registry::Outcome, CliError> {
    let matches = match registry::clap_command(commands::REGISTRY).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    configure_workers(sub.get_one::<usize>("workers").copied())?;
    let cmd =
        registry::find(commands::REGISTRY, name).expect("parser only accepts registered names");
    let file = match sub.get_one::<String>("config") {
        Some(path) => Some(serde_json::from_str(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let config = registry::resolve(cmd, file, sub)?;
    cmd.run(
        config,
        &Context {
            version: youngreg::VERSION,
        },
    )
}

fn main() -> ExitCode {
    match run() {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(if outcome.numerical_failure { 3 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
