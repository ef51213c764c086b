use std::process::ExitCode;

use clap::Parser;
use witsen_cli::{config, run, Args, CliError};

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let cfg = config::parse_config(args)?;
    if let Some(paths) = &args.cost_only {
        let report = run::cost_only(&cfg, &paths[0], &paths[1])?;
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        println!(
            "J1={:.8} J2={:.8} J={:.8} (M={}, error bound {:.1e})",
            report.j1, report.j2, report.total, report.segments, report.error_bound
        );
        return Ok(());
    }
    let report = run::run(&cfg, true)?;
    println!("{}", report.summary());
    println!("outputs written to {}", cfg.out.display());
    Ok(())
}
