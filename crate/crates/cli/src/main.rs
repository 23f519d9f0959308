use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conformal_core::harness::{self, Mode, Overrides};

/// Conformal-method constraint solver on the reduced S¹×S² background.
#[derive(Parser)]
#[command(name = "conformal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mode named in the config file.
    Solve(Common),
    /// Parameter sweep over the [sweep] section.
    Sweep(Common),
    /// Coupled solve plus Moser chain and lower-bound audits.
    Certify(Common),
    /// Continuation to lambda = 1 against the coupled fixed point.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Fail on advisory checks too.
    #[arg(long)]
    strict: bool,
    /// Output directory; overrides [output].dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, mode) = match cli.command {
        Command::Solve(c) => (c, None),
        Command::Sweep(c) => (c, Some(Mode::Sweep)),
        Command::Certify(c) => (c, Some(Mode::Certify)),
        Command::Compare(c) => (c, Some(Mode::Compare)),
    };
    let overrides = Overrides {
        mode,
        strict: common.strict,
        out: common.out,
    };
    let (output, dir) = harness::run_path(&common.config, &overrides);
    let report = &output.report;
    match output.write(&dir) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: could not write outputs: {e}"),
    }
    if let Some(err) = &report.error {
        match &err.key {
            Some(key) => eprintln!("error [{}] in `{key}`: {}", err.class, err.message),
            None => eprintln!("error [{}]: {}", err.class, err.message),
        }
    }
    for inv in report.invariants.iter().filter(|i| !i.passed) {
        let tag = if inv.asserted || report.strict { "FAIL" } else { "warn" };
        eprintln!("{tag} {}: {:e} > {:e}", inv.name, inv.value, inv.bound);
    }
    println!("{}", serde_status(report));
    ExitCode::from(report.exit_code as u8)
}

fn serde_status(report: &harness::Report) -> String {
    let status = match report.status {
        harness::Status::Pass => "pass",
        harness::Status::Fail => "fail",
        harness::Status::Error => "error",
    };
    format!("status: {status} (exit {})", report.exit_code)
}
