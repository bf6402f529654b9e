use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nf_core::dsl::{self, DslError, ErrorKind, Format, NumericOptions, Options};
use nf_core::oracle;

#[derive(Parser)]
#[command(name = "nf", version, about = "Exact symbolic Finsler geometry: curvature tensors and nullity distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(clap::Args)]
struct Common {
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    /// Maximum number of case splits on parametric pivots.
    #[arg(long, default_value_t = 2)]
    split_depth: usize,
    /// Cross-check against the numeric oracle, e.g.
    /// `--check-numeric points=20 tol=1e-9 seed=7`.
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
    check_numeric: Option<Vec<String>>,
    /// Working precision of the numeric oracle, in decimal digits.
    #[arg(long, value_name = "DIGITS")]
    precision: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a script.
    Run {
        file: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce one of the worked examples (ex1, ex2, ex3).
    Example {
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn options(c: &Common) -> Result<Options, String> {
    let numeric = match &c.check_numeric {
        None => None,
        Some(kvs) => {
            let mut o = NumericOptions::default();
            for kv in kvs {
                o = o.apply(kv).ok_or_else(|| format!("invalid --check-numeric setting '{kv}'"))?;
            }
            Some(o)
        }
    };
    if let Some(d) = c.precision {
        if !(10..=2000).contains(&d) {
            return Err(format!("--precision must be between 10 and 2000 digits, got {d}"));
        }
        oracle::set_precision_digits(d);
    }
    Ok(Options {
        format: match c.format {
            OutputFormat::Text => Format::Text,
            OutputFormat::Json => Format::Json,
        },
        split_depth: c.split_depth,
        numeric,
    })
}

fn fail(e: &DslError, source: Option<&str>) -> ExitCode {
    match source {
        Some(path) if e.line > 0 => eprintln!("{path}:{e}"),
        _ => eprintln!("nf: {}", e.message),
    }
    ExitCode::from(e.kind.exit_code() as u8)
}

fn usage(msg: String) -> ExitCode {
    eprintln!("nf: {msg}");
    ExitCode::from(ErrorKind::Usage.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ErrorKind::Usage.exit_code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (result, source) = match &cli.command {
        Command::Run { file, common } => {
            let opts = match options(common) {
                Ok(o) => o,
                Err(m) => return usage(m),
            };
            let text = match std::fs::read_to_string(file) {
                Ok(t) => t,
                Err(e) => return usage(format!("cannot read {}: {e}", file.display())),
            };
            (dsl::run_script(&text, opts), Some(file.display().to_string()))
        }
        Command::Example { name, common } => {
            let opts = match options(common) {
                Ok(o) => o,
                Err(m) => return usage(m),
            };
            (dsl::run_example(name, opts.clone()).map_err(|e| (dsl::Session::new(opts), e)), None)
        }
    };
    match result {
        Ok(session) => {
            print!("{}", session.render());
            if session.failed_checks {
                eprintln!("nf: one or more checks failed");
                ExitCode::from(ErrorKind::Check.exit_code() as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err((session, e)) => {
            print!("{}", session.render());
            fail(&e, source.as_deref())
        }
    }
}
