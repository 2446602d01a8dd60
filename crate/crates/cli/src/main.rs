use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use simpleq_cli::report::summary_line;
use simpleq_cli::{emit, render, run, RunConfig};

/// Solve the radial ground-state equation for a repulsive potential and report the results.
///
/// Every option is also a configuration key (`--grid-n 4095` is `grid-n = 4095`);
/// flags override the file. Keys without a dedicated flag go through `--set`.
#[derive(Debug, Parser)]
#[command(name = "simpleq", version)]
struct Args {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// solve, sweep, invert, observables, audit or validate-explicit.
    #[arg(long)]
    mode: Option<String>,
    /// gaussian, explicit or table.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    amp: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    b: Option<String>,
    #[arg(long)]
    c: Option<String>,
    /// Two-column `r v(r)` file for the table potential.
    #[arg(long)]
    table: Option<String>,
    #[arg(long = "e")]
    e: Option<String>,
    #[arg(long)]
    e_min: Option<String>,
    #[arg(long)]
    e_max: Option<String>,
    #[arg(long)]
    e_steps: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    grid_n: Option<String>,
    #[arg(long)]
    r_max: Option<String>,
    /// fourier, monotone or cross.
    #[arg(long)]
    scheme: Option<String>,
    /// Output directory; without it the primary table goes to standard output.
    #[arg(long)]
    out: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        let flags = [
            ("mode", &self.mode),
            ("potential", &self.potential),
            ("amp", &self.amp),
            ("width", &self.width),
            ("b", &self.b),
            ("c", &self.c),
            ("table", &self.table),
            ("e", &self.e),
            ("e-min", &self.e_min),
            ("e-max", &self.e_max),
            ("e-steps", &self.e_steps),
            ("rho", &self.rho),
            ("grid-n", &self.grid_n),
            ("r-max", &self.r_max),
            ("scheme", &self.scheme),
            ("out", &self.out),
            ("format", &self.format),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        for kv in &self.set {
            match kv.split_once('=') {
                Some((k, v)) => out.push((k.trim().to_string(), v.trim().to_string())),
                None => return Err(format!("--set expects key=value, got '{kv}'")),
            }
        }
        Ok(out)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let overrides = match args.overrides() {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::load(args.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let bundle = match run(&config) {
        Ok(b) => b,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let written = match &config.out {
        Some(dir) => emit(&bundle, config.format, dir),
        None => render(&bundle, config.format).and_then(|text| {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(Vec::new())
        }),
    };
    match written {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    }
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    for f in &bundle.failures {
        eprintln!("failed: {f}");
    }
    eprintln!("{}", summary_line(&bundle));
    ExitCode::from(bundle.exit_code as u8)
}
