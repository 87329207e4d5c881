use std::io::Write;

use clap::Parser;

use scenforge_cli::commands::{execute, Cli, EXIT_CONFIG, EXIT_OK};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(mut out) => {
            if !out.ends_with('\n') {
                out.push('\n');
            }
            // a closed pipe (`forge ... | head`) is not an error
            let _ = std::io::stdout().lock().write_all(out.as_bytes());
        }
        Err(e) => {
            eprintln!("forge: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
