mod args;
mod commands;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use args::Cli;

const EXIT_USAGE: u8 = 2;
const EXIT_INTERNAL: u8 = 5;

fn error_document(kind: &str, message: &str, code: u8) {
    let doc = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                error_document("usage", &e.kind().to_string(), EXIT_USAGE);
                return ExitCode::from(EXIT_USAGE);
            }
            return ExitCode::SUCCESS;
        }
    };
    match catch_unwind(AssertUnwindSafe(|| commands::run(&cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let code = e.exit_code() as u8;
            error_document(e.kind(), &e.to_string(), code);
            ExitCode::from(code)
        }
        Err(_) => {
            error_document("internal", "unexpected internal failure", EXIT_INTERNAL);
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
