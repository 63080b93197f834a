//! `intent-collide`: detect intent collisions across datasets, evaluate the
//! detectors, and build merged benchmark corpora.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            report_error("usage", rendered.trim(), &[]);
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            report_error("runtime", &e.to_string(), &chain);
            ExitCode::FAILURE
        }
    }
}

fn report_error(kind: &str, message: &str, causes: &[String]) {
    let err = serde_json::json!({
        "error": {
            "kind": kind,
            "message": message,
            "causes": causes,
        }
    });
    eprintln!("{err}");
}
