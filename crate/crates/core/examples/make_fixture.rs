//! Writes a toy model, a few synthetic face images and a manifest.
//!
//! cargo run -p facedesc-core --example make_fixture -- <dir> [subjects] [per_subject]

use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: make_fixture <dir> [subjects] [per_subject]");
        return ExitCode::from(1);
    };
    let subjects = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let per_subject = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    match facedesc::synthetic::write_fixture(&dir, subjects, per_subject, 1) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
