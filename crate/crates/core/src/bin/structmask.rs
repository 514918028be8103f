use std::process::ExitCode;
use structmask::cli::{run, EXIT_OK, THREADS_ENV};

fn main() -> ExitCode {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = run(std::env::args_os());
    if result.exit_code == EXIT_OK {
        println!("{}", result.summary.trim_end());
    } else {
        eprintln!("{}", result.summary.trim_end());
    }
    ExitCode::from(result.exit_code as u8)
}
