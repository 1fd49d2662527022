use std::io::{self, BufWriter};
use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let code = hdrrdps_cli::run_cli(std::env::args_os(), &mut out, &mut io::stderr());
    ExitCode::from(code as u8)
}
