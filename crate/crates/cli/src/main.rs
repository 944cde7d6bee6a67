use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let results_root = std::env::var_os(ntn_hfl_cli::RESULTS_DIR_ENV).map(Into::into);
    let code = ntn_hfl_cli::run_cli(std::env::args_os(), results_root, &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code)
}
