use std::io::Write;

use tracing_subscriber::EnvFilter;

fn main() {
    let inv = match i3_cli::parse_args(std::env::args_os()) {
        Ok(inv) => inv,
        Err(e) => {
            if e.exit_code == 0 {
                print!("{}", e.text);
            } else {
                eprint!("{}", e.text);
            }
            std::process::exit(e.exit_code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            std::process::exit(i3_cli::EXIT_TRANSPORT);
        }
    };
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr();
    let code = runtime.block_on(i3_cli::execute(
        inv,
        &mut i3_cli::Io {
            out: &mut out,
            err: &mut err,
        },
    ));
    let _ = out.flush();
    std::process::exit(code);
}
