use clap::Parser;
use divisor_vandermonde::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let code = run(&cli, &mut stdout.lock(), &mut std::io::stderr());
    std::process::exit(code);
}
