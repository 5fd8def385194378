use clap::Parser;

use retrans_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("retrans: {e}");
        std::process::exit(e.code);
    }
}
