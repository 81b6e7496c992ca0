use clap::Parser;

use qtimbre::cli::{run, Cli};
use qtimbre::qrngclient::HttpTransport;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli, &mut HttpTransport) {
        eprintln!("qtimbre: {e}");
        std::process::exit(e.exit_code());
    }
}
