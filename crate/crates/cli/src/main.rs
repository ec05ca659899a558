use clap::Parser;
use mimo_ace_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            for f in &report.files {
                println!("{}  {}", f.sha256, f.name);
            }
            println!("manifest: {}", report.manifest.display());
        }
        Err(e) => {
            eprintln!("{}", e.record());
            std::process::exit(e.exit_code());
        }
    }
}
