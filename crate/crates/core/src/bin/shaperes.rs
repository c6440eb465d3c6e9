use clap::Parser;
use shaperes::cli::{exit, run, Args};

fn main() {
    let args = Args::parse();
    match run(&args) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            std::process::exit(exit::OK);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
