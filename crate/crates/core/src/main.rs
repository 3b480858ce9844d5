use clap::Parser;

fn main() {
    let cli = mpr_core::cli::Cli::parse();
    if let Err(e) = mpr_core::cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
