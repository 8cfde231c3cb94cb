use clap::Parser;

fn main() {
    let cli = scbf_core::cli::Cli::parse();
    std::process::exit(scbf_core::cli::run_cli(cli));
}
