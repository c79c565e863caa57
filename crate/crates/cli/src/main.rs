use clap::Parser;

fn main() {
    let cli = edqnm_lab_cli::Cli::parse();
    if let Err(e) = edqnm_lab_cli::run(cli) {
        eprintln!("edqnm-lab: {e}");
        std::process::exit(e.exit_code());
    }
}
