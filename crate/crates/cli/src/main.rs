use clap::Parser;

fn main() {
    env_logger::init();
    let cli = counsel_cli::Cli::parse();
    std::process::exit(counsel_cli::run(cli));
}
