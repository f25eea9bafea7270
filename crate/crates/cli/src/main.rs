use clap::Parser;

fn main() {
    let cli = tinykv_cli::Cli::parse();
    std::process::exit(tinykv_cli::run(&cli));
}
