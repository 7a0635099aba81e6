use clap::Parser;

fn main() {
    let cli = subart::cli::Cli::parse();
    std::process::exit(subart::cli::run(cli));
}
