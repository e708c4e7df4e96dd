use clap::Parser;
use phenomap::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    std::process::exit(run(&cli));
}
