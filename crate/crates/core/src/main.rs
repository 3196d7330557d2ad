use clap::Parser;

fn main() {
    let cli = aqcl::cli::Cli::parse();
    if let Err(err) = aqcl::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
