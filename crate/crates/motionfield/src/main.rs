use clap::Parser;

fn main() {
    let cli = motionfield::cli::Cli::parse();
    if let Err(err) = motionfield::cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
