use clap::Parser;
use shapsrc_cli::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHAPSRC_LOG", "warn")).init();
    let cli = Cli::parse();
    match shapsrc_cli::run(&cli.command, &cli.options) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
