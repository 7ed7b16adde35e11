use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FUNBOOST_LOG", "warn")).init();
    let cli = funboost_cli::Cli::parse();
    if let Err(e) = funboost_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
