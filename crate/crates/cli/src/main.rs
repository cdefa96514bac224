use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = srmon_cli::Cli::parse();
    match srmon_cli::run(&cli) {
        Ok(out) => print!("{out}"),
        Err(e) => {
            eprintln!("srmon: {e}");
            std::process::exit(srmon_cli::exit_code(&e));
        }
    }
}
