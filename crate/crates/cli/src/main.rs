use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = taxi_alert::Cli::parse();
    match taxi_alert::run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
