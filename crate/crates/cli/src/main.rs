use clap::Parser;

fn main() {
    let cli = asl_cli::Cli::parse();
    match asl_cli::run(&cli) {
        Ok(summary) => println!("{}", summary.display()),
        Err(e) => {
            eprintln!("asl: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
