use clap::Parser;

fn main() {
    let cli = qnetlab_cli::Cli::parse();
    match qnetlab_cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
