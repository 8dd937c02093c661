use clap::Parser;

fn main() {
    let cli = cfshare_cli::Cli::parse();
    match cfshare_cli::execute(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
