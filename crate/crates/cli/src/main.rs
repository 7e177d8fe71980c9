use clap::Parser;

fn main() {
    let cli = hdc_hwcal_cli::Cli::parse();
    match hdc_hwcal_cli::execute(cli) {
        Ok(lines) => lines.iter().for_each(|l| println!("{l}")),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
