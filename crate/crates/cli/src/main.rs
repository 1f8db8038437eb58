use std::process::exit;

fn main() {
    exit(hotspots_cli::run(std::env::args_os()));
}
