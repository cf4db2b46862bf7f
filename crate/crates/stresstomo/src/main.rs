use clap::Parser;
use stresstomo::cli::{run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        // Several error types already embed their cause in their message.
        let mut msg = e.to_string();
        for cause in e.chain().skip(1) {
            let c = cause.to_string();
            if !msg.contains(&c) {
                msg = format!("{msg}: {c}");
            }
        }
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
