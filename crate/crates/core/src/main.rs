fn main() {
    let outcome = saescope::cli::run(std::env::args_os());
    for line in &outcome.messages {
        eprintln!("{line}");
    }
    std::process::exit(outcome.exit_code);
}
