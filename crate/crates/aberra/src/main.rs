fn main() {
    // Exit codes: 0 success, 1 user error, 2 internal error. A panic is by
    // definition internal.
    let code = std::panic::catch_unwind(aberra::cli::run).unwrap_or_else(|_| {
        eprintln!("internal error: unexpected panic");
        2
    });
    std::process::exit(code);
}
