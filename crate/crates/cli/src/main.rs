fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MDIQKD_LOG", "warn")).init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = mdiqkd_cli::run_cli_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code);
}
