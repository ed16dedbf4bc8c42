fn main() { std::process::exit(drcurve::cli::run()); }
