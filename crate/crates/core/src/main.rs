fn main() {
    std::process::exit(endohaptics::cli::run());
}
