fn main() -> std::process::ExitCode {
    geofence_sim::cli::main()
}
