fn main() {
    std::process::exit(drgp_pac::experiment::cli_dispatch(std::env::args_os()));
}
