fn main() {
    std::process::exit(localcorr::app::main());
}
