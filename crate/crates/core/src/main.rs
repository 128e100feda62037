use std::io;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let code = featlip::cli::main_with_args(&argv, &mut io::stdout().lock(), &mut io::stderr().lock());
    std::process::exit(code);
}
