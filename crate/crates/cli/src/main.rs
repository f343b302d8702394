use std::io::{self, Write};

fn main() {
    let mut out = io::BufWriter::new(io::stdout());
    let mut err = io::stderr();
    let code = scan3d_cli::main_with_args(std::env::args_os().collect(), &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code.code());
}
