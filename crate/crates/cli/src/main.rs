use std::io::Write;

fn main() {
    let out = backbif_cli::run(std::env::args_os());
    std::io::stdout().write_all(&out.stdout).expect("stdout");
    if !out.stderr.is_empty() {
        eprintln!("{}", out.stderr.trim_end());
    }
    std::process::exit(out.code);
}
