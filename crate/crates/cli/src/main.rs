fn main() {
    let (mut stdin, mut stdout, mut stderr) = (std::io::stdin(), std::io::stdout(), std::io::stderr());
    let mut io = loopsift_cli::Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr };
    let code = loopsift_cli::run(std::env::args_os(), &mut io);
    std::process::exit(code);
}
