use ntnet::cli;
use ntnet::executor::StopSignal;

fn main() {
    let signal = StopSignal::new();
    let handler_signal = signal.clone();
    // Without a handler Ctrl-C still terminates the process, just without a partial trace.
    let _ = ctrlc::set_handler(move || handler_signal.stop());
    let code = cli::run_with_signal(
        std::env::args_os(),
        &mut std::io::stdin().lock(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
        Some(signal),
    );
    std::process::exit(code);
}
