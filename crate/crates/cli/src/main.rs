use std::process::ExitCode;

use helmbound::config::parse_config;
use helmbound::run::run;

const USAGE: &str = "usage: helmbound --config PATH [--out DIR] [--seed N] [--quiet]

Runs the command named in the config file. Exit codes: 0 all-pass,
1 an asserted check failed, 2 configuration error or refusal.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut config_path: Option<String> = None;
    let mut out_override: Option<String> = None;
    let mut seed_override: Option<u64> = None;
    let mut quiet = false;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => config_path = it.next().cloned(),
            "--out" => out_override = it.next().cloned(),
            "--seed" => {
                seed_override = match it.next().and_then(|s| s.parse().ok()) {
                    Some(s) => Some(s),
                    None => {
                        eprintln!("--seed expects an unsigned integer");
                        return ExitCode::from(2);
                    }
                }
            }
            "--quiet" => quiet = true,
            "--help" | "-h" => {
                println!("{USAGE}");
                return ExitCode::SUCCESS;
            }
            other => {
                eprintln!("unknown flag `{other}`\n{USAGE}");
                return ExitCode::from(2);
            }
        }
    }
    let Some(path) = config_path else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config `{path}`: {e}");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(out) = out_override {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    match run(&cfg, quiet) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
