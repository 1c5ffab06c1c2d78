//! Run every stage through the command-line entry point: synth, extract,
//! resolve, anonymize, analyze.
//!
//! cargo run --example full_pipeline [workdir]

use glla::cli::main_with_args;
use glla::synthgen::CohortSpec;

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());
    std::fs::create_dir_all(&dir).unwrap();
    if std::env::var_os("GLLA_KEY").is_none() {
        std::env::set_var("GLLA_KEY", "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff");
    }
    let mut spec = CohortSpec::reference(2023);
    spec.marks.stddev = 1.5;
    let spec_path = dir.join("spec.toml");
    std::fs::write(&spec_path, spec.to_toml()).unwrap();
    let config = dir.join("pipeline.toml");
    let (spec_path, config) = (spec_path.to_str().unwrap(), config.to_str().unwrap());

    let steps: [&[&str]; 5] = [
        &["synth", "--config", spec_path, "--fixtures"],
        &["extract", "--config", config],
        &["resolve", "--config", config],
        &["anonymize", "--config", config],
        &["analyze", "--config", config],
    ];
    for args in steps {
        println!("$ glla {}", args.join(" "));
        let argv = std::iter::once("glla").chain(args.iter().copied());
        let code = main_with_args(argv, &mut std::io::stdout(), &mut std::io::stderr());
        if code != 0 {
            eprintln!("exit {code}");
            std::process::exit(code);
        }
    }
}
