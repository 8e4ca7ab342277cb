//! `secrow` command line: run scenario files, verify the security
//! condition matrix for a system, or produce the bench tables.
//!
//! Exit codes: 0 success, 1 assertion/verdict failure, 2 usage or parse
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use secrow_core::harness::report::VerifyReport;
use secrow_core::harness::{self, Condition};
use secrow_core::scenario;
use secrow_core::sut::SystemUnderTest;

#[derive(Parser)]
#[command(name = "secrow", about = "Crowdsourced tracking protocol simulator and security harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and write its transcript and report.
    Run {
        /// Scenario file path.
        file: PathBuf,
        /// World seed; identical seeds give byte-identical outputs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the transcript and report files.
        #[arg(long, default_value = "secrow-out")]
        out: PathBuf,
    },
    /// Run the full condition battery and print the property matrix.
    Verify {
        /// System label: secrow or baseline_trackr.
        sut: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Directory for violation witness transcripts.
        #[arg(long, default_value = "secrow-out")]
        out: PathBuf,
    },
    /// Measure crypto primitives and end-to-end flows for both systems.
    Bench {
        /// Repetitions to average over.
        #[arg(long, default_value_t = 10)]
        reps: u32,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { file, seed, out } => cmd_run(&file, seed, &out),
        Command::Verify { sut, format, out } => cmd_verify(&sut, format, &out),
        Command::Bench { reps, format } => cmd_bench(reps, format),
    }
}

fn cmd_run(file: &Path, seed: u64, out: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(file) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", file.display());
            return ExitCode::from(2);
        }
    };
    let parsed = match scenario::parse(&text) {
        Ok(parsed) => parsed,
        Err(err) => {
            eprintln!("parse error in {}: {err}", file.display());
            return ExitCode::from(2);
        }
    };
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".to_string());
    let report = scenario::run(&parsed, &stem, seed);
    if let Err(err) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {err}", out.display());
        return ExitCode::from(2);
    }
    let rendered = report.render_text();
    let transcript_path = out.join(format!("{stem}.transcript.bin"));
    let report_path = out.join(format!("{stem}.report.txt"));
    if let Err(err) = std::fs::write(&transcript_path, &report.transcript_bytes)
        .and_then(|_| std::fs::write(&report_path, rendered.as_bytes()))
    {
        eprintln!("error: cannot write outputs: {err}");
        return ExitCode::from(2);
    }
    print!("{rendered}");
    println!("transcript: {}", transcript_path.display());
    println!("report:     {}", report_path.display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_verify(label: &str, format: Format, out: &Path) -> ExitCode {
    let Some(sut) = SystemUnderTest::from_label(label) else {
        eprintln!("error: unknown system '{label}' (expected secrow or baseline_trackr)");
        return ExitCode::from(2);
    };
    let report = VerifyReport::evaluate(&sut);
    let witness_paths = match report.write_witnesses(out) {
        Ok(paths) => paths,
        Err(err) => {
            eprintln!("error: cannot write witnesses: {err}");
            return ExitCode::from(2);
        }
    };
    match format {
        Format::Text => print!("{}", report.render_text(&witness_paths)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report.to_json()).unwrap()),
    }
    let ok = match sut.kind {
        secrow_core::sut::SutKind::Secrow => report.all_conditions_hold(),
        secrow_core::sut::SutKind::BaselineTrackr => {
            report.violated_conditions() == harness::expected_baseline_violations()
        }
    };
    if ok {
        ExitCode::SUCCESS
    } else {
        let violated: Vec<&str> = report.violated_conditions().iter().map(Condition::label).collect();
        eprintln!("verdict mismatch; violated: [{}]", violated.join(", "));
        ExitCode::from(1)
    }
}

fn cmd_bench(reps: u32, format: Format) -> ExitCode {
    let report = secrow_core::bench::run_bench(reps);
    match format {
        Format::Text => print!("{}", report.render_text()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report.to_json()).unwrap()),
    }
    ExitCode::SUCCESS
}
