mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use patchmatch::bench::CountingAlloc;
use patchmatch::Error;
use serde_json::Value;

use args::{Cli, Command, Format};

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

const USAGE: u8 = 2;
const INPUT: u8 = 3;
const RUNTIME: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) => USAGE,
        Error::Io { .. }
        | Error::Decode { .. }
        | Error::UnsupportedFormat(_)
        | Error::InvalidImage(_)
        | Error::ChannelCount { .. }
        | Error::ImageTooSmall { .. }
        | Error::DimensionMismatch(_)
        | Error::UnsupportedLabel(_)
        | Error::InvalidConstraint(_)
        | Error::Format(_)
        | Error::Stream(_) => INPUT,
        _ => RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let (name, format, result) = match &cli.command {
        Command::Nnf(a) => ("nnf", a.common.format, commands::nnf(a)),
        Command::Knn(a) => ("knn", a.common.format, commands::knn(a)),
        Command::Gnnf(a) => ("gnnf", a.common.format, commands::gnnf(a)),
        Command::Denoise(a) => ("denoise", a.common.format, commands::denoise(a)),
        Command::Forgery(a) => ("forgery", a.common.format, commands::forgery(a)),
        Command::Lattice(a) => ("lattice", a.common.format, commands::lattice(a)),
        Command::Detect(a) => ("detect", a.common.format, commands::detect(a)),
        Command::Retarget(a) => ("retarget", a.common.format, commands::retarget_cmd(a)),
        Command::Complete(a) => ("complete", a.common.format, commands::complete_cmd(a)),
        Command::Reshuffle(a) => ("reshuffle", a.common.format, commands::reshuffle_cmd(a)),
        Command::WebBuild(a) => ("web-build", a.common.format, commands::web_build(a)),
        Command::WebQuery(a) => ("web-query", a.common.format, commands::web_query(a)),
        Command::Bench(a) => ("bench", Format::Json, commands::bench(a)),
        Command::Stats(a) => ("stats", a.common.format, commands::stats(a)),
    };
    match result {
        Ok(mut report) => {
            match format {
                Format::Json => {
                    report.entry("schema").or_insert(Value::from(1));
                    report.insert("command".into(), Value::from(name));
                    println!("{}", Value::Object(report));
                }
                Format::Text => {
                    for (k, v) in &report {
                        println!("{k}: {v}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("patchmatch {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
