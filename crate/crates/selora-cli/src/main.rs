use std::path::PathBuf;
use std::process::ExitCode;

use selora_cli::error::{CliError, CliResult};
use selora_cli::runner::{
    cmd_analyze, cmd_check, cmd_export, cmd_sweep, cmd_train, AnalyzeArgs, ExportArgs, SweepArgs,
    TrainArgs,
};

const USAGE: &str = "\
selora - spectral-encoding low-rank adaptation experiments

USAGE:
    selora <COMMAND> [OPTIONS]

COMMANDS:
    train      run a single training job; writes metrics JSON and a checkpoint
    sweep      run a grid of jobs; writes a sweep report (json or csv)
    check      run the in-process property-test battery
    analyze    load a checkpoint and report subspace/variance diagnostics
    export     convert a metrics/report JSON file to csv or json

COMMON OPTIONS:
    --config PATH          line-oriented key = value configuration file
    --seed N               override the run seed
    --steps N              override optim.total_steps

TRAIN OPTIONS:
    --metrics-out PATH     metrics JSON destination (default selora-metrics.json)
    --checkpoint-out PATH  checkpoint destination (default selora.ckpt)

SWEEP OPTIONS:
    --axis NAME            sparse-ratio | rank | basis | schema
    --grid CSV             grid values for the axis
    --seeds CSV            replicate seeds (default 0,1,2)
    --report-out PATH      report destination
    --format NAME          json (default) or csv

ANALYZE OPTIONS:
    --checkpoint PATH      checkpoint to load (required)
    --rank N               projection rank (default: the adapter's rank)
    --out PATH             analysis JSON destination

EXPORT OPTIONS:
    --input PATH           metrics/report JSON produced by train or sweep
    --format NAME          csv or json (required)
    --out PATH             destination (default: input with .export.<fmt>)

ENVIRONMENT:
    SELORA_SEED            default seed when neither --seed nor run.seed is set
    SELORA_MAX_THREADS     cap on sweep worker threads
";

struct ArgStream {
    args: Vec<String>,
    pos: usize,
}

impl ArgStream {
    fn next_flag(&mut self) -> Option<String> {
        let arg = self.args.get(self.pos)?.clone();
        self.pos += 1;
        Some(arg)
    }

    fn value_for(&mut self, flag: &str) -> CliResult<String> {
        let value = self
            .args
            .get(self.pos)
            .ok_or_else(|| CliError::config(format!("{flag} requires a value")))?;
        self.pos += 1;
        Ok(value.clone())
    }
}

fn parse_u64(flag: &str, value: &str) -> CliResult<u64> {
    value
        .parse()
        .map_err(|_| CliError::config(format!("{flag} expects an integer, got {value:?}")))
}

fn parse_usize(flag: &str, value: &str) -> CliResult<usize> {
    value
        .parse()
        .map_err(|_| CliError::config(format!("{flag} expects an integer, got {value:?}")))
}

fn run(args: Vec<String>) -> CliResult<()> {
    let mut stream = ArgStream { args, pos: 0 };
    let Some(command) = stream.next_flag() else {
        return Err(CliError::config("missing command; try `selora --help`"));
    };
    if command == "--help" || command == "-h" || command == "help" {
        print!("{USAGE}");
        return Ok(());
    }

    match command.as_str() {
        "train" => {
            let mut args = TrainArgs {
                config_path: None,
                seed: None,
                steps: None,
                metrics_out: None,
                checkpoint_out: None,
            };
            while let Some(flag) = stream.next_flag() {
                match flag.as_str() {
                    "--config" => args.config_path = Some(PathBuf::from(stream.value_for(&flag)?)),
                    "--seed" => args.seed = Some(parse_u64(&flag, &stream.value_for(&flag)?)?),
                    "--steps" => args.steps = Some(parse_u64(&flag, &stream.value_for(&flag)?)?),
                    "--metrics-out" => {
                        args.metrics_out = Some(PathBuf::from(stream.value_for(&flag)?))
                    }
                    "--checkpoint-out" => {
                        args.checkpoint_out = Some(PathBuf::from(stream.value_for(&flag)?))
                    }
                    other => return Err(CliError::config(format!("unknown train option {other}"))),
                }
            }
            cmd_train(&args)
        }
        "sweep" => {
            let mut args = SweepArgs {
                config_path: None,
                seed: None,
                steps: None,
                axis: None,
                grid: None,
                seeds: None,
                report_out: None,
                format: None,
            };
            while let Some(flag) = stream.next_flag() {
                match flag.as_str() {
                    "--config" => args.config_path = Some(PathBuf::from(stream.value_for(&flag)?)),
                    "--seed" => args.seed = Some(parse_u64(&flag, &stream.value_for(&flag)?)?),
                    "--steps" => args.steps = Some(parse_u64(&flag, &stream.value_for(&flag)?)?),
                    "--axis" => args.axis = Some(stream.value_for(&flag)?),
                    "--grid" => args.grid = Some(stream.value_for(&flag)?),
                    "--seeds" => args.seeds = Some(stream.value_for(&flag)?),
                    "--report-out" => {
                        args.report_out = Some(PathBuf::from(stream.value_for(&flag)?))
                    }
                    "--format" => args.format = Some(stream.value_for(&flag)?),
                    other => return Err(CliError::config(format!("unknown sweep option {other}"))),
                }
            }
            cmd_sweep(&args)
        }
        "check" => {
            if let Some(extra) = stream.next_flag() {
                return Err(CliError::config(format!(
                    "check takes no options, got {extra}"
                )));
            }
            cmd_check()
        }
        "analyze" => {
            let mut checkpoint = None;
            let mut rank = None;
            let mut out = None;
            while let Some(flag) = stream.next_flag() {
                match flag.as_str() {
                    "--checkpoint" => checkpoint = Some(PathBuf::from(stream.value_for(&flag)?)),
                    "--rank" => rank = Some(parse_usize(&flag, &stream.value_for(&flag)?)?),
                    "--out" => out = Some(PathBuf::from(stream.value_for(&flag)?)),
                    other => {
                        return Err(CliError::config(format!("unknown analyze option {other}")))
                    }
                }
            }
            let checkpoint =
                checkpoint.ok_or_else(|| CliError::config("analyze requires --checkpoint"))?;
            cmd_analyze(&AnalyzeArgs {
                checkpoint,
                rank,
                out,
            })
        }
        "export" => {
            let mut input = None;
            let mut format = None;
            let mut out = None;
            while let Some(flag) = stream.next_flag() {
                match flag.as_str() {
                    "--input" => input = Some(PathBuf::from(stream.value_for(&flag)?)),
                    "--format" => format = Some(stream.value_for(&flag)?),
                    "--out" => out = Some(PathBuf::from(stream.value_for(&flag)?)),
                    other => {
                        return Err(CliError::config(format!("unknown export option {other}")))
                    }
                }
            }
            let input = input.ok_or_else(|| CliError::config("export requires --input"))?;
            let format = format.ok_or_else(|| CliError::config("export requires --format"))?;
            cmd_export(&ExportArgs { input, format, out })
        }
        other => Err(CliError::config(format!(
            "unknown command {other}; try `selora --help`"
        ))),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
