use std::path::PathBuf;

use clap::Args;

use isvd_chart::experiments::timing_benchmark;
use isvd_chart::Method;

use crate::error::CliError;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated `PxQ` sizes, e.g. `128x128,256x256`.
    #[arg(long)]
    pub dims: String,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub r: usize,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[arg(long = "J", default_value_t = 1)]
    pub j: usize,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Steps for the dense chart; defaults to `--steps`.
    #[arg(long)]
    pub baseline_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn parse_dims(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    text.split(',')
        .map(|item| {
            let item = item.trim();
            let (p, q) = item
                .split_once(['x', 'X'])
                .ok_or_else(|| CliError::Input(format!("dimension `{item}` is not of the form PxQ")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| CliError::Input(format!("bad dimension `{item}`")))
            };
            Ok((parse(p)?, parse(q)?))
        })
        .collect()
}

pub(crate) fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let dims = parse_dims(&args.dims)?;
    let methods = [
        (Method::Isvd, args.steps),
        (Method::Baseline, args.baseline_steps.unwrap_or(args.steps)),
    ];
    let rows = timing_benchmark(&dims, args.r, args.m, args.j, &methods, args.seed)?;
    let mut w = csv::Writer::from_path(&args.output)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
