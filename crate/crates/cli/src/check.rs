use std::fs;
use std::path::Path;

use clap::Args;
use powersim::checks::{run_check, CheckOptions, CheckOutcome, CRITERIA};
use powersim::model::Smoothing;
use powersim::scenarios::content_hash;
use powersim::scenarios::output::run_dir;
use rayon::prelude::*;

use crate::config::{layered, read_json};
use crate::{ConfigArg, Failure};

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// JSON with `gamma` and `smoothing` keys.
    #[command(flatten)]
    config: ConfigArg,
    /// Comma-separated criterion ids; all of them by default.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u32>,
    /// Replaces γ in the convergence check.
    #[arg(long)]
    gamma: Option<f64>,
    /// ewma, or frozen to disable power smoothing.
    #[arg(long, default_value = "ewma", value_parser = parse_smoothing)]
    smoothing: Smoothing,
}

fn parse_smoothing(s: &str) -> Result<Smoothing, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown smoothing `{s}` (expected ewma or frozen)"))
}

pub fn run(a: &CheckArgs, out: &Path) -> Result<(), Failure> {
    let known: Vec<u32> = CRITERIA.iter().map(|&(id, _)| id).collect();
    if let Some(bad) = a.only.iter().find(|id| !known.contains(id)) {
        return Err(Failure::Usage(format!("no criterion {bad} (expected 1 to {})", known.len())));
    }
    let ids: Vec<u32> = if a.only.is_empty() { known } else { known.into_iter().filter(|id| a.only.contains(id)).collect() };
    let file = a.config.config.as_deref().map(read_json).transpose()?;
    let opts = layered(&CheckOptions { gamma: a.gamma, smoothing: a.smoothing }, file.as_ref())?;

    let outcomes: Vec<CheckOutcome> = ids.par_iter().map(|&id| run_check(id, &opts)).collect();
    for o in &outcomes {
        let mark = if o.passed { "PASS" } else { "FAIL" };
        crate::emit(&format!("{:>2}  {mark}  {:<40} {:>7.2}s  {}", o.id, o.name, o.elapsed, o.detail));
    }

    let dir = run_dir(out, &content_hash(&(&opts, &ids)));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("checks.json"), serde_json::to_string_pretty(&outcomes).expect("outcomes serialize"))?;

    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("criteria failed: {}", failed.join(", "))))
    }
}
