use std::path::Path;

use clap::Args;
use powersim::scenarios::output::{wall_clock, write_run};
use powersim::scenarios::{self, Scenario, ScenarioConfig, ScenarioError};
use powersim::LawKind;
use serde_json::Value;

use crate::config::{overlay, read_json};
use crate::{ConfigArg, Failure};

#[derive(Args, Debug)]
pub struct SimArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// incast, fairness, rdcn or ramp.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    law: Option<LawKind>,
    /// Incast senders, or flow count for ramp and rdcn.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon_us: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Per-flow additive increase in bytes.
    #[arg(long)]
    beta: Option<f64>,
    /// Check conservation and queue bounds at every sample.
    #[arg(long)]
    audit: bool,
}

fn set_n(scenario: &mut Scenario, n: usize) -> Result<(), Failure> {
    match scenario {
        Scenario::Incast(s) => s.n_senders = n,
        Scenario::Ramp(s) => s.n_flows = n,
        Scenario::Rdcn(s) => s.n_flows = n,
        other => {
            return Err(Failure::Usage(format!("--n does not apply to the {} scenario", other.name())));
        }
    }
    Ok(())
}

fn from_flags(a: &SimArgs) -> Result<Option<ScenarioConfig>, Failure> {
    let Some(name) = &a.scenario else { return Ok(None) };
    let mut scenario = Scenario::by_name(name).ok_or_else(|| {
        Failure::Usage(format!("unknown scenario `{name}` (expected incast, fairness, rdcn or ramp)"))
    })?;
    if let Some(n) = a.n {
        set_n(&mut scenario, n)?;
    }
    let mut c = ScenarioConfig::new(a.law.unwrap_or(LawKind::PowerTcp), scenario);
    c.params.gamma = a.gamma;
    c.params.beta = a.beta;
    if let Some(s) = a.seed {
        c.run.seed = s;
    }
    c.run.horizon_us = a.horizon_us;
    c.run.audit = a.audit;
    Ok(Some(c))
}

/// Flags over defaults, then the config file over both. A file naming a
/// different scenario type replaces the flag-built scenario outright.
fn resolve(a: &SimArgs) -> Result<ScenarioConfig, Failure> {
    let flags = from_flags(a)?;
    let file = a.config.config.as_deref().map(read_json).transpose()?;
    let mut v = match (&flags, &file) {
        (Some(c), _) => serde_json::to_value(c).expect("config serializes"),
        (None, Some(_)) => {
            let law = a.law.unwrap_or(LawKind::PowerTcp);
            serde_json::json!({ "schema_version": scenarios::SCHEMA_VERSION, "law": law })
        }
        (None, None) => {
            return Err(Failure::Usage(
                "missing --scenario (or a --config file)\nusage: powersim sim --scenario <NAME> [--law LAW] [--n N] [--config FILE]"
                    .into(),
            ))
        }
    };
    if let Some(f) = &file {
        let kind = |x: &Value| x.pointer("/scenario/type").cloned();
        if kind(f).is_some() && kind(f) != kind(&v) {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("scenario");
            }
        }
        overlay(&mut v, f);
    }
    let c: ScenarioConfig = serde_json::from_value(v).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

pub fn run(a: &SimArgs, out: &Path) -> Result<(), Failure> {
    let started = wall_clock();
    let config = resolve(a)?;
    let result = scenarios::run(&config).map_err(|e| match e {
        ScenarioError::Invalid(m) => Failure::Usage(m),
        e @ ScenarioError::Params(_) => Failure::Usage(e.to_string()),
        e => Failure::Scenario(e.to_string()),
    })?;
    let manifest = write_run(out, &result, a.config.config.as_deref(), started)?;
    crate::emit(&result.summary_json());
    eprintln!("wrote {}", manifest.output_dir.display());
    let failures = result.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Scenario(format!("{} run: {}", config.scenario.name(), failures.join("; "))))
    }
}
