use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use clap::Args;
use powersim::fluid::{self, Eigenvalues, FluidParams, FluidState};
use powersim::scenarios::content_hash;
use powersim::scenarios::output::{run_dir, wall_clock, RunManifest};
use powersim::{Bandwidth, Duration, EquilibriumPoint, LawKind};
use serde::{Deserialize, Serialize};

use crate::config::{layered, read_json};
use crate::{ConfigArg, Failure};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Args, Debug)]
pub struct FluidArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    law: Option<LawKind>,
    /// Bottleneck bandwidth in Gbit/s.
    #[arg(long)]
    b_gbps: Option<f64>,
    /// Base RTT in microseconds.
    #[arg(long)]
    tau_us: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Update interval; defaults to τ.
    #[arg(long)]
    delta_t_us: Option<f64>,
    /// Aggregate additive increase in bytes; defaults to bτ/n.
    #[arg(long)]
    beta_hat: Option<f64>,
    /// Flow count used to derive β̂.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    horizon_us: Option<f64>,
}

/// Fluid run description. Initial states are in multiples of bτ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub schema_version: u32,
    pub law: Option<LawKind>,
    pub b_gbps: Option<f64>,
    pub tau_us: Option<f64>,
    pub gamma: f64,
    pub delta_t_us: Option<f64>,
    pub beta_hat: Option<f64>,
    pub n: u32,
    pub initial_bdp: Vec<[f64; 2]>,
    pub horizon_us: f64,
    /// Integration step; defaults to τ/200.
    pub step_us: Option<f64>,
}

impl Default for FluidConfig {
    fn default() -> Self {
        FluidConfig {
            schema_version: SCHEMA_VERSION,
            law: None,
            b_gbps: None,
            tau_us: None,
            gamma: powersim::model::DEFAULT_GAMMA,
            delta_t_us: None,
            beta_hat: None,
            n: 1,
            initial_bdp: vec![[0.5, 0.0], [2.0, 1.0]],
            horizon_us: 2000.0,
            step_us: None,
        }
    }
}

const USAGE: &str = "usage: powersim fluid --law <LAW> --b-gbps <GBPS> --tau-us <US> [--gamma G] [--delta-t-us US] \
                     [--beta-hat BYTES] [--n N] [--horizon-us US] [--config FILE]";

impl FluidConfig {
    fn from_args(a: &FluidArgs) -> Result<Self, Failure> {
        let mut c = FluidConfig {
            law: a.law,
            b_gbps: a.b_gbps,
            tau_us: a.tau_us,
            delta_t_us: a.delta_t_us,
            beta_hat: a.beta_hat,
            ..FluidConfig::default()
        };
        if let Some(g) = a.gamma {
            c.gamma = g;
        }
        if let Some(n) = a.n {
            c.n = n;
        }
        if let Some(h) = a.horizon_us {
            c.horizon_us = h;
        }
        let file = a.config.config.as_deref().map(read_json).transpose()?;
        let c: FluidConfig = layered(&c, file.as_ref())?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(Failure::Usage(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        for (field, flag, v) in [("law", "--law", c.law.is_some()), ("b_gbps", "--b-gbps", c.b_gbps.is_some()), ("tau_us", "--tau-us", c.tau_us.is_some())] {
            if !v {
                return Err(Failure::Usage(format!("missing {flag} (or \"{field}\" in the config)\n{USAGE}")));
            }
        }
        if c.n == 0 {
            return Err(Failure::Usage("n must be at least 1".into()));
        }
        Ok(c)
    }

    fn params(&self) -> Result<FluidParams, Failure> {
        let b = Bandwidth::from_gbps(self.b_gbps.unwrap_or_default());
        let tau = Duration::from_micros(self.tau_us.unwrap_or_default());
        let beta_hat = self
            .beta_hat
            .unwrap_or(b.bytes_per_sec() * tau.secs() / self.n as f64);
        let dt = self.delta_t_us.map_or(tau, Duration::from_micros);
        FluidParams::new(b, tau, self.gamma, dt, beta_hat, self.law.expect("checked"))
            .map_err(|e| Failure::Usage(e.to_string()))
    }

}

#[derive(Debug, Serialize)]
struct TrajectoryReport {
    initial: [f64; 2],
    final_w: f64,
    final_q: f64,
    min_w: f64,
    /// Time for the window error to fall to 0.7% of its initial value.
    convergence_time_us: Option<f64>,
    /// Largest relative gap between power and b·w(t - t_f) with a queue.
    power_identity_error: f64,
    csv: String,
}

#[derive(Debug, Serialize)]
struct FluidReport {
    params: FluidParams,
    bdp: f64,
    equilibrium: EquilibriumPoint,
    eigenvalues: Option<Eigenvalues>,
    trajectories: Vec<TrajectoryReport>,
}

pub fn run(a: &FluidArgs, out: &Path) -> Result<(), Failure> {
    let started = wall_clock();
    let c = FluidConfig::from_args(a)?;
    let p = c.params()?;
    let bdp = p.bdp();
    let step = Duration::from_secs(c.step_us.map_or(p.tau.secs() / 200.0, |s| s * 1e-6));
    let hash = content_hash(&c);
    let dir = run_dir(out, &hash);
    fs::create_dir_all(&dir)?;

    let eq = fluid::equilibrium(&p);
    let mut trajectories = Vec::new();
    for (i, &[w, q]) in c.initial_bdp.iter().enumerate() {
        let init = FluidState { w: w * bdp, q: q * bdp, t: 0.0 };
        let tr = fluid::integrate(&p, init, Duration::from_micros(c.horizon_us), step)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        let csv = format!("trajectory-{i}.csv");
        tr.write_csv(BufWriter::new(File::create(dir.join(&csv))?))
            .map_err(|e| Failure::Scenario(e.to_string()))?;
        let last = tr.last();
        trajectories.push(TrajectoryReport {
            initial: [init.w, init.q],
            final_w: last.w,
            final_q: last.q,
            min_w: tr.min_w(),
            convergence_time_us: eq
                .w_e
                .and_then(|w_e| fluid::convergence_time(&tr, w_e).ok())
                .map(|d| d.secs() * 1e6),
            power_identity_error: fluid::power_identity_check(&tr, &p),
            csv,
        });
    }
    let report = FluidReport {
        params: p,
        bdp,
        equilibrium: eq,
        eigenvalues: fluid::linearized_eigenvalues(&p).ok(),
        trajectories,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&c).expect("config serializes"))?;
    fs::write(dir.join("report.json"), &text)?;
    let manifest = RunManifest {
        config_path: a.config.config.clone(),
        config_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: wall_clock(),
        output_dir: dir.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    crate::emit(&text);
    eprintln!("wrote {}", dir.display());
    Ok(())
}
