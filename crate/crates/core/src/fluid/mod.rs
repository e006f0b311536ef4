//! Fluid model of aggregate window and bottleneck queue.
//!
//! The queue follows `q' = w(t - t_f)/θ(t) - b` with `θ = q/b + τ`, clamped at
//! an empty queue. The window follows the reduced power law
//! `w' = γ_r(bτ + β̂ - w)`, or for the baseline family
//! `w' = γ_r(w·e/f - w + β̂)` with `f` read from delayed state.

mod history;

pub use history::{DelayedLookup, History, Sample, StageView};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EquilibriumPoint, LawKind, EPS_POW};
use crate::units::{require_positive, Bandwidth, Duration, ModelError};

/// Fraction of the initial window error left at "converged".
pub const CONVERGED_RESIDUAL: f64 = 0.007;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error(transparent)]
    Param(#[from] ModelError),
    #[error("step {step:e} s exceeds tau/10 = {limit:e} s")]
    StepTooLarge { step: f64, limit: f64 },
    #[error("window error never fell below {residual} of its initial value within {horizon:e} s")]
    NotConverged { residual: f64, horizon: f64 },
    #[error("every fairness weight must be positive")]
    NonPositiveBeta,
    #[error("eigenvalues are only defined for the power law")]
    UnsupportedLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub b: Bandwidth,
    pub tau: Duration,
    /// Sender to bottleneck delay.
    pub t_f: Duration,
    pub gamma: f64,
    /// Update interval δt.
    pub delta_t: Duration,
    pub beta_hat: f64,
    pub law: LawKind,
}

impl FluidParams {
    /// `t_f` defaults to half the base RTT.
    pub fn new(
        b: Bandwidth,
        tau: Duration,
        gamma: f64,
        delta_t: Duration,
        beta_hat: f64,
        law: LawKind,
    ) -> Result<Self, FluidError> {
        let p = FluidParams {
            b,
            tau,
            t_f: Duration::from_secs(tau.secs() / 2.0),
            gamma,
            delta_t,
            beta_hat,
            law,
        };
        p.validate()?;
        Ok(p)
    }

    /// γ = 0 is accepted: it is the marginal limit where the window freezes.
    pub fn validate(&self) -> Result<(), FluidError> {
        require_positive("b", self.b.bytes_per_sec())?;
        require_positive("tau", self.tau.secs())?;
        require_positive("delta_t", self.delta_t.secs())?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ModelError::OutOfRange {
                name: "gamma",
                reason: format!("must lie in [0, 1], got {}", self.gamma),
            }
            .into());
        }
        if !(self.beta_hat >= 0.0 && self.beta_hat.is_finite()) {
            return Err(ModelError::OutOfRange {
                name: "beta_hat",
                reason: format!("must be non-negative, got {}", self.beta_hat),
            }
            .into());
        }
        if !(0.0..=self.tau.secs()).contains(&self.t_f.secs()) {
            return Err(ModelError::OutOfRange {
                name: "t_f",
                reason: "must lie in [0, tau]".into(),
            }
            .into());
        }
        Ok(())
    }

    pub fn gamma_r(&self) -> f64 {
        self.gamma / self.delta_t.secs()
    }

    pub fn bdp(&self) -> f64 {
        self.b.bytes_per_sec() * self.tau.secs()
    }

    /// The delay-only variant shares the power law's aggregate dynamics.
    fn effective_law(&self) -> LawKind {
        match self.law {
            LawKind::ThetaPowerTcp => LawKind::PowerTcp,
            l => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    pub w: f64,
    pub q: f64,
    /// Seconds since the start of integration.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidTrajectory {
    pub step: f64,
    pub samples: Vec<FluidState>,
}

impl FluidTrajectory {
    pub fn last(&self) -> &FluidState {
        self.samples.last().expect("trajectory is never empty")
    }

    /// Linear interpolation of the window at time `t`, clamped to the ends.
    pub fn w_at(&self, t: f64) -> f64 {
        let x = (t / self.step).max(0.0);
        let k = x.floor() as usize;
        if k + 1 >= self.samples.len() {
            return self.last().w;
        }
        let f = x - k as f64;
        self.samples[k].w + (self.samples[k + 1].w - self.samples[k].w) * f
    }

    pub fn min_w(&self) -> f64 {
        self.samples.iter().map(|s| s.w).fold(f64::INFINITY, f64::min)
    }

    /// Writes `t_seconds,w_bytes,q_bytes` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_seconds", "w_bytes", "q_bytes"])?;
        for s in &self.samples {
            w.write_record([s.t.to_string(), s.w.to_string(), s.q.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Right-hand side at `state`, reading delayed terms from `history`.
pub fn derivatives(state: &FluidState, params: &FluidParams, history: &dyn DelayedLookup) -> (f64, f64) {
    let b = params.b.bytes_per_sec();
    let tau = params.tau.secs();
    let bdp = b * tau;
    let q = state.q.max(0.0);
    let theta = q / b + tau;

    let w_fwd = history.at(state.t - params.t_f.secs()).w;
    let mut q_dot = w_fwd / theta - b;
    if state.q <= 0.0 {
        q_dot = q_dot.max(0.0);
    }

    let g = params.gamma_r();
    let w_dot = match params.effective_law() {
        LawKind::PowerTcp | LawKind::ThetaPowerTcp => g * (-state.w + bdp + params.beta_hat),
        law => {
            let fb = history.at(state.t - theta + params.t_f.secs());
            let e_over_f = match law {
                LawKind::QueueLenVoltage => bdp / (fb.q.max(0.0) + bdp),
                LawKind::DelayVoltage => tau / (fb.q.max(0.0) / b + tau),
                LawKind::RttGradientCurrent => 1.0 / (fb.q_dot / b + 1.0).max(EPS_POW),
                _ => unreachable!(),
            };
            g * (state.w * e_over_f - state.w + params.beta_hat)
        }
    };
    (w_dot, q_dot)
}

/// Fixed-step RK4 over the delay system. Produces `horizon/step + 1` samples.
pub fn integrate(
    params: &FluidParams,
    init: FluidState,
    horizon: Duration,
    step: Duration,
) -> Result<FluidTrajectory, FluidError> {
    params.validate()?;
    let h = require_positive("step", step.secs())?;
    require_positive("horizon", horizon.secs())?;
    let limit = params.tau.secs() / 10.0;
    if h > limit {
        return Err(FluidError::StepTooLarge { step: h, limit });
    }
    if h > params.tau.secs() / 100.0 {
        log::warn!("fluid step {h:e} s is coarser than tau/100");
    }

    let n = (horizon.secs() / h).round() as usize;
    let mut hist = History::new(
        h,
        Sample {
            w: init.w,
            q: init.q.max(0.0),
            q_dot: 0.0,
        },
    );
    let mut samples = Vec::with_capacity(n + 1);
    let mut cur = FluidState {
        w: init.w,
        q: init.q.max(0.0),
        t: 0.0,
    };
    samples.push(cur);

    let eval = |hist: &History, t: f64, w: f64, q: f64| {
        let view = StageView {
            history: hist,
            t,
            state: Sample { w, q, q_dot: 0.0 },
        };
        derivatives(&FluidState { w, q, t }, params, &view)
    };

    for k in 0..n {
        let t = k as f64 * h;
        let k1 = eval(&hist, t, cur.w, cur.q);
        hist.set_last_q_dot(k1.1);
        let k2 = eval(&hist, t + h / 2.0, cur.w + h / 2.0 * k1.0, cur.q + h / 2.0 * k1.1);
        let k3 = eval(&hist, t + h / 2.0, cur.w + h / 2.0 * k2.0, cur.q + h / 2.0 * k2.1);
        let k4 = eval(&hist, t + h, cur.w + h * k3.0, cur.q + h * k3.1);
        let w = cur.w + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let q = (cur.q + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1)).max(0.0);
        cur = FluidState {
            w,
            q,
            t: (k + 1) as f64 * h,
        };
        // Queue rate is filled in at the start of the next step.
        hist.push(Sample { w, q, q_dot: k1.1 });
        samples.push(cur);
    }
    Ok(FluidTrajectory { step: h, samples })
}

/// Closed-form equilibrium where one exists.
pub fn equilibrium(params: &FluidParams) -> EquilibriumPoint {
    match params.effective_law() {
        LawKind::RttGradientCurrent => EquilibriumPoint {
            w_e: None,
            q_e: None,
            unique: false,
        },
        _ => EquilibriumPoint {
            w_e: Some(params.bdp() + params.beta_hat),
            q_e: Some(params.beta_hat),
            unique: true,
        },
    }
}

/// Eigenvalues of the linearized power-law system, analytic and numeric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalues {
    pub analytic: (f64, f64),
    pub numeric: (f64, f64),
}

impl Eigenvalues {
    /// Largest relative disagreement between the two pairs.
    pub fn max_rel_error(&self) -> f64 {
        let rel = |a: f64, n: f64| ((a - n) / a).abs();
        rel(self.analytic.0, self.numeric.0).max(rel(self.analytic.1, self.numeric.1))
    }
}

/// Analytic pair is `(-1/τ, -γ_r)`. The numeric pair comes from a central
/// difference Jacobian of the delay-free reduced system at equilibrium and
/// equals the analytic one exactly when β̂ = 0; otherwise the queue
/// eigenvalue is `-1/(τ + β̂/b)`.
pub fn linearized_eigenvalues(params: &FluidParams) -> Result<Eigenvalues, FluidError> {
    if params.effective_law() != LawKind::PowerTcp {
        return Err(FluidError::UnsupportedLaw);
    }
    params.validate()?;
    let b = params.b.bytes_per_sec();
    let tau = params.tau.secs();
    let g = params.gamma_r();
    let w_e = params.bdp() + params.beta_hat;
    let q_e = params.beta_hat;

    let f = |q: f64, w: f64| -> [f64; 2] { [w / (q / b + tau) - b, g * (-w + b * tau + params.beta_hat)] };
    let hq = 1e-4 * w_e;
    let hw = 1e-4 * w_e;
    let dq_p = f(q_e + hq, w_e);
    let dq_m = f(q_e - hq, w_e);
    let dw_p = f(q_e, w_e + hw);
    let dw_m = f(q_e, w_e - hw);
    let j = [
        [(dq_p[0] - dq_m[0]) / (2.0 * hq), (dw_p[0] - dw_m[0]) / (2.0 * hw)],
        [(dq_p[1] - dq_m[1]) / (2.0 * hq), (dw_p[1] - dw_m[1]) / (2.0 * hw)],
    ];
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    // The window row decouples from the queue, so the root nearest the
    // window diagonal entry is the window eigenvalue.
    let a = (-1.0 / tau, -g);
    let numeric = if (l1 - j[1][1]).abs() < (l2 - j[1][1]).abs() {
        (l2, l1)
    } else {
        (l1, l2)
    };
    Ok(Eigenvalues { analytic: a, numeric })
}

/// First time the window error drops to [`CONVERGED_RESIDUAL`] of its initial
/// value, interpolated between samples.
pub fn convergence_time(traj: &FluidTrajectory, w_e: f64) -> Result<Duration, FluidError> {
    let e0 = (traj.samples[0].w - w_e).abs();
    if e0 == 0.0 {
        return Ok(Duration::ZERO);
    }
    let target = CONVERGED_RESIDUAL * e0;
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ea, eb) = ((a.w - w_e).abs(), (b.w - w_e).abs());
        if eb <= target {
            let f = if ea > eb { (ea - target) / (ea - eb) } else { 1.0 };
            return Ok(Duration::from_secs(a.t + f * (b.t - a.t)));
        }
    }
    Err(FluidError::NotConverged {
        residual: CONVERGED_RESIDUAL,
        horizon: traj.last().t,
    })
}

/// Per-flow equilibrium windows `(β̂ + bτ)/β̂ · β_i`.
pub fn fairness_allocation(betas: &[f64], params: &FluidParams) -> Result<Vec<f64>, FluidError> {
    if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0)) {
        return Err(FluidError::NonPositiveBeta);
    }
    let beta_hat: f64 = betas.iter().sum();
    let scale = (beta_hat + params.bdp()) / beta_hat;
    Ok(betas.iter().map(|&b| scale * b).collect())
}

/// Largest relative gap between power and `b·w(t - t_f)` over the samples
/// with a non-empty queue. Queue rate is a central difference of the samples.
/// Samples whose delayed window still falls in the constant pre-history are
/// skipped: the arrival rate has a corner where that history ends.
pub fn power_identity_check(traj: &FluidTrajectory, params: &FluidParams) -> f64 {
    let b = params.b.bytes_per_sec();
    let bdp = params.bdp();
    let h = traj.step;
    let t_start = params.t_f.secs() + 2.0 * h;
    let s = &traj.samples;
    let mut worst: f64 = 0.0;
    for k in 1..s.len().saturating_sub(1) {
        if s[k].t < t_start || s[k - 1].q <= 0.0 || s[k].q <= 0.0 || s[k + 1].q <= 0.0 {
            continue;
        }
        let q_dot = (s[k + 1].q - s[k - 1].q) / (2.0 * h);
        let gamma = (s[k].q + bdp) * (q_dot + b);
        let expect = b * traj.w_at(s[k].t - params.t_f.secs());
        worst = worst.max(((gamma - expect) / expect).abs());
    }
    worst
}
