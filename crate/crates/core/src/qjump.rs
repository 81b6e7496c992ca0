//! Resonant two-level atom: Rabi oscillation, spontaneous-emission waiting
//! times and quantum-jump trajectories.
//!
//! Two emission models are provided:
//!
//! * [`Model::HazardRenewal`]: the excited population oscillates undamped as
//!   `sin²(Ωt/2)` since the last emission and the atom emits with hazard
//!   `Γ·sin²(Ωt/2)`. Intervals are i.i.d. and sampled exactly by thinning.
//! * [`Model::QuantumJump`]: Monte-Carlo wave-function evolution under the
//!   non-Hermitian generator `H = (Ω/2)σx − i(Γ/2)|e⟩⟨e|`, with a jump to the
//!   ground state drawn at each step with probability `Γ|c_e|²dt`.
//!
//! Detuning is always zero.

use std::f64::consts::TAU;
use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt_sig;
use crate::randsource::{RandomSource, SourceError};

/// Largest per-step jump probability `mcwf_step` accepts.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QjumpError {
    #[error("invalid atom parameters: {0}")]
    InvalidParams(String),
    #[error("decay rate is zero, no emission can occur")]
    NoDecayChannel,
    #[error("jump probability {0} per step exceeds {MAX_JUMP_PROBABILITY}; reduce dt")]
    StepTooLarge(f64),
    #[error("closed-form waiting density needs omega > gamma/2 (omega={omega}, gamma={gamma})")]
    OverdampedRegime { omega: f64, gamma: f64 },
    #[error("invalid stop criterion: {0}")]
    InvalidStop(String),
    #[error("malformed emission CSV at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error(transparent)]
    Source(#[from] SourceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    HazardRenewal,
    QuantumJump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    /// Rabi angular frequency Ω in rad/s.
    pub rabi_omega: f64,
    /// Spontaneous decay rate Γ in 1/s.
    pub gamma: f64,
    #[serde(default)]
    pub model: Model,
    /// Time step in seconds, used by the quantum-jump model only.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1e-3
}

impl Default for AtomParams {
    /// Ω = 2π rad/s, Γ = 1/s: several Rabi cycles per excited-state lifetime.
    fn default() -> Self {
        Self {
            rabi_omega: TAU,
            gamma: 1.0,
            model: Model::HazardRenewal,
            dt: default_dt(),
        }
    }
}

impl AtomParams {
    pub fn new(rabi_omega: f64, gamma: f64, model: Model, dt: f64) -> Result<Self, QjumpError> {
        let p = Self {
            rabi_omega,
            gamma,
            model,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    /// Largest admissible quantum-jump step: `0.01·min(2π/Ω, 1/Γ)`.
    pub fn max_dt(&self) -> f64 {
        let period = TAU / self.rabi_omega;
        let bound = if self.gamma > 0.0 {
            period.min(1.0 / self.gamma)
        } else {
            period
        };
        0.01 * bound
    }

    pub fn validate(&self) -> Result<(), QjumpError> {
        if !(self.rabi_omega.is_finite() && self.rabi_omega > 0.0) {
            return Err(QjumpError::InvalidParams(format!(
                "rabi_omega must be positive, got {}",
                self.rabi_omega
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(QjumpError::InvalidParams(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.model == Model::QuantumJump {
            if !(self.dt.is_finite() && self.dt > 0.0) {
                return Err(QjumpError::InvalidParams(format!(
                    "dt must be positive, got {}",
                    self.dt
                )));
            }
            if self.dt > self.max_dt() {
                return Err(QjumpError::InvalidParams(format!(
                    "dt={} exceeds 0.01*min(2pi/omega, 1/gamma) = {}",
                    self.dt,
                    self.max_dt()
                )));
            }
        }
        Ok(())
    }
}

/// Probability of the excited state `t` seconds after starting in the
/// ground state: `sin²(Ωt/2)`.
#[inline]
pub fn excited_probability(t: f64, omega: f64) -> f64 {
    let s = (0.5 * omega * t).sin();
    s * s
}

/// Probability of no emission during `[0, tau]` under hazard `Γ·sin²(Ωt/2)`.
pub fn hazard_survival(tau: f64, omega: f64, gamma: f64) -> f64 {
    (-gamma * (0.5 * tau - (omega * tau).sin() / (2.0 * omega))).exp()
}

/// Waiting-time density of the hazard-renewal model.
pub fn hazard_waiting_density(tau: f64, omega: f64, gamma: f64) -> f64 {
    gamma * excited_probability(tau, omega) * hazard_survival(tau, omega, gamma)
}

/// Waiting-time CDF of the hazard-renewal model.
pub fn hazard_waiting_cdf(tau: f64, omega: f64, gamma: f64) -> f64 {
    -(-gamma * (0.5 * tau - (omega * tau).sin() / (2.0 * omega))).exp_m1()
}

/// Draws one inter-emission interval of the hazard-renewal model by thinning
/// a rate-Γ Poisson process: each proposal at time `t` is kept with
/// probability `sin²(Ωt/2)`. Two units are consumed per proposal.
pub fn sample_interval_hazard<S: RandomSource + ?Sized>(
    source: &mut S,
    omega: f64,
    gamma: f64,
) -> Result<f64, QjumpError> {
    if gamma <= 0.0 {
        return Err(QjumpError::NoDecayChannel);
    }
    let mut t = 0.0;
    loop {
        let u = source.next_unit()?;
        t += -(-u).ln_1p() / gamma;
        let v = source.next_unit()?;
        if v < excited_probability(t, omega) {
            return Ok(t);
        }
    }
}

/// Waiting-time density of the quantum-jump model in the underdamped regime:
/// `Γ·(Ω²/4μ²)·e^(−Γτ/2)·sin²(μτ)` with `μ = sqrt(Ω²/4 − Γ²/16)`.
pub fn mcwf_waiting_density(tau: f64, omega: f64, gamma: f64) -> Result<f64, QjumpError> {
    if omega <= 0.5 * gamma {
        return Err(QjumpError::OverdampedRegime { omega, gamma });
    }
    let mu2 = 0.25 * omega * omega - gamma * gamma / 16.0;
    let mu = mu2.sqrt();
    let s = (mu * tau).sin();
    Ok(gamma * (0.25 * omega * omega / mu2) * (-0.5 * gamma * tau).exp() * s * s)
}

/// Ground/excited amplitudes `(c_g, c_e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateAmplitudes {
    pub c_g: Complex64,
    pub c_e: Complex64,
}

impl StateAmplitudes {
    pub const fn ground() -> Self {
        Self {
            c_g: Complex64::new(1.0, 0.0),
            c_e: Complex64::new(0.0, 0.0),
        }
    }

    pub const fn excited() -> Self {
        Self {
            c_g: Complex64::new(0.0, 0.0),
            c_e: Complex64::new(1.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c_g.norm_sqr() + self.c_e.norm_sqr()
    }

    /// `|c_e|²`, the excited population when normalized.
    pub fn excited_population(&self) -> f64 {
        self.c_e.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let scale = self.norm_sqr().sqrt().recip();
        Self {
            c_g: self.c_g * scale,
            c_e: self.c_e * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Evolved(StateAmplitudes),
    JumpOccurred,
}

/// Exact one-step propagator `exp(−i·H·dt)` of the non-Hermitian generator
/// `H = [[0, Ω/2], [Ω/2, −iΓ/2]]` in the `(g, e)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoJumpPropagator {
    m: [[Complex64; 2]; 2],
    gamma: f64,
    dt: f64,
}

impl NoJumpPropagator {
    pub fn new(dt: f64, omega: f64, gamma: f64) -> Self {
        // H = −iΓ/4·I + M with M² = μ²·I, so exp(−iMdt) = cos(μdt)·I − i·sin(μdt)/μ·M.
        let i = Complex64::i();
        let mu = Complex64::new(0.25 * omega * omega - gamma * gamma / 16.0, 0.0).sqrt();
        let cos = (mu * dt).cos();
        let sinc = if mu.norm() * dt < 1e-8 {
            Complex64::new(dt, 0.0)
        } else {
            (mu * dt).sin() / mu
        };
        let m = [
            [i * (0.25 * gamma), Complex64::new(0.5 * omega, 0.0)],
            [Complex64::new(0.5 * omega, 0.0), -i * (0.25 * gamma)],
        ];
        let damp = (-0.25 * gamma * dt).exp();
        let mut u = [[Complex64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                let id = if r == c { cos } else { Complex64::new(0.0, 0.0) };
                u[r][c] = (id - i * sinc * m[r][c]) * damp;
            }
        }
        Self { m: u, gamma, dt }
    }

    /// Unnormalized no-jump evolution over one step.
    #[inline]
    pub fn apply(&self, s: &StateAmplitudes) -> StateAmplitudes {
        StateAmplitudes {
            c_g: self.m[0][0] * s.c_g + self.m[0][1] * s.c_e,
            c_e: self.m[1][0] * s.c_g + self.m[1][1] * s.c_e,
        }
    }

    /// One Monte-Carlo wave-function step from a normalized state.
    #[inline]
    pub fn step(&self, state: &StateAmplitudes, u: f64) -> Result<StepOutcome, QjumpError> {
        let p_jump = self.gamma * state.excited_population() * self.dt;
        if p_jump > MAX_JUMP_PROBABILITY {
            return Err(QjumpError::StepTooLarge(p_jump));
        }
        if u < p_jump {
            return Ok(StepOutcome::JumpOccurred);
        }
        Ok(StepOutcome::Evolved(self.apply(state).normalized()))
    }
}

/// One quantum-jump step: jumps if `u < Γ|c_e|²dt`, otherwise propagates
/// exactly under the non-Hermitian generator and renormalizes.
pub fn mcwf_step(
    state: &StateAmplitudes,
    dt: f64,
    omega: f64,
    gamma: f64,
    u: f64,
) -> Result<StepOutcome, QjumpError> {
    NoJumpPropagator::new(dt, omega, gamma).step(state, u)
}

/// Normalized excited population `t` seconds after a reset to the ground
/// state, conditioned on no emission (damped by the non-Hermitian term).
pub fn conditional_excited_population(t: f64, omega: f64, gamma: f64) -> f64 {
    let mu = Complex64::new(0.25 * omega * omega - gamma * gamma / 16.0, 0.0).sqrt();
    let sinc = if mu.norm() * t < 1e-8 {
        Complex64::new(t, 0.0)
    } else {
        (mu * t).sin() / mu
    };
    let cg = (mu * t).cos() + sinc * (0.25 * gamma);
    let ce = sinc * (0.5 * omega);
    let (g, e) = (cg.norm_sqr(), ce.norm_sqr());
    e / (g + e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ground,
    Excited,
}

/// Projective measurement: `Excited` iff the drawn unit is below `p_excited`.
pub fn measure_state<S: RandomSource + ?Sized>(
    p_excited: f64,
    source: &mut S,
) -> Result<Outcome, QjumpError> {
    if !(0.0..=1.0).contains(&p_excited) {
        return Err(QjumpError::InvalidParams(format!(
            "probability {p_excited} outside [0, 1]"
        )));
    }
    Ok(if source.next_unit()? < p_excited {
        Outcome::Excited
    } else {
        Outcome::Ground
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stop {
    /// Stop after this many emissions.
    NEvents(usize),
    /// Stop once simulated time would exceed this many seconds.
    TMax(f64),
}

impl Stop {
    fn validate(&self) -> Result<(), QjumpError> {
        match *self {
            Stop::TMax(t) if !(t.is_finite() && t >= 0.0) => {
                Err(QjumpError::InvalidStop(format!("t_max must be >= 0, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Emission times of one trajectory and the intervals between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub emission_times: Vec<f64>,
    pub intervals: Vec<f64>,
    pub params: AtomParams,
    pub source_tag: String,
}

impl EmissionRecord {
    pub fn empty(params: AtomParams, source_tag: impl Into<String>) -> Self {
        Self {
            emission_times: Vec::new(),
            intervals: Vec::new(),
            params,
            source_tag: source_tag.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    fn push_interval(&mut self, interval: f64) {
        let last = self.emission_times.last().copied().unwrap_or(0.0);
        self.intervals.push(interval);
        self.emission_times.push(last + interval);
    }

    /// Writes `index,time_s,interval_s` rows with 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,time_s,interval_s")?;
        for (k, (t, dtau)) in self.emission_times.iter().zip(&self.intervals).enumerate() {
            writeln!(w, "{},{},{}", k, fmt_sig(*t, 12), fmt_sig(*dtau, 12))?;
        }
        Ok(())
    }

    /// Excited population sampled every `sample_dt` seconds on `[0, t_end]`,
    /// restarting from the ground state at each emission.
    pub fn population_trace(&self, t_end: f64, sample_dt: f64) -> Vec<(f64, f64)> {
        let (omega, gamma) = (self.params.rabi_omega, self.params.gamma);
        let steps = (t_end / sample_dt).floor() as usize;
        let mut out = Vec::with_capacity(steps + 1);
        let mut next = 0;
        let mut last_reset = 0.0;
        for k in 0..=steps {
            let t = k as f64 * sample_dt;
            while next < self.emission_times.len() && self.emission_times[next] <= t {
                last_reset = self.emission_times[next];
                next += 1;
            }
            let since = t - last_reset;
            let p = match self.params.model {
                Model::HazardRenewal => excited_probability(since, omega),
                Model::QuantumJump => conditional_excited_population(since, omega, gamma),
            };
            out.push((t, p));
        }
        out
    }
}

/// Reads the `interval_s` column of an emission CSV.
pub fn read_intervals_csv<R: BufRead>(reader: R) -> Result<Vec<f64>, QjumpError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| QjumpError::MalformedCsv {
            line: n + 1,
            message: e.to_string(),
        })?;
        if n == 0 {
            if line.trim() != "index,time_s,interval_s" {
                return Err(QjumpError::MalformedCsv {
                    line: 1,
                    message: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(2).ok_or_else(|| QjumpError::MalformedCsv {
            line: n + 1,
            message: "expected three fields".into(),
        })?;
        let v: f64 = field.trim().parse().map_err(|_| QjumpError::MalformedCsv {
            line: n + 1,
            message: format!("bad interval {field:?}"),
        })?;
        out.push(v);
    }
    Ok(out)
}

/// Simulates one emission trajectory starting from the ground state at t = 0.
pub fn simulate_trajectory<S: RandomSource + ?Sized>(
    params: &AtomParams,
    source: &mut S,
    stop: Stop,
) -> Result<EmissionRecord, QjumpError> {
    params.validate()?;
    stop.validate()?;
    let mut record = EmissionRecord::empty(*params, source.tag());
    if matches!(stop, Stop::NEvents(0)) {
        return Ok(record);
    }
    match params.model {
        Model::HazardRenewal => {
            let mut now = 0.0;
            loop {
                if let Stop::NEvents(n) = stop {
                    if record.len() >= n {
                        break;
                    }
                }
                let tau = sample_interval_hazard(source, params.rabi_omega, params.gamma)?;
                if let Stop::TMax(t_max) = stop {
                    if now + tau > t_max {
                        break;
                    }
                }
                now += tau;
                record.push_interval(tau);
            }
        }
        Model::QuantumJump => {
            if params.gamma == 0.0 && matches!(stop, Stop::NEvents(_)) {
                return Err(QjumpError::NoDecayChannel);
            }
            let prop = NoJumpPropagator::new(params.dt, params.rabi_omega, params.gamma);
            let max_steps = match stop {
                Stop::TMax(t) => (t / params.dt + 1e-9).floor() as u64,
                Stop::NEvents(_) => u64::MAX,
            };
            let target = match stop {
                Stop::NEvents(n) => n,
                Stop::TMax(_) => usize::MAX,
            };
            let mut state = StateAmplitudes::ground();
            let mut step: u64 = 0;
            let mut last_jump: u64 = 0;
            while step < max_steps && record.len() < target {
                let u = source.next_unit()?;
                step += 1;
                match prop.step(&state, u)? {
                    StepOutcome::JumpOccurred => {
                        record.intervals.push((step - last_jump) as f64 * params.dt);
                        record.emission_times.push(step as f64 * params.dt);
                        last_jump = step;
                        state = StateAmplitudes::ground();
                    }
                    StepOutcome::Evolved(next) => state = next,
                }
            }
        }
    }
    Ok(record)
}
