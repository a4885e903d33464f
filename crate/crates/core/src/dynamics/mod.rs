//! Immune dynamics: saturating antigen-driven T-cell proliferation and a
//! CD8⁺ T / infected / effector / virus ODE system, both integrated with a
//! fixed-step classical RK4 scheme.

mod cd8;
mod svg;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cd8::{classify_outcome, convergence_ratio, simulate_cd8, Cd8Params, ImmuneState, Outcome, Trajectory};
pub use svg::{line_plot_svg, PlotSeries};

pub const DEFAULT_STEP: f64 = 0.01;

/// High-antigen decline of the proliferation rate, a multiplier
/// `1 / (1 + (I / k_ex)^n_ex)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exhaustion {
    pub k_ex: f64,
    pub n_ex: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProliferationParams {
    /// Maximum proliferation rate, 1/day.
    pub rho: f64,
    /// Half-saturation antigen concentration.
    pub h: f64,
    pub t0_cells: f64,
    pub duration_days: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustion: Option<Exhaustion>,
}

impl Default for ProliferationParams {
    fn default() -> Self {
        ProliferationParams {
            rho: 1.0,
            h: 0.01,
            t0_cells: 100.0,
            duration_days: 7.0,
            exhaustion: None,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ProliferationParams {
    pub fn validate(&self) -> Result<()> {
        positive("rho", self.rho)?;
        positive("h", self.h)?;
        positive("t0_cells", self.t0_cells)?;
        positive("duration_days", self.duration_days)?;
        if let Some(ex) = self.exhaustion {
            positive("k_ex", ex.k_ex)?;
            if !(ex.n_ex >= 1.0 && ex.n_ex.is_finite()) {
                return Err(Error::invalid(format!("n_ex must be >= 1, got {}", ex.n_ex)));
            }
        }
        Ok(())
    }
}

/// Per-capita proliferation rate `ρ·I/(h+I)`, times the exhaustion
/// multiplier when one is configured.
pub fn saturating_rate(antigen: f64, params: &ProliferationParams) -> f64 {
    let base = params.rho * antigen / (params.h + antigen);
    match params.exhaustion {
        None => base,
        Some(ex) => base / (1.0 + (antigen / ex.k_ex).powf(ex.n_ex)),
    }
}

/// Sample times `0, step, 2·step, …` ending exactly at `duration`.
pub(crate) fn time_grid(duration: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    positive("duration", duration)?;
    let n = (duration / step - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    times.push(duration);
    Ok(times)
}

/// T-cell counts over time.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrajectory {
    pub times: Vec<f64>,
    pub t_cells: Vec<f64>,
}

impl CellTrajectory {
    pub fn final_count(&self) -> f64 {
        *self.t_cells.last().expect("trajectory is never empty")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,T\n");
        for (t, x) in self.times.iter().zip(&self.t_cells) {
            let _ = writeln!(s, "{t},{x}");
        }
        s
    }
}

/// Integrates `dT/dt = saturating_rate(I(t))·T` from `t0_cells`.
pub fn simulate_proliferation<F>(params: &ProliferationParams, antigen: F, step: f64) -> Result<CellTrajectory>
where
    F: Fn(f64) -> f64,
{
    params.validate()?;
    let times = time_grid(params.duration_days, step)?;
    let rate = |t: f64| -> Result<f64> {
        let i = antigen(t);
        if !(i >= 0.0 && i.is_finite()) {
            return Err(Error::invalid(format!("antigen must be non-negative, got {i} at t={t}")));
        }
        Ok(saturating_rate(i, params))
    };
    let mut t_cells = Vec::with_capacity(times.len());
    let mut x = params.t0_cells;
    t_cells.push(x);
    for w in times.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let k1 = rate(t)? * x;
        let k2 = rate(t + dt / 2.0)? * (x + dt / 2.0 * k1);
        let k3 = rate(t + dt / 2.0)? * (x + dt / 2.0 * k2);
        let k4 = rate(t + dt)? * (x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !x.is_finite() {
            return Err(Error::numeric(format!("T-cell count became non-finite at t={}", w[1])));
        }
        t_cells.push(x.max(0.0));
    }
    Ok(CellTrajectory { times, t_cells })
}

/// Final T-cell count for each constant antigen level in `grid`.
pub fn dose_sweep(params: &ProliferationParams, grid: &[f64], step: f64) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::invalid("antigen grid is empty"));
    }
    if grid.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
        return Err(Error::invalid("antigen grid must be non-negative"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("antigen grid must be strictly increasing"));
    }
    grid.iter()
        .map(|&a| Ok((a, simulate_proliferation(params, |_| a, step)?.final_count())))
        .collect()
}

pub fn sweep_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("antigen,final_T\n");
    for (a, t) in points {
        let _ = writeln!(s, "{a},{t}");
    }
    s
}

/// `n` log-spaced antigen levels from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    positive("grid lower bound", lo)?;
    if !(hi > lo) || n < 2 {
        return Err(Error::invalid("log grid needs hi > lo and at least 2 points"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}
