//! CD8⁺ T-cell / infected-cell / effector / virus system.
//!
//! The source figure names the four compartments and six coefficients but
//! prints no equations. The system used here is the smallest one in which
//! every coefficient sits where its description puts it:
//!
//! | coefficient | description                                   | term            |
//! |-------------|-----------------------------------------------|-----------------|
//! | `beta_tv`   | T cells stimulated by viral load              | `+β_TV·T·V` in T |
//! | `beta_t`    | virus producing infected cells                | `+β_T·V` in I    |
//! | `k_ie`      | killing of infected cells by effectors        | `−k_IE·I·E` in I |
//! | `rho_i`     | effector stimulation by infected cells        | `+ρ_I·I` in E    |
//! | `p`         | virus production per infected cell            | `+p·I` in V      |
//! | `c_v`       | virus clearance                               | `−c_v·V` in V    |
//!
//! ```text
//! dT/dt = β_TV·T·V
//! dI/dt = β_T·V − k_IE·I·E
//! dE/dt = ρ_I·I
//! dV/dt = p·I − c_v·V
//! ```
//!
//! States are clamped at 0 after every RK4 step. Default parameter values are
//! synthetic.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::time_grid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cd8Params {
    pub beta_t: f64,
    pub beta_tv: f64,
    pub p: f64,
    pub k_ie: f64,
    pub rho_i: f64,
    pub c_v: f64,
}

impl Default for Cd8Params {
    fn default() -> Self {
        Cd8Params {
            beta_t: 0.5,
            beta_tv: 0.05,
            p: 10.0,
            k_ie: 2.0,
            rho_i: 1.0,
            c_v: 3.0,
        }
    }
}

impl Cd8Params {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("beta_t", self.beta_t),
            ("beta_tv", self.beta_tv),
            ("p", self.p),
            ("k_ie", self.k_ie),
            ("rho_i", self.rho_i),
            ("c_v", self.c_v),
        ];
        for (name, x) in fields {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {x}")));
            }
        }
        if self.c_v <= 0.0 {
            return Err(Error::invalid("c_v must be positive"));
        }
        Ok(())
    }

    fn deriv(&self, s: [f64; 4]) -> [f64; 4] {
        let [t, i, e, v] = s;
        [
            self.beta_tv * t * v,
            self.beta_t * v - self.k_ie * i * e,
            self.rho_i * i,
            self.p * i - self.c_v * v,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImmuneState {
    pub t_cells: f64,
    pub infected: f64,
    pub effectors: f64,
    pub virus: f64,
}

impl Default for ImmuneState {
    fn default() -> Self {
        ImmuneState {
            t_cells: 1.0,
            infected: 0.0,
            effectors: 0.0,
            virus: 1.0,
        }
    }
}

impl ImmuneState {
    fn to_array(self) -> [f64; 4] {
        [self.t_cells, self.infected, self.effectors, self.virus]
    }

    fn from_array(a: [f64; 4]) -> Self {
        ImmuneState {
            t_cells: a[0],
            infected: a[1],
            effectors: a[2],
            virus: a[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|x| *x >= 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!("initial state must be non-negative: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ImmuneState>,
}

impl Trajectory {
    pub fn virus(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.virus)
    }

    /// Same states on a time axis stretched by `factor`.
    pub fn rescale_time(&self, factor: f64) -> Trajectory {
        Trajectory {
            times: self.times.iter().map(|t| t * factor).collect(),
            states: self.states.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,T,I,E,V\n");
        for (t, x) in self.times.iter().zip(&self.states) {
            let _ = writeln!(s, "{t},{},{},{},{}", x.t_cells, x.infected, x.effectors, x.virus);
        }
        s
    }
}

fn axpy(a: [f64; 4], h: f64, k: [f64; 4]) -> [f64; 4] {
    [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]]
}

pub fn simulate_cd8(params: &Cd8Params, initial: ImmuneState, duration_days: f64, step: f64) -> Result<Trajectory> {
    params.validate()?;
    initial.validate()?;
    let times = time_grid(duration_days, step)?;
    let mut states = Vec::with_capacity(times.len());
    let mut s = initial.to_array();
    states.push(initial);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let k1 = params.deriv(s);
        let k2 = params.deriv(axpy(s, dt / 2.0, k1));
        let k3 = params.deriv(axpy(s, dt / 2.0, k2));
        let k4 = params.deriv(axpy(s, dt, k3));
        for j in 0..4 {
            s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("state became non-finite at t={}", w[1])));
        }
        for x in &mut s {
            *x = x.max(0.0);
        }
        states.push(ImmuneState::from_array(s));
    }
    Ok(Trajectory { times, states })
}

/// Step-halving convergence ratio `err(step) / err(step/2)`, both errors
/// measured against a `step/16` reference at the coarse sample times. About
/// 16 for a fourth-order scheme. `duration_days` must be a whole multiple of
/// `step`.
pub fn convergence_ratio(params: &Cd8Params, initial: ImmuneState, duration_days: f64, step: f64) -> Result<f64> {
    let n = (duration_days / step).round();
    if !(n >= 1.0) || ((n * step - duration_days) / duration_days).abs() > 1e-9 {
        return Err(Error::invalid("convergence check needs duration to be a whole multiple of step"));
    }
    let n = n as usize;
    let coarse = simulate_cd8(params, initial, duration_days, step)?;
    let half = simulate_cd8(params, initial, duration_days, step / 2.0)?;
    let reference = simulate_cd8(params, initial, duration_days, step / 16.0)?;
    let err = |traj: &Trajectory, stride: usize| {
        (0..=n)
            .map(|i| {
                let a = traj.states[i * stride].to_array();
                let b = reference.states[i * 16].to_array();
                (0..4).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2) = (err(&coarse, 1), err(&half, 2));
    if e2 == 0.0 {
        return Err(Error::numeric("half-step error is zero; trajectory is trivial at this step"));
    }
    Ok(e1 / e2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Clearance,
    Persistence,
    Resurgence,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Clearance => "clearance",
            Outcome::Persistence => "persistence",
            Outcome::Resurgence => "resurgence",
        })
    }
}

/// Viral outcome relative to `detection_limit`: never below it is
/// persistence, below it and later back above it is resurgence, below it for
/// the rest of the run is clearance.
pub fn classify_outcome(traj: &Trajectory, detection_limit: f64) -> Outcome {
    let v: Vec<f64> = traj.virus().collect();
    match v.iter().position(|&x| x < detection_limit) {
        None => Outcome::Persistence,
        Some(first) if v[first..].iter().any(|&x| x > detection_limit) => Outcome::Resurgence,
        Some(_) => Outcome::Clearance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(t: f64, i: f64, e: f64, v: f64) -> ImmuneState {
        ImmuneState {
            t_cells: t,
            infected: i,
            effectors: e,
            virus: v,
        }
    }

    #[test]
    fn no_infection_is_fixed_point() {
        let init = state(3.0, 0.0, 0.5, 0.0);
        let tr = simulate_cd8(&Cd8Params::default(), init, 30.0, 0.01).unwrap();
        assert_eq!(tr.times.len(), 3001);
        assert!(tr.states.iter().all(|s| *s == init));
    }

    #[test]
    fn decay_only_matches_exponential() {
        let params = Cd8Params {
            p: 0.0,
            beta_t: 0.0,
            ..Default::default()
        };
        let v0 = 5.0;
        let tr = simulate_cd8(&params, state(1.0, 0.0, 0.0, v0), 5.0, 1e-3).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = v0 * (-params.c_v * t).exp();
            assert!((s.virus / exact - 1.0).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn fourth_order_convergence() {
        for step in [0.1, 0.05, 0.02] {
            let r = convergence_ratio(&Cd8Params::default(), ImmuneState::default(), 10.0, step).unwrap();
            assert!((12.0..=20.0).contains(&r), "step {step}: ratio {r}");
            let order = r.log2();
            assert!((3.5..=4.5).contains(&order));
        }
    }

    #[test]
    fn default_run_clears_virus() {
        let tr = simulate_cd8(&Cd8Params::default(), ImmuneState::default(), 30.0, 0.01).unwrap();
        assert_eq!(classify_outcome(&tr, 1e-3), Outcome::Clearance);
        let peak = tr.virus().fold(0.0, f64::max);
        assert!(peak > 1.0);
    }

    fn traj(v: &[f64]) -> Trajectory {
        Trajectory {
            times: (0..v.len()).map(|i| i as f64).collect(),
            states: v.iter().map(|&x| state(1.0, 0.0, 0.0, x)).collect(),
        }
    }

    #[test]
    fn outcome_cases() {
        let decay: Vec<f64> = (0..20).map(|i| 10.0 * 0.5f64.powi(i)).collect();
        assert_eq!(classify_outcome(&traj(&decay), 0.01), Outcome::Clearance);
        let mut dip = decay.clone();
        dip[19] = 1.0;
        assert_eq!(classify_outcome(&traj(&dip), 0.01), Outcome::Resurgence);
        assert_eq!(classify_outcome(&traj(&[5.0; 12]), 0.01), Outcome::Persistence);
        for f in [0.1, 3.0, 1e4] {
            assert_eq!(classify_outcome(&traj(&dip).rescale_time(f), 0.01), Outcome::Resurgence);
            assert_eq!(classify_outcome(&traj(&decay).rescale_time(f), 0.01), Outcome::Clearance);
        }
    }

    #[test]
    fn fuzzed_parameters_stay_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let params = Cd8Params {
                beta_t: rng.gen_range(0.0..2.0),
                beta_tv: rng.gen_range(0.0..0.2),
                p: rng.gen_range(0.0..20.0),
                k_ie: rng.gen_range(0.0..5.0),
                rho_i: rng.gen_range(0.0..2.0),
                c_v: rng.gen_range(0.1..10.0),
            };
            let init = state(
                rng.gen_range(0.0..5.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..5.0),
            );
            match simulate_cd8(&params, init, 5.0, 0.05) {
                Ok(tr) => assert!(tr
                    .states
                    .iter()
                    .all(|s| s.to_array().iter().all(|&x| x >= 0.0 && x.is_finite()))),
                Err(e) => assert!(e.is_numeric()),
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Cd8Params::default();
        assert!(simulate_cd8(&p, ImmuneState::default(), 1.0, 0.0).is_err());
        assert!(simulate_cd8(&p, state(-1.0, 0.0, 0.0, 0.0), 1.0, 0.1).is_err());
        assert!(simulate_cd8(&Cd8Params { c_v: 0.0, ..p }, ImmuneState::default(), 1.0, 0.1).is_err());
        assert!(convergence_ratio(&p, ImmuneState::default(), 1.0, 0.3).is_err());
    }

    #[test]
    fn csv_header() {
        let tr = simulate_cd8(&Cd8Params::default(), state(1.0, 0.0, 0.0, 0.0), 1.0, 0.5).unwrap();
        assert_eq!(tr.to_csv(), "t,T,I,E,V\n0,1,0,0,0\n0.5,1,0,0,0\n1,1,0,0,0\n");
    }
}
