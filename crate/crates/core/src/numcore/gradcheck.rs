use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumError, ParamStore};

/// Central-difference gradient checker.
///
/// The relative error of one coordinate is
/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)`; the floor keeps
/// near-zero gradients from turning round-off into huge ratios.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-6,
            floor: 1e-4,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

impl GradCheck {
    /// `loss_and_grad` must compute the loss and *accumulate* gradients into
    /// the store it is handed; the checker zeroes gradients before each call.
    /// Returns the worst relative error over `probes` random coordinates
    /// (all coordinates when `probes` exceeds the parameter count).
    pub fn run<F, E>(
        &self,
        mut loss_and_grad: F,
        params: &mut ParamStore,
        probes: usize,
        seed: u64,
    ) -> Result<f64, E>
    where
        F: FnMut(&mut ParamStore) -> Result<f64, E>,
        E: From<NumError>,
    {
        let mut eval = |p: &mut ParamStore| -> Result<f64, E> {
            p.zero_grads();
            let loss = loss_and_grad(p)?;
            if !loss.is_finite() {
                return Err(NumError::NonFiniteLoss(format!("loss {loss} during gradient check")).into());
            }
            Ok(loss)
        };

        eval(params)?;
        let names: Vec<String> = params.names().map(str::to_string).collect();
        let mut offsets = Vec::with_capacity(names.len());
        let mut analytic = Vec::with_capacity(params.num_scalars());
        for name in &names {
            offsets.push(analytic.len());
            analytic.extend_from_slice(params.get(name)?.grad.data());
        }
        let total = analytic.len();
        if total == 0 {
            return Ok(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = sample(&mut rng, total, probes.min(total)).into_vec();
        picks.sort_unstable();

        let mut worst = 0.0f64;
        for flat in picks {
            let pi = offsets.partition_point(|&o| o <= flat) - 1;
            let name = &names[pi];
            let idx = flat - offsets[pi];
            let orig = params.value(name)?.data()[idx];

            params.value_mut(name)?.data_mut()[idx] = orig + self.step;
            let plus = eval(params)?;
            params.value_mut(name)?.data_mut()[idx] = orig - self.step;
            let minus = eval(params)?;
            params.value_mut(name)?.data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * self.step);
            worst = worst.max(relative_error(analytic[flat], numeric, self.floor));
        }
        params.zero_grads();
        Ok(worst)
    }
}

/// [`GradCheck::run`] with the default step (1e-6) and floor (1e-4).
pub fn grad_check<F, E>(loss_and_grad: F, params: &mut ParamStore, probes: usize, seed: u64) -> Result<f64, E>
where
    F: FnMut(&mut ParamStore) -> Result<f64, E>,
    E: From<NumError>,
{
    GradCheck::default().run(loss_and_grad, params, probes, seed)
}
