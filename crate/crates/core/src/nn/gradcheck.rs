use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step, must lie in `[1e-7, 1e-3]`.
    pub eps: f64,
    /// Above this many parameters, compare directional derivatives along
    /// `probes` random sign vectors instead of every coordinate.
    pub max_coords: usize,
    pub probes: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: 5000,
            probes: 64,
            seed: 0,
        }
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Worst relative error between `analytic` and central finite differences of `f` at `params`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    opts: &GradCheckOptions,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&opts.eps) {
        return Err(Error::InvalidParameter(format!(
            "grad_check eps {} outside [1e-7, 1e-3]",
            opts.eps
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let first = f(params);
    let second = f(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let eps = opts.eps;
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    if params.len() <= opts.max_coords {
        for i in 0..p.len() {
            let orig = p[i];
            p[i] = orig + eps;
            let plus = f(&p);
            p[i] = orig - eps;
            let minus = f(&p);
            p[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(rel_error(analytic[i], numeric));
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.probes {
            let dir: Vec<f64> = (0..p.len())
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let shifted = |sign: f64| -> Vec<f64> {
                params.iter().zip(&dir).map(|(x, d)| x + sign * eps * d).collect()
            };
            let numeric = (f(&shifted(1.0)) - f(&shifted(-1.0))) / (2.0 * eps);
            let directional: f64 = analytic.iter().zip(&dir).map(|(g, d)| g * d).sum();
            worst = worst.max(rel_error(directional, numeric));
        }
    }
    Ok(worst)
}
