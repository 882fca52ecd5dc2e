//! Noise-scale calibration for a target signal-to-noise ratio.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric;
use crate::rng;

use super::SyntheticTruth;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrDefinition {
    /// E[‖L⋆‖_F / ‖ε‖_F] with ε the noise on the observed entries.
    Frobenius,
    /// E[‖L⋆‖_2 / ‖δ(γ U⋆ D V⋆ᵀ + ε)‖_2].
    Spectral,
    /// ‖L⋆‖_F / σ, the RMS of ⟨A, L⋆⟩ over the noise RMS.
    Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum SnrModel {
    Completion { m: usize },
    Denoise { gamma: f64 },
    Linear,
}

impl SnrModel {
    pub fn definition(&self) -> SnrDefinition {
        match self {
            SnrModel::Completion { .. } => SnrDefinition::Frobenius,
            SnrModel::Denoise { .. } => SnrDefinition::Spectral,
            SnrModel::Linear => SnrDefinition::Scalar,
        }
    }
}

const MAX_STEPS: usize = 100;

/// Noise scale (σ for completion/linear, δ for denoising) whose SNR matches
/// `target`. The Monte-Carlo draws are fixed up front (common random numbers)
/// and the scale is found by bisection on log-scale.
pub fn calibrate_snr(truth: &SyntheticTruth, model: SnrModel, target: f64, mc_reps: usize, seed: u64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(invalid("target SNR must be positive and finite"));
    }
    if mc_reps == 0 {
        return Err(invalid("need at least one Monte-Carlo replicate"));
    }
    let (p1, p2) = truth.dims();
    // snr(s) = mean_k signal / (s · noise_k)
    let (signal, noise): (f64, Vec<f64>) = match model {
        SnrModel::Completion { m } => {
            if m == 0 {
                return Err(invalid("completion SNR needs m ≥ 1"));
            }
            let mut g = rng::seeded(seed);
            let draws = (0..mc_reps)
                .map(|_| rng::gaussian_matrix(&mut g, m, 1).norm())
                .collect();
            (truth.l_star.norm(), draws)
        }
        SnrModel::Denoise { gamma } => {
            // By rotation invariance ‖γ U D Vᵀ + ε‖₂ = ‖γ D + ε'‖₂ in law.
            let k = p1.min(p2);
            let draws = (0..mc_reps)
                .map(|rep| {
                    let mut g = rng::stream(seed, rep as u64);
                    let mut e = rng::gaussian_matrix(&mut g, p1, p2);
                    for i in 0..k {
                        e[(i, i)] += gamma * rng::gaussian(&mut g);
                    }
                    numeric::spectral_norm(&e)
                })
                .collect();
            (numeric::spectral_norm(&truth.l_star), draws)
        }
        SnrModel::Linear => return Ok(truth.l_star.norm() / target),
    };
    if noise.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Numerical("degenerate noise draw".into()));
    }
    let snr = |s: f64| numeric::compensated_sum(noise.iter().map(|n| signal / (s * n))) / noise.len() as f64;

    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut steps = 0;
    while snr(lo) < target {
        lo /= 2.0;
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Numerical("SNR calibration failed to bracket the target".into()));
        }
    }
    while snr(hi) > target {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Numerical("SNR calibration failed to bracket the target".into()));
        }
    }
    while steps < MAX_STEPS {
        let mid = (lo * hi).sqrt();
        let v = snr(mid);
        if (v / target - 1.0).abs() < 1e-12 {
            return Ok(mid);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    let mid = (lo * hi).sqrt();
    if (snr(mid) / target - 1.0).abs() <= 0.01 {
        Ok(mid)
    } else {
        Err(Error::Numerical("SNR bisection did not reach 1% accuracy".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::gen_low_rank;

    #[test]
    fn larger_snr_means_less_noise() {
        let t = gen_low_rank(20, 20, &[1.0, 0.5], 1).unwrap();
        let m = SnrModel::Completion { m: 200 };
        let s10 = calibrate_snr(&t, m, 10.0, 50, 3).unwrap();
        let s1 = calibrate_snr(&t, m, 1.0, 50, 3).unwrap();
        assert!(s10 < s1);
        assert!((s1 / s10 - 10.0).abs() < 1e-6);
    }

    #[test]
    fn linear_closed_form() {
        let t = gen_low_rank(5, 5, &[3.0, 4.0f64.min(3.0)], 1).unwrap();
        let s = calibrate_snr(&t, SnrModel::Linear, 2.0, 1, 0).unwrap();
        assert!((s - t.l_star.norm() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_target() {
        let t = gen_low_rank(5, 5, &[1.0], 1).unwrap();
        assert!(calibrate_snr(&t, SnrModel::Linear, 0.0, 10, 0).is_err());
        assert!(calibrate_snr(&t, SnrModel::Denoise { gamma: 0.0 }, 1.0, 0, 0).is_err());
    }
}
