//! Three-term classifier-free guidance with a static (3D-only) model.

use serde::{Deserialize, Serialize};

use crate::diffusion::latent::LatentVideo;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceWeights {
    /// Scale of the conditional-minus-unconditional term.
    pub w1: f64,
    /// Scale of the conditional-minus-static term.
    pub w2: f64,
}

impl Default for GuidanceWeights {
    fn default() -> Self {
        Self { w1: 7.0, w2: 0.5 }
    }
}

impl GuidanceWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1.is_finite() && self.w2.is_finite()) {
            return Err(Error::invalid("guidance weights must be finite"));
        }
        Ok(())
    }
}

/// `ε̂ = ε_c + w1 (ε_c − ε_u) + w2 (ε_c − ε̄)`, elementwise.
pub fn cfg_combine_slices(cond: f64, uncond: f64, static3d: f64, w: &GuidanceWeights) -> f64 {
    cond + w.w1 * (cond - uncond) + w.w2 * (cond - static3d)
}

pub fn cfg_combine(
    eps_cond: &LatentVideo,
    eps_uncond: &LatentVideo,
    eps_static: &LatentVideo,
    w: &GuidanceWeights,
) -> Result<LatentVideo> {
    eps_cond.same_shape(eps_uncond)?;
    eps_cond.same_shape(eps_static)?;
    let data = eps_cond
        .data
        .iter()
        .zip(&eps_uncond.data)
        .zip(&eps_static.data)
        .map(|((&c, &u), &s)| cfg_combine_slices(c, u, s, w))
        .collect();
    LatentVideo::from_data(eps_cond.shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::latent::LatentShape;
    use proptest::prelude::*;

    const SHAPE: LatentShape = LatentShape { frames: 2, height: 2, width: 2, channels: 3 };

    fn latent(vals: &[f64]) -> LatentVideo {
        LatentVideo::from_data(SHAPE, vals.to_vec()).unwrap()
    }

    #[test]
    fn default_weights_scalar_case() {
        let w = GuidanceWeights::default();
        assert_eq!(cfg_combine_slices(1.0, 0.5, 0.8, &w), 1.0 + 7.0 * 0.5 + 0.5 * 0.2);
        assert!((cfg_combine_slices(1.0, 0.5, 0.8, &w) - 4.6).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = LatentVideo::zeros(SHAPE);
        let b = LatentVideo::zeros(LatentShape { frames: 3, ..SHAPE });
        assert!(cfg_combine(&a, &b, &a, &GuidanceWeights::default()).is_err());
    }

    proptest! {
        #[test]
        fn equal_predictions_pass_through(vals in proptest::collection::vec(-3.0f64..3.0, 24), w1 in -10.0f64..10.0, w2 in -10.0f64..10.0) {
            let e = latent(&vals);
            let out = cfg_combine(&e, &e, &e, &GuidanceWeights { w1, w2 }).unwrap();
            prop_assert_eq!(out, e);
        }

        #[test]
        fn linear_in_conditional_term(
            c in proptest::collection::vec(-3.0f64..3.0, 24),
            u in proptest::collection::vec(-3.0f64..3.0, 24),
            s in proptest::collection::vec(-3.0f64..3.0, 24),
            d in proptest::collection::vec(-1.0f64..1.0, 24),
            w1 in 0.0f64..10.0, w2 in 0.0f64..2.0,
        ) {
            let w = GuidanceWeights { w1, w2 };
            let shifted: Vec<f64> = c.iter().zip(&d).map(|(a, b)| a + b).collect();
            let base = cfg_combine(&latent(&c), &latent(&u), &latent(&s), &w).unwrap();
            let moved = cfg_combine(&latent(&shifted), &latent(&u), &latent(&s), &w).unwrap();
            for i in 0..24 {
                let diff = moved.data[i] - base.data[i];
                prop_assert!((diff - (1.0 + w1 + w2) * d[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn zero_weights_return_conditional(c in proptest::collection::vec(-3.0f64..3.0, 24), u in proptest::collection::vec(-3.0f64..3.0, 24)) {
            let w = GuidanceWeights { w1: 0.0, w2: 0.0 };
            let out = cfg_combine(&latent(&c), &latent(&u), &latent(&u), &w).unwrap();
            prop_assert_eq!(out.data, c);
        }
    }
}
