//! Training objectives: noise prediction, latent motion-magnitude
//! reconstruction and their weighted sum.

use crate::diffusion::latent::LatentVideo;
use crate::error::{Error, Result};

/// Mean squared error between predicted and true noise.
pub fn loss_ldm(eps_hat: &LatentVideo, eps: &LatentVideo) -> Result<f64> {
    eps_hat.same_shape(eps)?;
    let n = eps.data.len() as f64;
    Ok(eps_hat
        .data
        .iter()
        .zip(&eps.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Latent motion magnitude `(1/T)·‖z − z̄‖²`: squared differences summed
/// over every element, divided by the frame count only.
pub fn latent_motion_magnitude(z: &LatentVideo, z_static: &LatentVideo) -> Result<f64> {
    z.same_shape(z_static)?;
    let n = z.shape.frames as f64;
    Ok(z.data
        .iter()
        .zip(&z_static.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// `(m(z0) − m(ẑ0))²` with both magnitudes measured against `z̄0`.
pub fn loss_mr(z0: &LatentVideo, z0_hat: &LatentVideo, z0_static: &LatentVideo) -> Result<f64> {
    z0.same_shape(z0_hat)?;
    let m_true = latent_motion_magnitude(z0, z0_static)?;
    let m_est = latent_motion_magnitude(z0_hat, z0_static)?;
    Ok((m_true - m_est).powi(2))
}

pub fn total_loss(ldm: f64, mr: f64, omega: f64) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::invalid(format!("omega must be non-negative, got {omega}")));
    }
    Ok(ldm + omega * mr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::latent::LatentShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SHAPE: LatentShape = LatentShape { frames: 3, height: 2, width: 2, channels: 3 };

    fn random(seed: u64) -> LatentVideo {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LatentVideo::from_data(SHAPE, (0..SHAPE.numel()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn ldm_cases() {
        let eps = random(1);
        assert_eq!(loss_ldm(&eps, &eps).unwrap(), 0.0);
        let shifted = eps.map2(&eps, |e, _| e + 0.3).unwrap();
        assert!((loss_ldm(&shifted, &eps).unwrap() - 0.09).abs() < 1e-15);
        let other = random(2);
        let brute: f64 = (0..SHAPE.numel())
            .map(|i| (other.data[i] - eps.data[i]).powi(2))
            .sum::<f64>()
            / SHAPE.numel() as f64;
        assert!((loss_ldm(&other, &eps).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn mr_cases() {
        let z0 = random(3);
        let zbar = random(4);
        assert_eq!(loss_mr(&z0, &z0, &zbar).unwrap(), 0.0);

        // m(z0) = 0.04 and m(ẑ0) = 0.01 via constant offsets from z̄0.
        let per_frame = (SHAPE.height * SHAPE.width * SHAPE.channels) as f64;
        let zero = LatentVideo::zeros(SHAPE);
        let a = zero.map2(&zero, |_, _| (0.04 / per_frame).sqrt()).unwrap();
        let b = zero.map2(&zero, |_, _| (0.01 / per_frame).sqrt()).unwrap();
        assert!((latent_motion_magnitude(&a, &zero).unwrap() - 0.04).abs() < 1e-15);
        assert!((loss_mr(&a, &b, &zero).unwrap() - 9e-4).abs() < 1e-14);

        // A shared additive field cancels in every difference.
        let hat = random(5);
        let field = random(6);
        let add = |z: &LatentVideo| z.map2(&field, |x, f| x + f).unwrap();
        let before = loss_mr(&z0, &hat, &zbar).unwrap();
        let after = loss_mr(&add(&z0), &add(&hat), &add(&zbar)).unwrap();
        assert!((before - after).abs() < 1e-12);
        assert!(loss_mr(&z0, &LatentVideo::zeros(LatentShape { frames: 1, ..SHAPE }), &zbar).is_err());
    }

    #[test]
    fn motion_magnitude_divides_by_frames() {
        let zero = LatentVideo::zeros(SHAPE);
        let mut one = zero.clone();
        one.data[5] = 1.0;
        assert_eq!(latent_motion_magnitude(&one, &zero).unwrap(), 1.0 / 3.0);
        let doubled = one.map2(&zero, |x, _| 2.0 * x).unwrap();
        assert_eq!(latent_motion_magnitude(&doubled, &zero).unwrap(), 4.0 / 3.0);
    }

    #[test]
    fn total_cases() {
        assert!((total_loss(0.5, 0.2, 5e-4).unwrap() - 0.5001).abs() < 1e-15);
        assert_eq!(total_loss(0.7, 3.0, 0.0).unwrap(), 0.7);
        assert_eq!(total_loss(0.0, 0.0, 5e-4).unwrap(), 0.0);
        assert!(total_loss(0.1, 0.1, -1.0).is_err());
    }
}
