//! Perspective (EWA) projection of 3D Gaussians and its adjoint.

use glam::{DMat3, DVec3};

use crate::scene::{CameraPose, Intrinsics};
use crate::splat::gaussian::Gaussian3D;

/// Gaussians closer than this to the camera plane are culled.
pub const NEAR_PLANE: f64 = 0.05;

/// Screen-space footprint of a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub mean: [f64; 2],
    /// Upper triangle `(xx, xy, yy)` of the 2D covariance.
    pub cov: [f64; 3],
    /// Upper triangle of the inverse covariance.
    pub conic: [f64; 3],
    /// Camera-space z of the mean.
    pub depth: f64,
    pub cam: DVec3,
    /// Largest standard deviation in pixels.
    pub max_std: f64,
}

/// `J` rows of the perspective Jacobian at camera point `c`.
fn jacobian(c: DVec3, f: f64) -> [[f64; 3]; 2] {
    let iz = 1.0 / c.z;
    [
        [f * iz, 0.0, -f * c.x * iz * iz],
        [0.0, f * iz, -f * c.y * iz * iz],
    ]
}

fn sandwich(j: &[[f64; 3]; 2], s: &DMat3) -> [f64; 3] {
    let js: [[f64; 3]; 2] = [0, 1].map(|r| [0, 1, 2].map(|c| (0..3).map(|k| j[r][k] * s.col(c)[k]).sum()));
    let e = |r: usize, c: usize| (0..3).map(|k| js[r][k] * j[c][k]).sum::<f64>();
    [e(0, 0), e(0, 1), e(1, 1)]
}

/// Project with an isotropic screen-space `blur` added to the covariance.
/// Returns `None` for Gaussians behind the near plane or degenerate ones.
pub fn project(g: &Gaussian3D, pose: &CameraPose, intr: &Intrinsics, blur: f64) -> Option<Projected> {
    let w = pose.rotation();
    let cam = w * (g.mean - pose.eye());
    if cam.z < NEAR_PLANE {
        return None;
    }
    let sc = w * g.covariance * w.transpose();
    let j = jacobian(cam, intr.focal);
    let [a, b, c] = sandwich(&j, &sc);
    let cov = [a + blur, b, c + blur];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > 0.0) {
        return None;
    }
    let mid = 0.5 * (cov[0] + cov[2]);
    let lambda = mid + (mid * mid - det).max(0.0).sqrt();
    Some(Projected {
        mean: [intr.cx + intr.focal * cam.x / cam.z, intr.cy + intr.focal * cam.y / cam.z],
        cov,
        conic: [cov[2] / det, -cov[1] / det, cov[0] / det],
        depth: cam.z,
        cam,
        max_std: lambda.sqrt(),
    })
}

/// Loss gradients w.r.t. the screen-space quantities of one Gaussian.
/// `conic[1]` is the derivative w.r.t. the shared off-diagonal entry.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScreenGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub depth: f64,
}

/// Pull screen-space gradients back to the world mean and the (symmetric)
/// world covariance.
pub fn project_backward(
    g: &Gaussian3D,
    pose: &CameraPose,
    intr: &Intrinsics,
    p: &Projected,
    grad: &ScreenGrad,
) -> (DVec3, DMat3) {
    let f = intr.focal;
    let w = pose.rotation();
    let c = p.cam;
    let [ca, cb, cc] = p.cov;
    let det = ca * cc - cb * cb;
    let d2 = det * det;
    let [ga, gb, gc] = grad.conic;
    // Inverse-covariance entries as functions of (A, B, C).
    let g_ca = ga * (-cc * cc / d2) + gb * (cb * cc / d2) + gc * (-cb * cb / d2);
    let g_cb = ga * (2.0 * cb * cc / d2) + gb * (-1.0 / det - 2.0 * cb * cb / d2) + gc * (2.0 * ca * cb / d2);
    let g_cc = ga * (-cb * cb / d2) + gb * (cb * ca / d2) + gc * (-ca * ca / d2);
    let g2 = [[g_ca, 0.5 * g_cb], [0.5 * g_cb, g_cc]];

    let j = jacobian(c, f);
    let sc = w * g.covariance * w.transpose();
    // dL/dΣc = Jᵀ G J
    let mut g_sc = [[0.0; 3]; 3];
    for (r, row) in g_sc.iter_mut().enumerate() {
        for (col, v) in row.iter_mut().enumerate() {
            *v = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| j[a][r] * g2[a][b] * j[b][col])
                .sum();
        }
    }
    // dL/dJ = 2 G J Σc
    let mut g_j = [[0.0; 3]; 2];
    for (a, row) in g_j.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = 2.0
                * (0..2)
                    .map(|b| g2[a][b] * (0..3).map(|m| j[b][m] * sc.col(k)[m]).sum::<f64>())
                    .sum::<f64>();
        }
    }
    let iz = 1.0 / c.z;
    let [gu, gv] = grad.mean;
    let mut g_cam = DVec3::new(gu * f * iz, gv * f * iz, -gu * f * c.x * iz * iz - gv * f * c.y * iz * iz);
    g_cam.z += grad.depth;
    g_cam.x += g_j[0][2] * (-f * iz * iz);
    g_cam.y += g_j[1][2] * (-f * iz * iz);
    g_cam.z += g_j[0][0] * (-f * iz * iz)
        + g_j[0][2] * (2.0 * f * c.x * iz * iz * iz)
        + g_j[1][1] * (-f * iz * iz)
        + g_j[1][2] * (2.0 * f * c.y * iz * iz * iz);

    let g_sc = DMat3::from_cols(
        DVec3::new(g_sc[0][0], g_sc[1][0], g_sc[2][0]),
        DVec3::new(g_sc[0][1], g_sc[1][1], g_sc[2][1]),
        DVec3::new(g_sc[0][2], g_sc[1][2], g_sc[2][2]),
    );
    (w.transpose() * g_cam, w.transpose() * g_sc * w)
}
