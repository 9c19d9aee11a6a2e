//! Closed-form Marchenko-Pastur density and resolvent, used as the reference
//! for every solver reduction.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    pub sigma2: f64,
    pub kappa: f64,
}

impl MpParams {
    pub fn new(sigma2: f64, kappa: f64) -> Self {
        debug_assert!(sigma2 > 0.0 && kappa > 0.0 && kappa <= 1.0);
        MpParams { sigma2, kappa }
    }

    /// Support edges `sigma^2 (sqrt(kappa) -+ 1)^2`.
    pub fn edges(&self) -> (f64, f64) {
        let s = self.kappa.sqrt();
        (self.sigma2 * (s - 1.0).powi(2), self.sigma2 * (s + 1.0).powi(2))
    }
}

pub fn mp_density(lambda: f64, p: MpParams) -> f64 {
    let (lo, hi) = p.edges();
    if lambda <= 0.0 || lambda <= lo || lambda >= hi {
        return 0.0;
    }
    ((hi - lambda) * (lambda - lo)).sqrt() / (2.0 * PI * p.kappa * p.sigma2 * lambda)
}

/// Root of `kappa sigma^2 z g^2 - (z - sigma^2 (1 - kappa)) g + 1 = 0` on the
/// physical branch (`Im g < 0` for `Im z > 0`, `g ~ 1/z` at infinity).
pub fn mp_resolvent(z: Complex64, p: MpParams) -> Complex64 {
    let a = p.sigma2 * (1.0 - p.kappa);
    let lead = p.kappa * p.sigma2 * z;
    let b = z - a;
    let s = (b * b - 4.0 * lead).sqrt();
    // q = b + s or b - s, whichever avoids cancellation
    let q = if (b.conj() * s).re >= 0.0 { b + s } else { b - s };
    let large = q / (2.0 * lead);
    let small = 2.0 / q;
    match (large.im < 0.0, small.im < 0.0) {
        (true, false) => large,
        (false, true) => small,
        _ => {
            if (z * small - 1.0).norm() <= (z * large - 1.0).norm() {
                small
            } else {
                large
            }
        }
    }
}
