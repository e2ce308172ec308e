use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;

/// Fractional exponent `s` in (0, 1) and the extension weight exponent `a = 1 - 2s`.
///
/// `a` is always derived from `s`; there is no way to set it independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FracParams {
    s: f64,
    a: f64,
}

impl FracParams {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::domain(format!(
                "fractional exponent s = {s} must lie in the open interval (0,1)"
            )));
        }
        let a = 1.0 - 2.0 * s;
        debug_assert!(a > -1.0 && a < 1.0);
        Ok(FracParams { s, a })
    }

    /// `s = 1` reduces the multiplier to the heat operator itself. Only the
    /// spectral route accepts it.
    pub(crate) fn heat_operator() -> Self {
        FracParams { s: 1.0, a: -1.0 }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// `1 - a`, the power of the extension variable in the kernel (equal to `2s`).
    pub fn trace_power(&self) -> f64 {
        1.0 - self.a
    }

    /// Normalization of the extension kernel, `1 / (4^s Gamma(s))`.
    pub fn kernel_constant(&self) -> f64 {
        1.0 / (4f64.powf(self.s) * gamma(self.s))
    }

    /// Positive prefactor of the hypersingular integral, `-1/Gamma(-s) = s / Gamma(1-s)`.
    pub fn singular_constant(&self) -> f64 {
        self.s / gamma(1.0 - self.s)
    }

    /// Closed-form Neumann constant `4^s Gamma(1+s) / Gamma(1-s)` for the
    /// unit-mass kernel. Used as a cross-check on the fitted calibration.
    pub fn neumann_constant(&self) -> f64 {
        4f64.powf(self.s) * gamma(1.0 + self.s) / gamma(1.0 - self.s)
    }
}

impl<'de> Deserialize<'de> for FracParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            s: f64,
        }
        let raw = Raw::deserialize(d)?;
        FracParams::new(raw.s).map_err(serde::de::Error::custom)
    }
}
