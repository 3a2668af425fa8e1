//! Marshall–Palmer reflectivity/rain-rate conversion, `Z = A·R^b`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZrRelation {
    pub a: f64,
    pub b: f64,
    /// Reflectivity reported for zero rain; anything at or below it is dry.
    pub floor_dbz: f64,
}

impl Default for ZrRelation {
    fn default() -> Self {
        Self {
            a: 200.0,
            b: 1.6,
            floor_dbz: -32.0,
        }
    }
}

impl ZrRelation {
    /// Rain rate (mm/h) to reflectivity (dBZ).
    pub fn to_dbz(&self, rate: f64) -> Result<f64> {
        if !(rate >= 0.0) {
            return Err(Error::Domain(format!("rain rate must be >= 0, got {rate}")));
        }
        if rate == 0.0 {
            return Ok(self.floor_dbz);
        }
        Ok(10.0 * (self.a * rate.powf(self.b)).log10())
    }

    /// Reflectivity (dBZ) to rain rate (mm/h).
    pub fn to_rate(&self, dbz: f64) -> f64 {
        if dbz <= self.floor_dbz {
            return 0.0;
        }
        (10f64.powf(dbz / 10.0) / self.a).powf(1.0 / self.b)
    }
}

/// [`ZrRelation::to_dbz`] with the Marshall–Palmer defaults.
pub fn rain_rate_to_reflectivity(rate: f64) -> Result<f64> {
    ZrRelation::default().to_dbz(rate)
}

/// [`ZrRelation::to_rate`] with the Marshall–Palmer defaults.
pub fn reflectivity_to_rain_rate(dbz: f64) -> f64 {
    ZrRelation::default().to_rate(dbz)
}
