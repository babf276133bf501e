//! Signed Q5.10 fixed-point log-odds.
//!
//! All map arithmetic happens on the raw `i16`. Floating point only appears
//! when converting a probability into log-odds, which is done once when a
//! [`MapConfig`](crate::MapConfig) is built.

use std::fmt;

use crate::error::Error;

/// Number of fractional bits.
pub const FRAC_BITS: u32 = 10;
/// `2^FRAC_BITS`.
pub const SCALE: f64 = (1u32 << FRAC_BITS) as f64;

/// Occupancy log-odds, raw value interpreted at scale `2^-10`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogOdds(i16);

impl LogOdds {
    pub const ZERO: LogOdds = LogOdds(0);

    pub const fn from_raw(raw: i16) -> Self {
        LogOdds(raw)
    }

    pub const fn raw(self) -> i16 {
        self.0
    }

    /// Quantize `ln(p / (1 - p))` to the Q5.10 grid, rounding half away from zero.
    pub fn from_probability(p: f64) -> Result<Self, Error> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} is outside (0, 1)")));
        }
        Self::from_f64((p / (1.0 - p)).ln())
    }

    /// Quantize a real log-odds value, rounding half away from zero.
    pub fn from_f64(value: f64) -> Result<Self, Error> {
        // f64::round is half-away-from-zero.
        let scaled = (value * SCALE).round();
        if !scaled.is_finite() || scaled < i16::MIN as f64 || scaled > i16::MAX as f64 {
            return Err(Error::Domain(format!(
                "log-odds {value} is not representable in Q5.10"
            )));
        }
        Ok(LogOdds(scaled as i16))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE
    }

    /// Probability corresponding to this log-odds value.
    pub fn probability(self) -> f64 {
        1.0 - 1.0 / (1.0 + self.to_f64().exp())
    }

    /// `clamp(self + delta, min, max)` on raw integers.
    pub fn saturating_add(self, delta: LogOdds, min: LogOdds, max: LogOdds) -> LogOdds {
        let sum = self.0 as i32 + delta.0 as i32;
        LogOdds(sum.clamp(min.0 as i32, max.0 as i32) as i16)
    }
}

impl fmt::Display for LogOdds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.5}", self.to_f64())
    }
}
