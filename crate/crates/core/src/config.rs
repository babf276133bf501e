use crate::error::{Error, Result};
use crate::logodds::LogOdds;
use crate::occupancy::UpdateKind;

/// Depth of the octree; leaves live at depth 16, the root at depth 0.
pub const TREE_DEPTH: u8 = 16;

/// Default sensor hit probability.
pub const DEFAULT_PROB_HIT: f64 = 0.7;
/// Default sensor miss probability.
pub const DEFAULT_PROB_MISS: f64 = 0.4;
/// Default lower clamp, -2.0 in Q5.10.
pub const DEFAULT_CLAMP_MIN: LogOdds = LogOdds::from_raw(-2048);
/// Default upper clamp, 3.5 in Q5.10.
pub const DEFAULT_CLAMP_MAX: LogOdds = LogOdds::from_raw(3584);
/// Default ray length cap in meters.
pub const DEFAULT_MAX_RANGE: f64 = 50.0;

/// Map parameters shared by every engine.
///
/// The log-odds constants are quantized once, up front, so that the fixed-point
/// engine and the reference octree apply bit-identical increments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapConfig {
    pub resolution: f64,
    pub l_hit: LogOdds,
    pub l_miss: LogOdds,
    pub l_min: LogOdds,
    pub l_max: LogOdds,
    pub occ_threshold: LogOdds,
    /// Rays longer than this are truncated and contribute no hit.
    pub max_range: Option<f64>,
    /// Debug switch: `false` disables node pruning (storage-savings measurement only).
    pub prune: bool,
}

impl MapConfig {
    /// Default thresholds at the given resolution.
    pub fn new(resolution: f64) -> Result<Self> {
        let cfg = MapConfig {
            resolution,
            l_hit: LogOdds::from_probability(DEFAULT_PROB_HIT)?,
            l_miss: LogOdds::from_probability(DEFAULT_PROB_MISS)?,
            l_min: DEFAULT_CLAMP_MIN,
            l_max: DEFAULT_CLAMP_MAX,
            occ_threshold: LogOdds::ZERO,
            max_range: Some(DEFAULT_MAX_RANGE),
            prune: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return fail(format!("resolution must be positive, got {}", self.resolution));
        }
        if !(self.l_min < LogOdds::ZERO && LogOdds::ZERO < self.l_max) {
            return fail(format!("need l_min < 0 < l_max, got [{}, {}]", self.l_min, self.l_max));
        }
        if !(self.l_min <= self.l_miss && self.l_miss < LogOdds::ZERO) {
            return fail(format!("need l_min <= l_miss < 0, got l_miss = {}", self.l_miss));
        }
        if !(LogOdds::ZERO < self.l_hit && self.l_hit <= self.l_max) {
            return fail(format!("need 0 < l_hit <= l_max, got l_hit = {}", self.l_hit));
        }
        if !(self.l_min <= self.occ_threshold && self.occ_threshold <= self.l_max) {
            return fail(format!("occupancy threshold {} outside clamp range", self.occ_threshold));
        }
        if let Some(r) = self.max_range {
            if !(r > 0.0) {
                return fail(format!("max range must be positive, got {r}"));
            }
        }
        Ok(())
    }

    pub fn tree_depth(&self) -> u8 {
        TREE_DEPTH
    }

    /// Log-odds increment applied by one observation.
    pub fn delta(&self, kind: UpdateKind) -> LogOdds {
        match kind {
            UpdateKind::Hit => self.l_hit,
            UpdateKind::Miss => self.l_miss,
        }
    }

    /// `clamp(value + delta)` with this config's bounds.
    pub fn saturating_add(&self, value: LogOdds, delta: LogOdds) -> LogOdds {
        value.saturating_add(delta, self.l_min, self.l_max)
    }

    /// True when applying `kind` to a leaf holding `value` cannot change it.
    pub fn is_saturated(&self, value: LogOdds, kind: UpdateKind) -> bool {
        match kind {
            UpdateKind::Hit => value >= self.l_max,
            UpdateKind::Miss => value <= self.l_min,
        }
    }
}
