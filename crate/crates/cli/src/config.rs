//! Optional TOML run configuration. Sections use the library's field names
//! and units (angles in radians); command-line flags override them.

use std::path::Path;

use serde::Deserialize;

use compass_core::attitude::AttitudeConfig;
use compass_core::detection::DetectorConfig;
use compass_core::error::{CompassError, Result};
use compass_core::matching::{Aggregation, MatchConfig};
use compass_core::raycast::RaycastConfig;
use compass_core::synth::{EvalConfig, ObservationNoise, SynthPlanSpec};

use crate::args::{MatchOptions, PlanSpecArgs, RaycastArgs};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub raycast: RaycastConfig,
    pub matching: MatchConfig,
    pub detector: DetectorConfig,
    pub attitude: AttitudeConfig,
    pub noise: ObservationNoise,
    pub plan: SynthPlanSpec,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CompassError::Io { path: path.into(), source: e })?;
        toml::from_str(&text).map_err(|e| CompassError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn raycast(&self, a: &RaycastArgs) -> Result<RaycastConfig> {
        let mut c = self.raycast;
        if let Some(v) = a.n_bins {
            c.n_bins = v;
        }
        if let Some(v) = a.r_max {
            c.r_max = v;
        }
        if let Some(v) = a.step {
            c.step = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn matching(&self, a: &MatchOptions) -> Result<MatchConfig> {
        let mut c = self.matching.clone();
        if a.hit_type_only {
            c.channel_mask = compass_core::descriptor::HIT_TYPE_ONLY;
        }
        if let Some(w) = &a.weights {
            c.channel_weights = w
                .as_slice()
                .try_into()
                .map_err(|_| CompassError::InvalidConfig(format!("--weights needs 5 values, got {}", w.len())))?;
        }
        if a.prefilter.is_some() {
            c.prefilter_tolerance = a.prefilter;
        }
        if let Some(k) = a.top_k {
            c.top_k = k;
        }
        if a.flattened {
            c.aggregation = Aggregation::Flattened;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn attitude(&self, seed: Option<u64>, tolerance_deg: Option<f64>, iterations: Option<usize>) -> Result<AttitudeConfig> {
        let mut c = self.attitude;
        if let Some(s) = seed {
            c.ransac.seed = s;
        }
        if let Some(t) = tolerance_deg {
            c.ransac.angular_tolerance = t.to_radians();
        }
        if let Some(n) = iterations {
            c.ransac.iterations = n;
        }
        if !(c.ransac.angular_tolerance > 0.0) || c.ransac.iterations == 0 {
            return Err(CompassError::InvalidConfig("RANSAC needs a positive tolerance and iteration count".into()));
        }
        Ok(c)
    }

    pub fn plan_spec(&self, a: &PlanSpecArgs) -> Result<SynthPlanSpec> {
        let mut s = self.plan;
        if let Some(v) = a.width {
            s.width = v;
        }
        if let Some(v) = a.height {
            s.height = v;
        }
        if let Some(v) = a.resolution {
            s.resolution = v;
        }
        if let Some(v) = a.depth {
            s.max_depth = v;
        }
        if let Some(v) = a.window_fraction {
            s.window_fraction = v;
        }
        s.validate()?;
        Ok(s)
    }
}
