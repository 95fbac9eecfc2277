//! Sizes and seeds of the verification suites.

use noisefree_bo::analysis::{
    concentration_suite, distance_sum_suite, gaussian_tail_suite, sd_monotonicity_suite, thompson_band_suite,
    ConcentrationConfig, DistanceSumConfig, SuiteReport, ThompsonBandConfig,
};
use noisefree_bo::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonotonicityConfig {
    pub n_sequences: usize,
    pub len: usize,
    pub n_probes: usize,
    pub seed: u64,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        Self {
            n_sequences: 12,
            len: 100,
            n_probes: 1000,
            seed: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub concentration: ConcentrationConfig,
    pub monotonicity: MonotonicityConfig,
    pub distance_sum: DistanceSumConfig,
    pub thompson_band: ThompsonBandConfig,
    pub gaussian_tail: TailConfig,
}

/// Every suite, in a fixed order.
pub fn run(cfg: &VerifyConfig) -> Result<Vec<SuiteReport>> {
    let m = &cfg.monotonicity;
    Ok(vec![
        concentration_suite(&cfg.concentration)?,
        sd_monotonicity_suite(m.n_sequences, m.len, m.n_probes, m.seed)?,
        distance_sum_suite(&cfg.distance_sum)?,
        thompson_band_suite(&cfg.thompson_band)?,
        gaussian_tail_suite(cfg.gaussian_tail.samples, cfg.gaussian_tail.seed),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: VerifyConfig = serde_json::from_str(r#"{"gaussian_tail": {"samples": 100000}}"#).unwrap();
        assert_eq!(cfg.gaussian_tail.samples, 100_000);
        assert_eq!(cfg.gaussian_tail.seed, 7);
        assert_eq!(cfg.distance_sum, DistanceSumConfig::default());
        assert!(serde_json::from_str::<VerifyConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
