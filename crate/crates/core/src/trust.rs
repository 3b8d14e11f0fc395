//! Pedestrian trust estimation.
//!
//! Each tracked pedestrian carries three trait scores (smartphone usage, eye
//! contact, pose fluctuation). They are combined into a total score for the
//! current step, and the total score is folded into a saturated recursive
//! trust value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of behavioural traits tracked per pedestrian.
pub const NUM_TRAITS: usize = 3;

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("invalid bounds: lo ({lo}) > hi ({hi})")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("{name} = {value} is outside [0, 1]")]
    Domain { name: &'static str, value: f64 },
    #[error("invalid trait weights: {0}")]
    InvalidWeights(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("observation step {step} for pedestrian {id} is not after last observed step {last}")]
    NonMonotoneStep { id: PedestrianId, step: u64, last: u64 },
}

/// Clamp `v` onto `[lo, hi]`.
pub fn saturate(v: f64, lo: f64, hi: f64) -> Result<f64, TrustError> {
    if lo > hi {
        return Err(TrustError::InvalidBounds { lo, hi });
    }
    Ok(v.max(lo).min(hi))
}

fn unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn check_unit(name: &'static str, value: f64) -> Result<f64, TrustError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(TrustError::Domain { name, value })
    }
}

fn check_open_unit(name: &str, value: f64) -> Result<(), TrustError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(TrustError::InvalidParameter(format!(
            "{name} = {value} must lie in (0, 1]"
        )))
    }
}

/// Non-negative weights of the trait scores, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TraitWeights(Vec<f64>);

impl TraitWeights {
    pub fn new(rho: Vec<f64>) -> Result<Self, TrustError> {
        if rho.len() != NUM_TRAITS {
            return Err(TrustError::InvalidWeights(format!(
                "expected {NUM_TRAITS} weights, got {}",
                rho.len()
            )));
        }
        if let Some(w) = rho.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(TrustError::InvalidWeights(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(TrustError::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(rho))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for TraitWeights {
    fn default() -> Self {
        Self(vec![0.4, 0.5, 0.1])
    }
}

impl TryFrom<Vec<f64>> for TraitWeights {
    type Error = TrustError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TraitWeights> for Vec<f64> {
    fn from(w: TraitWeights) -> Self {
        w.0
    }
}

/// Coefficients of the trust aggregation recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustDynamicsParams {
    /// Retained fraction of the previous trust.
    pub alpha: f64,
    /// Gain on the new total score.
    pub beta: f64,
    /// Proportion of the first total score used as initial trust.
    pub beta0: f64,
}

impl TrustDynamicsParams {
    pub fn new(alpha: f64, beta: f64, beta0: f64) -> Result<Self, TrustError> {
        let p = Self { alpha, beta, beta0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TrustError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TrustError::InvalidParameter(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        check_open_unit("beta0", self.beta0)
    }
}

impl Default for TrustDynamicsParams {
    /// Monotone regime: trust only grows, by at most `beta` per update.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.08,
            beta0: 0.55,
        }
    }
}

/// Smoothing and initialisation constants of the three trait recursions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitParams {
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu01: f64,
    pub nu02: f64,
    pub nu03: f64,
}

impl TraitParams {
    pub fn validate(&self) -> Result<(), TrustError> {
        check_open_unit("nu1", self.nu1)?;
        check_open_unit("nu2", self.nu2)?;
        check_open_unit("nu3", self.nu3)?;
        check_open_unit("nu01", self.nu01)?;
        check_open_unit("nu02", self.nu02)?;
        check_open_unit("nu03", self.nu03)
    }
}

impl Default for TraitParams {
    fn default() -> Self {
        Self {
            nu1: 0.6,
            nu2: 0.10,
            nu3: 0.8,
            nu01: 1.0,
            nu02: 1.0,
            nu03: 0.5,
        }
    }
}

/// Weighted sum of the trait scores.
pub fn total_score(traits: [f64; NUM_TRAITS], weights: &TraitWeights) -> Result<f64, TrustError> {
    for s in traits {
        check_unit("trait score", s)?;
    }
    let s: f64 = traits.iter().zip(weights.as_slice()).map(|(s, w)| s * w).sum();
    // Rounding can leave the sum a few ulps above one.
    Ok(unit(s))
}

pub fn init_trust(score: f64, params: &TrustDynamicsParams) -> Result<f64, TrustError> {
    check_unit("total score", score)?;
    Ok(params.beta0 * score)
}

/// One step of `tau' = sat(alpha * tau + beta * S)`.
pub fn update_trust(
    tau_prev: f64,
    score: f64,
    params: &TrustDynamicsParams,
) -> Result<f64, TrustError> {
    check_unit("trust", tau_prev)?;
    check_unit("total score", score)?;
    Ok(unit(params.alpha * tau_prev + params.beta * score))
}

/// Smartphone trait. Higher usage confidence lowers the score.
pub fn update_smartphone_trait(
    s_prev: f64,
    c_sm: f64,
    params: &TraitParams,
    first_observation: bool,
) -> Result<f64, TrustError> {
    check_unit("c_sm", c_sm)?;
    if first_observation {
        return Ok(unit(params.nu01 * (1.0 - c_sm)));
    }
    check_unit("s1", s_prev)?;
    Ok(unit(params.nu1 * s_prev + (1.0 - params.nu1) * (1.0 - c_sm)))
}

/// Eye-contact trait. Only accumulates, so established contact persists.
pub fn update_eye_trait(
    s_prev: f64,
    c_eye: f64,
    params: &TraitParams,
    first_observation: bool,
) -> Result<f64, TrustError> {
    check_unit("c_eye", c_eye)?;
    if first_observation {
        return Ok(unit(params.nu02 * c_eye));
    }
    check_unit("s2", s_prev)?;
    Ok(unit(s_prev + params.nu2 * c_eye))
}

/// Pose-fluctuation trait. The first observation has no previous pose, so
/// the score starts at `nu03` and `c_fluc` is ignored.
pub fn update_pose_trait(
    s_prev: f64,
    c_fluc: f64,
    params: &TraitParams,
    first_observation: bool,
) -> Result<f64, TrustError> {
    if first_observation {
        return Ok(params.nu03);
    }
    check_unit("c_fluc", c_fluc)?;
    check_unit("s3", s_prev)?;
    Ok(unit(params.nu3 * s_prev + (1.0 - params.nu3) * c_fluc))
}

/// Tracking identifier assigned by the upstream detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PedestrianId(pub u64);

impl std::fmt::Display for PedestrianId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Confidence triple produced by the perception stack for one pedestrian at
/// one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidences {
    /// Smartphone usage.
    pub c_sm: f64,
    /// Eye contact.
    pub c_eye: f64,
    /// Pose steadiness.
    pub c_fluc: f64,
}

impl Confidences {
    pub fn validate(&self) -> Result<(), TrustError> {
        check_unit("c_sm", self.c_sm)?;
        check_unit("c_eye", self.c_eye)?;
        check_unit("c_fluc", self.c_fluc)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub ped_id: PedestrianId,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub total_score: f64,
    pub trust: f64,
    pub last_observed_step: u64,
    pub initialized: bool,
}

/// All parameters of the estimator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrustConfig {
    pub weights: TraitWeights,
    pub dynamics: TrustDynamicsParams,
    pub traits: TraitParams,
}

impl TrustConfig {
    pub fn validate(&self) -> Result<(), TrustError> {
        TraitWeights::new(self.weights.0.clone())?;
        self.dynamics.validate()?;
        self.traits.validate()
    }
}

/// Registry of trust records keyed by tracking identifier.
///
/// Records are never evicted: a pedestrian that drops out of view keeps its
/// last trust value.
#[derive(Debug, Clone)]
pub struct TrustEstimator {
    config: TrustConfig,
    records: BTreeMap<PedestrianId, TrustRecord>,
}

impl TrustEstimator {
    pub fn new(config: TrustConfig) -> Result<Self, TrustError> {
        config.validate()?;
        Ok(Self {
            config,
            records: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &TrustConfig {
        &self.config
    }

    pub fn record(&self, id: PedestrianId) -> Option<&TrustRecord> {
        self.records.get(&id)
    }

    pub fn trust(&self, id: PedestrianId) -> Option<f64> {
        self.records.get(&id).map(|r| r.trust)
    }

    pub fn records(&self) -> impl Iterator<Item = &TrustRecord> {
        self.records.values()
    }

    /// Fold one step of confidences into the record for `id`, creating it on
    /// first sight.
    pub fn observe(
        &mut self,
        id: PedestrianId,
        conf: Confidences,
        step: u64,
    ) -> Result<TrustRecord, TrustError> {
        conf.validate()?;
        let cfg = &self.config;
        let record = match self.records.get(&id) {
            None => {
                let s1 = update_smartphone_trait(0.0, conf.c_sm, &cfg.traits, true)?;
                let s2 = update_eye_trait(0.0, conf.c_eye, &cfg.traits, true)?;
                let s3 = update_pose_trait(0.0, conf.c_fluc, &cfg.traits, true)?;
                let total = total_score([s1, s2, s3], &cfg.weights)?;
                TrustRecord {
                    ped_id: id,
                    s1,
                    s2,
                    s3,
                    total_score: total,
                    trust: init_trust(total, &cfg.dynamics)?,
                    last_observed_step: step,
                    initialized: true,
                }
            }
            Some(prev) => {
                if step <= prev.last_observed_step {
                    return Err(TrustError::NonMonotoneStep {
                        id,
                        step,
                        last: prev.last_observed_step,
                    });
                }
                let s1 = update_smartphone_trait(prev.s1, conf.c_sm, &cfg.traits, false)?;
                let s2 = update_eye_trait(prev.s2, conf.c_eye, &cfg.traits, false)?;
                let s3 = update_pose_trait(prev.s3, conf.c_fluc, &cfg.traits, false)?;
                let total = total_score([s1, s2, s3], &cfg.weights)?;
                TrustRecord {
                    ped_id: id,
                    s1,
                    s2,
                    s3,
                    total_score: total,
                    trust: update_trust(prev.trust, total, &cfg.dynamics)?,
                    last_observed_step: step,
                    initialized: true,
                }
            }
        };
        self.records.insert(id, record);
        Ok(record)
    }
}
