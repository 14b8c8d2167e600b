use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::HitlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerMode {
    Either,
    PeriodOnly,
    VolumeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrainPolicy {
    /// Seconds between retrains.
    pub period_secs: i64,
    pub volume: usize,
    pub mode: TriggerMode,
}

impl Default for RetrainPolicy {
    fn default() -> Self {
        RetrainPolicy {
            period_secs: 7 * 24 * 3600,
            volume: 1000,
            mode: TriggerMode::Either,
        }
    }
}

impl RetrainPolicy {
    pub fn validate(&self) -> Result<(), HitlError> {
        if self.period_secs <= 0 {
            return Err(HitlError::InvalidPolicy("period must be positive".into()));
        }
        if self.volume == 0 {
            return Err(HitlError::InvalidPolicy("volume must be at least 1".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> Duration {
        Duration::seconds(self.period_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerReason {
    Period,
    Volume,
    Both,
    NoPriorModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub fire: bool,
    pub reason: Option<TriggerReason>,
}

/// Decides whether enough time or enough newly checked items have
/// accumulated since the last retrain. Without a prior retrain it always fires.
pub fn check_retrain_trigger(
    policy: &RetrainPolicy,
    now: DateTime<Utc>,
    last_retrain_at: Option<DateTime<Utc>>,
    checked_since: usize,
) -> TriggerDecision {
    let Some(last) = last_retrain_at else {
        return TriggerDecision { fire: true, reason: Some(TriggerReason::NoPriorModel) };
    };
    let period = now - last >= policy.period() && policy.mode != TriggerMode::VolumeOnly;
    let volume = checked_since >= policy.volume && policy.mode != TriggerMode::PeriodOnly;
    let reason = match (period, volume) {
        (true, true) => Some(TriggerReason::Both),
        (true, false) => Some(TriggerReason::Period),
        (false, true) => Some(TriggerReason::Volume),
        (false, false) => None,
    };
    TriggerDecision { fire: reason.is_some(), reason }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(days: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_600_000_000, 0).unwrap() + Duration::days(days)
    }

    #[test]
    fn period_fires() {
        let d = check_retrain_trigger(&RetrainPolicy::default(), at(8), Some(at(0)), 10);
        assert_eq!(d, TriggerDecision { fire: true, reason: Some(TriggerReason::Period) });
    }

    #[test]
    fn volume_fires() {
        let d = check_retrain_trigger(&RetrainPolicy::default(), at(1), Some(at(0)), 1000);
        assert_eq!(d.reason, Some(TriggerReason::Volume));
    }

    #[test]
    fn neither_fires() {
        assert!(!check_retrain_trigger(&RetrainPolicy::default(), at(1), Some(at(0)), 10).fire);
    }

    #[test]
    fn modes_mask_conditions() {
        let period_only = RetrainPolicy { mode: TriggerMode::PeriodOnly, ..Default::default() };
        assert!(!check_retrain_trigger(&period_only, at(1), Some(at(0)), 5000).fire);
        let volume_only = RetrainPolicy { mode: TriggerMode::VolumeOnly, ..Default::default() };
        assert!(!check_retrain_trigger(&volume_only, at(30), Some(at(0)), 5).fire);
    }

    #[test]
    fn first_retrain_always_fires() {
        let d = check_retrain_trigger(&RetrainPolicy::default(), at(0), None, 0);
        assert_eq!(d.reason, Some(TriggerReason::NoPriorModel));
    }
}
