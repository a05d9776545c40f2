//! Per-epoch records and the decision rules applied to them: stop rule,
//! plateau detection and the learning-rate guidance hook.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bounds::{CloudRegion, YesBoundSet};
use crate::error::{Error, Result};
use crate::math::abs;

/// Something notable that happened during an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EpochEvent {
    EnteredRegion { region: CloudRegion },
    PlateauDetected { region: CloudRegion },
    ControlApplied { command: ControlAction },
    Stopped { reason: StopReason },
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Operator,
    StopRule,
    MaxEpochs,
    Diverged,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Full-data loss, normalized by the number of samples.
    #[serde(deserialize_with = "nan_from_null")]
    pub train_loss: f64,
    /// Present on bound-cadence epochs only.
    pub bounds: Option<YesBoundSet>,
    pub region: CloudRegion,
    /// True when `region` was carried forward from an earlier cadence epoch.
    pub region_stale: bool,
    pub lr: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub weight_change: f64,
    pub guidance_active: bool,
    /// Classification accuracy, for tasks that have labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    pub wall_time_ms: u64,
    pub events: Vec<EpochEvent>,
}

/// JSON has no NaN; a diverged epoch's loss is written as `null`.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> core::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl EpochRecord {
    pub fn stopped(&self) -> bool {
        self.events.iter().any(|e| matches!(e, EpochEvent::Stopped { .. }))
    }
}

/// Operator steering action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ControlAction {
    Pause,
    Resume,
    Stop,
    SetLearningRate(f64),
    ToggleGuidance(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    #[serde(flatten)]
    pub action: ControlAction,
    /// Milliseconds since the Unix epoch; filled in by the receiver when absent.
    #[serde(default)]
    pub issued_at_ms: Option<u64>,
}

impl ControlCommand {
    pub fn new(action: ControlAction) -> Self {
        Self { action, issued_at_ms: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let ControlAction::SetLearningRate(lr) = self.action {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::Config(format!("value: learning rate must be finite and > 0, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Stop when the latest region is at least `required_region` and the mean
/// weight change over the last `window` epochs is below `weight_change_threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    #[serde(default = "default_required_region")]
    pub required_region: CloudRegion,
    pub weight_change_threshold: f64,
    #[serde(default = "default_stop_window")]
    pub window: usize,
}

fn default_required_region() -> CloudRegion {
    CloudRegion::Green
}

fn default_stop_window() -> usize {
    10
}

fn region_rank(r: CloudRegion) -> u8 {
    match r {
        CloudRegion::Red => 0,
        CloudRegion::Yellow => 1,
        CloudRegion::Green => 2,
    }
}

pub fn stop_rule(window: &[EpochRecord], rule: &StopRule) -> bool {
    let Some(latest) = window.last() else {
        return false;
    };
    if region_rank(latest.region) < region_rank(rule.required_region) {
        return false;
    }
    let mean = window.iter().map(|r| r.weight_change).sum::<f64>() / window.len() as f64;
    mean < rule.weight_change_threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauRule {
    /// Largest epoch-to-epoch relative loss change that still counts as flat.
    pub rel_threshold: f64,
    pub window: usize,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self { rel_threshold: 1e-4, window: 20 }
    }
}

/// Fires when every relative loss change across the last `window_len`
/// records is below `rel_threshold`. The event carries the current region.
pub fn plateau_detector(records: &[EpochRecord], rel_threshold: f64, window_len: usize) -> Option<EpochEvent> {
    if window_len < 2 || records.len() < window_len {
        return None;
    }
    let window = &records[records.len() - window_len..];
    let max_change = window
        .windows(2)
        .map(|w| {
            let prev = w[0].train_loss;
            abs(w[1].train_loss - prev) / abs(prev).max(f64::MIN_POSITIVE)
        })
        .fold(0.0f64, |m, c| if c.is_nan() || c > m { c } else { m });
    (max_change < rel_threshold).then(|| EpochEvent::PlateauDetected { region: window[window.len() - 1].region })
}

/// `lr = base_lr * (1 + gain * min(d / scale, cap))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRule {
    pub gain: f64,
    pub scale: f64,
    pub cap: f64,
}

impl Default for GuidanceRule {
    fn default() -> Self {
        Self { gain: 1.0, scale: 1.0, cap: 1.0 }
    }
}

/// Effective learning rate from the guidance distance alone.
pub fn guidance_hook(distance: f64, base_lr: f64, rule: &GuidanceRule) -> f64 {
    let ratio = if rule.scale > 0.0 { distance / rule.scale } else { 0.0 };
    let boost = if ratio < rule.cap { ratio } else { rule.cap };
    let boost = if boost > 0.0 { boost } else { 0.0 };
    base_lr * (1.0 + rule.gain * boost)
}

/// Running minimum of the cloud over epochs: `(epoch, top, bottom)` for
/// each record that carries bounds. Display-only.
pub fn bound_envelope(records: &[EpochRecord]) -> Vec<(u64, f64, f64)> {
    let mut top = f64::INFINITY;
    let mut bottom = f64::INFINITY;
    records
        .iter()
        .filter_map(|r| {
            let b = r.bounds.as_ref()?;
            top = top.min(b.cloud_top);
            bottom = bottom.min(b.cloud_bottom);
            Some((r.epoch, top, bottom.min(top)))
        })
        .collect()
}

/// Human-readable one-word summary.
pub fn describe(region: CloudRegion) -> String {
    String::from(match region {
        CloudRegion::Red => "ineffective",
        CloudRegion::Yellow => "non-optimal",
        CloudRegion::Green => "effective",
    })
}
