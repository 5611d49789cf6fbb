//! Isolated-metaorder selection: metaorders accounting for most of the
//! signed market imbalance over their execution-plus-aftermath window are
//! flow-uncorrelated proxies ("uninformed").

use serde::Serialize;

use crate::segmenter::MetaOrder;
use crate::tape::{Tape, TapeIndex, TimeWindow};

#[derive(Debug, Clone, Copy)]
pub struct IsolationConfig {
    /// Minimum own share of the signed window imbalance.
    pub threshold: f64,
    /// Window length in units of the metaorder duration, from the start.
    pub horizon_mult: f64,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        IsolationConfig {
            threshold: 0.75,
            horizon_mult: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IsolationLabel {
    Isolated,
    Informed,
    /// Zero duration, or the window extends past the tape end.
    Excluded,
}

impl IsolationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            IsolationLabel::Isolated => "isolated",
            IsolationLabel::Informed => "informed",
            IsolationLabel::Excluded => "excluded",
        }
    }
}

/// Label each metaorder (aligned with the input slice). A metaorder is
/// isolated iff the window imbalance is co-directional and its own signed
/// volume accounts for at least `threshold` of it; anti-trending residual
/// flow (share above 1) still counts as isolated.
pub fn select_isolated(
    metaorders: &[MetaOrder],
    tape: &Tape,
    index: &TapeIndex,
    cfg: &IsolationConfig,
) -> Vec<IsolationLabel> {
    let last_ts = tape.time_range().map(|(_, b)| b).unwrap_or(i64::MIN);
    metaorders
        .iter()
        .map(|m| {
            let duration = m.t_end - m.t_start;
            if duration <= 0 {
                return IsolationLabel::Excluded;
            }
            let horizon = (cfg.horizon_mult * duration as f64).round() as i64;
            let window = TimeWindow::new(m.t_start, m.t_start + horizon);
            if window.end > last_ts {
                return IsolationLabel::Excluded;
            }
            let signed = index.signed_volume_in(tape, window);
            let co_directional = m.sign as i128 * signed;
            if co_directional > 0 && m.q_raw as f64 / co_directional as f64 >= cfg.threshold {
                IsolationLabel::Isolated
            } else {
                IsolationLabel::Informed
            }
        })
        .collect()
}
