//! Table-I-style tracking metrics per named segment and overall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::SolveStatus;
use crate::trackgen::{NamedSegment, SegmentKind};

use super::telemetry::{Telemetry, TelemetryRecord, Termination};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub name: String,
    pub kind: Option<SegmentKind>,
    pub samples: usize,
    pub time: f64,
    pub max_abs_e_y: f64,
    pub mean_abs_e_y: f64,
    pub max_abs_e_psi_deg: f64,
    pub mean_abs_e_psi_deg: f64,
    /// Mean and max of `|vx - v_profile|`.
    pub mean_abs_speed_error: f64,
    pub max_abs_speed_error: f64,
    /// Ticks with `|e_y|` beyond the track half-width.
    pub bound_violations: usize,
    pub pedal_overlaps: usize,
    pub mpc_failures: usize,
    pub mpc_softened: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: SegmentMetrics,
    pub segments: Vec<SegmentMetrics>,
    pub lap_time: Option<f64>,
    pub termination: Termination,
}

#[derive(Default)]
struct Acc {
    m: SegmentMetrics,
    sum_ey: f64,
    sum_epsi: f64,
    sum_dv: f64,
}

impl Acc {
    fn add(&mut self, r: &TelemetryRecord, tick: f64) {
        let m = &mut self.m;
        let ey = r.e_y.abs();
        let epsi = r.e_psi_deg.abs();
        let dv = (r.vx - r.v_profile).abs();
        m.samples += 1;
        m.time += tick;
        m.max_abs_e_y = m.max_abs_e_y.max(ey);
        m.max_abs_e_psi_deg = m.max_abs_e_psi_deg.max(epsi);
        m.max_abs_speed_error = m.max_abs_speed_error.max(dv);
        self.sum_ey += ey;
        self.sum_epsi += epsi;
        self.sum_dv += dv;
        m.bound_violations += usize::from(ey > r.bound);
        m.pedal_overlaps += usize::from(r.throttle > 0.0 && r.brake > 0.0);
        m.mpc_failures += usize::from(r.mpc_solved && r.mpc_status == Some(SolveStatus::Failed));
        m.mpc_softened += usize::from(r.mpc_solved && r.mpc_status == Some(SolveStatus::Softened));
    }

    fn finish(mut self) -> SegmentMetrics {
        if self.m.samples > 0 {
            let n = self.m.samples as f64;
            self.m.mean_abs_e_y = self.sum_ey / n;
            self.m.mean_abs_e_psi_deg = self.sum_epsi / n;
            self.m.mean_abs_speed_error = self.sum_dv / n;
        }
        self.m
    }
}

/// Segments must tile `[0, length]` in order without gaps or overlaps.
pub fn check_partition(segments: &[NamedSegment], length: f64) -> Result<()> {
    let tol = 1e-6 * length.max(1.0);
    let mut at = 0.0;
    for seg in segments {
        if (seg.s_start - at).abs() > tol || seg.s_end <= seg.s_start {
            return Err(Error::Validation(format!(
                "segment '{}' [{}, {}] does not continue at s = {at}",
                seg.name, seg.s_start, seg.s_end
            )));
        }
        at = seg.s_end;
    }
    if (at - length).abs() > tol {
        return Err(Error::Validation(format!(
            "segments end at {at}, track length is {length}"
        )));
    }
    Ok(())
}

/// Index of the segment containing `s`; the last segment is closed.
pub fn segment_index(segments: &[NamedSegment], s: f64) -> Option<usize> {
    let i = segments.partition_point(|seg| seg.s_end <= s);
    if i < segments.len() {
        (s >= segments[i].s_start).then_some(i)
    } else {
        segments
            .last()
            .filter(|seg| s <= seg.s_end)
            .map(|_| segments.len() - 1)
    }
}

pub fn compute_metrics(t: &Telemetry, segments: &[NamedSegment]) -> MetricsReport {
    let mut overall = Acc::default();
    overall.m.name = "overall".into();
    let mut per: Vec<Acc> = segments
        .iter()
        .map(|seg| Acc {
            m: SegmentMetrics {
                name: seg.name.clone(),
                kind: Some(seg.kind),
                ..Default::default()
            },
            ..Default::default()
        })
        .collect();
    for r in &t.records {
        overall.add(r, t.tick);
        if let Some(i) = segment_index(segments, r.s) {
            per[i].add(r, t.tick);
        }
    }
    MetricsReport {
        overall: overall.finish(),
        segments: per.into_iter().map(Acc::finish).collect(),
        lap_time: match t.termination {
            Termination::Completed => t.records.last().map(|r| r.t),
            _ => None,
        },
        termination: t.termination,
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
