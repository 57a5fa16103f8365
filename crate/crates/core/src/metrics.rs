//! Area-weighted field accounting over dispersal event logs.
//!
//! Each surveyed cell is judged by the last decision made over it. The four
//! categories (released over suitable, withheld over unsuitable, withheld over
//! suitable, released over unsuitable) partition the surveyed area.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dispersal::{DispersalEvent, DispersalMode};
use crate::error::{ensure, Error, Result};

/// Row label and the suitable, unsuitable, missed and wasted columns.
pub type TableRow = (String, [Option<f64>; 4]);

/// Surveyed area in each decision category, square meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AreaBreakdown {
    pub suitable_released: f64,
    pub unsuitable_withheld: f64,
    pub suitable_withheld: f64,
    pub unsuitable_released: f64,
    /// Part of `suitable_withheld` where the bladder was already empty.
    pub suitable_withheld_empty: f64,
}

impl AreaBreakdown {
    pub fn total(&self) -> f64 {
        self.suitable_released + self.unsuitable_withheld + self.suitable_withheld + self.unsuitable_released
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: DispersalMode,
    pub suitable_pct: f64,
    /// Not applicable under constant pumping.
    pub unsuitable_pct: Option<f64>,
    /// Not applicable under constant pumping.
    pub missed_event_pct: Option<f64>,
    pub wasted_larvae_pct: f64,
    pub ground_truth_suitable_pct: f64,
    pub ground_truth_unsuitable_pct: f64,
    /// Suitable area withheld only because the bladder had run dry.
    pub missed_after_exhaustion_pct: f64,
    pub area_covered: f64,
    pub cells_surveyed: usize,
    pub events: usize,
    pub breakdown: AreaBreakdown,
}

/// Last event per cell, in cell order.
fn last_per_cell(events: &[DispersalEvent]) -> BTreeMap<[u32; 2], &DispersalEvent> {
    let mut cells = BTreeMap::new();
    for e in events {
        cells.insert(e.cell, e);
    }
    cells
}

fn check_integrity(events: &[DispersalEvent]) -> Result<()> {
    let mut areas: BTreeMap<[u32; 2], f64> = BTreeMap::new();
    for e in events {
        if !(e.cell_area > 0.0 && e.cell_area.is_finite()) {
            return Err(Error::DataIntegrity(format!("frame {} has cell area {}", e.frame_id, e.cell_area)));
        }
        if !e.position.is_finite() || !e.timestamp.is_finite() {
            return Err(Error::DataIntegrity(format!("frame {} has non-finite position or time", e.frame_id)));
        }
        if let Some(prev) = areas.insert(e.cell, e.cell_area) {
            if prev != e.cell_area {
                return Err(Error::DataIntegrity(format!("cell {:?} logged with two different areas", e.cell)));
            }
        }
    }
    Ok(())
}

pub fn area_breakdown(events: &[DispersalEvent]) -> Result<AreaBreakdown> {
    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    check_integrity(events)?;
    let mut b = AreaBreakdown::default();
    for e in last_per_cell(events).values() {
        let a = e.cell_area;
        match (e.ground_truth.is_suitable(), e.released()) {
            (true, true) => b.suitable_released += a,
            (false, false) => b.unsuitable_withheld += a,
            (true, false) => {
                b.suitable_withheld += a;
                if e.bladder_empty {
                    b.suitable_withheld_empty += a;
                }
            }
            (false, true) => b.unsuitable_released += a,
        }
    }
    Ok(b)
}

pub fn compute_report(events: &[DispersalEvent], mode: DispersalMode) -> Result<MetricsReport> {
    let b = area_breakdown(events)?;
    let total = b.total();
    let pct = |a: f64| 100.0 * a / total;
    let gated = mode == DispersalMode::ClassifierGated;
    Ok(MetricsReport {
        mode,
        suitable_pct: pct(b.suitable_released),
        unsuitable_pct: gated.then(|| pct(b.unsuitable_withheld)),
        missed_event_pct: gated.then(|| pct(b.suitable_withheld)),
        wasted_larvae_pct: pct(b.unsuitable_released),
        ground_truth_suitable_pct: pct(b.suitable_released + b.suitable_withheld),
        ground_truth_unsuitable_pct: pct(b.unsuitable_withheld + b.unsuitable_released),
        missed_after_exhaustion_pct: pct(b.suitable_withheld_empty),
        area_covered: total,
        cells_surveyed: last_per_cell(events).len(),
        events: events.len(),
        breakdown: b,
    })
}

/// Distinct surveyed area; revisited cells count once.
pub fn coverage_area(events: &[DispersalEvent]) -> f64 {
    last_per_cell(events).values().map(|e| e.cell_area).sum()
}

pub fn coverage_ratio(asv_area: f64, manual_area: f64) -> Result<f64> {
    ensure(manual_area > 0.0 && manual_area.is_finite(), || {
        format!("manual area must be positive, got {manual_area}")
    })?;
    ensure(asv_area >= 0.0 && asv_area.is_finite(), || format!("asv area must be >= 0, got {asv_area}"))?;
    Ok(asv_area / manual_area)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.2}"))
}

impl MetricsReport {
    /// Rows of (label, suitable, unsuitable, missed, wasted) for the tabular layout.
    pub fn table_rows(&self) -> Vec<TableRow> {
        let label = match self.mode {
            DispersalMode::ClassifierGated => "On-board model",
            DispersalMode::ConstantPump => "Constant pump",
        };
        vec![
            (
                "Ground truth".into(),
                [Some(self.ground_truth_suitable_pct), Some(self.ground_truth_unsuitable_pct), None, None],
            ),
            (
                label.into(),
                [Some(self.suitable_pct), self.unsuitable_pct, self.missed_event_pct, Some(self.wasted_larvae_pct)],
            ),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Formats one or more titled report blocks in the field-table layout.
pub fn format_table(blocks: &[(&str, Vec<TableRow>)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>10} {:>12} {:>8} {:>8}", "", "Suitable", "Unsuitable", "Missed", "Wasted");
    let _ = writeln!(out, "{:<16} {:>10} {:>12} {:>8} {:>8}", "", "Substr.(%)", "Substr.(%)", "Event(%)", "Larvae(%)");
    for (title, rows) in blocks {
        let _ = writeln!(out, "{title}");
        for (label, v) in rows {
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>12} {:>8} {:>8}",
                label,
                cell(v[0]),
                cell(v[1]),
                cell(v[2]),
                cell(v[3])
            );
        }
    }
    out
}

/// One trajectory dot for the console overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayDot {
    pub x: f64,
    pub y: f64,
    pub decision: crate::reefworld::SubstrateClass,
    pub truth: crate::reefworld::SubstrateClass,
    pub released: bool,
}

pub fn overlay(events: &[DispersalEvent]) -> Vec<OverlayDot> {
    events
        .iter()
        .map(|e| OverlayDot {
            x: e.position.x,
            y: e.position.y,
            decision: e.predicted,
            truth: e.ground_truth,
            released: e.released(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::reefworld::SubstrateClass::{self, *};

    fn ev(cell: [u32; 2], truth: SubstrateClass, pred: SubstrateClass, released: bool) -> DispersalEvent {
        DispersalEvent {
            frame_id: 0,
            timestamp: 0.0,
            position: Vec2::new(cell[0] as f64 + 0.5, cell[1] as f64 + 0.5),
            cell,
            cell_area: 1.0,
            ground_truth: truth,
            predicted: pred,
            released_ul: if released { 500 } else { 0 },
            released_larvae: if released { 5 } else { 0 },
            bladder_empty: false,
        }
    }

    #[test]
    fn perfect_classifier_has_no_misses_or_waste() {
        let events: Vec<_> = (0..50)
            .map(|i| {
                let t = if i % 3 == 0 { Suitable } else { Unsuitable };
                ev([i, 0], t, t, t.is_suitable())
            })
            .collect();
        let r = compute_report(&events, DispersalMode::ClassifierGated).unwrap();
        assert_eq!(r.missed_event_pct, Some(0.0));
        assert_eq!(r.wasted_larvae_pct, 0.0);
        assert_eq!(r.suitable_pct, r.ground_truth_suitable_pct);
    }

    #[test]
    fn constant_pump_marks_not_applicable() {
        let events = vec![ev([0, 0], Suitable, Suitable, true), ev([1, 0], Unsuitable, Unsuitable, true)];
        let r = compute_report(&events, DispersalMode::ConstantPump).unwrap();
        assert_eq!(r.unsuitable_pct, None);
        assert_eq!(r.missed_event_pct, None);
        assert_eq!(r.wasted_larvae_pct, 50.0);
        let table = format_table(&[("Test", r.table_rows())]);
        assert!(table.contains("Constant pump"));
        assert!(table.contains("N/A"));
        assert!(table.contains("50.00"));
    }

    #[test]
    fn last_decision_wins() {
        let events = vec![ev([0, 0], Suitable, Unsuitable, false), ev([0, 0], Suitable, Suitable, true)];
        let r = compute_report(&events, DispersalMode::ClassifierGated).unwrap();
        assert_eq!(r.suitable_pct, 100.0);
        assert_eq!(r.cells_surveyed, 1);
        assert_eq!(r.events, 2);
    }

    #[test]
    fn empty_log_and_bad_area() {
        assert_eq!(compute_report(&[], DispersalMode::ClassifierGated), Err(Error::EmptyLog));
        let mut e = ev([0, 0], Suitable, Suitable, true);
        e.cell_area = 0.0;
        assert!(matches!(compute_report(&[e], DispersalMode::ClassifierGated), Err(Error::DataIntegrity(_))));
    }

    #[test]
    fn coverage_area_examples() {
        let a = ev([3, 4], Suitable, Suitable, true);
        assert_eq!(coverage_area(&[a]), 1.0);
        assert_eq!(coverage_area(&[a, a]), 1.0);
        // 100 m transect sampled every 0.375 m over 1 m cells
        let line: Vec<_> = (0..267)
            .map(|i| {
                let x = i as f64 * 0.375;
                ev([x.floor() as u32, 0], Suitable, Suitable, true)
            })
            .collect();
        assert_eq!(coverage_area(&line), 100.0);
    }

    #[test]
    fn coverage_ratio_examples() {
        assert!((coverage_ratio(1090.0, 50.0).unwrap() - 21.8).abs() < 1e-12);
        assert_eq!(coverage_ratio(50.0, 50.0).unwrap(), 1.0);
        assert!((coverage_ratio(890.0, 50.0).unwrap() - 17.8).abs() < 1e-12);
        assert!(coverage_ratio(10.0, 0.0).is_err());
    }

    #[test]
    fn exhaustion_flagged() {
        let mut e = ev([0, 0], Suitable, Suitable, false);
        e.bladder_empty = true;
        let r = compute_report(&[e, ev([1, 0], Suitable, Suitable, true)], DispersalMode::ClassifierGated).unwrap();
        assert_eq!(r.missed_event_pct, Some(50.0));
        assert_eq!(r.missed_after_exhaustion_pct, 50.0);
    }
}
