// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use crate::desim::{SimTime, WaveTrace, CLOCK_STEP};

use super::{ObservationMatrix, SpikeIoError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterEvent {
    pub time_ns: f64,
    pub channel: u32,
}

/// Spike raster over `[0, duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterWindow {
    pub duration: SimTime,
    pub labels: Vec<String>,
    pub events: Vec<RasterEvent>,
}

impl RasterWindow {
    /// Events at bin starts for bins inside `duration`.
    pub fn from_matrix(m: &ObservationMatrix, labels: Vec<String>, duration: SimTime) -> Self {
        let bins = ((duration.as_ps() / CLOCK_STEP.as_ps()) as usize).min(m.bins);
        let events = m
            .events()
            .into_iter()
            .filter(|e| (e.time_step as usize) < bins)
            .map(|e| RasterEvent {
                time_ns: (CLOCK_STEP * u64::from(e.time_step)).as_ns_f64(),
                channel: u32::from(e.channel),
            })
            .collect();
        RasterWindow {
            duration,
            labels,
            events,
        }
    }

    /// Exact rising-edge times of every probe, ordered by time then probe.
    pub fn from_trace(trace: &WaveTrace, duration: SimTime) -> Self {
        let mut events: Vec<(SimTime, u32)> = trace
            .probes
            .iter()
            .enumerate()
            .flat_map(|(c, p)| p.rising_edges().into_iter().map(move |t| (t, c as u32)))
            .filter(|(t, _)| *t < duration)
            .collect();
        events.sort();
        RasterWindow {
            duration,
            labels: trace.probes.iter().map(|p| p.label.clone()).collect(),
            events: events
                .into_iter()
                .map(|(t, channel)| RasterEvent {
                    time_ns: t.as_ns_f64(),
                    channel,
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_ns,channel\n");
        for e in &self.events {
            let _ = writeln!(s, "{},{}", e.time_ns, e.channel);
        }
        s
    }

    /// Dot raster, one row per label.
    pub fn to_svg(&self) -> String {
        let rows = self.labels.len().max(1);
        let (w, row_h, margin) = (800.0, 4.0, 40.0);
        let h = rows as f64 * row_h + 2.0 * margin;
        let span = self.duration.as_ns_f64().max(1.0);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" viewBox="0 0 {} {h}">"#,
            w + 2.0 * margin,
            w + 2.0 * margin
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{margin}" y="{}" font-size="12" font-family="sans-serif">time (ns), 0 to {span}</text>"#,
            h - 12.0
        );
        for e in &self.events {
            let x = margin + w * e.time_ns / span;
            let y = margin + f64::from(e.channel) * row_h;
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="1.5" height="{}" fill="black"/>"#, row_h - 1.0);
        }
        s.push_str("</svg>\n");
        s
    }
}

pub fn parse_raster_csv(text: &str) -> Result<Vec<RasterEvent>, SpikeIoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "time_ns,channel")) => {}
        _ => return Err(SpikeIoError::Raster(1)),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let (t, c) = l.split_once(',').ok_or(SpikeIoError::Raster(i + 1))?;
            Ok(RasterEvent {
                time_ns: t.parse().map_err(|_| SpikeIoError::Raster(i + 1))?,
                channel: c.parse().map_err(|_| SpikeIoError::Raster(i + 1))?,
            })
        })
        .collect()
}
