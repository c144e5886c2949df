// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;

use super::{NetId, SimTime};

/// Transitions recorded on one probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTrace {
    pub label: String,
    pub net: NetId,
    /// Settled value at t = 0.
    pub initial: bool,
    pub transitions: Vec<(SimTime, bool)>,
}

impl ProbeTrace {
    pub fn rising_edges(&self) -> Vec<SimTime> {
        self.transitions
            .iter()
            .filter(|(_, v)| *v)
            .map(|(t, _)| *t)
            .collect()
    }

    /// Closed high intervals `(rise, fall)`; a pulse still high at the end of
    /// the trace is omitted.
    pub fn pulses(&self) -> Vec<(SimTime, SimTime)> {
        let mut out = Vec::new();
        let mut rise = None;
        for &(t, v) in &self.transitions {
            match (v, rise) {
                (true, _) => rise = Some(t),
                (false, Some(r)) => {
                    out.push((r, t));
                    rise = None;
                }
                (false, None) => {}
            }
        }
        out
    }
}

/// Probe transitions up to `end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveTrace {
    pub end: SimTime,
    pub probes: Vec<ProbeTrace>,
}

impl WaveTrace {
    pub fn probe(&self, label: &str) -> Option<&ProbeTrace> {
        self.probes.iter().find(|p| p.label == label)
    }

    /// `time_ps,net,value` rows, ordered by time then probe order.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(SimTime, usize, bool)> = self
            .probes
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.transitions.iter().map(move |&(t, v)| (t, i, v)))
            .collect();
        rows.sort_by_key(|r| (r.0, r.1));
        let mut s = String::from("time_ps,net,value\n");
        for (t, i, v) in rows {
            let _ = writeln!(s, "{},{},{}", t.as_ps(), self.probes[i].label, u8::from(v));
        }
        s
    }

    /// Value change dump with a 1 ps timescale.
    pub fn to_vcd(&self) -> String {
        let mut s = String::new();
        s.push_str("$timescale 1ps $end\n$scope module bsnn $end\n");
        let ids: Vec<String> = (0..self.probes.len()).map(vcd_id).collect();
        for (p, id) in self.probes.iter().zip(&ids) {
            let label: String = p
                .label
                .chars()
                .map(|c| if c.is_whitespace() { '_' } else { c })
                .collect();
            let _ = writeln!(s, "$var wire 1 {id} {label} $end");
        }
        s.push_str("$upscope $end\n$enddefinitions $end\n#0\n$dumpvars\n");
        for (p, id) in self.probes.iter().zip(&ids) {
            let _ = writeln!(s, "{}{id}", u8::from(p.initial));
        }
        s.push_str("$end\n");
        let mut rows: Vec<(SimTime, usize, bool)> = self
            .probes
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.transitions.iter().map(move |&(t, v)| (t, i, v)))
            .collect();
        rows.sort_by_key(|r| (r.0, r.1));
        let mut last = None;
        for (t, i, v) in rows {
            if last != Some(t) {
                let _ = writeln!(s, "#{}", t.as_ps());
                last = Some(t);
            }
            let _ = writeln!(s, "{}{}", u8::from(v), ids[i]);
        }
        let _ = writeln!(s, "#{}", self.end.as_ps());
        s
    }
}

/// Printable VCD identifier for index `i` (base-94 over `!`..`~`).
fn vcd_id(mut i: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'!' + (i % 94) as u8) as char);
        i /= 94;
        if i == 0 {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WaveTrace {
        WaveTrace {
            end: SimTime(5_000),
            probes: vec![
                ProbeTrace {
                    label: "a".into(),
                    net: NetId(0),
                    initial: false,
                    transitions: vec![(SimTime(100), true), (SimTime(2_340), false)],
                },
                ProbeTrace {
                    label: "b".into(),
                    net: NetId(1),
                    initial: true,
                    transitions: vec![(SimTime(100), false)],
                },
            ],
        }
    }

    #[test]
    fn csv_rows_are_time_ordered() {
        assert_eq!(
            sample().to_csv(),
            "time_ps,net,value\n100,a,1\n100,b,0\n2340,a,0\n"
        );
    }

    #[test]
    fn vcd_has_header_and_changes() {
        let v = sample().to_vcd();
        assert!(v.starts_with("$timescale 1ps $end"));
        assert!(v.contains("$var wire 1 ! a $end"));
        assert!(v.contains("#100\n1!\n0\"\n"));
        assert!(v.trim_end().ends_with("#5000"));
    }

    #[test]
    fn pulses_pair_rise_and_fall() {
        let s = sample();
        assert_eq!(
            s.probes[0].pulses(),
            vec![(SimTime(100), SimTime(2_340))]
        );
        assert!(s.probes[1].pulses().is_empty());
    }

    #[test]
    fn vcd_ids_are_unique() {
        let ids: std::collections::HashSet<_> = (0..10_000).map(vcd_id).collect();
        assert_eq!(ids.len(), 10_000);
    }
}
