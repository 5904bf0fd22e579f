use std::fmt::Write;

use super::{Episode, EpisodeError};
use crate::guidance::{FeasibilityState, FrameRecord};

pub const CSV_HEADER: &str = "frame,state,e,r,c,w";
const CELL_WIDTH: usize = 4;
const CELL_HEIGHT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimelineFormat {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub frame: u64,
    pub state: FeasibilityState,
    pub e: f64,
    pub r: f64,
    pub c: bool,
    pub w: f64,
}

pub fn timeline_csv(records: &[FrameRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        // {:?} keeps the shortest round-trip representation
        let _ = writeln!(out, "{},{},{:?},{:?},{},{:?}", r.frame_index, r.s_t, r.e_t, r.r_t, r.c_t as u8, r.w_t);
    }
    out
}

pub fn parse_timeline_csv(csv: &str) -> Result<Vec<TimelineRow>, EpisodeError> {
    let mut lines = csv.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(EpisodeError::CorruptFile("timeline CSV header".into()));
    }
    let bad = |n: usize| EpisodeError::CorruptFile(format!("timeline CSV row {n}"));
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(bad(n + 1));
        }
        rows.push(TimelineRow {
            frame: f[0].parse().map_err(|_| bad(n + 1))?,
            state: FeasibilityState::parse(f[1]).ok_or_else(|| bad(n + 1))?,
            e: f[2].parse().map_err(|_| bad(n + 1))?,
            r: f[3].parse().map_err(|_| bad(n + 1))?,
            c: match f[4] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(n + 1)),
            },
            w: f[5].parse().map_err(|_| bad(n + 1))?,
        });
    }
    Ok(rows)
}

fn color(s: FeasibilityState) -> &'static str {
    match s {
        FeasibilityState::Feasible => "#2e9d4a",
        FeasibilityState::Warning => "#f2c12e",
        FeasibilityState::Infeasible => "#d8342c",
    }
}

/// Horizontal bar, one cell per frame.
pub fn timeline_svg(records: &[FrameRecord]) -> String {
    let width = (records.len() * CELL_WIDTH).max(1);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{CELL_HEIGHT}\" viewBox=\"0 0 {width} {CELL_HEIGHT}\" shape-rendering=\"crispEdges\">\n"
    );
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <rect x=\"{}\" y=\"0\" width=\"{CELL_WIDTH}\" height=\"{CELL_HEIGHT}\" fill=\"{}\" data-frame=\"{}\" data-state=\"{}\"/>",
            i * CELL_WIDTH,
            color(r.s_t),
            r.frame_index,
            r.s_t
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn export_timeline(episode: &Episode, format: TimelineFormat) -> Result<String, EpisodeError> {
    let records = episode.feasibility_records()?;
    Ok(match format {
        TimelineFormat::Csv => timeline_csv(&records),
        TimelineFormat::Svg => timeline_svg(&records),
    })
}
