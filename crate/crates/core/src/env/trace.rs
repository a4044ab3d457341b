//! JSON Lines episode traces: one record per step, then a summary record.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Condition, Termination};
use crate::descriptor::Accddoa;
use crate::error::{Error, Result};
use crate::geometry::ActionKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Index of the observation the action was chosen from.
    pub t: usize,
    pub action: ActionKind,
    /// World pose after the action: `[x, y, heading]`.
    pub pose: [f64; 3],
    pub reward: f64,
    /// Whether the goal was scheduled to sound during observation `t`.
    pub goal_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Accddoa>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Accddoa>,
}

/// Closing record; carries everything the metrics need besides the steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub termination: Termination,
    pub dtg: f64,
    pub path_length: f64,
    pub num_actions: usize,
    pub episode_id: String,
    pub agent: String,
    pub condition: Condition,
    pub run: usize,
    pub seed: u64,
    pub geodesic_start_goal: f64,
    pub oracle_actions: usize,
    pub duration_s: f64,
    pub onset_step: usize,
    pub active_steps: usize,
    pub goal_category: u32,
    pub num_categories: usize,
}

impl TraceSummary {
    pub fn success(&self) -> bool {
        self.termination == Termination::Success
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub summary: TraceSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Line {
    Summary(TraceSummary),
    Step(TraceStep),
}

impl EpisodeTrace {
    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut *out, s)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut *out, &self.summary)?;
        out.write_all(b"\n")
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

pub fn write_traces(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for t in traces {
        t.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_traces(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        match parsed {
            Line::Step(s) => steps.push(s),
            Line::Summary(summary) => out.push(EpisodeTrace {
                steps: std::mem::take(&mut steps),
                summary,
            }),
        }
    }
    if !steps.is_empty() {
        return Err(Error::Dataset {
            path: path.to_path_buf(),
            line: 0,
            reason: "trailing step records without a summary".into(),
        });
    }
    Ok(out)
}
