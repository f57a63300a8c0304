//! CSV and JSON persistence.
//!
//! Cost files hold one real per line in shortest round-trip form, so reading
//! a file back reproduces the recorded totals bit for bit. Trajectory files
//! have a header row and one row per time step; the final row carries the
//! terminal state, empty control cells and the terminal cost.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::HarnessError;
use crate::mpc::EpisodeRecord;
use crate::risk::{self, RiskLevel, RiskSummary};

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn format_costs(costs: &[f64]) -> String {
    let mut out = String::with_capacity(costs.len() * 20);
    for c in costs {
        writeln!(out, "{c}").expect("writing to a String");
    }
    out
}

pub fn parse_costs(text: &str) -> Result<Vec<f64>, String> {
    let mut costs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| format!("line {}: not a number: {line:?}", i + 1))?;
        costs.push(v);
    }
    if costs.is_empty() {
        return Err("no costs found".into());
    }
    Ok(costs)
}

pub fn read_costs(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_costs(&text).map_err(|m| HarnessError::Input(format!("{}: {m}", path.display())))
}

/// Mean, VaR and CVaR of a cost file.
pub fn stats(path: &Path, gamma: f64) -> Result<RiskSummary, HarnessError> {
    let level = RiskLevel::new(gamma).map_err(|e| HarnessError::Input(e.to_string()))?;
    let costs = read_costs(path)?;
    risk::risk_summary(&costs, level).map_err(|e| HarnessError::Input(format!("{}: {e}", path.display())))
}

pub fn trajectory_header(nx: usize, nu: usize, params: &[String]) -> Vec<String> {
    let belief: Vec<String> = (0..nx).map(|i| format!("x{i}")).chain(params.iter().cloned()).collect();
    let mut h = vec!["step".to_string()];
    h.extend((0..nx).map(|i| format!("x{i}")));
    h.extend((0..nu).map(|j| format!("u{j}")));
    h.extend(belief.iter().map(|b| format!("mean_{b}")));
    h.extend(belief.iter().map(|b| format!("sigma3_{b}")));
    h.push("stage_cost".into());
    h
}

pub fn format_trajectory(record: &EpisodeRecord, nu: usize, params: &[String]) -> String {
    let nx = record.states.first().map_or(0, Vec::len);
    let mut out = trajectory_header(nx, nu, params).join(",");
    out.push('\n');
    for (t, x) in record.states.iter().enumerate() {
        let mut cells: Vec<String> = vec![t.to_string()];
        cells.extend(x.iter().map(f64::to_string));
        match record.controls.get(t) {
            Some(u) => cells.extend(u.iter().map(f64::to_string)),
            None => cells.extend(std::iter::repeat_n(String::new(), nu)),
        }
        if let (Some(m), Some(s)) = (record.belief_mean.get(t), record.belief_sigma3.get(t)) {
            cells.extend(m.iter().map(f64::to_string));
            cells.extend(s.iter().map(f64::to_string));
        }
        let cost = record.stage_costs.get(t).copied().unwrap_or(record.terminal_cost);
        cells.push(cost.to_string());
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// A parsed trajectory file. Empty cells read as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header: Vec<String> = lines.next().ok_or("empty trajectory file")?.split(',').map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("step") {
            return Err("trajectory header must start with `step`".into());
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| format!("row {}: {e}", i + 1))?;
            if row.len() != header.len() {
                return Err(format!("row {} has {} cells, header has {}", i + 1, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(TrajectoryTable { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|m| HarnessError::Input(format!("{}: {m}", path.display())))
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}
