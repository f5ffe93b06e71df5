//! Text formats written by a run. Numbers use the shortest decimal form that
//! round-trips, so identical runs give identical bytes.

use std::fmt::Write as _;

use constep::analysis::EnsembleStats;
use constep::solvers::Trajectory;

pub fn num(v: f64) -> String {
    ryu::Buffer::new().format(v).to_string()
}

pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let mut out = String::with_capacity(32 * (stats.horizon + 2));
    out.push_str("t,mean_dist_sq,stderr\n");
    let mut buf = ryu::Buffer::new();
    for (t, (m, s)) in stats.mean_dist_sq.iter().zip(&stats.stderr).enumerate() {
        let _ = write!(out, "{t},");
        out.push_str(buf.format(*m));
        out.push(',');
        out.push_str(buf.format(*s));
        out.push('\n');
    }
    out
}

/// One row per stored iterate: `t, i_t, γ_t, dist_sq, x…`. The last iterate
/// has no sampled index or step.
pub fn audit_csv(traj: &Trajectory) -> String {
    let d = traj.points.first().map_or(0, |p| p.len());
    let mut out = String::from("t,index,gamma,dist_sq");
    for j in 0..d {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    let mut buf = ryu::Buffer::new();
    for (k, x) in traj.points.iter().enumerate() {
        let t = k * traj.point_stride;
        let _ = write!(out, "{t},");
        if let Some(i) = traj.sampled_indices.get(t) {
            let _ = write!(out, "{i}");
        }
        out.push(',');
        if let Some(g) = traj.step_values.get(t) {
            out.push_str(buf.format(*g));
        }
        out.push(',');
        out.push_str(buf.format(traj.dist_sq[t]));
        for v in x.iter() {
            out.push(',');
            out.push_str(buf.format(*v));
        }
        out.push('\n');
    }
    out
}

/// Ordered `key = value` record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: Vec<(String, String)>,
}

impl Record {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_num(&mut self, key: &str, value: f64) {
        self.set(key, num(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_num(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut rec = Record::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once(" = ")?;
            rec.set(k.trim(), v.trim());
        }
        Some(rec)
    }
}
