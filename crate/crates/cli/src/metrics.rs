//! Metrics CSV rows and a minimal reader for them.

use std::io::{self, Write};

use ucfalloc_core::optim::TrainTrace;

use crate::config::SolverKind;

pub const METRICS_HEADER: &str =
    "experiment,solver,seed,iteration,best_objective,total_se_bps_hz,gini,lambda_min,c_violations,actor_loss,critic_loss,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment: String,
    pub solver: SolverKind,
    pub seed: u64,
    pub iteration: usize,
    pub best_objective: f64,
    pub total_se_bps_hz: f64,
    pub gini: f64,
    pub lambda_min: f64,
    pub c_violations: usize,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub wall_ms: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:?},{:?},{:?},{:?},{},{},{},{}",
            self.experiment,
            self.solver,
            self.seed,
            self.iteration,
            self.best_objective,
            self.total_se_bps_hz,
            self.gini,
            self.lambda_min,
            self.c_violations,
            opt(self.actor_loss),
            opt(self.critic_loss),
            opt(self.wall_ms),
        )
    }
}

/// One row per trace record. Losses stay empty for AO; wall time only when
/// `timing` is set.
pub fn rows_from_trace(experiment: &str, solver: SolverKind, seed: u64, trace: &TrainTrace, timing: bool) -> Vec<MetricsRow> {
    trace
        .records
        .iter()
        .map(|r| MetricsRow {
            experiment: experiment.to_owned(),
            solver,
            seed,
            iteration: r.iteration,
            best_objective: r.best_objective,
            total_se_bps_hz: r.total_se,
            gini: r.gini,
            lambda_min: r.lambda_min,
            c_violations: r.violations,
            actor_loss: if solver == SolverKind::Ao { None } else { r.actor_loss },
            critic_loss: if solver == SolverKind::Ao { None } else { r.critic_loss },
            wall_ms: timing.then_some(r.wall_ms),
        })
        .collect()
}

/// `# comment` lines, the header, then the rows.
pub fn write_metrics<W: Write>(mut w: W, comments: &[String], rows: &[MetricsRow]) -> io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// A parsed CSV: header plus rows of raw cells, comment lines skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header: Vec<String> = lines.next().ok_or("no header row")?.split(',').map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let cells: Vec<String> = l.split(',').map(str::to_owned).collect();
            if cells.len() != header.len() {
                return Err(format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len()));
            }
            rows.push(cells);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric value of `col` in `row`; empty cells are `None`.
    pub fn number(&self, row: usize, col: usize) -> Result<Option<f64>, String> {
        let cell = self.rows[row][col].trim();
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse().map(Some).map_err(|_| format!("`{cell}` is not a number"))
    }
}
