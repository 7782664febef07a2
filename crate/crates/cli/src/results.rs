//! Tidy result rows and their CSV form.

use std::io::Write;
use std::path::Path;

use omniforest::metrics::{log_ratio, Condition, TaskTransfer};

use crate::CliError;

pub const COLUMNS: [&str; 16] = [
    "experiment",
    "learner",
    "param",
    "repetition",
    "task_id",
    "n_seen",
    "condition",
    "error",
    "te",
    "fte",
    "bte",
    "log_te",
    "log_fte",
    "log_bte",
    "wall_time_ms",
    "model_bytes",
];

/// What a row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Measure {
    Error(Condition),
    /// Transfer efficiencies computed from mean errors.
    Transfer,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Error(c) => c.as_str(),
            Measure::Transfer => "transfer",
        }
    }
}

/// A ratio cell: absent on per-repetition rows, possibly undefined on
/// aggregate rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Empty,
    Undefined,
    Value(f64),
}

impl Cell {
    fn from_ratio(r: Option<f64>) -> Self {
        r.map_or(Cell::Undefined, Cell::Value)
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(v),
            _ => None,
        }
    }

    fn render(self) -> String {
        match self {
            Cell::Empty => String::new(),
            Cell::Undefined => "undefined".into(),
            Cell::Value(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub learner: String,
    pub param: String,
    /// `None` on rows aggregated over repetitions.
    pub repetition: Option<usize>,
    pub task_id: usize,
    pub n_seen: usize,
    pub measure: Measure,
    pub error: Option<f64>,
    pub te: Cell,
    pub fte: Cell,
    pub bte: Cell,
    pub log_te: Cell,
    pub log_fte: Cell,
    pub log_bte: Cell,
    pub wall_time_ms: Option<f64>,
    pub model_bytes: Option<usize>,
}

impl ResultRow {
    #[allow(clippy::too_many_arguments)]
    pub fn error(
        experiment: &str,
        learner: &str,
        param: &str,
        repetition: Option<usize>,
        task_id: usize,
        n_seen: usize,
        condition: Condition,
        error: f64,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            learner: learner.into(),
            param: param.into(),
            repetition,
            task_id,
            n_seen,
            measure: Measure::Error(condition),
            error: Some(error),
            te: Cell::Empty,
            fte: Cell::Empty,
            bte: Cell::Empty,
            log_te: Cell::Empty,
            log_fte: Cell::Empty,
            log_bte: Cell::Empty,
            wall_time_ms: None,
            model_bytes: None,
        }
    }

    pub fn transfer(
        experiment: &str,
        learner: &str,
        param: &str,
        n_seen: usize,
        t: &TaskTransfer,
    ) -> Self {
        let log = |r: Option<f64>| match r {
            None => Cell::Undefined,
            some => Cell::from_ratio(log_ratio(some)),
        };
        Self {
            experiment: experiment.into(),
            learner: learner.into(),
            param: param.into(),
            repetition: None,
            task_id: t.task_id,
            n_seen,
            measure: Measure::Transfer,
            error: None,
            te: Cell::from_ratio(t.te),
            fte: Cell::from_ratio(t.fte),
            bte: Cell::from_ratio(t.bte),
            log_te: log(t.te),
            log_fte: log(t.fte),
            log_bte: log(t.bte),
            wall_time_ms: None,
            model_bytes: None,
        }
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.experiment.clone(),
            self.learner.clone(),
            self.param.clone(),
            self.repetition
                .map_or_else(|| "mean".into(), |r| r.to_string()),
            self.task_id.to_string(),
            self.n_seen.to_string(),
            self.measure.as_str().into(),
            opt(self.error),
            self.te.render(),
            self.fte.render(),
            self.bte.render(),
            self.log_te.render(),
            self.log_fte.render(),
            self.log_bte.render(),
            opt(self.wall_time_ms),
            self.model_bytes.map(|b| b.to_string()).unwrap_or_default(),
        ]
    }
}

/// Writes the header and rows; LF line endings.
pub fn write_rows<W: Write>(writer: W, rows: &[ResultRow]) -> Result<(), CliError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io = |e: csv::Error| CliError::Runtime(omniforest::Error::Io(e.into()));
    wtr.write_record(COLUMNS).map_err(io)?;
    for row in rows {
        wtr.write_record(row.record()).map_err(io)?;
    }
    wtr.flush().map_err(|e| CliError::Runtime(e.into()))?;
    Ok(())
}

pub fn write_rows_to(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.into()))?;
    }
    let file = std::fs::File::create(path).map_err(|e| CliError::Runtime(e.into()))?;
    write_rows(std::io::BufWriter::new(file), rows)
}

/// Plain-text table of the transfer rows at each stream's last checkpoint.
pub fn summary(rows: &[ResultRow]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<18} {:<10} {:<16} {:>5} {:>7} {:>9} {:>9} {:>9}",
        "experiment", "learner", "param", "task", "n_seen", "te", "fte", "bte"
    );
    let last_n = |r: &ResultRow| {
        rows.iter()
            .filter(|o| {
                o.learner == r.learner && o.param == r.param && o.measure == Measure::Transfer
            })
            .map(|o| o.n_seen)
            .max()
    };
    let fmt = |c: Cell| match c {
        Cell::Value(v) => format!("{v:.4}"),
        Cell::Undefined => "undef".into(),
        Cell::Empty => "-".into(),
    };
    for r in rows.iter().filter(|r| r.measure == Measure::Transfer) {
        if Some(r.n_seen) != last_n(r) {
            continue;
        }
        let _ = writeln!(
            out,
            "{:<18} {:<10} {:<16} {:>5} {:>7} {:>9} {:>9} {:>9}",
            r.experiment,
            r.learner,
            r.param,
            r.task_id,
            r.n_seen,
            fmt(r.te),
            fmt(r.fte),
            fmt(r.bte)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_cells() {
        let t = TaskTransfer::from_means(3, 0.2, 0.15, 0.0);
        let rows = vec![
            ResultRow::error("x", "odif", "", Some(0), 3, 10, Condition::SingleTask, 0.25),
            ResultRow::transfer("x", "odif", "", 10, &t),
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], COLUMNS.join(","));
        assert_eq!(lines[1], "x,odif,,0,3,10,single_task,0.25,,,,,,,,");
        assert_eq!(
            lines[2],
            format!(
                "x,odif,,mean,3,10,transfer,,undefined,{},undefined,undefined,{},undefined,,",
                0.2 / 0.15,
                (0.2f64 / 0.15).ln()
            )
        );
        assert!(!text.contains('\r'));
    }
}
