use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::engine::ModelState;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The trace CSV header. Optional columns are written empty when a method
/// does not define them (the averaging baseline has no epigraph state, so
/// its alpha, v, penalty and gap cells stay blank).
pub const TRACE_HEADER: &str =
    "k,eta,alpha,v,minmax_obj,penalty_obj,gap,theta_norm,test_accuracy,slots_used";

/// State of one recorded iteration. The serialized columns match
/// `TRACE_HEADER`; `theta` and the oracle distances are kept in memory for
/// tests and diagnostics but are not part of the CSV contract.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<S: Scalar> {
    pub k: usize,
    pub eta: S,
    pub alpha: Option<S>,
    pub v: Option<S>,
    pub minmax_obj: S,
    pub penalty_obj: Option<S>,
    pub gap: Option<S>,
    pub theta_norm: S,
    pub test_accuracy: Option<S>,
    pub slots_used: u64,
    pub theta: Vec<S>,
    pub dist_theta: Option<S>,
    pub dist_alpha: Option<S>,
}

/// Everything one optimization run produced: the recorded rows, the final
/// model, and the largest subgradient norm seen while running (a bound
/// witness for the loss family on the feasible set).
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<S: Scalar> {
    pub rows: Vec<TraceRow<S>>,
    pub final_state: ModelState<S>,
    pub max_subgrad_norm: S,
}

fn opt_cell<S: Scalar>(v: Option<S>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl<S: Scalar> RunTrace<S> {
    /// Writes the recorded rows under the fixed header. Scalars are
    /// formatted with their shortest round-trip representation, so reading
    /// the file back yields bit-identical values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<File>, line: String| {
            out.write_all(line.as_bytes())
                .map_err(|e| Error::io(path, e))
        };
        write(&mut out, format!("{TRACE_HEADER}\n"))?;
        for r in &self.rows {
            write(
                &mut out,
                format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.k,
                    r.eta,
                    opt_cell(r.alpha),
                    opt_cell(r.v),
                    r.minmax_obj,
                    opt_cell(r.penalty_obj),
                    opt_cell(r.gap),
                    r.theta_norm,
                    opt_cell(r.test_accuracy),
                    r.slots_used
                ),
            )?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn parse_scalar<S: Scalar>(field: &str, path: &Path, line: usize) -> Result<S> {
    field.parse::<f64>().map(S::cast).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        message: format!("bad numeric field `{field}`"),
    })
}

fn parse_opt_scalar<S: Scalar>(field: &str, path: &Path, line: usize) -> Result<Option<S>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_scalar(field, path, line).map(Some)
    }
}

/// Reads back a trace CSV written by `write_csv`. Only the serialized
/// columns are recoverable; the in-memory extras come back empty.
pub fn read_trace_rows<S: Scalar>(path: &Path) -> Result<Vec<TraceRow<S>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "empty trace file".into(),
        });
    };
    let header = header.map_err(|e| Error::io(path, e))?;
    if header != TRACE_HEADER {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                message: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let parse_count = |field: &str| -> Result<u64> {
            field.parse::<u64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno,
                message: format!("bad integer field `{field}`"),
            })
        };
        rows.push(TraceRow {
            k: parse_count(fields[0])? as usize,
            eta: parse_scalar(fields[1], path, lineno)?,
            alpha: parse_opt_scalar(fields[2], path, lineno)?,
            v: parse_opt_scalar(fields[3], path, lineno)?,
            minmax_obj: parse_scalar(fields[4], path, lineno)?,
            penalty_obj: parse_opt_scalar(fields[5], path, lineno)?,
            gap: parse_opt_scalar(fields[6], path, lineno)?,
            theta_norm: parse_scalar(fields[7], path, lineno)?,
            test_accuracy: parse_opt_scalar(fields[8], path, lineno)?,
            slots_used: parse_count(fields[9])?,
            theta: Vec::new(),
            dist_theta: None,
            dist_alpha: None,
        });
    }
    Ok(rows)
}
