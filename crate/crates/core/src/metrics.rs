//! Evaluation rows and their CSV rendering.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::gaussian::full_nll_constant;

pub const CSV_HEADER: &str = "record_id,nll,kl_to_gt,frob_to_gt";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub record_id: usize,
    pub nll: f64,
    pub kl_to_gt: Option<f64>,
    pub frob_to_gt: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub nll: Stat,
    pub kl: Option<Stat>,
    pub frobenius: Option<Stat>,
}

/// Mean and standard deviation of each column. KL and distance summaries
/// are present only if every row has them.
pub fn summarize(rows: &[EvalRow]) -> Summary {
    let nll: Vec<f64> = rows.iter().map(|r| r.nll).collect();
    let kl: Option<Vec<f64>> = rows.iter().map(|r| r.kl_to_gt).collect();
    let frob: Option<Vec<f64>> = rows.iter().map(|r| r.frob_to_gt).collect();
    let nonempty = |v: Option<Vec<f64>>| v.filter(|v| !v.is_empty()).map(|v| Stat::of(&v));
    Summary {
        count: rows.len(),
        nll: Stat::of(&nll),
        kl: nonempty(kl),
        frobenius: nonempty(frob),
    }
}

/// Adds the `n·log 2π` constant to every NLL.
pub fn with_full_nll(rows: &[EvalRow], n: usize) -> Vec<EvalRow> {
    let c = full_nll_constant(n);
    rows.iter()
        .map(|r| EvalRow {
            nll: r.nll + c,
            ..r.clone()
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Writes the header, one line per row, and a final `mean` row whose
/// cells read `mean ± std`.
pub fn write_csv<W: Write>(mut w: W, rows: &[EvalRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.17e},{},{}",
            r.record_id,
            r.nll,
            opt(r.kl_to_gt),
            opt(r.frob_to_gt)
        )?;
    }
    let s = summarize(rows);
    let cell = |s: Option<Stat>| s.map(|s| s.to_string()).unwrap_or_default();
    writeln!(w, "mean,{},{},{}", s.nll, cell(s.kl), cell(s.frobenius))?;
    Ok(())
}

fn parse_cell(cell: &str, line: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Error::Format {
        format: "CSV",
        reason: format!("line {line}: bad number {cell:?}"),
    })
}

/// Reads the per-record rows of a CSV produced by [`write_csv`], skipping
/// the summary row.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<EvalRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?;
    match header.as_deref().map(str::trim) {
        Some(CSV_HEADER) => {}
        _ => {
            return Err(Error::Format {
                format: "CSV",
                reason: "missing header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let cells: Vec<&str> = line.trim().split(',').collect();
        if cells[0] == "mean" || line.trim().is_empty() {
            continue;
        }
        if cells.len() != 4 {
            return Err(Error::Format {
                format: "CSV",
                reason: format!("line {}: expected 4 cells", i + 2),
            });
        }
        let bad = |_| Error::Format {
            format: "CSV",
            reason: format!("line {}: bad record id", i + 2),
        };
        rows.push(EvalRow {
            record_id: cells[0].parse().map_err(bad)?,
            nll: parse_cell(cells[1], i + 2)?.unwrap_or(f64::NAN),
            kl_to_gt: parse_cell(cells[2], i + 2)?,
            frob_to_gt: parse_cell(cells[3], i + 2)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<EvalRow> {
        vec![
            EvalRow {
                record_id: 0,
                nll: 1.0,
                kl_to_gt: Some(0.5),
                frob_to_gt: Some(2.0),
            },
            EvalRow {
                record_id: 1,
                nll: 3.0,
                kl_to_gt: Some(1.5),
                frob_to_gt: Some(2.0),
            },
        ]
    }

    #[test]
    fn summary_stats() {
        let s = summarize(&rows());
        assert_eq!(s.nll, Stat { mean: 2.0, std: 1.0 });
        assert_eq!(s.kl.unwrap().mean, 1.0);
        assert_eq!(s.frobenius.unwrap().std, 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.trim_end().ends_with("mean,2.00 ± 1.00,1.00 ± 0.50,2.00 ± 0.00"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows());
    }

    #[test]
    fn missing_ground_truth_leaves_cells_empty() {
        let r = vec![EvalRow {
            record_id: 4,
            nll: -1.0,
            kl_to_gt: None,
            frob_to_gt: None,
        }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\nmean,-1.00 ± 0.00,,\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), r);
    }

    #[test]
    fn full_nll_shifts() {
        let shifted = with_full_nll(&rows(), 3);
        let c = 3.0 * (2.0 * std::f64::consts::PI).ln();
        assert!((shifted[0].nll - 1.0 - c).abs() < 1e-12);
    }
}
