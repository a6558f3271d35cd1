//! Trace CSV and run summary files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lemmas::LemmaParams;
use super::metrics::MetricsReport;
use super::reference::Reference;
use crate::bundle::{InvariantReport, IterationRecord, SolverConfig, StopReason};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 10] = ["t", "F_y", "F_z", "Fbar_z", "descent", "feas", "lammin", "pval", "dval", "step"];

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column order: `t, F_y, F_z, Fbar_z, descent, feas, lammin, pval, dval,
/// step, gap1..gap_k, inner_res`, floats with 17 significant digits.
pub fn write_trace<W: Write>(out: W, trace: &[IterationRecord]) -> Result<()> {
    let k = trace.first().map_or(0, |r| r.gaps.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|i| format!("gap{i}")));
    header.push("inner_res".into());
    w.write_record(&header)?;
    for r in trace {
        if r.gaps.len() != k {
            return Err(Error::DimensionMismatch {
                context: "write_trace (gap columns)",
                expected: k,
                found: r.gaps.len(),
            });
        }
        let mut row = vec![
            r.t.to_string(),
            float(r.f_y),
            float(r.f_z),
            float(r.fbar_z),
            if r.descent { "1" } else { "0" }.to_string(),
            float(r.feas),
            float(r.lammin),
            float(r.pval),
            float(r.dval),
            float(r.step),
        ];
        row.extend(r.gaps.iter().map(|&g| float(g)));
        row.push(float(r.inner_res));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rd.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let ncol = cols.len();
    let k = ncol.saturating_sub(FIXED_COLUMNS.len() + 1);
    let expected_gap = |i: usize| format!("gap{}", i + 1);
    let ok = ncol > FIXED_COLUMNS.len()
        && cols[..FIXED_COLUMNS.len()] == FIXED_COLUMNS
        && (0..k).all(|i| cols[FIXED_COLUMNS.len() + i] == expected_gap(i))
        && cols[ncol - 1] == "inner_res";
    if !ok {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected trace header '{}'", cols.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != ncol {
            return Err(Error::Parse {
                line,
                message: format!("expected {ncol} fields, found {}", rec.len()),
            });
        }
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number '{}' in column {}", &rec[i], cols[i]),
            })
        };
        let t = rec[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid iteration '{}'", &rec[0]),
        })?;
        let descent = match &rec[4] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("descent flag must be 0 or 1, found '{other}'"),
                })
            }
        };
        out.push(IterationRecord {
            t,
            f_y: f(1)?,
            f_z: f(2)?,
            fbar_z: f(3)?,
            descent,
            feas: f(5)?,
            lammin: f(6)?,
            pval: f(7)?,
            dval: f(8)?,
            step: f(9)?,
            gaps: (0..k).map(|i| f(FIXED_COLUMNS.len() + i)).collect::<Result<_>>()?,
            inner_res: f(ncol - 1)?,
        });
    }
    Ok(out)
}

/// Creates `path` for writing, along with any missing parent directories.
pub fn create_file(path: impl AsRef<Path>) -> Result<std::io::BufWriter<std::fs::File>> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_trace(path: impl AsRef<Path>, trace: &[IterationRecord]) -> Result<()> {
    write_trace(create_file(path)?, trace)
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    read_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Everything needed to interpret and re-verify a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub instance: String,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub config: SolverConfig,
    pub iterations: usize,
    pub descent_steps: usize,
    pub stop: StopReason,
    pub final_f: f64,
    pub inner_warnings: usize,
    pub seconds: f64,
    pub reference: Option<Reference>,
    pub metrics: Option<MetricsReport>,
    /// Parameters for re-running the trajectory checks on the trace.
    pub lemma_params: Option<LemmaParams>,
    pub invariants: Option<InvariantReport>,
    pub sketch_residual: Option<f64>,
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create_file(path)?, value)?;
    Ok(())
}

pub fn load_summary(path: impl AsRef<Path>) -> Result<RunSummary> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<IterationRecord> {
        (0..4)
            .map(|t| IterationRecord {
                t,
                f_y: 1.0 / (t as f64 + 3.0),
                f_z: -std::f64::consts::PI * t as f64,
                fbar_z: 1e-300,
                descent: t % 2 == 0,
                feas: 0.1 + 0.2,
                lammin: -1e-17,
                pval: f64::MAX,
                dval: 123456789.123456789,
                step: 0.0,
                gaps: vec![1.0 / 7.0, 2.0 / 3.0],
                inner_res: f64::MIN_POSITIVE,
            })
            .collect()
    }

    #[test]
    fn round_trips_exactly() {
        let tr = sample();
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,F_y,F_z,Fbar_z,descent,feas,lammin,pval,dval,step,gap1,gap2,inner_res\n"));
        assert_eq!(read_trace(buf.as_slice()).unwrap(), tr);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_trace("a,b\n1,2\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_trace(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen(",1,", ",2,", 1);
        assert!(read_trace(text.as_bytes()).is_err());
    }

    #[test]
    fn empty_trace() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &[]).unwrap();
        assert!(read_trace(buf.as_slice()).unwrap().is_empty());
    }
}
