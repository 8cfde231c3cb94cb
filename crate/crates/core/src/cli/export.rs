use std::io::Write;
use std::path::Path;

use crate::common::Trajectory;
use crate::error::{io, Error, Result};

pub const CSV_HEADER: [&str; 8] = ["t", "x", "u_des", "u_act", "h", "margin", "intervened", "event"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// One parsed CSV row. Control columns are `None` on the final grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub x: f64,
    pub u_des: Option<f64>,
    pub u_act: Option<f64>,
    pub h: f64,
    pub margin: Option<f64>,
    pub intervened: Option<bool>,
    pub event: String,
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let n = traj.u_act.len();
    for k in 0..traj.x.len() {
        let event: Vec<&str> = traj.events_at(k).map(|e| e.kind.tag()).collect();
        let (u_des, u_act, margin, intervened) = if k < n {
            (
                fmt_f64(traj.u_des[k]),
                fmt_f64(traj.u_act[k]),
                fmt_f64(traj.margin[k]),
                traj.intervened[k].to_string(),
            )
        } else {
            Default::default()
        };
        w.write_record([
            fmt_f64(traj.grid.time(k)),
            fmt_f64(traj.x[k]),
            u_des,
            u_act,
            fmt_f64(traj.h[k]),
            margin,
            intervened,
            event.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io(path, e))?;
    write_trajectory_csv(traj, std::io::BufWriter::new(file))
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |m: String| Error::Config(format!("trajectory csv: {m}"));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            Ok(CsvRow {
                t: num(&rec[0])?,
                x: num(&rec[1])?,
                u_des: opt(&rec[2])?,
                u_act: opt(&rec[3])?,
                h: num(&rec[4])?,
                margin: opt(&rec[5])?,
                intervened: match &rec[6] {
                    "" => None,
                    s => Some(s.parse::<bool>().map_err(|e| bad(e.to_string()))?),
                },
                event: rec[7].to_string(),
            })
        })
        .collect()
}
