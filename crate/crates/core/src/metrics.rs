//! PSNR, ΔPSNR, Bjøntegaard delta rate and relative runtime, plus the CSV
//! formats used to exchange rate-distortion data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{Plane, MAX_SAMPLE};

/// Mean squared error between two planes of equal size.
pub fn mse(a: &Plane, b: &Plane) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data().len() as f64)
}

/// PSNR for 10-bit samples. Zero error gives `f64::INFINITY`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = MAX_SAMPLE as f64;
    10.0 * (peak * peak / mse).log10()
}

pub fn psnr(a: &Plane, b: &Plane) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Mean of the finite values; infinite PSNRs are skipped with a warning.
/// `None` when nothing finite remains.
pub fn mean_psnr(values: &[f64]) -> Option<f64> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < values.len() {
        warn!("{} lossless PSNR value(s) left out of the average", values.len() - finite.len());
    }
    if finite.is_empty() {
        None
    } else {
        Some(finite.iter().sum::<f64>() / finite.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(rate: f64, quality: f64) -> Self {
        RdPoint { rate, quality }
    }
}

/// One cell of a sequence × qp evaluation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub sequence: String,
    pub qp: u8,
    pub psnr_prop: f64,
    pub psnr_ref: f64,
    pub rt_prop: f64,
    pub rt_ref: f64,
}

fn check_grid(records: &[RunRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Contract("empty evaluation grid".into()));
    }
    let seqs: BTreeSet<&str> = records.iter().map(|r| r.sequence.as_str()).collect();
    let qps: BTreeSet<u8> = records.iter().map(|r| r.qp).collect();
    let cells: BTreeSet<(&str, u8)> = records.iter().map(|r| (r.sequence.as_str(), r.qp)).collect();
    if cells.len() != records.len() {
        return Err(Error::Contract("duplicate cell in evaluation grid".into()));
    }
    for s in &seqs {
        for q in &qps {
            if !cells.contains(&(*s, *q)) {
                return Err(Error::Contract(format!("grid cell ({s}, qp {q}) is missing")));
            }
        }
    }
    Ok(())
}

/// Mean PSNR difference over a complete sequence × qp grid.
pub fn delta_psnr(records: &[RunRecord]) -> Result<f64> {
    check_grid(records)?;
    Ok(records.iter().map(|r| r.psnr_prop - r.psnr_ref).sum::<f64>() / records.len() as f64)
}

/// Mean of per-cell runtime ratios over a complete grid.
pub fn rt_ratio(records: &[RunRecord]) -> Result<f64> {
    check_grid(records)?;
    if let Some(r) = records.iter().find(|r| !(r.rt_prop > 0.0 && r.rt_ref > 0.0)) {
        return Err(Error::Contract(format!(
            "non-positive runtime for ({}, qp {})",
            r.sequence, r.qp
        )));
    }
    Ok(records.iter().map(|r| r.rt_prop / r.rt_ref).sum::<f64>() / records.len() as f64)
}

/// Least-squares cubic in a normalized variable `t = (q - center) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicFit {
    pub center: f64,
    pub scale: f64,
    /// Coefficients of 1, t, t², t³.
    pub coef: [f64; 4],
}

impl CubicFit {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 4 {
            return Err(Error::Contract("a cubic fit needs at least 4 points".into()));
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let center = 0.5 * (lo + hi);
        let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        // normal equations; t stays within [-1, 1] so they are well conditioned
        let mut a = [[0.0f64; 5]; 4];
        for (&xi, &yi) in x.iter().zip(y) {
            let t = (xi - center) / scale;
            let pw = [1.0, t, t * t, t * t * t];
            for r in 0..4 {
                for c in 0..4 {
                    a[r][c] += pw[r] * pw[c];
                }
                a[r][4] += pw[r] * yi;
            }
        }
        for col in 0..4 {
            let piv = (col..4)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            if a[piv][col].abs() < 1e-12 {
                return Err(Error::Contract("degenerate points for a cubic fit".into()));
            }
            a.swap(col, piv);
            for r in 0..4 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..5 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let coef = [0, 1, 2, 3].map(|i| a[i][4] / a[i][i]);
        Ok(CubicFit { center, scale, coef })
    }

    pub fn eval(&self, q: f64) -> f64 {
        let t = (q - self.center) / self.scale;
        ((self.coef[3] * t + self.coef[2]) * t + self.coef[1]) * t + self.coef[0]
    }

    /// Exact integral over `[lo, hi]` in the original variable.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let prim = |q: f64| {
            let t = (q - self.center) / self.scale;
            t * (self.coef[0] + t * (self.coef[1] / 2.0 + t * (self.coef[2] / 3.0 + t * self.coef[3] / 4.0)))
        };
        self.scale * (prim(hi) - prim(lo))
    }
}

fn check_curve(points: &[RdPoint], name: &str) -> Result<Vec<RdPoint>> {
    if points.len() < 4 {
        return Err(Error::Contract(format!("{name} curve has {} points, need 4", points.len())));
    }
    for p in points {
        if !(p.rate > 0.0) || !p.rate.is_finite() {
            return Err(Error::Contract(format!("{name} curve has non-positive rate {}", p.rate)));
        }
        if !p.quality.is_finite() {
            return Err(Error::Contract(format!(
                "{name} curve has non-finite quality; use a coarser qp range"
            )));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    if sorted.windows(2).any(|w| !(w[1].quality > w[0].quality) || w[1].rate == w[0].rate) {
        return Err(Error::Contract(format!(
            "{name} curve quality is not strictly increasing with rate"
        )));
    }
    Ok(sorted)
}

/// Fitted log10-rate polynomials of both curves and their common quality
/// interval.
pub fn bd_fits(anchor: &[RdPoint], test: &[RdPoint]) -> Result<(CubicFit, CubicFit, f64, f64)> {
    let a = check_curve(anchor, "anchor")?;
    let t = check_curve(test, "test")?;
    let fit = |c: &[RdPoint]| {
        let q: Vec<f64> = c.iter().map(|p| p.quality).collect();
        let r: Vec<f64> = c.iter().map(|p| p.rate.log10()).collect();
        CubicFit::fit(&q, &r)
    };
    let lo = a[0].quality.max(t[0].quality);
    let hi = a[a.len() - 1].quality.min(t[t.len() - 1].quality);
    if !(hi > lo) {
        return Err(Error::Contract("quality ranges of the curves do not overlap".into()));
    }
    Ok((fit(&a)?, fit(&t)?, lo, hi))
}

/// Bjøntegaard delta rate of `test` against `anchor` in percent; negative
/// values mean the test curve needs fewer bits for the same quality.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let (fa, ft, lo, hi) = bd_fits(anchor, test)?;
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// One row of an RD input file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub label: String,
    pub qp: u8,
    pub rate_bits: f64,
    pub quality: f64,
    /// Optional wall-clock seconds, used for runtime ratios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

pub fn rd_csv(rows: &[RdRow]) -> String {
    let with_time = rows.iter().any(|r| r.seconds.is_some());
    let mut s = String::from(if with_time {
        "label,qp,rate_bits,quality,seconds\n"
    } else {
        "label,qp,rate_bits,quality\n"
    });
    for r in rows {
        let _ = write!(s, "{},{},{},{}", r.label, r.qp, r.rate_bits, r.quality);
        if with_time {
            let _ = write!(s, ",{}", r.seconds.map(|v| v.to_string()).unwrap_or_default());
        }
        s.push('\n');
    }
    s
}

pub fn write_rd_csv(rows: &[RdRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, rd_csv(rows)).map_err(|e| Error::io(path, e))
}

/// Parses RD rows; errors carry the 1-based line number of the bad row.
pub fn parse_rd_csv(text: &str) -> Result<Vec<RdRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<RdRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !(row.rate_bits > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("rate_bits must be positive, got {}", row.rate_bits),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_rd_csv(path: impl AsRef<Path>) -> Result<Vec<RdRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rd_csv(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Curves of one RD table keyed by label, each sorted by qp.
pub fn curves(rows: &[RdRow]) -> BTreeMap<String, Vec<RdRow>> {
    let mut out: BTreeMap<String, Vec<RdRow>> = BTreeMap::new();
    for r in rows {
        out.entry(r.label.clone()).or_default().push(r.clone());
    }
    for c in out.values_mut() {
        c.sort_by_key(|r| r.qp);
    }
    out
}

/// Comparison of one test label against the anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub pair: String,
    pub bd_rate_percent: f64,
    pub delta_psnr_db: f64,
    /// `None` when the inputs carry no timings.
    pub rt_ratio: Option<f64>,
}

/// Compares every label against `anchor`. Each table is one sequence: the
/// BD rate is averaged over sequences, ΔPSNR and the runtime ratio are
/// taken over the full sequence × qp grid.
pub fn compare(tables: &[(String, Vec<RdRow>)], anchor: &str) -> Result<Vec<ReportRow>> {
    let mut labels = BTreeSet::new();
    for (_, rows) in tables {
        labels.extend(rows.iter().map(|r| r.label.clone()));
    }
    if !labels.contains(anchor) {
        return Err(Error::Contract(format!("anchor label '{anchor}' not found")));
    }
    let mut out = Vec::new();
    for label in labels.iter().filter(|l| *l != anchor) {
        let mut bds = Vec::new();
        let mut records = Vec::new();
        for (seq, rows) in tables {
            let c = curves(rows);
            let (Some(a), Some(t)) = (c.get(anchor), c.get(label)) else {
                return Err(Error::Contract(format!("sequence {seq} lacks label {anchor} or {label}")));
            };
            let pts = |v: &[RdRow]| v.iter().map(|r| RdPoint::new(r.rate_bits, r.quality)).collect::<Vec<_>>();
            bds.push(bd_rate(&pts(a), &pts(t))?);
            for tr in t {
                let ar = a.iter().find(|r| r.qp == tr.qp).ok_or_else(|| {
                    Error::Contract(format!("sequence {seq}: anchor has no qp {}", tr.qp))
                })?;
                records.push(RunRecord {
                    sequence: seq.clone(),
                    qp: tr.qp,
                    psnr_prop: tr.quality,
                    psnr_ref: ar.quality,
                    rt_prop: tr.seconds.unwrap_or(f64::NAN),
                    rt_ref: ar.seconds.unwrap_or(f64::NAN),
                });
            }
        }
        let timed = records.iter().all(|r| !r.rt_prop.is_nan() && !r.rt_ref.is_nan());
        out.push(ReportRow {
            pair: format!("{label} vs {anchor}"),
            bd_rate_percent: bds.iter().sum::<f64>() / bds.len() as f64,
            delta_psnr_db: delta_psnr(&records)?,
            rt_ratio: if timed { Some(rt_ratio(&records)?) } else { None },
        });
    }
    Ok(out)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("pair,bd_rate_percent,delta_psnr_db,rt_ratio\n");
    for r in rows {
        let rt = r.rt_ratio.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.pair, r.bd_rate_percent, r.delta_psnr_db, rt);
    }
    s
}

/// Rate/quality pairs per curve, ordered by rate, for external plotting.
pub fn plot_csv(tables: &[(String, Vec<RdRow>)]) -> String {
    let mut s = String::from("sequence,curve,rate_bits,quality\n");
    for (seq, rows) in tables {
        for (label, mut c) in curves(rows) {
            c.sort_by(|a, b| a.rate_bits.total_cmp(&b.rate_bits));
            for r in c {
                let _ = writeln!(s, "{seq},{label},{},{}", r.rate_bits, r.quality);
            }
        }
    }
    s
}
