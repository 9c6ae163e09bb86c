//! Per-series summaries of a sweep.
//!
//! Rows are grouped by everything except `n` and the seed. Each group becomes
//! a table of the mean value against `n` with the least-squares slope of
//! `log(mean)` in `n`: a negative slope estimates an exponential decay rate.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::run::{Row, SweepResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub n: Option<usize>,
    pub replicates: usize,
    pub mean: f64,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub cell: usize,
    pub kind: String,
    pub source: String,
    pub quantity: String,
    pub s: Option<f64>,
    pub rate_multiple: Option<f64>,
    pub rate: Option<f64>,
    pub points: Vec<SeriesPoint>,
    pub errors: usize,
    /// slope of `log(mean)` against `n`
    pub slope: Option<f64>,
}

impl Series {
    pub fn trend(&self) -> &'static str {
        match self.slope {
            None => "",
            Some(s) if s < 0.0 => "decaying",
            Some(_) => "not_decaying",
        }
    }
}

pub struct Summary {
    pub series: Vec<Series>,
    pub text: String,
    pub csv: String,
}

/// Least-squares slope of `ys` against `xs`; `None` with fewer than two
/// distinct abscissae.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if xs.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

type Key = (usize, String, String, String, Option<u64>, Option<u64>, Option<u64>);

fn key(r: &Row) -> Key {
    (
        r.cell,
        r.kind.to_string(),
        r.source.clone(),
        r.quantity.clone(),
        r.s.map(f64::to_bits),
        r.rate_multiple.map(f64::to_bits),
        r.rate.map(f64::to_bits),
    )
}

pub fn summarize(result: &SweepResult) -> Vec<Series> {
    // groups keep first-appearance order, which is plan order
    let mut order: BTreeMap<Key, usize> = BTreeMap::new();
    let mut groups: Vec<(Key, Vec<&Row>)> = Vec::new();
    for r in &result.rows {
        let k = key(r);
        match order.get(&k) {
            Some(&i) => groups[i].1.push(r),
            None => {
                order.insert(k.clone(), groups.len());
                groups.push((k, vec![r]));
            }
        }
    }
    groups
        .into_iter()
        .map(|(_, rows)| {
            let first = rows[0];
            let errors = rows.iter().filter(|r| r.status == "error").count();
            let mut by_n: BTreeMap<Option<usize>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.status != "error") {
                let e = by_n.entry(r.n).or_default();
                if let Some(v) = r.value {
                    e.0.push(v);
                }
                if let Some(v) = r.reference {
                    e.1.push(v);
                }
            }
            let points: Vec<SeriesPoint> = by_n
                .into_iter()
                .filter(|(_, (v, _))| !v.is_empty())
                .map(|(n, (v, refs))| SeriesPoint {
                    n,
                    replicates: v.len(),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    reference: (!refs.is_empty()).then(|| refs.iter().sum::<f64>() / refs.len() as f64),
                })
                .collect();
            let fit: Vec<(f64, f64)> = points
                .iter()
                .filter_map(|p| Some((p.n? as f64, p.mean)))
                .filter(|(_, m)| *m > 0.0 && m.is_finite())
                .map(|(n, m)| (n, m.ln()))
                .collect();
            let slope = if fit.len() == points.len() {
                let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
                ls_slope(&xs, &ys)
            } else {
                None
            };
            Series {
                cell: first.cell,
                kind: first.kind.to_string(),
                source: first.source.clone(),
                quantity: first.quantity.clone(),
                s: first.s,
                rate_multiple: first.rate_multiple,
                rate: first.rate,
                points,
                errors,
                slope,
            }
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_summary(result: &SweepResult) -> Summary {
    let series = summarize(result);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "cell",
        "kind",
        "source",
        "quantity",
        "s",
        "rate_multiple",
        "rate",
        "n",
        "replicates",
        "mean",
        "reference",
        "log_slope",
        "trend",
        "errors",
    ])
    .expect("in-memory write");
    let mut text = String::new();
    for g in &series {
        let _ = writeln!(
            text,
            "[{}] {} {} {} s={} R={}{}  slope={} {}{}",
            g.cell,
            g.kind,
            g.source,
            g.quantity,
            opt(g.s),
            opt(g.rate),
            g.rate_multiple.map(|m| format!(" ({m}C)")).unwrap_or_default(),
            g.slope.map(|s| format!("{s:.4e}")).unwrap_or_else(|| "-".into()),
            g.trend(),
            if g.errors > 0 { format!("  errors={}", g.errors) } else { String::new() },
        );
        for p in &g.points {
            let _ = writeln!(
                text,
                "    n={:<4} reps={:<3} mean={:<14.6e} ref={}",
                opt(p.n),
                p.replicates,
                p.mean,
                p.reference.map(|r| format!("{r:.6e}")).unwrap_or_else(|| "-".into())
            );
            w.write_record([
                g.cell.to_string(),
                g.kind.clone(),
                g.source.clone(),
                g.quantity.clone(),
                opt(g.s),
                opt(g.rate_multiple),
                opt(g.rate),
                opt(p.n),
                p.replicates.to_string(),
                p.mean.to_string(),
                opt(p.reference),
                opt(g.slope),
                g.trend().to_string(),
                g.errors.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    Summary { series, text, csv }
}
