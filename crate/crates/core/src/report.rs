//! Aggregate metric reports and their CSV / JSON layouts.
//!
//! CSV columns: `metric,language,method,threshold,user_type,id,value`.
//! Per-user reports write one row per user; aggregate-only or empty reports
//! write a single row with an empty `id`. Undefined aggregates are written
//! as `n/a`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::graph::UserId;
use crate::metrics::mean_std;

/// Which population a value describes. Unset fields are left blank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub language: Option<String>,
    pub method: Option<String>,
    pub threshold: Option<u64>,
    pub user_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub population: Population,
    pub n: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub stddev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_user: Option<Vec<(UserId, f64)>>,
}

impl MetricReport {
    pub fn from_values(metric: impl Into<String>, population: Population, per_user: Vec<(UserId, f64)>) -> Self {
        let values: Vec<f64> = per_user.iter().map(|&(_, v)| v).collect();
        let ms = mean_std(&values);
        MetricReport {
            metric: metric.into(),
            population,
            n: values.len(),
            mean: ms.map(|m| m.0),
            stddev: ms.map(|m| m.1),
            per_user: Some(per_user),
        }
    }

    /// A single population-level number, such as a degree ratio.
    pub fn scalar(metric: impl Into<String>, population: Population, n: usize, value: Option<f64>) -> Self {
        MetricReport {
            metric: metric.into(),
            population,
            n,
            mean: value,
            stddev: value.map(|_| 0.0),
            per_user: None,
        }
    }

    /// Copy without the per-user rows.
    pub fn aggregate(&self) -> MetricReport {
        MetricReport { per_user: None, ..self.clone() }
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_csv<W: Write + ?Sized>(reports: &[MetricReport], w: &mut W) -> io::Result<()> {
    writeln!(w, "metric,language,method,threshold,user_type,id,value")?;
    for r in reports {
        let p = &r.population;
        let prefix = format!(
            "{},{},{},{},{}",
            r.metric,
            opt(&p.language),
            opt(&p.method),
            opt(&p.threshold),
            opt(&p.user_type)
        );
        match &r.per_user {
            Some(rows) if !rows.is_empty() => {
                for (id, v) in rows {
                    writeln!(w, "{prefix},{id},{v}")?;
                }
            }
            _ => writeln!(w, "{prefix},,{}", r.mean.map_or("n/a".to_string(), |m| m.to_string()))?,
        }
    }
    Ok(())
}

/// Aggregate blocks only, one per report.
pub fn write_json<W: Write + ?Sized>(reports: &[MetricReport], w: &mut W) -> io::Result<()> {
    let blocks: Vec<MetricReport> = reports.iter().map(MetricReport::aggregate).collect();
    serde_json::to_writer_pretty(&mut *w, &blocks)?;
    writeln!(w)
}
