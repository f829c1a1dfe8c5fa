//! `egonet report`: degree-ratio tables, per-type metrics, follower
//! distributions and AUC tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use egonet::evaluation::{auc, mean_pairwise_auc, roc, survivor, AucCell, Direction};
use egonet::metrics::{
    degree_ratio, diagonal_fraction_with, local_clustering, local_reciprocity, sample_followers_metric,
    type2prime_fraction_with, FollowerMetric, MetricError,
};
use egonet::report::{write_csv, write_json, MetricReport, Population};
use egonet::{Degrees, DirectedGraph, TypeLabel, TypeThresholds, UserId};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::manifest::Outputs;
use crate::run::{load_graph, load_labels};
use crate::sample::load_sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    /// Degree filters for the degree ratio, diagonal fraction and type-2'
    /// fraction.
    pub thresholds: Vec<u64>,
    pub types: TypeThresholds,
    /// Followers sampled per typed user for follower statistics.
    pub followers_per_user: usize,
    /// Keep at most this many typed users per (language, type).
    pub per_type: Option<usize>,
    /// Add AUCs averaged over (type-1 user, type-2 user) pairs.
    pub per_user_auc: bool,
    pub rng_seed: u64,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams {
            thresholds: vec![100, 2000],
            types: TypeThresholds::default(),
            followers_per_user: 100,
            per_type: None,
            per_user_auc: false,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub graph: PathBuf,
    pub samples: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub params: ReportParams,
}

const TYPES: [TypeLabel; 2] = [TypeLabel::Type1, TypeLabel::Type2];

fn user_seed(rng_seed: u64, u: UserId) -> u64 {
    rng_seed ^ u.0.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Collapses undefined-metric errors to `None`.
fn defined<T>(r: std::result::Result<T, MetricError>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricError::Undefined { .. } | MetricError::EmptyPopulation(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

impl ReportRun {
    pub fn execute(&self, out: &mut Outputs) -> Result<()> {
        let g = load_graph(&self.graph)?;
        let p = &self.params;

        let ratio_reports = self.degree_ratio_reports(&g)?;
        out.write("degree_ratio.csv", |w| write_csv(&ratio_reports, w))?;

        let typed = self.typed_users(&g)?;
        let method = if self.labels.is_some() { "planted" } else { "classified" };
        let mut metric_reports = Vec::new();
        let mut auc_cells = Vec::new();
        for (lang, by_type) in &typed {
            let pop = |t: TypeLabel, threshold: Option<u64>| Population {
                language: Some(lang.clone()),
                method: Some(method.into()),
                threshold,
                user_type: Some(t.as_str().into()),
            };
            let mut pooled_kout: BTreeMap<TypeLabel, Vec<f64>> = BTreeMap::new();
            let mut pooled_recip: BTreeMap<TypeLabel, Vec<f64>> = BTreeMap::new();
            let mut per_user_kout: BTreeMap<TypeLabel, Vec<Vec<f64>>> = BTreeMap::new();
            for t in TYPES {
                let users = by_type.get(&t).map(Vec::as_slice).unwrap_or(&[]);
                let (mut recip, mut clust, mut frecip) = (Vec::new(), Vec::new(), Vec::new());
                let mut prime: BTreeMap<u64, Vec<(UserId, f64)>> = BTreeMap::new();
                for &u in users {
                    if let Some(f) = defined(local_reciprocity(&g, u))? {
                        recip.push((u, f.value()));
                    }
                    if let Some(f) = defined(local_clustering(&g, u))? {
                        clust.push((u, f.value()));
                    }
                    for &th in &p.thresholds {
                        let f = defined(type2prime_fraction_with(&g, u, th, p.types.diagonal))?;
                        let row = prime.entry(th).or_default();
                        if let Some(f) = f {
                            row.push((u, f.value()));
                        }
                    }
                    let seed = user_seed(p.rng_seed, u);
                    let n = p.followers_per_user;
                    let kout = sample_followers_metric(&g, u, n, FollowerMetric::OutDegree, seed)?.scores();
                    let rec = sample_followers_metric(&g, u, n, FollowerMetric::Reciprocity, seed)?.scores();
                    if !rec.is_empty() {
                        frecip.push((u, rec.iter().sum::<f64>() / rec.len() as f64));
                    }
                    pooled_kout.entry(t).or_default().extend(&kout);
                    pooled_recip.entry(t).or_default().extend(&rec);
                    per_user_kout.entry(t).or_default().push(kout);
                }
                metric_reports.push(MetricReport::from_values("local_reciprocity", pop(t, None), recip));
                metric_reports.push(MetricReport::from_values("follower_reciprocity", pop(t, None), frecip));
                metric_reports.push(MetricReport::from_values("clustering", pop(t, None), clust));
                for &th in &p.thresholds {
                    let rows = prime.remove(&th).unwrap_or_default();
                    metric_reports.push(MetricReport::from_values("type2prime_fraction", pop(t, Some(th)), rows));
                }

                let kout = pooled_kout.get(&t).map(Vec::as_slice).unwrap_or(&[]);
                if kout.is_empty() {
                    log::warn!("{lang} {}: no follower out-degrees to summarize", t.as_str());
                } else {
                    let s = survivor(kout)?;
                    out.write(&format!("survivor/{lang}-{}-follower_k_out.csv", t.as_str()), |w| s.write_csv(w))?;
                }
            }

            let get = |m: &BTreeMap<TypeLabel, Vec<f64>>, t| m.get(&t).cloned().unwrap_or_default();
            for (name, pooled) in [("follower_k_out", &pooled_kout), ("follower_reciprocity", &pooled_recip)] {
                let (a, b) = (get(pooled, TypeLabel::Type1), get(pooled, TypeLabel::Type2));
                let cell = if a.is_empty() || b.is_empty() {
                    log::warn!("{lang} {name}: a type has no scores; AUC is n/a");
                    None
                } else {
                    let curve = roc(&a, &b, Direction::Type2Higher)?;
                    out.write(&format!("roc/{lang}-{name}.csv"), |w| curve.write_csv(w))?;
                    Some(auc(&a, &b, Direction::Type2Higher)?)
                };
                auc_cells.push(AucCell { language: lang.clone(), metric: name.into(), auc: cell });
            }
            if p.per_user_auc {
                let a = per_user_kout.get(&TypeLabel::Type1).cloned().unwrap_or_default();
                let b = per_user_kout.get(&TypeLabel::Type2).cloned().unwrap_or_default();
                let cell = mean_pairwise_auc(&a, &b, Direction::Type2Higher).ok();
                auc_cells.push(AucCell { language: lang.clone(), metric: "follower_k_out_per_user".into(), auc: cell });
            }
        }
        for r in &metric_reports {
            if r.n == 0 {
                let pop = &r.population;
                log::warn!(
                    "{} ({} {} threshold {}): empty population",
                    r.metric,
                    pop.language.as_deref().unwrap_or(""),
                    pop.user_type.as_deref().unwrap_or(""),
                    pop.threshold.map(|t| t.to_string()).unwrap_or_else(|| "-".into())
                );
            }
        }
        out.write("metrics.csv", |w| write_csv(&metric_reports, w))?;
        out.write("auc.csv", |w| egonet::evaluation::write_auc_table(&auc_cells, w))?;
        let all: Vec<MetricReport> = ratio_reports.into_iter().chain(metric_reports).collect();
        out.write("report.json", |w| write_json(&all, w))?;
        Ok(())
    }

    /// Degree ratio and diagonal fraction per (method, language, threshold),
    /// pooling sample sets that share method and language.
    fn degree_ratio_reports(&self, g: &DirectedGraph) -> Result<Vec<MetricReport>> {
        let mut pools: BTreeMap<(String, String), BTreeSet<UserId>> = BTreeMap::new();
        for path in &self.samples {
            let s = load_sample(path)?;
            pools.entry((s.method.as_str().to_string(), s.language.clone())).or_default().extend(s.members);
        }
        let mut reports = Vec::new();
        for ((method, lang), members) in pools {
            let degrees: Vec<Degrees> = members.iter().filter_map(|&u| g.degrees(u).ok()).collect();
            if degrees.len() < members.len() {
                log::warn!("{method} {lang}: {} members not in graph", members.len() - degrees.len());
            }
            for &th in &self.params.thresholds {
                let n = degrees.iter().filter(|d| d.k_in > th && d.k_out > th).count();
                let pop = Population {
                    language: Some(lang.clone()),
                    method: Some(method.clone()),
                    threshold: Some(th),
                    user_type: None,
                };
                let r = defined(degree_ratio(&degrees, th))?;
                let d = defined(diagonal_fraction_with(&degrees, th, self.params.types.diagonal))?;
                if n == 0 {
                    log::warn!("{method} {lang}: nobody above threshold {th}");
                }
                reports.push(MetricReport::scalar("degree_ratio", pop.clone(), n, r));
                reports.push(MetricReport::scalar("diagonal_fraction", pop, n, d.map(|f| f.value())));
            }
        }
        Ok(reports)
    }

    /// Typed users grouped by language, from the label file or by
    /// classifying every user.
    fn typed_users(&self, g: &DirectedGraph) -> Result<BTreeMap<String, BTreeMap<TypeLabel, Vec<UserId>>>> {
        let labels: Vec<(UserId, TypeLabel)> = match &self.labels {
            Some(path) => {
                let l = load_labels(path)?;
                l.labels.into_iter().filter(|(u, _)| g.contains(*u)).collect()
            }
            None => g
                .ids()
                .map(|u| (u, self.params.types.classify(g.degrees(u).expect("own id"))))
                .filter(|(_, t)| *t != TypeLabel::Neither)
                .collect(),
        };
        let mut out: BTreeMap<String, BTreeMap<TypeLabel, Vec<UserId>>> = BTreeMap::new();
        for (u, t) in labels {
            let lang = g.user(u).expect("filtered").language.clone();
            out.entry(lang).or_default().entry(t).or_default().push(u);
        }
        if let Some(cap) = self.params.per_type {
            let mut rng = ChaCha8Rng::seed_from_u64(self.params.rng_seed);
            for by_type in out.values_mut() {
                for users in by_type.values_mut() {
                    if users.len() > cap {
                        let mut kept: Vec<UserId> =
                            sample(&mut rng, users.len(), cap).into_iter().map(|i| users[i]).collect();
                        kept.sort_unstable();
                        *users = kept;
                    }
                }
            }
        }
        Ok(out)
    }
}
