use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{boxplot_summary, BoxplotSummary, CohortError};
use crate::breathhold::FeatureSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub risk_score: u8,
    /// Mean over the subject's sessions where the feature was valid.
    pub features: BTreeMap<String, f64>,
    pub session_count: usize,
}

impl SubjectRecord {
    pub fn get(&self, feature: &str) -> Option<f64> {
        self.features.get(feature).copied()
    }
}

/// Unweighted per-subject means of the valid session features.
pub fn aggregate_subjects(sessions: &[FeatureSet]) -> Result<Vec<SubjectRecord>, CohortError> {
    let mut by_subject: BTreeMap<&str, Vec<&FeatureSet>> = BTreeMap::new();
    for s in sessions {
        by_subject.entry(&s.subject_id).or_default().push(s);
    }
    by_subject
        .into_iter()
        .map(|(id, list)| {
            let score = list[0]
                .risk_score
                .ok_or_else(|| CohortError::MissingRiskScore {
                    subject: id.to_string(),
                })?;
            if list.iter().any(|s| s.risk_score != Some(score)) {
                return Err(CohortError::ConflictingRiskScore {
                    subject: id.to_string(),
                });
            }
            let mut features = BTreeMap::new();
            for name in FeatureSet::NAMES {
                let vals: Vec<f64> = list
                    .iter()
                    .filter_map(|s| s.feature(name).and_then(|f| f.get()))
                    .collect();
                if !vals.is_empty() {
                    features.insert(
                        name.to_string(),
                        vals.iter().sum::<f64>() / vals.len() as f64,
                    );
                }
            }
            Ok(SubjectRecord {
                subject_id: id.to_string(),
                risk_score: score,
                features,
                session_count: list.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub low_risk: Vec<SubjectRecord>,
    pub higher_risk: Vec<SubjectRecord>,
    pub excluded: Vec<SubjectRecord>,
}

/// Score 1 is low risk, 4 and above higher risk, 2 and 3 are left out.
pub fn assign_groups(records: &[SubjectRecord]) -> Groups {
    let mut g = Groups::default();
    for r in records {
        match r.risk_score {
            1 => g.low_risk.push(r.clone()),
            2 | 3 => g.excluded.push(r.clone()),
            _ => g.higher_risk.push(r.clone()),
        }
    }
    g
}

/// Values of one feature over the records that have it.
pub fn feature_values(records: &[SubjectRecord], feature: &str) -> Vec<f64> {
    records.iter().filter_map(|r| r.get(feature)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBucket {
    pub label: String,
    pub scores: Vec<u8>,
}

impl ScoreBucket {
    pub fn new(label: &str, scores: &[u8]) -> Self {
        Self {
            label: label.to_string(),
            scores: scores.to_vec(),
        }
    }

    pub fn midpoint(&self) -> f64 {
        self.scores.iter().map(|&s| f64::from(s)).sum::<f64>() / self.scores.len() as f64
    }
}

pub fn default_buckets() -> Vec<ScoreBucket> {
    vec![
        ScoreBucket::new("1", &[1]),
        ScoreBucket::new("4", &[4]),
        ScoreBucket::new("5", &[5]),
        ScoreBucket::new("6-7", &[6, 7]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub bucket: ScoreBucket,
    pub values: Vec<f64>,
    /// `None` with `error` set when the bucket is empty or too small.
    pub summary: Option<BoxplotSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub feature: String,
    pub buckets: Vec<BucketSummary>,
    /// Rank correlation of bucket midpoint against subject value.
    pub spearman_rho: Option<f64>,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the average ranks. Zero when either side is
/// constant; `None` for fewer than two pairs.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Some(0.0);
    }
    Some(sxy / (sxx * syy).sqrt())
}

pub fn subgroup_trend(
    records: &[SubjectRecord],
    feature: &str,
    buckets: &[ScoreBucket],
) -> TrendReport {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let summaries = buckets
        .iter()
        .map(|b| {
            let members: Vec<&SubjectRecord> = records
                .iter()
                .filter(|r| b.scores.contains(&r.risk_score))
                .collect();
            let values: Vec<f64> = members.iter().filter_map(|r| r.get(feature)).collect();
            xs.extend(std::iter::repeat_n(b.midpoint(), values.len()));
            ys.extend(&values);
            let (summary, error) = if values.is_empty() {
                (
                    None,
                    Some(
                        CohortError::EmptyBucket {
                            label: b.label.clone(),
                        }
                        .to_string(),
                    ),
                )
            } else {
                match boxplot_summary(&values) {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            BucketSummary {
                bucket: b.clone(),
                values,
                summary,
                error,
            }
        })
        .collect();
    TrendReport {
        feature: feature.to_string(),
        buckets: summaries,
        spearman_rho: spearman(&xs, &ys),
    }
}
