use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{assign_groups, feature_values, welch_t_test, GroupComparison, SubjectRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature: String,
    pub comparison: Option<GroupComparison>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub n_low_risk: usize,
    pub n_higher_risk: usize,
    pub n_excluded: usize,
    pub rows: Vec<ReportRow>,
}

/// Low-risk against higher-risk comparison, one row per feature. A row
/// that cannot be tested carries its error and the table is still built.
pub fn table_report(records: &[SubjectRecord], features: &[&str]) -> TableReport {
    let g = assign_groups(records);
    let rows = features
        .iter()
        .map(|&f| {
            let a = feature_values(&g.low_risk, f);
            let b = feature_values(&g.higher_risk, f);
            match welch_t_test(&a, &b) {
                Ok(c) => ReportRow {
                    feature: f.to_string(),
                    comparison: Some(c),
                    error: None,
                },
                Err(e) => ReportRow {
                    feature: f.to_string(),
                    comparison: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    TableReport {
        n_low_risk: g.low_risk.len(),
        n_higher_risk: g.higher_risk.len(),
        n_excluded: g.excluded.len(),
        rows,
    }
}

impl TableReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Writing to a Vec cannot fail.
        w.write_record([
            "feature",
            "n_low",
            "mean_low",
            "std_low",
            "n_higher",
            "mean_higher",
            "std_higher",
            "t",
            "df",
            "p_value",
            "significance",
            "error",
        ])
        .unwrap();
        for r in &self.rows {
            let rec: Vec<String> = match &r.comparison {
                Some(c) => vec![
                    r.feature.clone(),
                    c.a.n.to_string(),
                    c.a.mean.to_string(),
                    c.a.std.to_string(),
                    c.b.n.to_string(),
                    c.b.mean.to_string(),
                    c.b.std.to_string(),
                    c.t_statistic.to_string(),
                    c.degrees_of_freedom.to_string(),
                    c.p_value.to_string(),
                    c.significance.to_string(),
                    String::new(),
                ],
                None => {
                    let mut v = vec![r.feature.clone()];
                    v.extend(std::iter::repeat_n(String::new(), 10));
                    v.push(r.error.clone().unwrap_or_default());
                    v
                }
            };
            w.write_record(&rec).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    /// Aligned table with mean (std) cells.
    pub fn to_text(&self) -> String {
        let mut rows = vec![[
            "feature".to_string(),
            format!("low risk (n={})", self.n_low_risk),
            format!("higher risk (n={})", self.n_higher_risk),
            "p-value".to_string(),
            "sig".to_string(),
        ]];
        for r in &self.rows {
            rows.push(match &r.comparison {
                Some(c) => [
                    r.feature.clone(),
                    format!("{:.3} ({:.3})", c.a.mean, c.a.std),
                    format!("{:.3} ({:.3})", c.b.mean, c.b.std),
                    format!("{:.3e}", c.p_value),
                    c.significance.to_string(),
                ],
                None => [
                    r.feature.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("error: {}", r.error.as_deref().unwrap_or("")),
                ],
            });
        }
        let widths: Vec<usize> = (0..5)
            .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        let _ = writeln!(out, "excluded (scores 2-3): {}", self.n_excluded);
        out
    }
}
