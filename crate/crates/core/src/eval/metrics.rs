//! Per-episode rows, aggregate metrics and the text table.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{EvalMode, ScenarioKind};
use crate::agent::Termination;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    /// `None` when no memory graph was available.
    pub semantic: Option<bool>,
    pub bm25: bool,
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub success: bool,
    pub path_length_m: f64,
    pub shortest_path_m: f64,
    pub steps: usize,
    pub grounded_object_id: Option<String>,
    pub grounding_correct: bool,
    pub category_match: bool,
    pub recall: RecallRow,
    pub termination: Termination,
}

impl EpisodeRow {
    /// S * l / max(p, l).
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let denom = self.path_length_m.max(self.shortest_path_m);
        if denom > 0.0 {
            self.shortest_path_m / denom
        } else {
            1.0
        }
    }
}

/// Metrics that are undefined for an empty suite serialize as "n/a".
mod na {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(f64),
        Missing(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("n/a"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(x) => Ok(Some(x)),
            Repr::Missing(s) if s == "n/a" => Ok(None),
            Repr::Missing(s) => Err(serde::de::Error::custom(format!("expected a number or \"n/a\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EvalMode,
    pub kind: ScenarioKind,
    pub n: usize,
    #[serde(with = "na")]
    pub sr: Option<f64>,
    #[serde(with = "na")]
    pub spl: Option<f64>,
    #[serde(with = "na")]
    pub cm: Option<f64>,
    #[serde(with = "na")]
    pub mean_path_length_m: Option<f64>,
    pub recall_k: usize,
    #[serde(with = "na")]
    pub recall_semantic: Option<f64>,
    #[serde(with = "na")]
    pub recall_bm25: Option<f64>,
    #[serde(with = "na")]
    pub recall_dense: Option<f64>,
    pub rows: Vec<EpisodeRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn rate(values: impl Iterator<Item = bool>) -> Option<f64> {
    mean(values.map(|b| if b { 1.0 } else { 0.0 }))
}

pub fn aggregate(mode: EvalMode, kind: ScenarioKind, k: usize, rows: Vec<EpisodeRow>) -> MetricsReport {
    let semantic: Vec<bool> = rows.iter().filter_map(|r| r.recall.semantic).collect();
    MetricsReport {
        mode,
        kind,
        n: rows.len(),
        sr: rate(rows.iter().map(|r| r.success)),
        spl: mean(rows.iter().map(EpisodeRow::spl_term)),
        cm: rate(rows.iter().map(|r| r.category_match)),
        mean_path_length_m: mean(rows.iter().map(|r| r.path_length_m)),
        recall_k: k,
        recall_semantic: if semantic.len() == rows.len() {
            rate(semantic.into_iter())
        } else {
            None
        },
        recall_bm25: rate(rows.iter().map(|r| r.recall.bm25)),
        recall_dense: rate(rows.iter().map(|r| r.recall.dense)),
        rows,
    }
}

/// SPL straight from its definition, with no shared code path.
pub fn brute_force_spl(episodes: &[(bool, f64, f64)]) -> f64 {
    let mut total = 0.0;
    for &(success, p, l) in episodes {
        if success {
            total += l / if p > l { p } else { l };
        }
    }
    total / episodes.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub format_version: u32,
    pub seed: u64,
    pub reports: Vec<MetricsReport>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Fixed-width table with one row per report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let k = reports.first().map_or(crate::retrieval::DEFAULT_K, |r| r.recall_k);
    let header = [
        "mode".to_string(),
        "kind".to_string(),
        "N".to_string(),
        "SR".to_string(),
        "SPL".to_string(),
        "CM".to_string(),
        format!("recall@{k} (sem/bm25/dense)"),
    ];
    let body: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.mode.to_string(),
                r.kind.to_string(),
                r.n.to_string(),
                cell(r.sr),
                cell(r.spl),
                cell(r.cm),
                format!("{}/{}/{}", cell(r.recall_semantic), cell(r.recall_bm25), cell(r.recall_dense)),
            ]
        })
        .collect();
    let mut widths = header.clone().map(|h| h.len());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String; 7]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(success: bool, p: f64, l: f64) -> EpisodeRow {
        EpisodeRow {
            scenario_id: "x".into(),
            kind: ScenarioKind::Distractor,
            success,
            path_length_m: p,
            shortest_path_m: l,
            steps: 1,
            grounded_object_id: None,
            grounding_correct: false,
            category_match: false,
            recall: RecallRow {
                semantic: Some(true),
                bm25: false,
                dense: true,
            },
            termination: Termination::Stopped,
        }
    }

    #[test]
    fn spl_single_episode() {
        let r = aggregate(EvalMode::Polar, ScenarioKind::Distractor, 5, vec![row(true, 10.0, 8.0)]);
        assert_eq!(r.spl, Some(0.8));
        assert_eq!(r.sr, Some(1.0));
    }

    #[test]
    fn failures_contribute_zero() {
        let r = aggregate(
            EvalMode::Polar,
            ScenarioKind::Distractor,
            5,
            vec![row(true, 8.0, 8.0), row(false, 3.0, 8.0)],
        );
        assert_eq!(r.sr, Some(0.5));
        assert_eq!(r.spl, Some(0.5));
        assert_eq!(r.recall_bm25, Some(0.0));
        assert_eq!(r.recall_dense, Some(1.0));
    }

    #[test]
    fn empty_report_is_na() {
        let r = aggregate(EvalMode::NoPrior, ScenarioKind::Distractor, 5, vec![]);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"sr\":\"n/a\""));
        assert!(json.contains("\"n\":0"));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let table = render_table(&[r]);
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().contains("n/a/n/a/n/a"));
    }

    #[test]
    fn table_is_aligned() {
        let a = aggregate(EvalMode::Polar, ScenarioKind::Distractor, 5, vec![row(true, 10.0, 8.0)]);
        let b = aggregate(EvalMode::NoPrior, ScenarioKind::TemporalObject, 5, vec![row(false, 1.0, 8.0)]);
        let t = render_table(&[a, b]);
        let lines: Vec<&str> = t.lines().collect();
        let col = lines[0].find("SR").unwrap();
        assert_eq!(&lines[1][col..col + 5], "1.000");
        assert_eq!(&lines[2][col..col + 5], "0.000");
    }
}
