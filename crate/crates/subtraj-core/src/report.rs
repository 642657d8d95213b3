//! Thinking-efficacy statistics and before/after delta reports.
//!
//! Statistics work over a per-record view (token count per subtrajectory,
//! plus optional suboptimal flags), so they apply equally to training
//! corpora and to inference outputs, and to original or revised thinking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::CountDistribution;

/// One record's contribution to the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    /// Token count of each subtrajectory, in order.
    pub tokens_per_sub: Vec<usize>,
    /// Per-subtrajectory suboptimal flags, when the corpus is judged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suboptimal: Option<Vec<bool>>,
}

/// Corpus-level thinking-efficacy statistics.
///
/// `mean_tokens_per_subtrajectory` is the pooled ratio Σtokens/Σsubs;
/// the per-record mean of ratios is also emitted since the two differ.
/// Suboptimal statistics are `None` when no judged record was seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyStats {
    pub records: usize,
    pub mean_total_tokens: f64,
    pub mean_subtrajectories: f64,
    pub mean_tokens_per_subtrajectory: f64,
    pub mean_tokens_per_subtrajectory_per_record: f64,
    pub suboptimal_count: Option<u64>,
    pub suboptimal_rate: Option<f64>,
    pub count_distribution: CountDistribution,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("cannot compute statistics over an empty corpus")]
    EmptyCorpus,
    #[error("record {index} has no subtrajectories")]
    EmptyRecord { index: usize },
}

/// Single-pass exact aggregation over record views.
pub fn corpus_stats<I: IntoIterator<Item = RecordView>>(
    views: I,
) -> Result<EfficacyStats, ReportError> {
    let mut records = 0usize;
    let mut total_tokens = 0u64;
    let mut total_subs = 0u64;
    let mut ratio_sum = 0.0f64;
    let mut suboptimal_count = 0u64;
    let mut judged_subs = 0u64;
    let mut any_judged = false;
    let mut counts = Vec::new();

    for view in views {
        if view.tokens_per_sub.is_empty() {
            return Err(ReportError::EmptyRecord { index: records });
        }
        records += 1;
        let tokens: u64 = view.tokens_per_sub.iter().map(|&t| t as u64).sum();
        let subs = view.tokens_per_sub.len() as u64;
        total_tokens += tokens;
        total_subs += subs;
        ratio_sum += tokens as f64 / subs as f64;
        counts.push(view.tokens_per_sub.len());
        if let Some(flags) = &view.suboptimal {
            any_judged = true;
            judged_subs += flags.len() as u64;
            suboptimal_count += flags.iter().filter(|&&b| b).count() as u64;
        }
    }
    if records == 0 {
        return Err(ReportError::EmptyCorpus);
    }
    let count_distribution =
        CountDistribution::from_counts(counts).expect("records is nonzero");
    Ok(EfficacyStats {
        records,
        mean_total_tokens: total_tokens as f64 / records as f64,
        mean_subtrajectories: total_subs as f64 / records as f64,
        mean_tokens_per_subtrajectory: total_tokens as f64 / total_subs as f64,
        mean_tokens_per_subtrajectory_per_record: ratio_sum / records as f64,
        suboptimal_count: any_judged.then_some(suboptimal_count),
        suboptimal_rate: (any_judged && judged_subs > 0)
            .then(|| suboptimal_count as f64 / judged_subs as f64),
        count_distribution,
    })
}

/// Relative change `(after − before) / before`; undefined when `before` is 0.
pub fn pct_change(before: f64, after: f64) -> Option<f64> {
    (before != 0.0).then(|| (after - before) / before)
}

/// One metric's before/after values and relative change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub before: f64,
    pub after: f64,
    /// Relative change; `None` (with `note`) when the baseline is zero.
    pub pct_change: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MetricDelta {
    fn new(before: f64, after: f64) -> Self {
        let change = pct_change(before, after);
        MetricDelta {
            before,
            after,
            pct_change: change,
            note: change
                .is_none()
                .then(|| "undefined: baseline is zero".to_string()),
        }
    }
}

/// Before/after comparison across the efficacy metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub mean_total_tokens: MetricDelta,
    pub mean_subtrajectories: MetricDelta,
    pub mean_tokens_per_subtrajectory: MetricDelta,
    pub suboptimal_count: Option<MetricDelta>,
    pub suboptimal_rate: Option<MetricDelta>,
}

/// Percentage change per metric between two corpora.
pub fn compare(before: &EfficacyStats, after: &EfficacyStats) -> DeltaReport {
    let optional = |b: Option<f64>, a: Option<f64>| match (b, a) {
        (Some(b), Some(a)) => Some(MetricDelta::new(b, a)),
        _ => None,
    };
    DeltaReport {
        mean_total_tokens: MetricDelta::new(before.mean_total_tokens, after.mean_total_tokens),
        mean_subtrajectories: MetricDelta::new(
            before.mean_subtrajectories,
            after.mean_subtrajectories,
        ),
        mean_tokens_per_subtrajectory: MetricDelta::new(
            before.mean_tokens_per_subtrajectory,
            after.mean_tokens_per_subtrajectory,
        ),
        suboptimal_count: optional(
            before.suboptimal_count.map(|c| c as f64),
            after.suboptimal_count.map(|c| c as f64),
        ),
        suboptimal_rate: optional(before.suboptimal_rate, after.suboptimal_rate),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Json,
    MarkdownTable,
    Csv,
}

/// JSON schema tag for stats reports.
pub const STATS_SCHEMA: &str = "efficacy-stats/v1";
/// JSON schema tag for delta reports.
pub const DELTA_SCHEMA: &str = "efficacy-delta/v1";

/// Render statistics. Identical input renders byte-identical output.
pub fn render_stats(stats: &EfficacyStats, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut value = serde_json::to_value(stats).expect("stats serialize");
            let obj = value.as_object_mut().unwrap();
            obj.insert("schema".into(), STATS_SCHEMA.into());
            serde_json::to_string_pretty(&value).expect("stats render") + "\n"
        }
        ReportFormat::MarkdownTable => {
            let mut out = String::from("| metric | value |\n| --- | --- |\n");
            for (name, value) in stats_rows(stats) {
                out.push_str(&format!("| {name} | {value} |\n"));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("metric,value\n");
            for (name, value) in stats_rows(stats) {
                out.push_str(&format!("{name},{value}\n"));
            }
            out
        }
    }
}

fn stats_rows(stats: &EfficacyStats) -> Vec<(String, String)> {
    let opt_u64 = |v: Option<u64>| v.map_or("n/a".to_string(), |x| x.to_string());
    let opt_f64 = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x}"));
    let mut rows = vec![
        ("records".to_string(), stats.records.to_string()),
        (
            "mean_total_tokens".to_string(),
            format!("{}", stats.mean_total_tokens),
        ),
        (
            "mean_subtrajectories".to_string(),
            format!("{}", stats.mean_subtrajectories),
        ),
        (
            "mean_tokens_per_subtrajectory".to_string(),
            format!("{}", stats.mean_tokens_per_subtrajectory),
        ),
        (
            "mean_tokens_per_subtrajectory_per_record".to_string(),
            format!("{}", stats.mean_tokens_per_subtrajectory_per_record),
        ),
        (
            "suboptimal_count".to_string(),
            opt_u64(stats.suboptimal_count),
        ),
        (
            "suboptimal_rate".to_string(),
            opt_f64(stats.suboptimal_rate),
        ),
    ];
    for (count, freq) in stats.count_distribution.as_map() {
        rows.push((format!("count_freq[{count}]"), format!("{freq}")));
    }
    rows
}

/// Render a delta report. Identical input renders byte-identical output.
pub fn render_delta(delta: &DeltaReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut value = serde_json::to_value(delta).expect("delta serialize");
            let obj = value.as_object_mut().unwrap();
            obj.insert("schema".into(), DELTA_SCHEMA.into());
            serde_json::to_string_pretty(&value).expect("delta render") + "\n"
        }
        ReportFormat::MarkdownTable => {
            let mut out =
                String::from("| metric | before | after | change |\n| --- | --- | --- | --- |\n");
            for (name, d) in delta_rows(delta) {
                out.push_str(&format!(
                    "| {name} | {} | {} | {} |\n",
                    d.before,
                    d.after,
                    render_change(&d)
                ));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("metric,before,after,pct_change\n");
            for (name, d) in delta_rows(delta) {
                out.push_str(&format!(
                    "{name},{},{},{}\n",
                    d.before,
                    d.after,
                    d.pct_change.map_or("n/a".into(), |p| format!("{p}"))
                ));
            }
            out
        }
    }
}

fn render_change(d: &MetricDelta) -> String {
    match d.pct_change {
        Some(p) => format!("{:+.2}%", p * 100.0),
        None => d.note.clone().unwrap_or_else(|| "n/a".into()),
    }
}

fn delta_rows(delta: &DeltaReport) -> Vec<(String, MetricDelta)> {
    let mut rows = vec![
        ("mean_total_tokens".to_string(), delta.mean_total_tokens.clone()),
        (
            "mean_subtrajectories".to_string(),
            delta.mean_subtrajectories.clone(),
        ),
        (
            "mean_tokens_per_subtrajectory".to_string(),
            delta.mean_tokens_per_subtrajectory.clone(),
        ),
    ];
    if let Some(d) = &delta.suboptimal_count {
        rows.push(("suboptimal_count".to_string(), d.clone()));
    }
    if let Some(d) = &delta.suboptimal_rate {
        rows.push(("suboptimal_rate".to_string(), d.clone()));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(tokens: &[usize]) -> RecordView {
        RecordView {
            tokens_per_sub: tokens.to_vec(),
            suboptimal: None,
        }
    }

    #[test]
    fn hand_aggregates() {
        // (400 tokens, 4 subs) and (600 tokens, 6 subs):
        // means 500 tokens, 5 subs, pooled 1000/10 = 100 tokens per sub.
        let stats = corpus_stats([view(&[100; 4]), view(&[100; 6])]).unwrap();
        assert_eq!(stats.records, 2);
        assert_eq!(stats.mean_total_tokens, 500.0);
        assert_eq!(stats.mean_subtrajectories, 5.0);
        assert_eq!(stats.mean_tokens_per_subtrajectory, 100.0);
        assert_eq!(stats.mean_tokens_per_subtrajectory_per_record, 100.0);
        assert_eq!(stats.suboptimal_count, None);
        assert_eq!(stats.suboptimal_rate, None);
        assert_eq!(stats.count_distribution.freq(4), 0.5);
        assert_eq!(stats.count_distribution.freq(6), 0.5);
    }

    #[test]
    fn pooled_differs_from_mean_of_ratios() {
        // (10 tokens, 1 sub) and (10 tokens, 10 subs):
        // pooled 20/11, mean of ratios (10 + 1)/2.
        let stats = corpus_stats([view(&[10]), view(&[1; 10])]).unwrap();
        assert!((stats.mean_tokens_per_subtrajectory - 20.0 / 11.0).abs() < 1e-12);
        assert!((stats.mean_tokens_per_subtrajectory_per_record - 5.5).abs() < 1e-12);
    }

    #[test]
    fn suboptimal_rates() {
        let all_good = RecordView {
            tokens_per_sub: vec![5, 5],
            suboptimal: Some(vec![false, false]),
        };
        let stats = corpus_stats([all_good]).unwrap();
        assert_eq!(stats.suboptimal_count, Some(0));
        assert_eq!(stats.suboptimal_rate, Some(0.0));

        let degenerate = RecordView {
            tokens_per_sub: vec![7],
            suboptimal: Some(vec![true]),
        };
        let stats = corpus_stats([degenerate]).unwrap();
        assert_eq!(stats.suboptimal_count, Some(1));
        assert_eq!(stats.suboptimal_rate, Some(1.0));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(corpus_stats(std::iter::empty()), Err(ReportError::EmptyCorpus));
    }

    #[test]
    fn published_style_percentage_deltas() {
        // Pure arithmetic on externally given totals, within ±0.05 points.
        let close = |a: f64, b: f64| (a - b).abs() < 0.05;
        assert!(close(pct_change(8586.0, 7247.0).unwrap() * 100.0, -15.6));
        assert!(close(pct_change(14234.0, 10554.0).unwrap() * 100.0, -25.9));
        assert!(close(pct_change(12.45, 8.72).unwrap() * 100.0, -29.96));
        assert_eq!(pct_change(0.0, 5.0), None);
        assert_eq!(pct_change(2.0, 2.0), Some(0.0));
    }

    #[test]
    fn compare_identity_and_zero_baseline() {
        let stats = corpus_stats([view(&[10, 20]), view(&[5])]).unwrap();
        let delta = compare(&stats, &stats);
        assert_eq!(delta.mean_total_tokens.pct_change, Some(0.0));
        assert_eq!(delta.mean_subtrajectories.pct_change, Some(0.0));

        let zeroish = EfficacyStats {
            mean_total_tokens: 0.0,
            ..stats.clone()
        };
        let delta = compare(&zeroish, &stats);
        assert_eq!(delta.mean_total_tokens.pct_change, None);
        assert!(delta.mean_total_tokens.note.as_deref().unwrap().contains("zero"));
    }

    #[test]
    fn renders_are_deterministic_and_complete() {
        let judged = RecordView {
            tokens_per_sub: vec![10, 30],
            suboptimal: Some(vec![true, false]),
        };
        let stats = corpus_stats([judged, view(&[20])]).unwrap();
        let a = render_stats(&stats, ReportFormat::Json);
        let b = render_stats(&stats, ReportFormat::Json);
        assert_eq!(a.as_bytes(), b.as_bytes());
        for field in [
            "mean_total_tokens",
            "mean_subtrajectories",
            "mean_tokens_per_subtrajectory",
            "suboptimal_count",
            "suboptimal_rate",
            "count_distribution",
        ] {
            assert!(a.contains(field), "missing {field} in {a}");
        }
        assert!(a.contains(STATS_SCHEMA));

        let md = render_stats(&stats, ReportFormat::MarkdownTable);
        assert!(md.starts_with("| metric |"));
        let csv = render_stats(&stats, ReportFormat::Csv);
        assert!(csv.starts_with("metric,value\n"));
    }

    #[test]
    fn delta_render_includes_undefined_note_as_null_plus_reason() {
        let stats = corpus_stats([view(&[10, 20])]).unwrap();
        let zeroish = EfficacyStats {
            mean_total_tokens: 0.0,
            ..stats.clone()
        };
        let delta = compare(&zeroish, &stats);
        let json = render_delta(&delta, ReportFormat::Json);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["mean_total_tokens"]["pct_change"].is_null());
        assert!(value["mean_total_tokens"]["note"]
            .as_str()
            .unwrap()
            .contains("zero"));
        assert_eq!(value["schema"], DELTA_SCHEMA);
    }

    #[test]
    fn matches_naive_reference_on_larger_corpus() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let views: Vec<RecordView> = (0..10_000)
            .map(|_| {
                let k = rng.gen_range(1..=12);
                RecordView {
                    tokens_per_sub: (0..k).map(|_| rng.gen_range(1..500)).collect(),
                    suboptimal: Some((0..k).map(|_| rng.gen()).collect()),
                }
            })
            .collect();
        // Naive reference, written differently from the implementation.
        let n = views.len() as f64;
        let per_record_tokens: Vec<f64> = views
            .iter()
            .map(|v| v.tokens_per_sub.iter().sum::<usize>() as f64)
            .collect();
        let per_record_subs: Vec<f64> = views.iter().map(|v| v.tokens_per_sub.len() as f64).collect();
        let ref_mean_tokens = per_record_tokens.iter().sum::<f64>() / n;
        let ref_mean_subs = per_record_subs.iter().sum::<f64>() / n;
        let ref_pooled =
            per_record_tokens.iter().sum::<f64>() / per_record_subs.iter().sum::<f64>();
        let ref_subopt: u64 = views
            .iter()
            .flat_map(|v| v.suboptimal.as_ref().unwrap())
            .filter(|&&b| b)
            .count() as u64;

        let stats = corpus_stats(views.clone()).unwrap();
        assert!((stats.mean_total_tokens - ref_mean_tokens).abs() < 1e-9);
        assert!((stats.mean_subtrajectories - ref_mean_subs).abs() < 1e-9);
        assert!((stats.mean_tokens_per_subtrajectory - ref_pooled).abs() < 1e-9);
        assert_eq!(stats.suboptimal_count, Some(ref_subopt));
        let freq_sum: f64 = stats.count_distribution.as_map().values().sum();
        assert!((freq_sum - 1.0).abs() < 1e-12);
    }
}
