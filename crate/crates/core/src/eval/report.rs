//! Result tables, the aggregated outcome report, and outcome-curve plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::coding::{CodingTestResult, Phase, TocPoint};
use super::metrics::{tor, TutoringOutcome};
use crate::domain::{FoldAssignment, StudentLevel};
use crate::error::{Error, Result};

/// Method label used for pre-test rows.
pub const PRETEST_METHOD: &str = "pretest";

/// One CSV row per coding test: counts plus per-k metrics.
pub fn results_csv(rows: &[(&str, &CodingTestResult)]) -> Result<String> {
    let ks: BTreeSet<usize> = rows
        .iter()
        .flat_map(|(_, r)| r.ks.iter().copied())
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["method", "task_id", "level", "seed", "phase", "n", "c"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend(ks.iter().map(|k| format!("pass@{k}")));
    header.extend(ks.iter().map(|k| format!("recall@{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (method, r) in rows {
        let m = r.metrics()?;
        let mut rec = vec![
            method.to_string(),
            r.task_id.clone(),
            r.level.to_string(),
            r.seed.to_string(),
            r.phase.to_string(),
            r.n.to_string(),
            r.passes().to_string(),
        ];
        rec.extend(
            ks.iter()
                .map(|k| m.pass.get(k).map(|v| fmt6(*v)).unwrap_or_default()),
        );
        rec.extend(
            ks.iter()
                .map(|k| m.recall.get(k).map(|v| fmt6(*v)).unwrap_or_default()),
        );
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish_csv(w)
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Mean across folds, with the standard deviation across folds when there
/// are at least two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldStat {
    pub mean: f64,
    pub std: Option<f64>,
    pub folds: usize,
}

impl FoldStat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self {
            mean,
            std,
            folds: values.len(),
        }
    }
}

/// One line of the summary table. Metric values are percentages; a `None`
/// rate means the pre-test value was zero and the rate is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// A student level, or `"overall"`.
    pub level: String,
    pub cells: usize,
    pub recall_pre: FoldStat,
    pub recall_post: FoldStat,
    pub recall_tor: Option<f64>,
    pub pass_pre: FoldStat,
    pub pass_post: FoldStat,
    pub pass_tor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub ks: Vec<usize>,
    /// What the ± values range over.
    pub spread_unit: String,
    pub rows: Vec<ReportRow>,
}

type CellKey = (String, StudentLevel, u64);

fn key(r: &CodingTestResult) -> CellKey {
    (r.task_id.clone(), r.level, r.seed)
}

/// Aggregates pre-test and per-method post-test results. Task values are
/// averaged over seeds, fold values over tasks, and the reported value is
/// the mean over folds. Rates compare the aggregated pre and post means.
pub fn build_report(
    pre: &[CodingTestResult],
    post: &BTreeMap<String, Vec<CodingTestResult>>,
    folds: Option<&FoldAssignment>,
) -> Result<OutcomeReport> {
    let mut pre_by_cell: BTreeMap<CellKey, TutoringOutcome> = BTreeMap::new();
    for r in pre {
        if r.phase != Phase::Pre {
            return Err(Error::InvalidInput(format!(
                "task {}: {} result passed as pre-test",
                r.task_id, r.phase
            )));
        }
        pre_by_cell.insert(key(r), r.outcome()?);
    }
    let mut ks: Option<Vec<usize>> = None;
    let mut rows = Vec::new();
    for (method, results) in post {
        let mut cells: Vec<(CellKey, TutoringOutcome, TutoringOutcome)> = Vec::new();
        for r in results {
            if r.phase != Phase::Post {
                return Err(Error::InvalidInput(format!(
                    "task {}: {} result passed as post-test",
                    r.task_id, r.phase
                )));
            }
            match &ks {
                Some(k) if *k != r.ks => {
                    return Err(Error::InvalidInput("results use different k values".into()))
                }
                None => ks = Some(r.ks.clone()),
                _ => {}
            }
            let k = key(r);
            let before = *pre_by_cell.get(&k).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no pre-test for task {} level {} seed {}",
                    k.0, k.1, k.2
                ))
            })?;
            cells.push((k, before, r.outcome()?));
        }
        for level in StudentLevel::ALL.iter().map(Some).chain([None]) {
            let selected: Vec<_> = cells
                .iter()
                .filter(|(k, _, _)| level.is_none_or(|l| k.1 == *l))
                .collect();
            if selected.is_empty() {
                continue;
            }
            rows.push(aggregate(method, level.copied(), &selected, folds)?);
        }
    }
    Ok(OutcomeReport {
        ks: ks.unwrap_or_default(),
        spread_unit: if folds.is_some_and(|f| f.0.len() >= 2) {
            "standard deviation across folds".into()
        } else {
            "none (single fold)".into()
        },
        rows,
    })
}

fn aggregate(
    method: &str,
    level: Option<StudentLevel>,
    cells: &[&(CellKey, TutoringOutcome, TutoringOutcome)],
    folds: Option<&FoldAssignment>,
) -> Result<ReportRow> {
    // fold -> task -> seed values (pre recall, post recall, pre pass, post pass)
    let mut tree: BTreeMap<usize, BTreeMap<&str, Vec<[f64; 4]>>> = BTreeMap::new();
    for (k, pre, post) in cells {
        let fold = match folds {
            Some(f) => f
                .fold_of(&k.0)
                .ok_or_else(|| Error::InvalidInput(format!("task {} is not in any fold", k.0)))?,
            None => 0,
        };
        tree.entry(fold)
            .or_default()
            .entry(k.0.as_str())
            .or_default()
            .push([pre.recall, post.recall, pre.pass, post.pass]);
    }
    let mut per_fold: [Vec<f64>; 4] = Default::default();
    for tasks in tree.values() {
        let mut sums = [0.0; 4];
        for seeds in tasks.values() {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += seeds.iter().map(|v| v[i]).sum::<f64>() / seeds.len() as f64;
            }
        }
        for (i, s) in sums.iter().enumerate() {
            per_fold[i].push(100.0 * s / tasks.len() as f64);
        }
    }
    let [rp, rq, pp, pq] = per_fold.map(|v| FoldStat::of(&v));
    Ok(ReportRow {
        method: method.to_string(),
        level: level.map_or_else(|| "overall".to_string(), |l| l.to_string()),
        cells: cells.len(),
        recall_tor: rate(rp.mean, rq.mean)?,
        pass_tor: rate(pp.mean, pq.mean)?,
        recall_pre: rp,
        recall_post: rq,
        pass_pre: pp,
        pass_post: pq,
    })
}

fn rate(pre: f64, post: f64) -> Result<Option<f64>> {
    match tor(pre, post) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedTor) => Ok(None),
        Err(e) => Err(e),
    }
}

fn stat(s: &FoldStat) -> String {
    match s.std {
        Some(sd) => format!("{:.1} ± {:.1}", s.mean, sd),
        None => format!("{:.1}", s.mean),
    }
}

fn rate_cell(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".into(), |v| format!("{v:.1}"))
}

impl OutcomeReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let ks: Vec<String> = self.ks.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(
            out,
            "Recall and Pass are means of @k over k in {{{}}}, in percent. Spread: {}.\n",
            ks.join(","),
            self.spread_unit
        );
        out.push_str(
            "| Method | Level | Recall (pre) | Recall | Δ%R | Pass (pre) | Pass | Δ%P |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                r.method,
                r.level,
                stat(&r.recall_pre),
                stat(&r.recall_post),
                rate_cell(r.recall_tor),
                stat(&r.pass_pre),
                stat(&r.pass_post),
                rate_cell(r.pass_tor),
            );
        }
        out
    }
}

/// Outcome curve of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCurve {
    pub method: String,
    pub task_id: String,
    pub level: StudentLevel,
    pub seed: u64,
    pub points: Vec<TocPoint>,
}

pub fn toc_csv(curves: &[SessionCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method", "task_id", "level", "seed", "turn", "recall", "pass", "gap",
    ])
    .map_err(csv_err)?;
    for c in curves {
        for p in &c.points {
            let (recall, pass) = p.outcome.map_or((String::new(), String::new()), |o| {
                (fmt6(o.recall), fmt6(o.pass))
            });
            w.write_record([
                c.method.clone(),
                c.task_id.clone(),
                c.level.to_string(),
                c.seed.to_string(),
                p.turn.to_string(),
                recall,
                pass,
                p.error.is_some().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

/// Mean curve per method over turns 1..=max length. A session that ended
/// before turn t contributes its last value; gaps contribute nothing.
pub fn mean_curves(curves: &[SessionCurve]) -> BTreeMap<String, Vec<Option<TutoringOutcome>>> {
    let horizon = curves.iter().map(|c| c.points.len()).max().unwrap_or(0);
    let mut by_method: BTreeMap<String, Vec<&SessionCurve>> = BTreeMap::new();
    for c in curves {
        by_method.entry(c.method.clone()).or_default().push(c);
    }
    by_method
        .into_iter()
        .map(|(method, sessions)| {
            let series = (0..horizon)
                .map(|t| {
                    let values: Vec<TutoringOutcome> = sessions
                        .iter()
                        .filter_map(|s| s.points.get(t.min(s.points.len().saturating_sub(1))))
                        .filter_map(|p| p.outcome)
                        .collect();
                    (!values.is_empty()).then(|| TutoringOutcome {
                        recall: values.iter().map(|v| v.recall).sum::<f64>() / values.len() as f64,
                        pass: values.iter().map(|v| v.pass).sum::<f64>() / values.len() as f64,
                    })
                })
                .collect();
            (method, series)
        })
        .collect()
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Line chart of mean Pass and Recall (percent) against turn, one colour
/// per method, Pass solid and Recall dashed. Gaps break the line.
pub fn toc_svg(means: &BTreeMap<String, Vec<Option<TutoringOutcome>>>) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 160.0, 30.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let turns = means.values().map(Vec::len).max().unwrap_or(0).max(1);
    let x = |t: usize| {
        if turns == 1 {
            left + plot_w / 2.0
        } else {
            left + plot_w * (t - 1) as f64 / (turns - 1) as f64
        }
    };
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left + plot_w,
            left - 6.0,
            yy + 4.0,
            (v * 100.0).round()
        );
    }
    for t in 1..=turns {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            x(t),
            top + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Turn</text>"#,
        left + plot_w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">Outcome (%)</text>"#,
        top + plot_h / 2.0
    );
    for (i, (method, series)) in means.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for (metric, dash) in [("pass", ""), ("recall", r#" stroke-dasharray="6 4""#)] {
            let mut segment: Vec<(f64, f64)> = Vec::new();
            let flush = |seg: &mut Vec<(f64, f64)>, s: &mut String| {
                match seg.as_slice() {
                    [] => {}
                    [(cx, cy)] => {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3" fill="{colour}"/>"#
                        );
                    }
                    pts => {
                        let pts: Vec<String> = pts
                            .iter()
                            .map(|(px, py)| format!("{px:.1},{py:.1}"))
                            .collect();
                        let _ = writeln!(
                            s,
                            r#"<polyline fill="none" stroke="{colour}" stroke-width="2"{dash} points="{}"/>"#,
                            pts.join(" ")
                        );
                    }
                }
                seg.clear();
            };
            for (t, point) in series.iter().enumerate() {
                match point {
                    Some(o) => {
                        let v = if metric == "pass" { o.pass } else { o.recall };
                        segment.push((x(t + 1), y(v)));
                    }
                    None => flush(&mut segment, &mut s),
                }
            }
            flush(&mut segment, &mut s);
        }
        let ly = top + 16.0 + 36.0 * i as f64;
        let lx = left + plot_w + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{} pass</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            xml_escape(method)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{colour}" stroke-width="2" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}">{} recall</text>"#,
            ly + 16.0,
            lx + 24.0,
            ly + 16.0,
            lx + 30.0,
            ly + 20.0,
            xml_escape(method)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::TestCause;

    fn result(
        task: &str,
        level: StudentLevel,
        phase: Phase,
        passes: usize,
        recall_hits: usize,
    ) -> CodingTestResult {
        let n = 10;
        let refs: Vec<String> = vec!["a.f".into(), "a.g".into()];
        let hit: BTreeSet<String> = refs.iter().take(recall_hits).cloned().collect();
        CodingTestResult {
            task_id: task.into(),
            level,
            seed: 0,
            phase,
            n,
            ks: vec![1, 3, 5, 10],
            programs: vec!["pass".into(); n],
            pass_vector: (0..n).map(|i| i < passes).collect(),
            causes: (0..n)
                .map(|i| {
                    if i < passes {
                        TestCause::Passed
                    } else {
                        TestCause::TestFailure
                    }
                })
                .collect(),
            extracted_deps: vec![hit; n],
            reference_deps: refs,
            usage: Default::default(),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn report_rows_and_rates() {
        let pre = vec![
            result("a", StudentLevel::Low, Phase::Pre, 0, 1),
            result("b", StudentLevel::Low, Phase::Pre, 10, 1),
        ];
        let post: BTreeMap<_, _> = [(
            "traver".to_string(),
            vec![
                result("a", StudentLevel::Low, Phase::Post, 10, 2),
                result("b", StudentLevel::Low, Phase::Post, 10, 2),
            ],
        )]
        .into();
        let rep = build_report(&pre, &post, None).unwrap();
        assert_eq!(rep.rows.len(), 2);
        let low = &rep.rows[0];
        assert_eq!(low.level, "low");
        assert!((low.pass_pre.mean - 50.0).abs() < 1e-9);
        assert!((low.pass_post.mean - 100.0).abs() < 1e-9);
        assert!((low.pass_tor.unwrap() - 100.0).abs() < 1e-9);
        assert!((low.recall_tor.unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(rep.rows[1].level, "overall");
        assert!(rep
            .to_markdown()
            .contains("| traver | low | 50.0 | 100.0 | 100.0 |"));
    }

    #[test]
    fn zero_pretest_rate_is_undefined() {
        let pre = vec![result("a", StudentLevel::High, Phase::Pre, 0, 0)];
        let post: BTreeMap<_, _> = [(
            "v".to_string(),
            vec![result("a", StudentLevel::High, Phase::Post, 5, 1)],
        )]
        .into();
        let rep = build_report(&pre, &post, None).unwrap();
        assert_eq!(rep.rows[0].pass_tor, None);
        assert!(rep.to_markdown().contains("undefined"));
    }

    #[test]
    fn phases_are_not_mixed() {
        let pre = vec![result("a", StudentLevel::Low, Phase::Post, 0, 0)];
        assert!(build_report(&pre, &BTreeMap::new(), None).is_err());
        let post: BTreeMap<_, _> = [(
            "v".to_string(),
            vec![result("a", StudentLevel::Low, Phase::Pre, 1, 1)],
        )]
        .into();
        assert!(build_report(&[], &post, None).is_err());
    }

    #[test]
    fn fold_spread() {
        assert_eq!(FoldStat::of(&[2.0]).std, None);
        let s = FoldStat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn curves_carry_forward_and_gap() {
        let o = |v: f64| Some(TutoringOutcome { recall: v, pass: v });
        let curve = |points: Vec<Option<TutoringOutcome>>| SessionCurve {
            method: "m".into(),
            task_id: "t".into(),
            level: StudentLevel::Low,
            seed: 0,
            points: points
                .into_iter()
                .enumerate()
                .map(|(i, outcome)| TocPoint {
                    turn: i + 1,
                    error: outcome.is_none().then(|| "x".to_string()),
                    outcome,
                })
                .collect(),
        };
        let means = mean_curves(&[
            curve(vec![o(0.2), o(0.4), o(0.6)]),
            curve(vec![o(0.0), None]),
        ]);
        let m = &means["m"];
        assert_eq!(m.len(), 3);
        assert!((m[0].unwrap().pass - 0.1).abs() < 1e-12);
        assert!((m[1].unwrap().pass - 0.4).abs() < 1e-12);
        assert!((m[2].unwrap().pass - 0.6).abs() < 1e-12);
        let svg = toc_svg(&means);
        assert!(
            svg.starts_with("<svg")
                && svg.contains("polyline")
                && svg.trim_end().ends_with("</svg>")
        );
    }
}
