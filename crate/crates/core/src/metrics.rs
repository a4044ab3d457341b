//! Navigation metrics, frame-level SELD scores and factor curves computed
//! from episode traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::acoustics::STEP_SECONDS;
use crate::dataset::EpisodeSpec;
use crate::descriptor::Accddoa;
use crate::env::{Condition, EpisodeTrace, Termination};
use crate::error::{Error, Result};
use crate::geometry::ActionKind;

/// Angular tolerance for a location-aware true positive, degrees.
pub const LOCATION_TOLERANCE_DEG: f64 = 20.0;
/// Reported when no class-correct detection exists.
pub const EMPTY_LE_DEG: f64 = 180.0;
pub const EMPTY_RDE: f64 = 1.0;

pub const DEFAULT_RATIO_EDGES: [f64; 12] = [
    0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 10.0,
];
pub const DEFAULT_GEODESIC_EDGES: [f64; 9] = [4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavMetrics {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub sna: f64,
    pub dtg: f64,
    pub sws: f64,
    pub dsr: f64,
}

/// Whether the final action of a successful episode came after the goal
/// stopped sounding (or before it started).
fn stopped_while_silent(trace: &EpisodeTrace) -> bool {
    let s = &trace.summary;
    trace.steps.last().is_some_and(|step| {
        step.action == ActionKind::Stop
            && (step.t < s.onset_step || step.t >= s.onset_step + s.active_steps)
    })
}

pub fn nav_metrics(traces: &[EpisodeTrace]) -> NavMetrics {
    let n = traces.len();
    if n == 0 {
        return NavMetrics {
            episodes: 0,
            sr: 0.0,
            spl: 0.0,
            sna: 0.0,
            dtg: 0.0,
            sws: 0.0,
            dsr: 0.0,
        };
    }
    let (mut sr, mut spl, mut sna, mut dtg, mut sws, mut dsr) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for t in traces {
        let s = &t.summary;
        if s.success() {
            let l = s.geodesic_start_goal;
            let no = s.oracle_actions as f64;
            sr += 1.0;
            spl += l / s.path_length.max(l);
            sna += no / no.max(s.num_actions as f64);
            if stopped_while_silent(t) {
                sws += 1.0;
            }
        }
        if s.termination == Termination::StoppedAtDistractor {
            dsr += 1.0;
        }
        dtg += s.dtg;
    }
    let k = n as f64;
    NavMetrics {
        episodes: n,
        sr: sr / k,
        spl: spl / k,
        sna: sna / k,
        dtg: dtg / k,
        sws: sws / k,
        dsr: dsr / k,
    }
}

/// Checks that every trace belongs to a known episode and agrees with it.
pub fn check_pairing(traces: &[EpisodeTrace], specs: &[EpisodeSpec]) -> Result<()> {
    let by_id: BTreeMap<&str, &EpisodeSpec> = specs.iter().map(|s| (s.id.as_str(), s)).collect();
    for t in traces {
        let s = &t.summary;
        let spec = by_id
            .get(s.episode_id.as_str())
            .ok_or_else(|| Error::Config(format!("trace for unknown episode {}", s.episode_id)))?;
        if spec.oracle_actions != s.oracle_actions
            || spec.geodesic_start_goal != s.geodesic_start_goal
            || spec.duration_s != s.duration_s
        {
            return Err(Error::Config(format!(
                "trace for {} disagrees with its episode spec",
                s.episode_id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Sounding,
    Silent,
}

impl Period {
    pub fn contains(self, t: usize, onset_step: usize, active_steps: usize) -> bool {
        let end = onset_step + active_steps;
        match self {
            Period::Sounding => t >= onset_step && t < end,
            Period::Silent => t >= end,
        }
    }
}

/// Per-category tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CategoryCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub n_ref: usize,
    pub cd: usize,
    pub angle_sum: f64,
    pub rde_sum: f64,
}

/// Tallies accumulated over a set of steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeldCounts {
    pub categories: Vec<CategoryCounts>,
    pub substitutions: usize,
}

fn angle_between(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 180.0;
    }
    let dot = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

impl SeldCounts {
    pub fn new(num_categories: usize) -> Self {
        Self {
            categories: vec![CategoryCounts::default(); num_categories],
            substitutions: 0,
        }
    }

    /// Scores one step.
    pub fn add_step(&mut self, pred: &Accddoa, truth: &Accddoa) -> Result<()> {
        let c = self.categories.len();
        if pred.tracks.len() != c || truth.tracks.len() != c {
            return Err(Error::Shape(format!(
                "SELD step with {} predicted and {} reference categories, expected {c}",
                pred.tracks.len(),
                truth.tracks.len()
            )));
        }
        let (mut wrong_class, mut missed) = (0, 0);
        for (k, counts) in self.categories.iter_mut().enumerate() {
            let p = &pred.tracks[k];
            let r = &truth.tracks[k];
            if r.active {
                counts.n_ref += 1;
            }
            match (p.active, r.active) {
                (true, true) => {
                    let err = angle_between(&p.doa, &r.doa);
                    let d_ref = r.distance_m();
                    counts.cd += 1;
                    counts.angle_sum += err;
                    counts.rde_sum += if d_ref > 0.0 {
                        (p.distance_m() - d_ref).abs() / d_ref
                    } else {
                        EMPTY_RDE
                    };
                    if err <= LOCATION_TOLERANCE_DEG {
                        counts.tp += 1;
                    } else {
                        counts.fp += 1;
                    }
                }
                (true, false) => {
                    counts.fp += 1;
                    wrong_class += 1;
                }
                (false, true) => {
                    counts.fn_ += 1;
                    missed += 1;
                }
                (false, false) => {}
            }
        }
        self.substitutions += wrong_class.min(missed);
        Ok(())
    }

    pub fn merge(&mut self, other: &SeldCounts) -> Result<()> {
        if other.categories.len() != self.categories.len() {
            return Err(Error::Shape(
                "merging SELD counts of different category sets".into(),
            ));
        }
        for (a, b) in self.categories.iter_mut().zip(&other.categories) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
            a.n_ref += b.n_ref;
            a.cd += b.cd;
            a.angle_sum += b.angle_sum;
            a.rde_sum += b.rde_sum;
        }
        self.substitutions += other.substitutions;
        Ok(())
    }

    pub fn metrics(&self) -> SeldMetrics {
        let total = |f: fn(&CategoryCounts) -> usize| self.categories.iter().map(f).sum::<usize>();
        let n_ref = total(|c| c.n_ref);
        let cd = total(|c| c.cd);
        let present: Vec<&CategoryCounts> =
            self.categories.iter().filter(|c| c.n_ref > 0).collect();
        let er = if n_ref == 0 {
            0.0
        } else {
            (total(|c| c.fp) + total(|c| c.fn_) - self.substitutions) as f64 / n_ref as f64
        };
        let macro_avg = |f: &dyn Fn(&CategoryCounts) -> f64| {
            if present.is_empty() {
                0.0
            } else {
                present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
            }
        };
        SeldMetrics {
            er,
            f: macro_avg(&|c| {
                let den = 2 * c.tp + c.fp + c.fn_;
                if den == 0 {
                    0.0
                } else {
                    2.0 * c.tp as f64 / den as f64
                }
            }),
            le_cd: macro_avg(&|c| {
                if c.cd == 0 {
                    EMPTY_LE_DEG
                } else {
                    c.angle_sum / c.cd as f64
                }
            }),
            lr_cd: macro_avg(&|c| c.cd as f64 / c.n_ref as f64),
            rde: macro_avg(&|c| {
                if c.cd == 0 {
                    EMPTY_RDE
                } else {
                    c.rde_sum / c.cd as f64
                }
            }),
            cd_count: cd,
            ref_count: n_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeldMetrics {
    pub er: f64,
    pub f: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
    pub rde: f64,
    pub cd_count: usize,
    pub ref_count: usize,
}

/// Scores aligned prediction and reference streams.
pub fn seld_stream(
    num_categories: usize,
    pred: &[Accddoa],
    truth: &[Accddoa],
) -> Result<SeldCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "misaligned SELD streams: {} predictions, {} references",
            pred.len(),
            truth.len()
        )));
    }
    let mut counts = SeldCounts::new(num_categories);
    for (p, r) in pred.iter().zip(truth) {
        counts.add_step(p, r)?;
    }
    Ok(counts)
}

/// Tallies one trace over `period`; `None` if the trace carries no estimates.
pub fn trace_seld_counts(trace: &EpisodeTrace, period: Period) -> Result<Option<SeldCounts>> {
    let s = &trace.summary;
    let mut counts = SeldCounts::new(s.num_categories);
    for step in &trace.steps {
        if !period.contains(step.t, s.onset_step, s.active_steps) {
            continue;
        }
        let (Some(pred), Some(truth)) = (&step.estimate, &step.label) else {
            return Ok(None);
        };
        counts.add_step(pred, truth)?;
    }
    Ok(Some(counts))
}

/// SELD scores over every trace; `None` when the traces carry no estimates.
pub fn seld_metrics(traces: &[EpisodeTrace], period: Period) -> Result<Option<SeldMetrics>> {
    let Some(first) = traces.first() else {
        return Ok(None);
    };
    let mut total = SeldCounts::new(first.summary.num_categories);
    for t in traces {
        match trace_seld_counts(t, period)? {
            Some(c) => total.merge(&c)?,
            None => return Ok(None),
        }
    }
    Ok(Some(total.metrics()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub edge: f64,
    pub sr: f64,
    pub count: usize,
}

/// Goal-sound budget used by an episode: oracle actions per sounding step.
pub fn action_ratio(trace: &EpisodeTrace) -> Option<f64> {
    let s = &trace.summary;
    (s.duration_s > 0.0).then(|| s.oracle_actions as f64 / (s.duration_s / STEP_SECONDS))
}

fn factor_pairs(
    traces: &[EpisodeTrace],
    factor: impl Fn(&EpisodeTrace) -> Option<f64>,
) -> Vec<(f64, bool)> {
    let mut skipped = 0;
    let pairs = traces
        .iter()
        .filter_map(|t| {
            let f = factor(t);
            if f.is_none() {
                skipped += 1;
            }
            f.map(|f| (f, t.summary.success()))
        })
        .collect();
    if skipped > 0 {
        warn!("{skipped} episodes without a sound duration excluded from factor curves");
    }
    pairs
}

/// Cumulative success rate over episodes whose factor is at most each edge;
/// edges covering no episode are omitted.
pub fn factor_curve(
    traces: &[EpisodeTrace],
    factor: impl Fn(&EpisodeTrace) -> Option<f64>,
    edges: &[f64],
) -> Vec<CurvePoint> {
    let pairs = factor_pairs(traces, factor);
    edges
        .iter()
        .filter_map(|&edge| {
            let (n, s) = pairs
                .iter()
                .filter(|(f, _)| *f <= edge)
                .fold((0, 0), |(n, s), (_, ok)| (n + 1, s + usize::from(*ok)));
            (n > 0).then(|| CurvePoint {
                edge,
                sr: s as f64 / n as f64,
                count: n,
            })
        })
        .collect()
}

/// Success rate over episodes whose factor is at least each threshold.
pub fn factor_tail_curve(
    traces: &[EpisodeTrace],
    factor: impl Fn(&EpisodeTrace) -> Option<f64>,
    thresholds: &[f64],
) -> Vec<CurvePoint> {
    let pairs = factor_pairs(traces, factor);
    thresholds
        .iter()
        .filter_map(|&edge| {
            let (n, s) = pairs
                .iter()
                .filter(|(f, _)| *f >= edge)
                .fold((0, 0), |(n, s), (_, ok)| (n + 1, s + usize::from(*ok)));
            (n > 0).then(|| CurvePoint {
                edge,
                sr: s as f64 / n as f64,
                count: n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCurves {
    pub action_ratio: Vec<CurvePoint>,
    pub geodesic: Vec<CurvePoint>,
}

pub fn factor_curves(traces: &[EpisodeTrace]) -> FactorCurves {
    FactorCurves {
        action_ratio: factor_curve(traces, action_ratio, &DEFAULT_RATIO_EDGES),
        geodesic: factor_curve(
            traces,
            |t| Some(t.summary.geodesic_start_goal),
            &DEFAULT_GEODESIC_EDGES,
        ),
    }
}

/// Aggregates for one (agent, condition) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub agent: String,
    pub condition: Condition,
    pub runs: usize,
    pub nav: NavMetrics,
    pub sounding: Option<SeldMetrics>,
    pub silent: Option<SeldMetrics>,
    pub curves: FactorCurves,
}

impl MetricReport {
    pub fn build(agent: &str, condition: Condition, traces: &[EpisodeTrace]) -> Result<Self> {
        let runs: BTreeSet<usize> = traces.iter().map(|t| t.summary.run).collect();
        Ok(Self {
            agent: agent.to_string(),
            condition,
            runs: runs.len(),
            nav: nav_metrics(traces),
            sounding: seld_metrics(traces, Period::Sounding)?,
            silent: seld_metrics(traces, Period::Silent)?,
            curves: factor_curves(traces),
        })
    }
}

/// One report per (agent, condition) present, in sorted order.
pub fn build_reports(traces: &[EpisodeTrace]) -> Result<Vec<MetricReport>> {
    let mut groups: BTreeMap<(String, String), (Condition, Vec<EpisodeTrace>)> = BTreeMap::new();
    for t in traces {
        let key = (t.summary.agent.clone(), t.summary.condition.to_string());
        groups
            .entry(key)
            .or_insert_with(|| (t.summary.condition, Vec::new()))
            .1
            .push(t.clone());
    }
    groups
        .into_iter()
        .map(|((agent, _), (condition, ts))| MetricReport::build(&agent, condition, &ts))
        .collect()
}

fn seld_rows(m: &SeldMetrics) -> [(&'static str, f64); 7] {
    [
        ("er", m.er),
        ("f", m.f),
        ("le_cd", m.le_cd),
        ("lr_cd", m.lr_cd),
        ("rde", m.rde),
        ("cd_count", m.cd_count as f64),
        ("ref_count", m.ref_count as f64),
    ]
}

/// Long-format CSV: one row per metric, agent and condition.
pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("agent,condition,period,metric,value\n");
    for r in reports {
        let n = &r.nav;
        for (name, v) in [
            ("episodes", n.episodes as f64),
            ("runs", r.runs as f64),
            ("sr", n.sr),
            ("spl", n.spl),
            ("sna", n.sna),
            ("dtg", n.dtg),
            ("sws", n.sws),
            ("dsr", n.dsr),
        ] {
            let _ = writeln!(out, "{},{},all,{name},{v:.6}", r.agent, r.condition);
        }
        for (period, m) in [("sounding", &r.sounding), ("silent", &r.silent)] {
            if let Some(m) = m {
                for (name, v) in seld_rows(m) {
                    let _ = writeln!(out, "{},{},{period},{name},{v:.6}", r.agent, r.condition);
                }
            }
        }
    }
    out
}

/// Markdown tables: navigation block, then the SELD block.
pub fn reports_markdown(reports: &[MetricReport]) -> String {
    let mut out = String::from("## Navigation\n\n");
    out.push_str("| Agent | Condition | Episodes | SR (%) | SPL (%) | SNA (%) | DTG (m) | SWS (%) | DSR (%) |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        let n = &r.nav;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.1} | {:.1} | {:.1} | {:.2} | {:.1} | {:.1} |",
            r.agent,
            r.condition,
            n.episodes,
            100.0 * n.sr,
            100.0 * n.spl,
            100.0 * n.sna,
            n.dtg,
            100.0 * n.sws,
            100.0 * n.dsr
        );
    }
    let seld: Vec<&MetricReport> = reports.iter().filter(|r| r.sounding.is_some()).collect();
    if !seld.is_empty() {
        out.push_str("\n## Goal descriptor (sounding / silent)\n\n");
        out.push_str("| Agent | Condition | ER20 | F20 (%) | LE_CD (deg) | LR_CD (%) | RDE |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in seld {
            let (Some(a), Some(b)) = (&r.sounding, &r.silent) else {
                continue;
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} / {:.2} | {:.1} / {:.1} | {:.1} / {:.1} | {:.1} / {:.1} | {:.2} / {:.2} |",
                r.agent,
                r.condition,
                a.er,
                b.er,
                100.0 * a.f,
                100.0 * b.f,
                a.le_cd,
                b.le_cd,
                100.0 * a.lr_cd,
                100.0 * b.lr_cd,
                a.rde,
                b.rde
            );
        }
    }
    out
}

/// `edge,cumulative_sr` rows.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("bin_edge,cumulative_sr,count\n");
    for p in curve {
        let _ = writeln!(out, "{:.6},{:.6},{}", p.edge, p.sr, p.count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{TraceStep, TraceSummary};

    fn summary(
        term: Termination,
        geo: f64,
        path: f64,
        oracle: usize,
        actions: usize,
    ) -> TraceSummary {
        TraceSummary {
            termination: term,
            dtg: 0.5,
            path_length: path,
            num_actions: actions,
            episode_id: "e".into(),
            agent: "oracle2".into(),
            condition: Condition::Clean,
            run: 0,
            seed: 0,
            geodesic_start_goal: geo,
            oracle_actions: oracle,
            duration_s: 2.0,
            onset_step: 0,
            active_steps: 8,
            goal_category: 0,
            num_categories: 2,
        }
    }

    fn trace(s: TraceSummary) -> EpisodeTrace {
        let steps = (0..s.num_actions)
            .map(|t| TraceStep {
                t,
                action: if t + 1 == s.num_actions {
                    ActionKind::Stop
                } else {
                    ActionKind::MoveForward
                },
                pose: [0.0; 3],
                reward: 0.0,
                goal_active: true,
                estimate: None,
                label: None,
            })
            .collect();
        EpisodeTrace { steps, summary: s }
    }

    #[test]
    fn single_success_equal_path() {
        let m = nav_metrics(&[trace(summary(Termination::Success, 4.0, 4.0, 10, 20))]);
        assert_eq!((m.sr, m.spl, m.sna), (1.0, 1.0, 0.5));
    }

    #[test]
    fn spl_ratio() {
        let m = nav_metrics(&[trace(summary(Termination::Success, 4.0, 5.0, 10, 10))]);
        assert!((m.spl - 0.8).abs() < 1e-15);
    }

    #[test]
    fn failure_contributes_zero() {
        let m = nav_metrics(&[trace(summary(Termination::Timeout, 4.0, 4.0, 10, 12))]);
        assert_eq!((m.sr, m.spl, m.sna, m.sws), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn success_when_silent() {
        let mut t = trace(summary(Termination::Success, 4.0, 4.0, 10, 12));
        let m = nav_metrics(std::slice::from_ref(&t));
        assert_eq!(m.sws, 1.0);
        t.summary.active_steps = 20;
        assert_eq!(nav_metrics(&[t]).sws, 0.0);
    }

    fn one(c: usize, az_deg: f64, d: f64) -> Accddoa {
        Accddoa::single(2, c, az_deg.to_radians(), d)
    }

    #[test]
    fn hand_worked_stream() {
        let truth = vec![one(0, 0.0, 3.0); 4];
        let pred = vec![
            one(0, 0.0, 3.0),
            one(0, 25.0, 3.0),
            Accddoa::inactive(2),
            one(1, 0.0, 3.0),
        ];
        let m = seld_stream(2, &pred, &truth).unwrap().metrics();
        assert!((m.f - 0.4).abs() < 1e-12);
        assert!((m.er - 0.75).abs() < 1e-12);
        assert!((m.le_cd - 12.5).abs() < 1e-9);
        assert!((m.lr_cd - 0.5).abs() < 1e-12);
        assert!(m.rde.abs() < 1e-12);
    }

    #[test]
    fn self_match_is_perfect() {
        let truth = vec![one(0, 10.0, 3.0), one(1, -50.0, 7.0), one(0, 170.0, 1.0)];
        let m = seld_stream(2, &truth, &truth).unwrap().metrics();
        assert_eq!((m.er, m.f, m.lr_cd), (0.0, 1.0, 1.0));
        assert!(m.le_cd.abs() < 1e-6 && m.rde.abs() < 1e-12);
    }

    #[test]
    fn all_inactive_uses_sentinels() {
        let truth = vec![one(0, 10.0, 3.0); 3];
        let pred = vec![Accddoa::inactive(2); 3];
        let m = seld_stream(2, &pred, &truth).unwrap().metrics();
        assert_eq!((m.f, m.lr_cd, m.er), (0.0, 0.0, 1.0));
        assert_eq!((m.le_cd, m.rde, m.cd_count), (EMPTY_LE_DEG, EMPTY_RDE, 0));
    }

    #[test]
    fn misaligned_streams_error() {
        assert!(seld_stream(2, &[Accddoa::inactive(2)], &[]).is_err());
    }

    #[test]
    fn two_episode_curve() {
        let mut easy = trace(summary(Termination::Success, 4.0, 4.0, 4, 5));
        easy.summary.duration_s = 4.0;
        let mut hard = trace(summary(Termination::Timeout, 4.0, 4.0, 40, 5));
        hard.summary.duration_s = 4.0;
        let c = factor_curve(&[easy.clone(), hard.clone()], action_ratio, &[0.5, 3.0]);
        assert_eq!(c.iter().map(|p| p.sr).collect::<Vec<_>>(), vec![1.0, 0.5]);
        assert!(factor_curve(&[easy, hard], action_ratio, &[0.01]).is_empty());
    }

    #[test]
    fn report_formats() {
        let r = build_reports(&[trace(summary(Termination::Success, 4.0, 4.0, 10, 20))]).unwrap();
        assert_eq!(r.len(), 1);
        assert!(reports_csv(&r).contains("oracle2,clean,all,sr,1.000000"));
        assert!(reports_markdown(&r).contains("| oracle2 | clean | 1 | 100.0 |"));
    }
}
