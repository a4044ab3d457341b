//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use rand::Rng;
use savnce::descriptor::Accddoa;
use savnce::env::{Condition, EpisodeTrace, Termination, TraceStep, TraceSummary};
use savnce::geometry::{angle_diff, ActionKind, Point, Rect, ScenePlan};
use savnce::metrics::{Period, EMPTY_LE_DEG, EMPTY_RDE};

pub fn open_room(width: f64, height: f64) -> ScenePlan {
    ScenePlan {
        id: "open".into(),
        width,
        height,
        obstacles: vec![],
        wall_absorption: 0.5,
        grid_resolution: 0.05,
    }
}

/// 6 x 6 m room whose free space is an L of 1.5 m wide corridors along the
/// bottom and left walls.
pub fn l_corridor() -> ScenePlan {
    ScenePlan {
        id: "ell".into(),
        width: 6.0,
        height: 6.0,
        obstacles: vec![Rect::new(1.5, 1.5, 4.45, 4.45)],
        wall_absorption: 0.5,
        grid_resolution: 0.05,
    }
}

/// Distance from `p` to the nearest wall or obstacle, computed directly.
pub fn clearance(plan: &ScenePlan, p: Point) -> f64 {
    let mut best = p.x.min(plan.width - p.x).min(p.y).min(plan.height - p.y);
    for o in &plan.obstacles {
        let dx = (o.x - p.x).max(p.x - (o.x + o.w)).max(0.0);
        let dy = (o.y - p.y).max(p.y - (o.y + o.h)).max(0.0);
        best = best.min(dx.hypot(dy));
    }
    best
}

pub fn random_free_point(rng: &mut impl Rng, plan: &ScenePlan, margin: f64) -> Point {
    loop {
        let p = Point::new(
            rng.gen_range(0.0..plan.width),
            rng.gen_range(0.0..plan.height),
        );
        if clearance(plan, p) >= margin {
            return p;
        }
    }
}

fn random_label(rng: &mut impl Rng, c: usize, active_p: f64) -> Accddoa {
    if rng.gen_bool(active_p) {
        let k = rng.gen_range(0..c);
        Accddoa::single(c, k, rng.gen_range(-3.1..3.1), rng.gen_range(0.3..20.0))
    } else {
        Accddoa::inactive(c)
    }
}

/// A synthetic trace with random steps, estimates, labels and outcome.
pub fn random_trace(rng: &mut impl Rng, id: usize, c: usize) -> EpisodeTrace {
    let n = rng.gen_range(1..60usize);
    let onset = rng.gen_range(0..10usize);
    let active = rng.gen_range(1..40usize);
    let category = rng.gen_range(0..c);
    let steps = (0..n)
        .map(|t| {
            let sounding = t >= onset && t < onset + active;
            let label = if rng.gen_bool(0.8) {
                Accddoa::single(
                    c,
                    category,
                    rng.gen_range(-3.1..3.1),
                    rng.gen_range(0.3..20.0),
                )
            } else {
                Accddoa::inactive(c)
            };
            let estimate = match rng.gen_range(0..4) {
                0 => label.clone(),
                1 => {
                    // Perturbed copy of the truth.
                    match label.active() {
                        Some((k, tr)) => Accddoa::single(
                            c,
                            k,
                            tr.azimuth() + rng.gen_range(-0.6..0.6),
                            tr.distance_m() * rng.gen_range(0.5..1.5),
                        ),
                        None => random_label(rng, c, 0.5),
                    }
                }
                _ => random_label(rng, c, 0.5),
            };
            let action = if t + 1 == n && rng.gen_bool(0.7) {
                ActionKind::Stop
            } else {
                ActionKind::ALL[rng.gen_range(1..4)]
            };
            TraceStep {
                t,
                action,
                pose: [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0],
                reward: rng.gen_range(-1.0..1.0),
                goal_active: sounding,
                estimate: Some(estimate),
                label: Some(label),
            }
        })
        .collect::<Vec<_>>();
    let last_stop = steps.last().map(|s| s.action) == Some(ActionKind::Stop);
    let termination = if last_stop {
        [
            Termination::Success,
            Termination::StoppedWrongPlace,
            Termination::StoppedAtDistractor,
        ][rng.gen_range(0..3)]
    } else {
        Termination::Timeout
    };
    let geodesic = rng.gen_range(4.0..20.0);
    EpisodeTrace {
        steps,
        summary: TraceSummary {
            termination,
            dtg: rng.gen_range(0.0..15.0),
            path_length: rng.gen_range(2.0..30.0),
            num_actions: n,
            episode_id: format!("ep_{id:04}"),
            agent: "tracker".into(),
            condition: Condition::Clean,
            run: 0,
            seed: id as u64,
            geodesic_start_goal: geodesic,
            oracle_actions: rng.gen_range(10..120),
            duration_s: rng.gen_range(1.0..45.0),
            onset_step: onset,
            active_steps: active,
            goal_category: category as u32,
            num_categories: c,
        },
    }
}

/// Direct-form convolution that skips zero taps of `h`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len().saturating_sub(1)];
    for (k, &hk) in h.iter().enumerate() {
        if hk != 0.0 {
            for (n, &xn) in x.iter().enumerate() {
                y[n + k] += hk * xn;
            }
        }
    }
    y
}

/// Straightforward per-episode navigation aggregates.
pub fn brute_nav(traces: &[EpisodeTrace]) -> [f64; 6] {
    let mut rows = Vec::new();
    for t in traces {
        let s = &t.summary;
        let ok = if s.termination == Termination::Success {
            1.0
        } else {
            0.0
        };
        let l = s.geodesic_start_goal;
        let p = s.path_length;
        let spl = ok * l / if p > l { p } else { l };
        let no = s.oracle_actions as f64;
        let na = s.num_actions as f64;
        let sna = ok * no / if na > no { na } else { no };
        let stop_t = t
            .steps
            .iter()
            .find(|x| x.action == ActionKind::Stop)
            .map(|x| x.t);
        let silent_stop =
            stop_t.is_some_and(|st| st < s.onset_step || st >= s.onset_step + s.active_steps);
        let sws = if ok == 1.0 && silent_stop { 1.0 } else { 0.0 };
        let dsr = if s.termination == Termination::StoppedAtDistractor {
            1.0
        } else {
            0.0
        };
        rows.push([ok, spl, sna, s.dtg, sws, dsr]);
    }
    let mut out = [0.0; 6];
    for r in &rows {
        for k in 0..6 {
            out[k] += r[k];
        }
    }
    out.map(|v| v / rows.len() as f64)
}

#[derive(Default, Clone, Copy)]
struct Tally {
    tp: usize,
    fp: usize,
    fn_: usize,
    n_ref: usize,
    cd: usize,
    angle: f64,
    rde: f64,
}

/// Per-category scoring written directly from the definitions, using
/// azimuth differences instead of direction vectors.
pub fn brute_seld(traces: &[EpisodeTrace], period: Period, c: usize) -> [f64; 5] {
    let mut tallies = vec![Tally::default(); c];
    let mut subs = 0;
    for tr in traces {
        let s = &tr.summary;
        for step in &tr.steps {
            let in_period = match period {
                Period::Sounding => {
                    step.t >= s.onset_step && step.t < s.onset_step + s.active_steps
                }
                Period::Silent => step.t >= s.onset_step + s.active_steps,
            };
            if !in_period {
                continue;
            }
            let (p, r) = (
                step.estimate.as_ref().unwrap(),
                step.label.as_ref().unwrap(),
            );
            let (mut wrong, mut missed) = (0, 0);
            for (k, t) in tallies.iter_mut().enumerate() {
                let (pa, ra) = (p.tracks[k].active, r.tracks[k].active);
                t.n_ref += usize::from(ra);
                if pa && ra {
                    let err = angle_diff(p.tracks[k].azimuth(), r.tracks[k].azimuth())
                        .abs()
                        .to_degrees();
                    t.cd += 1;
                    t.angle += err;
                    let d = r.tracks[k].distance * 20.0;
                    t.rde += (p.tracks[k].distance * 20.0 - d).abs() / d;
                    if err <= 20.0 {
                        t.tp += 1;
                    } else {
                        t.fp += 1;
                    }
                } else if pa {
                    t.fp += 1;
                    wrong += 1;
                } else if ra {
                    t.fn_ += 1;
                    missed += 1;
                }
            }
            subs += wrong.min(missed);
        }
    }
    let present: Vec<&Tally> = tallies.iter().filter(|t| t.n_ref > 0).collect();
    let n_ref: usize = tallies.iter().map(|t| t.n_ref).sum();
    let fp: usize = tallies.iter().map(|t| t.fp).sum();
    let fn_: usize = tallies.iter().map(|t| t.fn_).sum();
    let er = if n_ref == 0 {
        0.0
    } else {
        (fp + fn_ - subs) as f64 / n_ref as f64
    };
    let avg = |f: &dyn Fn(&Tally) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|t| f(t)).sum::<f64>() / present.len() as f64
        }
    };
    [
        er,
        avg(&|t| {
            let den = 2 * t.tp + t.fp + t.fn_;
            if den == 0 {
                0.0
            } else {
                2.0 * t.tp as f64 / den as f64
            }
        }),
        avg(&|t| {
            if t.cd == 0 {
                EMPTY_LE_DEG
            } else {
                t.angle / t.cd as f64
            }
        }),
        avg(&|t| t.cd as f64 / t.n_ref as f64),
        avg(&|t| {
            if t.cd == 0 {
                EMPTY_RDE
            } else {
                t.rde / t.cd as f64
            }
        }),
    ]
}
