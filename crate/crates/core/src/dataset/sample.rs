use std::ops::Range;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::episode::{
    EpisodeSpec, SoundPlacement, MAX_DURATION_S, MAX_ONSET_S, MIN_DISTRACTOR_GAP, MIN_DURATION_S,
};
use crate::acoustics::SoundBank;
use crate::error::{Error, Result};
use crate::geometry::{
    relative_goal, segment_clear, step_pose, ActionKind, DistanceField, Heading, OccupancyGrid,
    Point, Pose, Scene, AGENT_RADIUS, TURN_ANGLE,
};

pub const ORACLE_STOP_DISTANCE: f64 = 0.5;
pub const MAX_ORACLE_STEPS: usize = 2000;
pub const MIN_START_GEODESIC: f64 = 4.0;
pub const MAX_START_GEODESIC: f64 = 20.0;
/// Goals and distractors keep this much clearance from furniture.
pub const SOURCE_CLEARANCE: f64 = 0.3;
/// Path planning for the oracle keeps the agent centre this far from walls.
const PLANNING_CLEARANCE: f64 = 0.22;
const POINT_ATTEMPTS: usize = 1000;
const EPISODE_ATTEMPTS: usize = 200;

/// Heading error below which the oracle moves forward.
fn aligned(az: f64) -> bool {
    az.abs() <= TURN_ANGLE / 2.0 + 1e-9
}

/// Conservative free-space raster used to plan oracle paths.
#[derive(Debug, Clone)]
pub struct OraclePlanner {
    grid: OccupancyGrid,
}

impl OraclePlanner {
    pub fn new(scene: &Scene) -> Self {
        Self {
            grid: OccupancyGrid::build_with_clearance(&scene.plan, PLANNING_CLEARANCE),
        }
    }

    fn path(&self, scene: &Scene, start: Point, goal: Point) -> Result<Vec<Point>> {
        let no_cell = || Error::InvalidScene {
            id: scene.plan.id.clone(),
            reason: "no free planning cell".into(),
        };
        let gi = self.grid.snap(goal).ok_or_else(no_cell)?;
        let si = self.grid.snap(start).ok_or_else(no_cell)?;
        let field = DistanceField::compute(&self.grid, gi);
        let cells = field
            .descend(&self.grid, si)
            .ok_or_else(|| Error::InvalidScene {
                id: scene.plan.id.clone(),
                reason: "start and goal are disconnected at planning clearance".into(),
            })?;
        let mut pts: Vec<Point> = cells.iter().map(|&c| self.grid.center(c)).collect();
        pts.push(goal);
        Ok(pts)
    }
}

/// Greedy waypoint follower along a planned path. Returns the executed
/// actions, ending with `Stop`.
pub fn oracle_controller(
    scene: &Scene,
    planner: &OraclePlanner,
    start: &Pose,
    goal: Point,
) -> Result<Vec<ActionKind>> {
    let mut actions = Vec::new();
    let mut pose = *start;
    if pose.position().dist(goal) > ORACLE_STOP_DISTANCE {
        let path = planner.path(scene, pose.position(), goal)?;
        let mut idx = 0usize;
        let mut blocked = 0usize;
        while pose.position().dist(goal) > ORACLE_STOP_DISTANCE {
            if actions.len() >= MAX_ORACLE_STEPS {
                return Err(Error::SamplingExhausted {
                    what: format!("oracle path in scene {}", scene.plan.id),
                    attempts: MAX_ORACLE_STEPS,
                });
            }
            let here = pose.position();
            // Farthest waypoint in straight-line reach.
            let mut target = idx.min(path.len() - 1);
            for j in (idx..path.len()).rev() {
                if segment_clear(&scene.plan, here, path[j], AGENT_RADIUS + 0.02) {
                    target = j;
                    break;
                }
            }
            idx = target;
            let (az, _) = relative_goal(&pose, path[target]);
            let action = if blocked > 0 || !aligned(az) {
                if az >= 0.0 {
                    ActionKind::TurnLeft
                } else {
                    ActionKind::TurnRight
                }
            } else {
                ActionKind::MoveForward
            };
            let (next, moved) = step_pose(&scene.plan, &pose, action)?;
            blocked = if action == ActionKind::MoveForward && moved < 1e-9 {
                idx = (idx + 1).min(path.len() - 1);
                1
            } else {
                0
            };
            pose = next;
            actions.push(action);
        }
    }
    actions.push(ActionKind::Stop);
    Ok(actions)
}

fn sample_point(
    rng: &mut dyn RngCore,
    scene: &Scene,
    clearance: f64,
    accept: impl Fn(Point) -> bool,
) -> Option<Point> {
    let plan = &scene.plan;
    (0..POINT_ATTEMPTS).find_map(|_| {
        let p = Point::new(
            rng.gen_range(0.0..plan.width),
            rng.gen_range(0.0..plan.height),
        );
        (plan.is_free(p) && plan.clearance(p) >= clearance && accept(p)).then_some(p)
    })
}

/// Draws one episode; also returns the oracle action sequence.
#[allow(clippy::too_many_arguments)]
pub fn sample_episode(
    rng: &mut dyn RngCore,
    scene: &Scene,
    planner: &OraclePlanner,
    bank: &SoundBank,
    variants: Range<u32>,
    id: &str,
    with_distractor: bool,
) -> Result<(EpisodeSpec, Vec<ActionKind>)> {
    if variants.is_empty() {
        return Err(Error::Config(format!("empty variant range {variants:?}")));
    }
    let duration = Normal::new(15.0f64, 9.0).expect("valid normal");
    for _ in 0..EPISODE_ATTEMPTS {
        let onset_s = rng.gen_range(0.0..MAX_ONSET_S);
        let duration_s = duration.sample(rng).clamp(MIN_DURATION_S, MAX_DURATION_S);
        let Some(goal) = sample_point(rng, scene, SOURCE_CLEARANCE, |_| true) else {
            continue;
        };
        let field = scene.distance_field_to(goal)?;
        let geo = |p: Point| scene.geodesic_with(&field, p).unwrap_or(f64::INFINITY);
        let Some(start) = sample_point(rng, scene, AGENT_RADIUS, |p| {
            let g = geo(p);
            (MIN_START_GEODESIC..=MAX_START_GEODESIC).contains(&g)
        }) else {
            continue;
        };
        let start = Pose {
            heading: Heading::from_ticks(rng.gen_range(0..24)),
            ..Pose::new(start.x, start.y, 0.0)
        };
        let goal = SoundPlacement {
            point: goal,
            category_id: rng.gen_range(0..bank.goal_categories),
            sound_variant: rng.gen_range(variants.clone()),
        };
        let distractor = if with_distractor && bank.distractor_categories > 0 {
            let Some(p) = sample_point(rng, scene, SOURCE_CLEARANCE, |p| {
                p.dist(goal.point) >= MIN_DISTRACTOR_GAP
            }) else {
                continue;
            };
            Some(SoundPlacement {
                point: p,
                category_id: rng.gen_range(bank.distractor_ids()),
                sound_variant: rng.gen_range(variants.clone()),
            })
        } else {
            None
        };
        let actions = match oracle_controller(scene, planner, &start, goal.point) {
            Ok(a) => a,
            Err(Error::SamplingExhausted { .. }) => continue,
            Err(e) => return Err(e),
        };
        let spec = EpisodeSpec {
            id: id.to_string(),
            scene_id: scene.plan.id.clone(),
            start,
            goal,
            distractor,
            onset_s,
            duration_s,
            oracle_actions: actions.len(),
            geodesic_start_goal: geo(start.position()),
        };
        spec.validate(bank, scene)?;
        return Ok((spec, actions));
    }
    Err(Error::SamplingExhausted {
        what: format!("episode {id} in scene {}", scene.plan.id),
        attempts: EPISODE_ATTEMPTS,
    })
}
