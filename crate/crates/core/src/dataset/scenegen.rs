use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rect, Scene, ScenePlan, DEFAULT_GRID_RESOLUTION};

/// Minimum free gap between obstacles and between obstacles and walls.
pub const MIN_CORRIDOR: f64 = 0.6;
pub const MAX_SCENE_ATTEMPTS: usize = 1000;
const PLACEMENT_TRIES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Large,
}

impl SizeClass {
    fn side_range(self) -> (f64, f64) {
        match self {
            SizeClass::Small => (8.0, 12.0),
            SizeClass::Large => (14.0, 20.0),
        }
    }
}

/// Samples a connected room with 3-8 rectangular obstacles.
pub fn gen_scene(id: &str, seed: u64, size: SizeClass) -> Result<ScenePlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = size.side_range();
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let width = rng.gen_range(lo..=hi);
        let height = rng.gen_range(lo..=hi);
        let count = rng.gen_range(3..=8usize);
        let max_side = (width.min(height) / 4.0).clamp(1.0, 3.5);
        let mut obstacles: Vec<Rect> = Vec::with_capacity(count);
        for _ in 0..PLACEMENT_TRIES {
            if obstacles.len() == count {
                break;
            }
            let w = rng.gen_range(0.4..max_side);
            let h = rng.gen_range(0.4..max_side);
            let x = rng.gen_range(MIN_CORRIDOR..width - MIN_CORRIDOR - w);
            let y = rng.gen_range(MIN_CORRIDOR..height - MIN_CORRIDOR - h);
            let r = Rect::new(x, y, w, h);
            if obstacles.iter().all(|o| o.gap(&r) >= MIN_CORRIDOR) {
                obstacles.push(r);
            }
        }
        if obstacles.len() < 3 {
            continue;
        }
        let plan = ScenePlan {
            id: id.to_string(),
            width,
            height,
            obstacles,
            wall_absorption: rng.gen_range(0.3..0.7),
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        };
        if Scene::new(plan.clone()).is_ok() {
            return Ok(plan);
        }
    }
    Err(Error::SamplingExhausted {
        what: format!("scene {id}"),
        attempts: MAX_SCENE_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = gen_scene("s", 5, SizeClass::Small).unwrap();
        let b = gen_scene("s", 5, SizeClass::Small).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn respects_size_and_corridors() {
        for (seed, size) in [(1, SizeClass::Small), (2, SizeClass::Large)] {
            let s = gen_scene("s", seed, size).unwrap();
            let (lo, hi) = size.side_range();
            assert!(s.width >= lo && s.width <= hi && s.height >= lo && s.height <= hi);
            assert!((3..=8).contains(&s.obstacles.len()));
            for (i, a) in s.obstacles.iter().enumerate() {
                assert!(a.x >= MIN_CORRIDOR && a.y >= MIN_CORRIDOR);
                assert!(a.x1() <= s.width - MIN_CORRIDOR && a.y1() <= s.height - MIN_CORRIDOR);
                for b in &s.obstacles[i + 1..] {
                    assert!(a.gap(b) >= MIN_CORRIDOR);
                }
            }
        }
    }
}
