//! Image-source binaural room impulse responses in the boundary rectangle.

use std::f64::consts::FRAC_PI_2;

use super::{SAMPLE_RATE, SPEED_OF_SOUND};
use crate::error::{Error, Result};
use crate::geometry::{segment_blocked, wrap_angle, Point, Pose, ScenePlan};

/// Half the inter-ear distance.
pub const EAR_OFFSET: f64 = 0.09;
pub const DEFAULT_MAX_ORDER: u32 = 3;
/// Extra attenuation of a direct path whose line of sight is blocked.
pub const OCCLUSION_GAIN: f64 = 0.3;
/// Spreading distances are clamped below this to keep gains finite.
const MIN_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BinauralRir {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub order: u32,
}

impl BinauralRir {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.left.iter().chain(&self.right).map(|x| x * x).sum()
    }
}

/// One image source as seen by the two ears.
#[derive(Debug, Clone, Copy)]
pub struct ImageSource {
    pub position: Point,
    pub order: u32,
}

/// Fixed RIR length for a scene, long enough for every image up to `max_order`.
pub fn rir_length(scene: &ScenePlan, max_order: u32) -> usize {
    let path = scene.diagonal() * (max_order as f64 + 1.0) + 2.0 * MIN_DISTANCE;
    (path / SPEED_OF_SOUND * SAMPLE_RATE).ceil() as usize + 2
}

/// Image sources of `src` up to `max_order` reflections off the four walls.
pub fn image_sources(scene: &ScenePlan, src: Point, max_order: u32) -> Vec<ImageSource> {
    let m = max_order as i64;
    let mut out = Vec::new();
    for mx in -m..=m {
        for px in 0..2i64 {
            let ox = (2 * mx - px).unsigned_abs() as u32;
            if ox > max_order {
                continue;
            }
            let x = (1 - 2 * px) as f64 * src.x + 2.0 * mx as f64 * scene.width;
            for my in -m..=m {
                for py in 0..2i64 {
                    let oy = (2 * my - py).unsigned_abs() as u32;
                    if ox + oy > max_order {
                        continue;
                    }
                    let y = (1 - 2 * py) as f64 * src.y + 2.0 * my as f64 * scene.height;
                    out.push(ImageSource {
                        position: Point::new(x, y),
                        order: ox + oy,
                    });
                }
            }
        }
    }
    out
}

/// Ear positions (left, right) for a listener pose.
pub fn ear_positions(listener: &Pose) -> (Point, Point) {
    (
        listener.to_parent(Point::new(0.0, EAR_OFFSET)),
        listener.to_parent(Point::new(0.0, -EAR_OFFSET)),
    )
}

/// Gain of an ear facing `ear_angle` for sound arriving from `incidence`
/// (both in the head frame).
pub fn head_shadow(incidence: f64, ear_angle: f64) -> f64 {
    0.6 + 0.4 * (incidence - ear_angle).cos()
}

fn add_tap(buf: &mut [f64], delay: f64, gain: f64) {
    let n = delay.floor();
    let frac = delay - n;
    let n = n as usize;
    if n < buf.len() {
        buf[n] += gain * (1.0 - frac);
    }
    if n + 1 < buf.len() {
        buf[n + 1] += gain * frac;
    }
}

pub fn binaural_rir(
    scene: &ScenePlan,
    src: Point,
    listener: &Pose,
    max_order: u32,
) -> Result<BinauralRir> {
    binaural_rir_with_len(
        scene,
        src,
        listener,
        max_order,
        rir_length(scene, max_order),
    )
}

/// Same as [`binaural_rir`] with an explicit output length.
pub fn binaural_rir_with_len(
    scene: &ScenePlan,
    src: Point,
    listener: &Pose,
    max_order: u32,
    len: usize,
) -> Result<BinauralRir> {
    let head = listener.position();
    for (what, p) in [("source", src), ("listener", head)] {
        if !scene.in_bounds(p) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        if scene.obstacles.iter().any(|o| o.contains(p)) {
            return Err(Error::Precondition(format!(
                "{what} ({:.3}, {:.3}) lies inside an obstacle",
                p.x, p.y
            )));
        }
    }
    let (ear_l, ear_r) = ear_positions(listener);
    let heading = listener.theta();
    let reflect = 1.0 - scene.wall_absorption;
    let mut left = vec![0.0; len];
    let mut right = vec![0.0; len];
    for img in image_sources(scene, src, max_order) {
        let v = img.position - head;
        let incidence = wrap_angle(v.y.atan2(v.x) - heading);
        let base = reflect.powi(img.order as i32);
        for (ear, ear_angle, buf) in [
            (ear_l, FRAC_PI_2, &mut left),
            (ear_r, -FRAC_PI_2, &mut right),
        ] {
            let r = img.position.dist(ear);
            let mut gain = base / r.max(MIN_DISTANCE) * head_shadow(incidence, ear_angle);
            if img.order == 0 && segment_blocked(scene, src, ear) {
                gain *= OCCLUSION_GAIN;
            }
            add_tap(buf, r / SPEED_OF_SOUND * SAMPLE_RATE, gain);
        }
    }
    Ok(BinauralRir {
        left,
        right,
        order: max_order,
    })
}
