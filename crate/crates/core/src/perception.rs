//! Synthetic stand-in for the camera + detector + feature extractor + depth
//! network: from ground truth, produce per-frame detections with appearance
//! embeddings and a scale-ambiguous relative depth map. The contracts (not
//! the internals) match what the real perception stack would emit.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::world::{AgentId, AgentState, Role, WorldSnapshot};

/// Pinhole camera with a horizontal FOV; no distortion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraModel {
    pub image_width: u32,
    pub image_height: u32,
    /// Horizontal field of view, radians, in (0, pi).
    pub hfov: f64,
    /// Mount height above ground, meters.
    pub mount_height: f64,
}

impl CameraModel {
    pub fn focal_px(&self) -> f64 {
        assert!(
            self.hfov > 0.0 && self.hfov < std::f64::consts::PI,
            "hfov must be in (0, pi)"
        );
        (f64::from(self.image_width) / 2.0) / (self.hfov / 2.0).tan()
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            image_width: 320,
            image_height: 240,
            hfov: std::f64::consts::FRAC_PI_2,
            mount_height: 0.12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    LeaderMarker,
    Obstacle,
}

/// What a detector would emit for one object in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Bounding-box centroid, pixel column.
    pub x_c: f64,
    /// Bounding-box centroid, pixel row.
    pub y_c: f64,
    /// Bounding-box area, px^2.
    pub s: f64,
    /// Aspect ratio w/h, constant per entity by construction.
    pub a: f64,
    pub class_label: ClassLabel,
    pub confidence: f64,
    /// Unit-norm appearance embedding.
    pub embedding: Vec<f64>,
}

impl Detection {
    /// Measurement vector consumed by the Kalman filter.
    pub fn measurement(&self) -> [f64; 4] {
        [self.x_c, self.y_c, self.s, self.a]
    }
}

/// Scale-ambiguous depth values on a small grid, plus the calibration anchor
/// pixel whose true depth is known.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelativeDepthMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height * width` values, all positive and unitless.
    pub values: Vec<f64>,
    /// (row, col) of the scene anchor.
    pub ref_pixel: (usize, usize),
    /// Known metric depth of the anchor, meters.
    pub ref_true_depth: f64,
}

impl RelativeDepthMap {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Relative depth value at the anchor pixel.
    pub fn ref_value(&self) -> f64 {
        self.value(self.ref_pixel.0, self.ref_pixel.1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptionConfig {
    /// Per-component Gaussian noise added to embeddings before renormalizing.
    pub embedding_sigma: f64,
    /// Gaussian noise on bbox centroid and half-extents, px.
    pub pixel_sigma: f64,
    /// Depth map resolution.
    pub depth_width: usize,
    pub depth_height: usize,
    /// Per-frame unknown scale is drawn uniformly from this range.
    pub scale_range: (f64, f64),
    /// Additive shift for stress tests; non-zero breaks the pure-ratio
    /// calibration and is reported, not corrected.
    pub depth_shift: f64,
    /// Depth assigned to background pixels, meters (before scaling).
    pub background_depth: f64,
    /// True depth of the calibration anchor, meters.
    pub anchor_depth: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            embedding_sigma: 0.05,
            pixel_sigma: 0.5,
            depth_width: 64,
            depth_height: 48,
            scale_range: (0.5, 2.0),
            depth_shift: 0.0,
            background_depth: 10.0,
            anchor_depth: 1.0,
        }
    }
}

/// Pinhole projection of one entity into the observer's image.
#[derive(Debug, Clone, Copy)]
struct Projected {
    x_c: f64,
    y_c: f64,
    half_w_px: f64,
    half_h_px: f64,
    range: f64,
}

fn project(observer: &AgentState, target: &AgentState, camera: &CameraModel) -> Option<Projected> {
    let range = observer.pose.distance_to(&target.pose);
    if range < 1e-6 {
        return None;
    }
    let bearing = observer.pose.bearing_to(&target.pose);
    if bearing.abs() > camera.hfov / 2.0 {
        return None;
    }
    let focal = camera.focal_px();
    let x_c = f64::from(camera.image_width) / 2.0 + focal * bearing.tan();
    // Marker center assumed at camera height, so rows center on the axis.
    let y_c = f64::from(camera.image_height) / 2.0;
    Some(Projected {
        x_c,
        y_c,
        half_w_px: focal * target.half_width / range,
        half_h_px: focal * target.half_height / range,
        range,
    })
}

fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Render one frame of detections for `observer_id`.
///
/// One detection per entity that is inside the FOV and not occluded by a
/// nearer entity whose projected horizontal interval overlaps. The entity
/// the observer is tasked to follow is labelled `LeaderMarker`; every other
/// visible entity (scripted obstacle or another robot in the way) is an
/// `Obstacle`.
pub fn render_detections(
    snapshot: &WorldSnapshot,
    observer_id: &AgentId,
    target_id: Option<&AgentId>,
    camera: &CameraModel,
    cfg: &PerceptionConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Detection> {
    let Some(observer) = snapshot.entity(observer_id) else {
        return Vec::new();
    };
    let mut candidates: Vec<(&AgentState, Projected)> = Vec::new();
    for entity in &snapshot.entities {
        if &entity.id == observer_id {
            continue;
        }
        if let Some(p) = project(observer, entity, camera) {
            candidates.push((entity, p));
        }
    }

    let width = f64::from(camera.image_width);
    let height = f64::from(camera.image_height);
    let mut out = Vec::new();
    for (i, (entity, p)) in candidates.iter().enumerate() {
        let interval = (p.x_c - p.half_w_px, p.x_c + p.half_w_px);
        let occluded = candidates.iter().enumerate().any(|(j, (_, q))| {
            j != i
                && q.range < p.range
                && intervals_overlap(interval, (q.x_c - q.half_w_px, q.x_c + q.half_w_px))
        });
        if occluded {
            continue;
        }

        let (x_c, y_c, half_w, half_h) = if cfg.pixel_sigma > 0.0 {
            let n = Normal::new(0.0, cfg.pixel_sigma).expect("valid sigma");
            (
                p.x_c + n.sample(rng),
                p.y_c + n.sample(rng),
                (p.half_w_px + n.sample(rng)).max(0.5),
                (p.half_h_px + n.sample(rng)).max(0.5),
            )
        } else {
            (p.x_c, p.y_c, p.half_w_px.max(0.5), p.half_h_px.max(0.5))
        };

        let embedding = noisy_embedding(&entity.marker_embedding, cfg.embedding_sigma, rng);
        let class_label = match (target_id, entity.role) {
            (Some(t), _) if t == &entity.id => ClassLabel::LeaderMarker,
            (_, Role::Leader) if target_id.is_none() => ClassLabel::LeaderMarker,
            _ => ClassLabel::Obstacle,
        };
        out.push(Detection {
            x_c: x_c.clamp(0.0, width - 1.0),
            y_c: y_c.clamp(0.0, height - 1.0),
            s: (2.0 * half_w) * (2.0 * half_h),
            a: half_w / half_h,
            class_label,
            confidence: (1.0 - 0.05 * p.range).clamp(0.5, 0.99),
            embedding,
        });
    }
    out
}

fn noisy_embedding(truth: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma <= 0.0 {
        return truth.to_vec();
    }
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    let v: Vec<f64> = truth.iter().map(|x| x + n.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return truth.to_vec();
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Render the scale-ambiguous depth map for `observer_id` with per-frame
/// scale `k`. Entity pixels carry `k * true_range (+ shift)`; the anchor
/// pixel is painted last and always carries `k * anchor_depth (+ shift)`.
pub fn render_depth(
    snapshot: &WorldSnapshot,
    observer_id: &AgentId,
    camera: &CameraModel,
    cfg: &PerceptionConfig,
    k: f64,
) -> RelativeDepthMap {
    assert!(k > 0.0, "frame scale must be positive");
    let (dw, dh) = (cfg.depth_width, cfg.depth_height);
    let mut values = vec![k * cfg.background_depth + cfg.depth_shift; dw * dh];
    let ref_pixel = (dh - 1, 0);

    if let Some(observer) = snapshot.entity(observer_id) {
        let mut projections: Vec<Projected> = snapshot
            .entities
            .iter()
            .filter(|e| &e.id != observer_id)
            .filter_map(|e| project(observer, e, camera))
            .collect();
        // Painter's algorithm: farthest first so nearer entities win.
        projections.sort_by(|a, b| b.range.total_cmp(&a.range));

        let sx = dw as f64 / f64::from(camera.image_width);
        let sy = dh as f64 / f64::from(camera.image_height);
        for p in &projections {
            let c0 = (((p.x_c - p.half_w_px) * sx).floor().max(0.0)) as usize;
            let c1 = (((p.x_c + p.half_w_px) * sx).ceil()).min(dw as f64 - 1.0) as usize;
            let r0 = (((p.y_c - p.half_h_px) * sy).floor().max(0.0)) as usize;
            let r1 = (((p.y_c + p.half_h_px) * sy).ceil()).min(dh as f64 - 1.0) as usize;
            if c0 > c1 || r0 > r1 {
                continue;
            }
            for row in r0..=r1 {
                for col in c0..=c1 {
                    values[row * dw + col] = k * p.range + cfg.depth_shift;
                }
            }
        }
    }

    values[ref_pixel.0 * dw + ref_pixel.1] = k * cfg.anchor_depth + cfg.depth_shift;
    RelativeDepthMap {
        width: dw,
        height: dh,
        values,
        ref_pixel,
        ref_true_depth: cfg.anchor_depth,
    }
}
