//! Relative-to-metric depth recovery: calibration against a known reference
//! distance, and sub-pixel lookup by bilinear interpolation over the four
//! neighbouring pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::{CameraModel, RelativeDepthMap};
use crate::tracker::Track;

#[derive(Debug, Error, PartialEq)]
pub enum DepthError {
    #[error("depth inputs must be positive, got {0}")]
    NonPositive(f64),
    #[error("non-finite depth input")]
    NonFinite,
    #[error("query ({x}, {y}) has no full 2x2 neighbourhood in a {w}x{h} map")]
    OutOfBounds { x: f64, y: f64, w: usize, h: usize },
}

/// The known reference: a true depth and the relative value observed there.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationAnchor {
    /// Known metric depth of the reference, meters.
    pub d_ref: f64,
    /// Relative depth value observed at the reference.
    pub d_rel_ref: f64,
}

impl CalibrationAnchor {
    pub fn new(d_ref: f64, d_rel_ref: f64) -> Result<Self, DepthError> {
        for v in [d_ref, d_rel_ref] {
            if !v.is_finite() {
                return Err(DepthError::NonFinite);
            }
            if v <= 0.0 {
                return Err(DepthError::NonPositive(v));
            }
        }
        Ok(CalibrationAnchor { d_ref, d_rel_ref })
    }

    /// Read the anchor off a rendered map's reference pixel.
    pub fn from_map(map: &RelativeDepthMap) -> Result<Self, DepthError> {
        CalibrationAnchor::new(map.ref_true_depth, map.ref_value())
    }
}

/// Scale a relative depth value to meters: `d_act = d_rel * d_ref / d_rel_ref`.
pub fn calibrate(d_rel: f64, anchor: &CalibrationAnchor) -> Result<f64, DepthError> {
    if !d_rel.is_finite() {
        return Err(DepthError::NonFinite);
    }
    if d_rel <= 0.0 {
        return Err(DepthError::NonPositive(d_rel));
    }
    Ok(d_rel * anchor.d_ref / anchor.d_rel_ref)
}

/// Fractional pixel coordinates of a lookup.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DepthQuery {
    /// Fractional pixel column.
    pub x_sub: f64,
    /// Fractional pixel row.
    pub y_sub: f64,
}

/// Bilinear interpolation over the 2x2 neighbourhood whose top-left pixel is
/// `(floor(x_sub), floor(y_sub))`:
///
/// `D = (1-dx)(1-dy) D11 + dx (1-dy) D21 + (1-dx) dy D12 + dx dy D22`
///
/// with `dx = x_sub - x1`, `dy = y_sub - y1`; the first subscript indexes
/// the column direction. The query must leave a full 2x2 neighbourhood in
/// bounds, i.e. `0 <= x_sub < width-1` and `0 <= y_sub < height-1`.
pub fn bilinear_depth(map: &RelativeDepthMap, q: DepthQuery) -> Result<f64, DepthError> {
    if !q.x_sub.is_finite() || !q.y_sub.is_finite() {
        return Err(DepthError::NonFinite);
    }
    let max_x = (map.width - 1) as f64;
    let max_y = (map.height - 1) as f64;
    if q.x_sub < 0.0 || q.y_sub < 0.0 || q.x_sub >= max_x || q.y_sub >= max_y {
        return Err(DepthError::OutOfBounds {
            x: q.x_sub,
            y: q.y_sub,
            w: map.width,
            h: map.height,
        });
    }
    let x1 = q.x_sub.floor();
    let y1 = q.y_sub.floor();
    let dx = q.x_sub - x1;
    let dy = q.y_sub - y1;
    let (col, row) = (x1 as usize, y1 as usize);
    let d11 = map.value(row, col);
    let d21 = map.value(row, col + 1);
    let d12 = map.value(row + 1, col);
    let d22 = map.value(row + 1, col + 1);
    Ok((1.0 - dx) * (1.0 - dy) * d11 + dx * (1.0 - dy) * d21 + (1.0 - dx) * dy * d12 + dx * dy * d22)
}

/// Metric range of a tracked object: the filter's bbox centroid is scaled
/// from image resolution to depth-map resolution, sampled bilinearly, and
/// calibrated. `None` means the centroid fell outside the interpolable area
/// (the planner treats the range as unknown).
pub fn depth_at_track(
    map: &RelativeDepthMap,
    anchor: &CalibrationAnchor,
    track: &Track,
    camera: &CameraModel,
) -> Option<f64> {
    let (x_c, y_c) = track.centroid_px();
    depth_at_centroid(map, anchor, x_c, y_c, camera)
}

/// As [`depth_at_track`], for a raw centroid in image pixels.
pub fn depth_at_centroid(
    map: &RelativeDepthMap,
    anchor: &CalibrationAnchor,
    x_c: f64,
    y_c: f64,
    camera: &CameraModel,
) -> Option<f64> {
    let sx = map.width as f64 / f64::from(camera.image_width);
    let sy = map.height as f64 / f64::from(camera.image_height);
    let q = DepthQuery {
        x_sub: x_c * sx,
        y_sub: y_c * sy,
    };
    let rel = bilinear_depth(map, q).ok()?;
    calibrate(rel, anchor).ok()
}
