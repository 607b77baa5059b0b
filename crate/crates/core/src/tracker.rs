//! Appearance-based multi-object tracker: cosine-similarity data association
//! with feature-centroid averaging, a 7-state constant-velocity Kalman filter
//! per track, and age-based removal.
//!
//! State vector: (x_c, y_c, s, a, dx_c, dy_c, ds): bbox centroid in px,
//! area in px^2, aspect ratio (constant under the motion model), and the
//! velocities of centroid and area. The measurement is the first four.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::perception::{ClassLabel, Detection};

pub type StateVector = SVector<f64, 7>;
pub type StateMatrix = SMatrix<f64, 7, 7>;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("zero-norm vector in cosine similarity")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite measurement component")]
    NonFiniteMeasurement,
    #[error("measurement requires s > 0 and a > 0, got s={s}, a={a}")]
    NonPositiveMeasurement { s: f64, a: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

/// Cosine similarity of two vectors, in [-1, 1].
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, TrackerError> {
    if u.len() != v.len() {
        return Err(TrackerError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(TrackerError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Average the stored feature with the newly matched one and renormalize.
/// Antipodal inputs have no defined direction; the old centroid is kept.
pub fn update_feature_centroid(old: &[f64], new: &[f64]) -> Vec<f64> {
    debug_assert_eq!(old.len(), new.len());
    let avg: Vec<f64> = old.iter().zip(new).map(|(a, b)| (a + b) / 2.0).collect();
    let norm = avg.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        warn!("antipodal feature average; keeping previous centroid");
        return old.to_vec();
    }
    avg.into_iter().map(|x| x / norm).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Cosine-similarity gate; pairs below it are never matched.
    pub match_threshold: f64,
    /// Consecutive undetected frames after which a track is removed.
    pub max_age: u64,
    /// Seconds between tracker steps.
    pub dt: f64,
    /// Initial covariance diagonal for new tracks.
    pub p0_diag: [f64; 7],
    /// Process noise diagonal.
    pub q_diag: [f64; 7],
    /// Measurement noise diagonal.
    pub r_diag: [f64; 4],
    /// Area estimate is never driven below this at output.
    pub s_floor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            match_threshold: 0.65,
            max_age: 30,
            dt: 0.05,
            // SORT-style convention: high initial velocity uncertainty.
            p0_diag: [10.0, 10.0, 100.0, 1e-2, 1e4, 1e4, 1e4],
            q_diag: [1.0, 1.0, 1.0, 1e-6, 0.01, 0.01, 1e-4],
            r_diag: [1.0, 1.0, 10.0, 1e-2],
            s_floor: 1.0,
        }
    }
}

/// Kalman mean and covariance for one track.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub mean: StateVector,
    pub cov: StateMatrix,
}

impl KalmanState {
    /// Initialize from a first measurement; velocities start at zero since
    /// nothing is observable from a single frame.
    pub fn from_measurement(z: &[f64; 4], p0_diag: &[f64; 7]) -> Self {
        let mean = StateVector::from_column_slice(&[z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        let mut cov = StateMatrix::zeros();
        for (i, p) in p0_diag.iter().enumerate() {
            cov[(i, i)] = *p;
        }
        KalmanState { mean, cov }
    }
}

fn transition(dt: f64) -> StateMatrix {
    let mut f = StateMatrix::identity();
    f[(0, 4)] = dt;
    f[(1, 5)] = dt;
    f[(2, 6)] = dt;
    f
}

fn observation() -> SMatrix<f64, 4, 7> {
    let mut h = SMatrix::<f64, 4, 7>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

/// Constant-velocity prediction: centroid and area advance by their
/// velocities, the aspect ratio stays constant.
pub fn kf_predict(kf: &KalmanState, dt: f64, cfg: &TrackerConfig) -> KalmanState {
    assert!(dt > 0.0, "dt must be positive");
    let f = transition(dt);
    let mut q = StateMatrix::zeros();
    for (i, v) in cfg.q_diag.iter().enumerate() {
        q[(i, i)] = *v;
    }
    KalmanState {
        mean: f * kf.mean,
        cov: f * kf.cov * f.transpose() + q,
    }
}

/// Linear Kalman correction with the measurement selecting the first four
/// state components. Joseph-form covariance update keeps the posterior
/// symmetric positive semidefinite.
pub fn kf_update(kf: &KalmanState, z: &[f64; 4], cfg: &TrackerConfig) -> Result<KalmanState, TrackerError> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(TrackerError::NonFiniteMeasurement);
    }
    if z[2] <= 0.0 || z[3] <= 0.0 {
        return Err(TrackerError::NonPositiveMeasurement { s: z[2], a: z[3] });
    }
    let h = observation();
    let mut r = SMatrix::<f64, 4, 4>::zeros();
    for (i, v) in cfg.r_diag.iter().enumerate() {
        r[(i, i)] = *v;
    }
    let zv = SVector::<f64, 4>::from_column_slice(z);
    let innovation = zv - h * kf.mean;
    let s = h * kf.cov * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(TrackerError::SingularInnovation)?;
    let k = kf.cov * h.transpose() * s_inv;
    let mean = kf.mean + k * innovation;
    let a = StateMatrix::identity() - k * h;
    let cov = a * kf.cov * a.transpose() + k * r * k.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    let mut mean = mean;
    if mean[2] < cfg.s_floor {
        mean[2] = cfg.s_floor;
    }
    Ok(KalmanState { mean, cov })
}

/// A persistent identity with its filter state and appearance centroid.
#[derive(Debug, Clone)]
pub struct Track {
    pub track_id: u64,
    pub kf: KalmanState,
    /// Unit-norm running average of matched embeddings.
    pub feature_centroid: Vec<f64>,
    pub class_label: ClassLabel,
    pub frames_since_update: u64,
    pub hits: u64,
}

impl Track {
    pub fn centroid_px(&self) -> (f64, f64) {
        (self.kf.mean[0], self.kf.mean[1])
    }

    /// Detected in the most recent frame (as opposed to coasting).
    pub fn in_frame(&self) -> bool {
        self.frames_since_update == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackEvent {
    TrackCreated { track_id: u64, class_label: ClassLabel },
    TrackUpdated { track_id: u64 },
    TrackRemoved { track_id: u64, class_label: ClassLabel },
}

/// Result of data association; a partial matching keyed by track id and
/// detection index.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub matches: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy matching kernel over an explicit similarity matrix
/// (`sim[t][d]` = similarity of track `t` against detection `d`, with
/// `n_dets` detections).
///
/// Pairs are taken in descending similarity; ties break toward the lower
/// track id, then the lower detection index. Pairs below the threshold are
/// never matched.
pub fn match_by_similarity(
    track_ids: &[u64],
    sim: &[Vec<f64>],
    n_dets: usize,
    threshold: f64,
) -> Association {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (ti, row) in sim.iter().enumerate() {
        for (di, &value) in row.iter().enumerate() {
            if value >= threshold {
                pairs.push((ti, di, value));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then_with(|| track_ids[a.0].cmp(&track_ids[b.0]))
            .then_with(|| a.1.cmp(&b.1))
    });

    let mut track_taken = vec![false; track_ids.len()];
    let mut det_taken = vec![false; n_dets];
    let mut matches = Vec::new();
    for (ti, di, _) in pairs {
        if track_taken[ti] || det_taken[di] {
            continue;
        }
        track_taken[ti] = true;
        det_taken[di] = true;
        matches.push((track_ids[ti], di));
    }
    Association {
        matches,
        unmatched_tracks: track_ids
            .iter()
            .zip(&track_taken)
            .filter(|(_, taken)| !**taken)
            .map(|(id, _)| *id)
            .collect(),
        unmatched_detections: (0..n_dets).filter(|d| !det_taken[*d]).collect(),
    }
}

/// Associate detections to tracks by cosine similarity of the detection
/// embedding against each track's feature centroid.
pub fn associate(tracks: &[Track], detections: &[Detection], cfg: &TrackerConfig) -> Association {
    let track_ids: Vec<u64> = tracks.iter().map(|t| t.track_id).collect();
    let sim: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| match cosine_similarity(&t.feature_centroid, &d.embedding) {
                    Ok(v) => v,
                    Err(e) => {
                        warn!(track = t.track_id, "similarity failed: {e}; treating as no match");
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect();
    match_by_similarity(&track_ids, &sim, detections.len(), cfg.match_threshold)
}

/// One tracker instance per observer agent.
#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Advance one frame: predict, associate, correct, spawn, age, remove.
    pub fn step(&mut self, detections: &[Detection]) -> Vec<TrackEvent> {
        let mut events = Vec::new();

        for track in &mut self.tracks {
            track.kf = kf_predict(&track.kf, self.cfg.dt, &self.cfg);
        }

        let assoc = associate(&self.tracks, detections, &self.cfg);

        for (track_id, det_idx) in &assoc.matches {
            let det = &detections[*det_idx];
            let track = self
                .tracks
                .iter_mut()
                .find(|t| t.track_id == *track_id)
                .expect("matched track exists");
            match kf_update(&track.kf, &det.measurement(), &self.cfg) {
                Ok(kf) => track.kf = kf,
                Err(e) => {
                    warn!(track = track_id, "measurement rejected: {e}");
                    continue;
                }
            }
            track.feature_centroid = update_feature_centroid(&track.feature_centroid, &det.embedding);
            track.frames_since_update = 0;
            track.hits += 1;
            events.push(TrackEvent::TrackUpdated { track_id: *track_id });
        }

        for track_id in &assoc.unmatched_tracks {
            let track = self
                .tracks
                .iter_mut()
                .find(|t| t.track_id == *track_id)
                .expect("unmatched track exists");
            track.frames_since_update += 1;
        }

        for det_idx in &assoc.unmatched_detections {
            let det = &detections[*det_idx];
            let track_id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                track_id,
                kf: KalmanState::from_measurement(&det.measurement(), &self.cfg.p0_diag),
                feature_centroid: det.embedding.clone(),
                class_label: det.class_label,
                frames_since_update: 0,
                hits: 1,
            });
            events.push(TrackEvent::TrackCreated {
                track_id,
                class_label: det.class_label,
            });
        }

        let max_age = self.cfg.max_age;
        let mut removed = Vec::new();
        self.tracks.retain(|t| {
            if t.frames_since_update > max_age {
                removed.push(TrackEvent::TrackRemoved {
                    track_id: t.track_id,
                    class_label: t.class_label,
                });
                false
            } else {
                true
            }
        });
        events.extend(removed);
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(embedding: Vec<f64>, class_label: ClassLabel) -> Detection {
        Detection {
            x_c: 100.0,
            y_c: 80.0,
            s: 400.0,
            a: 1.5,
            class_label,
            confidence: 0.9,
            embedding,
        }
    }

    #[test]
    #[allow(clippy::approx_constant)] // 0.70710678 is the frozen expected value
    fn cosine_identity_orthogonal_and_diagonal() {
        assert_eq!(cosine_similarity(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let got = cosine_similarity(&[r, r], &[1.0, 0.0]).unwrap();
        assert!((got - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_rejects_degenerate_inputs() {
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(TrackerError::ZeroVector)
        );
        assert_eq!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(TrackerError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn centroid_average_renormalizes() {
        let got = update_feature_centroid(&[1.0, 0.0], &[0.0, 1.0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((got[0] - r).abs() < 1e-12);
        assert!((got[1] - r).abs() < 1e-12);

        let same = update_feature_centroid(&[1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(same, vec![1.0, 0.0]);
    }

    #[test]
    fn centroid_antipodal_keeps_old() {
        let got = update_feature_centroid(&[1.0, 0.0], &[-1.0, 0.0]);
        assert_eq!(got, vec![1.0, 0.0]);
    }

    #[test]
    fn predict_applies_constant_velocity() {
        let cfg = TrackerConfig::default();
        let kf = KalmanState {
            mean: StateVector::from_column_slice(&[100.0, 100.0, 400.0, 1.5, 5.0, -2.0, 0.0]),
            cov: StateMatrix::identity(),
        };
        let out = kf_predict(&kf, 1.0, &cfg);
        let expect = [105.0, 98.0, 400.0, 1.5, 5.0, -2.0, 0.0];
        for (i, e) in expect.iter().enumerate() {
            assert!((out.mean[i] - e).abs() < 1e-12, "component {i}");
        }
    }

    #[test]
    fn predict_zero_velocity_keeps_mean() {
        let cfg = TrackerConfig::default();
        let kf = KalmanState::from_measurement(&[10.0, 20.0, 30.0, 1.0], &cfg.p0_diag);
        let out = kf_predict(&kf, 0.5, &cfg);
        assert_eq!(out.mean, kf.mean);
    }

    #[test]
    fn predict_area_velocity() {
        let cfg = TrackerConfig::default();
        let mut kf = KalmanState::from_measurement(&[0.0, 0.0, 100.0, 1.0], &cfg.p0_diag);
        kf.mean[6] = 10.0;
        let out = kf_predict(&kf, 0.5, &cfg);
        assert!((out.mean[2] - 105.0).abs() < 1e-12);
    }

    #[test]
    fn aspect_ratio_mean_constant_under_prediction() {
        let cfg = {
            let mut cfg = TrackerConfig::default();
            cfg.q_diag[3] = 0.0;
            cfg
        };
        let kf = KalmanState::from_measurement(&[5.0, 6.0, 70.0, 1.33], &cfg.p0_diag);
        let mut state = kf.clone();
        for _ in 0..50 {
            state = kf_predict(&state, cfg.dt, &cfg);
        }
        assert_eq!(state.mean[3], 1.33);
    }

    #[test]
    fn update_perfect_measurement_limit() {
        let cfg = TrackerConfig {
            r_diag: [1e-9; 4],
            s_floor: 1e-12,
            ..TrackerConfig::default()
        };
        let kf = KalmanState::from_measurement(&[100.0, 100.0, 400.0, 1.5], &cfg.p0_diag);
        let z = [120.0, 90.0, 500.0, 1.2];
        let out = kf_update(&kf, &z, &cfg).unwrap();
        for (i, zi) in z.iter().enumerate() {
            assert!((out.mean[i] - zi).abs() < 1e-6, "component {i}");
        }
    }

    #[test]
    fn update_uninformative_measurement_limit() {
        let cfg = TrackerConfig {
            r_diag: [1e9; 4],
            ..TrackerConfig::default()
        };
        let kf = KalmanState::from_measurement(&[100.0, 100.0, 400.0, 1.5], &cfg.p0_diag);
        let out = kf_update(&kf, &[500.0, 500.0, 900.0, 3.0], &cfg).unwrap();
        for i in 0..4 {
            let rel = (out.mean[i] - kf.mean[i]).abs() / kf.mean[i].abs().max(1.0);
            assert!(rel < 1e-3, "component {i} moved too far");
        }
    }

    #[test]
    fn update_rejects_bad_measurements() {
        let cfg = TrackerConfig::default();
        let kf = KalmanState::from_measurement(&[1.0, 1.0, 1.0, 1.0], &cfg.p0_diag);
        assert!(matches!(
            kf_update(&kf, &[f64::NAN, 0.0, 1.0, 1.0], &cfg),
            Err(TrackerError::NonFiniteMeasurement)
        ));
        assert!(matches!(
            kf_update(&kf, &[0.0, 0.0, -1.0, 1.0], &cfg),
            Err(TrackerError::NonPositiveMeasurement { .. })
        ));
    }

    #[test]
    fn match_threshold_gates_pairs() {
        let cfg = TrackerConfig::default();
        let mut tracker = Tracker::new(cfg);
        tracker.step(&[det(vec![1.0, 0.0], ClassLabel::LeaderMarker)]);
        assert_eq!(tracker.tracks().len(), 1);

        // Similarity 0.6 < 0.65: both unmatched, second track spawned.
        let angle = 0.6f64.acos();
        let events = tracker.step(&[det(vec![angle.cos(), angle.sin()], ClassLabel::LeaderMarker)]);
        assert_eq!(tracker.tracks().len(), 2);
        assert!(events
            .iter()
            .any(|e| matches!(e, TrackEvent::TrackCreated { track_id: 2, .. })));

        // Similarity 0.9 > 0.65: matched, no new track.
        let angle = 0.9f64.acos();
        let events = tracker.step(&[det(vec![angle.cos(), angle.sin()], ClassLabel::LeaderMarker)]);
        assert!(events
            .iter()
            .any(|e| matches!(e, TrackEvent::TrackUpdated { track_id: 1 })));
        assert_eq!(tracker.tracks().len(), 2);
    }

    #[test]
    fn greedy_matrix_example() {
        // Similarity matrix [[0.9, 0.7], [0.8, 0.95]]: greedy takes (t2, d2)
        // at 0.95, then (t1, d1) at 0.9.
        let assoc = match_by_similarity(&[1, 2], &[vec![0.9, 0.7], vec![0.8, 0.95]], 2, 0.65);
        let mut matches = assoc.matches.clone();
        matches.sort();
        assert_eq!(matches, vec![(1, 0), (2, 1)]);
        assert!(assoc.unmatched_tracks.is_empty());
        assert!(assoc.unmatched_detections.is_empty());
    }

    #[test]
    fn association_is_partial_matching() {
        let assoc = match_by_similarity(
            &[7, 9, 11],
            &[vec![0.9, 0.9], vec![0.9, 0.9], vec![0.9, 0.9]],
            2,
            0.65,
        );
        assert_eq!(assoc.matches.len(), 2);
        let mut seen_tracks = std::collections::HashSet::new();
        let mut seen_dets = std::collections::HashSet::new();
        for (t, d) in &assoc.matches {
            assert!(seen_tracks.insert(*t));
            assert!(seen_dets.insert(*d));
        }
        assert_eq!(assoc.unmatched_tracks.len(), 1);
        // Tie-break: equal sims favor lower track ids, so 11 stays unmatched.
        assert_eq!(assoc.unmatched_tracks, vec![11]);
    }

    #[test]
    fn track_removed_after_max_age() {
        let cfg = TrackerConfig {
            max_age: 3,
            ..TrackerConfig::default()
        };
        let mut tracker = Tracker::new(cfg);
        tracker.step(&[det(vec![1.0, 0.0], ClassLabel::Obstacle)]);
        let mut removed_at = None;
        for step in 1..=5 {
            let events = tracker.step(&[]);
            for t in tracker.tracks() {
                assert!(t.frames_since_update <= 3, "live track over max_age");
            }
            if events
                .iter()
                .any(|e| matches!(e, TrackEvent::TrackRemoved { track_id: 1, .. }))
            {
                removed_at = Some(step);
                break;
            }
        }
        // Unmatched for max_age + 1 = 4 consecutive steps removes the track.
        assert_eq!(removed_at, Some(4));
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn track_ids_are_monotone_and_never_reused() {
        let cfg = TrackerConfig {
            max_age: 0,
            ..TrackerConfig::default()
        };
        let mut tracker = Tracker::new(cfg);
        let mut last = 0;
        for i in 0..5 {
            // Alternate between orthogonal identities so nothing ever matches.
            let e = if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            let events = tracker.step(&[det(e, ClassLabel::Obstacle)]);
            for ev in events {
                if let TrackEvent::TrackCreated { track_id, .. } = ev {
                    assert!(track_id > last);
                    last = track_id;
                }
            }
        }
    }

    #[test]
    fn new_track_velocities_start_at_zero() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        tracker.step(&[det(vec![1.0, 0.0], ClassLabel::LeaderMarker)]);
        let t = &tracker.tracks()[0];
        assert_eq!(t.kf.mean[4], 0.0);
        assert_eq!(t.kf.mean[5], 0.0);
        assert_eq!(t.kf.mean[6], 0.0);
        assert_eq!(t.hits, 1);
    }

    #[cfg(test)]
    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// For diagonal R, measuring never increases the variance of a
            /// measured component.
            #[test]
            fn update_shrinks_measured_variances(
                x in 1.0f64..500.0,
                y in 1.0f64..500.0,
                s in 10.0f64..5000.0,
                a in 0.2f64..5.0,
            ) {
                let cfg = TrackerConfig::default();
                let kf = KalmanState::from_measurement(&[x, y, s, a], &cfg.p0_diag);
                let pred = kf_predict(&kf, cfg.dt, &cfg);
                let post = kf_update(&pred, &[x + 1.0, y - 1.0, s + 5.0, a], &cfg).unwrap();
                for i in 0..4 {
                    prop_assert!(post.cov[(i, i)] <= pred.cov[(i, i)] + 1e-12);
                }
            }

            /// Posterior covariance stays symmetric and PSD (Cholesky with
            /// jitter <= 1e-9 succeeds) through predict/update cycles.
            #[test]
            fn covariance_stays_symmetric_psd(steps in 1usize..30) {
                let cfg = TrackerConfig::default();
                let mut state = KalmanState::from_measurement(&[100.0, 80.0, 400.0, 1.5], &cfg.p0_diag);
                for i in 0..steps {
                    state = kf_predict(&state, cfg.dt, &cfg);
                    let z = [100.0 + i as f64, 80.0 - i as f64, 400.0 + 2.0 * i as f64, 1.5];
                    state = kf_update(&state, &z, &cfg).unwrap();
                    let asym = (state.cov - state.cov.transpose()).abs().max();
                    prop_assert!(asym < 1e-9);
                    let jittered = state.cov + StateMatrix::identity() * 1e-9;
                    prop_assert!(nalgebra::Cholesky::new(jittered).is_some());
                }
            }
        }
    }
}
