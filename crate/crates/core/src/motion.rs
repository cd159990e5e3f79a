//! Constant-velocity Kalman model over `(cx, cy, area, aspect)` with
//! observation-centric re-update after occlusion gaps.
//!
//! State layout is `[cx, cy, area, aspect, v_cx, v_cy, v_area]`; the aspect
//! ratio is modelled as constant. Noise constants follow the SORT family
//! and can be overridden through [`MotionConfig`].

use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub type State = SVector<f64, 7>;
pub type Covariance = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;
type ObsMatrix = SMatrix<f64, 4, 7>;

/// Diagonal noise and initial-uncertainty constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConfig {
    /// Initial variance for the observed components.
    pub init_position_var: f64,
    /// Initial variance for the unobserved velocities.
    pub init_velocity_var: f64,
    /// Process noise on `cx, cy, area, aspect`.
    pub process_position_var: f64,
    /// Process noise on `v_cx, v_cy`; `v_area` gets this squared.
    pub process_velocity_var: f64,
    /// Measurement noise on the center.
    pub measurement_position_var: f64,
    /// Measurement noise on area and aspect.
    pub measurement_area_var: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            init_position_var: 10.0,
            init_velocity_var: 10_000.0,
            process_position_var: 1.0,
            process_velocity_var: 0.01,
            measurement_position_var: 1.0,
            measurement_area_var: 10.0,
        }
    }
}

impl MotionConfig {
    fn transition() -> Covariance {
        let mut f = Covariance::identity();
        f[(0, 4)] = 1.0;
        f[(1, 5)] = 1.0;
        f[(2, 6)] = 1.0;
        f
    }

    fn observation() -> ObsMatrix {
        ObsMatrix::identity()
    }

    fn process_noise(&self) -> Covariance {
        let p = self.process_position_var;
        let v = self.process_velocity_var;
        Covariance::from_diagonal(&State::from_column_slice(&[p, p, p, p, v, v, v * v]))
    }

    fn measurement_noise(&self) -> SMatrix<f64, 4, 4> {
        let p = self.measurement_position_var;
        let a = self.measurement_area_var;
        SMatrix::<f64, 4, 4>::from_diagonal(&Measurement::new(p, p, a, a))
    }

    fn initial_covariance(&self) -> Covariance {
        let p = self.init_position_var;
        let v = self.init_velocity_var;
        Covariance::from_diagonal(&State::from_column_slice(&[p, p, p, p, v, v, v]))
    }
}

fn measurement_of(b: &BoundingBox) -> Measurement {
    let (cx, cy, s, r) = b.to_state();
    Measurement::new(cx, cy, s, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub track_id: u64,
    state: State,
    covariance: Covariance,
    config: MotionConfig,
    /// Number of predict steps since creation.
    pub age: u32,
    /// Consecutive updates without a missed frame.
    pub hits: u32,
    pub time_since_update: u32,
    /// Set when the last predict had to zero the area velocity.
    pub area_clamped: bool,
    history: Vec<(u32, BoundingBox)>,
    /// Posterior at the last real update, the starting point for re-update.
    anchor: Option<(State, Covariance)>,
}

impl KalmanTrack {
    pub fn new(bbox: &BoundingBox, track_id: u64, frame: u32) -> Self {
        Self::with_config(bbox, track_id, frame, MotionConfig::default())
    }

    pub fn with_config(bbox: &BoundingBox, track_id: u64, frame: u32, config: MotionConfig) -> Self {
        let z = measurement_of(bbox);
        let state = State::from_column_slice(&[z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0]);
        let covariance = config.initial_covariance();
        Self {
            track_id,
            state,
            covariance,
            config,
            age: 0,
            hits: 1,
            time_since_update: 0,
            area_clamped: false,
            history: alloc::vec![(frame, *bbox)],
            anchor: Some((state, covariance)),
        }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn observation_history(&self) -> &[(u32, BoundingBox)] {
        &self.history
    }

    pub fn last_observation(&self) -> Option<&(u32, BoundingBox)> {
        self.history.last()
    }

    /// Box implied by the current state, if it is still geometrically valid.
    pub fn current_box(&self) -> Option<BoundingBox> {
        let s = &self.state;
        BoundingBox::from_state(s[0], s[1], s[2], s[3]).ok()
    }

    fn kf_predict(&mut self) {
        self.area_clamped = false;
        if self.state[2] + self.state[6] <= 0.0 {
            self.state[6] = 0.0;
            self.area_clamped = true;
        }
        let f = MotionConfig::transition();
        self.state = f * self.state;
        self.covariance = f * self.covariance * f.transpose() + self.config.process_noise();
        symmetrize(&mut self.covariance);
    }

    fn kf_correct(&mut self, z: &Measurement) {
        let h = MotionConfig::observation();
        let innovation = z - h * self.state;
        let s = h * self.covariance * h.transpose() + self.config.measurement_noise();
        // S is R plus a PSD term, so it is always invertible for positive R.
        let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
        let gain = self.covariance * h.transpose() * s_inv;
        self.state += gain * innovation;
        // Joseph form keeps the posterior symmetric positive semidefinite.
        let i_kh = Covariance::identity() - gain * h;
        self.covariance = i_kh * self.covariance * i_kh.transpose()
            + gain * self.config.measurement_noise() * gain.transpose();
        symmetrize(&mut self.covariance);
    }

    /// Advance one frame under constant velocity.
    pub fn predict(&mut self) {
        self.kf_predict();
        self.age += 1;
        if self.time_since_update > 0 {
            self.hits = 0;
        }
        self.time_since_update += 1;
    }

    /// Standard Kalman correction with an observation made at `frame`.
    pub fn update(&mut self, frame: u32, obs: &BoundingBox) {
        self.kf_correct(&measurement_of(obs));
        self.record_observation(frame, obs);
    }

    fn record_observation(&mut self, frame: u32, obs: &BoundingBox) {
        self.time_since_update = 0;
        self.hits += 1;
        self.history.push((frame, *obs));
        self.anchor = Some((self.state, self.covariance));
    }

    /// Observation-centric re-update.
    ///
    /// `gap` is the number of predict steps since the last observation. The
    /// filter is rewound to its posterior at that observation and replayed
    /// along a linear virtual trajectory toward `new_obs`, ending with the real
    /// correction. With `gap == 1` this is exactly [`KalmanTrack::update`].
    pub fn reupdate(&mut self, frame: u32, new_obs: &BoundingBox, gap: u32) -> Result<()> {
        if gap == 0 {
            return Err(Error::InvalidGap(gap));
        }
        let (_, last_box) = *self.last_observation().ok_or(Error::NoAnchorObservation)?;
        if gap == 1 {
            self.update(frame, new_obs);
            return Ok(());
        }
        let (state, cov) = self.anchor.ok_or(Error::NoAnchorObservation)?;
        self.state = state;
        self.covariance = cov;
        let from = measurement_of(&last_box);
        let to = measurement_of(new_obs);
        for step in 1..gap {
            let t = f64::from(step) / f64::from(gap);
            let virtual_obs = from + (to - from) * t;
            self.kf_predict();
            self.kf_correct(&virtual_obs);
        }
        self.kf_predict();
        self.kf_correct(&to);
        self.record_observation(frame, new_obs);
        Ok(())
    }

    /// Unit direction from the observation `span` entries back to the latest
    /// one, or `None` when the history is too short or the track did not move.
    pub fn velocity_direction(&self, span: usize) -> Option<(f64, f64)> {
        let span = span.max(1);
        let n = self.history.len();
        if n < span + 1 {
            return None;
        }
        let (x0, y0) = self.history[n - 1 - span].1.center();
        let (x1, y1) = self.history[n - 1].1.center();
        unit(x1 - x0, y1 - y0)
    }
}

pub(crate) fn unit(dx: f64, dy: f64) -> Option<(f64, f64)> {
    let n = libm::hypot(dx, dy);
    if n > 1e-12 {
        Some((dx / n, dy / n))
    } else {
        None
    }
}

fn symmetrize(m: &mut Covariance) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}
