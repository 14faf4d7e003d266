//! Nominal trajectories for the figure-eight and the rounded-square track.
//!
//! Tracks are chains of constant-curvature segments traversed at constant
//! speed. Each segment is driven by one sticking push found by
//! [`sticking_push_for_curvature`].

use alloc::vec::Vec;
use core::f64::consts::PI;
use serde::{Deserialize, Serialize};

use crate::slider::{sticking_push_for_curvature, SliderParams, State};
use crate::{Error, Result};
// std's inherent float methods shadow this whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackKind {
    EightTrack,
    SquareTrack,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub kind: TrackKind,
    /// Circle radius (figure-eight) or corner radius (square).
    pub radius: f64,
    /// Straight-segment length; unused by the figure-eight.
    pub side: f64,
    pub speed: f64,
    pub step_h: f64,
}

impl TrackSpec {
    pub fn eight(speed: f64) -> Self {
        TrackSpec { kind: TrackKind::EightTrack, radius: 0.15, side: 0.0, speed, step_h: 0.01 }
    }

    pub fn square(speed: f64) -> Self {
        TrackSpec { kind: TrackKind::SquareTrack, radius: 0.08, side: 0.30, speed, step_h: 0.01 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.speed > 0.0 && self.step_h > 0.0) {
            return Err(Error::InvalidParameter("track radius, speed and step must be positive"));
        }
        if self.kind == TrackKind::SquareTrack && !(self.side >= 0.0) {
            return Err(Error::InvalidParameter("square side must be non-negative"));
        }
        Ok(())
    }

    /// Constant-curvature pieces of one lap, starting at the origin heading +x.
    pub fn segments(&self) -> Vec<Segment> {
        let k = 1.0 / self.radius;
        match self.kind {
            // The two circles touch at the origin, where the curvature flips.
            TrackKind::EightTrack => alloc::vec![
                Segment { length: 2.0 * PI * self.radius, curvature: k },
                Segment { length: 2.0 * PI * self.radius, curvature: -k },
            ],
            TrackKind::SquareTrack => (0..4)
                .flat_map(|_| {
                    [
                        Segment { length: self.side, curvature: 0.0 },
                        Segment { length: 0.5 * PI * self.radius, curvature: k },
                    ]
                })
                .filter(|s| s.length > 0.0)
                .collect(),
        }
    }

    pub fn lap_length(&self) -> f64 {
        self.segments().iter().map(|s| s.length).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub length: f64,
    pub curvature: f64,
}

/// Planar pose after travelling `d` along a constant-curvature arc.
fn advance_pose(pose: (f64, f64, f64), d: f64, curvature: f64) -> (f64, f64, f64) {
    let (x0, y0, th0) = pose;
    if curvature == 0.0 {
        return (x0 + d * th0.cos(), y0 + d * th0.sin(), th0);
    }
    let th = th0 + curvature * d;
    (
        x0 + (th.sin() - th0.sin()) / curvature,
        y0 - (th.cos() - th0.cos()) / curvature,
        th,
    )
}

/// Nominal state and inputs at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalPoint {
    pub state: State,
    /// `[f_n, f_t, p_y_dot]`.
    pub input_analytical: [f64; 3],
    /// Pusher velocity `[v_n, v_t]` in the body frame.
    pub input_learned: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalTrajectory {
    pub spec: TrackSpec,
    pub lap_time: f64,
    /// Heading gained over one lap (0 for the figure-eight, 2 pi for the square).
    pub lap_heading: f64,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub inputs_analytical: Vec<[f64; 3]>,
    pub inputs_learned: Vec<[f64; 2]>,
    segments: Vec<Segment>,
    pushes: Vec<([f64; 3], [f64; 2], f64)>,
}

pub fn generate_nominal(spec: &TrackSpec, params: &SliderParams) -> Result<NominalTrajectory> {
    spec.validate()?;
    let segments = spec.segments();
    let pushes = segments
        .iter()
        .map(|s| {
            let p = sticking_push_for_curvature(params, s.curvature, spec.speed)?;
            Ok(([p.f_n, p.f_t, 0.0], p.v_p, p.p_y))
        })
        .collect::<Result<Vec<_>>>()?;
    let lap_length: f64 = segments.iter().map(|s| s.length).sum();
    let lap_time = lap_length / spec.speed;
    let lap_heading = segments.iter().map(|s| s.length * s.curvature).sum();
    let samples = (lap_time / spec.step_h + 1e-9).floor() as usize + 1;

    let mut traj = NominalTrajectory {
        spec: *spec,
        lap_time,
        lap_heading,
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
        inputs_analytical: Vec::with_capacity(samples),
        inputs_learned: Vec::with_capacity(samples),
        segments,
        pushes,
    };
    for i in 0..samples {
        let t = i as f64 * spec.step_h;
        let (pose, seg) = traj.pose_at_arclength(spec.speed * t);
        let (u_m, u_d, p_y) = traj.pushes[seg];
        traj.times.push(t);
        traj.states.push(State::new(pose.0, pose.1, pose.2, p_y));
        traj.inputs_analytical.push(u_m);
        traj.inputs_learned.push(u_d);
    }
    Ok(traj)
}

impl NominalTrajectory {
    /// Pose at arc length `s` within one lap and the index of the segment
    /// in force there (a boundary belongs to the following segment).
    pub fn pose_at_arclength(&self, s: f64) -> ((f64, f64, f64), usize) {
        let mut pose = (0.0, 0.0, 0.0);
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if s < start + seg.length || i == last {
                return (advance_pose(pose, (s - start).min(seg.length), seg.curvature), i);
            }
            pose = advance_pose(pose, seg.length, seg.curvature);
            start += seg.length;
        }
        unreachable!("tracks have at least one segment")
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of control steps in one lap.
    pub fn lap_steps(&self) -> usize {
        (self.lap_time / self.spec.step_h).round() as usize
    }

    /// Nominal point at time `t`, wrapping periodically over laps. States are
    /// interpolated linearly, inputs held from the preceding sample.
    pub fn lookup(&self, t: f64) -> NominalPoint {
        let laps = (t / self.lap_time + 1e-12).floor();
        let tau = (t - laps * self.lap_time).max(0.0);
        let offset = laps * self.lap_heading;
        let h = self.spec.step_h;
        let pos = tau / h;
        let i = ((pos + 1e-9).floor() as usize).min(self.states.len() - 1);
        let frac = (pos - i as f64).clamp(0.0, 1.0);
        let a = self.states[i];
        let (b, span) = if i + 1 < self.states.len() {
            (self.states[i + 1], 1.0)
        } else {
            let first = self.states[0];
            let rest = (self.lap_time - self.times[i]) / h;
            (State { theta: first.theta + self.lap_heading, ..first }, rest.max(1e-12))
        };
        let w = (frac / span).min(1.0);
        let lerp = |p: f64, q: f64| p + (q - p) * w;
        let state = State::new(
            lerp(a.x, b.x),
            lerp(a.y, b.y),
            lerp(a.theta, b.theta) + offset,
            if w < 1.0 { a.p_y } else { b.p_y },
        );
        NominalPoint {
            state,
            input_analytical: self.inputs_analytical[i],
            input_learned: self.inputs_learned[i],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slider::{resolve_push, ContactMode};

    fn params() -> SliderParams {
        SliderParams::default()
    }

    #[test]
    fn eight_track_lap() {
        let spec = TrackSpec::eight(0.08);
        let traj = generate_nominal(&spec, &params()).unwrap();
        assert!((spec.lap_length() - 4.0 * PI * 0.15).abs() < 1e-12);
        assert!((traj.lap_time - 23.56194490192345).abs() < 1e-9);
        assert_eq!(traj.lap_heading, 0.0);
        let (end, _) = traj.pose_at_arclength(spec.lap_length());
        assert!(end.0.abs() < 1e-6 && end.1.abs() < 1e-6);
        let (mid, _) = traj.pose_at_arclength(0.5 * spec.lap_length());
        assert!(mid.0.abs() < 1e-9 && mid.1.abs() < 1e-9);
    }

    #[test]
    fn arc_contact_offset_is_inside_face() {
        let traj = generate_nominal(&TrackSpec::eight(0.08), &params()).unwrap();
        let p_y = traj.states[0].p_y;
        assert!(p_y.abs() > 0.0 && p_y.abs() < params().half_width());
        // second circle turns the other way
        let later = traj.states[traj.len() - 2].p_y;
        assert!((later + p_y).abs() < 1e-15);
    }

    #[test]
    fn straight_segments_push_centered() {
        let traj = generate_nominal(&TrackSpec::square(0.05), &params()).unwrap();
        assert_eq!(traj.states[1].p_y, 0.0);
        assert_eq!(traj.inputs_learned[1], [0.05, 0.0]);
        assert_eq!(traj.inputs_analytical[1][2], 0.0);
        assert!((traj.lap_heading - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn consecutive_samples_are_speed_times_h_apart() {
        for spec in [TrackSpec::eight(0.08), TrackSpec::eight(0.02), TrackSpec::square(0.05)] {
            let traj = generate_nominal(&spec, &params()).unwrap();
            for w in traj.states.windows(2) {
                let d = w[0].distance_to(&w[1]);
                assert!((d - spec.speed * spec.step_h).abs() <= 1e-9, "{d}");
            }
        }
    }

    #[test]
    fn nominal_inputs_are_sticking_and_consistent() {
        let p = params();
        let traj = generate_nominal(&TrackSpec::eight(0.08), &p).unwrap();
        for i in (0..traj.len()).step_by(97) {
            let x = traj.states[i];
            let r = resolve_push(&p, &x, traj.inputs_learned[i]).unwrap();
            assert_eq!(r.mode, ContactMode::Sticking);
            assert!((r.f_n - traj.inputs_analytical[i][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn lookup_wraps_and_interpolates() {
        let traj = generate_nominal(&TrackSpec::square(0.05), &params()).unwrap();
        let first = traj.lookup(0.0);
        assert_eq!(first.state, traj.states[0]);
        let wrapped = traj.lookup(traj.lap_time);
        assert!(wrapped.state.distance_to(&first.state) < 1e-9);
        assert!((wrapped.state.theta - 2.0 * PI).abs() < 1e-9);
        let mid = traj.lookup(2.5 * traj.spec.step_h);
        let (a, b) = (traj.states[2], traj.states[3]);
        assert!((mid.state.x - 0.5 * (a.x + b.x)).abs() < 1e-15);
        assert_eq!(mid.input_learned, traj.inputs_learned[2]);
        // lap end segment interpolates toward the start
        let late = traj.lookup(traj.lap_time - 1e-4);
        assert!(late.state.distance_to(&first.state) < 1e-5);
    }

    #[test]
    fn tight_corners_are_infeasible() {
        let spec = TrackSpec { radius: 0.01, ..TrackSpec::square(0.05) };
        assert!(matches!(generate_nominal(&spec, &params()), Err(Error::InfeasibleCurvature { .. })));
    }
}
