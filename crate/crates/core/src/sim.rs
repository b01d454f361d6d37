//! Planar surrogate simulation.
//!
//! The surrogate does not model contacts or rigid bodies. Joint activity is
//! turned directly into motion: every control tick the robot moves forward by
//! an amount proportional to how much its joint outputs changed, and it yaws
//! by the imbalance between right-side (`grid x > 0`) and left-side activity.
//! The resulting pose is sampled at a fixed rate into a [`Trajectory`].
//!
//! The heading at yaw 0 is `+y` and yaw grows counter-clockwise, so the
//! heading vector is `(-sin yaw, cos yaw)` and the body's right side is `+x`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::brain::CpgNetwork;
use crate::error::{Error, Result};
use crate::morphology::BodyPhenotype;

/// Integration step of the CPG between control ticks.
pub const CPG_DT: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Rotation by `yaw` about the vertical axis.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (yaw / 2.0).sin_cos();
        Quaternion { w: c, x: 0.0, y: 0.0, z: s }
    }

    /// Yaw of the rotation in `(-pi, pi]`, assuming rotation about `z`.
    pub fn yaw(&self) -> f64 {
        wrap_angle(2.0 * self.z.atan2(self.w))
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 2],
    /// Accumulated yaw; not wrapped.
    pub yaw: f64,
    pub orientation: Quaternion,
}

impl Pose {
    pub fn new(position: [f64; 2], yaw: f64) -> Self {
        Pose {
            position,
            yaw,
            orientation: Quaternion::from_yaw(yaw),
        }
    }

    pub fn origin() -> Self {
        Pose::new([0.0, 0.0], 0.0)
    }

    pub fn heading(&self) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [-s, c]
    }

    fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.yaw.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub sample_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRow {
    t: f64,
    x: f64,
    y: f64,
    yaw: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.samples.iter().map(|s| s.pose.position)
    }

    /// Polyline length of the sampled path.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| distance(w[0].pose.position, w[1].pose.position))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for s in &self.samples {
            let q = s.pose.orientation;
            writer
                .serialize(TrajectoryRow {
                    t: s.t,
                    x: s.pose.position[0],
                    y: s.pose.position[1],
                    yaw: s.pose.yaw,
                    qw: q.w,
                    qx: q.x,
                    qy: q.y,
                    qz: q.z,
                })
                .map_err(|e| Error::invalid(format!("trajectory csv: {e}")))?;
        }
        writer
            .flush()
            .map_err(|e| Error::invalid(format!("trajectory csv: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let mut samples = Vec::new();
        for row in reader.deserialize::<TrajectoryRow>() {
            let r = row.map_err(|e| Error::parse(path, e.to_string()))?;
            samples.push(Sample {
                t: r.t,
                pose: Pose {
                    position: [r.x, r.y],
                    yaw: r.yaw,
                    orientation: Quaternion { w: r.qw, x: r.qx, y: r.qy, z: r.qz },
                },
            });
        }
        let sample_rate = match samples.as_slice() {
            [a, b, ..] if b.t > a.t => 1.0 / (b.t - a.t),
            _ => SurrogateParams::default().sample_rate,
        };
        Ok(Trajectory { samples, sample_rate })
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    /// Forward displacement per unit of absolute output change (m).
    pub c_f: f64,
    /// Turn rate per unit of squared left/right imbalance (rad/s).
    pub c_t: f64,
    /// Seconds between controller reads.
    pub control_dt: f64,
    /// Pose samples per second.
    pub sample_rate: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            c_f: 0.05,
            c_t: 0.5,
            control_dt: 0.05,
            sample_rate: 5.0,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.c_f >= 0.0 && self.c_f.is_finite() && self.c_t.is_finite()) {
            return Err(Error::Config("surrogate constants must be finite, c_f >= 0".into()));
        }
        if !positive(self.control_dt) || !positive(self.sample_rate) {
            return Err(Error::Config("control_dt and sample_rate must be positive".into()));
        }
        let ratio = 1.0 / (self.sample_rate * self.control_dt);
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sample period must be a whole number of control ticks (got {ratio})"
            )));
        }
        let steps = self.control_dt / CPG_DT;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("control_dt must be a multiple of {CPG_DT} s")));
        }
        Ok(())
    }

    fn ticks_per_sample(&self) -> usize {
        (1.0 / (self.sample_rate * self.control_dt)).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRecord {
    pub grid_x: i32,
    pub delta_out: f64,
}

/// Advances `pose` by one control tick of length `dt`.
///
/// The robot first translates along its current heading, then turns.
pub fn surrogate_step(pose: &Pose, records: &[JointRecord], dt: f64, params: &SurrogateParams) -> Pose {
    let mut drive = 0.0;
    let mut imbalance = 0.0;
    for r in records {
        drive += r.delta_out.abs();
        let sq = r.delta_out * r.delta_out;
        match r.grid_x.signum() {
            1 => imbalance += sq,
            -1 => imbalance -= sq,
            _ => {}
        }
    }
    let step = params.c_f * drive;
    let h = pose.heading();
    Pose::new(
        [pose.position[0] + step * h[0], pose.position[1] + step * h[1]],
        pose.yaw + params.c_t * imbalance * dt,
    )
}

/// Something that produces per-joint outputs in `[-1, 1]` over time.
pub trait Controller {
    fn outputs(&self) -> &[f64];
    /// Runs the controller for `duration` seconds and returns the new outputs.
    fn advance(&mut self, duration: f64) -> Result<&[f64]>;
}

impl Controller for CpgNetwork {
    fn outputs(&self) -> &[f64] {
        CpgNetwork::outputs(self)
    }

    fn advance(&mut self, duration: f64) -> Result<&[f64]> {
        let steps = (duration / CPG_DT).round() as usize;
        CpgNetwork::advance(self, CPG_DT, steps)
    }
}

/// Per-joint speed scaling applied to output changes before they drive the
/// body. Implementations may keep state, updated only at sample instants.
pub trait SteeringHook {
    fn scale(&self, pose: &Pose, grid_x: i32) -> f64;
    fn on_sample(&mut self, _pose: &Pose) {}
}

pub struct NoSteering;

impl SteeringHook for NoSteering {
    fn scale(&self, _pose: &Pose, _grid_x: i32) -> f64 {
        1.0
    }
}

/// A simulation backend. The surrogate is the only one shipped.
pub trait Backend {
    fn simulate(
        &self,
        body: &BodyPhenotype,
        controller: &mut dyn Controller,
        steering: &mut dyn SteeringHook,
        duration: f64,
    ) -> Result<Trajectory>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Surrogate {
    pub params: SurrogateParams,
}

impl Backend for Surrogate {
    fn simulate(
        &self,
        body: &BodyPhenotype,
        controller: &mut dyn Controller,
        steering: &mut dyn SteeringHook,
        duration: f64,
    ) -> Result<Trajectory> {
        simulate(body, controller, steering, duration, &self.params)
    }
}

/// Runs the surrogate for `duration` seconds.
///
/// Joint `i` of the controller is the `i`-th entry of
/// [`BodyPhenotype::joint_grid_2d`]. Samples are taken at `t = 0` and then
/// every `1 / sample_rate` seconds, so a 40 s run at 5 Hz has 201 samples.
pub fn simulate(
    body: &BodyPhenotype,
    controller: &mut dyn Controller,
    steering: &mut dyn SteeringHook,
    duration: f64,
    params: &SurrogateParams,
) -> Result<Trajectory> {
    params.validate()?;
    let sample_count = duration * params.sample_rate;
    if duration.is_nan() || duration <= 0.0 || (sample_count - sample_count.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "duration {duration} is not a positive whole number of sample periods"
        )));
    }
    let grid_x: Vec<i32> = body.joint_grid_2d().iter().map(|j| j.cell.0).collect();
    if grid_x.len() != controller.outputs().len() {
        return Err(Error::invalid(format!(
            "controller drives {} joints but the body has {}",
            controller.outputs().len(),
            grid_x.len()
        )));
    }

    let per_sample = params.ticks_per_sample();
    let samples_wanted = sample_count.round() as usize;
    let mut samples = Vec::with_capacity(samples_wanted + 1);
    let mut pose = Pose::origin();
    samples.push(Sample { t: 0.0, pose });
    steering.on_sample(&pose);

    let mut previous = controller.outputs().to_vec();
    let mut records: Vec<JointRecord> = grid_x.iter().map(|&x| JointRecord { grid_x: x, delta_out: 0.0 }).collect();
    for tick in 1..=samples_wanted * per_sample {
        let fail = |reason: String| Error::Simulation { tick, reason };
        let outputs = controller.advance(params.control_dt).map_err(|e| fail(e.to_string()))?;
        for (k, r) in records.iter_mut().enumerate() {
            r.delta_out = (outputs[k] - previous[k]) * steering.scale(&pose, r.grid_x);
            previous[k] = outputs[k];
        }
        pose = surrogate_step(&pose, &records, params.control_dt, params);
        if !pose.is_finite() {
            return Err(fail("pose is not finite".into()));
        }
        if tick % per_sample == 0 {
            let t = (tick / per_sample) as f64 / params.sample_rate;
            samples.push(Sample { t, pose });
            steering.on_sample(&pose);
        }
    }
    Ok(Trajectory {
        samples,
        sample_rate: params.sample_rate,
    })
}
