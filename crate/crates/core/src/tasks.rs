//! Task definitions and fitness functions.
//!
//! Point navigation rewards visiting a sequence of targets while keeping the
//! path short. Rotation rewards turning counter-clockwise on the spot.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::brain::{build_cpg_network, BrainGenotype};
use crate::error::{Error, Result};
use crate::morphology::BodyPhenotype;
use crate::sim::{distance, simulate, wrap_angle, NoSteering, Pose, SteeringHook, SurrogateParams, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointNavTask {
    pub targets: Vec<[f64; 2]>,
    pub reach_radius: f64,
    /// Weight of the path-length penalty.
    pub omega: f64,
    pub duration: f64,
    pub steering_gain: f64,
}

impl Default for PointNavTask {
    fn default() -> Self {
        PointNavTask {
            targets: vec![[1.0, -1.0], [0.0, -2.0]],
            reach_radius: 0.01,
            omega: 0.1,
            duration: 40.0,
            steering_gain: 1.0,
        }
    }
}

impl PointNavTask {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("point navigation needs at least one target".into()));
        }
        if self.targets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("targets must be finite".into()));
        }
        if self.reach_radius.is_nan() || self.reach_radius <= 0.0 {
            return Err(Error::Config("reach_radius must be > 0".into()));
        }
        if self.duration.is_nan() || self.duration <= 0.0 || !self.omega.is_finite() || self.steering_gain.is_nan() || self.steering_gain < 0.0 {
            return Err(Error::Config("duration must be > 0, omega finite, steering_gain >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationTask {
    pub duration: f64,
}

impl Default for RotationTask {
    fn default() -> Self {
        RotationTask { duration: 30.0 }
    }
}

/// Signed angle from the robot's heading to `target`, in `(-pi, pi]`.
/// Negative means the target is on the right.
pub fn bearing(pose: &Pose, target: [f64; 2]) -> f64 {
    let h = pose.heading();
    let d = [target[0] - pose.position[0], target[1] - pose.position[1]];
    let cross = h[0] * d[1] - h[1] * d[0];
    let dot = h[0] * d[0] + h[1] * d[1];
    wrap_angle(cross.atan2(dot))
}

/// Speed factor for a joint at `grid_x` while heading for `target`.
///
/// Joints on the side the target lies on are slowed in proportion to the
/// bearing; the other side and centre-line joints run at full speed.
pub fn steering_scale(pose: &Pose, target: [f64; 2], grid_x: i32, gain: f64) -> f64 {
    let beta = bearing(pose, target);
    let toward_target = (beta < 0.0 && grid_x > 0) || (beta > 0.0 && grid_x < 0);
    if toward_target {
        (1.0 - beta.abs() / PI * gain).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Steers toward the first unreached target, advancing at sample instants.
#[derive(Debug, Clone)]
pub struct TargetSteering<'a> {
    task: &'a PointNavTask,
    next: usize,
}

impl<'a> TargetSteering<'a> {
    pub fn new(task: &'a PointNavTask) -> Self {
        TargetSteering { task, next: 0 }
    }

    pub fn reached(&self) -> usize {
        self.next
    }
}

impl SteeringHook for TargetSteering<'_> {
    fn scale(&self, pose: &Pose, grid_x: i32) -> f64 {
        match self.task.targets.get(self.next) {
            Some(&t) => steering_scale(pose, t, grid_x, self.task.steering_gain),
            None => 1.0,
        }
    }

    fn on_sample(&mut self, pose: &Pose) {
        if let Some(&t) = self.task.targets.get(self.next) {
            if distance(pose.position, t) <= self.task.reach_radius {
                self.next += 1;
            }
        }
    }
}

/// Number of targets reached in order; at most one new target per sample.
pub fn targets_reached(traj: &Trajectory, task: &PointNavTask) -> usize {
    let mut k = 0;
    for p in traj.positions() {
        if k < task.targets.len() && distance(p, task.targets[k]) <= task.reach_radius {
            k += 1;
        }
    }
    k
}

/// Full credit for each reached leg, plus progress toward the first
/// unreached target, minus `omega` times the path length.
pub fn fitness_point_navigation(traj: &Trajectory, task: &PointNavTask) -> Result<f64> {
    let Some(last) = traj.samples.last() else {
        return Err(Error::invalid("empty trajectory"));
    };
    let k = targets_reached(traj, task);
    let point = |i: usize| if i == 0 { [0.0, 0.0] } else { task.targets[i - 1] };
    let legs: f64 = (1..=k).map(|i| distance(point(i), point(i - 1))).sum();
    let progress = if k < task.targets.len() {
        distance(point(k + 1), point(k)) - distance(last.pose.position, point(k + 1))
    } else {
        0.0
    };
    Ok(legs + progress - task.omega * traj.path_length())
}

/// Total counter-clockwise rotation, summed over consecutive samples.
pub fn fitness_rotation(traj: &Trajectory) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::invalid("rotation fitness needs at least two samples"));
    }
    if let Some(s) = traj.samples.iter().find(|s| (s.pose.orientation.norm() - 1.0).abs() > 1e-6) {
        return Err(Error::invalid(format!("non-unit quaternion at t = {}", s.t)));
    }
    Ok(traj
        .samples
        .windows(2)
        .map(|w| w[0].pose.orientation.conjugate().mul(&w[1].pose.orientation).yaw())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    PointNavigation(PointNavTask),
    Rotation(RotationTask),
}

impl Default for Task {
    fn default() -> Self {
        Task::PointNavigation(PointNavTask::default())
    }
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::PointNavigation(_) => "point_navigation",
            Task::Rotation(_) => "rotation",
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Task::PointNavigation(t) => t.duration,
            Task::Rotation(t) => t.duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Task::PointNavigation(t) => t.validate(),
            Task::Rotation(t) if t.duration > 0.0 => Ok(()),
            Task::Rotation(_) => Err(Error::Config("rotation duration must be > 0".into())),
        }
    }
}

/// Scores a brain on a fixed body. Must be callable from many threads.
pub trait TaskEvaluator: Sync {
    fn evaluate(&self, body: &BodyPhenotype, brain: &BrainGenotype) -> Result<f64>;
}

impl<F> TaskEvaluator for F
where
    F: Fn(&BodyPhenotype, &BrainGenotype) -> Result<f64> + Sync,
{
    fn evaluate(&self, body: &BodyPhenotype, brain: &BrainGenotype) -> Result<f64> {
        self(body, brain)
    }
}

/// Evaluates a task in the surrogate simulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimEvaluator {
    pub task: Task,
    pub surrogate: SurrogateParams,
}

impl SimEvaluator {
    pub fn new(task: Task, surrogate: SurrogateParams) -> Self {
        SimEvaluator { task, surrogate }
    }

    pub fn trajectory(&self, body: &BodyPhenotype, brain: &BrainGenotype) -> Result<Trajectory> {
        let mut net = build_cpg_network(body, brain);
        match &self.task {
            Task::PointNavigation(t) => {
                simulate(body, &mut net, &mut TargetSteering::new(t), t.duration, &self.surrogate)
            }
            Task::Rotation(t) => simulate(body, &mut net, &mut NoSteering, t.duration, &self.surrogate),
        }
    }

    pub fn score(&self, traj: &Trajectory) -> Result<f64> {
        match &self.task {
            Task::PointNavigation(t) => fitness_point_navigation(traj, t),
            Task::Rotation(_) => fitness_rotation(traj),
        }
    }
}

impl TaskEvaluator for SimEvaluator {
    fn evaluate(&self, body: &BodyPhenotype, brain: &BrainGenotype) -> Result<f64> {
        self.score(&self.trajectory(body, brain)?)
    }
}
