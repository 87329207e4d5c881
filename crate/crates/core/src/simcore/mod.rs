//! Closed-loop micro-simulation of a scenario bundle.
//!
//! Vehicles follow lanes with IDM car-following and a threshold lane-change
//! rule; the AV runs [`av_policy`]; pedestrians and cyclists keep their
//! commanded speed and heading. Everything is deterministic per bundle seed.

mod behavior;
mod lanes;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use behavior::{
    av_policy, time_to_collision, AvPolicyParams, BehaviorParams, Control, Hint, LaneGaps, LeaderInfo, Observation, Side,
    EMERGENCY_DECEL,
};

use crate::compgen::{plan_route, AgentState, PlacedObject, PlannedRoute};
use crate::geometry::{wrap_degrees, OrientedRect, Vec2};
use crate::ir::{Role, ScenarioBundle};
use lanes::LaneGraph;

pub const DEFAULT_DT: f64 = 0.1;
pub const MAX_DT: f64 = 0.5;
/// Meters of path scanned for a leader.
const LOOKAHEAD: f64 = 150.0;
/// Lateral speed during a lane change, m/s.
const LATERAL_RATE: f64 = 1.0;
const LANE_CHANGE_MIN_SPEED: f64 = 3.0;
const LANE_CHANGE_COOLDOWN: f64 = 3.0;
/// Deceleration a new follower may be asked for by a lane change.
const SAFE_DECEL: f64 = 4.0;
const SUDDEN_BRAKE_ONSET: f64 = 2.0;
const SUDDEN_BRAKE_DECEL: f64 = 6.0;
/// Distance after which a crossing pedestrian has left the road.
const CROSSING_DISTANCE: f64 = 20.0;
const LATERAL_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub behavior: BehaviorParams,
    pub av: AvPolicyParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { behavior: BehaviorParams::default(), av: AvPolicyParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step must be in (0, {MAX_DT}], got {0}")]
    InvalidTimeStep(f64),
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("behavior parameters must be positive with exponent ≥ 1")]
    InvalidParams,
    #[error("agent {0} is not on a lane of the network")]
    OffNetwork(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub step: usize,
    pub agent_a: String,
    pub agent_b: String,
    pub penetration: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentSeries {
    /// Cumulative distance travelled after each step.
    pub odometry: Vec<f64>,
    pub accel: Vec<f64>,
    pub jerk: Vec<f64>,
    /// Time to collision with the leader after each step, when closing in.
    pub ttc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvRouteTrace {
    pub route: PlannedRoute,
    /// Distance covered along the route after each step.
    pub progress: Vec<f64>,
    /// Simulated time at which the route end was reached.
    pub finished_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub dt: f64,
    /// `steps[k]` holds every agent at time (k + 1)·dt.
    pub steps: Vec<Vec<AgentState>>,
    pub collisions: Vec<CollisionEvent>,
    pub series: BTreeMap<String, AgentSeries>,
    pub av: Option<AvRouteTrace>,
}

/// One line of the exported trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
    pub accel: f64,
}

impl SimulationTrace {
    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.dt
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        let mut out = Vec::new();
        for (k, step) in self.steps.iter().enumerate() {
            for a in step {
                let accel = self.series.get(&a.id).and_then(|s| s.accel.get(k)).copied().unwrap_or(0.0);
                out.push(TraceRecord { step: k, id: a.id.clone(), x: a.x, y: a.y, speed: a.speed, heading: a.heading, accel });
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 over the exported records and collision events.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_jsonl().as_bytes());
        h.update(serde_json::to_string(&self.collisions).expect("events serialize").as_bytes());
        hex::encode(h.finalize())
    }

    pub fn collided(&self, id: &str) -> bool {
        self.collisions.iter().any(|c| c.agent_a == id || c.agent_b == id)
    }
}

/// Id used for a static object in collision events.
pub fn object_id(index: usize) -> String {
    format!("o{index}")
}

/// Overlapping pairs among `states`, as (i, j, penetration) with i < j.
pub fn detect_collisions(states: &[AgentState]) -> Vec<(usize, usize, f64)> {
    let rects: Vec<OrientedRect> = states.iter().map(AgentState::rect).collect();
    let mut out = Vec::new();
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            if let Some(p) = rects[i].penetration(&rects[j]) {
                out.push((i, j, p));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Behavior {
    Follow,
    CutIn,
    SuddenBrake,
    LeftTurn,
    Overtake,
    Walk,
}

fn behavior_of(a: &AgentState) -> Behavior {
    let i = a.intent.to_ascii_lowercase();
    if !a.kind.is_vehicle() {
        Behavior::Walk
    } else if i.contains("cut") || i.contains("merge") {
        Behavior::CutIn
    } else if i.contains("brak") || i.contains("rear") {
        Behavior::SuddenBrake
    } else if i.contains("left turn") || i.contains("turn left") {
        Behavior::LeftTurn
    } else if i.contains("overtak") {
        Behavior::Overtake
    } else {
        Behavior::Follow
    }
}

#[derive(Debug, Clone)]
struct Body {
    state: AgentState,
    behavior: Behavior,
    vehicle: bool,
    active: bool,
    lane: usize,
    s: f64,
    lateral: f64,
    /// Lane being left during a lane change.
    shadow: Option<usize>,
    speed: f64,
    accel: f64,
    plan: VecDeque<usize>,
    last_change: f64,
    cut_in_done: bool,
    heading: f64,
    odometry: f64,
    walked: f64,
}

struct World<'a> {
    graph: LaneGraph,
    bodies: Vec<Body>,
    objects: Vec<(OrientedRect, Vec2)>,
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    av: Option<usize>,
    route: Option<PlannedRoute>,
    progress: f64,
    finished_at: Option<f64>,
    time: f64,
}

#[derive(Debug, Clone, Copy)]
struct Decision {
    accel: f64,
    change_to: Option<usize>,
    ttc: Option<f64>,
}

impl World<'_> {
    fn lane_len(&self, lane: usize) -> f64 {
        self.graph.lanes[lane].length()
    }

    /// Picks the lane after `last` for body `i`.
    fn choose_next(&mut self, i: usize, last: usize) -> Option<usize> {
        let candidates = self.graph.lanes[last].next.clone();
        if candidates.is_empty() {
            return None;
        }
        if Some(i) == self.av {
            let lane = &self.graph.lanes[last];
            if lane.connector {
                return candidates.first().copied();
            }
            let route = &self.route.as_ref()?.edges;
            let pos = route.iter().position(|e| *e == lane.edge)?;
            let want = route.get(pos + 1)?;
            let index = lane.id.index;
            return candidates
                .iter()
                .copied()
                .filter(|c| self.graph.lanes[*c].edge == *want)
                .min_by_key(|c| {
                    let target = &self.graph.lanes[*c];
                    let idx = if target.connector { target.next.first().map_or(0, |t| self.graph.lanes[*t].id.index) } else { target.id.index };
                    idx.abs_diff(index)
                });
        }
        if self.bodies[i].behavior == Behavior::LeftTurn {
            let h = self.graph.lanes[last].end_heading();
            return candidates
                .iter()
                .copied()
                .max_by(|a, b| {
                    let ta = (self.graph.lanes[*a].end_heading() - h).sin();
                    let tb = (self.graph.lanes[*b].end_heading() - h).sin();
                    ta.total_cmp(&tb).then(b.cmp(a))
                });
        }
        Some(candidates[self.rng.gen_range(0..candidates.len())])
    }

    fn extend_plan(&mut self, i: usize) {
        if !self.bodies[i].vehicle || !self.bodies[i].active {
            return;
        }
        loop {
            let b = &self.bodies[i];
            let ahead: f64 = self.lane_len(b.lane) - b.s + b.plan.iter().map(|l| self.lane_len(*l)).sum::<f64>();
            if ahead >= LOOKAHEAD {
                return;
            }
            let last = b.plan.back().copied().unwrap_or(b.lane);
            match self.choose_next(i, last) {
                Some(n) => self.bodies[i].plan.push_back(n),
                None => return,
            }
        }
    }

    /// Lanes on the path of body `i` with the offset of each lane start from
    /// the body's position.
    fn path(&self, i: usize) -> Vec<(usize, f64)> {
        let b = &self.bodies[i];
        let mut out = vec![(b.lane, -b.s)];
        let mut offset = self.lane_len(b.lane) - b.s;
        for l in &b.plan {
            if offset > LOOKAHEAD {
                break;
            }
            out.push((*l, offset));
            offset += self.lane_len(*l);
        }
        out
    }

    /// Nearest thing ahead of body `i` on its path: (bumper gap, speed along
    /// the path).
    fn leader(&self, i: usize) -> Option<LeaderInfo> {
        let me = &self.bodies[i];
        let path = self.path(i);
        let mut best: Option<(f64, LeaderInfo)> = None;
        let mut offer = |along: f64, gap: f64, speed: f64| {
            if along > 1e-9 && best.map_or(true, |(a, _)| along < a) {
                best = Some((along, LeaderInfo { gap, speed }));
            }
        };
        for (j, other) in self.bodies.iter().enumerate() {
            if j == i || !other.active {
                continue;
            }
            if other.vehicle {
                let lanes = std::iter::once(other.lane).chain(other.shadow);
                'lanes: for lane in lanes {
                    for (k, &(pl, off)) in path.iter().enumerate() {
                        if pl == lane {
                            let along = off + other.s;
                            if k == 0 && along <= 0.0 {
                                continue;
                            }
                            offer(along, along - (me.state.length + other.state.length) / 2.0, other.speed);
                            break 'lanes;
                        }
                    }
                }
            } else {
                let p = other.state.position();
                let dir = Vec2::from_angle(other.heading);
                self.geometric_leader(&path, me, p, other.state.length, other.state.width, dir * other.speed, &mut offer);
            }
        }
        for (rect, _) in &self.objects {
            self.geometric_leader(&path, me, rect.center, rect.length.max(rect.width), rect.width.min(rect.length), Vec2::default(), &mut offer);
        }
        best.map(|(_, l)| l)
    }

    #[allow(clippy::too_many_arguments)]
    fn geometric_leader(
        &self,
        path: &[(usize, f64)],
        me: &Body,
        p: Vec2,
        length: f64,
        width: f64,
        velocity: Vec2,
        offer: &mut impl FnMut(f64, f64, f64),
    ) {
        for (k, &(lane, off)) in path.iter().enumerate() {
            let line = &self.graph.lanes[lane].line;
            let (s, lat) = line.project(p);
            let reference = if k == 0 { me.lateral } else { 0.0 };
            if (lat - reference).abs() >= (me.state.width + width) / 2.0 + LATERAL_MARGIN {
                continue;
            }
            let (_, h) = line.pose_at(s);
            let along = off + s;
            offer(along, along - (me.state.length + length) / 2.0, velocity.dot(Vec2::from_angle(h)).max(0.0));
            return;
        }
    }

    /// Vehicles on `lane` nearest ahead of and behind arc length `s`:
    /// (bumper gap, speed) each.
    fn neighbours(&self, lane: usize, s: f64, length: f64, except: usize) -> (Option<(f64, f64)>, Option<(f64, f64)>) {
        let mut ahead: Option<(f64, f64)> = None;
        let mut behind: Option<(f64, f64)> = None;
        for (j, o) in self.bodies.iter().enumerate() {
            if j == except || !o.active || !o.vehicle || (o.lane != lane && o.shadow != Some(lane)) {
                continue;
            }
            let d = o.s - s;
            let gap = d.abs() - (length + o.state.length) / 2.0;
            if d >= 0.0 {
                if ahead.map_or(true, |(g, _)| gap < g) {
                    ahead = Some((gap, o.speed));
                }
            } else if behind.map_or(true, |(g, _)| gap < g) {
                behind = Some((gap, o.speed));
            }
        }
        (ahead, behind)
    }

    fn can_change_lane(&self, i: usize) -> bool {
        let b = &self.bodies[i];
        let lane = &self.graph.lanes[b.lane];
        let needed = b.speed * (crate::netgen::DEFAULT_LANE_WIDTH / LATERAL_RATE) + 10.0;
        b.vehicle
            && b.lateral == 0.0
            && b.shadow.is_none()
            && lane.straight
            && b.speed >= LANE_CHANGE_MIN_SPEED
            && self.time - b.last_change >= LANE_CHANGE_COOLDOWN
            && lane.length() - b.s >= needed
    }

    fn target_lane(&self, i: usize, side: Side) -> Option<usize> {
        let lane = &self.graph.lanes[self.bodies[i].lane];
        let t = match side {
            Side::Left => lane.left,
            Side::Right => lane.right,
        }?;
        self.graph.lanes[t].straight.then_some(t)
    }

    fn gaps(&self, i: usize, target: usize) -> LaneGaps {
        let b = &self.bodies[i];
        let s = self.graph.lanes[target].line.project(b.state.position()).0;
        let (ahead, behind) = self.neighbours(target, s, b.state.length, i);
        LaneGaps { ahead: ahead.map_or(f64::INFINITY, |a| a.0), behind: behind.map_or(f64::INFINITY, |b| b.0) }
    }

    fn decide(&self, i: usize) -> Decision {
        let b = &self.bodies[i];
        let leader = self.leader(i);
        let ttc = time_to_collision(b.speed, leader);
        let limit = self.graph.lanes[b.lane].speed;
        if Some(i) == self.av {
            let allowed = self.can_change_lane(i);
            let side_gaps = |side| allowed.then(|| self.target_lane(i, side)).flatten().map(|t| self.gaps(i, t));
            let obs = Observation { speed: b.speed, speed_limit: limit, leader, left: side_gaps(Side::Left), right: side_gaps(Side::Right) };
            let c = av_policy(&obs, &self.cfg.av);
            let change_to = c.lane_change.and_then(|side| self.target_lane(i, side));
            return Decision { accel: c.accel, change_to, ttc };
        }
        let p = &self.cfg.behavior;
        let v0 = p.desired_speed.min(limit);
        let follow = |l: Option<LeaderInfo>| p.idm_accel(b.speed, v0, l.map(|l| (l.gap, b.speed - l.speed)));
        let mut accel = follow(leader);
        if b.behavior == Behavior::SuddenBrake && self.time >= SUDDEN_BRAKE_ONSET {
            accel = -SUDDEN_BRAKE_DECEL;
        }
        let mut change_to = None;
        if self.can_change_lane(i) {
            if b.behavior == Behavior::CutIn && !b.cut_in_done {
                if let Some(av) = self.av.filter(|av| self.bodies[*av].active) {
                    let av_lane = self.bodies[av].lane;
                    let lane = &self.graph.lanes[b.lane];
                    if lane.left == Some(av_lane) || lane.right == Some(av_lane) {
                        let g = self.gaps(i, av_lane);
                        if g.ahead > 1.0 && g.behind > 1.0 {
                            change_to = Some(av_lane);
                        }
                    }
                }
            }
            if change_to.is_none() && b.behavior != Behavior::SuddenBrake {
                let threshold = if b.behavior == Behavior::Overtake { 0.0 } else { p.lane_change_threshold };
                let mut best = accel + threshold;
                for side in [Side::Left, Side::Right] {
                    let Some(t) = self.target_lane(i, side) else { continue };
                    let s = self.graph.lanes[t].line.project(b.state.position()).0;
                    let (ahead, behind) = self.neighbours(t, s, b.state.length, i);
                    if ahead.map_or(false, |a| a.0 < p.min_gap) || behind.map_or(false, |b| b.0 < p.min_gap) {
                        continue;
                    }
                    let follower_ok = behind.map_or(true, |(gap, vb)| p.idm_accel(vb, v0, Some((gap, vb - b.speed))) >= -SAFE_DECEL);
                    let new = follow(ahead.map(|(gap, speed)| LeaderInfo { gap, speed }));
                    if follower_ok && new > best {
                        best = new;
                        change_to = Some(t);
                    }
                }
            }
        }
        Decision { accel, change_to, ttc }
    }

    fn start_lane_change(&mut self, i: usize, target: usize) {
        let pos = self.bodies[i].state.position();
        let (s, lat) = self.graph.lanes[target].line.project(pos);
        let b = &mut self.bodies[i];
        b.shadow = Some(b.lane);
        b.lane = target;
        b.s = s;
        b.lateral = lat;
        b.last_change = self.time;
        b.plan.clear();
        if b.behavior == Behavior::CutIn {
            b.cut_in_done = true;
        }
    }

    /// Moves body `i` along its lanes by `ds`; returns the distance covered.
    fn advance(&mut self, i: usize, ds: f64) -> f64 {
        let mut left = ds;
        let mut covered = 0.0;
        loop {
            let len = self.lane_len(self.bodies[i].lane);
            let room = len - self.bodies[i].s;
            if left <= room {
                self.bodies[i].s += left;
                covered += left;
                self.count_progress(i, left);
                return covered;
            }
            self.bodies[i].s = len;
            covered += room;
            self.count_progress(i, room);
            left -= room;
            if self.bodies[i].plan.is_empty() {
                let lane = self.bodies[i].lane;
                if let Some(n) = self.choose_next(i, lane) {
                    self.bodies[i].plan.push_back(n);
                }
            }
            match self.bodies[i].plan.pop_front() {
                Some(next) => {
                    let b = &mut self.bodies[i];
                    b.lane = next;
                    b.s = 0.0;
                    b.shadow = None;
                }
                None => {
                    let b = &mut self.bodies[i];
                    b.active = false;
                    b.speed = 0.0;
                    if Some(i) == self.av && self.finished_at.is_none() {
                        self.finished_at = Some(self.time);
                    }
                    return covered;
                }
            }
        }
    }

    fn count_progress(&mut self, i: usize, ds: f64) {
        if Some(i) == self.av && !self.graph.lanes[self.bodies[i].lane].connector {
            self.progress += ds;
        }
    }

    fn sync_state(&mut self, i: usize) {
        let b = &mut self.bodies[i];
        if b.vehicle {
            let lane = &self.graph.lanes[b.lane];
            let p = lane.line.point_at(b.s, b.lateral);
            let (_, h) = lane.line.pose_at(b.s);
            b.heading = h;
            b.state.lane = lane.id.clone();
            b.state.s = b.s;
            b.state.lateral = b.lateral;
            b.state.x = p.x;
            b.state.y = p.y;
            b.state.heading = wrap_degrees(h.to_degrees());
        } else {
            if let Some(line) = self.graph.get(&b.state.lane).map(|l| &self.graph.lanes[l].line) {
                let (s, lat) = line.project(b.state.position());
                b.state.s = s;
                b.state.lateral = lat;
            }
        }
        b.state.speed = b.speed;
    }

    fn step(&mut self, dt: f64) -> Vec<Option<f64>> {
        for i in 0..self.bodies.len() {
            self.extend_plan(i);
        }
        let decisions: Vec<Option<Decision>> =
            (0..self.bodies.len()).map(|i| (self.bodies[i].active && self.bodies[i].vehicle).then(|| self.decide(i))).collect();
        self.time += dt;
        let mut ttcs = Vec::with_capacity(self.bodies.len());
        for (i, d) in decisions.into_iter().enumerate() {
            if !self.bodies[i].active {
                self.bodies[i].accel = 0.0;
                ttcs.push(None);
                continue;
            }
            let Some(d) = d else {
                // pedestrians and cyclists
                let b = &mut self.bodies[i];
                let dist = b.speed * dt;
                let p = b.state.position() + Vec2::from_angle(b.heading) * dist;
                b.state.x = p.x;
                b.state.y = p.y;
                b.odometry += dist;
                b.walked += dist;
                b.accel = 0.0;
                if b.state.intent.to_ascii_lowercase().contains("cross") && b.walked >= CROSSING_DISTANCE {
                    b.active = false;
                    b.speed = 0.0;
                }
                self.sync_state(i);
                ttcs.push(None);
                continue;
            };
            ttcs.push(d.ttc);
            if let Some(t) = d.change_to {
                self.start_lane_change(i, t);
            }
            let b = &mut self.bodies[i];
            let v = (b.speed + d.accel * dt).max(0.0);
            b.accel = (v - b.speed) / dt;
            b.speed = v;
            // ground speed stays v while drifting sideways
            let rate = if b.lateral != 0.0 { LATERAL_RATE.min(v) } else { 0.0 };
            let forward = (v * v - rate * rate).max(0.0).sqrt() * dt;
            let shift = (rate * dt).min(b.lateral.abs());
            b.lateral -= shift * b.lateral.signum();
            if b.lateral.abs() < 1e-9 {
                b.lateral = 0.0;
                b.shadow = None;
            }
            let covered = self.advance(i, forward);
            self.bodies[i].odometry += (covered * covered + shift * shift).sqrt();
            self.sync_state(i);
        }
        ttcs
    }
}

fn validate_run(duration: f64, dt: f64, cfg: &SimConfig) -> Result<(), SimError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(SimError::InvalidTimeStep(dt));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SimError::InvalidDuration(duration));
    }
    let av = &cfg.av;
    if !cfg.behavior.is_valid() || !av.idm.is_valid() || !(av.ttc_threshold > 0.0 && av.max_brake > 0.0 && av.lane_change_gap > 0.0) {
        return Err(SimError::InvalidParams);
    }
    Ok(())
}

/// Runs with default parameters.
pub fn run(bundle: &ScenarioBundle, duration: f64, dt: f64) -> Result<SimulationTrace, SimError> {
    run_with(bundle, duration, dt, &SimConfig::default())
}

pub fn run_with(bundle: &ScenarioBundle, duration: f64, dt: f64, cfg: &SimConfig) -> Result<SimulationTrace, SimError> {
    validate_run(duration, dt, cfg)?;
    let graph = LaneGraph::new(&bundle.network);
    let mut bodies = Vec::with_capacity(bundle.agents.len());
    for a in &bundle.agents {
        let vehicle = a.kind.is_vehicle();
        let lane = match graph.get(&a.lane) {
            Some(l) => l,
            None if vehicle => return Err(SimError::OffNetwork(a.id.clone())),
            None => 0,
        };
        bodies.push(Body {
            state: a.clone(),
            behavior: behavior_of(a),
            vehicle,
            active: true,
            lane,
            s: a.s.clamp(0.0, graph.lanes.get(lane).map_or(0.0, |l| l.length())),
            lateral: if vehicle { a.lateral } else { 0.0 },
            shadow: None,
            speed: a.speed.max(0.0),
            accel: 0.0,
            plan: VecDeque::new(),
            last_change: f64::NEG_INFINITY,
            cut_in_done: false,
            heading: a.heading.to_radians(),
            odometry: 0.0,
            walked: 0.0,
        });
    }
    let av = bundle.agents.iter().position(|a| a.role == Role::AV);
    let route = av.map(|i| plan_route(&bundle.network, &bundle.agents[i].lane, bundle.agents[i].s));
    let objects = bundle.objects.iter().map(|o: &PlacedObject| (o.rect(), Vec2::new(o.x, o.y))).collect();
    let mut world = World {
        graph,
        bodies,
        objects,
        cfg,
        rng: ChaCha8Rng::seed_from_u64(bundle.seed),
        av,
        route,
        progress: 0.0,
        finished_at: None,
        time: 0.0,
    };
    for i in 0..world.bodies.len() {
        if world.bodies[i].vehicle {
            world.sync_state(i);
        }
    }
    let n_steps = (duration / dt - 1e-9).ceil() as usize;
    let ids: Vec<String> = world.bodies.iter().map(|b| b.state.id.clone()).collect();
    let mut series: BTreeMap<String, AgentSeries> = ids.iter().map(|id| (id.clone(), AgentSeries::default())).collect();
    let mut steps = Vec::with_capacity(n_steps);
    let mut collisions = Vec::new();
    let mut touching: BTreeSet<(String, String)> = BTreeSet::new();
    let mut progress = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let ttcs = world.step(dt);
        let snapshot: Vec<AgentState> = world.bodies.iter().map(|b| b.state.clone()).collect();
        for (i, b) in world.bodies.iter().enumerate() {
            let s = series.get_mut(&ids[i]).expect("series per agent");
            let prev = s.accel.last().copied().unwrap_or(0.0);
            s.jerk.push(if s.accel.is_empty() { 0.0 } else { (b.accel - prev) / dt });
            s.accel.push(b.accel);
            s.odometry.push(b.odometry);
            s.ttc.push(ttcs[i]);
        }
        progress.push(world.progress);
        // collision onsets among active agents and against objects
        let active: Vec<usize> = (0..world.bodies.len()).filter(|i| world.bodies[*i].active).collect();
        let mut now: BTreeSet<(String, String)> = BTreeSet::new();
        let states: Vec<AgentState> = active.iter().map(|i| snapshot[*i].clone()).collect();
        let mut hits: Vec<(String, String, f64)> = detect_collisions(&states)
            .into_iter()
            .map(|(a, b, p)| (states[a].id.clone(), states[b].id.clone(), p))
            .collect();
        for a in &states {
            let rect = a.rect();
            for (oi, (orect, _)) in world.objects.iter().enumerate() {
                if let Some(p) = rect.penetration(orect) {
                    hits.push((a.id.clone(), object_id(oi), p));
                }
            }
        }
        for (a, b, p) in hits {
            let key = if a <= b { (a, b) } else { (b, a) };
            if !touching.contains(&key) {
                collisions.push(CollisionEvent { step: k, agent_a: key.0.clone(), agent_b: key.1.clone(), penetration: p });
            }
            now.insert(key);
        }
        touching = now;
        steps.push(snapshot);
    }
    let av_trace = world.route.clone().map(|route| AvRouteTrace { route, progress, finished_at: world.finished_at });
    Ok(SimulationTrace { dt, steps, collisions, series, av: av_trace })
}
