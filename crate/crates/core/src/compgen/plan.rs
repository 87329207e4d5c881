//! Deterministic placement planners. These are what an answering model is
//! expected to produce; the generators only accept answers that satisfy the
//! same constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{is_conflict_intent, lane_polyline, AgentState, CompgenError, PlacedObject, PlacementConstraints, IMPLICIT_EGO_ID};
use crate::geometry::{wrap_degrees, OrientedRect, Polyline};
use crate::ir::{AgentDescription, AgentKind, ObjectKind, Role, ScenarioDescription};
use crate::netgen::{primary_route, LaneRef, RoadNetwork, DEFAULT_LANE_WIDTH};

const TAPER_SPACING: f64 = 3.0;
const ROW_SPACING: f64 = 2.5;
const TAPER_HALF_WIDTH: f64 = DEFAULT_LANE_WIDTH / 2.0 - 0.4;
/// Warning signs stand this far upstream of the first cone.
pub const SIGN_SETBACK: f64 = 15.0;
const CLEARANCE: f64 = 0.5;
const RANDOM_ATTEMPTS: usize = 200;

/// Where the work zone sits: lane 0 of the first route edge, from `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectZone {
    pub lane: LaneRef,
    pub start: f64,
    pub end: f64,
}

fn closure_hint(hint: &str) -> bool {
    let h = hint.to_ascii_lowercase();
    h.contains("taper") || h.contains("closure")
}

fn count(desc: &ScenarioDescription, kind: ObjectKind) -> usize {
    desc.object_count(kind) as usize
}

/// Lane-obstacle span of the zone, or `None` when nothing occupies a lane.
pub fn object_zone(desc: &ScenarioDescription, net: &RoadNetwork) -> Option<ObjectZone> {
    let cones = count(desc, ObjectKind::Cone);
    let barriers = count(desc, ObjectKind::Barrier);
    if cones + barriers == 0 {
        return None;
    }
    let route = primary_route(net);
    let lane = LaneRef::new(route.first()?.clone(), 0);
    let len = lane_polyline(net, &lane)?.length();
    let span = cones.saturating_sub(1) as f64 * TAPER_SPACING + barriers as f64 * ROW_SPACING + 2.0;
    let start = (len * 0.5).max(SIGN_SETBACK + 10.0).min(len - 2.0 - span);
    (start >= SIGN_SETBACK + 2.0).then(|| ObjectZone { lane, start, end: start + span })
}

fn obj(kind: ObjectKind, line: &Polyline, s: f64, lateral: f64) -> PlacedObject {
    let p = line.point_at(s, lateral);
    let (_, heading) = line.pose_at(s);
    PlacedObject { kind, x: p.x, y: p.y, yaw: wrap_degrees(heading.to_degrees()), footprint: kind.footprint() }
}

/// Static objects: a cone taper (or row) closing lane 0 of the first route
/// edge, barriers behind it, signs upstream and fences along the roadside.
pub fn plan_objects(desc: &ScenarioDescription, net: &RoadNetwork) -> Result<Vec<PlacedObject>, CompgenError> {
    if desc.objects.is_empty() {
        return Ok(Vec::new());
    }
    let route = primary_route(net);
    let first = route.first().ok_or_else(|| CompgenError::PlacementInfeasible("network has no route".into()))?;
    let lane = LaneRef::new(first.clone(), 0);
    let line = lane_polyline(net, &lane).ok_or_else(|| CompgenError::PlacementInfeasible("route lane missing".into()))?;
    let len = line.length();
    let zone = object_zone(desc, net);
    let has_obstacles = count(desc, ObjectKind::Cone) + count(desc, ObjectKind::Barrier) > 0;
    if has_obstacles && zone.is_none() {
        return Err(CompgenError::PlacementInfeasible(format!("edge {first} is too short for the work zone")));
    }
    let start = zone.as_ref().map_or(len * 0.5, |z| z.start);
    let half = DEFAULT_LANE_WIDTH / 2.0;
    let mut out = Vec::new();

    let cones = count(desc, ObjectKind::Cone);
    let taper = desc.objects.iter().any(|o| o.kind == ObjectKind::Cone && closure_hint(&o.placement_hint));
    for k in 0..cones {
        let s = start + k as f64 * TAPER_SPACING;
        let lateral = if taper && cones > 1 {
            -TAPER_HALF_WIDTH + 2.0 * TAPER_HALF_WIDTH * k as f64 / (cones - 1) as f64
        } else {
            0.0
        };
        out.push(obj(ObjectKind::Cone, &line, s, lateral));
    }
    let after_cones = start + cones.saturating_sub(1) as f64 * TAPER_SPACING;
    for k in 0..count(desc, ObjectKind::Barrier) {
        let s = after_cones + 2.0 + k as f64 * ROW_SPACING;
        out.push(obj(ObjectKind::Barrier, &line, s, 0.0));
    }
    for k in 0..count(desc, ObjectKind::WarningSign) {
        let s = start - SIGN_SETBACK - 2.0 * k as f64;
        if s < 0.0 {
            return Err(CompgenError::PlacementInfeasible("no room for warning signs upstream".into()));
        }
        out.push(obj(ObjectKind::WarningSign, &line, s, -(half + 0.6)));
    }
    for k in 0..count(desc, ObjectKind::Fence) {
        let s = (start + k as f64 * 3.2).min(len);
        out.push(obj(ObjectKind::Fence, &line, s, -(half + 1.0)));
    }
    for k in 0..count(desc, ObjectKind::LaneMarking) {
        let s = (start + k as f64 * 4.0).min(len);
        out.push(obj(ObjectKind::LaneMarking, &line, s, half));
    }
    Ok(out)
}

fn rect_of_object(o: &PlacedObject) -> OrientedRect {
    OrientedRect::new(crate::geometry::Vec2::new(o.x, o.y), o.footprint.0, o.footprint.1, o.yaw.to_radians())
}

pub(crate) fn inflated(rect: OrientedRect, margin: f64) -> OrientedRect {
    OrientedRect { length: rect.length + 2.0 * margin, width: rect.width + 2.0 * margin, ..rect }
}

struct Placer<'a> {
    net: &'a RoadNetwork,
    c: &'a PlacementConstraints,
    placed: Vec<AgentState>,
    obstacles: Vec<OrientedRect>,
}

impl Placer<'_> {
    fn state(&self, id: &str, d: &AgentDescription, lane: &LaneRef, s: f64, lateral: f64) -> Option<AgentState> {
        let line = lane_polyline(self.net, lane)?;
        let edge = self.net.edge(&lane.edge)?;
        let (length, width) = d.kind.dimensions();
        let p = line.point_at(s, lateral);
        let (_, heading) = line.pose_at(s);
        let mut heading = heading.to_degrees();
        if d.kind == AgentKind::Pedestrian && is_conflict_intent(&d.intent) {
            heading += 90.0;
        }
        Some(AgentState {
            id: id.into(),
            kind: d.kind,
            role: d.role,
            lane: lane.clone(),
            s,
            lateral,
            speed: d.approx_speed.clamp(0.0, 1.5 * edge.speed),
            heading: wrap_degrees(heading),
            color: d.color.clone(),
            length,
            width,
            x: p.x,
            y: p.y,
            intent: d.intent.clone(),
        })
    }

    /// Free of overlaps and at least `gap` from every placed agent.
    fn fits(&self, a: &AgentState, gap: f64, except: Option<&str>) -> bool {
        let rect = inflated(a.rect(), CLEARANCE);
        if self.obstacles.iter().any(|o| rect.overlaps(o)) {
            return false;
        }
        self.placed.iter().all(|b| {
            if b.rect().overlaps(&rect) {
                return false;
            }
            Some(b.id.as_str()) == except || a.position().distance(b.position()) >= gap
        })
    }

    fn lane_range(&self, lane: &LaneRef, length: f64) -> Option<(f64, f64)> {
        let len = lane_polyline(self.net, lane)?.length();
        let (lo, hi) = (length / 2.0 + 0.5, len - length / 2.0 - 0.5);
        (hi >= lo).then_some((lo, hi))
    }

    fn lateral_for(kind: AgentKind) -> f64 {
        if kind.is_vulnerable() {
            let (_, w) = kind.dimensions();
            -(DEFAULT_LANE_WIDTH / 2.0 - w / 2.0)
        } else {
            0.0
        }
    }

    /// Somewhere on the network, at least `min_gap` from everyone.
    fn place_free(&self, id: &str, d: &AgentDescription, rng: &mut ChaCha8Rng, avoid: &[LaneRef]) -> Option<AgentState> {
        let (length, _) = d.kind.dimensions();
        let mut lanes: Vec<(LaneRef, (f64, f64))> =
            self.net.lane_refs().into_iter().filter_map(|l| self.lane_range(&l, length).map(|r| (l, r))).collect();
        if lanes.iter().any(|(l, _)| !avoid.contains(l)) {
            lanes.retain(|(l, _)| !avoid.contains(l));
        }
        if lanes.is_empty() {
            return None;
        }
        let lateral = Self::lateral_for(d.kind);
        for _ in 0..RANDOM_ATTEMPTS {
            let (lane, (lo, hi)) = &lanes[rng.gen_range(0..lanes.len())];
            let s = if hi > lo { rng.gen_range(*lo..*hi) } else { *lo };
            if let Some(a) = self.state(id, d, lane, s, lateral) {
                if self.fits(&a, self.c.min_gap, None) {
                    return Some(a);
                }
            }
        }
        for (lane, (lo, hi)) in &lanes {
            let mut s = *lo;
            while s <= *hi {
                if let Some(a) = self.state(id, d, lane, s, lateral) {
                    if self.fits(&a, self.c.min_gap, None) {
                        return Some(a);
                    }
                }
                s += 0.5;
            }
        }
        None
    }

    /// Beside the AV at a centre distance in [min_gap/2, min_gap].
    fn place_conflict(&self, id: &str, d: &AgentDescription, av: &AgentState, rng: &mut ChaCha8Rng) -> Option<AgentState> {
        let g = self.c.min_gap;
        let w = DEFAULT_LANE_WIDTH;
        let mut candidates: Vec<(LaneRef, f64, f64)> = Vec::new();
        let av_pos = av.position();
        for lane in self.net.lane_refs() {
            let Some(line) = lane_polyline(self.net, &lane) else { continue };
            let (s, lat) = line.project(av_pos);
            if s <= 0.0 || s >= line.length() {
                continue;
            }
            if d.kind.is_vulnerable() {
                if lane == av.lane {
                    candidates.push((lane, s, Self::lateral_for(d.kind)));
                }
            } else if lat.abs() > 0.5 * w && lat.abs() <= 1.5 * w {
                candidates.push((lane, s, 0.0));
            }
        }
        let ahead = d.intent.to_ascii_lowercase().contains("cut");
        for _ in 0..20 {
            for (lane, s_proj, lateral) in &candidates {
                let Some(line) = lane_polyline(self.net, lane) else { continue };
                let sep = line.project(av_pos).1 - lateral;
                let lo = (g / 2.0).max(sep.abs() + 1e-6);
                if lo >= g {
                    continue;
                }
                let dist = rng.gen_range(lo..=g);
                let ds = (dist * dist - sep * sep).max(0.0).sqrt();
                // which way along this lane points the same way as the AV
                let (_, lane_heading) = line.pose_at(*s_proj);
                let same_dir = (lane_heading - av.heading.to_radians()).cos() >= 0.0;
                let forward = if ahead { true } else { rng.gen_bool(0.5) };
                let s = if forward == same_dir { s_proj + ds } else { s_proj - ds };
                let Some(a) = self.state(id, d, lane, s, *lateral) else { continue };
                if s < 0.0 || s > line.length() {
                    continue;
                }
                let dd = a.position().distance(av_pos);
                if dd >= g / 2.0 && dd <= g + 1e-9 && self.fits(&a, g, Some(&av.id)) {
                    return Some(a);
                }
            }
        }
        None
    }
}

pub(crate) fn implicit_ego() -> AgentDescription {
    AgentDescription {
        kind: AgentKind::Car,
        color: None,
        role: Role::AV,
        intent: "proceed along route".into(),
        approx_speed: 10.0,
        relative_position: "ego".into(),
    }
}

pub fn agent_id(index: usize) -> String {
    format!("a{index}")
}

/// Agent placement at the critical moment. The AV starts on lane 0 of the
/// primary route; agents whose intent names a conflict are placed beside it
/// at a tightened gap, everyone else at least `min_gap` apart.
pub fn plan_agents(desc: &ScenarioDescription, net: &RoadNetwork, c: &PlacementConstraints) -> Result<Vec<AgentState>, CompgenError> {
    c.validate()?;
    let mut entries: Vec<(String, AgentDescription)> =
        desc.agents.iter().enumerate().map(|(i, a)| (agent_id(i), a.clone())).collect();
    if !desc.agents.iter().any(|a| a.role == Role::AV) {
        entries.insert(0, (IMPLICIT_EGO_ID.into(), implicit_ego()));
    }
    if entries.len() > c.max_agents {
        return Err(CompgenError::PlacementInfeasible(format!("{} agents exceed the limit of {}", entries.len(), c.max_agents)));
    }
    let infeasible = |what: &str| CompgenError::PlacementInfeasible(format!("no room for {what}"));
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let objects = plan_objects(desc, net).unwrap_or_default();
    let mut placer = Placer { net, c, placed: Vec::new(), obstacles: objects.iter().map(rect_of_object).collect() };

    let route = primary_route(net);
    let (av_id, av_desc) = entries.iter().find(|(_, a)| a.role == Role::AV).cloned().expect("an AV is always present");
    let av_lane = LaneRef::new(route.first().ok_or_else(|| infeasible("the AV"))?.clone(), 0);
    let (length, _) = av_desc.kind.dimensions();
    let (lo, hi) = placer.lane_range(&av_lane, length).ok_or_else(|| infeasible("the AV"))?;
    let len = lane_polyline(net, &av_lane).map_or(0.0, |l| l.length());
    let mut top = (len * 0.4).min(hi);
    if let Some(z) = object_zone(desc, net) {
        top = top.min(z.start - SIGN_SETBACK - 5.0);
    }
    let bottom = (len * 0.15).max(lo);
    let av_s = if top > bottom { rng.gen_range(bottom..top) } else { lo };
    let av = placer.state(&av_id, &av_desc, &av_lane, av_s, 0.0).ok_or_else(|| infeasible("the AV"))?;
    if !placer.fits(&av, 0.0, None) {
        return Err(infeasible("the AV"));
    }
    placer.placed.push(av.clone());

    let avoid: Vec<LaneRef> = if c.keep_av_route_free { route.iter().map(|e| LaneRef::new(e.clone(), 0)).collect() } else { Vec::new() };
    let (conflicts, others): (Vec<_>, Vec<_>) = entries
        .iter()
        .filter(|(id, _)| *id != av_id)
        .partition(|(_, a)| is_conflict_intent(&a.intent));
    for (id, d) in conflicts {
        let a = placer
            .place_conflict(id, d, &av, &mut rng)
            .or_else(|| placer.place_free(id, d, &mut rng, &avoid))
            .ok_or_else(|| infeasible(id))?;
        placer.placed.push(a);
    }
    for (id, d) in others {
        let a = placer.place_free(id, d, &mut rng, &avoid).ok_or_else(|| infeasible(id))?;
        placer.placed.push(a);
    }
    let order: Vec<&String> = entries.iter().map(|(id, _)| id).collect();
    let mut placed = placer.placed;
    placed.sort_by_key(|a| order.iter().position(|id| **id == a.id));
    Ok(placed)
}
