//! Collision records with a suggested change to the AV's behavior.

use serde::{Deserialize, Serialize};

use crate::compgen::AgentState;
use crate::geometry::Vec2;
use crate::simcore::{Hint, SimulationTrace, TraceRecord};

/// Seconds of trace kept before each collision.
pub const PRE_COLLISION_WINDOW: f64 = 2.0;
/// Lateral offset, meters, above which an agent counts as changing lane.
const CHANGING_LANE: f64 = 0.05;

pub struct HintSource<'a> {
    pub scenario_id: &'a str,
    pub trace: &'a SimulationTrace,
    /// Prompts or decisions that produced the scenario.
    pub context: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintRecord {
    pub scenario_id: String,
    pub step: usize,
    pub time: f64,
    pub agents: (String, String),
    /// Records of both parties from the window before the collision.
    pub window: Vec<TraceRecord>,
    pub context: String,
    pub hint: Hint,
}

fn side_contact(a: &AgentState, b: Option<&AgentState>) -> bool {
    if a.lateral.abs() > CHANGING_LANE || b.map_or(false, |b| b.lateral.abs() > CHANGING_LANE) {
        return true;
    }
    let Some(b) = b else { return false };
    let fwd = Vec2::from_angle(a.heading.to_radians());
    let d = b.position() - a.position();
    fwd.cross(d).abs() > d.dot(fwd).abs()
}

pub fn export_hints(sources: &[HintSource<'_>]) -> Vec<HintRecord> {
    let mut out = Vec::new();
    for src in sources {
        let t = src.trace;
        let span = (PRE_COLLISION_WINDOW / t.dt).round() as usize;
        for c in &t.collisions {
            let Some(states) = t.steps.get(c.step) else { continue };
            let find = |id: &str| states.iter().find(|a| a.id == id);
            let (a, b) = (find(&c.agent_a), find(&c.agent_b));
            let hint = match a.or(b) {
                Some(first) => {
                    let other = if a.is_some() { b } else { None };
                    if side_contact(first, other) {
                        Hint::SaferLane
                    } else {
                        Hint::DecelerateEarlier
                    }
                }
                None => Hint::DecelerateEarlier,
            };
            let from = c.step.saturating_sub(span);
            let window = t
                .records()
                .into_iter()
                .filter(|r| r.step >= from && r.step <= c.step && (r.id == c.agent_a || r.id == c.agent_b))
                .collect();
            out.push(HintRecord {
                scenario_id: src.scenario_id.to_string(),
                step: c.step,
                time: (c.step + 1) as f64 * t.dt,
                agents: (c.agent_a.clone(), c.agent_b.clone()),
                window,
                context: src.context.to_string(),
                hint,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{AgentKind, Role};
    use crate::netgen::LaneRef;
    use crate::simcore::CollisionEvent;
    use std::collections::BTreeMap;

    fn agent(id: &str, x: f64, y: f64, lateral: f64) -> AgentState {
        AgentState {
            id: id.into(),
            kind: AgentKind::Car,
            role: if id == "ego" { Role::AV } else { Role::BV },
            lane: LaneRef::new("s0", 0),
            s: x,
            lateral,
            speed: 5.0,
            heading: 0.0,
            color: None,
            length: 4.5,
            width: 1.8,
            x,
            y,
            intent: String::new(),
        }
    }

    fn trace(other: AgentState, ego_lateral: f64) -> SimulationTrace {
        let steps: Vec<Vec<AgentState>> =
            (0..40).map(|k| vec![agent("ego", k as f64 * 0.5, ego_lateral, ego_lateral), other.clone()]).collect();
        SimulationTrace {
            dt: 0.1,
            steps,
            collisions: vec![CollisionEvent { step: 30, agent_a: "ego".into(), agent_b: other.id.clone(), penetration: 0.3 }],
            series: BTreeMap::new(),
            av: None,
        }
    }

    fn hints(t: &SimulationTrace) -> Vec<HintRecord> {
        export_hints(&[HintSource { scenario_id: "s1", trace: t, context: "prompt" }])
    }

    #[test]
    fn no_collisions_no_records() {
        let mut t = trace(agent("b", 40.0, 0.0, 0.0), 0.0);
        t.collisions.clear();
        assert!(hints(&t).is_empty());
    }

    #[test]
    fn rear_end_suggests_earlier_braking() {
        let t = trace(agent("b", 18.0, 0.0, 0.0), 0.0);
        let h = hints(&t);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].hint, Hint::DecelerateEarlier);
        assert_eq!(h[0].scenario_id, "s1");
        // steps 10..=30 for two agents
        assert_eq!(h[0].window.len(), 21 * 2);
        assert!((h[0].time - 3.1).abs() < 1e-12);
    }

    #[test]
    fn side_swipe_during_lane_change_suggests_safer_lane() {
        let t = trace(agent("b", 15.0, 3.0, 0.0), 1.2);
        assert_eq!(hints(&t)[0].hint, Hint::SaferLane);
    }
}
