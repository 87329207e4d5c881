//! Car-following and the rule-based AV policy.

use serde::{Deserialize, Serialize};

/// Hard floor for any commanded acceleration, m/s².
pub const EMERGENCY_DECEL: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorParams {
    /// m/s; capped by the lane speed limit at run time.
    pub desired_speed: f64,
    pub max_accel: f64,
    pub comfortable_decel: f64,
    pub min_gap: f64,
    pub time_headway: f64,
    pub accel_exponent: f64,
    /// Acceleration advantage, m/s², a lane change must bring.
    pub lane_change_threshold: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        BehaviorParams {
            desired_speed: 33.33,
            max_accel: 1.5,
            comfortable_decel: 2.0,
            min_gap: 2.0,
            time_headway: 1.5,
            accel_exponent: 4.0,
            lane_change_threshold: 0.2,
        }
    }
}

impl BehaviorParams {
    pub fn is_valid(&self) -> bool {
        [self.desired_speed, self.max_accel, self.comfortable_decel, self.min_gap, self.time_headway, self.lane_change_threshold]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
            && self.accel_exponent >= 1.0
    }

    /// Desired gap s* for speed `v` closing on the leader at `dv`.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.min_gap + (v * self.time_headway + v * dv / (2.0 * (self.max_accel * self.comfortable_decel).sqrt())).max(0.0)
    }

    /// IDM acceleration. `gap` is bumper to bumper; `dv` = v − v_leader.
    pub fn idm_accel(&self, v: f64, v0: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = 1.0 - (v / v0.max(1e-3)).powf(self.accel_exponent);
        let interaction = leader.map_or(0.0, |(gap, dv)| (self.desired_gap(v, dv) / gap.max(0.01)).powi(2));
        (self.max_accel * (free - interaction)).clamp(-EMERGENCY_DECEL, self.max_accel)
    }
}

/// Suggestions that change the AV's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hint {
    DecelerateEarlier,
    SaferLane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvPolicyParams {
    pub idm: BehaviorParams,
    /// Braking starts when time to collision falls below this, seconds.
    pub ttc_threshold: f64,
    pub max_brake: f64,
    /// Free space needed ahead and behind in the target lane, meters.
    pub lane_change_gap: f64,
}

impl Default for AvPolicyParams {
    fn default() -> Self {
        AvPolicyParams { idm: BehaviorParams::default(), ttc_threshold: 3.0, max_brake: 6.0, lane_change_gap: 8.0 }
    }
}

impl AvPolicyParams {
    pub fn with_hints(mut self, hints: &[Hint]) -> Self {
        for h in hints {
            match h {
                Hint::DecelerateEarlier => self.ttc_threshold = self.ttc_threshold.max(4.5),
                Hint::SaferLane => self.lane_change_gap = self.lane_change_gap.max(15.0),
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderInfo {
    pub gap: f64,
    pub speed: f64,
}

/// Free space in a neighbouring lane, measured bumper to bumper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneGaps {
    pub ahead: f64,
    pub behind: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub speed: f64,
    pub speed_limit: f64,
    pub leader: Option<LeaderInfo>,
    /// `None` when there is no lane or a change is not allowed there now.
    pub left: Option<LaneGaps>,
    pub right: Option<LaneGaps>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub lane_change: Option<Side>,
}

/// Time to collision with the leader; `None` when not closing in.
pub fn time_to_collision(speed: f64, leader: Option<LeaderInfo>) -> Option<f64> {
    let l = leader?;
    let closing = speed - l.speed;
    (closing > 1e-9).then(|| l.gap.max(0.0) / closing)
}

const BLOCKED_SPEED: f64 = 1.0;
const BLOCKED_RANGE: f64 = 40.0;

pub fn av_policy(obs: &Observation, p: &AvPolicyParams) -> Control {
    let v0 = p.idm.desired_speed.min(obs.speed_limit);
    let mut accel = p.idm.idm_accel(obs.speed, v0, obs.leader.map(|l| (l.gap, obs.speed - l.speed)));
    if let Some(ttc) = time_to_collision(obs.speed, obs.leader) {
        if ttc < p.ttc_threshold {
            accel = accel.min(-p.max_brake * (1.0 - ttc / p.ttc_threshold));
        }
    }
    let blocked = obs.leader.map_or(false, |l| l.speed < BLOCKED_SPEED && l.gap < BLOCKED_RANGE);
    let clear = |g: Option<LaneGaps>| g.map_or(false, |g| g.ahead >= p.lane_change_gap && g.behind >= p.lane_change_gap);
    let lane_change = if !blocked {
        None
    } else if clear(obs.left) {
        Some(Side::Left)
    } else if clear(obs.right) {
        Some(Side::Right)
    } else {
        None
    };
    Control { accel: accel.clamp(-p.max_brake, p.idm.max_accel), lane_change }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn free_road_from_standstill() {
        let p = BehaviorParams::default();
        assert_eq!(p.idm_accel(0.0, 10.0, None), p.max_accel);
    }

    #[test]
    fn far_leader_at_desired_speed() {
        let p = BehaviorParams::default();
        let v0 = 10.0;
        let s_star = p.desired_gap(v0, 0.0);
        let a = p.idm_accel(v0, v0, Some((10.0 * s_star, 0.0)));
        // a·[1 − 1 − (1/10)²]
        assert!((a + p.max_accel * 0.01).abs() < 1e-12);
        assert!(a.abs() < 0.02 * p.max_accel);
    }

    #[test]
    fn standstill_gap_brakes() {
        let p = BehaviorParams::default();
        assert!(p.idm_accel(5.0, 10.0, Some((p.min_gap, 0.0))) <= 0.0);
        assert!(p.idm_accel(0.0, 10.0, Some((p.min_gap, 0.0))) <= 0.0);
    }

    fn obs(speed: f64, leader: Option<LeaderInfo>) -> Observation {
        Observation { speed, speed_limit: 15.0, leader, left: None, right: None }
    }

    #[test]
    fn clear_road_accelerates() {
        let c = av_policy(&obs(5.0, None), &AvPolicyParams::default());
        assert!(c.accel > 0.0);
        assert_eq!(c.lane_change, None);
    }

    #[test]
    fn low_ttc_brakes() {
        let c = av_policy(&obs(10.0, Some(LeaderInfo { gap: 20.0, speed: 0.0 })), &AvPolicyParams::default());
        assert!(c.accel < 0.0);
    }

    #[test]
    fn hint_raises_threshold() {
        let base = AvPolicyParams::default();
        let hinted = base.clone().with_hints(&[Hint::DecelerateEarlier]);
        assert!(hinted.ttc_threshold > base.ttc_threshold);
        let safer = base.clone().with_hints(&[Hint::SaferLane]);
        assert!(safer.lane_change_gap > base.lane_change_gap);
    }

    #[test]
    fn blocked_lane_changes_when_clear() {
        let mut o = obs(8.0, Some(LeaderInfo { gap: 30.0, speed: 0.0 }));
        o.left = Some(LaneGaps { ahead: 50.0, behind: 9.0 });
        let p = AvPolicyParams::default();
        assert_eq!(av_policy(&o, &p).lane_change, Some(Side::Left));
        let safer = p.with_hints(&[Hint::SaferLane]);
        assert_eq!(av_policy(&o, &safer).lane_change, None);
    }

    fn onset(speeds: &[(f64, f64)], p: &AvPolicyParams) -> Option<usize> {
        speeds.iter().position(|&(gap, v)| av_policy(&obs(v, Some(LeaderInfo { gap, speed: 0.0 })), p).accel < 0.0 && v > 0.0)
    }

    proptest! {
        #[test]
        fn accel_stays_in_bounds(v in 0.0f64..40.0, gap in -5.0f64..200.0, lv in 0.0f64..40.0) {
            let p = AvPolicyParams::default();
            let c = av_policy(&obs(v, Some(LeaderInfo { gap, speed: lv })), &p);
            prop_assert!(c.accel >= -p.max_brake && c.accel <= p.idm.max_accel);
        }

        #[test]
        fn larger_threshold_never_brakes_later(start in 60.0f64..200.0, v in 5.0f64..20.0, extra in 0.0f64..3.0) {
            // the same approach towards a stopped obstacle, seen by two parameter sets
            let seq: Vec<(f64, f64)> = (0..400).map(|k| (start - v * 0.1 * k as f64, v)).collect();
            let base = AvPolicyParams::default();
            let mut hinted = base.clone();
            hinted.ttc_threshold += extra;
            let (a, b) = (onset(&seq, &base), onset(&seq, &hinted));
            prop_assert!(b.unwrap_or(usize::MAX) <= a.unwrap_or(usize::MAX));
        }
    }
}
