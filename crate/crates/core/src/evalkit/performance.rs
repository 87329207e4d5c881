//! AV driving scores and the two-arm comparison table.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EvalError, TextTable};
use crate::compgen::PlannedRoute;
use crate::ir::Role;
use crate::simcore::SimulationTrace;
use crate::stats::Summary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceWeights {
    pub safety: f64,
    pub efficiency: f64,
    pub comfort: f64,
    /// Seconds.
    pub ttc_ref: f64,
    /// m/s³.
    pub jerk_ref: f64,
}

impl Default for PerformanceWeights {
    fn default() -> Self {
        PerformanceWeights { safety: 0.4, efficiency: 0.3, comfort: 0.3, ttc_ref: 4.0, jerk_ref: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub route_completion: f64,
    pub driving_score: f64,
    pub total_score: f64,
    /// Simulated seconds until the route end, or the whole run.
    pub use_time: f64,
    pub success: bool,
    pub collision: bool,
    pub safety: f64,
    pub efficiency: f64,
    pub comfort: f64,
}

pub fn performance(trace: &SimulationTrace, route: &PlannedRoute, w: &PerformanceWeights) -> Result<PerformanceReport, EvalError> {
    let av_trace = trace.av.as_ref().ok_or(EvalError::AvNotFound)?;
    let av_id = trace
        .steps
        .first()
        .and_then(|s| s.iter().find(|a| a.role == Role::AV))
        .map(|a| a.id.clone())
        .ok_or(EvalError::AvNotFound)?;
    let series = trace.series.get(&av_id).ok_or(EvalError::AvNotFound)?;

    let route_completion = if av_trace.finished_at.is_some() {
        1.0
    } else if route.length > 0.0 {
        (av_trace.progress.last().copied().unwrap_or(0.0) / route.length).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let min_ttc = series.ttc.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let safety = (min_ttc / w.ttc_ref).min(1.0);
    let speeds: Vec<f64> = trace.steps.iter().filter_map(|s| s.iter().find(|a| a.id == av_id)).map(|a| a.speed).collect();
    let efficiency = if route.speed_limit > 0.0 && !speeds.is_empty() {
        (speeds.iter().sum::<f64>() / speeds.len() as f64 / route.speed_limit).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mean_jerk =
        if series.jerk.is_empty() { 0.0 } else { series.jerk.iter().map(|j| j.abs()).sum::<f64>() / series.jerk.len() as f64 };
    let comfort = 1.0 - (mean_jerk / w.jerk_ref).min(1.0);

    let driving_score = 100.0 * (w.safety * safety + w.efficiency * efficiency + w.comfort * comfort);
    let collision = trace.collided(&av_id);
    Ok(PerformanceReport {
        route_completion,
        driving_score,
        total_score: driving_score * route_completion,
        use_time: av_trace.finished_at.unwrap_or_else(|| trace.duration()),
        success: route_completion >= 1.0 && !collision,
        collision,
        safety,
        efficiency,
        comfort,
    })
}

pub const COMPARISON_ROWS: [&str; 6] =
    ["Route completion", "Driving score", "Total score", "Use Time(s)", "Success rate", "Collision rate"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Summaries in the order of [`COMPARISON_ROWS`], minus the collision rate.
    pub ours: Vec<Summary>,
    pub baseline: Vec<Summary>,
    pub ours_collision_rate: f64,
    pub baseline_collision_rate: f64,
}

fn arm(runs: &[PerformanceReport]) -> (Vec<Summary>, f64) {
    let col = |f: fn(&PerformanceReport) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
    let summaries = vec![
        col(|r| r.route_completion),
        col(|r| r.driving_score),
        col(|r| r.total_score),
        col(|r| r.use_time),
        col(|r| f64::from(u8::from(r.success))),
    ];
    let rate = if runs.is_empty() { 0.0 } else { runs.iter().filter(|r| r.collision).count() as f64 / runs.len() as f64 };
    (summaries, rate)
}

pub fn compare_pipelines(ours: &[PerformanceReport], baseline: &[PerformanceReport]) -> Result<ComparisonReport, EvalError> {
    if ours.len() != baseline.len() {
        return Err(EvalError::CountMismatch { ours: ours.len(), baseline: baseline.len() });
    }
    let (o, orate) = arm(ours);
    let (b, brate) = arm(baseline);
    Ok(ComparisonReport { ours: o, baseline: b, ours_collision_rate: orate, baseline_collision_rate: brate })
}

impl ComparisonReport {
    pub fn to_table(&self) -> TextTable {
        let mut t = TextTable::new(&["Scenario", "Ours", "RandomTrip"]);
        for (i, name) in COMPARISON_ROWS[..5].iter().enumerate() {
            t.row(vec![name.to_string(), self.ours[i].to_string(), self.baseline[i].to_string()]);
        }
        t.row(vec![
            COMPARISON_ROWS[5].to_string(),
            format!("{:.2}", self.ours_collision_rate),
            format!("{:.2}", self.baseline_collision_rate),
        ]);
        t
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_table())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compgen::AgentState;
    use crate::ir::AgentKind;
    use crate::netgen::LaneRef;
    use crate::simcore::{AgentSeries, AvRouteTrace, CollisionEvent};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn av(speed: f64) -> AgentState {
        AgentState {
            id: "ego".into(),
            kind: AgentKind::Car,
            role: Role::AV,
            lane: LaneRef::new("s0", 0),
            s: 0.0,
            lateral: 0.0,
            speed,
            heading: 0.0,
            color: None,
            length: 4.5,
            width: 1.8,
            x: 0.0,
            y: 0.0,
            intent: String::new(),
        }
    }

    fn route() -> PlannedRoute {
        PlannedRoute { edges: vec!["s0".into()], length: 100.0, speed_limit: 10.0 }
    }

    /// Ten steps at constant `speed` with the given final route progress.
    fn trace(speed: f64, progress: f64, ttc: Option<f64>, jerk: f64) -> SimulationTrace {
        let mut series = BTreeMap::new();
        series.insert(
            "ego".to_string(),
            AgentSeries { odometry: vec![progress; 10], accel: vec![0.0; 10], jerk: vec![jerk; 10], ttc: vec![ttc; 10] },
        );
        SimulationTrace {
            dt: 0.1,
            steps: vec![vec![av(speed)]; 10],
            collisions: vec![],
            series,
            av: Some(AvRouteTrace { route: route(), progress: vec![progress; 10], finished_at: None }),
        }
    }

    #[test]
    fn partial_route() {
        let r = performance(&trace(5.0, 43.0, None, 0.0), &route(), &PerformanceWeights::default()).unwrap();
        assert!((r.route_completion - 0.43).abs() < 1e-12);
        // safety 1, efficiency 0.5, comfort 1
        assert!((r.driving_score - 85.0).abs() < 1e-9);
        assert_eq!(r.total_score, r.driving_score * r.route_completion);
        assert!(!r.success);
        assert!((r.use_time - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_components() {
        let r = performance(&trace(10.0, 100.0, Some(2.0), 1.0), &route(), &PerformanceWeights::default()).unwrap();
        // 100·(0.4·0.5 + 0.3·1 + 0.3·0.5)
        assert!((r.driving_score - 65.0).abs() < 1e-9);
    }

    #[test]
    fn collision_means_failure() {
        let mut t = trace(10.0, 100.0, None, 0.0);
        t.av.as_mut().unwrap().finished_at = Some(0.8);
        let ok = performance(&t, &route(), &PerformanceWeights::default()).unwrap();
        assert!(ok.success && !ok.collision);
        assert_eq!(ok.use_time, 0.8);
        t.collisions.push(CollisionEvent { step: 3, agent_a: "ego".into(), agent_b: "o0".into(), penetration: 0.2 });
        let r = performance(&t, &route(), &PerformanceWeights::default()).unwrap();
        assert!(!r.success && r.collision);
    }

    #[test]
    fn missing_av() {
        let mut t = trace(1.0, 1.0, None, 0.0);
        t.av = None;
        assert_eq!(performance(&t, &route(), &PerformanceWeights::default()), Err(EvalError::AvNotFound));
    }

    #[test]
    fn total_from_paper_numbers() {
        let (driving, completion) = (65.24f64, 0.86f64);
        assert!((driving * completion - 56.1064).abs() < 1e-9);
    }

    fn report(collision: bool) -> PerformanceReport {
        PerformanceReport {
            route_completion: 1.0,
            driving_score: 80.0,
            total_score: 80.0,
            use_time: 30.0,
            success: !collision,
            collision,
            safety: 1.0,
            efficiency: 1.0,
            comfort: 1.0,
        }
    }

    #[test]
    fn comparison_table() {
        let ours: Vec<_> = (0..25).map(|i| report(i < 5)).collect();
        let c = compare_pipelines(&ours, &ours).unwrap();
        assert!((c.ours_collision_rate - 0.2).abs() < 1e-12);
        assert_eq!(c.ours, c.baseline);
        let t = c.to_table();
        assert_eq!(t.row_labels(), COMPARISON_ROWS);
        assert_eq!(t.header, ["Scenario", "Ours", "RandomTrip"]);
        assert!(matches!(compare_pipelines(&ours, &ours[..3]), Err(EvalError::CountMismatch { .. })));
    }

    proptest! {
        #[test]
        fn total_never_exceeds_driving(speed in 0.0f64..20.0, progress in 0.0f64..150.0, ttc in prop::option::of(0.0f64..10.0), jerk in 0.0f64..5.0) {
            let r = performance(&trace(speed, progress, ttc, jerk), &route(), &PerformanceWeights::default()).unwrap();
            prop_assert_eq!(r.total_score, r.driving_score * r.route_completion);
            prop_assert!(r.total_score <= r.driving_score);
            prop_assert!((0.0..=1.0).contains(&r.route_completion));
            prop_assert!((0.0..=100.0).contains(&r.driving_score));
        }
    }
}
