//! Spread of network and placement statistics over a scenario set.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::TextTable;
use crate::compgen::shortest_distance;
use crate::ir::{ScenarioBundle, SceneType};
use crate::netgen::network_stats;
use crate::stats::Summary;

pub const DIVERSITY_ROWS: [&str; 8] =
    ["#Lanes", "#Edges", "Route Length", "#Distance", "#Agents", "#Objects", "Shortest", "Vehicle yaw"];

/// Raw per-scenario numbers behind the diversity table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub scene_type: SceneType,
    pub lanes: f64,
    pub edges: f64,
    pub route_length: f64,
    pub distance: f64,
    pub agents: f64,
    pub objects: f64,
    /// Only defined with two or more agents.
    pub shortest: Option<f64>,
    pub vehicle_yaw: Vec<f64>,
}

/// `scene_type` is the class the scenario was requested as.
pub fn scenario_stats(bundle: &ScenarioBundle, scene_type: SceneType) -> ScenarioStats {
    let ns = network_stats(&bundle.network);
    ScenarioStats {
        scene_type,
        lanes: ns.total_lanes as f64,
        edges: ns.total_edges as f64,
        route_length: ns.route_length,
        distance: ns.pairwise_junction_distance,
        agents: bundle.agents.len() as f64,
        objects: bundle.objects.len() as f64,
        shortest: shortest_distance(&bundle.agents),
        vehicle_yaw: bundle.agents.iter().filter(|a| a.kind.is_vehicle()).map(|a| a.heading).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityColumn {
    pub scenarios: usize,
    /// In the order of [`DIVERSITY_ROWS`].
    pub metrics: Vec<Summary>,
}

impl DiversityColumn {
    fn of(stats: &[&ScenarioStats]) -> Self {
        let col = |f: fn(&ScenarioStats) -> f64| Summary::of(&stats.iter().map(|s| f(s)).collect::<Vec<_>>());
        let shortest: Vec<f64> = stats.iter().filter_map(|s| s.shortest).collect();
        let yaw: Vec<f64> = stats.iter().flat_map(|s| s.vehicle_yaw.iter().copied()).collect();
        DiversityColumn {
            scenarios: stats.len(),
            metrics: vec![
                col(|s| s.lanes),
                col(|s| s.edges),
                col(|s| s.route_length),
                col(|s| s.distance),
                col(|s| s.agents),
                col(|s| s.objects),
                Summary::of(&shortest),
                Summary::of(&yaw),
            ],
        }
    }

    pub fn metric(&self, row: &str) -> Option<Summary> {
        DIVERSITY_ROWS.iter().position(|r| *r == row).map(|i| self.metrics[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// One column per scene type present, then "All".
    pub columns: Vec<(String, DiversityColumn)>,
}

pub fn diversity(stats: &[ScenarioStats]) -> DiversityReport {
    let mut columns: Vec<(String, DiversityColumn)> = SceneType::ALL
        .iter()
        .filter_map(|t| {
            let group: Vec<&ScenarioStats> = stats.iter().filter(|s| s.scene_type == *t).collect();
            (!group.is_empty()).then(|| (t.label().to_string(), DiversityColumn::of(&group)))
        })
        .collect();
    columns.push(("All".into(), DiversityColumn::of(&stats.iter().collect::<Vec<_>>())));
    DiversityReport { columns }
}

impl DiversityReport {
    pub fn column(&self, name: &str) -> Option<&DiversityColumn> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Table restricted to the named rows.
    pub fn table(&self, rows: &[&str]) -> TextTable {
        let mut header = vec!["Metrics"];
        header.extend(self.columns.iter().map(|(n, _)| n.as_str()));
        let mut t = TextTable::new(&header);
        for row in rows {
            let mut cells = vec![row.to_string()];
            cells.extend(self.columns.iter().map(|(_, c)| c.metric(row).map_or_else(String::new, |s| s.to_string())));
            t.row(cells);
        }
        t
    }

    pub fn network_table(&self) -> TextTable {
        self.table(&DIVERSITY_ROWS[..4])
    }

    pub fn placement_table(&self) -> TextTable {
        self.table(&DIVERSITY_ROWS[4..])
    }
}

impl fmt::Display for DiversityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", self.network_table(), self.placement_table())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{bundle_for, construction_fixture, intersection_fixture};
    use proptest::prelude::*;

    fn two_pass(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mut total = 0.0;
        for x in v {
            total += x;
        }
        let m = total / n;
        let mut sq = 0.0;
        for x in v {
            sq += (x - m) * (x - m);
        }
        (m, if v.len() < 2 { 0.0 } else { (sq / (n - 1.0)).sqrt() })
    }

    fn stats(lanes: f64) -> ScenarioStats {
        ScenarioStats {
            scene_type: SceneType::General,
            lanes,
            edges: 1.0,
            route_length: 10.0,
            distance: 5.0,
            agents: 1.0,
            objects: 0.0,
            shortest: None,
            vehicle_yaw: vec![0.0],
        }
    }

    #[test]
    fn lane_counts_three_six_nine() {
        let r = diversity(&[stats(3.0), stats(6.0), stats(9.0)]);
        assert_eq!(r.column("General").unwrap().metric("#Lanes").unwrap().to_string(), "6.00 ± 3.00");
    }

    #[test]
    fn single_scenario_has_zero_std() {
        let r = diversity(&[stats(4.0)]);
        assert!(r.column("All").unwrap().metrics.iter().all(|s| s.std == 0.0));
    }

    #[test]
    fn fixture_set_matches_oracle() {
        let mut all = Vec::new();
        for seed in 0..4 {
            let c = construction_fixture();
            all.push(scenario_stats(&bundle_for(&c, seed), c.scene_type));
            let i = intersection_fixture();
            all.push(scenario_stats(&bundle_for(&i, seed), i.scene_type));
        }
        let r = diversity(&all);
        let col = r.column("All").unwrap();
        let yaw: Vec<f64> = all.iter().flat_map(|s| s.vehicle_yaw.clone()).collect();
        let (m, s) = two_pass(&yaw);
        let got = col.metric("Vehicle yaw").unwrap();
        assert!((got.mean - m).abs() < 1e-9 && (got.std - s).abs() < 1e-9);
        let lanes: Vec<f64> = all.iter().map(|s| s.lanes).collect();
        let (m, s) = two_pass(&lanes);
        let got = col.metric("#Lanes").unwrap();
        assert!((got.mean - m).abs() < 1e-9 && (got.std - s).abs() < 1e-9);
        assert_eq!(r.network_table().row_labels(), ["#Lanes", "#Edges", "Route Length", "#Distance"]);
        assert_eq!(r.columns.len(), 3);
    }

    proptest! {
        #[test]
        fn summaries_equal_two_pass(values in prop::collection::vec(-1e3f64..1e3, 1..40)) {
            let set: Vec<ScenarioStats> = values.iter().map(|v| ScenarioStats { route_length: *v, ..stats(1.0) }).collect();
            let got = diversity(&set).column("All").unwrap().metric("Route Length").unwrap();
            let (m, s) = two_pass(&values);
            prop_assert!((got.mean - m).abs() < 1e-9);
            prop_assert!((got.std - s).abs() < 1e-9);
        }
    }
}
