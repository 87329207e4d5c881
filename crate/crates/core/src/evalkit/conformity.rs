//! Agreement between descriptions and the scenarios generated from them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{classify_scene, FailureClass, TextTable};
use crate::compgen::IMPLICIT_EGO_ID;
use crate::ir::{ObjectKind, ScenarioBundle, ScenarioDescription, SceneType};

/// One pipeline run: the description it started from and either the
/// generated bundle or the class of the stage error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub description: ScenarioDescription,
    pub bundle: Option<ScenarioBundle>,
    pub failure: Option<FailureClass>,
}

impl ScenarioOutcome {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none() && self.bundle.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformityReport {
    pub scene_type_acc: f64,
    pub vehicle_attr_acc: f64,
    pub static_obj_attr_acc: f64,
    pub success_rate: f64,
    pub failure_taxonomy_counts: BTreeMap<FailureClass, usize>,
    pub runs: usize,
}

/// Greedy matching on (kind, color) over vehicles, scored matched / max(n, m).
/// The implicitly added ego is ignored.
pub fn vehicle_attr_acc(desc: &ScenarioDescription, bundle: &ScenarioBundle) -> f64 {
    let wanted: Vec<_> = desc.agents.iter().filter(|a| a.kind.is_vehicle()).map(|a| (a.kind, a.color.as_deref())).collect();
    let mut have: Vec<Option<_>> = bundle
        .agents
        .iter()
        .filter(|a| a.kind.is_vehicle() && a.id != IMPLICIT_EGO_ID)
        .map(|a| Some((a.kind, a.color.as_deref())))
        .collect();
    let total = wanted.len().max(have.len());
    if total == 0 {
        return 1.0;
    }
    let mut matched = 0;
    for w in &wanted {
        if let Some(slot) = have.iter_mut().find(|h| h.as_ref() == Some(w)) {
            *slot = None;
            matched += 1;
        }
    }
    matched as f64 / total as f64
}

/// Σ min(count) / Σ max(count) over object kinds.
pub fn static_obj_attr_acc(desc: &ScenarioDescription, bundle: &ScenarioBundle) -> f64 {
    let (mut lo, mut hi) = (0u64, 0u64);
    for kind in ObjectKind::ALL {
        let a = u64::from(desc.object_count(kind));
        let b = bundle.objects.iter().filter(|o| o.kind == kind).count() as u64;
        lo += a.min(b);
        hi += a.max(b);
    }
    if hi == 0 {
        1.0
    } else {
        lo as f64 / hi as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Accuracies are averaged over successful runs; the success rate and the
/// taxonomy are taken over all runs.
pub fn conformity(outcomes: &[ScenarioOutcome]) -> ConformityReport {
    let ok: Vec<(&ScenarioDescription, &ScenarioBundle)> =
        outcomes.iter().filter(|o| o.succeeded()).filter_map(|o| Some((&o.description, o.bundle.as_ref()?))).collect();
    let scene: Vec<f64> =
        ok.iter().map(|(d, b)| f64::from(u8::from(classify_scene(&b.network, &b.objects) == d.scene_type))).collect();
    let vehicle: Vec<f64> = ok.iter().map(|(d, b)| vehicle_attr_acc(d, b)).collect();
    let statics: Vec<f64> = ok.iter().map(|(d, b)| static_obj_attr_acc(d, b)).collect();
    let mut taxonomy: BTreeMap<FailureClass, usize> = FailureClass::ALL.iter().map(|c| (*c, 0)).collect();
    for c in outcomes.iter().filter_map(|o| o.failure) {
        *taxonomy.entry(c).or_default() += 1;
    }
    ConformityReport {
        scene_type_acc: mean(&scene),
        vehicle_attr_acc: mean(&vehicle),
        static_obj_attr_acc: mean(&statics),
        success_rate: if outcomes.is_empty() { 0.0 } else { ok.len() as f64 / outcomes.len() as f64 },
        failure_taxonomy_counts: taxonomy,
        runs: outcomes.len(),
    }
}

/// Conformity per described scene type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformityTable {
    pub columns: Vec<(SceneType, ConformityReport)>,
}

pub fn conformity_table(outcomes: &[ScenarioOutcome]) -> ConformityTable {
    let columns = SceneType::ALL
        .iter()
        .filter_map(|t| {
            let group: Vec<ScenarioOutcome> = outcomes.iter().filter(|o| o.description.scene_type == *t).cloned().collect();
            (!group.is_empty()).then(|| (*t, conformity(&group)))
        })
        .collect();
    ConformityTable { columns }
}

impl ConformityTable {
    pub fn to_table(&self) -> TextTable {
        let mut header = vec!["Metrics"];
        header.extend(self.columns.iter().map(|(t, _)| t.label()));
        let mut t = TextTable::new(&header);
        let rows: [(&str, fn(&ConformityReport) -> f64); 4] = [
            ("Scene Type", |r| r.scene_type_acc),
            ("Vehicle attributes", |r| r.vehicle_attr_acc),
            ("Static Objects attributes", |r| r.static_obj_attr_acc),
            ("Success rate", |r| r.success_rate),
        ];
        for (name, get) in rows {
            let mut cells = vec![name.to_string()];
            cells.extend(self.columns.iter().map(|(_, r)| format!("{:.2}", get(r))));
            t.row(cells);
        }
        t
    }
}

impl fmt::Display for ConformityTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_table())
    }
}
