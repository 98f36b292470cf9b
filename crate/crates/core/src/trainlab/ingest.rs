//! Loading participant selections and the charts they refer to.
//!
//! Selections are CSV with columns `chart_id,participant_id,member_labels`,
//! where `member_labels` is a `;`-separated label list. Charts live in a
//! directory as `<chart_id>.json`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::negatives::synthesize_negatives;
use super::{ExampleSource, LabeledExample, TrainError};
use crate::chart::Chart;
use crate::features::{feature_vector, Group};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chart_id: String,
    pub participant_id: String,
    pub members: Group,
}

#[derive(Deserialize)]
struct Row {
    chart_id: String,
    participant_id: String,
    member_labels: String,
}

pub fn read_selections<R: Read>(reader: R) -> Result<Vec<Selection>, TrainError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(Selection {
                chart_id: row.chart_id,
                participant_id: row.participant_id,
                members: Group::new(
                    row.member_labels
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty()),
                ),
            })
        })
        .collect()
}

pub fn read_selections_file(path: &Path) -> Result<Vec<Selection>, TrainError> {
    let file = std::fs::File::open(path).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_selections(file)
}

/// Every `*.json` file in `dir`, keyed by file stem.
pub fn load_chart_dir(dir: &Path) -> Result<BTreeMap<String, Chart>, TrainError> {
    let io = |source| TrainError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let text = std::fs::read_to_string(&path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let chart: Chart = serde_json::from_str(&text).map_err(|source| TrainError::Json {
            path: path.display().to_string(),
            source,
        })?;
        chart.validate()?;
        out.insert(stem.to_string(), chart);
    }
    Ok(out)
}

/// Selected groups per chart, duplicates across participants collapsed.
pub fn selected_groups(selections: &[Selection]) -> BTreeMap<String, Vec<Group>> {
    let mut out: BTreeMap<String, Vec<Group>> = BTreeMap::new();
    for s in selections {
        let groups = out.entry(s.chart_id.clone()).or_default();
        if !groups.contains(&s.members) {
            groups.push(s.members.clone());
        }
    }
    out
}

/// Positive examples from selections plus synthesized negatives.
pub fn build_training_set(
    charts: &BTreeMap<String, Chart>,
    selections: &[Selection],
) -> Result<Vec<LabeledExample>, TrainError> {
    let selected = selected_groups(selections);
    let mut out = Vec::new();
    for (id, groups) in &selected {
        let chart = charts
            .get(id)
            .ok_or_else(|| TrainError::UnknownChart(id.clone()))?;
        for g in groups {
            g.validate(chart).map_err(|source| TrainError::Group {
                chart_id: id.clone(),
                source,
            })?;
            out.push(LabeledExample {
                chart_id: id.clone(),
                group: g.clone(),
                chart_size: chart.len(),
                features: feature_vector(chart, g)?,
                label: true,
                source: ExampleSource::Participant,
            });
        }
    }
    out.extend(synthesize_negatives(charts, &selected)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_selection_csv() {
        let csv = "chart_id,participant_id,member_labels\nc1,p1,A;B;C\nc1,p2, B ; A;C\nc2,p1,D;E\n";
        let rows = read_selections(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].members, Group::new(["A", "B", "C"]));
        let grouped = selected_groups(&rows);
        assert_eq!(grouped["c1"].len(), 1);
        assert_eq!(grouped["c2"], vec![Group::new(["D", "E"])]);
    }

    #[test]
    fn missing_column_is_csv_error() {
        assert!(matches!(
            read_selections("chart_id,x\nc1,A".as_bytes()),
            Err(TrainError::Csv(_))
        ));
    }

    #[test]
    fn loads_chart_dir_and_builds_set() {
        let dir = tempfile::tempdir().unwrap();
        let chart = Chart::from_slot_values(&[10.0, 80.0, 20.0, 90.0, 15.0]).unwrap();
        std::fs::write(
            dir.path().join("c1.json"),
            serde_json::to_string(&chart).unwrap(),
        )
        .unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let charts = load_chart_dir(dir.path()).unwrap();
        assert_eq!(charts.keys().collect::<Vec<_>>(), vec!["c1"]);
        let selections =
            read_selections("chart_id,participant_id,member_labels\nc1,p1,A;C;E\n".as_bytes())
                .unwrap();
        let set = build_training_set(&charts, &selections).unwrap();
        assert_eq!(set.iter().filter(|e| e.label).count(), 1);
        assert!(set
            .iter()
            .filter(|e| !e.label)
            .all(|e| e.source == ExampleSource::SyntheticNegative));
    }
}
