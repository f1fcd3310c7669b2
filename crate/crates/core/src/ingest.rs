//! Scenario JSON parsing/serialization and maneuver label mining.
//!
//! Scenario documents look like
//!
//! ```json
//! {"id": "s1", "time_span": [0.0, 5.0],
//!  "objects": [{"id": "ego", "class": "ego", "size": [4.5, 1.8],
//!               "trajectory": [[0.0, 1.0, 2.0], [0.1, 2.0, 2.0, 0.0]]}],
//!  "map": [{"id": "l0", "polygon": [[0,0],[10,0],[10,3]],
//!           "neighbors": [], "intersection": null}]}
//! ```
//!
//! Trajectory samples are `[t, x, y]` or `[t, x, y, heading]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::expert::inpolygon_point;
use crate::geometry::Vec2;
use crate::scenario::{MapElement, ObjectClass, Scenario, SceneObject, Size, Trajectory, TrajectoryPoint};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    time_span: [f64; 2],
    objects: Vec<RawObject>,
    map: Vec<RawElement>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: String,
    class: RawClass,
    size: [f64; 2],
    trajectory: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawClass {
    Ego,
    Vehicle,
    Pedestrian,
    Other,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    id: String,
    polygon: Vec<[f64; 2]>,
    #[serde(default)]
    neighbors: Vec<String>,
    #[serde(default)]
    intersection: Option<String>,
}

impl From<RawClass> for ObjectClass {
    fn from(c: RawClass) -> Self {
        match c {
            RawClass::Ego => ObjectClass::Ego,
            RawClass::Vehicle => ObjectClass::Vehicle,
            RawClass::Pedestrian => ObjectClass::Pedestrian,
            RawClass::Other => ObjectClass::Other,
        }
    }
}

impl From<ObjectClass> for RawClass {
    fn from(c: ObjectClass) -> Self {
        match c {
            ObjectClass::Ego => RawClass::Ego,
            ObjectClass::Vehicle => RawClass::Vehicle,
            ObjectClass::Pedestrian => RawClass::Pedestrian,
            ObjectClass::Other => RawClass::Other,
        }
    }
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    let mut current = 1;
    for (i, &b) in text.iter().enumerate() {
        if current == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            current += 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(text.len())
}

fn convert_error(bytes: &[u8], err: serde_path_to_error::Error<serde_json::Error>) -> Error {
    use serde_json::error::Category;
    let path = err.path().to_string();
    let inner = err.into_inner();
    match inner.classify() {
        Category::Data => {
            let message = inner.to_string();
            // Missing fields are reported against the parent; point at the field.
            let path = match message
                .strip_prefix("missing field `")
                .and_then(|rest| rest.split('`').next())
            {
                Some(field) if path == "." => field.to_string(),
                Some(field) => format!("{path}.{field}"),
                None => path,
            };
            Error::Schema { path, message }
        }
        _ => Error::Json {
            offset: byte_offset(bytes, inner.line(), inner.column()),
            message: inner.to_string(),
        },
    }
}

fn from_raw(raw: RawScenario) -> Result<Scenario> {
    let mut objects = Vec::with_capacity(raw.objects.len());
    for (i, o) in raw.objects.into_iter().enumerate() {
        let mut points = Vec::with_capacity(o.trajectory.len());
        for (j, sample) in o.trajectory.iter().enumerate() {
            let point = match sample.as_slice() {
                [t, x, y] => TrajectoryPoint::new(*t, *x, *y),
                [t, x, y, h] => TrajectoryPoint::with_heading(*t, *x, *y, *h),
                _ => {
                    return Err(Error::Schema {
                        path: format!("objects[{i}].trajectory[{j}]"),
                        message: format!(
                            "expected [t, x, y] or [t, x, y, heading], got {} values",
                            sample.len()
                        ),
                    })
                }
            };
            points.push(point);
        }
        objects.push(SceneObject {
            id: o.id,
            trajectory: Trajectory::new(points),
            size: Size {
                length: o.size[0],
                width: o.size[1],
            },
            class: o.class.into(),
        });
    }
    let map = raw
        .map
        .into_iter()
        .map(|m| MapElement {
            id: m.id,
            polygon: m.polygon.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            neighbors: m.neighbors,
            intersection: m.intersection,
        })
        .collect();
    Ok(Scenario {
        id: raw.id,
        objects,
        map,
        time_span: (raw.time_span[0], raw.time_span[1]),
    })
}

fn to_raw(s: &Scenario) -> RawScenario {
    RawScenario {
        id: s.id.clone(),
        time_span: [s.time_span.0, s.time_span.1],
        objects: s
            .objects
            .iter()
            .map(|o| RawObject {
                id: o.id.clone(),
                class: o.class.into(),
                size: [o.size.length, o.size.width],
                trajectory: o
                    .trajectory
                    .points
                    .iter()
                    .map(|p| match p.heading {
                        Some(h) => vec![p.t, p.x, p.y, h],
                        None => vec![p.t, p.x, p.y],
                    })
                    .collect(),
            })
            .collect(),
        map: s
            .map
            .iter()
            .map(|m| RawElement {
                id: m.id.clone(),
                polygon: m.polygon.iter().map(|p| [p.x, p.y]).collect(),
                neighbors: m.neighbors.clone(),
                intersection: m.intersection.clone(),
            })
            .collect(),
    }
}

/// Parses a scenario document without running validation.
pub fn parse_scenario_unchecked(bytes: &[u8]) -> Result<Scenario> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let raw: RawScenario =
        serde_path_to_error::deserialize(&mut de).map_err(|e| convert_error(bytes, e))?;
    de.end().map_err(|e| Error::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    from_raw(raw)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(bytes: &[u8]) -> Result<Scenario> {
    let scenario = parse_scenario_unchecked(bytes)?;
    scenario.ensure_valid()?;
    Ok(scenario)
}

/// Canonical single-line JSON for a scenario.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    serde_json::to_string(&to_raw(scenario)).expect("scenario serializes")
}

/// Parses newline-delimited scenario documents, skipping blank lines.
pub fn parse_scenario_lines(text: &str) -> Result<Vec<Scenario>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            parse_scenario(line.as_bytes()).map_err(|e| match e {
                Error::Json { offset, message } => Error::Json {
                    offset,
                    message: format!("line {}: {message}", n + 1),
                },
                Error::Schema { path, message } => Error::Schema {
                    path: format!("line {}: {path}", n + 1),
                    message,
                },
                other => other,
            })
        })
        .collect()
}

pub fn serialize_scenario_lines(scenarios: &[Scenario]) -> String {
    let mut out = String::new();
    for s in scenarios {
        out.push_str(&serialize_scenario(s));
        out.push('\n');
    }
    out
}

/// Maneuver label vector `[in_left, in_right, in_straight, lane_change, straight]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LabelVector {
    pub in_left: bool,
    pub in_right: bool,
    pub in_straight: bool,
    pub lane_change: bool,
    pub straight: bool,
}

impl LabelVector {
    pub fn bits(&self) -> [u8; 5] {
        [
            self.in_left as u8,
            self.in_right as u8,
            self.in_straight as u8,
            self.lane_change as u8,
            self.straight as u8,
        ]
    }

    pub fn from_bits(bits: [u8; 5]) -> Self {
        Self {
            in_left: bits[0] != 0,
            in_right: bits[1] != 0,
            in_straight: bits[2] != 0,
            lane_change: bits[3] != 0,
            straight: bits[4] != 0,
        }
    }

    /// The bit pattern as an integer, `in_left` most significant.
    pub fn pattern(&self) -> u8 {
        self.bits().iter().fold(0, |acc, &b| (acc << 1) | b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    /// Net heading change (degrees) separating turns from going straight.
    pub turn_threshold_deg: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            turn_threshold_deg: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelWarning {
    /// The EGO never lies inside any lane polygon.
    EgoOffMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinedLabels {
    pub labels: LabelVector,
    pub heading_change_deg: f64,
    pub warning: Option<LabelWarning>,
}

fn unwrapped_heading_change(traj: &Trajectory) -> Result<f64> {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for p in &traj.points {
        let h = traj.heading_at(p.t)?;
        if let Some(q) = prev {
            total += crate::geometry::wrap_radians(h - q);
        }
        prev = Some(h);
    }
    Ok(total)
}

/// Mines the maneuver labels of the EGO.
pub fn mine_labels(scenario: &Scenario, config: &LabelConfig) -> Result<MinedLabels> {
    let ego = scenario.ego()?;
    let points: Vec<Vec2> = ego.trajectory.points.iter().map(|p| p.position()).collect();
    let contains = |m: &MapElement, p: Vec2| inpolygon_point(p, m);

    let on_map = points
        .iter()
        .any(|&p| scenario.map.iter().any(|m| contains(m, p)));
    let delta = unwrapped_heading_change(&ego.trajectory)?.to_degrees();
    if !on_map {
        return Ok(MinedLabels {
            labels: LabelVector::default(),
            heading_change_deg: delta,
            warning: Some(LabelWarning::EgoOffMap),
        });
    }

    let in_intersection = |p: Vec2| {
        scenario
            .map
            .iter()
            .any(|m| m.intersection.is_some() && contains(m, p))
    };
    let involvement = points.iter().any(|&p| in_intersection(p));

    // Sequence of occupied non-intersection lanes, sticking to the current
    // lane while the EGO remains inside it.
    let mut sequence: Vec<usize> = Vec::new();
    for &p in &points {
        if in_intersection(p) {
            continue;
        }
        if let Some(&current) = sequence.last() {
            if contains(&scenario.map[current], p) {
                continue;
            }
        }
        if let Some(idx) = scenario
            .map
            .iter()
            .position(|m| m.intersection.is_none() && contains(m, p))
        {
            if sequence.last() != Some(&idx) {
                sequence.push(idx);
            }
        }
    }
    let lane_change = sequence.windows(2).any(|w| {
        let (a, b) = (&scenario.map[w[0]], &scenario.map[w[1]]);
        a.neighbors.contains(&b.id) || b.neighbors.contains(&a.id)
    });

    let thr = config.turn_threshold_deg;
    let in_left = involvement && delta > thr;
    let in_right = involvement && delta < -thr;
    let in_straight = involvement && !in_left && !in_right;
    let straight = !(in_left || in_right || in_straight || lane_change) && !sequence.is_empty();

    Ok(MinedLabels {
        labels: LabelVector {
            in_left,
            in_right,
            in_straight,
            lane_change,
            straight,
        },
        heading_change_deg: delta,
        warning: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub scenario_id: String,
    pub y: [u8; 5],
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub entries: Vec<LabeledEntry>,
    /// Observed label patterns in sorted order; index = class id.
    pub class_table: Vec<LabelVector>,
}

impl LabeledDataset {
    /// Assigns class ids as the rank of each pattern among the sorted set
    /// of observed patterns.
    pub fn from_labels(labels: Vec<(String, LabelVector)>) -> Self {
        let table: Vec<LabelVector> = labels
            .iter()
            .map(|(_, y)| *y)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let entries = labels
            .into_iter()
            .map(|(scenario_id, y)| LabeledEntry {
                scenario_id,
                y: y.bits(),
                class_id: table.binary_search(&y).expect("pattern present"),
            })
            .collect();
        Self {
            entries,
            class_table: table,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_table.len()
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.class_id).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    /// Reads labeled entries back; the class table is rebuilt from the
    /// stored bit patterns.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: LabeledEntry = serde_json::from_str(line).map_err(|e| Error::Schema {
                path: format!("line {}", n + 1),
                message: e.to_string(),
            })?;
            entries.push(e);
        }
        let rebuilt = Self::from_labels(
            entries
                .iter()
                .map(|e| (e.scenario_id.clone(), LabelVector::from_bits(e.y)))
                .collect(),
        );
        if rebuilt.entries != entries {
            return Err(Error::Format(
                "class ids do not match the sorted pattern table".into(),
            ));
        }
        Ok(rebuilt)
    }
}

/// Mines labels for every scenario and assigns dense class ids.
pub fn build_labeled_dataset(scenarios: &[Scenario], config: &LabelConfig) -> Result<LabeledDataset> {
    let labels = scenarios
        .iter()
        .map(|s| Ok((s.id.clone(), mine_labels(s, config)?.labels)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::from_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"id":"s1","time_span":[0.0,1.0],
        "objects":[{"id":"ego","class":"ego","size":[4.5,1.8],
                    "trajectory":[[0.0,1.0,1.0],[0.5,2.0,1.0,0.0],[1.0,3.0,1.0]]}],
        "map":[{"id":"l0","polygon":[[0,0],[10,0],[10,3],[0,3]],"neighbors":[],"intersection":null}]}"#;

    #[test]
    fn parses_minimal_document() {
        let s = parse_scenario(MINIMAL.as_bytes()).unwrap();
        assert_eq!(s.objects.len(), 1);
        assert_eq!(s.map.len(), 1);
        assert_eq!(s.objects[0].trajectory.points[1].heading, Some(0.0));
        assert_eq!(s.objects[0].trajectory.points[0].heading, None);
    }

    #[test]
    fn missing_objects_reports_field_path() {
        let doc = r#"{"id":"s1","time_span":[0,1],"map":[]}"#;
        match parse_scenario(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "objects"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_schema_errors_carry_paths() {
        let doc = MINIMAL.replace("\"class\":\"ego\"", "\"class\":\"tram\"");
        match parse_scenario(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "objects[0].class"),
            other => panic!("unexpected {other:?}"),
        }
        let doc = MINIMAL.replace("[0.0,1.0,1.0]", "[0.0,1.0]");
        match parse_scenario(doc.as_bytes()) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "objects[0].trajectory[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_offset() {
        let doc = "{\"id\": \"s1\",\n \"time_span\": [0, 1],, }";
        match parse_scenario(doc.as_bytes()) {
            Err(Error::Json { offset, .. }) => {
                assert_eq!(&doc[offset..offset + 1], ",");
                assert_eq!(offset, doc.find(",,").unwrap() + 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_violation_is_validation_error() {
        let doc = MINIMAL.replace("\"neighbors\":[]", "\"neighbors\":[\"ghost\"]");
        assert!(matches!(parse_scenario(doc.as_bytes()), Err(Error::Invalid(_))));
        assert!(parse_scenario_unchecked(doc.as_bytes()).is_ok());
    }

    #[test]
    fn canonical_round_trip() {
        let s = parse_scenario(MINIMAL.as_bytes()).unwrap();
        let text = serialize_scenario(&s);
        let back = parse_scenario(text.as_bytes()).unwrap();
        assert_eq!(s, back);
        assert_eq!(serialize_scenario(&back), text);
    }

    #[test]
    fn class_ids_follow_sorted_patterns() {
        let a = LabelVector {
            straight: true,
            ..Default::default()
        };
        let b = LabelVector {
            in_left: true,
            ..Default::default()
        };
        let c = LabelVector {
            lane_change: true,
            ..Default::default()
        };
        let ds = LabeledDataset::from_labels(vec![
            ("s0".into(), a),
            ("s1".into(), a),
            ("s2".into(), b),
            ("s3".into(), c),
        ]);
        assert_eq!(ds.n_classes(), 3);
        // Patterns: a=00001, c=00010, b=10000.
        assert_eq!(ds.class_ids(), vec![0, 0, 2, 1]);
        let same = LabeledDataset::from_labels(vec![("x".into(), a), ("y".into(), a)]);
        assert_eq!(same.n_classes(), 1);
        let back = LabeledDataset::from_jsonl(&ds.to_jsonl()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_dataset() {
        let ds = build_labeled_dataset(&[], &LabelConfig::default()).unwrap();
        assert!(ds.entries.is_empty());
        assert_eq!(ds.n_classes(), 0);
    }

    #[test]
    fn off_map_ego_warns() {
        let doc = MINIMAL.replace("[[0,0],[10,0],[10,3],[0,3]]", "[[50,50],[60,50],[60,53],[50,53]]");
        let s = parse_scenario(doc.as_bytes()).unwrap();
        let mined = mine_labels(&s, &LabelConfig::default()).unwrap();
        assert_eq!(mined.labels, LabelVector::default());
        assert_eq!(mined.warning, Some(LabelWarning::EgoOffMap));
    }

    #[test]
    fn single_lane_drive_is_straight() {
        let s = parse_scenario(MINIMAL.as_bytes()).unwrap();
        let mined = mine_labels(&s, &LabelConfig::default()).unwrap();
        assert_eq!(mined.labels.bits(), [0, 0, 0, 0, 1]);
        assert!(mined.warning.is_none());
    }
}
