//! Scenario model: objects with trajectories plus a lane-piece map.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::geometry::{is_simple_polygon, Vec2};
use crate::{Error, Result};

/// Displacements shorter than this are treated as standing still.
pub const STATIONARY_EPS: f64 = 1e-6;

/// Slack applied when checking that the EGO covers the time span.
const SPAN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: Option<f64>,
}

impl TrajectoryPoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            x,
            y,
            heading: None,
        }
    }

    pub fn with_heading(t: f64, x: f64, y: f64, heading: f64) -> Self {
        Self {
            t,
            x,
            y,
            heading: Some(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.points.first().map(|p| p.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.points.last().map(|p| p.t)
    }

    /// Index of the sample closest in time to `t`; ties resolve to the
    /// earlier sample.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let upper = self.points.partition_point(|p| p.t < t);
        let mut best = upper.min(self.points.len() - 1);
        if upper > 0 && (t - self.points[upper - 1].t) <= (self.points[best].t - t).abs() {
            best = upper - 1;
        }
        Some(best)
    }

    /// Position at `t` by linear interpolation, clamped to the sampled span.
    pub fn position_at(&self, t: f64) -> Option<Vec2> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if t <= first.t {
            return Some(first.position());
        }
        if t >= last.t {
            return Some(last.position());
        }
        let i = pts.partition_point(|p| p.t <= t) - 1;
        let (a, b) = (pts[i], pts[i + 1]);
        let w = (t - a.t) / (b.t - a.t);
        Some(a.position() + (b.position() - a.position()) * w)
    }

    /// Heading (radians) at time `t`.
    ///
    /// A heading stored on the nearest sample wins. Otherwise the direction
    /// of the displacement between the samples bracketing `t` is used; when
    /// that bracket is stationary the most recent earlier heading is
    /// inherited, defaulting to 0.
    pub fn heading_at(&self, t: f64) -> Result<f64> {
        let pts = &self.points;
        let (start, end) = match (self.start_time(), self.end_time()) {
            (Some(s), Some(e)) => (s, e),
            _ => {
                return Err(Error::OutOfRange {
                    t,
                    start: f64::NAN,
                    end: f64::NAN,
                })
            }
        };
        if !(t >= start - 1e-9 && t <= end + 1e-9) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let nearest = self.nearest_index(t).expect("non-empty");
        if let Some(h) = pts[nearest].heading {
            return Ok(h);
        }
        if pts.len() == 1 {
            return Ok(0.0);
        }
        let i = pts
            .partition_point(|p| p.t <= t)
            .saturating_sub(1)
            .min(pts.len() - 2);
        for j in (0..=i).rev() {
            if j < i {
                if let Some(h) = pts[j + 1].heading {
                    return Ok(h);
                }
            }
            let d = pts[j + 1].position() - pts[j].position();
            if d.norm() >= STATIONARY_EPS {
                return Ok(d.y.atan2(d.x));
            }
        }
        Ok(pts[0].heading.unwrap_or(0.0))
    }

    pub fn shifted_in_time(&self, dt: f64) -> Trajectory {
        Trajectory::new(
            self.points
                .iter()
                .map(|p| TrajectoryPoint { t: p.t + dt, ..*p })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectClass {
    Ego,
    Vehicle,
    Pedestrian,
    Other,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Ego => "ego",
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ego" => ObjectClass::Ego,
            "vehicle" => ObjectClass::Vehicle,
            "pedestrian" => ObjectClass::Pedestrian,
            "other" => ObjectClass::Other,
            _ => return None,
        })
    }
}

/// Footprint extent in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Size {
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub trajectory: Trajectory,
    pub size: Size,
    pub class: ObjectClass,
}

/// A lane piece: polygon, neighboring pieces and optional intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct MapElement {
    pub id: String,
    pub polygon: Vec<Vec2>,
    pub neighbors: Vec<String>,
    pub intersection: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub objects: Vec<SceneObject>,
    pub map: Vec<MapElement>,
    pub time_span: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoEgo,
    MultipleEgo { count: usize },
    InvalidTimeSpan,
    DuplicateObjectId(String),
    DuplicateMapId(String),
    NonPositiveSize { object: String },
    EmptyEgoTrajectory,
    EgoSpanIncomplete,
    NonFiniteSample { object: String, index: usize },
    NonIncreasingTime { object: String, index: usize },
    SampleOutsideSpan { object: String, index: usize },
    TooFewVertices { element: String },
    PolygonNotSimple { element: String },
    DanglingNeighbor { element: String, neighbor: String },
    AsymmetricNeighbor { element: String, neighbor: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoEgo => write!(f, "no EGO"),
            Violation::MultipleEgo { count } => write!(f, "multiple EGO ({count})"),
            Violation::InvalidTimeSpan => write!(f, "invalid time span"),
            Violation::DuplicateObjectId(id) => write!(f, "duplicate object id `{id}`"),
            Violation::DuplicateMapId(id) => write!(f, "duplicate map element id `{id}`"),
            Violation::NonPositiveSize { object } => {
                write!(f, "non-positive size on object `{object}`")
            }
            Violation::EmptyEgoTrajectory => write!(f, "empty EGO trajectory"),
            Violation::EgoSpanIncomplete => write!(f, "EGO trajectory does not cover the time span"),
            Violation::NonFiniteSample { object, index } => {
                write!(f, "non-finite sample {index} on object `{object}`")
            }
            Violation::NonIncreasingTime { object, index } => {
                write!(f, "non-increasing timestamp at sample {index} on object `{object}`")
            }
            Violation::SampleOutsideSpan { object, index } => {
                write!(f, "sample {index} on object `{object}` outside time span")
            }
            Violation::TooFewVertices { element } => {
                write!(f, "polygon of `{element}` has fewer than 3 vertices")
            }
            Violation::PolygonNotSimple { element } => {
                write!(f, "polygon of `{element}` is not simple")
            }
            Violation::DanglingNeighbor { element, neighbor } => {
                write!(f, "dangling neighbor `{neighbor}` on `{element}`")
            }
            Violation::AsymmetricNeighbor { element, neighbor } => {
                write!(f, "asymmetric neighbor `{neighbor}` on `{element}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Checks every scenario invariant and reports all violations found.
pub fn validate(scenario: &Scenario) -> ValidationReport {
    let mut violations = Vec::new();
    let (t0, t1) = scenario.time_span;
    let span_ok = t0.is_finite() && t1.is_finite() && t1 >= t0;
    if !span_ok {
        violations.push(Violation::InvalidTimeSpan);
    }

    let egos: Vec<&SceneObject> = scenario
        .objects
        .iter()
        .filter(|o| o.class == ObjectClass::Ego)
        .collect();
    match egos.len() {
        0 => violations.push(Violation::NoEgo),
        1 => {
            let pts = &egos[0].trajectory.points;
            if pts.is_empty() {
                violations.push(Violation::EmptyEgoTrajectory);
            } else if span_ok {
                let first = pts[0].t;
                let last = pts[pts.len() - 1].t;
                if first > t0 + SPAN_EPS || last < t1 - SPAN_EPS {
                    violations.push(Violation::EgoSpanIncomplete);
                }
            }
        }
        count => violations.push(Violation::MultipleEgo { count }),
    }

    let mut seen = BTreeSet::new();
    for obj in &scenario.objects {
        if !seen.insert(obj.id.as_str()) {
            violations.push(Violation::DuplicateObjectId(obj.id.clone()));
        }
        let s = obj.size;
        if !(s.length > 0.0 && s.width > 0.0) {
            violations.push(Violation::NonPositiveSize {
                object: obj.id.clone(),
            });
        }
        let mut prev: Option<f64> = None;
        for (index, p) in obj.trajectory.points.iter().enumerate() {
            if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite())
                || p.heading.is_some_and(|h| !h.is_finite())
            {
                violations.push(Violation::NonFiniteSample {
                    object: obj.id.clone(),
                    index,
                });
                continue;
            }
            if prev.is_some_and(|q| p.t <= q) {
                violations.push(Violation::NonIncreasingTime {
                    object: obj.id.clone(),
                    index,
                });
            }
            if span_ok && (p.t < t0 - SPAN_EPS || p.t > t1 + SPAN_EPS) {
                violations.push(Violation::SampleOutsideSpan {
                    object: obj.id.clone(),
                    index,
                });
            }
            prev = Some(p.t);
        }
    }

    let mut elements: BTreeMap<&str, &MapElement> = BTreeMap::new();
    for el in &scenario.map {
        if elements.insert(el.id.as_str(), el).is_some() {
            violations.push(Violation::DuplicateMapId(el.id.clone()));
        }
    }
    for el in &scenario.map {
        if el.polygon.len() < 3 {
            violations.push(Violation::TooFewVertices {
                element: el.id.clone(),
            });
        } else if !is_simple_polygon(&el.polygon) {
            violations.push(Violation::PolygonNotSimple {
                element: el.id.clone(),
            });
        }
        for n in &el.neighbors {
            match elements.get(n.as_str()) {
                None => violations.push(Violation::DanglingNeighbor {
                    element: el.id.clone(),
                    neighbor: n.clone(),
                }),
                Some(other) if !other.neighbors.contains(&el.id) => {
                    violations.push(Violation::AsymmetricNeighbor {
                        element: el.id.clone(),
                        neighbor: n.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }

    ValidationReport { violations }
}

impl Scenario {
    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Returns `Err(Error::Invalid)` unless the scenario passes validation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Invalid(report))
        }
    }

    pub fn ego_index(&self) -> Result<usize> {
        let mut found = None;
        for (i, o) in self.objects.iter().enumerate() {
            if o.class == ObjectClass::Ego {
                if found.is_some() {
                    return Err(Error::Structure(format!(
                        "scenario `{}` has multiple EGO objects",
                        self.id
                    )));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| Error::Structure(format!("scenario `{}` has no EGO object", self.id)))
    }

    /// The unique EGO object.
    pub fn ego(&self) -> Result<&SceneObject> {
        self.ego_index().map(|i| &self.objects[i])
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn element(&self, id: &str) -> Option<&MapElement> {
        self.map.iter().find(|m| m.id == id)
    }

    /// Applies the rigid motion `p ↦ R(angle)·p + offset` to every position,
    /// polygon vertex and stored heading.
    pub fn transformed(&self, angle: f64, offset: Vec2) -> Scenario {
        let map_point = |p: Vec2| p.rotated(angle) + offset;
        let objects = self
            .objects
            .iter()
            .map(|o| SceneObject {
                trajectory: Trajectory::new(
                    o.trajectory
                        .points
                        .iter()
                        .map(|p| {
                            let q = map_point(p.position());
                            TrajectoryPoint {
                                t: p.t,
                                x: q.x,
                                y: q.y,
                                heading: p.heading.map(|h| h + angle),
                            }
                        })
                        .collect(),
                ),
                ..o.clone()
            })
            .collect();
        let map = self
            .map
            .iter()
            .map(|m| MapElement {
                polygon: m.polygon.iter().map(|&p| map_point(p)).collect(),
                ..m.clone()
            })
            .collect();
        Scenario {
            id: self.id.clone(),
            objects,
            map,
            time_span: self.time_span,
        }
    }

    /// Median sampling interval of the EGO trajectory, if it has at least two
    /// samples.
    pub fn ego_sample_interval(&self) -> Option<f64> {
        let ego = self.ego().ok()?;
        let mut dts: Vec<f64> = ego
            .trajectory
            .points
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .collect();
        if dts.is_empty() {
            return None;
        }
        dts.sort_by(f64::total_cmp);
        Some(dts[dts.len() / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rectangle;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn line(n: usize, dx: f64, dy: f64) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| TrajectoryPoint::new(i as f64 * 0.1, i as f64 * dx, i as f64 * dy))
                .collect(),
        )
    }

    fn object(id: &str, class: ObjectClass, traj: Trajectory) -> SceneObject {
        SceneObject {
            id: id.into(),
            trajectory: traj,
            size: Size {
                length: 4.5,
                width: 1.8,
            },
            class,
        }
    }

    fn lane(id: &str, neighbors: &[&str]) -> MapElement {
        MapElement {
            id: id.into(),
            polygon: rectangle(-10.0, -2.0, 50.0, 2.0),
            neighbors: neighbors.iter().map(|s| s.to_string()).collect(),
            intersection: None,
        }
    }

    fn simple_scenario() -> Scenario {
        Scenario {
            id: "s".into(),
            objects: vec![
                object("ego", ObjectClass::Ego, line(51, 1.0, 0.0)),
                object("v1", ObjectClass::Vehicle, line(51, 0.5, 0.0)),
            ],
            map: vec![lane("l0", &[])],
            time_span: (0.0, 5.0),
        }
    }

    #[test]
    fn valid_scenario_has_empty_report() {
        let s = simple_scenario();
        assert!(validate(&s).is_valid(), "{}", validate(&s));
    }

    #[test]
    fn multiple_ego_reported() {
        let mut s = simple_scenario();
        s.objects[1].class = ObjectClass::Ego;
        let report = validate(&s);
        assert!(report.to_string().contains("multiple EGO"));
        assert!(s.ego().is_err());
    }

    #[test]
    fn dangling_neighbor_reported() {
        let mut s = simple_scenario();
        s.map[0].neighbors.push("ghost".into());
        let report = validate(&s);
        assert!(report.to_string().contains("dangling neighbor"));
    }

    #[test]
    fn asymmetric_neighbor_reported() {
        let mut s = simple_scenario();
        s.map.push(lane("l1", &["l0"]));
        let report = validate(&s);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::AsymmetricNeighbor { .. }));
        s.map[0].neighbors.push("l1".into());
        assert!(validate(&s).is_valid());
    }

    #[test]
    fn ego_lookup() {
        let mut s = simple_scenario();
        for i in 0..5 {
            s.objects.push(object(&format!("v{}", i + 2), ObjectClass::Vehicle, line(51, 0.2, 0.0)));
        }
        assert_eq!(s.ego().unwrap().id, "ego");
        s.objects.remove(0);
        assert!(matches!(s.ego(), Err(Error::Structure(_))));
    }

    #[test]
    fn ego_must_cover_span() {
        let mut s = simple_scenario();
        s.objects[0].trajectory.points.truncate(20);
        assert!(validate(&s)
            .violations
            .contains(&Violation::EgoSpanIncomplete));
    }

    #[test]
    fn validate_is_idempotent() {
        let mut s = simple_scenario();
        s.objects[1].trajectory.points[3].t = 0.0;
        s.map[0].neighbors.push("x".into());
        assert_eq!(validate(&s), validate(&s));
    }

    #[test]
    fn axis_aligned_headings() {
        let east = line(10, 1.0, 0.0);
        let north = line(10, 0.0, 1.0);
        for t in [0.0, 0.25, 0.45, 0.9] {
            assert!(east.heading_at(t).unwrap().abs() < 1e-12);
            assert!((north.heading_at(t).unwrap() - FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn heading_out_of_range() {
        let east = line(10, 1.0, 0.0);
        assert!(matches!(east.heading_at(1.5), Err(Error::OutOfRange { .. })));
        assert!(east.heading_at(-0.1).is_err());
    }

    #[test]
    fn stored_heading_wins() {
        let mut tr = line(5, 1.0, 0.0);
        tr.points[2].heading = Some(1.0);
        assert_eq!(tr.heading_at(0.2).unwrap(), 1.0);
        assert_eq!(tr.heading_at(0.21).unwrap(), 1.0);
        assert_eq!(tr.heading_at(0.3).unwrap(), 0.0);
    }

    #[test]
    fn stationary_inherits_previous_heading() {
        let mut pts: Vec<TrajectoryPoint> = (0..5)
            .map(|i| TrajectoryPoint::new(i as f64, 0.0, i as f64))
            .collect();
        for i in 5..10 {
            pts.push(TrajectoryPoint::new(i as f64, 0.0, 4.0));
        }
        let tr = Trajectory::new(pts);
        assert!((tr.heading_at(7.5).unwrap() - FRAC_PI_2).abs() < 1e-12);
        let parked = Trajectory::new(
            (0..4)
                .map(|i| TrajectoryPoint::new(i as f64, 3.0, 3.0))
                .collect(),
        );
        assert_eq!(parked.heading_at(1.5).unwrap(), 0.0);
    }

    #[test]
    fn quarter_arc_midpoint_matches_tangent() {
        // Counter-clockwise quarter circle of radius 10 sampled at 20 points.
        let n = 20;
        let pts: Vec<TrajectoryPoint> = (0..n)
            .map(|i| {
                let phi = FRAC_PI_2 * i as f64 / (n - 1) as f64;
                TrajectoryPoint::new(i as f64 * 0.1, 10.0 * phi.cos(), 10.0 * phi.sin())
            })
            .collect();
        let tr = Trajectory::new(pts);
        let t_mid = 0.1 * (n - 1) as f64 / 2.0;
        // Tangent of a CCW circle at polar angle phi is phi + π/2.
        let analytic = FRAC_PI_2 / 2.0 + FRAC_PI_2;
        assert!((tr.heading_at(t_mid).unwrap() - analytic).abs() < 0.05);
        // Heading direction at the start is +y.
        assert!((tr.heading_at(0.0).unwrap() - FRAC_PI_2).abs() < 0.05);
        assert!(tr.heading_at(0.1 * (n - 1) as f64).unwrap() <= PI);
    }

    #[test]
    fn heading_invariant_under_time_shift() {
        // Dyadic times keep the shift exact in floating point.
        let mut tr = Trajectory::new(
            (0..12)
                .map(|i| TrajectoryPoint::new(i as f64 * 0.125, i as f64 * 0.7, (i * i) as f64 * -0.3))
                .collect(),
        );
        tr.points[4].heading = Some(0.3);
        let shifted = tr.shifted_in_time(16.0);
        for k in 0..=44 {
            let t = k as f64 / 32.0;
            assert_eq!(tr.heading_at(t).unwrap(), shifted.heading_at(t + 16.0).unwrap());
        }
    }

    #[test]
    fn interpolated_position() {
        let tr = line(3, 1.0, 2.0);
        let p = tr.position_at(0.15).unwrap();
        assert!((p.x - 1.5).abs() < 1e-12 && (p.y - 3.0).abs() < 1e-12);
        assert_eq!(tr.nearest_index(0.05), Some(0));
        assert_eq!(tr.nearest_index(0.06), Some(1));
        assert_eq!(tr.nearest_index(9.0), Some(2));
    }
}
