//! Expert-guided scenario augmentations.
//!
//! Both augmentations operate on the scenario itself, before rendering:
//!
//! * connectivity-based ([`augment_con`]): keep the objects and lane pieces
//!   reachable from the EGO through the lane topology,
//! * sensor-based ([`augment_vr`]): keep, per timestamp, only the objects
//!   inside a visible region (aperture and range) around the EGO,
//! * combined ([`augment_combined`]): the intersection of both results.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geometry::{point_in_polygon, wrap_degrees, Vec2};
use crate::rng::{self, Rng};
use crate::scenario::{MapElement, Scenario, SceneObject, Trajectory, TrajectoryPoint};
use crate::{Error, Result};

/// Point membership in a lane piece; edges count as inside.
pub fn inpolygon_point(p: Vec2, element: &MapElement) -> bool {
    point_in_polygon(p, &element.polygon)
}

/// True iff any trajectory point of any of `objects` lies inside `element`.
pub fn inpolygon<'a>(objects: impl IntoIterator<Item = &'a SceneObject>, element: &MapElement) -> bool {
    objects.into_iter().any(|o| {
        o.trajectory
            .points
            .iter()
            .any(|p| inpolygon_point(p.position(), element))
    })
}

/// True iff `candidate` neighbors any member of `elements` or shares a
/// (non-null) intersection with one.
pub fn connected<'a>(elements: impl IntoIterator<Item = &'a MapElement>, candidate: &MapElement) -> bool {
    elements.into_iter().any(|m| {
        m.neighbors.contains(&candidate.id)
            || matches!((&m.intersection, &candidate.intersection), (Some(a), Some(b)) if a == b)
    })
}

struct Bounds {
    min: Vec2,
    max: Vec2,
}

impl Bounds {
    fn of(points: impl IntoIterator<Item = Vec2>) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
            max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
        }
        Self { min, max }
    }

    fn contains(&self, p: Vec2) -> bool {
        let e = crate::geometry::BOUNDARY_EPS;
        p.x >= self.min.x - e && p.x <= self.max.x + e && p.y >= self.min.y - e && p.y <= self.max.y + e
    }
}

/// `passes[o][m]`: object `o` has a trajectory point inside element `m`.
pub fn pass_matrix(scenario: &Scenario) -> Vec<Vec<bool>> {
    let bounds: Vec<Bounds> = scenario
        .map
        .iter()
        .map(|m| Bounds::of(m.polygon.iter().copied()))
        .collect();
    scenario
        .objects
        .iter()
        .map(|o| {
            scenario
                .map
                .iter()
                .zip(&bounds)
                .map(|(m, b)| {
                    o.trajectory.points.iter().any(|p| {
                        let q = p.position();
                        b.contains(q) && inpolygon_point(q, m)
                    })
                })
                .collect()
        })
        .collect()
}

/// Outcome of the connectivity fixpoint, as indices into the input scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityClosure {
    pub objects: BTreeSet<usize>,
    pub elements: BTreeSet<usize>,
    /// Loop iterations, including the final one that detects the fixpoint.
    pub iterations: usize,
    /// `(|O_temp|, |M_temp|)` after every iteration.
    pub sizes: Vec<(usize, usize)>,
}

/// Runs the connectivity fixpoint from the EGO.
pub fn connectivity_closure(scenario: &Scenario) -> Result<ConnectivityClosure> {
    let ego = scenario.ego_index()?;
    let passes = pass_matrix(scenario);
    let index: BTreeMap<&str, usize> = scenario
        .map
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.as_str(), i))
        .collect();
    let neighbor_idx: Vec<Vec<usize>> = scenario
        .map
        .iter()
        .map(|m| m.neighbors.iter().filter_map(|n| index.get(n.as_str()).copied()).collect())
        .collect();

    let mut objects: BTreeSet<usize> = [ego].into();
    let mut elements: BTreeSet<usize> = BTreeSet::new();
    let mut iterations = 0;
    let mut sizes = Vec::new();
    loop {
        iterations += 1;
        let passed: BTreeSet<usize> = (0..scenario.map.len())
            .filter(|&m| objects.iter().any(|&o| passes[o][m]))
            .collect();
        let intersections: HashSet<&str> = passed
            .iter()
            .filter_map(|&m| scenario.map[m].intersection.as_deref())
            .collect();
        let mut next_elements = passed.clone();
        for &m in &passed {
            next_elements.extend(neighbor_idx[m].iter().copied());
        }
        for (j, el) in scenario.map.iter().enumerate() {
            if el.intersection.as_deref().is_some_and(|i| intersections.contains(i)) {
                next_elements.insert(j);
            }
        }
        let mut next_objects: BTreeSet<usize> = (0..scenario.objects.len())
            .filter(|&o| next_elements.iter().any(|&m| passes[o][m]))
            .collect();
        next_objects.insert(ego);

        let changed = next_objects != objects || next_elements != elements;
        objects = next_objects;
        elements = next_elements;
        sizes.push((objects.len(), elements.len()));
        if !changed {
            break;
        }
    }
    Ok(ConnectivityClosure {
        objects,
        elements,
        iterations,
        sizes,
    })
}

/// Builds the sub-scenario with the given object and element indices.
/// Neighbor references to dropped elements are pruned so the result stays
/// valid.
fn restrict(scenario: &Scenario, objects: &BTreeSet<usize>, elements: &BTreeSet<usize>) -> Scenario {
    let kept_ids: HashSet<&str> = elements.iter().map(|&m| scenario.map[m].id.as_str()).collect();
    Scenario {
        id: scenario.id.clone(),
        objects: objects.iter().map(|&o| scenario.objects[o].clone()).collect(),
        map: elements
            .iter()
            .map(|&m| {
                let el = &scenario.map[m];
                MapElement {
                    neighbors: el
                        .neighbors
                        .iter()
                        .filter(|n| kept_ids.contains(n.as_str()))
                        .cloned()
                        .collect(),
                    ..el.clone()
                }
            })
            .collect(),
        time_span: scenario.time_span,
    }
}

/// Connectivity-based augmentation. Objects keep their whole trajectories.
pub fn augment_con(scenario: &Scenario) -> Result<Scenario> {
    let closure = connectivity_closure(scenario)?;
    Ok(restrict(scenario, &closure.objects, &closure.elements))
}

/// Sampling ranges for the visible region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrRanges {
    /// Degrees.
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Meters.
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for VrRanges {
    fn default() -> Self {
        Self {
            alpha_min: 60.0,
            alpha_max: 360.0,
            d_min: 20.0,
            d_max: 100.0,
        }
    }
}

impl VrRanges {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_min > 0.0
            && self.alpha_min <= self.alpha_max
            && self.alpha_max <= 360.0
            && self.d_min > 0.0
            && self.d_min <= self.d_max
            && self.d_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid visible-region ranges {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> VrParams {
        let alpha = rng.random_range(self.alpha_min..=self.alpha_max);
        let distance = rng.random_range(self.d_min..=self.d_max);
        VrParams { alpha, distance }
    }
}

/// A sampled visible region: half-aperture `alpha` (degrees) around the
/// EGO's line of sight and range `distance` (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrParams {
    pub alpha: f64,
    pub distance: f64,
}

impl VrParams {
    pub fn new(alpha: f64, distance: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 360.0) || !(distance > 0.0) {
            return Err(Error::Config(format!(
                "visible region needs 0 < alpha <= 360 and distance > 0, got ({alpha}, {distance})"
            )));
        }
        Ok(Self { alpha, distance })
    }

    /// Aperture that never cuts anything.
    pub fn unrestricted() -> Self {
        Self {
            alpha: 360.0,
            distance: f64::INFINITY,
        }
    }
}

/// Visible-region membership of a position given the EGO pose.
/// Boundaries are excluded; `alpha >= 180` disables the angular cut.
pub fn in_vr(object: Vec2, ego: Vec2, ego_heading: f64, params: &VrParams) -> bool {
    let d = object - ego;
    if !(d.norm() < params.distance) {
        return false;
    }
    if params.alpha >= 180.0 {
        return true;
    }
    let bearing = d.y.atan2(d.x).to_degrees();
    let alpha_o = wrap_degrees(bearing - ego_heading.to_degrees());
    -params.alpha < alpha_o && alpha_o < params.alpha
}

/// Per-object, per-sample visible-region membership. The EGO row is all
/// `true`.
pub fn vr_mask(scenario: &Scenario, params: &VrParams) -> Result<Vec<Vec<bool>>> {
    let ego_idx = scenario.ego_index()?;
    let ego = &scenario.objects[ego_idx].trajectory;
    scenario
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if i == ego_idx {
                return Ok(vec![true; o.trajectory.len()]);
            }
            o.trajectory
                .points
                .iter()
                .map(|p| {
                    let t = p.t.clamp(
                        ego.start_time().unwrap_or(p.t),
                        ego.end_time().unwrap_or(p.t),
                    );
                    let pose = ego.position_at(t).expect("EGO trajectory non-empty");
                    Ok(in_vr(p.position(), pose, ego.heading_at(t)?, params))
                })
                .collect()
        })
        .collect()
}

/// Keeps `mask`-selected samples. When samples are dropped, the kept ones
/// carry the heading of the original trajectory so a partial track keeps
/// its pose.
fn filter_trajectory(traj: &Trajectory, mask: &[bool]) -> Result<Trajectory> {
    if mask.iter().all(|&k| k) {
        return Ok(traj.clone());
    }
    traj.points
        .iter()
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|(p, _)| {
            Ok(TrajectoryPoint {
                heading: Some(match p.heading {
                    Some(h) => h,
                    None => traj.heading_at(p.t)?,
                }),
                ..*p
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Trajectory::new)
}

/// Sensor-based augmentation: per-timestamp visible-region filtering of all
/// non-EGO objects. Objects left without samples are dropped; the map is
/// returned unchanged.
pub fn augment_vr(scenario: &Scenario, params: &VrParams) -> Result<Scenario> {
    let mask = vr_mask(scenario, params)?;
    let mut objects = Vec::with_capacity(scenario.objects.len());
    for (o, m) in scenario.objects.iter().zip(&mask) {
        if !m.iter().any(|&k| k) {
            continue;
        }
        objects.push(SceneObject {
            trajectory: filter_trajectory(&o.trajectory, m)?,
            ..o.clone()
        });
    }
    Ok(Scenario {
        objects,
        ..scenario.clone()
    })
}

/// Combined augmentation: objects and samples kept by both augmentations,
/// with the connectivity-restricted map.
pub fn augment_combined(scenario: &Scenario, params: &VrParams) -> Result<Scenario> {
    let con = augment_con(scenario)?;
    let vr = augment_vr(scenario, params)?;
    let con_objects: BTreeMap<&str, &SceneObject> =
        con.objects.iter().map(|o| (o.id.as_str(), o)).collect();
    let mut objects = Vec::new();
    for o in &vr.objects {
        let Some(c) = con_objects.get(o.id.as_str()) else {
            continue;
        };
        let con_times: Vec<f64> = c.trajectory.points.iter().map(|p| p.t).collect();
        let points: Vec<TrajectoryPoint> = o
            .trajectory
            .points
            .iter()
            .filter(|p| con_times.binary_search_by(|t| t.total_cmp(&p.t)).is_ok())
            .copied()
            .collect();
        if !points.is_empty() {
            objects.push(SceneObject {
                trajectory: Trajectory::new(points),
                ..o.clone()
            });
        }
    }
    let vr_map: HashSet<&str> = vr.map.iter().map(|m| m.id.as_str()).collect();
    let map = con
        .map
        .iter()
        .filter(|m| vr_map.contains(m.id.as_str()))
        .cloned()
        .collect();
    Ok(Scenario {
        id: scenario.id.clone(),
        objects,
        map,
        time_span: scenario.time_span,
    })
}

/// Per-view probabilities of applying each expert augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewProbabilities {
    pub p_con: f64,
    pub p_vr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub view_a: ViewProbabilities,
    pub view_b: ViewProbabilities,
    pub vr_ranges: VrRanges,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self::swapped(0.7, 0.3)
    }
}

impl AugmentationPolicy {
    /// View `a` uses `(p_con, p_vr)`, view `b` the swapped pair.
    pub fn swapped(p_con: f64, p_vr: f64) -> Self {
        Self {
            view_a: ViewProbabilities { p_con, p_vr },
            view_b: ViewProbabilities {
                p_con: p_vr,
                p_vr: p_con,
            },
            vr_ranges: VrRanges::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.view_a.p_con, self.view_a.p_vr, self.view_b.p_con, self.view_b.p_vr] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        self.vr_ranges.validate()
    }
}

/// The expert augmentation chosen for one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpertAugmentation {
    Identity,
    Con,
    Vr(VrParams),
    Combined(VrParams),
}

impl ExpertAugmentation {
    pub fn draw(probs: &ViewProbabilities, ranges: &VrRanges, rng: &mut Rng) -> Self {
        let apply_con = rng.random_bool(probs.p_con);
        let apply_vr = rng.random_bool(probs.p_vr);
        // Always sampled so the stream position does not depend on the draws.
        let params = ranges.sample(rng);
        match (apply_con, apply_vr) {
            (false, false) => ExpertAugmentation::Identity,
            (true, false) => ExpertAugmentation::Con,
            (false, true) => ExpertAugmentation::Vr(params),
            (true, true) => ExpertAugmentation::Combined(params),
        }
    }

    pub fn apply(&self, scenario: &Scenario) -> Result<Scenario> {
        match self {
            ExpertAugmentation::Identity => Ok(scenario.clone()),
            ExpertAugmentation::Con => augment_con(scenario),
            ExpertAugmentation::Vr(p) => augment_vr(scenario, p),
            ExpertAugmentation::Combined(p) => augment_combined(scenario, p),
        }
    }
}

/// Draws and applies the expert augmentations for both views.
pub fn sample_views(scenario: &Scenario, policy: &AugmentationPolicy, rng: &mut Rng) -> Result<(Scenario, Scenario)> {
    let a = ExpertAugmentation::draw(&policy.view_a, &policy.vr_ranges, rng);
    let b = ExpertAugmentation::draw(&policy.view_b, &policy.vr_ranges, rng);
    Ok((a.apply(scenario)?, b.apply(scenario)?))
}

/// [`sample_views`] with the generator derived from the policy seed and the
/// scenario id.
pub fn sample_views_seeded(scenario: &Scenario, policy: &AugmentationPolicy) -> Result<(Scenario, Scenario)> {
    let mut rng = rng::derive(policy.seed, &[b"views", scenario.id.as_bytes()]);
    sample_views(scenario, policy, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rectangle;
    use crate::scenario::{ObjectClass, Size};

    fn obj(id: &str, class: ObjectClass, pts: &[(f64, f64)]) -> SceneObject {
        SceneObject {
            id: id.into(),
            trajectory: Trajectory::new(
                pts.iter()
                    .enumerate()
                    .map(|(i, &(x, y))| TrajectoryPoint::new(i as f64, x, y))
                    .collect(),
            ),
            size: Size {
                length: 4.0,
                width: 2.0,
            },
            class,
        }
    }

    fn lane(id: &str, x0: f64, neighbors: &[&str], intersection: Option<&str>) -> MapElement {
        MapElement {
            id: id.into(),
            polygon: rectangle(x0, 0.0, x0 + 10.0, 4.0),
            neighbors: neighbors.iter().map(|s| s.to_string()).collect(),
            intersection: intersection.map(String::from),
        }
    }

    #[test]
    fn inpolygon_cases() {
        let l = lane("l", 0.0, &[], None);
        let centroid = crate::geometry::polygon_centroid(&l.polygon);
        let ego = obj("e", ObjectClass::Ego, &[(centroid.x, centroid.y)]);
        assert!(inpolygon([&ego], &l));
        let far = obj("v", ObjectClass::Vehicle, &[(50.0, 50.0), (60.0, 60.0)]);
        assert!(!inpolygon([&far], &l));
        let edge = obj("v", ObjectClass::Vehicle, &[(50.0, 50.0), (10.0, 2.0)]);
        assert!(inpolygon([&far, &edge], &l));
    }

    #[test]
    fn connected_cases() {
        let a = lane("a", 0.0, &["b"], None);
        let b = lane("b", 10.0, &["a"], None);
        let c = lane("c", 20.0, &[], Some("x"));
        let d = lane("d", 30.0, &[], Some("x"));
        let e = lane("e", 40.0, &[], None);
        assert!(connected([&a], &b));
        assert!(connected([&c], &d));
        assert!(!connected([&a, &b], &e));
        assert!(!connected([&a], &c));
    }

    #[test]
    fn con_drops_disconnected_traffic() {
        let s = Scenario {
            id: "s".into(),
            objects: vec![
                obj("ego", ObjectClass::Ego, &[(1.0, 2.0), (5.0, 2.0)]),
                obj("v", ObjectClass::Vehicle, &[(41.0, 2.0), (45.0, 2.0)]),
            ],
            map: vec![
                lane("a", 0.0, &["b"], None),
                lane("b", 10.0, &["a"], None),
                lane("c", 20.0, &[], None),
                lane("d", 40.0, &[], None),
            ],
            time_span: (0.0, 1.0),
        };
        let out = augment_con(&s).unwrap();
        let ids: Vec<&str> = out.objects.iter().map(|o| o.id.as_str()).collect();
        let lanes: Vec<&str> = out.map.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["ego"]);
        assert_eq!(lanes, ["a", "b"]);
        assert!(out.validate().is_valid());
    }

    #[test]
    fn con_keeps_ego_without_lanes() {
        let s = Scenario {
            id: "s".into(),
            objects: vec![obj("ego", ObjectClass::Ego, &[(-50.0, 2.0), (-49.0, 2.0)])],
            map: vec![lane("a", 0.0, &[], None)],
            time_span: (0.0, 1.0),
        };
        let out = augment_con(&s).unwrap();
        assert_eq!(out.objects.len(), 1);
        assert!(out.map.is_empty());
    }

    #[test]
    fn one_hop_semantics() {
        // a-b-c chain of neighbors; vehicle only on c. Lane-lane hops are
        // only taken from lanes somebody passes.
        let s = Scenario {
            id: "s".into(),
            objects: vec![
                obj("ego", ObjectClass::Ego, &[(1.0, 2.0), (5.0, 2.0)]),
                obj("v", ObjectClass::Vehicle, &[(21.0, 2.0), (25.0, 2.0)]),
            ],
            map: vec![
                lane("a", 0.0, &["b"], None),
                lane("b", 10.0, &["a", "c"], None),
                lane("c", 20.0, &["b"], None),
            ],
            time_span: (0.0, 1.0),
        };
        let closure = connectivity_closure(&s).unwrap();
        assert_eq!(closure.objects, [0].into());
        assert_eq!(closure.elements, [0, 1].into());
    }

    #[test]
    fn in_vr_cases() {
        let p = VrParams::new(60.0, 25.0).unwrap();
        assert!(in_vr(Vec2::new(10.0, 0.0), Vec2::default(), 0.0, &p));
        let p = VrParams::new(179.0, 25.0).unwrap();
        assert!(!in_vr(Vec2::new(-10.0, 0.0), Vec2::default(), 0.0, &p));
        // Exact thresholds are excluded.
        let p = VrParams::new(45.0, 10.0).unwrap();
        assert!(!in_vr(Vec2::new(10.0, 0.0), Vec2::default(), 0.0, &p));
        assert!(in_vr(Vec2::new(3.0, 2.9), Vec2::default(), 0.0, &p));
        // Heading rotates the cone.
        let north = std::f64::consts::FRAC_PI_2;
        assert!(in_vr(Vec2::new(0.0, 5.0), Vec2::default(), north, &p));
        assert!(!in_vr(Vec2::new(5.0, 0.0), Vec2::default(), north, &p));
    }

    #[test]
    fn vr_params_validation() {
        assert!(VrParams::new(0.0, 1.0).is_err());
        assert!(VrParams::new(361.0, 1.0).is_err());
        assert!(VrParams::new(90.0, 0.0).is_err());
        assert!(VrRanges::default().validate().is_ok());
        let bad = VrRanges {
            alpha_min: 100.0,
            alpha_max: 60.0,
            ..VrRanges::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn policy_defaults_are_swapped() {
        let p = AugmentationPolicy::default();
        assert_eq!(p.view_a.p_con, 0.7);
        assert_eq!(p.view_a.p_vr, 0.3);
        assert_eq!(p.view_b.p_con, 0.3);
        assert_eq!(p.view_b.p_vr, 0.7);
        assert!(p.validate().is_ok());
        let mut bad = p;
        bad.view_b.p_vr = 1.5;
        assert!(bad.validate().is_err());
    }
}
