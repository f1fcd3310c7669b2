//! Deterministic synthetic scenarios with known maneuver labels and known
//! connectivity ground truth.
//!
//! The lane network is built in a local frame with the intersection at the
//! origin:
//!
//! * road A runs along x with a west arm (`x ∈ [-L, -3.5]`) and an east arm,
//! * road B runs along y with a south and a north arm,
//! * each arm has two parallel lanes that are neighbors of each other,
//! * the intersection square is split into four pieces sharing one
//!   intersection id,
//! * road C is a separate two-lane road north-west of the intersection with
//!   no topological link to A or B.
//!
//! The EGO always starts on the southern lane of the west arm heading east.
//! Background objects are either on the west arm (connected to every EGO
//! route) or on road C (never connected). Finally the whole scenario is moved
//! by a random rigid transform.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geometry::{rectangle, Vec2};
use crate::ingest::LabelVector;
use crate::rng::{self, Rng};
use crate::scenario::{MapElement, ObjectClass, Scenario, SceneObject, Size, Trajectory, TrajectoryPoint};
use crate::{Error, Result};

pub const LANE_WIDTH: f64 = 3.5;
pub const ARM_LENGTH: f64 = 100.0;
pub const DURATION: f64 = 5.0;
pub const SAMPLE_RATE_HZ: f64 = 10.0;
pub const INTERSECTION_ID: &str = "X0";
/// Lateral offset of road C's centerline from road A's.
pub const DISCONNECTED_OFFSET: f64 = 30.0;

const HALF: f64 = LANE_WIDTH;
const VEHICLE: Size = Size {
    length: 4.5,
    width: 1.9,
};
const PEDESTRIAN: Size = Size {
    length: 0.6,
    width: 0.6,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    LeftTurn,
    RightTurn,
    LaneChange,
}

impl Maneuver {
    pub const ALL: [Maneuver; 4] = [
        Maneuver::Straight,
        Maneuver::LeftTurn,
        Maneuver::RightTurn,
        Maneuver::LaneChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Maneuver::Straight => "straight",
            Maneuver::LeftTurn => "left_turn",
            Maneuver::RightTurn => "right_turn",
            Maneuver::LaneChange => "lane_change",
        }
    }

    /// The label vector the miner should produce for this maneuver.
    pub fn expected_labels(self) -> LabelVector {
        LabelVector {
            in_left: self == Maneuver::LeftTurn,
            in_right: self == Maneuver::RightTurn,
            in_straight: false,
            lane_change: self == Maneuver::LaneChange,
            straight: self == Maneuver::Straight,
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Maneuver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Maneuver::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown maneuver `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub maneuver: Maneuver,
    pub n_background_objects: usize,
    /// Fraction of background objects placed on lanes connected to the EGO's.
    pub connected_fraction: f64,
    /// EGO speed in m/s.
    pub speed: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.connected_fraction) {
            return Err(Error::Config(format!(
                "connected_fraction {} outside [0, 1]",
                self.connected_fraction
            )));
        }
        if !(self.speed > 0.0 && self.speed <= 15.0) {
            return Err(Error::Config(format!("speed {} outside (0, 15] m/s", self.speed)));
        }
        Ok(())
    }
}

/// A generated scenario with its connectivity ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub scenario: Scenario,
    pub maneuver: Maneuver,
    /// Background objects placed on lanes connected to the EGO's route.
    pub connected: Vec<String>,
    /// Background objects placed on the disconnected road.
    pub disconnected: Vec<String>,
}

fn lane(id: &str, polygon: Vec<Vec2>, neighbors: &[&str], intersection: Option<&str>) -> MapElement {
    MapElement {
        id: id.into(),
        polygon,
        neighbors: neighbors.iter().map(|s| s.to_string()).collect(),
        intersection: intersection.map(String::from),
    }
}

/// The lane network in the local frame.
pub fn lane_network() -> Vec<MapElement> {
    let l = ARM_LENGTH;
    let x = Some(INTERSECTION_ID);
    let c_lo = DISCONNECTED_OFFSET - HALF;
    let c_hi = DISCONNECTED_OFFSET + HALF;
    vec![
        lane("A-west-0", rectangle(-l, -HALF, -HALF, 0.0), &["A-west-1"], None),
        lane("A-west-1", rectangle(-l, 0.0, -HALF, HALF), &["A-west-0"], None),
        lane("A-east-0", rectangle(HALF, -HALF, l, 0.0), &["A-east-1"], None),
        lane("A-east-1", rectangle(HALF, 0.0, l, HALF), &["A-east-0"], None),
        lane("B-south-0", rectangle(-HALF, -l, 0.0, -HALF), &["B-south-1"], None),
        lane("B-south-1", rectangle(0.0, -l, HALF, -HALF), &["B-south-0"], None),
        lane("B-north-0", rectangle(0.0, HALF, HALF, l), &["B-north-1"], None),
        lane("B-north-1", rectangle(-HALF, HALF, 0.0, l), &["B-north-0"], None),
        lane("X-sw", rectangle(-HALF, -HALF, 0.0, 0.0), &[], x),
        lane("X-se", rectangle(0.0, -HALF, HALF, 0.0), &[], x),
        lane("X-ne", rectangle(0.0, 0.0, HALF, HALF), &[], x),
        lane("X-nw", rectangle(-HALF, 0.0, 0.0, HALF), &[], x),
        lane("C-0", rectangle(-l, c_lo, -10.0, DISCONNECTED_OFFSET), &["C-1"], None),
        lane("C-1", rectangle(-l, DISCONNECTED_OFFSET, -10.0, c_hi), &["C-0"], None),
    ]
}

fn sample_times() -> Vec<f64> {
    let n = (DURATION * SAMPLE_RATE_HZ).round() as usize;
    (0..=n).map(|i| i as f64 / SAMPLE_RATE_HZ).collect()
}

/// Straight approach along `y = y0`, a quarter arc, straight exit.
/// `sweep` is `+π/2` for a left turn and `-π/2` for a right turn.
fn turn_pose(s: f64, approach: f64, y0: f64, x_arc: f64, radius: f64, sweep: f64) -> (Vec2, f64) {
    let arc_len = radius * sweep.abs();
    let side = sweep.signum();
    if s <= approach {
        return (Vec2::new(x_arc - (approach - s), y0), 0.0);
    }
    let center = Vec2::new(x_arc, y0 + side * radius);
    if s <= approach + arc_len {
        let phi = (s - approach) / radius;
        let start = -side * FRAC_PI_2;
        let a = start + side * phi;
        let p = center + Vec2::new(a.cos(), a.sin()) * radius;
        return (p, side * phi);
    }
    let end = center + Vec2::new(radius, 0.0);
    let heading = side * FRAC_PI_2;
    (end + Vec2::new(0.0, side) * (s - approach - arc_len), heading)
}

fn ego_trajectory(spec: &SynthSpec, rng: &mut Rng) -> Trajectory {
    let v = spec.speed;
    let y0 = -0.5 * HALF;
    let times = sample_times();
    let points = match spec.maneuver {
        Maneuver::Straight | Maneuver::LaneChange => {
            // Stays on the west arm: ends at least 5 m short of the intersection.
            let latest = -HALF - 5.0 - v * DURATION;
            let x0 = rng.random_range((latest - 25.0)..=latest);
            let lane_change = spec.maneuver == Maneuver::LaneChange;
            let (t_mid, t_len) = (rng.random_range(2.0..=3.0), rng.random_range(2.0..=3.0));
            times
                .iter()
                .map(|&t| {
                    let x = x0 + v * t;
                    if !lane_change {
                        return TrajectoryPoint::with_heading(t, x, y0, 0.0);
                    }
                    // Cosine lateral profile over [t_mid - t_len/2, t_mid + t_len/2].
                    let u = ((t - t_mid) / t_len + 0.5).clamp(0.0, 1.0);
                    let y = y0 + HALF * 0.5 * (1.0 - (PI * u).cos());
                    let dy = if u > 0.0 && u < 1.0 {
                        HALF * 0.5 * PI * (PI * u).sin() / t_len
                    } else {
                        0.0
                    };
                    TrajectoryPoint::with_heading(t, x, y, dy.atan2(v))
                })
                .collect()
        }
        Maneuver::LeftTurn | Maneuver::RightTurn => {
            let (radius, sweep) = if spec.maneuver == Maneuver::LeftTurn {
                (HALF * 1.5, FRAC_PI_2)
            } else {
                (HALF * 0.5, -FRAC_PI_2)
            };
            let arc_len = radius * FRAC_PI_2;
            let t_turn = rng.random_range(2.0..=3.0);
            let approach = (v * t_turn - 0.5 * arc_len).max(1.0);
            times
                .iter()
                .map(|&t| {
                    let (p, h) = turn_pose(v * t, approach, y0, -HALF, radius, sweep);
                    TrajectoryPoint::with_heading(t, p.x, p.y, h)
                })
                .collect()
        }
    };
    Trajectory::new(points)
}

/// A background object moving along a lane centerline at constant speed.
fn background(id: String, class: ObjectClass, start: Vec2, heading: f64, speed: f64, window: (usize, usize)) -> SceneObject {
    let dir = Vec2::new(heading.cos(), heading.sin());
    let times = sample_times();
    let points = times[window.0..=window.1]
        .iter()
        .map(|&t| {
            let p = start + dir * (speed * t);
            TrajectoryPoint::with_heading(t, p.x, p.y, heading)
        })
        .collect();
    SceneObject {
        id,
        trajectory: Trajectory::new(points),
        size: if class == ObjectClass::Pedestrian { PEDESTRIAN } else { VEHICLE },
        class,
    }
}

fn place_background(i: usize, connected: bool, ego_x0: f64, rng: &mut Rng) -> SceneObject {
    let pedestrian = rng.random_bool(0.15);
    let class = if pedestrian { ObjectClass::Pedestrian } else { ObjectClass::Vehicle };
    let speed = if pedestrian {
        rng.random_range(0.5..=1.5)
    } else {
        rng.random_range(0.0..=12.0)
    };
    let last = (DURATION * SAMPLE_RATE_HZ).round() as usize;
    let window = if rng.random_bool(0.25) {
        let a = rng.random_range(0..last / 2);
        (a, rng.random_range(a + 1..=last))
    } else {
        (0, last)
    };
    let travel = speed * DURATION;
    let upper_lane = rng.random_bool(0.5);
    let eastbound = !upper_lane;
    let heading = if eastbound { 0.0 } else { PI };
    let (y, x_range) = if connected {
        let y = if upper_lane { 0.5 * HALF } else { -0.5 * HALF };
        // Keep the whole path on the west arm, away from the EGO's start.
        let (lo, hi) = (-ARM_LENGTH + 2.0, -HALF - 2.0);
        (y, (lo, hi))
    } else {
        let y = DISCONNECTED_OFFSET + if upper_lane { 0.5 * HALF } else { -0.5 * HALF };
        (y, (-ARM_LENGTH + 2.0, -12.0))
    };
    let (lo, hi) = if eastbound {
        (x_range.0, x_range.1 - travel)
    } else {
        (x_range.0 + travel, x_range.1)
    };
    let mut x = rng.random_range(lo..=hi.max(lo));
    if connected && eastbound && (x - ego_x0).abs() < 8.0 {
        // Avoid starting on top of the EGO.
        x = if x - 10.0 >= lo { x - 10.0 } else { (x + 10.0).min(hi.max(lo)) };
    }
    let id = format!("{}-{i}", if connected { "bg-con" } else { "bg-dis" });
    background(id, class, Vec2::new(x, y), heading, speed, window)
}

/// Generates the scenario described by `spec` along with its ground truth.
pub fn generate_with_truth(spec: &SynthSpec) -> Result<SynthScenario> {
    spec.validate()?;
    let mut rng = rng::derive(spec.seed, &[b"synth", spec.maneuver.as_str().as_bytes()]);
    let ego_traj = ego_trajectory(spec, &mut rng);
    let ego_x0 = ego_traj.points[0].x;
    let n_connected = (spec.connected_fraction * spec.n_background_objects as f64).round() as usize;
    let mut objects = vec![SceneObject {
        id: "ego".into(),
        trajectory: ego_traj,
        size: VEHICLE,
        class: ObjectClass::Ego,
    }];
    let (mut connected, mut disconnected) = (Vec::new(), Vec::new());
    for i in 0..spec.n_background_objects {
        let is_connected = i < n_connected;
        let obj = place_background(i, is_connected, ego_x0, &mut rng);
        if is_connected {
            connected.push(obj.id.clone());
        } else {
            disconnected.push(obj.id.clone());
        }
        objects.push(obj);
    }
    let local = Scenario {
        id: format!("synth-{}-{}", spec.maneuver, spec.seed),
        objects,
        map: lane_network(),
        time_span: (0.0, DURATION),
    };
    let angle = rng.random_range(-PI..PI);
    let offset = Vec2::new(rng.random_range(-500.0..=500.0), rng.random_range(-500.0..=500.0));
    Ok(SynthScenario {
        scenario: local.transformed(angle, offset),
        maneuver: spec.maneuver,
        connected,
        disconnected,
    })
}

pub fn generate(spec: &SynthSpec) -> Result<Scenario> {
    generate_with_truth(spec).map(|s| s.scenario)
}

/// Settings for a mixed-maneuver suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub count: usize,
    pub seed: u64,
    pub max_background: usize,
    pub speed_range: (f64, f64),
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 0,
            max_background: 8,
            speed_range: (6.0, 12.0),
        }
    }
}

/// `count` scenarios cycling through the four maneuvers, with random speed,
/// background count and connected fraction.
pub fn suite(spec: &SuiteSpec) -> Result<Vec<SynthScenario>> {
    let (lo, hi) = spec.speed_range;
    if !(lo > 0.0 && lo <= hi && hi <= 15.0) {
        return Err(Error::Config(format!("speed range {lo}..{hi} outside (0, 15]")));
    }
    (0..spec.count)
        .map(|i| {
            let mut r = rng::derive(spec.seed, &[b"suite", &(i as u64).to_le_bytes()]);
            let s = SynthSpec {
                maneuver: Maneuver::ALL[i % 4],
                n_background_objects: r.random_range(0..=spec.max_background),
                connected_fraction: r.random_range(0.0..=1.0),
                speed: r.random_range(lo..=hi),
                seed: r.random(),
            };
            let mut out = generate_with_truth(&s)?;
            out.scenario.id = format!("s{i:05}-{}", s.maneuver);
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::augment_con;
    use crate::ingest::{mine_labels, LabelConfig};

    fn spec(maneuver: Maneuver, seed: u64) -> SynthSpec {
        SynthSpec {
            maneuver,
            n_background_objects: 5,
            connected_fraction: 0.6,
            speed: 9.0,
            seed,
        }
    }

    #[test]
    fn generated_scenarios_validate_and_label_correctly() {
        for seed in 0..50 {
            for m in Maneuver::ALL {
                let s = generate(&spec(m, seed)).unwrap();
                assert!(s.validate().is_valid(), "{m} {seed}: {}", s.validate());
                let mined = mine_labels(&s, &LabelConfig::default()).unwrap();
                assert_eq!(mined.labels, m.expected_labels(), "{m} seed {seed}: Δψ {}", mined.heading_change_deg);
            }
        }
    }

    #[test]
    fn left_turn_heading_change() {
        let s = generate(&SynthSpec {
            n_background_objects: 0,
            ..spec(Maneuver::LeftTurn, 3)
        })
        .unwrap();
        let mined = mine_labels(&s, &LabelConfig::default()).unwrap();
        assert!((mined.heading_change_deg - 90.0).abs() < 1e-6);
    }

    #[test]
    fn disconnected_background_is_removed() {
        for m in Maneuver::ALL {
            let truth = generate_with_truth(&SynthSpec {
                connected_fraction: 0.0,
                ..spec(m, 11)
            })
            .unwrap();
            let con = augment_con(&truth.scenario).unwrap();
            assert_eq!(con.objects.len(), 1, "{m}");
        }
    }

    #[test]
    fn con_keeps_exactly_connected_background() {
        for seed in 0..20 {
            for m in Maneuver::ALL {
                let truth = generate_with_truth(&spec(m, seed)).unwrap();
                let con = augment_con(&truth.scenario).unwrap();
                let mut kept: Vec<String> = con.objects.iter().skip(1).map(|o| o.id.clone()).collect();
                kept.sort();
                let mut expected = truth.connected.clone();
                expected.sort();
                assert_eq!(kept, expected, "{m} seed {seed}");
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&spec(Maneuver::RightTurn, 4)).unwrap();
        let b = generate(&spec(Maneuver::RightTurn, 4)).unwrap();
        let c = generate(&spec(Maneuver::RightTurn, 5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn suite_cycles_maneuvers() {
        let s = suite(&SuiteSpec {
            count: 8,
            ..SuiteSpec::default()
        })
        .unwrap();
        let ms: Vec<Maneuver> = s.iter().map(|x| x.maneuver).collect();
        assert_eq!(&ms[..4], &Maneuver::ALL);
        assert!(s.iter().all(|x| x.scenario.objects.len() <= 9));
    }

    #[test]
    fn invalid_spec() {
        assert!(generate(&SynthSpec {
            connected_fraction: 1.5,
            ..spec(Maneuver::Straight, 0)
        })
        .is_err());
    }
}
