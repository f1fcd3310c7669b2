//! Representation-space stability: how much scenario features differ
//! between a point and its nearest neighbors in embedding space.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::{rasterize_map, GridConfig};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Number of evenly spaced samples used for the displacement feature.
pub const TRAJ_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// m/s
    pub velocity: f64,
    /// meters
    pub traj_xy: f64,
    /// mean absolute pixel difference
    pub map_image: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k: usize,
    pub deltas: Deltas,
}

/// Per-scenario features compared by [`stability`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFeatures {
    pub mean_speed: f64,
    pub mean_displacement: f64,
    pub map_image: Vec<f32>,
}

/// Mean EGO speed over consecutive samples.
pub fn mean_speed(scenario: &Scenario) -> Result<f64> {
    let pts = &scenario.ego()?.trajectory.points;
    let speeds: Vec<f64> = pts
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| (w[1].position() - w[0].position()).norm() / (w[1].t - w[0].t))
        .collect();
    Ok(if speeds.is_empty() {
        0.0
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    })
}

/// Mean step length of the EGO trajectory resampled at [`TRAJ_SAMPLES`]
/// evenly spaced times over the scenario span.
pub fn mean_displacement(scenario: &Scenario) -> Result<f64> {
    let traj = &scenario.ego()?.trajectory;
    let (t0, t1) = scenario.time_span;
    let pts: Vec<_> = (0..TRAJ_SAMPLES)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / (TRAJ_SAMPLES - 1) as f64;
            traj.position_at(t).ok_or_else(|| Error::Structure("EGO trajectory is empty".into()))
        })
        .collect::<Result<_>>()?;
    Ok(pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum::<f64>() / (TRAJ_SAMPLES - 1) as f64)
}

pub fn scenario_features(scenario: &Scenario, grid: &GridConfig) -> Result<ScenarioFeatures> {
    Ok(ScenarioFeatures {
        mean_speed: mean_speed(scenario)?,
        mean_displacement: mean_displacement(scenario)?,
        map_image: rasterize_map(scenario, grid)?,
    })
}

fn image_difference(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from((x - y).abs())).sum::<f64>() / a.len() as f64
}

/// The `k` nearest rows of every row by Euclidean distance, self excluded,
/// ties broken by row index.
pub fn nearest_neighbors(h: ArrayView2<f64>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = h.nrows();
    if k == 0 || k >= n {
        return Err(Error::Argument(format!("k = {k} needs 1 ≤ k < {n} rows")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// Δ for every `k` in `ks` from precomputed features.
pub fn stability_from_features(h: ArrayView2<f64>, features: &[ScenarioFeatures], ks: &[usize]) -> Result<Vec<StabilityReport>> {
    if h.nrows() != features.len() {
        return Err(Error::Argument(format!("{} embeddings for {} scenarios", h.nrows(), features.len())));
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let neighbors = nearest_neighbors(h, kmax.max(1))?;
    if ks.contains(&0) {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    // Image differences for every (point, neighbor) pair up to kmax.
    let image: Vec<Vec<f64>> = neighbors
        .par_iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.iter()
                .map(|&j| image_difference(&features[i].map_image, &features[j].map_image))
                .collect()
        })
        .collect();
    let n = features.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let mut d = Deltas {
                velocity: 0.0,
                traj_xy: 0.0,
                map_image: 0.0,
            };
            for (i, nb) in neighbors.iter().enumerate() {
                let f = &features[i];
                let mean = |g: &dyn Fn(usize) -> f64| nb[..k].iter().map(|&j| g(j)).sum::<f64>() / k as f64;
                d.velocity += mean(&|j| (f.mean_speed - features[j].mean_speed).abs());
                d.traj_xy += mean(&|j| (f.mean_displacement - features[j].mean_displacement).abs());
                d.map_image += image[i][..k].iter().sum::<f64>() / k as f64;
            }
            StabilityReport {
                k,
                deltas: Deltas {
                    velocity: d.velocity / n,
                    traj_xy: d.traj_xy / n,
                    map_image: d.map_image / n,
                },
            }
        })
        .collect())
}

/// Δ_velocity, Δ_traj_xy and Δ_map_image for every `k` in `ks`.
pub fn stability(h: ArrayView2<f64>, scenarios: &[Scenario], ks: &[usize], grid: &GridConfig) -> Result<Vec<StabilityReport>> {
    let features: Vec<ScenarioFeatures> = scenarios
        .par_iter()
        .map(|s| scenario_features(s, grid))
        .collect::<Result<_>>()?;
    stability_from_features(h, &features, ks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn feat(speed: f64) -> ScenarioFeatures {
        ScenarioFeatures {
            mean_speed: speed,
            mean_displacement: 0.5 * speed,
            map_image: vec![0.0; 4],
        }
    }

    #[test]
    fn one_dimensional_nearest_gap() {
        // Embedding equals the feature: each point's nearest neighbor is the
        // closest value, so Δ is the mean nearest gap.
        let values = [0.0, 1.0, 3.0, 7.0];
        let h = Array2::from_shape_fn((4, 1), |(i, _)| values[i]);
        let features: Vec<_> = values.iter().map(|&v| feat(v)).collect();
        let r = stability_from_features(h.view(), &features, &[1]).unwrap();
        let expected = (1.0 + 1.0 + 2.0 + 4.0) / 4.0;
        assert!((r[0].deltas.velocity - expected).abs() < 1e-12);
        assert!((r[0].deltas.traj_xy - 0.5 * expected).abs() < 1e-12);
        assert_eq!(r[0].deltas.map_image, 0.0);
    }

    #[test]
    fn identical_points_have_zero_delta() {
        let h = Array2::from_elem((12, 3), 0.5);
        let features = vec![feat(4.0); 12];
        for r in stability_from_features(h.view(), &features, &[1, 5, 10]).unwrap() {
            assert_eq!(r.deltas.velocity, 0.0);
            assert_eq!(r.deltas.traj_xy, 0.0);
            assert_eq!(r.deltas.map_image, 0.0);
        }
    }

    #[test]
    fn k_bounds() {
        let h = Array2::zeros((3, 1));
        let features = vec![feat(0.0); 3];
        assert!(stability_from_features(h.view(), &features, &[3]).is_err());
        assert!(stability_from_features(h.view(), &features, &[0]).is_err());
        assert!(nearest_neighbors(h.view(), 2).is_ok());
    }

    #[test]
    fn neighbor_ties_by_index() {
        let h = Array2::from_shape_vec((4, 1), vec![0.0, 1.0, -1.0, 5.0]).unwrap();
        let nb = nearest_neighbors(h.view(), 2).unwrap();
        assert_eq!(nb[0], vec![1, 2]);
        assert_eq!(nb[3], vec![1, 0]);
    }
}
