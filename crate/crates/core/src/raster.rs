//! EGO-fixed occupancy-grid rendering.
//!
//! A single world→grid transform is fixed from the EGO pose at the start of
//! the scenario: the EGO lands on the center of `ego_pixel` and its initial
//! heading points toward increasing row index. Every sampled frame is drawn
//! in that same frame, so EGO motion stays visible across channels.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scenario::{Scenario, SceneObject};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub meters_per_pixel: f64,
    /// `(row, col)` of the EGO at the first frame.
    pub ego_pixel: (usize, usize),
    pub map_intensity: f32,
    pub object_intensity: f32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            height: 120,
            width: 120,
            channels: 4,
            meters_per_pixel: 1.0,
            ego_pixel: (40, 60),
            map_intensity: 0.5,
            object_intensity: 1.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f32| (0.0..=1.0).contains(&v);
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Config("grid dimensions must be at least 1".into()));
        }
        if self.ego_pixel.0 >= self.height || self.ego_pixel.1 >= self.width {
            return Err(Error::Config(format!(
                "ego pixel {:?} outside {}x{} grid",
                self.ego_pixel, self.height, self.width
            )));
        }
        if !(self.meters_per_pixel > 0.0) {
            return Err(Error::Config("meters_per_pixel must be positive".into()));
        }
        if !unit(self.map_intensity) || !unit(self.object_intensity) {
            return Err(Error::Config("intensities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn value_count(&self) -> usize {
        self.channels * self.frame_len()
    }
}

/// `C×H×W` intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSequence {
    pub data: Vec<f32>,
    pub config: GridConfig,
    pub scenario_id: String,
}

impl GridSequence {
    pub fn zeros(config: GridConfig, scenario_id: impl Into<String>) -> Self {
        Self {
            data: vec![0.0; config.value_count()],
            config,
            scenario_id: scenario_id.into(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.config.channels, self.config.height, self.config.width)
    }

    pub fn index(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.config.height + r) * self.config.width + col
    }

    pub fn get(&self, c: usize, r: usize, col: usize) -> f32 {
        self.data[self.index(c, r, col)]
    }

    pub fn frame(&self, c: usize) -> &[f32] {
        let n = self.config.frame_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn frame_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.config.frame_len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// `c` timestamps evenly spaced over `[t0, t1]`, both ends included.
pub fn sample_frames(time_span: (f64, f64), c: usize) -> Result<Vec<f64>> {
    let (t0, t1) = time_span;
    if c < 2 {
        return Err(Error::Config(format!("need at least 2 frames, got {c}")));
    }
    if !(t1 > t0) {
        return Err(Error::Config(format!("empty time span [{t0}, {t1}]")));
    }
    Ok((0..c)
        .map(|k| {
            if k == c - 1 {
                t1
            } else {
                t0 + k as f64 * (t1 - t0) / (c - 1) as f64
            }
        })
        .collect())
}

/// World → continuous grid coordinates `(row, col)`; pixel `(r, c)` spans
/// `[r, r+1) × [c, c+1)`.
#[derive(Debug, Clone, Copy)]
pub struct EgoFrame {
    origin: Vec2,
    cos: f64,
    sin: f64,
    scale: f64,
    anchor: (f64, f64),
}

impl EgoFrame {
    pub fn new(origin: Vec2, heading: f64, config: &GridConfig) -> Self {
        Self {
            origin,
            cos: heading.cos(),
            sin: heading.sin(),
            scale: 1.0 / config.meters_per_pixel,
            anchor: (config.ego_pixel.0 as f64 + 0.5, config.ego_pixel.1 as f64 + 0.5),
        }
    }

    /// Frame anchored at the EGO pose at the start of the time span.
    pub fn from_scenario(scenario: &Scenario, config: &GridConfig) -> Result<Self> {
        let ego = &scenario.ego()?.trajectory;
        let t0 = scenario.time_span.0;
        let origin = ego
            .position_at(t0)
            .ok_or_else(|| Error::Structure("EGO trajectory is empty".into()))?;
        Ok(Self::new(origin, ego.heading_at(t0)?, config))
    }

    pub fn to_grid(&self, p: Vec2) -> (f64, f64) {
        let d = p - self.origin;
        let forward = d.x * self.cos + d.y * self.sin;
        let left = -d.x * self.sin + d.y * self.cos;
        (self.anchor.0 + forward * self.scale, self.anchor.1 + left * self.scale)
    }
}

/// Scanline fill of a polygon given in grid coordinates. A pixel is set
/// when its center lies inside; centers on an edge follow a half-open rule
/// (`[lo, hi)` in both axes), so polygons sharing an edge never both claim
/// the pixels along it.
pub fn fill_polygon(frame: &mut [f32], height: usize, width: usize, poly: &[(f64, f64)], value: f32) {
    if poly.len() < 3 {
        return;
    }
    let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(u, _) in poly {
        umin = umin.min(u);
        umax = umax.max(u);
    }
    let r0 = (umin - 0.5).ceil().max(0.0);
    let r1 = ((umax - 0.5).ceil() - 1.0).min(height as f64 - 1.0);
    if !(r0 <= r1) {
        return;
    }
    let mut xs: Vec<f64> = Vec::with_capacity(poly.len());
    for r in r0 as usize..=r1 as usize {
        let y = r as f64 + 0.5;
        xs.clear();
        let n = poly.len();
        for i in 0..n {
            let (au, av) = poly[i];
            let (bu, bv) = poly[(i + 1) % n];
            if (au <= y && y < bu) || (bu <= y && y < au) {
                xs.push(av + (y - au) * (bv - av) / (bu - au));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let c0 = (pair[0] - 0.5).ceil().max(0.0);
            let c1 = ((pair[1] - 0.5).ceil() - 1.0).min(width as f64 - 1.0);
            if c0 <= c1 {
                let row = &mut frame[r * width..(r + 1) * width];
                for v in &mut row[c0 as usize..=c1 as usize] {
                    *v = value;
                }
            }
        }
    }
}

fn footprint(center: Vec2, heading: f64, object: &SceneObject) -> [Vec2; 4] {
    let f = Vec2::new(heading.cos(), heading.sin()) * (0.5 * object.size.length);
    let l = Vec2::new(-heading.sin(), heading.cos()) * (0.5 * object.size.width);
    [center + f + l, center - f + l, center - f - l, center + f - l]
}

/// Map layer only, as a single `H×W` frame.
pub fn rasterize_map(scenario: &Scenario, config: &GridConfig) -> Result<Vec<f32>> {
    let frame = EgoFrame::from_scenario(scenario, config)?;
    Ok(render_map(scenario, config, &frame))
}

fn render_map(scenario: &Scenario, config: &GridConfig, frame: &EgoFrame) -> Vec<f32> {
    let mut layer = vec![0.0; config.frame_len()];
    for el in &scenario.map {
        let poly: Vec<(f64, f64)> = el.polygon.iter().map(|&p| frame.to_grid(p)).collect();
        fill_polygon(&mut layer, config.height, config.width, &poly, config.map_intensity);
    }
    layer
}

/// Renders the scenario into a `C×H×W` occupancy-grid sequence.
///
/// Objects appear in a frame when their nearest sample lies within half a
/// recording interval (the EGO's median sample spacing) of the frame time.
pub fn rasterize(scenario: &Scenario, config: &GridConfig) -> Result<GridSequence> {
    config.validate()?;
    let frame = EgoFrame::from_scenario(scenario, config)?;
    let times = if config.channels == 1 {
        vec![scenario.time_span.0]
    } else {
        sample_frames(scenario.time_span, config.channels)?
    };
    let tolerance = 0.5
        * scenario.ego_sample_interval().unwrap_or_else(|| {
            let (t0, t1) = scenario.time_span;
            (t1 - t0) / (config.channels.max(2) - 1) as f64
        });
    let map_layer = render_map(scenario, config, &frame);
    let mut grid = GridSequence::zeros(*config, scenario.id.clone());
    for (c, &t) in times.iter().enumerate() {
        let out = grid.frame_mut(c);
        out.copy_from_slice(&map_layer);
        for obj in &scenario.objects {
            let traj = &obj.trajectory;
            let Some(i) = traj.nearest_index(t) else {
                continue;
            };
            let sample = traj.points[i];
            if (sample.t - t).abs() > tolerance + 1e-9 {
                continue;
            }
            let heading = traj.heading_at(sample.t)?;
            let corners = footprint(sample.position(), heading, obj);
            let poly: Vec<(f64, f64)> = corners.iter().map(|&p| frame.to_grid(p)).collect();
            fill_polygon(out, config.height, config.width, &poly, config.object_intensity);
        }
    }
    Ok(grid)
}

/// Writes one 8-bit grayscale PNG per channel as `<stem>_f<k>.png`.
pub fn render_png(grid: &GridSequence, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let (c, h, w) = grid.shape();
    let mut paths = Vec::with_capacity(c);
    for k in 0..c {
        let path = dir.join(format!("{stem}_f{k}.png"));
        let pixels: Vec<u8> = grid
            .frame(k)
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let io_err = |e: png::EncodingError| Error::io(&path, std::io::Error::other(e));
        let mut writer = encoder.write_header().map_err(io_err)?;
        writer.write_image_data(&pixels).map_err(io_err)?;
        writer.finish().map_err(io_err)?;
        paths.push(path);
    }
    Ok(paths)
}

pub const GRID_MAGIC: &[u8; 4] = b"EXGT";
pub const GRID_VERSION: u32 = 1;

/// Encodes grids sharing one shape as an EXGT sequence:
/// magic, `u32` version, `u32` C, H, W, `u64` record count, the scenario-id
/// table (`u32` byte length + UTF-8 each), then `C·H·W` little-endian `f32`
/// values per record.
pub fn encode_grids(grids: &[GridSequence]) -> Result<Vec<u8>> {
    let (c, h, w) = grids.first().map(|g| g.shape()).unwrap_or((0, 0, 0));
    if grids.iter().any(|g| g.shape() != (c, h, w)) {
        return Err(Error::Format("grids in one file must share a shape".into()));
    }
    let mut out = Vec::with_capacity(28 + grids.len() * (c * h * w * 4 + 16));
    out.extend_from_slice(GRID_MAGIC);
    for v in [GRID_VERSION, c as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(grids.len() as u64).to_le_bytes());
    for g in grids {
        out.extend_from_slice(&(g.scenario_id.len() as u32).to_le_bytes());
        out.extend_from_slice(g.scenario_id.as_bytes());
    }
    for g in grids {
        for v in &g.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Little-endian cursor over a byte buffer with truncation errors.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated input at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes an EXGT sequence. Only the shape of the grid config is stored;
/// the remaining config fields take their defaults.
pub fn decode_grids(bytes: &[u8]) -> Result<Vec<GridSequence>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != GRID_MAGIC {
        return Err(Error::Format("missing EXGT magic".into()));
    }
    let version = r.u32()?;
    if version != GRID_VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let (c, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let count = r.u64()? as usize;
    let mut ids = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let id = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Format(format!("scenario id is not UTF-8: {e}")))?;
        ids.push(id.to_string());
    }
    let config = GridConfig {
        channels: c,
        height: h,
        width: w,
        ..GridConfig::default()
    };
    let n = c * h * w;
    let mut grids = Vec::with_capacity(count);
    for id in ids {
        let raw = r.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        grids.push(GridSequence {
            data,
            config,
            scenario_id: id,
        });
    }
    if !r.at_end() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok(grids)
}

pub fn write_grids(path: &Path, grids: &[GridSequence]) -> Result<()> {
    let bytes = encode_grids(grids)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grids(path: &Path) -> Result<Vec<GridSequence>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grids(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ObjectClass, Size, Trajectory, TrajectoryPoint};

    fn ego_only(speed: f64) -> Scenario {
        Scenario {
            id: "e".into(),
            objects: vec![SceneObject {
                id: "ego".into(),
                trajectory: Trajectory::new(
                    (0..=50)
                        .map(|i| {
                            let t = i as f64 * 0.1;
                            TrajectoryPoint::with_heading(t, 3.0 + speed * t, -2.0, 0.0)
                        })
                        .collect(),
                ),
                size: Size {
                    length: 4.0,
                    width: 2.0,
                },
                class: ObjectClass::Ego,
            }],
            map: vec![],
            time_span: (0.0, 5.0),
        }
    }

    #[test]
    fn frame_times() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&sample_frames((0.0, 5.0), 4).unwrap(), &[0.0, 5.0 / 3.0, 10.0 / 3.0, 5.0]));
        assert_eq!(sample_frames((0.0, 5.0), 2).unwrap(), vec![0.0, 5.0]);
        assert!(close(&sample_frames((2.0, 7.0), 4).unwrap(), &[2.0, 11.0 / 3.0, 16.0 / 3.0, 7.0]));
        assert!(sample_frames((0.0, 5.0), 1).is_err());
        assert!(sample_frames((1.0, 1.0), 3).is_err());
    }

    #[test]
    fn stationary_ego_frames_identical() {
        let s = ego_only(0.0);
        let g = rasterize(&s, &GridConfig::default()).unwrap();
        assert_eq!(g.shape(), (4, 120, 120));
        assert_eq!(g.get(0, 40, 60), 1.0);
        for c in 1..4 {
            assert_eq!(g.frame(c), g.frame(0));
        }
        // 4 m x 2 m footprint at 1 m/px: 4 rows by 2 columns.
        let occupied = g.frame(0).iter().filter(|&&v| v > 0.0).count();
        assert_eq!(occupied, 8);
        assert!(g.data.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    fn centroid(frame: &[f32], w: usize) -> (f64, f64) {
        let (mut r, mut c, mut n) = (0.0, 0.0, 0.0);
        for (i, &v) in frame.iter().enumerate() {
            if v > 0.0 {
                r += (i / w) as f64 + 0.5;
                c += (i % w) as f64 + 0.5;
                n += 1.0;
            }
        }
        (r / n, c / n)
    }

    #[test]
    fn moving_ego_advances_along_rows() {
        let s = ego_only(20.0);
        let g = rasterize(&s, &GridConfig::default()).unwrap();
        let times = sample_frames((0.0, 5.0), 4).unwrap();
        let (r0, c0) = centroid(g.frame(0), 120);
        for (k, t) in times.iter().enumerate().take(3).skip(1) {
            // Frames 1 and 2 fall between samples: the nearest sample is used.
            let sample_t = (t * 10.0).round() / 10.0;
            let (r, c) = centroid(g.frame(k), 120);
            assert!((r - r0 - 20.0 * sample_t).abs() <= 1.0, "frame {k}: {r} vs {r0}");
            assert!((c - c0).abs() <= 1.0);
        }
    }

    #[test]
    fn png_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = GridSequence::zeros(
            GridConfig {
                channels: 2,
                height: 5,
                width: 7,
                ego_pixel: (1, 1),
                ..GridConfig::default()
            },
            "x",
        );
        let idx = g.index(1, 2, 3);
        g.data[idx] = 1.0;
        let paths = render_png(&g, dir.path(), "x").unwrap();
        assert_eq!(paths.len(), 2);
        for (k, p) in paths.iter().enumerate() {
            let decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(p).unwrap()));
            let mut reader = decoder.read_info().unwrap();
            let mut buf = vec![0; reader.output_buffer_size().unwrap()];
            let info = reader.next_frame(&mut buf).unwrap();
            let px = &buf[..info.buffer_size()];
            let lit = px.iter().filter(|&&v| v != 0).count();
            assert_eq!(lit, k, "frame {k}");
        }
        let first = fs::read(&paths[1]).unwrap();
        render_png(&g, dir.path(), "x").unwrap();
        assert_eq!(fs::read(&paths[1]).unwrap(), first);
    }

    #[test]
    fn exgt_round_trip_and_errors() {
        let s = ego_only(5.0);
        let g = rasterize(&s, &GridConfig::default()).unwrap();
        let mut g2 = g.clone();
        g2.scenario_id = "second".into();
        let bytes = encode_grids(&[g.clone(), g2.clone()]).unwrap();
        assert_eq!(&bytes[..4], b"EXGT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = decode_grids(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].data, g.data);
        assert_eq!(back[1].scenario_id, "second");
        assert!(decode_grids(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_grids(&bad).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GridConfig::default().validate().is_ok());
        let bad = GridConfig {
            ego_pixel: (120, 0),
            ..GridConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GridConfig {
            map_intensity: 1.5,
            ..GridConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
