use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use crate::raster::{ByteReader, GridSequence};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    pub hidden: Vec<usize>,
    /// Representation width `d_r`.
    pub output: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512],
            output: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectorSpec {
    pub hidden: Vec<usize>,
    /// Embedding width `d_p`.
    pub output: usize,
}

impl Default for ProjectorSpec {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            output: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Encoder output `h`.
    Representation,
    /// Projector output `z`.
    Projection,
}

/// Encoder and projector for grids of one fixed `(C, H, W)` shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub grid_shape: (usize, usize, usize),
    pub encoder: Mlp<f32>,
    pub projector: Mlp<f32>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Result<Vec<usize>> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    if dims.contains(&0) {
        return Err(Error::Config(format!("layer widths must be at least 1: {dims:?}")));
    }
    Ok(dims)
}

/// Length of the flattened, 2×2-average-pooled input.
pub fn input_len(grid_shape: (usize, usize, usize)) -> usize {
    let (c, h, w) = grid_shape;
    c * (h / 2) * (w / 2)
}

/// Writes the 2×2 average-pooled grid into `out` (length [`input_len`]).
pub fn downsample_into(grid: &GridSequence, out: &mut [f32]) {
    let (c, h, w) = grid.shape();
    let (h2, w2) = (h / 2, w / 2);
    debug_assert_eq!(out.len(), c * h2 * w2);
    for k in 0..c {
        let f = grid.frame(k);
        for r in 0..h2 {
            for col in 0..w2 {
                let (r0, c0) = (2 * r, 2 * col);
                let s = f[r0 * w + c0] + f[r0 * w + c0 + 1] + f[(r0 + 1) * w + c0] + f[(r0 + 1) * w + c0 + 1];
                out[(k * h2 + r) * w2 + col] = 0.25 * s;
            }
        }
    }
}

impl Model {
    pub fn new(grid_shape: (usize, usize, usize), encoder: &EncoderSpec, projector: &ProjectorSpec, rng: &mut Rng) -> Result<Self> {
        let (_, h, w) = grid_shape;
        if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Config(format!("grid {h}x{w} must have even sides for 2x downsampling")));
        }
        let enc = widths(input_len(grid_shape), &encoder.hidden, encoder.output)?;
        let proj = widths(encoder.output, &projector.hidden, projector.output)?;
        Ok(Self {
            grid_shape,
            encoder: Mlp::new(&enc, rng),
            projector: Mlp::new(&proj, rng),
        })
    }

    pub fn representation_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn projection_dim(&self) -> usize {
        self.projector.output_dim()
    }

    /// Stacks downsampled grids as rows.
    pub fn inputs(&self, grids: &[&GridSequence]) -> Result<Array2<f32>> {
        let len = input_len(self.grid_shape);
        let mut x = Array2::<f32>::zeros((grids.len(), len));
        for (mut row, g) in x.rows_mut().into_iter().zip(grids) {
            if g.shape() != self.grid_shape {
                return Err(Error::Config(format!(
                    "grid shape {:?} does not match model shape {:?}",
                    g.shape(),
                    self.grid_shape
                )));
            }
            downsample_into(g, row.as_slice_mut().expect("standard layout"));
        }
        Ok(x)
    }

    /// `(h, z)` for a batch of downsampled inputs.
    pub fn forward(&self, x: ArrayView2<f32>) -> (Array2<f32>, Array2<f32>) {
        let h = self.encoder.forward(x);
        let z = self.projector.forward(h.view());
        (h, z)
    }

    pub fn embed(&self, grids: &[&GridSequence], mode: EmbeddingMode) -> Result<Array2<f32>> {
        let x = self.inputs(grids)?;
        let h = self.encoder.forward(x.view());
        Ok(match mode {
            EmbeddingMode::Representation => h,
            EmbeddingMode::Projection => self.projector.forward(h.view()),
        })
    }

    /// EXMD checkpoint: magic, `u32` version, `u32` C, H, W, then for the
    /// encoder and the projector a `u32` width count and the widths, then all
    /// weights (row-major `in×out`) and biases as little-endian `f32`,
    /// layer by layer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        let (c, h, w) = self.grid_shape;
        for v in [MODEL_VERSION, c as u32, h as u32, w as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for net in [&self.encoder, &self.projector] {
            let dims = net.dims();
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for d in dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for net in [&self.encoder, &self.projector] {
            for slice in net.param_slices() {
                for v in slice {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("missing EXMD magic".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let mut nets = Vec::with_capacity(2);
        for _ in 0..2 {
            let n = r.u32()? as usize;
            if !(2..=64).contains(&n) {
                return Err(Error::Format(format!("implausible layer count {n}")));
            }
            let dims: Vec<usize> = (0..n).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            if dims.contains(&0) {
                return Err(Error::Format("zero layer width".into()));
            }
            nets.push(dims);
        }
        if nets[0][0] != input_len(shape) || nets[0].last() != nets[1].first() {
            return Err(Error::Format("layer widths do not chain".into()));
        }
        let mut read_net = |dims: &[usize]| -> Result<Mlp<f32>> {
            let mut layers = Vec::with_capacity(dims.len() - 1);
            for w in dims.windows(2) {
                let mut layer = Dense::zeros(w[0], w[1]);
                for buf in [
                    layer.weight.as_slice_mut().expect("standard layout"),
                    layer.bias.as_slice_mut().expect("standard layout"),
                ] {
                    let raw = r.take(buf.len() * 4)?;
                    for (v, b) in buf.iter_mut().zip(raw.chunks_exact(4)) {
                        *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
                    }
                }
                layers.push(layer);
            }
            Ok(Mlp { layers })
        };
        let encoder = read_net(&nets[0])?;
        let projector = read_net(&nets[1])?;
        if !r.at_end() {
            return Err(Error::Format("trailing bytes after model weights".into()));
        }
        Ok(Self {
            grid_shape: shape,
            encoder,
            projector,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub const MODEL_MAGIC: &[u8; 4] = b"EXMD";
pub const MODEL_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridConfig;
    use crate::rng;

    fn small() -> Model {
        let enc = EncoderSpec {
            hidden: vec![6],
            output: 4,
        };
        let proj = ProjectorSpec {
            hidden: vec![5],
            output: 3,
        };
        Model::new((2, 4, 6), &enc, &proj, &mut rng::seeded(9)).unwrap()
    }

    fn grid() -> GridSequence {
        let cfg = GridConfig {
            channels: 2,
            height: 4,
            width: 6,
            ego_pixel: (0, 0),
            ..GridConfig::default()
        };
        let mut g = GridSequence::zeros(cfg, "g");
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = (i % 4) as f32 / 4.0;
        }
        g
    }

    #[test]
    fn downsampling_averages_blocks() {
        let g = grid();
        let mut out = vec![0.0; input_len(g.shape())];
        downsample_into(&g, &mut out);
        assert_eq!(out.len(), 2 * 2 * 3);
        // Row-major values i%4/4 over a 6-wide row: block (0,0) holds 0, .25, .5, .75.
        assert_eq!(out[0], (0.0 + 0.25 + 0.5 + 0.75) / 4.0);
    }

    #[test]
    fn shapes_and_determinism() {
        let m = small();
        let g = grid();
        let h = m.embed(&[&g, &g], EmbeddingMode::Representation).unwrap();
        let z = m.embed(&[&g], EmbeddingMode::Projection).unwrap();
        assert_eq!(h.dim(), (2, 4));
        assert_eq!(z.dim(), (1, 3));
        assert_eq!(h.row(0), h.row(1));
        let wrong = GridSequence::zeros(GridConfig::default(), "w");
        assert!(m.embed(&[&wrong], EmbeddingMode::Representation).is_err());
        assert!(Model::new((4, 5, 6), &EncoderSpec::default(), &ProjectorSpec::default(), &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = small();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"EXMD");
        let back = Model::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert!(Model::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::from_bytes(&extra).is_err());
    }
}
