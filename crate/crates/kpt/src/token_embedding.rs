//! Deterministic reference embedder: maps query encodings to tokens of the
//! transformer width through stacks of affine layers with rectifiers between
//! them (never after the last).
//!
//! For the vector encoding the three input vectors can be concatenated
//! first and embedded as one (concat stage 0), or each embedded separately
//! for a number of layers into a third of the token width and concatenated
//! afterwards. Weights are drawn uniformly in +-1/sqrt(fan_in) from a seeded
//! generator, so a (seed, config) pair fully determines the embedder.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::query_encoding::{NormPoseEncoding, VectorEncoding};

/// Which encoding an embedder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingKind {
    /// Three vectors of dims (20, 3, 1).
    Vector,
    /// One vector of dim 2.
    NormPose,
}

impl EncodingKind {
    pub fn name(self) -> &'static str {
        match self {
            EncodingKind::Vector => "vector",
            EncodingKind::NormPose => "normpose",
        }
    }

    pub fn parse(s: &str) -> Option<EncodingKind> {
        match s {
            "vector" => Some(EncodingKind::Vector),
            "normpose" => Some(EncodingKind::NormPose),
            _ => None,
        }
    }

    pub fn branch_dims(self) -> Vec<usize> {
        match self {
            EncodingKind::Vector => vec![20, 3, 1],
            EncodingKind::NormPose => vec![2],
        }
    }
}

/// An encoding ready for embedding.
#[derive(Debug, Clone)]
pub enum Encoding {
    Vector(VectorEncoding),
    NormPose(NormPoseEncoding),
}

impl Encoding {
    pub fn kind(&self) -> EncodingKind {
        match self {
            Encoding::Vector(_) => EncodingKind::Vector,
            Encoding::NormPose(_) => EncodingKind::NormPose,
        }
    }

    fn branches(&self) -> Vec<Vec<f64>> {
        match self {
            Encoding::Vector(v) => vec![
                v.keypoint_vec.to_vec(),
                v.thickness_vec.to_vec(),
                v.angle_vec.to_vec(),
            ],
            Encoding::NormPose(n) => vec![vec![n.x, n.y]],
        }
    }
}

pub const MAX_LAYERS: usize = 4;

#[derive(Debug, Clone)]
pub struct EmbedderConfig {
    /// Output token width; 192 matches the usual visual token size.
    pub token_dim: usize,
    /// Total affine layers along any input-to-output path, 1..=4.
    pub num_layers: usize,
    /// Layers applied per branch before concatenation; 0 concatenates the
    /// raw vectors first. May equal `num_layers` (concatenation last).
    pub concat_stage: usize,
    pub kind: EncodingKind,
    /// Draw biases too; disable for strictly linear single-layer maps.
    pub use_bias: bool,
    pub seed: u64,
}

impl EmbedderConfig {
    pub fn new(token_dim: usize, num_layers: usize, concat_stage: usize, kind: EncodingKind) -> Self {
        EmbedderConfig {
            token_dim,
            num_layers,
            concat_stage,
            kind,
            use_bias: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 {
            return Err(Error::Config("token_dim must be positive".into()));
        }
        if !(1..=MAX_LAYERS).contains(&self.num_layers) {
            return Err(Error::Config(format!(
                "num_layers = {} out of 1..={MAX_LAYERS}",
                self.num_layers
            )));
        }
        if self.concat_stage > self.num_layers {
            return Err(Error::Config(format!(
                "concat_stage = {} exceeds num_layers = {}",
                self.concat_stage, self.num_layers
            )));
        }
        let branches = self.kind.branch_dims().len();
        if self.concat_stage > 0 && self.token_dim < branches {
            return Err(Error::Config(format!(
                "token_dim = {} too small for {} branches",
                self.token_dim, branches
            )));
        }
        Ok(())
    }

    /// Per-branch share of the token width: as even as integer division
    /// allows, remainder to the first (keypoint) branch.
    pub fn branch_shares(&self) -> Vec<usize> {
        let branches = self.kind.branch_dims().len();
        let base = self.token_dim / branches;
        let rem = self.token_dim % branches;
        (0..branches)
            .map(|i| if i == 0 { base + rem } else { base })
            .collect()
    }
}

/// One affine layer. Weights are stored row-major; values are f32-exact so
/// the 32-bit interchange format is lossless.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn init<R: Rng>(rows: usize, cols: usize, use_bias: bool, rng: &mut R) -> DenseLayer {
        let bound = 1.0 / (cols as f64).sqrt();
        let mut draw = || -> f64 {
            let v: f64 = rng.gen_range(-bound..bound);
            v as f32 as f64
        };
        let weights = (0..rows * cols).map(|_| draw()).collect();
        let bias = if use_bias {
            (0..rows).map(|_| draw()).collect()
        } else {
            vec![0.0; rows]
        };
        DenseLayer {
            rows,
            cols,
            weights,
            bias,
        }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.cols);
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.bias[r];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
        out
    }
}

fn relu(values: &mut [f64]) {
    for v in values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Immutable embedder: per-branch layers, then concatenation, then the
/// remaining layers.
#[derive(Debug, Clone)]
pub struct Embedder {
    config: EmbedderConfig,
    branch_layers: Vec<Vec<DenseLayer>>,
    post_layers: Vec<DenseLayer>,
}

/// Builds an embedder with weights drawn uniformly in +-1/sqrt(fan_in) from
/// a ChaCha stream seeded by `config.seed`. Identical configs produce
/// bitwise identical embedders.
pub fn init_embedder(config: &EmbedderConfig) -> Result<Embedder> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input_dims = config.kind.branch_dims();
    let shares = config.branch_shares();

    // Draw order: branches in order, each layer in order, then the post
    // layers; weights before bias inside a layer.
    let mut branch_layers = Vec::new();
    for (b, &in_dim) in input_dims.iter().enumerate() {
        let mut layers = Vec::new();
        let mut dim = in_dim;
        for _ in 0..config.concat_stage {
            layers.push(DenseLayer::init(shares[b], dim, config.use_bias, &mut rng));
            dim = shares[b];
        }
        branch_layers.push(layers);
    }

    let mut post_layers = Vec::new();
    let mut dim = if config.concat_stage == 0 {
        input_dims.iter().sum()
    } else {
        shares.iter().sum()
    };
    for _ in config.concat_stage..config.num_layers {
        post_layers.push(DenseLayer::init(config.token_dim, dim, config.use_bias, &mut rng));
        dim = config.token_dim;
    }

    Ok(Embedder {
        config: config.clone(),
        branch_layers,
        post_layers,
    })
}

impl Embedder {
    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn token_dim(&self) -> usize {
        self.config.token_dim
    }

    /// Embeds one encoding into a `token_dim` vector. A rectifier sits
    /// between consecutive layers along every path; the final layer output
    /// is linear.
    pub fn embed(&self, encoding: &Encoding) -> Result<Vec<f64>> {
        if encoding.kind() != self.config.kind {
            return Err(Error::Shape(format!(
                "embedder expects {} encodings, got {}",
                self.config.kind.name(),
                encoding.kind().name()
            )));
        }
        let n = self.config.num_layers;
        let mut branches = encoding.branches();
        for (b, layers) in self.branch_layers.iter().enumerate() {
            for (k, layer) in layers.iter().enumerate() {
                let mut out = layer.apply(&branches[b]);
                // Layer index k is global layer k+1; rectify unless last.
                if k + 1 < n {
                    relu(&mut out);
                }
                branches[b] = out;
            }
        }
        let mut value: Vec<f64> = branches.concat();
        for (k, layer) in self.post_layers.iter().enumerate() {
            let mut out = layer.apply(&value);
            if self.config.concat_stage + k + 1 < n {
                relu(&mut out);
            }
            value = out;
        }
        debug_assert_eq!(value.len(), self.config.token_dim);
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite token value".into()));
        }
        Ok(value)
    }

    /// Order-preserving batch embedding; every element must match the
    /// configured encoding kind.
    pub fn embed_batch(&self, encodings: &[Encoding]) -> Result<Vec<Vec<f64>>> {
        encodings.iter().map(|e| self.embed(e)).collect()
    }

    fn all_layers(&self) -> Vec<&DenseLayer> {
        self.branch_layers
            .iter()
            .flatten()
            .chain(self.post_layers.iter())
            .collect()
    }

    /// Serializes all layers to a flat binary format: a little-endian u32
    /// dims header (layer count, then rows/cols per layer) followed by
    /// row-major weights and the bias of each layer as little-endian f32.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let layers = self.all_layers();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write_u32 = |w: &mut BufWriter<File>, v: u32| -> Result<()> {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))
        };
        write_u32(&mut w, layers.len() as u32)?;
        for layer in &layers {
            write_u32(&mut w, layer.rows as u32)?;
            write_u32(&mut w, layer.cols as u32)?;
        }
        for layer in &layers {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                w.write_all(&(*v as f32).to_le_bytes())
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    }

    /// Loads weights written by [`Embedder::save_weights`] into an embedder
    /// of the same configuration.
    pub fn load_weights(config: &EmbedderConfig, path: &Path) -> Result<Embedder> {
        let mut embedder = init_embedder(config)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            Ok(u32::from_le_bytes(buf))
        };
        let count = read_u32(&mut r)? as usize;
        let mut expected_dims = Vec::new();
        {
            let layers = embedder.all_layers();
            if count != layers.len() {
                return Err(Error::Shape(format!(
                    "weight file has {count} layers, config expects {}",
                    layers.len()
                )));
            }
            for layer in layers {
                expected_dims.push((layer.rows, layer.cols));
            }
        }
        for &(rows, cols) in &expected_dims {
            let (fr, fc) = (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize);
            if (fr, fc) != (rows, cols) {
                return Err(Error::Shape(format!(
                    "weight file layer is {fr}x{fc}, config expects {rows}x{cols}"
                )));
            }
        }
        let mut read_f32 = |r: &mut BufReader<File>| -> Result<f64> {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            Ok(f32::from_le_bytes(buf) as f64)
        };
        let layers_mut: Vec<&mut DenseLayer> = embedder
            .branch_layers
            .iter_mut()
            .flatten()
            .chain(embedder.post_layers.iter_mut())
            .collect();
        for layer in layers_mut {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = read_f32(&mut r)?;
            }
        }
        Ok(embedder)
    }
}
