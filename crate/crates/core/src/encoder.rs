//! The staged feedforward encoder.
//!
//! `h_0 = x`, `h_s = tanh(A_s h_{s-1} + b_s)` for each backbone stage, and
//! every stage owns a two-layer head `phi_s = U_s tanh(V_s h_s + c_s) + d_s`
//! that maps into the shared embedding space. The fused embedding is the
//! learnable weighted sum of the per-stage embeddings.
//!
//! Compute is accounted in Mul-Adds: an affine map from m to n inputs
//! costs m*n, biases and nonlinearities are free. The cumulative cost of
//! exiting at stage s charges backbones 1..=s plus the stage-s head; the
//! fusion exit charges every backbone, every head, and the weighted sum.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub num_stages: usize,
    pub input_dim: usize,
    pub backbone_widths: Vec<usize>,
    pub head_hidden_width: usize,
    pub embedding_dim: usize,
}

impl EncoderConfig {
    /// Default four-stage encoder for the given input dimension: backbone
    /// widths ramp from half the input width up to the full width.
    pub fn new(input_dim: usize) -> Self {
        Self::with_stages(input_dim, 4)
    }

    pub fn with_stages(input_dim: usize, num_stages: usize) -> Self {
        let widths = (0..num_stages)
            .map(|s| {
                let t = if num_stages > 1 {
                    s as f64 / (num_stages - 1) as f64
                } else {
                    1.0
                };
                ((input_dim as f64) * (0.5 + 0.5 * t)).round().max(1.0) as usize
            })
            .collect();
        EncoderConfig {
            num_stages,
            input_dim,
            backbone_widths: widths,
            head_hidden_width: 64,
            embedding_dim: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages < 2 {
            return Err(Error::config("num_stages must be >= 2"));
        }
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be >= 1"));
        }
        if self.backbone_widths.len() != self.num_stages {
            return Err(Error::config(format!(
                "{} backbone widths for {} stages",
                self.backbone_widths.len(),
                self.num_stages
            )));
        }
        if self.backbone_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("backbone widths must be >= 1"));
        }
        if self.head_hidden_width == 0 {
            return Err(Error::config("head_hidden_width must be >= 1"));
        }
        if self.embedding_dim < 2 {
            return Err(Error::config("embedding_dim must be >= 2"));
        }
        // Cost monotonicity across exit points is part of the contract.
        let profile = self.cost_profile_unchecked();
        for (s, w) in profile.cumulative.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::config(format!(
                    "cumulative cost must increase with stage: stage {} costs {}, stage {} costs {}",
                    s + 1,
                    w[0],
                    s + 2,
                    w[1]
                )));
            }
        }
        Ok(())
    }

    fn backbone_cost(&self, stage: usize) -> f64 {
        let fan_in = if stage == 0 {
            self.input_dim
        } else {
            self.backbone_widths[stage - 1]
        };
        (fan_in * self.backbone_widths[stage]) as f64
    }

    fn head_cost(&self, stage: usize) -> f64 {
        (self.backbone_widths[stage] * self.head_hidden_width
            + self.head_hidden_width * self.embedding_dim) as f64
    }

    fn cost_profile_unchecked(&self) -> CostProfile {
        let mut backbone_total = 0.0;
        let mut cumulative = Vec::with_capacity(self.num_stages);
        let mut heads_total = 0.0;
        for s in 0..self.num_stages {
            backbone_total += self.backbone_cost(s);
            heads_total += self.head_cost(s);
            cumulative.push(backbone_total + self.head_cost(s));
        }
        let fusion = backbone_total
            + heads_total
            + (self.num_stages * self.embedding_dim) as f64;
        CostProfile { cumulative, fusion }
    }
}

/// Cumulative Mul-Add cost of each exit point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostProfile {
    /// Cost of exiting at stage s (1-based index s-1 here).
    pub cumulative: Vec<f64>,
    /// Cost of the fused exit.
    pub fusion: f64,
}

impl CostProfile {
    /// All exit costs in order: stages 1..=S, then fusion.
    pub fn exit_costs(&self) -> Vec<f64> {
        let mut v = self.cumulative.clone();
        v.push(self.fusion);
        v
    }
}

/// Input-independent cost profile; matches what `forward` reports.
pub fn cost_profile(config: &EncoderConfig) -> Result<CostProfile> {
    config.validate()?;
    Ok(config.cost_profile_unchecked())
}

/// Gain on the 1/sqrt(fan_in) init scale; keeps stacked tanh stages out
/// of saturation at this depth.
pub const INIT_GAIN: f64 = 0.8;

/// An affine map y = W x + b.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl AffineMap {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        AffineMap {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let scale = INIT_GAIN / (in_dim as f64).sqrt();
        let mut weight = Matrix::zeros(out_dim, in_dim);
        for v in weight.data_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = scale * g;
        }
        AffineMap {
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        y
    }
}

/// One embedding head: affine -> tanh -> affine.
#[derive(Debug, Clone, PartialEq)]
pub struct StageHead {
    pub hidden: AffineMap,
    pub output: AffineMap,
}

/// All learnable parameters of the encoder, plus the config they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub backbone: Vec<AffineMap>,
    pub heads: Vec<StageHead>,
    pub fusion_weights: Vec<f64>,
}

/// Per-stage and fused embeddings of one input, with exit costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageOutput {
    pub stage_embeddings: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub cumulative_cost_at_stage: Vec<f64>,
    pub fusion_cost: f64,
}

/// Zero-mean init scaled by 1/sqrt(fan_in); biases zero; fusion weights 1/S.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut backbone = Vec::with_capacity(config.num_stages);
    let mut fan_in = config.input_dim;
    for &w in &config.backbone_widths {
        backbone.push(AffineMap::init(w, fan_in, &mut rng));
        fan_in = w;
    }
    let heads = config
        .backbone_widths
        .iter()
        .map(|&w| StageHead {
            hidden: AffineMap::init(config.head_hidden_width, w, &mut rng),
            output: AffineMap::init(config.embedding_dim, config.head_hidden_width, &mut rng),
        })
        .collect();
    let fusion_weights = vec![1.0 / config.num_stages as f64; config.num_stages];
    Ok(EncoderParams {
        config: config.clone(),
        backbone,
        heads,
        fusion_weights,
    })
}

impl EncoderParams {
    /// All-zero parameters for a config; the gradient container shape.
    pub fn zeros(config: &EncoderConfig) -> EncoderParams {
        let mut backbone = Vec::with_capacity(config.num_stages);
        let mut fan_in = config.input_dim;
        for &w in &config.backbone_widths {
            backbone.push(AffineMap::zeros(w, fan_in));
            fan_in = w;
        }
        let heads = config
            .backbone_widths
            .iter()
            .map(|&w| StageHead {
                hidden: AffineMap::zeros(config.head_hidden_width, w),
                output: AffineMap::zeros(config.embedding_dim, config.head_hidden_width),
            })
            .collect();
        EncoderParams {
            fusion_weights: vec![0.0; config.num_stages],
            config: config.clone(),
            backbone,
            heads,
        }
    }

    /// Same-shaped container with all entries zero; used for gradients.
    pub fn zeros_like(&self) -> EncoderParams {
        EncoderParams::zeros(&self.config)
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_| n += 1);
        n
    }

    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        for a in &self.backbone {
            a.weight.data().iter().for_each(|&v| f(v));
            a.bias.iter().for_each(|&v| f(v));
        }
        for h in &self.heads {
            h.hidden.weight.data().iter().for_each(|&v| f(v));
            h.hidden.bias.iter().for_each(|&v| f(v));
            h.output.weight.data().iter().for_each(|&v| f(v));
            h.output.bias.iter().for_each(|&v| f(v));
        }
        self.fusion_weights.iter().for_each(|&v| f(v));
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for a in &mut self.backbone {
            a.weight.data_mut().iter_mut().for_each(&mut f);
            a.bias.iter_mut().for_each(&mut f);
        }
        for h in &mut self.heads {
            h.hidden.weight.data_mut().iter_mut().for_each(&mut f);
            h.hidden.bias.iter_mut().for_each(&mut f);
            h.output.weight.data_mut().iter_mut().for_each(&mut f);
            h.output.bias.iter_mut().for_each(&mut f);
        }
        self.fusion_weights.iter_mut().for_each(&mut f);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each(|v| out.push(v));
        out
    }

    pub fn from_flat(config: &EncoderConfig, flat: &[f64]) -> Result<EncoderParams> {
        config.validate()?;
        let mut params = EncoderParams::zeros(config);
        if flat.len() != params.param_count() {
            return Err(Error::shape(format!(
                "{} flat values for {} parameters",
                flat.len(),
                params.param_count()
            )));
        }
        let mut idx = 0;
        params.for_each_mut(|v| {
            *v = flat[idx];
            idx += 1;
        });
        Ok(params)
    }
}

fn tanh_vec(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        *x = x.tanh();
    }
    v
}

/// Full activation record of one forward pass; the training loop
/// backpropagates through it.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub input: Vec<f64>,
    /// h_s after the stage nonlinearity.
    pub hidden: Vec<Vec<f64>>,
    /// tanh output inside each head.
    pub head_hidden: Vec<Vec<f64>>,
    pub stage_embeddings: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
}

pub(crate) fn forward_trace(params: &EncoderParams, x: &[f64]) -> Result<ForwardTrace> {
    let config = &params.config;
    if x.len() != config.input_dim {
        return Err(Error::shape(format!(
            "input has {} values, encoder expects {}",
            x.len(),
            config.input_dim
        )));
    }
    let mut hidden = Vec::with_capacity(config.num_stages);
    let mut head_hidden = Vec::with_capacity(config.num_stages);
    let mut stage_embeddings = Vec::with_capacity(config.num_stages);
    let mut state = x.to_vec();
    for (backbone, head) in params.backbone.iter().zip(&params.heads) {
        state = tanh_vec(backbone.apply(&state));
        let t = tanh_vec(head.hidden.apply(&state));
        let phi = head.output.apply(&t);
        hidden.push(state.clone());
        head_hidden.push(t);
        stage_embeddings.push(phi);
    }
    let mut fused = vec![0.0; config.embedding_dim];
    for (w, phi) in params.fusion_weights.iter().zip(&stage_embeddings) {
        for (f, p) in fused.iter_mut().zip(phi) {
            *f += w * p;
        }
    }
    Ok(ForwardTrace {
        input: x.to_vec(),
        hidden,
        head_hidden,
        stage_embeddings,
        fused,
    })
}

/// Runs the encoder on one input, reporting embeddings and exit costs.
pub fn forward(params: &EncoderParams, x: &[f64]) -> Result<MultiStageOutput> {
    let trace = forward_trace(params, x)?;
    let profile = params.config.cost_profile_unchecked();
    Ok(MultiStageOutput {
        stage_embeddings: trace.stage_embeddings,
        fused: trace.fused,
        cumulative_cost_at_stage: profile.cumulative,
        fusion_cost: profile.fusion,
    })
}

// ---------------------------------------------------------------------------
// Checkpoint format: a header line encoding the config, then one
// `name stage|floats` line per parameter group.
// ---------------------------------------------------------------------------

pub fn write_params(params: &EncoderParams, out: &mut impl Write) -> Result<()> {
    let c = &params.config;
    let widths: Vec<String> = c.backbone_widths.iter().map(|w| w.to_string()).collect();
    writeln!(
        out,
        "#encoder stages {} input {} widths {} hidden {} embed {}",
        c.num_stages,
        c.input_dim,
        widths.join(","),
        c.head_hidden_width,
        c.embedding_dim
    )?;
    let write_group = |out: &mut dyn Write, name: &str, stage: usize, vals: &[f64]| -> Result<()> {
        let mut line = format!("{name} {stage}|");
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v}"));
        }
        writeln!(out, "{line}")?;
        Ok(())
    };
    for (s, a) in params.backbone.iter().enumerate() {
        write_group(out, "backbone_weight", s + 1, a.weight.data())?;
        write_group(out, "backbone_bias", s + 1, &a.bias)?;
    }
    for (s, h) in params.heads.iter().enumerate() {
        write_group(out, "head_hidden_weight", s + 1, h.hidden.weight.data())?;
        write_group(out, "head_hidden_bias", s + 1, &h.hidden.bias)?;
        write_group(out, "head_output_weight", s + 1, h.output.weight.data())?;
        write_group(out, "head_output_bias", s + 1, &h.output.bias)?;
    }
    write_group(out, "fusion", 0, &params.fusion_weights)?;
    Ok(())
}

pub fn read_params(input: &mut impl Read) -> Result<EncoderParams> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing checkpoint header"))?;
    let header = header?;
    let config = parse_checkpoint_header(&header)?;
    let mut params = EncoderParams::zeros(&config);
    let mut fusion_seen = false;

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (meta, payload) = line
            .split_once('|')
            .ok_or_else(|| Error::parse(line_no, "missing '|' separator"))?;
        let mut meta_parts = meta.split_whitespace();
        let name = meta_parts.next().unwrap_or("");
        let stage: usize = meta_parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(line_no, "missing stage index"))?;
        let vals: Vec<f64> = payload
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("invalid float '{t}'")))
            })
            .collect::<Result<_>>()?;
        let fill = |target: &mut [f64]| -> Result<()> {
            if vals.len() != target.len() {
                return Err(Error::parse(
                    line_no,
                    format!("group '{name}' has {} value(s), expected {}", vals.len(), target.len()),
                ));
            }
            target.copy_from_slice(&vals);
            Ok(())
        };
        match name {
            "fusion" => {
                fill(&mut params.fusion_weights)?;
                fusion_seen = true;
            }
            _ => {
                if stage == 0 || stage > config.num_stages {
                    return Err(Error::parse(line_no, format!("stage {stage} out of range")));
                }
                let s = stage - 1;
                match name {
                    "backbone_weight" => fill(params.backbone[s].weight.data_mut())?,
                    "backbone_bias" => fill(&mut params.backbone[s].bias)?,
                    "head_hidden_weight" => fill(params.heads[s].hidden.weight.data_mut())?,
                    "head_hidden_bias" => fill(&mut params.heads[s].hidden.bias)?,
                    "head_output_weight" => fill(params.heads[s].output.weight.data_mut())?,
                    "head_output_bias" => fill(&mut params.heads[s].output.bias)?,
                    other => {
                        return Err(Error::parse(line_no, format!("unknown group '{other}'")))
                    }
                }
            }
        }
    }
    if !fusion_seen {
        return Err(Error::config("checkpoint is missing fusion weights"));
    }
    Ok(params)
}

fn parse_checkpoint_header(header: &str) -> Result<EncoderConfig> {
    let bad = |msg: String| Error::parse(1, msg);
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 11
        || tokens[0] != "#encoder"
        || tokens[1] != "stages"
        || tokens[3] != "input"
        || tokens[5] != "widths"
        || tokens[7] != "hidden"
        || tokens[9] != "embed"
    {
        return Err(bad(format!("malformed checkpoint header '{header}'")));
    }
    let parse_usize = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| bad(format!("invalid integer '{t}'")))
    };
    let config = EncoderConfig {
        num_stages: parse_usize(tokens[2])?,
        input_dim: parse_usize(tokens[4])?,
        backbone_widths: tokens[6]
            .split(',')
            .map(parse_usize)
            .collect::<Result<_>>()?,
        head_hidden_width: parse_usize(tokens[8])?,
        embedding_dim: parse_usize(tokens[10])?,
    };
    config.validate()?;
    Ok(config)
}

pub fn save_params(params: &EncoderParams, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_params(params, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<EncoderParams> {
    let mut file = File::open(path)?;
    read_params(&mut file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_fusion_sums_to_one() {
        let config = EncoderConfig::new(8);
        let a = init_params(&config, 13).unwrap();
        let b = init_params(&config, 13).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.fusion_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_input_gives_finite_embeddings() {
        let config = EncoderConfig::new(8);
        let params = init_params(&config, 1).unwrap();
        let out = forward(&params, &vec![0.0; 8]).unwrap();
        for phi in &out.stage_embeddings {
            assert!(phi.iter().all(|v| v.is_finite()));
        }
        assert!(out.fused.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn degenerate_fusion_weights_select_stage_one() {
        let config = EncoderConfig::with_stages(6, 2);
        let mut params = init_params(&config, 2).unwrap();
        params.fusion_weights = vec![1.0, 0.0];
        let out = forward(&params, &[0.5, -0.25, 1.0, 0.0, 2.0, -1.0]).unwrap();
        assert_eq!(out.fused, out.stage_embeddings[0]);
    }

    #[test]
    fn fusion_is_linear_in_the_weights() {
        let config = EncoderConfig::new(8);
        let params = init_params(&config, 5).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let base = forward(&params, &x).unwrap();
        let mut scaled = params.clone();
        for w in scaled.fusion_weights.iter_mut() {
            *w *= 2.5;
        }
        let out = forward(&scaled, &x).unwrap();
        for (a, b) in out.fused.iter().zip(&base.fused) {
            assert!((a - 2.5 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_counted_cost_for_small_config() {
        // input 8 -> widths (8, 8), head 8 -> 4 -> 2.
        let config = EncoderConfig {
            num_stages: 2,
            input_dim: 8,
            backbone_widths: vec![8, 8],
            head_hidden_width: 4,
            embedding_dim: 2,
        };
        let profile = cost_profile(&config).unwrap();
        assert_eq!(profile.cumulative[0], 104.0); // 64 + (32 + 8)
        assert_eq!(profile.cumulative[1], 64.0 + 64.0 + 40.0);
        // fusion: both backbones + both heads + S*d
        assert_eq!(profile.fusion, 128.0 + 80.0 + 4.0);
    }

    #[test]
    fn cost_profile_matches_forward_and_increases() {
        let config = EncoderConfig::new(12);
        let params = init_params(&config, 3).unwrap();
        let profile = cost_profile(&config).unwrap();
        let out = forward(&params, &vec![0.1; 12]).unwrap();
        assert_eq!(out.cumulative_cost_at_stage, profile.cumulative);
        assert_eq!(out.fusion_cost, profile.fusion);
        for w in profile.cumulative.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(profile.fusion >= *profile.cumulative.last().unwrap());
    }

    #[test]
    fn backbone_cost_terms_follow_the_product_rule() {
        let base = EncoderConfig {
            num_stages: 3,
            input_dim: 6,
            backbone_widths: vec![4, 5, 7],
            head_hidden_width: 8,
            embedding_dim: 4,
        };
        let doubled = EncoderConfig {
            backbone_widths: vec![8, 10, 14],
            ..base.clone()
        };
        // Recompute per-stage backbone terms straight from the m*n rule.
        let term = |cfg: &EncoderConfig, s: usize| {
            let fan_in = if s == 0 { cfg.input_dim } else { cfg.backbone_widths[s - 1] };
            (fan_in * cfg.backbone_widths[s]) as f64
        };
        for s in 0..3 {
            let factor = if s == 0 { 2.0 } else { 4.0 };
            assert_eq!(term(&doubled, s), factor * term(&base, s));
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let config = EncoderConfig::new(8);
        let params = init_params(&config, 0).unwrap();
        let err = forward(&params, &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn non_monotone_cost_config_is_rejected() {
        // A sharply narrowing stage makes the next exit cheaper than the
        // previous one because its head shrinks more than the backbone adds.
        let config = EncoderConfig {
            num_stages: 2,
            input_dim: 4,
            backbone_widths: vec![64, 1],
            head_hidden_width: 32,
            embedding_dim: 2,
        };
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("cumulative cost must increase"), "{err}");
    }

    #[test]
    fn checkpoint_round_trips() {
        let config = EncoderConfig::new(10);
        let params = init_params(&config, 42).unwrap();
        let mut buf = Vec::new();
        write_params(&params, &mut buf).unwrap();
        let back = read_params(&mut buf.as_slice()).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn flatten_round_trips() {
        let config = EncoderConfig::new(6);
        let params = init_params(&config, 9).unwrap();
        let flat = params.flatten();
        let back = EncoderParams::from_flat(&config, &flat).unwrap();
        assert_eq!(params, back);
    }
}
