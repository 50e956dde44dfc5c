//! Batch-hard soft-margin triplet loss and its analytic gradient.
//!
//! For every anchor the loss takes the furthest same-identity distance
//! (self included; it contributes 0) minus the nearest different-identity
//! distance, through softplus: `ln(1 + exp(maxpos - minneg))`. There is no
//! margin hyperparameter. Ties in the max/min pick the lowest row index,
//! and a zero distance gets a zero subgradient.

use crate::encoder::{forward_trace, EncoderParams};
use crate::error::{Error, Result};
use crate::linalg::{dot, euclidean, Matrix};

/// A training batch of `identities` groups with `samples_per_identity`
/// rows each, laid out contiguously by group.
#[derive(Debug, Clone)]
pub struct PkBatch {
    features: Matrix,
    labels: Vec<u32>,
    identities: usize,
    samples_per_identity: usize,
}

impl PkBatch {
    pub fn new(
        features: Matrix,
        labels: Vec<u32>,
        identities: usize,
        samples_per_identity: usize,
    ) -> Result<Self> {
        if identities < 2 {
            return Err(Error::config("PK batch needs at least 2 identities"));
        }
        if samples_per_identity < 2 {
            return Err(Error::config("PK batch needs at least 2 samples per identity"));
        }
        let rows = identities * samples_per_identity;
        if features.rows() != rows || labels.len() != rows {
            return Err(Error::shape(format!(
                "PK batch expects {} rows, got {} features and {} labels",
                rows,
                features.rows(),
                labels.len()
            )));
        }
        let mut group_labels = Vec::with_capacity(identities);
        for g in 0..identities {
            let base = g * samples_per_identity;
            let label = labels[base];
            for offset in 1..samples_per_identity {
                if labels[base + offset] != label {
                    return Err(Error::config(format!(
                        "group {g} mixes labels {label} and {}",
                        labels[base + offset]
                    )));
                }
            }
            if group_labels.contains(&label) {
                return Err(Error::config(format!("label {label} appears in two groups")));
            }
            group_labels.push(label);
        }
        Ok(PkBatch {
            features,
            labels,
            identities,
            samples_per_identity,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn identities(&self) -> usize {
        self.identities
    }

    pub fn samples_per_identity(&self) -> usize {
        self.samples_per_identity
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Symmetric matrix of Euclidean distances between embedding rows.
pub fn pairwise_distances(embeddings: &Matrix) -> Matrix {
    let n = embeddings.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = euclidean(embeddings.row(i), embeddings.row(j));
            d.row_mut(i)[j] = dist;
            d.row_mut(j)[i] = dist;
        }
    }
    d
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn validate_label_groups(labels: &[u32]) -> Result<()> {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for &l in labels {
        match counts.iter_mut().find(|(label, _)| *label == l) {
            Some((_, c)) => *c += 1,
            None => counts.push((l, 1)),
        }
    }
    if counts.len() < 2 {
        return Err(Error::config("batch-hard loss needs at least 2 identities"));
    }
    for (label, count) in counts {
        if count < 2 {
            return Err(Error::config(format!(
                "label {label} has a single sample; batch-hard mining needs at least 2"
            )));
        }
    }
    Ok(())
}

struct MinedTriplets {
    furthest_pos: Vec<usize>,
    nearest_neg: Vec<usize>,
    z: Vec<f64>,
}

fn mine(distances: &Matrix, labels: &[u32]) -> MinedTriplets {
    let n = labels.len();
    let mut furthest_pos = Vec::with_capacity(n);
    let mut nearest_neg = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for anchor in 0..n {
        let row = distances.row(anchor);
        let mut max_pos = f64::NEG_INFINITY;
        let mut max_idx = anchor;
        let mut min_neg = f64::INFINITY;
        let mut min_idx = anchor;
        for j in 0..n {
            if labels[j] == labels[anchor] {
                if row[j] > max_pos {
                    max_pos = row[j];
                    max_idx = j;
                }
            } else if row[j] < min_neg {
                min_neg = row[j];
                min_idx = j;
            }
        }
        furthest_pos.push(max_idx);
        nearest_neg.push(min_idx);
        z.push(max_pos - min_neg);
    }
    MinedTriplets {
        furthest_pos,
        nearest_neg,
        z,
    }
}

/// Batch-hard soft-margin triplet loss over one embedding set.
pub fn batch_hard_triplet_loss(embeddings: &Matrix, labels: &[u32]) -> Result<f64> {
    Ok(batch_hard_loss_and_grad_impl(embeddings, labels, false)?.0)
}

/// Loss plus the gradient with respect to the embedding rows.
pub(crate) fn batch_hard_loss_and_grad(
    embeddings: &Matrix,
    labels: &[u32],
) -> Result<(f64, Matrix)> {
    let (loss, grad) = batch_hard_loss_and_grad_impl(embeddings, labels, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn batch_hard_loss_and_grad_impl(
    embeddings: &Matrix,
    labels: &[u32],
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    if embeddings.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} embedding rows for {} labels",
            embeddings.rows(),
            labels.len()
        )));
    }
    validate_label_groups(labels)?;
    let distances = pairwise_distances(embeddings);
    let mined = mine(&distances, labels);
    let loss: f64 = mined.z.iter().map(|&z| softplus(z)).sum();
    if !want_grad {
        return Ok((loss, None));
    }

    let n = embeddings.rows();
    let dim = embeddings.cols();
    let mut grad = Matrix::zeros(n, dim);
    for anchor in 0..n {
        let weight = sigmoid(mined.z[anchor]);
        let pos = mined.furthest_pos[anchor];
        let pos_dist = distances.row(anchor)[pos];
        if pos_dist > 0.0 {
            let scale = weight / pos_dist;
            for c in 0..dim {
                let diff = embeddings.row(anchor)[c] - embeddings.row(pos)[c];
                grad.row_mut(anchor)[c] += scale * diff;
                grad.row_mut(pos)[c] -= scale * diff;
            }
        }
        let neg = mined.nearest_neg[anchor];
        let neg_dist = distances.row(anchor)[neg];
        if neg_dist > 0.0 {
            let scale = weight / neg_dist;
            for c in 0..dim {
                let diff = embeddings.row(anchor)[c] - embeddings.row(neg)[c];
                grad.row_mut(anchor)[c] -= scale * diff;
                grad.row_mut(neg)[c] += scale * diff;
            }
        }
    }
    Ok((loss, Some(grad)))
}

fn embed_batch(params: &EncoderParams, batch: &PkBatch) -> Result<(Vec<Matrix>, Matrix)> {
    let stages = params.config.num_stages;
    let dim = params.config.embedding_dim;
    let n = batch.len();
    let mut stage_embs = vec![Matrix::zeros(n, dim); stages];
    let mut fused = Matrix::zeros(n, dim);
    for row in 0..n {
        let trace = forward_trace(params, batch.features().row(row))?;
        for (s, phi) in trace.stage_embeddings.iter().enumerate() {
            stage_embs[s].row_mut(row).copy_from_slice(phi);
        }
        fused.row_mut(row).copy_from_slice(&trace.fused);
    }
    Ok((stage_embs, fused))
}

/// Loss of each supervised embedding set: one per stage plus the fusion.
pub fn stage_losses(params: &EncoderParams, batch: &PkBatch) -> Result<(Vec<f64>, f64)> {
    let (stage_embs, fused) = embed_batch(params, batch)?;
    let per_stage = stage_embs
        .iter()
        .map(|e| batch_hard_triplet_loss(e, batch.labels()))
        .collect::<Result<Vec<f64>>>()?;
    let fusion = batch_hard_triplet_loss(&fused, batch.labels())?;
    Ok((per_stage, fusion))
}

/// Deep-supervision objective: sum of per-stage losses plus the fusion
/// loss. With `deep_supervision` off only the fusion term remains.
pub fn total_loss(params: &EncoderParams, batch: &PkBatch, deep_supervision: bool) -> Result<f64> {
    let (per_stage, fusion) = stage_losses(params, batch)?;
    if deep_supervision {
        Ok(per_stage.iter().sum::<f64>() + fusion)
    } else {
        Ok(fusion)
    }
}

/// Analytic gradient of `total_loss` with respect to every parameter.
/// Returns the loss value and a same-shaped parameter container holding
/// the gradient.
pub fn loss_gradient(
    params: &EncoderParams,
    batch: &PkBatch,
    deep_supervision: bool,
) -> Result<(f64, EncoderParams)> {
    let config = &params.config;
    let stages = config.num_stages;
    let dim = config.embedding_dim;
    let n = batch.len();

    let mut traces = Vec::with_capacity(n);
    let mut stage_embs = vec![Matrix::zeros(n, dim); stages];
    let mut fused = Matrix::zeros(n, dim);
    for row in 0..n {
        let trace = forward_trace(params, batch.features().row(row))?;
        for (s, phi) in trace.stage_embeddings.iter().enumerate() {
            stage_embs[s].row_mut(row).copy_from_slice(phi);
        }
        fused.row_mut(row).copy_from_slice(&trace.fused);
        traces.push(trace);
    }

    let mut loss = 0.0;
    let mut stage_grads: Vec<Option<Matrix>> = vec![None; stages];
    if deep_supervision {
        for s in 0..stages {
            let (term, grad) = batch_hard_loss_and_grad(&stage_embs[s], batch.labels())?;
            loss += term;
            stage_grads[s] = Some(grad);
        }
    }
    let (fusion_term, fusion_grad) = batch_hard_loss_and_grad(&fused, batch.labels())?;
    loss += fusion_term;

    let mut grads = params.zeros_like();
    for (row, trace) in traces.iter().enumerate() {
        let g_fused = fusion_grad.row(row);
        // Fusion weights see only the fusion term.
        for s in 0..stages {
            grads.fusion_weights[s] += dot(g_fused, &trace.stage_embeddings[s]);
        }
        // Backpropagate per stage, deepest first, carrying the gradient
        // that flows back through the backbone chain.
        let mut carried: Vec<f64> = Vec::new();
        for s in (0..stages).rev() {
            let mut g_phi = vec![0.0; dim];
            if let Some(sg) = &stage_grads[s] {
                g_phi.copy_from_slice(sg.row(row));
            }
            let w = params.fusion_weights[s];
            for (g, f) in g_phi.iter_mut().zip(g_fused) {
                *g += w * f;
            }

            // Head: phi = U tanh(V h + c) + d.
            let head = &params.heads[s];
            let t = &trace.head_hidden[s];
            let g_head = &mut grads.heads[s];
            g_head.output.weight.add_outer(&g_phi, t);
            for (b, g) in g_head.output.bias.iter_mut().zip(&g_phi) {
                *b += g;
            }
            let g_t = head.output.weight.matvec_transpose(&g_phi);
            let g_u: Vec<f64> = g_t
                .iter()
                .zip(t)
                .map(|(g, t)| g * (1.0 - t * t))
                .collect();
            let h = &trace.hidden[s];
            g_head.hidden.weight.add_outer(&g_u, h);
            for (b, g) in g_head.hidden.bias.iter_mut().zip(&g_u) {
                *b += g;
            }
            let mut g_h = head.hidden.weight.matvec_transpose(&g_u);

            // Gradient arriving from the next backbone stage.
            if !carried.is_empty() {
                for (a, c) in g_h.iter_mut().zip(&carried) {
                    *a += c;
                }
            }

            // Backbone: h_s = tanh(A h_prev + b).
            let g_a: Vec<f64> = g_h
                .iter()
                .zip(h)
                .map(|(g, h)| g * (1.0 - h * h))
                .collect();
            let prev: &[f64] = if s == 0 {
                &trace.input
            } else {
                &trace.hidden[s - 1]
            };
            grads.backbone[s].weight.add_outer(&g_a, prev);
            for (b, g) in grads.backbone[s].bias.iter_mut().zip(&g_a) {
                *b += g;
            }
            carried = params.backbone[s].weight.matvec_transpose(&g_a);
        }
    }

    Ok((loss, grads))
}
