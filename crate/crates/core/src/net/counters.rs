//! Parameter and FLOP tallies. One multiply-add counts as 2 FLOPs.

use super::spec::{NetworkSpec, XConvLayerSpec};
use crate::diff::MlpSpec;

fn dense_params(mlp: &MlpSpec) -> u64 {
    mlp.layers().map(|(i, o)| ((i + 1) * o) as u64).sum()
}

fn dense_flops(mlp: &MlpSpec, rows: usize) -> u64 {
    mlp.layers().map(|(i, o)| 2 * (i * o) as u64).sum::<u64>() * rows as u64
}

fn layer_params(spec: &NetworkSpec, layer: &XConvLayerSpec, c_in: usize) -> u64 {
    let (d, act) = (spec.coord_dims(), spec.activation);
    let per_branch = dense_params(&layer.delta_mlp(d, act))
        + dense_params(&layer.xform_mlp(d, act))
        + dense_params(&layer.aggregate_mlp(c_in, act));
    per_branch * layer.branches() as u64
}

fn layer_flops(spec: &NetworkSpec, layer: &XConvLayerSpec, c_in: usize, m: usize) -> u64 {
    let (d, act, k) = (spec.coord_dims(), spec.activation, layer.k);
    let c_star = layer.c_star(c_in) as u64;
    let per_branch = dense_flops(&layer.delta_mlp(d, act), m * k)
        + dense_flops(&layer.xform_mlp(d, act), m)
        + 2 * (k * k) as u64 * c_star * m as u64
        + dense_flops(&layer.aggregate_mlp(c_in, act), m);
    per_branch * layer.branches() as u64
}

/// Trainable scalars: Σ (I + 1)·O over every dense layer.
pub fn count_params(spec: &NetworkSpec) -> u64 {
    if spec.encoder.is_empty() && spec.head_widths.is_empty() && spec.pp_widths.is_empty() {
        return 0;
    }
    let plan = spec.channel_plan();
    let mut total = spec.pp_mlp().map_or(0, |m| dense_params(&m));
    for (l, layer) in spec.encoder.iter().enumerate() {
        total += layer_params(spec, layer, plan.level_widths[l]);
    }
    for (j, layer) in spec.decoder.iter().enumerate() {
        total += layer_params(spec, layer, plan.decoder_in[j]);
    }
    if !spec.head_widths.is_empty() {
        total += dense_params(&spec.head_mlp(plan.head_in));
    }
    total
}

/// FLOPs of one forward pass on a cloud of `n` points: dense layers at their
/// row multiplicity plus 2·K²·C_* per cluster for the X·F_* product.
pub fn count_flops(spec: &NetworkSpec, n: usize) -> u64 {
    if spec.encoder.is_empty() && spec.head_widths.is_empty() && spec.pp_widths.is_empty() {
        return 0;
    }
    let plan = spec.channel_plan();
    let mut total = spec.pp_mlp().map_or(0, |m| dense_flops(&m, n));
    for (l, layer) in spec.encoder.iter().enumerate() {
        total += layer_flops(spec, layer, plan.level_widths[l], layer.n_rep);
    }
    let last = spec.decoder.len().saturating_sub(1);
    for (j, layer) in spec.decoder.iter().enumerate() {
        let m = if j == last { n } else { layer.n_rep };
        total += layer_flops(spec, layer, plan.decoder_in[j], m);
    }
    if !spec.head_widths.is_empty() {
        total += dense_flops(&spec.head_mlp(plan.head_in), n);
    }
    total
}
