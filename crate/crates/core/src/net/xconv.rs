//! The X-Conv operator.
//!
//! For every representative point (RP) and its K grouped neighbors:
//!
//! 1. local coordinates `P′ = p − p_rp`,
//! 2. `F_δ = MLP_δ(P′)` applied per neighbor,
//! 3. `F_* = [F_δ | F]`,
//! 4. `X = MLP(P′)` reshaped to K×K,
//! 5. `F_X = X · F_*`,
//! 6. a dense map over the flattened K×C_* block aggregates onto the RP.

use rand::seq::SliceRandom;

use super::spec::{GroupingKind, XConvLayerSpec};
use crate::diff::{mlp_forward, Activation, Array, MlpSpec, Scalar, Tape, Var};
use crate::pointcloud::{
    ball_group, ball_query, farthest_point_sampling, knn_group, knn_query, localize_query, Coords,
    Grouping,
};
use crate::{Error, Result, Rng};

/// Shared MLP over local coordinates (M×K×D → M×K×C_δ).
pub fn lift_delta<T: Scalar>(
    tape: &mut Tape<'_, T>,
    local: Var,
    prefix: &str,
    mlp: &MlpSpec,
) -> Result<Var> {
    mlp_forward(tape, local, &format!("{prefix}.delta"), mlp)
}

/// `[F_δ | F_in]` on the channel axis.
pub fn build_fstar<T: Scalar>(tape: &mut Tape<'_, T>, f_delta: Var, f_in: Var) -> Result<Var> {
    tape.concat(f_delta, f_in)
}

/// One K×K matrix per cluster from its flattened local coordinates.
pub fn xtransform<T: Scalar>(
    tape: &mut Tape<'_, T>,
    local: Var,
    prefix: &str,
    mlp: &MlpSpec,
) -> Result<Var> {
    let shape = tape.shape(local).to_vec();
    if shape.len() != 3 {
        return Err(Error::shape("xtransform", "[M, K, D]", format!("{shape:?}")));
    }
    let (m, k, d) = (shape[0], shape[1], shape[2]);
    if mlp.input() != k * d || mlp.output() != k * k {
        return Err(Error::shape("xtransform", format!("mlp {}→{}", k * d, k * k), format!("{:?}", mlp.widths)));
    }
    let flat = tape.reshape(local, &[m, k * d])?;
    let x = mlp_forward(tape, flat, &format!("{prefix}.xform"), mlp)?;
    tape.reshape(x, &[m, k, k])
}

/// `F_X = X · F_*` per cluster.
pub fn apply_xtransform<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, f_star: Var) -> Result<Var> {
    tape.batched_matmul(x, f_star)
}

/// Dense map from each flattened K×C_* cluster to C_out, plus activation.
pub fn xconv_aggregate<T: Scalar>(
    tape: &mut Tape<'_, T>,
    f_x: Var,
    prefix: &str,
    mlp: &MlpSpec,
) -> Result<Var> {
    let shape = tape.shape(f_x).to_vec();
    if shape.len() != 3 {
        return Err(Error::shape("xconv_aggregate", "[M, K, C]", format!("{shape:?}")));
    }
    let flat = tape.reshape(f_x, &[shape[0], shape[1] * shape[2]])?;
    mlp_forward(tape, flat, &format!("{prefix}.agg"), mlp)
}

/// Inputs of one X-Conv branch.
pub struct BranchInput<'a> {
    pub source: &'a Coords,
    /// N×C_in feature node of the source cloud.
    pub features: Var,
    pub queries: &'a Coords,
    pub grouping: &'a Grouping,
    /// Local coordinates are divided by this.
    pub scale: f64,
}

/// Localize, lift, X-transform and aggregate one grouping; returns M×c_out.
pub fn xconv_branch<T: Scalar>(
    tape: &mut Tape<'_, T>,
    input: &BranchInput<'_>,
    spec: &XConvLayerSpec,
    prefix: &str,
    act: Activation,
) -> Result<Var> {
    let g = input.grouping;
    let (m, k, d) = (g.num_rps(), g.k, input.source.dim());
    if k != spec.k {
        return Err(Error::shape("xconv", spec.k, k));
    }
    let c_in = *tape.shape(input.features).last().unwrap_or(&0);
    let mut local = localize_query(input.source, input.queries, g);
    let inv = 1.0 / input.scale;
    local.iter_mut().for_each(|v| *v *= inv);
    let local = tape.constant(Array::from_f64(&[m, k, d], &local)?);

    let f_delta = lift_delta(tape, local, prefix, &spec.delta_mlp(d, act))?;
    let f_in = tape.gather(input.features, &g.members, &[m, k])?;
    let f_star = build_fstar(tape, f_delta, f_in)?;
    let x = xtransform(tape, local, prefix, &spec.xform_mlp(d, act))?;
    let f_x = apply_xtransform(tape, x, f_star)?;
    xconv_aggregate(tape, f_x, prefix, &spec.aggregate_mlp(c_in, act))
}

/// Knobs that only diagnostics touch.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// FPS start index (0 by default).
    pub fps_start: usize,
    /// Shuffle the member order inside every cluster with this seed.
    pub shuffle_members: Option<u64>,
}

fn shuffle_rows(g: &mut Grouping, seed: u64) {
    let mut rng = crate::rng_from_seed(seed);
    let k = g.k;
    for row in g.members.chunks_mut(k) {
        row.shuffle(&mut rng);
    }
}

fn branch_prefix(prefix: &str, b: usize) -> String {
    format!("{prefix}.b{b}")
}

/// Downsampling X-Conv layer: FPS picks `n_rep` RPs, every branch groups and
/// convolves, outputs are concatenated. Returns the RP indices and M×C_total.
pub fn xconv_layer<T: Scalar>(
    tape: &mut Tape<'_, T>,
    coords: &Coords,
    features: Var,
    spec: &XConvLayerSpec,
    prefix: &str,
    act: Activation,
    rng: &mut Rng,
    opts: &ForwardOptions,
) -> Result<(Vec<usize>, Var)> {
    if spec.n_rep > coords.len() {
        return Err(Error::invalid(format!("n_rep {} exceeds {} points", spec.n_rep, coords.len())));
    }
    let rps = farthest_point_sampling(coords, spec.n_rep, opts.fps_start.min(coords.len() - 1))?;
    let queries = coords.select(&rps);
    let mut out: Option<Var> = None;
    for b in 0..spec.branches() {
        let mut grouping = match spec.grouping {
            GroupingKind::Knn => knn_group(coords, &rps, spec.k)?,
            GroupingKind::Ball => ball_group(coords, &rps, spec.k, spec.radii[b], rng)?,
        };
        if let Some(seed) = opts.shuffle_members {
            shuffle_rows(&mut grouping, crate::derive_seed(seed, b as u64));
        }
        let input = BranchInput {
            source: coords,
            features,
            queries: &queries,
            grouping: &grouping,
            scale: spec.local_scale(b),
        };
        let y = xconv_branch(tape, &input, spec, &branch_prefix(prefix, b), act)?;
        out = Some(match out {
            Some(prev) => tape.concat(prev, y)?,
            None => y,
        });
    }
    Ok((rps, out.expect("validated spec has at least one branch")))
}

/// Upsampling X-Conv layer: every point of the higher-resolution `target`
/// cloud becomes an RP whose neighbors come from the low-resolution `source`.
/// `source_in_target[i]` is the target index of source point `i`. The result
/// is concatenated with the `skip` features of the target cloud.
#[allow(clippy::too_many_arguments)]
pub fn decode_layer<T: Scalar>(
    tape: &mut Tape<'_, T>,
    source: &Coords,
    source_features: Var,
    source_in_target: &[usize],
    target: &Coords,
    skip: Var,
    spec: &XConvLayerSpec,
    prefix: &str,
    act: Activation,
    rng: &mut Rng,
    opts: &ForwardOptions,
) -> Result<Var> {
    if spec.n_rep != target.len() {
        return Err(Error::invalid(format!(
            "decoder resolution mismatch: layer expects {} points, encoder recorded {}",
            spec.n_rep,
            target.len()
        )));
    }
    if source_in_target.len() != source.len() {
        return Err(Error::shape("decode_layer", source.len(), source_in_target.len()));
    }
    let mut own = vec![None; target.len()];
    for (i, &t) in source_in_target.iter().enumerate() {
        let slot = own
            .get_mut(t)
            .ok_or_else(|| Error::invalid(format!("source point maps to target {t} out of range")))?;
        *slot = Some(i);
    }
    let mut out: Option<Var> = None;
    for b in 0..spec.branches() {
        let mut grouping = match spec.grouping {
            GroupingKind::Knn => knn_query(source, target, &own, spec.k)?,
            GroupingKind::Ball => ball_query(source, target, &own, spec.k, spec.radii[b], rng)?,
        };
        if let Some(seed) = opts.shuffle_members {
            shuffle_rows(&mut grouping, crate::derive_seed(seed, 1000 + b as u64));
        }
        let input = BranchInput {
            source,
            features: source_features,
            queries: target,
            grouping: &grouping,
            scale: spec.local_scale(b),
        };
        let y = xconv_branch(tape, &input, spec, &branch_prefix(prefix, b), act)?;
        out = Some(match out {
            Some(prev) => tape.concat(prev, y)?,
            None => y,
        });
    }
    let up = out.expect("validated spec has at least one branch");
    tape.concat(up, skip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{init_mlp, ParamStore};
    use crate::rng_from_seed;

    #[test]
    fn identical_clusters_give_identical_outputs() {
        let spec = XConvLayerSpec::knn(2, 2, 3, 4);
        let mut params = ParamStore::<f64>::new();
        let mut rng = rng_from_seed(4);
        let act = Activation::Elu;
        init_mlp(&mut params, "l.b0.delta", &spec.delta_mlp(2, act), &mut rng).unwrap();
        init_mlp(&mut params, "l.b0.xform", &spec.xform_mlp(2, act), &mut rng).unwrap();
        init_mlp(&mut params, "l.b0.agg", &spec.aggregate_mlp(1, act), &mut rng).unwrap();
        // Two well separated pairs with the same shape and features.
        let coords = Coords::from_rows(&[[0.0, 0.0], [1.0, 0.5], [10.0, 0.0], [11.0, 0.5]]);
        let grouping = knn_group(&coords, &[0, 2], 2).unwrap();
        let mut tape = Tape::new(&params);
        let feats = tape.constant(Array::from_f64(&[4, 1], &[0.5, -1.0, 0.5, -1.0]).unwrap());
        let input = BranchInput {
            source: &coords,
            features: feats,
            queries: &coords.select(&[0, 2]),
            grouping: &grouping,
            scale: 1.0,
        };
        let out = xconv_branch(&mut tape, &input, &spec, "l.b0", act).unwrap();
        let v = tape.value(out).data();
        assert_eq!(v.len(), 8);
        assert_eq!(&v[..4], &v[4..]);
    }

    #[test]
    fn aggregate_scalar_passthrough() {
        let mut params = ParamStore::<f64>::new();
        params.insert("p.agg.0.w", Array::from_f64(&[1, 1], &[1.0]).unwrap()).unwrap();
        params.insert("p.agg.0.b", Array::zeros(&[1])).unwrap();
        let mut tape = Tape::new(&params);
        let fx = tape.constant(Array::from_f64(&[1, 1, 1], &[2.5]).unwrap());
        let mlp = MlpSpec::new(vec![1, 1], Activation::None, true);
        let y = xconv_aggregate(&mut tape, fx, "p", &mlp).unwrap();
        assert_eq!(tape.value(y).data(), &[2.5]);
        assert_eq!(tape.shape(y), &[1, 1]);
    }

    #[test]
    fn identity_x_keeps_fstar() {
        let params = ParamStore::<f64>::new();
        let mut tape = Tape::new(&params);
        let eye = tape.constant(Array::from_f64(&[1, 2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap());
        let f = tape.constant(Array::from_f64(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let fx = apply_xtransform(&mut tape, eye, f).unwrap();
        assert_eq!(tape.value(fx), tape.value(f));
    }

    #[test]
    fn fstar_without_features_is_fdelta() {
        let params = ParamStore::<f64>::new();
        let mut tape = Tape::new(&params);
        let fd = tape.constant(Array::from_f64(&[1, 2, 3], &[1.0; 6]).unwrap());
        let none = tape.constant(Array::zeros(&[1, 2, 0]));
        assert_eq!(build_fstar(&mut tape, fd, none).unwrap(), fd);
        let two = tape.constant(Array::zeros(&[1, 2, 2]));
        let fs = build_fstar(&mut tape, fd, two).unwrap();
        assert_eq!(tape.shape(fs), &[1, 2, 5]);
    }
}
