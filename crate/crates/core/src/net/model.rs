use super::spec::NetworkSpec;
use super::xconv::{decode_layer, xconv_layer, ForwardOptions};
use crate::diff::{init_mlp, mlp_forward, Array, ParamStore, Scalar, Tape, Var};
use crate::pointcloud::{Coords, Label, PointCloud};
use crate::{Error, Result, Rng};

const PP: &str = "pp";
const HEAD: &str = "head";

fn enc_prefix(l: usize) -> String {
    format!("enc.{l}")
}

fn dec_prefix(l: usize) -> String {
    format!("dec.{l}")
}

/// Allocates every trainable array of `spec` (Glorot weights, zero biases).
pub fn init_params<T: Scalar>(spec: &NetworkSpec, rng: &mut Rng) -> Result<ParamStore<T>> {
    spec.validate()?;
    let plan = spec.channel_plan();
    let act = spec.activation;
    let d = spec.coord_dims();
    let mut store = ParamStore::new();
    if let Some(pp) = spec.pp_mlp() {
        init_mlp(&mut store, PP, &pp, rng)?;
    }
    let layers = spec
        .encoder
        .iter()
        .enumerate()
        .map(|(l, s)| (enc_prefix(l), s, plan.level_widths[l]))
        .chain(
            spec.decoder
                .iter()
                .enumerate()
                .map(|(l, s)| (dec_prefix(l), s, plan.decoder_in[l])),
        );
    for (prefix, layer, c_in) in layers {
        for b in 0..layer.branches() {
            let p = format!("{prefix}.b{b}");
            init_mlp(&mut store, &format!("{p}.delta"), &layer.delta_mlp(d, act), rng)?;
            init_mlp(&mut store, &format!("{p}.xform"), &layer.xform_mlp(d, act), rng)?;
            init_mlp(&mut store, &format!("{p}.agg"), &layer.aggregate_mlp(c_in, act), rng)?;
        }
    }
    init_mlp(&mut store, HEAD, &spec.head_mlp(plan.head_in), rng)?;
    Ok(store)
}

/// Shared pre-processing MLP over (x, y, v_r, sigma) per detection.
pub fn preprocess_features<T: Scalar>(
    tape: &mut Tape<'_, T>,
    pc: &PointCloud,
    spec: &NetworkSpec,
) -> Result<Var> {
    let mlp = spec
        .pp_mlp()
        .ok_or_else(|| Error::invalid("pre-processing network is disabled in this spec"))?;
    let fields = spec.input_layout.raw_fields();
    let raw = pc.scaled_fields(&fields, &spec.input_layout);
    let x = tape.constant(Array::from_f64(&[pc.len(), fields.len()], &raw)?);
    mlp_forward(tape, x, PP, &mlp)
}

/// One recorded encoder resolution.
struct Level {
    coords: Coords,
    features: Var,
    /// Indices of this level's points in the previous level.
    picked: Vec<usize>,
}

/// Records the full forward pass on `tape` and returns the N×2 logits node.
pub fn forward_tape<T: Scalar>(
    tape: &mut Tape<'_, T>,
    pc: &PointCloud,
    spec: &NetworkSpec,
    rng: &mut Rng,
    opts: &ForwardOptions,
) -> Result<Var> {
    spec.validate()?;
    let n = pc.len();
    if n != spec.input_points {
        return Err(Error::invalid(format!(
            "cloud has {n} points, network expects {} (normalize first)",
            spec.input_points
        )));
    }
    let act = spec.activation;
    let layout = &spec.input_layout;
    let features = if spec.pp_enabled() {
        preprocess_features(tape, pc, spec)?
    } else {
        let f = pc.features(layout);
        tape.constant(Array::from_f64(&[n, layout.feature_dims()], &f)?)
    };
    let mut levels = vec![Level {
        coords: pc.coords(layout),
        features,
        picked: Vec::new(),
    }];
    for (l, layer) in spec.encoder.iter().enumerate() {
        let prev = levels.last().unwrap();
        let (rps, out) = xconv_layer(tape, &prev.coords, prev.features, layer, &enc_prefix(l), act, rng, opts)?;
        let coords = prev.coords.select(&rps);
        levels.push(Level {
            coords,
            features: out,
            picked: rps,
        });
    }

    let depth = spec.encoder.len();
    let mut current = levels[depth].features;
    for (j, layer) in spec.decoder.iter().enumerate() {
        let source = &levels[depth - j];
        let target = &levels[depth - j - 1];
        debug_assert_eq!(source.coords.len(), source.picked.len());
        current = decode_layer(
            tape,
            &source.coords,
            current,
            &source.picked,
            &target.coords,
            target.features,
            layer,
            &dec_prefix(j),
            act,
            rng,
            opts,
        )?;
    }
    let plan = spec.channel_plan();
    mlp_forward(tape, current, HEAD, &spec.head_mlp(plan.head_in))
}

/// N×2 logits for (vehicle, pedestrian).
pub fn forward<T: Scalar>(
    pc: &PointCloud,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    rng: &mut Rng,
) -> Result<Array<T>> {
    let mut tape = Tape::new(params);
    let out = forward_tape(&mut tape, pc, spec, rng, &ForwardOptions::default())?;
    Ok(tape.value(out).clone())
}

/// Labels from N×2 logits: Static unless some sigmoid score exceeds the
/// threshold, otherwise the higher-scoring class (Vehicle on ties).
pub fn decide(logits: &[f64], threshold: f64) -> Vec<Label> {
    logits
        .chunks_exact(2)
        .map(|z| decide_scores(sigmoid(z[0]), sigmoid(z[1]), threshold))
        .collect()
}

pub fn decide_scores(vehicle: f64, pedestrian: f64, threshold: f64) -> Label {
    if vehicle <= threshold && pedestrian <= threshold {
        Label::Static
    } else if pedestrian > vehicle {
        Label::Pedestrian
    } else {
        Label::Vehicle
    }
}

pub fn sigmoid(x: f64) -> f64 {
    crate::diff::sigmoid(x)
}

/// Scores and labels for one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// N×2 sigmoid scores.
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

pub fn predict<T: Scalar>(
    pc: &PointCloud,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    rng: &mut Rng,
) -> Result<Prediction> {
    let logits = forward(pc, spec, params, rng)?.to_f64_vec();
    Ok(Prediction {
        scores: logits.iter().map(|&z| sigmoid(z)).collect(),
        labels: decide(&logits, spec.threshold),
    })
}

/// Largest spread of any sigmoid score across `trials` forward passes that
/// differ only in the order of members inside each cluster. Sampling and
/// grouping are identical across trials; trial 0 keeps the canonical order.
pub fn permutation_sensitivity<T: Scalar>(
    pc: &PointCloud,
    spec: &NetworkSpec,
    params: &ParamStore<T>,
    trials: usize,
    rng: &mut Rng,
) -> Result<f64> {
    use rand::Rng as _;
    if trials == 0 {
        return Err(Error::invalid("permutation_sensitivity needs at least one trial"));
    }
    let forward_seed: u64 = rng.random();
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for t in 0..trials {
        let opts = ForwardOptions {
            shuffle_members: (t > 0).then(|| rng.random()),
            ..Default::default()
        };
        let mut tape = Tape::new(params);
        let out = forward_tape(&mut tape, pc, spec, &mut crate::rng_from_seed(forward_seed), &opts)?;
        let scores: Vec<f64> = tape.value(out).data().iter().map(|z| sigmoid(z.as_f64())).collect();
        if t == 0 {
            lo = scores.clone();
            hi = scores;
        } else {
            for ((l, h), s) in lo.iter_mut().zip(hi.iter_mut()).zip(scores) {
                *l = l.min(s);
                *h = h.max(s);
            }
        }
    }
    Ok(lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max))
}
