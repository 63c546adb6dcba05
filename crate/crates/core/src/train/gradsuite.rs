//! Double-precision finite-difference checks over every differentiable piece
//! of the network and the loss.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::loss::{focal_loss, FocalLossParams};
use crate::diff::{
    finite_diff_check, init_mlp, mlp_forward, Activation, Array, GradCheckReport, MlpSpec, OpKind, ParamStore,
    Tape, Var,
};
use crate::net::{
    apply_xtransform, build_fstar, forward_tape, init_params, lift_delta, preprocess_features, xconv_aggregate,
    xtransform, ForwardOptions, NetworkSpec, XConvLayerSpec,
};
use crate::pointcloud::{InputLayout, Label, PointCloud, RadarDetection};
use crate::{derive_seed, rng_from_seed, Result, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradSuiteConfig {
    pub seed: u64,
    /// Central-difference step for single ops.
    pub h: f64,
    /// Step for the composite encode/decode and end-to-end checks, whose
    /// larger sums need a wider step to stay clear of cancellation.
    pub network_h: f64,
    pub tolerance: f64,
    /// Points in the toy network's input cloud.
    pub points: usize,
}

impl Default for GradSuiteConfig {
    fn default() -> Self {
        GradSuiteConfig {
            seed: 7,
            h: 1e-5,
            network_h: 3e-5,
            tolerance: 1e-4,
            points: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckLine {
    pub op: &'static str,
    pub max_rel_error: f64,
    pub coords: usize,
    /// Parameter name and index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// Operation names in suite order.
pub const SUITE_OPS: [&str; 12] = [
    "dense",
    "shared_mlp",
    "preprocess",
    "lift_delta",
    "build_fstar",
    "xtransform",
    "apply_xtransform",
    "xconv_aggregate",
    "sigmoid",
    "focal_loss",
    "encode_decode",
    "end_to_end",
];

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Array<f64> {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape matches data")
}

/// Replaces every zero-initialized bias with a small random value. With zero
/// biases the RP's own all-zero local coordinates put pre-activations exactly
/// on the ELU kink, where central differences carry an O(h) error.
fn jitter_biases(store: &mut ParamStore<f64>, rng: &mut Rng) {
    for id in 0..store.len() {
        if store.name(id).ends_with(".b") {
            for v in store.value_mut(id).data_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
        }
    }
}

/// Checks `Σ probe ⊙ build(θ)` for a fixed random probe.
fn probe_check<F>(mut store: ParamStore<f64>, h: f64, fault: Option<OpKind>, rng: &mut Rng, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    jitter_biases(&mut store, rng);
    let (grads, probe) = {
        let mut tape = Tape::new(&store);
        tape.inject_fault(fault);
        let out = build(&mut tape)?;
        let probe = uniform(tape.shape(out), -1.0, 1.0, rng);
        (tape.backward(out, probe.clone())?, probe)
    };
    finite_diff_check(&mut store, &grads, h, |s| {
        let mut tape = Tape::new(s);
        let out = build(&mut tape)?;
        Ok(tape.value(out).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum())
    })
}

/// Small PP+MSG network over [`toy_cloud`]; `pp = false` drops the
/// pre-processing MLP.
pub fn toy_spec(points: usize, pp: bool) -> NetworkSpec {
    let half = (points / 2).max(2);
    let quarter = (points / 4).max(1);
    NetworkSpec {
        input_layout: InputLayout::default(),
        input_points: points,
        pp_widths: if pp { vec![6] } else { Vec::new() },
        activation: Activation::Elu,
        encoder: vec![
            XConvLayerSpec::ball(half, 4, &[1.0, 2.5], 3, 4),
            XConvLayerSpec::ball(quarter, 3, &[3.0], 3, 5),
        ],
        decoder: vec![
            XConvLayerSpec::ball(half, 3, &[3.0], 3, 4),
            XConvLayerSpec::ball(points, 4, &[2.5], 3, 4),
        ],
        head_widths: vec![5, 2],
        threshold: 0.5,
    }
}

/// Labeled random cloud in a 4 m square.
pub fn toy_cloud(points: usize, seed: u64) -> PointCloud {
    let mut rng = rng_from_seed(seed);
    PointCloud::new(
        (0..points)
            .map(|i| {
                RadarDetection::new(
                    rng.random_range(0.0..4.0),
                    rng.random_range(0.0..4.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-5.0..5.0),
                )
                .with_label(Label::ALL[i % 3])
            })
            .collect(),
    )
}

fn run_op(op: &str, cfg: &GradSuiteConfig, fault: Option<OpKind>) -> Result<GradCheckReport> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, op.len() as u64 * 131 + op.as_bytes()[0] as u64));
    let act = Activation::Elu;
    let mut store = ParamStore::<f64>::new();
    match op {
        "dense" => {
            store.insert("x", uniform(&[4, 5], -1.0, 1.0, &mut rng))?;
            store.insert("w", uniform(&[5, 3], -1.0, 1.0, &mut rng))?;
            store.insert("b", uniform(&[3], -1.0, 1.0, &mut rng))?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let (x, w, b) = (t.param("x")?, t.param("w")?, t.param("b")?);
                t.dense(x, w, b)
            })
        }
        "shared_mlp" => {
            let mlp = MlpSpec::new(vec![4, 6, 5], act, true);
            store.insert("x", uniform(&[2, 3, 4], -1.0, 1.0, &mut rng))?;
            init_mlp(&mut store, "mlp", &mlp, &mut rng)?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let x = t.param("x")?;
                mlp_forward(t, x, "mlp", &mlp)
            })
        }
        "preprocess" => {
            let spec = toy_spec(cfg.points, true);
            let pc = toy_cloud(cfg.points, cfg.seed);
            init_mlp(&mut store, "pp", &spec.pp_mlp().expect("toy spec has PP"), &mut rng)?;
            probe_check(store, cfg.h, fault, &mut rng, |t| preprocess_features(t, &pc, &spec))
        }
        "lift_delta" => {
            let mlp = XConvLayerSpec::ball(3, 4, &[1.0], 5, 4).delta_mlp(2, act);
            store.insert("local", uniform(&[3, 4, 2], -1.0, 1.0, &mut rng))?;
            init_mlp(&mut store, "l.delta", &mlp, &mut rng)?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let local = t.param("local")?;
                lift_delta(t, local, "l", &mlp)
            })
        }
        "build_fstar" => {
            store.insert("f_delta", uniform(&[2, 3, 3], -1.0, 1.0, &mut rng))?;
            store.insert("f_in", uniform(&[2, 3, 2], -1.0, 1.0, &mut rng))?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let (a, b) = (t.param("f_delta")?, t.param("f_in")?);
                build_fstar(t, a, b)
            })
        }
        "xtransform" => {
            let layer = XConvLayerSpec {
                x_mlp_widths: vec![10],
                ..XConvLayerSpec::ball(3, 4, &[1.0], 5, 4)
            };
            let mlp = layer.xform_mlp(2, act);
            store.insert("local", uniform(&[3, 4, 2], -1.0, 1.0, &mut rng))?;
            init_mlp(&mut store, "l.xform", &mlp, &mut rng)?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let local = t.param("local")?;
                xtransform(t, local, "l", &mlp)
            })
        }
        "apply_xtransform" => {
            store.insert("x", uniform(&[3, 4, 4], -1.0, 1.0, &mut rng))?;
            store.insert("f_star", uniform(&[3, 4, 3], -1.0, 1.0, &mut rng))?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let (x, f) = (t.param("x")?, t.param("f_star")?);
                apply_xtransform(t, x, f)
            })
        }
        "xconv_aggregate" => {
            let mlp = XConvLayerSpec::ball(3, 4, &[1.0], 2, 5).aggregate_mlp(1, act);
            store.insert("f_x", uniform(&[3, 4, 3], -1.0, 1.0, &mut rng))?;
            init_mlp(&mut store, "l.agg", &mlp, &mut rng)?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let f = t.param("f_x")?;
                xconv_aggregate(t, f, "l", &mlp)
            })
        }
        "sigmoid" => {
            store.insert("x", uniform(&[3, 4], -3.0, 3.0, &mut rng))?;
            probe_check(store, cfg.h, fault, &mut rng, |t| {
                let x = t.param("x")?;
                t.sigmoid(x)
            })
        }
        "focal_loss" => {
            let n = 8;
            let params = FocalLossParams::default();
            let labels: Vec<Label> = (0..n).map(|i| Label::ALL[i % 3]).collect();
            store.insert("logits", uniform(&[n, 2], -3.0, 3.0, &mut rng))?;
            let grad = focal_loss(store.value(0).data(), &labels, &params)?.grad;
            let analytic = crate::diff::ParamGrads(vec![Array::new(&[n, 2], grad)?]);
            finite_diff_check(&mut store, &analytic, cfg.h, |s| Ok(focal_loss(s.value(0).data(), &labels, &params)?.loss))
        }
        "encode_decode" => {
            let spec = toy_spec(cfg.points, false);
            let pc = toy_cloud(cfg.points, cfg.seed);
            let store = init_params::<f64>(&spec, &mut rng)?;
            let fwd_seed = derive_seed(cfg.seed, 11);
            probe_check(store, cfg.network_h, fault, &mut rng, |t| {
                forward_tape(t, &pc, &spec, &mut rng_from_seed(fwd_seed), &ForwardOptions::default())
            })
        }
        "end_to_end" => {
            let spec = toy_spec(cfg.points, true);
            let pc = toy_cloud(cfg.points, cfg.seed);
            let labels = pc.labels().expect("toy cloud is labeled");
            let mut store = init_params::<f64>(&spec, &mut rng)?;
            jitter_biases(&mut store, &mut rng);
            let fwd_seed = derive_seed(cfg.seed, 12);
            let focal = FocalLossParams::default();
            let loss_and_seed = |t: &mut Tape<'_, f64>| -> Result<(Var, f64, Vec<f64>)> {
                let out = forward_tape(t, &pc, &spec, &mut rng_from_seed(fwd_seed), &ForwardOptions::default())?;
                let fl = focal_loss(t.value(out).data(), &labels, &focal)?;
                Ok((out, fl.loss, fl.grad))
            };
            let grads = {
                let mut tape = Tape::new(&store);
                tape.inject_fault(fault);
                let (out, _, g) = loss_and_seed(&mut tape)?;
                let seed = Array::new(tape.shape(out), g)?;
                tape.backward(out, seed)?
            };
            finite_diff_check(&mut store, &grads, cfg.network_h, |s| {
                let mut tape = Tape::new(s);
                Ok(loss_and_seed(&mut tape)?.1)
            })
        }
        other => Err(crate::Error::invalid(format!("unknown gradcheck op `{other}`"))),
    }
}

/// Runs every check of [`SUITE_OPS`]. `fault` corrupts the backward pass of
/// one primitive to show the suite notices.
pub fn run_gradcheck_suite(cfg: &GradSuiteConfig, fault: Option<OpKind>) -> Result<Vec<GradCheckLine>> {
    SUITE_OPS
        .iter()
        .map(|&op| {
            let r = run_op(op, cfg, fault)?;
            Ok(GradCheckLine {
                op,
                max_rel_error: r.max_rel_error,
                coords: r.coords_checked,
                worst: r.worst,
                passed: r.max_rel_error < cfg.tolerance,
            })
        })
        .collect()
}
