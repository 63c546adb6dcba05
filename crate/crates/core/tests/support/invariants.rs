//! Structural invariant checks shared by the core tests and the acceptance
//! target. Each returns a short summary on success.

use std::path::Path;

use radar_xconv::diff::{init_mlp, mlp_forward, Activation, Array, MlpSpec, ParamStore, Tape};
use radar_xconv::net::{count_params, forward, init_params, NetworkSpec, XConvLayerSpec};
use radar_xconv::pointcloud::{normalize_indices, InputLayout, Label, PointCloud, RadarDetection};
use radar_xconv::synth::{generate_scenes, read_dataset, write_dataset, LabeledDataset, SceneConfig};
use radar_xconv::train::{toy_spec, train, TrainConfig};
use radar_xconv::rng_from_seed;

use super::oracles::Stream;

/// Cloud on a 1/64 m lattice so that shifting it by a dyadic offset is exact
/// in f32.
pub fn dyadic_cloud(n: usize, extent: f64, seed: u64) -> PointCloud {
    let mut s = Stream::new(seed);
    let cells = (extent * 64.0) as usize;
    PointCloud::new(
        (0..n)
            .map(|i| {
                RadarDetection::new(
                    s.range(0, cells) as f32 / 64.0,
                    s.range(0, cells) as f32 / 64.0,
                    (4.0 * s.unit() - 2.0) as f32,
                    (20.0 * s.unit() - 10.0) as f32,
                )
                .with_label(Label::ALL[i % 3])
            })
            .collect(),
    )
}

fn shifted(pc: &PointCloud, dx: f32, dy: f32) -> PointCloud {
    let mut out = pc.clone();
    for p in &mut out.points {
        p.x += dx;
        p.y += dy;
    }
    out
}

/// Largest relative change of the f64 logits when the whole cloud is shifted,
/// measured as max |Δ| over max |logit|.
pub fn translation_error(spec: &NetworkSpec, pc: &PointCloud, seed: u64) -> Result<f64, String> {
    let params = init_params::<f64>(spec, &mut rng_from_seed(seed)).map_err(|e| e.to_string())?;
    let a = forward(pc, spec, &params, &mut rng_from_seed(seed + 1)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (dx, dy) in [(8.0, -4.5), (-12.25, 3.0), (0.5, 20.0)] {
        let b = forward(&shifted(pc, dx, dy), spec, &params, &mut rng_from_seed(seed + 1)).map_err(|e| e.to_string())?;
        let scale = a.max_abs().max(1e-12);
        let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Translation invariance of the pre-processing-free toy network and of the
/// full-size multi-scale network.
pub fn translation_invariance(tol: f64) -> Result<String, String> {
    let toy = toy_spec(16, false);
    let e_toy = translation_error(&toy, &dyadic_cloud(16, 4.0, 1), 3)?;
    let msg = NetworkSpec::msg_only();
    let e_msg = translation_error(&msg, &dyadic_cloud(msg.input_points, 50.0, 2), 4)?;
    let worst = e_toy.max(e_msg);
    if worst < tol {
        Ok(format!("toy {e_toy:.2e}, msg {e_msg:.2e}"))
    } else {
        Err(format!("relative logit change toy {e_toy:.2e}, msg {e_msg:.2e} (tolerance {tol:e})"))
    }
}

/// Row permutation of the shared MLP input permutes its output rows exactly.
pub fn shared_mlp_equivariance(trials: usize) -> Result<String, String> {
    let mut s = Stream::new(21);
    for t in 0..trials {
        let (n, c_in) = (s.range(1, 40), s.range(1, 6));
        let mlp = MlpSpec::new(vec![c_in, s.range(1, 16), s.range(1, 16)], Activation::Elu, t % 2 == 0);
        let mut store = ParamStore::<f32>::new();
        init_mlp(&mut store, "m", &mlp, &mut rng_from_seed(t as u64)).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..n * c_in).map(|_| 6.0 * s.unit() - 3.0).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, s.range(0, i));
        }
        let xp: Vec<f64> = perm.iter().flat_map(|&p| x[p * c_in..(p + 1) * c_in].to_vec()).collect();
        let run = |data: &[f64]| -> Result<Vec<f32>, String> {
            let mut tape = Tape::new(&store);
            let v = tape.constant(Array::from_f64(&[n, c_in], data).map_err(|e| e.to_string())?);
            let y = mlp_forward(&mut tape, v, "m", &mlp).map_err(|e| e.to_string())?;
            Ok(tape.value(y).data().to_vec())
        };
        let (y, yp) = (run(&x)?, run(&xp)?);
        let c_out = mlp.output();
        for (i, &p) in perm.iter().enumerate() {
            let (a, b) = (&yp[i * c_out..(i + 1) * c_out], &y[p * c_out..(p + 1) * c_out]);
            if a.iter().zip(b).any(|(u, v)| u.to_bits() != v.to_bits()) {
                return Err(format!("trial {t}: row {i} differs from source row {p}"));
            }
        }
    }
    Ok(format!("{trials} random MLPs bit-exact"))
}

/// Random valid network spec with small sizes.
pub fn random_spec(seed: u64) -> NetworkSpec {
    let mut s = Stream::new(seed);
    let depth = s.range(1, 3);
    let points = s.range(16, 40);
    let mut res = vec![points];
    for _ in 0..depth {
        let last = *res.last().unwrap();
        res.push(s.range(last / 2, last - 1));
    }
    let layer = |s: &mut Stream, n_rep: usize, source: usize| {
        let k = s.range(1, 4.min(source));
        let (c_delta, c_out) = (s.range(1, 5), s.range(1, 6));
        let mut l = if s.range(0, 1) == 0 {
            XConvLayerSpec::knn(n_rep, k, c_delta, c_out)
        } else {
            let nr = s.range(1, 3);
            let radii: Vec<f64> = (1..=nr).map(|r| r as f64).collect();
            XConvLayerSpec::ball(n_rep, k, &radii, c_delta, c_out)
        };
        l.delta_depth = s.range(1, 3);
        l.x_mlp_widths = (0..s.range(0, 2)).map(|_| s.range(1, 9)).collect();
        l
    };
    let encoder: Vec<XConvLayerSpec> = (0..depth).map(|l| layer(&mut s, res[l + 1], res[l])).collect();
    let decoder: Vec<XConvLayerSpec> = (0..depth).map(|j| layer(&mut s, res[depth - 1 - j], res[depth - j])).collect();
    let mut layout = InputLayout::default();
    if s.range(0, 1) == 1 {
        layout = layout.without(radar_xconv::pointcloud::Field::Sigma);
    }
    NetworkSpec {
        input_layout: layout,
        input_points: points,
        pp_widths: (0..s.range(0, 2)).map(|_| s.range(1, 8)).collect(),
        activation: Activation::Elu,
        encoder,
        decoder,
        head_widths: vec![s.range(1, 8), 2],
        threshold: 0.5,
    }
}

pub fn count_params_matches(specs: usize) -> Result<String, String> {
    for seed in 0..specs as u64 {
        let spec = random_spec(seed);
        spec.validate().map_err(|e| format!("random spec {seed} invalid: {e}"))?;
        let store = init_params::<f32>(&spec, &mut rng_from_seed(seed)).map_err(|e| e.to_string())?;
        let (counted, allocated) = (count_params(&spec), store.num_scalars() as u64);
        if counted != allocated {
            return Err(format!("spec {seed}: count_params {counted} != allocated {allocated}"));
        }
    }
    Ok(format!("{specs} random specs"))
}

/// Size normalization: exact target length, every source point kept when
/// growing, a duplicate-free sorted subset when shrinking.
pub fn normalize_contract(n: usize, target: usize, seed: u64) -> Result<(), String> {
    let idx = normalize_indices(n, target, &mut rng_from_seed(seed)).map_err(|e| e.to_string())?;
    if idx.len() != target || idx.iter().any(|&i| i >= n) {
        return Err(format!("n {n} target {target}: bad index set"));
    }
    if n <= target {
        if idx[..n] != (0..n).collect::<Vec<_>>()[..] {
            return Err(format!("n {n} target {target}: originals not kept in order"));
        }
    } else if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("n {n} target {target}: subset not strictly increasing"));
    }
    Ok(())
}

pub fn normalize_contracts(trials: usize) -> Result<String, String> {
    let mut s = Stream::new(5);
    for t in 0..trials {
        let (n, target) = (s.range(1, 3000), s.range(1, 1500));
        normalize_contract(n, target, t as u64)?;
    }
    let zero = normalize_indices(0, 5, &mut rng_from_seed(0)).is_err() && normalize_indices(5, 0, &mut rng_from_seed(0)).is_err();
    if !zero {
        return Err("empty input or zero target accepted".into());
    }
    Ok(format!("{trials} random (n, target) pairs"))
}

/// Writes a generated corpus and reads it back point for point.
pub fn dataset_round_trip(dir: &Path, scenes: usize) -> Result<String, String> {
    let ds = LabeledDataset::new(generate_scenes(&SceneConfig::default(), scenes, 99).map_err(|e| e.to_string())?);
    write_dataset(&ds, dir).map_err(|e| e.to_string())?;
    let back = read_dataset(dir).map_err(|e| e.to_string())?;
    if back.len() != ds.len() {
        return Err(format!("{} scenes written, {} read", ds.len(), back.len()));
    }
    for (a, b) in ds.scenes.iter().zip(&back.scenes) {
        if a != b {
            return Err(format!("scene {} differs after round trip", a.seed));
        }
    }
    Ok(format!("{scenes} scenes"))
}

/// Two identical short training runs give byte-identical checkpoints.
pub fn checkpoint_determinism() -> Result<String, String> {
    let spec = toy_spec(16, true);
    let clouds: Vec<PointCloud> = (0..3).map(|i| dyadic_cloud(12 + 3 * i, 4.0, 40 + i as u64)).collect();
    let cfg = TrainConfig {
        epochs: 3,
        lr: 1e-2,
        seed: 17,
        validation_fraction: 0.34,
        ..Default::default()
    };
    let run = || -> Result<Vec<u8>, String> {
        let out = train(&clouds, &spec, &cfg).map_err(|e| e.to_string())?;
        out.checkpoint(&spec, &cfg).map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    if a == b {
        Ok(format!("{} bytes identical", a.len()))
    } else {
        Err("checkpoints differ between identical runs".into())
    }
}

fn focal_direct(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let p_t = if positive { p } else { 1.0 - p };
    let a_t = if positive { alpha } else { 1.0 - alpha };
    -a_t * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// Random (p, label, α, γ) tuples against direct evaluation, half of them at
/// the default α = 0.8 / 0.95, γ = 2 configuration through the full loss.
pub fn focal_pointwise(trials: usize, tol: f64) -> Result<String, String> {
    use radar_xconv::train::{focal_loss, focal_term, FocalLossParams};
    let mut s = Stream::new(77);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let p = 1e-6 + (1.0 - 2e-6) * s.unit();
        let label = Label::ALL[s.range(0, 2)];
        let (got, want) = if t % 2 == 0 {
            let (alpha, gamma) = (s.unit(), 5.0 * s.unit());
            let positive = label == Label::Vehicle;
            (focal_term(p, positive, alpha, gamma), focal_direct(p, positive, alpha, gamma))
        } else {
            // Channel 0 carries p, channel 1 its complement.
            let z = (p / (1.0 - p)).ln();
            let params = FocalLossParams::default();
            let out = focal_loss(&[z, -z], &[label], &params).map_err(|e| e.to_string())?;
            let want = 0.5
                * (focal_direct(p, label == Label::Vehicle, 0.8, 2.0)
                    + focal_direct(1.0 - p, label == Label::Pedestrian, 0.95, 2.0));
            (out.loss, want)
        };
        let err = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(err);
        if err > tol {
            return Err(format!("trial {t}: p {p} label {label:?}: {got} vs {want}"));
        }
    }
    Ok(format!("{trials} tuples, worst {worst:.1e}"))
}
