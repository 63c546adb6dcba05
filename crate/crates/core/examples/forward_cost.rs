//! Prints parameter/FLOP counts and wall time of one training step per preset.

use std::time::Instant;

use rand::Rng as _;
use radar_xconv::diff::{Array, Tape};
use radar_xconv::net::{count_flops, count_params, forward_tape, init_params, ForwardOptions, NetworkSpec};
use radar_xconv::pointcloud::{PointCloud, RadarDetection};
use radar_xconv::rng_from_seed;

fn main() -> radar_xconv::Result<()> {
    let mut rng = rng_from_seed(0);
    let pc = PointCloud::new(
        (0..1200)
            .map(|_| {
                RadarDetection::new(
                    rng.random_range(0.0..60.0),
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-10.0..20.0),
                )
            })
            .collect(),
    );
    for name in ["pp_msg", "vanilla", "pp", "msg"] {
        let spec = NetworkSpec::preset(name).unwrap();
        let params = init_params::<f32>(&spec, &mut rng_from_seed(1))?;
        let start = Instant::now();
        let reps = 5;
        for _ in 0..reps {
            let mut tape = Tape::new(&params);
            let out = forward_tape(&mut tape, &pc, &spec, &mut rng_from_seed(2), &ForwardOptions::default())?;
            let seed = Array::zeros(tape.shape(out)).clone();
            tape.backward(out, seed)?;
        }
        println!(
            "{name:8} params {:>8} flops {:>12} step {:?}",
            count_params(&spec),
            count_flops(&spec, 1200),
            start.elapsed() / reps
        );
    }
    Ok(())
}
