use qnn_core::generate::{random_batch, random_network, ActivationKind, QuiverPreset};
use qnn_core::optim::Batch;
use qnn_core::rng::Xoshiro256PlusPlus;
use qnn_core::QuiverNetwork;

#[allow(dead_code)]
pub fn preset_network(preset: QuiverPreset, kind: ActivationKind, seed: u64) -> QuiverNetwork {
    let quiver = preset.quiver();
    let dims = preset.dims(&preset.default_dims()).unwrap();
    random_network(
        &quiver,
        &dims,
        kind,
        &mut Xoshiro256PlusPlus::from_seed(seed),
    )
    .unwrap()
}

#[allow(dead_code)]
pub fn network_batch(net: &QuiverNetwork, samples: usize, seed: u64) -> Batch {
    random_batch(
        net.input_dim(),
        net.output_dim(),
        samples,
        &mut Xoshiro256PlusPlus::from_seed(seed),
    )
    .unwrap()
}

#[allow(dead_code)]
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
