//! Measures tiled-vs-untiled drift caused by channel-attention pooling.

use rand::Rng as _;
use unpaired_sr::imaging::ScaleFactor;
use unpaired_sr::networks::{build_sr_network, SrNetSpec, TapPoint};
use unpaired_sr::rng::stream_rng;
use unpaired_sr::tensor::Tensor;
use unpaired_sr::trainer::super_resolve_tiled;

fn main() {
    for seed in 0..8u64 {
        let spec = SrNetSpec {
            n_groups: 2,
            n_blocks_per_group: 1,
            channels: 8,
            ca_reduction: 4,
            scale: ScaleFactor::new(2).unwrap(),
            tap_point: TapPoint::AfterGroup(0),
        };
        let params = build_sr_network::<f32>(&spec, &mut stream_rng(seed, "r")).unwrap();
        let mut rng = stream_rng(seed + 100, "img");
        let mut img = Tensor::zeros([1, 3, 160, 160]);
        for v in img.data_mut() {
            *v = rng.random_range(0.0..1.0f32);
        }
        let untiled = super_resolve_tiled(&params, &spec, &img, 256, 16).unwrap();
        let tiled = super_resolve_tiled(&params, &spec, &img, 128, 16).unwrap();
        let s = 2;
        let mut max_diff = 0.0f32;
        for ch in 0..3 {
            for y in (8 * s)..(24 * s) {
                for x in (8 * s)..(24 * s) {
                    max_diff = max_diff.max((tiled.at(0, ch, y, x) - untiled.at(0, ch, y, x)).abs());
                }
            }
        }
        println!("seed {seed}: interior max diff {max_diff:.6}");
    }
}
