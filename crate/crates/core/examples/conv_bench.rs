//! Rough conv throughput probe used while sizing the desk-scale configs.

use std::time::Instant;
use unpaired_sr::tape::Tape;
use unpaired_sr::tensor::Tensor;

fn bench(b: usize, cin: usize, cout: usize, hw: usize, iters: usize) {
    let x = Tensor::<f32>::full([b, cin, hw, hw], 0.5);
    let w = Tensor::<f32>::full([cout, cin, 3, 3], 0.01);
    let bias = Tensor::<f32>::zeros([1, cout, 1, 1]);
    // forward + backward through one conv
    let t0 = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let wv = tape.leaf(w.clone(), true);
        let bv = tape.leaf(bias.clone(), true);
        let y = tape.conv2d("bench", xv, wv, bv, 1, 1).unwrap();
        let l = tape.mean_all(y);
        let g = tape.backward(l);
        std::hint::black_box(g.get(wv));
    }
    let dt = t0.elapsed().as_secs_f64();
    let macs = (b * cout * cin * 9 * hw * hw) as f64 * iters as f64 * 3.0; // fwd + dW + dX
    println!(
        "b={b} cin={cin} cout={cout} hw={hw}: {:.1} ms/iter, ~{:.1} GFLOP/s",
        dt * 1000.0 / iters as f64,
        2.0 * macs / dt / 1e9
    );
}

fn main() {
    bench(2, 32, 32, 8, 2000);
    bench(2, 32, 32, 12, 2000);
    bench(4, 32, 32, 12, 1000);
    bench(2, 32, 128, 24, 500);
    bench(4, 16, 16, 12, 2000);
    bench(8, 16, 16, 16, 1000);
    bench(2, 3, 16, 48, 1000);
}
