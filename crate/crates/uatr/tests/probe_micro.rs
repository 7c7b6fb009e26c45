//! Scratch micro-timings (run with --ignored).

use std::time::Instant;
use uatr::nnkit::{adam_step, total_loss, AdamParams, Graph, ModelConfig, ModelState, Tensor};

#[test]
#[ignore]
fn probe_batch_cost_breakdown() {
    let config = ModelConfig::compact(4, 24);
    let mut model = ModelState::init(config, 1).unwrap();
    let n = 16;
    let frames = 39;
    let batch = Tensor {
        dims: vec![n, frames, 24],
        data: (0..n * frames * 24).map(|i| ((i * 37) % 100) as f64 / 50.0 - 1.0).collect(),
    };
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();

    // Warm up.
    for _ in 0..2 {
        let mut g = Graph::new();
        let b = model.bind(&mut g).unwrap();
        let p = b.forward(&mut g, &model, &batch).unwrap();
        let l = total_loss(&mut g, p.logits, None, &labels, 0.0).unwrap();
        let grads = g.backward(l).unwrap();
        let pg = b.param_grads(&model, &grads);
        adam_step(&mut model, &pg, 1e-4, &AdamParams::default()).unwrap();
    }

    let reps = 10;
    let t0 = Instant::now();
    let mut graphs = Vec::new();
    for _ in 0..reps {
        let mut g = Graph::new();
        let b = model.bind(&mut g).unwrap();
        let p = b.forward(&mut g, &model, &batch).unwrap();
        let l = total_loss(&mut g, p.logits, None, &labels, 0.0).unwrap();
        graphs.push((g, b, l));
    }
    let fwd = t0.elapsed().as_secs_f64() / reps as f64;

    let t0 = Instant::now();
    let mut all_grads = Vec::new();
    for (g, _, l) in &graphs {
        all_grads.push(g.backward(*l).unwrap());
    }
    let bwd = t0.elapsed().as_secs_f64() / reps as f64;

    let t0 = Instant::now();
    for ((_, b, _), grads) in graphs.iter().zip(&all_grads) {
        let pg = b.param_grads(&model, grads);
        adam_step(&mut model, &pg, 1e-4, &AdamParams::default()).unwrap();
    }
    let opt = t0.elapsed().as_secs_f64() / reps as f64;

    println!("forward {fwd:.4}s backward {bwd:.4}s adam {opt:.4}s");
}
