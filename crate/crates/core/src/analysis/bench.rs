use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Model;
use crate::parallel;
use crate::scalar::Scalar;
use crate::tensor::{Init, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub fps: f64,
    /// Per-image latency.
    pub mean_ms: f64,
    pub std_ms: f64,
    pub batch: usize,
    pub iterations: usize,
    pub environment: String,
    /// Timings depend on the host; they are not comparable with figures
    /// measured on other hardware.
    pub comparable: bool,
}

fn environment() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{}-{} cores={} threads={} profile={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        cores,
        parallel::threads(),
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

/// Times `n_iters` forward-only passes after `warmup` untimed ones.
pub fn fps_benchmark<T: Scalar>(model: &Model<T>, input_shape: &[usize], n_iters: usize, warmup: usize) -> Result<FpsReport> {
    if n_iters < 10 {
        return Err(Error::invalid(format!("n_iters must be >= 10, got {n_iters}")));
    }
    let x = Tensor::<T>::create(input_shape, Init::Uniform { bound: 1.0, seed: 0 })?.map(|v| v.abs());
    let (batch, _, _, _) = x.dims4()?;
    for _ in 0..warmup {
        model.predict(&x)?;
    }
    let mut per_image = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let t0 = Instant::now();
        model.predict(&x)?;
        per_image.push(t0.elapsed().as_secs_f64() * 1e3 / batch as f64);
    }
    let mean = per_image.iter().sum::<f64>() / n_iters as f64;
    let var = per_image.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_iters - 1) as f64;
    Ok(FpsReport {
        fps: 1000.0 / mean,
        mean_ms: mean,
        std_ms: var.sqrt(),
        batch,
        iterations: n_iters,
        environment: environment(),
        comparable: false,
    })
}
