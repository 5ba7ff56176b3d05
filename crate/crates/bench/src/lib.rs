//! Deterministic inputs for the kernel benchmarks.

use deepgs::Tensor;

/// Smooth, non-degenerate values in `[-1, 1]`.
pub fn wave(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.731 + phase).sin()).collect()
}

pub fn tensor(shape: &[usize], phase: f64) -> Tensor {
    Tensor::new(shape.to_vec(), wave(shape.iter().product(), phase)).expect("shape matches data")
}

/// Ring of `n` nodes with self loops, as attention neighbourhoods.
pub fn ring(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|i| vec![i, (i + n - 1) % n, (i + 1) % n]).collect()
}

/// Predictions and labels with a coarse label grid, so ties are common.
pub fn scored(n: usize) -> (Vec<f64>, Vec<f64>) {
    let labels: Vec<f64> = wave(n, 0.3).iter().map(|x| (x * 4.0).round() + 6.0).collect();
    let preds = labels.iter().zip(wave(n, 1.7)).map(|(y, e)| y + e).collect();
    (preds, labels)
}
