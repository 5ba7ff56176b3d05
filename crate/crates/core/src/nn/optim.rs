use super::{Gradients, NnError, ParamStore, Tensor};

const STEP_COUNT: &str = "#step_count";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate every `decay_interval` epochs.
    pub lr_decay: f64,
    pub decay_interval: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            lr_decay: 0.9,
            decay_interval: 20,
        }
    }
}

impl AdamConfig {
    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let steps = epoch.checked_div(self.decay_interval).unwrap_or(0);
        self.lr * self.lr_decay.powi(steps as i32)
    }
}

/// ADAM with bias correction; `weight_decay * theta` is added to each gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: Vec<u64>,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            lr: config.lr,
            m: zeros(),
            v: zeros(),
            steps: vec![0; params.len()],
            step_count: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Called by the training loop at each epoch boundary.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.config.lr_at(epoch);
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Moments and step counts as a store with `{name}.m`, `{name}.v` and
    /// `{name}.t` entries, for checkpointing alongside `params`.
    pub fn state(&self, params: &ParamStore) -> ParamStore {
        let mut out = ParamStore::new();
        for (id, name, t) in params.iter() {
            let i = id.index();
            out.add(
                &format!("{name}.m"),
                Tensor::new(t.shape().to_vec(), self.m[i].clone()).expect("moment shape"),
            );
            out.add(
                &format!("{name}.v"),
                Tensor::new(t.shape().to_vec(), self.v[i].clone()).expect("moment shape"),
            );
            out.add(&format!("{name}.t"), Tensor::scalar(self.steps[i] as f64));
        }
        out.add(STEP_COUNT, Tensor::scalar(self.step_count as f64));
        out
    }

    /// Inverse of [`Adam::state`].
    pub fn restore(&mut self, params: &ParamStore, state: &ParamStore) -> Result<(), NnError> {
        let get = |key: &str, numel: usize| {
            let t = state
                .by_name(key)
                .ok_or_else(|| NnError::Checkpoint(format!("optimizer state lacks `{key}`")))?;
            if t.numel() != numel {
                return Err(NnError::Checkpoint(format!(
                    "optimizer entry `{key}` has {} values, expected {numel}",
                    t.numel()
                )));
            }
            Ok(t.data().to_vec())
        };
        for (id, name, t) in params.iter() {
            let i = id.index();
            self.m[i] = get(&format!("{name}.m"), t.numel())?;
            self.v[i] = get(&format!("{name}.v"), t.numel())?;
            self.steps[i] = get(&format!("{name}.t"), 1)?[0] as u64;
        }
        self.step_count = get(STEP_COUNT, 1)?[0] as u64;
        Ok(())
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), NnError> {
        for (id, g) in grads.params() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    param: params.name(id).to_string(),
                });
            }
        }
        let c = self.config;
        self.step_count += 1;
        for (id, g) in grads.params() {
            let i = id.index();
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let bc1 = 1.0 - c.beta1.powi(t);
            let bc2 = 1.0 - c.beta2.powi(t);
            let theta = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..theta.len() {
                let gk = g[k] + c.weight_decay * theta[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                theta[k] -= self.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    fn grads_for(ps: &ParamStore, g_val: f64) -> Gradients {
        // loss = g_val * w, built as a linear map so the gradient is exactly g_val.
        let mut g = Graph::new(ps);
        let w = g.param(ps.id("w").unwrap());
        let c = g.input(Tensor::matrix(1, 1, vec![g_val]).unwrap());
        let y = g.linear(w, c, None).unwrap();
        g.backward(y).unwrap()
    }

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::vector(vec![0.7]));
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &ps);
        let g = grads_for(&ps, 0.0);
        opt.step(&mut ps, &g).unwrap();
        assert_eq!(ps.by_name("w").unwrap().data(), [0.7]);
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::vector(vec![0.0]));
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &ps);
        let g = grads_for(&ps, 1.0);
        opt.step(&mut ps, &g).unwrap();
        let w = ps.by_name("w").unwrap().item();
        // m_hat = 1, v_hat = 1, step = lr / (1 + eps)
        assert!((w + 1e-4 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn lr_schedule() {
        let c = AdamConfig::default();
        assert_eq!(c.lr_at(0), 1e-4);
        assert_eq!(c.lr_at(19), 1e-4);
        assert!((c.lr_at(20) - 0.9e-4).abs() < 1e-18);
        assert!((c.lr_at(40) - 0.81e-4).abs() < 1e-18);
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::vector(vec![1.0]));
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        let g = grads_for(&ps, f64::NAN);
        match opt.step(&mut ps, &g) {
            Err(NnError::NonFiniteGradient { param }) => assert_eq!(param, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(ps.by_name("w").unwrap().data(), [1.0]);
    }

    #[test]
    fn state_round_trip_continues_identically() {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::vector(vec![0.3]));
        let mut a = Adam::new(AdamConfig::default(), &ps);
        for v in [0.5, -1.0, 2.0] {
            let g = grads_for(&ps, v);
            a.step(&mut ps, &g).unwrap();
        }
        let text = a.state(&ps).to_text();
        let mut b = Adam::new(AdamConfig::default(), &ps);
        b.restore(&ps, &ParamStore::from_text(&text).unwrap()).unwrap();
        assert_eq!(b.step_count(), 3);
        let mut ps2 = ps.clone();
        let g = grads_for(&ps, 0.7);
        a.step(&mut ps, &g).unwrap();
        b.step(&mut ps2, &g).unwrap();
        assert_eq!(
            ps.by_name("w").unwrap().item().to_bits(),
            ps2.by_name("w").unwrap().item().to_bits()
        );
    }
}
