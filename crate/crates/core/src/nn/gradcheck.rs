//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::layers::{BiGru, Conv2d, Dense, GatLayer, GnnLayer};
use super::{Graph, NnError, ParamId, ParamStore, Tensor, Var};
use crate::rng;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Denominator floor of the relative error, so near-zero gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub eps: f64,
    /// At most this many coordinates per parameter are probed (chosen at random).
    pub max_per_param: usize,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_per_param: usize::MAX,
            seed: 0,
        }
    }
}

/// Projects the output of `build` onto a fixed random direction and compares
/// the tape gradient of that scalar with central differences, for every
/// parameter in `params`.
pub fn check<F>(params: &ParamStore, opts: GradcheckOptions, build: F) -> Result<GradcheckReport, NnError>
where
    F: Fn(&mut Graph) -> Result<Var, NnError>,
{
    let mut rng = rng::stream(opts.seed, "gradcheck");
    let probe_len = {
        let mut g = Graph::new(params);
        let y = build(&mut g)?;
        g.value(y).numel()
    };
    let r: Vec<f64> = (0..probe_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grads = {
        let mut g = Graph::new(params);
        let y = build(&mut g)?;
        let flat = g.reshape(y, &[probe_len])?;
        let proj = g.input(Tensor::matrix(1, probe_len, r.clone())?);
        let l = g.linear(flat, proj, None)?;
        g.backward(l)?
    };

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut work = params.clone();
    for id in params.ids().collect::<Vec<ParamId>>() {
        let n = params.get(id).numel();
        let analytic = grads.param(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let coords: Vec<usize> = if n <= opts.max_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for k in coords {
            let orig = params.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + opts.eps;
            let plus = projected(&work, &build, &r)?;
            work.get_mut(id).data_mut()[k] = orig - opts.eps;
            let minus = projected(&work, &build, &r)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let err = relative_error(analytic[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((params.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}

fn projected<F>(ps: &ParamStore, build: &F, r: &[f64]) -> Result<f64, NnError>
where
    F: Fn(&mut Graph) -> Result<Var, NnError>,
{
    let mut g = Graph::new(ps);
    let y = build(&mut g)?;
    Ok(g.value(y).data().iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Result of checking one op or layer.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: &'static str,
    pub report: GradcheckReport,
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize], margin: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-1.0..1.0);
            v + margin * v.signum()
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

fn ring_neighbors(n: usize, with_self: bool) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut nb = if with_self { vec![i] } else { Vec::new() };
            if n > 1 {
                nb.push((i + 1) % n);
            }
            if n > 2 {
                nb.push((i + n - 1) % n);
            }
            nb
        })
        .collect()
}

/// Gradient checks for every differentiable building block at random tiny shapes.
///
/// Inputs are registered as parameters so their gradients are checked too.
/// Values feeding a ReLU are kept at least 0.1 away from the kink.
pub fn layer_suite(seed: u64) -> Result<Vec<OpCheck>, NnError> {
    let mut rng = rng::stream(seed, "gradcheck-suite");
    let opts = GradcheckOptions {
        seed,
        ..GradcheckOptions::default()
    };
    let mut out = Vec::new();
    let mut run = |op: &'static str, ps: &ParamStore, f: &dyn Fn(&mut Graph) -> Result<Var, NnError>| {
        check(ps, opts, f).map(|report| out.push(OpCheck { op, report }))
    };

    let (n_in, n_out) = (rng.gen_range(2..6), rng.gen_range(1..5));
    let mut ps = ParamStore::new();
    let x = ps.add("x", random_tensor(&mut rng, &[n_in], 0.0));
    let dense = Dense::new(&mut ps, "dense", n_in, n_out, seed);
    run("dense", &ps, &|g| {
        let xv = g.param(x);
        dense.forward(g, xv)
    })?;

    let mut ps = ParamStore::new();
    let len = rng.gen_range(3..8);
    let x = ps.add("x", random_tensor(&mut rng, &[len], 0.1));
    run("relu", &ps, &|g| {
        let xv = g.param(x);
        Ok(g.relu(xv))
    })?;

    let mut ps = ParamStore::new();
    let c_in = rng.gen_range(1..3);
    let x = ps.add("x", random_tensor(&mut rng, &[c_in, 8, 8], 0.0));
    let conv = Conv2d::new(&mut ps, "conv", c_in, 2, 3, seed);
    run("conv2d", &ps, &|g| {
        let xv = g.param(x);
        conv.forward(g, xv)
    })?;

    let mut ps = ParamStore::new();
    let (h, w) = (rng.gen_range(2..5), rng.gen_range(2..5));
    let x = ps.add("x", random_tensor(&mut rng, &[2, h, w], 0.0));
    run("global_max_pool", &ps, &|g| {
        let xv = g.param(x);
        g.global_max_pool(xv)
    })?;

    let mut ps = ParamStore::new();
    let x = ps.add("x", random_tensor(&mut rng, &[4, 3], 0.0));
    let gru = BiGru::new(&mut ps, "bigru", 3, 2, seed);
    run("bigru", &ps, &|g| {
        let xv = g.param(x);
        gru.forward(g, xv)
    })?;

    let n = rng.gen_range(2..6);
    let mut ps = ParamStore::new();
    let x = ps.add("x", random_tensor(&mut rng, &[n, 3], 0.0));
    let gat = GatLayer::new(&mut ps, "gat", 3, 3, 2, true, seed);
    let nb = ring_neighbors(n, true);
    run("gat_layer", &ps, &|g| {
        let xv = g.param(x);
        gat.forward(g, xv, &nb)
    })?;

    let mut ps = ParamStore::new();
    let x = ps.add("x", random_tensor(&mut rng, &[n, 3], 0.0));
    let gnn = GnnLayer::new(&mut ps, "gnn", 3, seed);
    let nb = ring_neighbors(n, false);
    run("gnn_layer", &ps, &|g| {
        let xv = g.param(x);
        gnn.forward(g, xv, &nb)
    })?;

    let mut ps = ParamStore::new();
    let parts = [
        ps.add("a", random_tensor(&mut rng, &[3], 0.0)),
        ps.add("b", random_tensor(&mut rng, &[2], 0.0)),
        ps.add("c", random_tensor(&mut rng, &[4], 0.0)),
    ];
    let l1 = Dense::new(&mut ps, "fusion.0", 9, 6, seed);
    let l2 = Dense::new(&mut ps, "fusion.1", 6, 4, seed);
    let l3 = Dense::new(&mut ps, "fusion.2", 4, 1, seed);
    run("fusion", &ps, &|g| {
        let vars: Vec<Var> = parts.iter().map(|&p| g.param(p)).collect();
        let h = g.concat(&vars)?;
        let h = l1.forward(g, h)?;
        let h = g.relu(h);
        let h = l2.forward(g, h)?;
        let h = g.relu(h);
        l3.forward(g, h)
    })?;

    let mut ps = ParamStore::new();
    let p = ps.add("pred", random_tensor(&mut rng, &[5], 0.0));
    let target: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    run("mse", &ps, &|g| {
        let pv = g.param(p);
        g.mse(pv, &target)
    })?;

    Ok(out)
}
