//! Parameterised layers built on the tape.
//!
//! Each layer registers its parameters under a name prefix. Initial values
//! depend only on `(seed, full parameter name)`, so two models that share a
//! prefix start from identical weights for that part.

use super::{Graph, NnError, ParamId, ParamStore, Var};

/// Slope used for attention scores.
pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new(ps: &mut ParamStore, name: &str, n_in: usize, n_out: usize, seed: u64) -> Self {
        let w = ps.add_uniform(&format!("{name}.w"), &[n_out, n_in], n_in, seed);
        let b = ps.add_uniform(&format!("{name}.b"), &[n_out], n_in, seed);
        Self { w, b, n_in, n_out }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.linear(x, w, Some(b))
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, kernel: usize, seed: u64) -> Self {
        let fan_in = c_in * kernel * kernel;
        let w = ps.add_uniform(&format!("{name}.w"), &[c_out, c_in, kernel, kernel], fan_in, seed);
        let b = ps.add_uniform(&format!("{name}.b"), &[c_out], fan_in, seed);
        Self {
            w,
            b,
            c_in,
            c_out,
            kernel,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        g.conv2d(x, w, b)
    }
}

/// GRU cell: `z = s(W_z x + U_z h + b_z)`, `r = s(W_r x + U_r h + b_r)`,
/// `c = tanh(W_c x + U_c (r * h) + b_c)`, `h' = h + z * (c - h)`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub wz: ParamId,
    pub wr: ParamId,
    pub wc: ParamId,
    pub bz: ParamId,
    pub br: ParamId,
    pub bc: ParamId,
    pub uz: ParamId,
    pub ur: ParamId,
    pub uc: ParamId,
    pub n_in: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(ps: &mut ParamStore, name: &str, n_in: usize, hidden: usize, seed: u64) -> Self {
        let mut p = |suffix: &str, shape: &[usize]| ps.add_uniform(&format!("{name}.{suffix}"), shape, hidden, seed);
        Self {
            wz: p("wz", &[hidden, n_in]),
            wr: p("wr", &[hidden, n_in]),
            wc: p("wc", &[hidden, n_in]),
            bz: p("bz", &[hidden]),
            br: p("br", &[hidden]),
            bc: p("bc", &[hidden]),
            uz: p("uz", &[hidden, hidden]),
            ur: p("ur", &[hidden, hidden]),
            uc: p("uc", &[hidden, hidden]),
            n_in,
            hidden,
        }
    }

    /// Runs the cell over `order` rows of `x [m, n_in]` from a zero state.
    fn run(&self, g: &mut Graph, x: Var, order: impl Iterator<Item = usize>) -> Result<Var, NnError> {
        let (wz, wr, wc) = (g.param(self.wz), g.param(self.wr), g.param(self.wc));
        let (bz, br, bc) = (g.param(self.bz), g.param(self.br), g.param(self.bc));
        let (uz, ur, uc) = (g.param(self.uz), g.param(self.ur), g.param(self.uc));
        // Input projections for all rows at once.
        let xz = g.linear(x, wz, Some(bz))?;
        let xr = g.linear(x, wr, Some(br))?;
        let xc = g.linear(x, wc, Some(bc))?;
        let mut h = g.input(super::Tensor::zeros(vec![self.hidden]));
        for t in order {
            let (pz, pr, pc) = (g.row(xz, t)?, g.row(xr, t)?, g.row(xc, t)?);
            let hz = g.linear(h, uz, None)?;
            let hr = g.linear(h, ur, None)?;
            let z = g.add(pz, hz)?;
            let z = g.sigmoid(z);
            let r = g.add(pr, hr)?;
            let r = g.sigmoid(r);
            let rh = g.mul(r, h)?;
            let hc = g.linear(rh, uc, None)?;
            let c = g.add(pc, hc)?;
            let c = g.tanh(c);
            let diff = g.sub(c, h)?;
            let step = g.mul(z, diff)?;
            h = g.add(h, step)?;
        }
        Ok(h)
    }
}

/// One bidirectional GRU layer; output is `[h_forward_final ; h_backward_final]`.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new(ps: &mut ParamStore, name: &str, n_in: usize, hidden: usize, seed: u64) -> Self {
        Self {
            forward: GruCell::new(ps, &format!("{name}.fwd"), n_in, hidden, seed),
            backward: GruCell::new(ps, &format!("{name}.bwd"), n_in, hidden, seed),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let m = match g.shape(x) {
            &[m, d] if d == self.forward.n_in => m,
            s => {
                return Err(NnError::ShapeMismatch {
                    op: "bigru",
                    detail: format!("input {s:?}, expected [m, {}]", self.forward.n_in),
                })
            }
        };
        let hf = self.forward.run(g, x, 0..m)?;
        let hb = self.backward.run(g, x, (0..m).rev())?;
        g.concat(&[hf, hb])
    }
}

/// Multi-head graph attention with head averaging, optional ReLU and a
/// residual connection when input and output widths agree.
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub heads: Vec<(ParamId, ParamId)>,
    pub n_in: usize,
    pub n_out: usize,
    pub activate: bool,
}

impl GatLayer {
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        heads: usize,
        activate: bool,
        seed: u64,
    ) -> Self {
        let heads = (0..heads)
            .map(|h| {
                let w = ps.add_uniform(&format!("{name}.h{h}.w"), &[n_out, n_in], n_in, seed);
                let a = ps.add_uniform(&format!("{name}.h{h}.a"), &[2 * n_out], n_out, seed);
                (w, a)
            })
            .collect();
        Self {
            heads,
            n_in,
            n_out,
            activate,
        }
    }

    /// `neighbors[i]` must contain `i` itself.
    pub fn forward(&self, g: &mut Graph, x: Var, neighbors: &[Vec<usize>]) -> Result<Var, NnError> {
        let mut acc: Option<Var> = None;
        for &(w, a) in &self.heads {
            let (wv, av) = (g.param(w), g.param(a));
            let wh = g.linear(x, wv, None)?;
            let out = g.graph_attention(wh, av, neighbors, ATTENTION_SLOPE)?;
            acc = Some(match acc {
                None => out,
                Some(prev) => g.add(prev, out)?,
            });
        }
        let sum = acc.ok_or_else(|| NnError::ShapeMismatch {
            op: "gat_layer",
            detail: "no heads".into(),
        })?;
        let mut y = g.scale(sum, 1.0 / self.heads.len() as f64);
        if self.activate {
            y = g.relu(y);
        }
        if self.n_in == self.n_out {
            y = g.add(x, y)?;
        }
        Ok(y)
    }
}

/// Attention-free message passing: `x + sum_{j in N(i)} relu(W x_j + b)`.
#[derive(Debug, Clone)]
pub struct GnnLayer {
    pub dense: Dense,
}

impl GnnLayer {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, seed: u64) -> Self {
        Self {
            dense: Dense::new(ps, name, dim, dim, seed),
        }
    }

    /// `neighbors[i]` excludes `i`.
    pub fn forward(&self, g: &mut Graph, x: Var, neighbors: &[Vec<usize>]) -> Result<Var, NnError> {
        let h = self.dense.forward(g, x)?;
        let h = g.relu(h);
        let m = g.neighbor_sum(h, neighbors)?;
        g.add(x, m)
    }
}
