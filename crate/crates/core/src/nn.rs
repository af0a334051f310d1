//! Parameterized layers built from graph ops.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamSet};

/// Zero-padded "same" convolution with its own weight and bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv {
    pub fn new(ps: &mut ParamSet, name: &str, (kh, kw): (usize, usize), cin: usize, cout: usize, seed: u64) -> Result<Self> {
        let fan_in = kh * kw * cin;
        Ok(Self {
            weight: ps.add_uniform(&format!("{name}.weight"), &[kh, kw, cin, cout], fan_in, seed)?,
            bias: ps.add_uniform(&format!("{name}.bias"), &[cout], fan_in, seed)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let b = g.param(ps, self.bias);
        g.conv2d(x, w, b)
    }
}

/// Affine map over the trailing axis.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            weight: ps.add_uniform(&format!("{name}.weight"), &[cin, cout], cin, seed)?,
            bias: ps.add_uniform(&format!("{name}.bias"), &[cout], cin, seed)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var) -> Result<Var> {
        let w = g.param(ps, self.weight);
        let b = g.param(ps, self.bias);
        g.linear(x, w, b)
    }
}

/// Gated recurrent unit cell over row-batched inputs (`B x d`):
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// n~ = tanh(x Wn + bn + r * (h Un))
/// h' = (1 - z) * n~ + z * h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: [ParamId; 3],
    pub hidden: [ParamId; 3],
    pub bias: [ParamId; 3],
}

impl GruCell {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, seed: u64) -> Result<Self> {
        let mut ids = |kind: &str, shape: &[usize]| -> Result<[ParamId; 3]> {
            let mut out = Vec::with_capacity(3);
            for gate in ["z", "r", "n"] {
                out.push(ps.add_uniform(&format!("{name}.{kind}_{gate}"), shape, dim, seed)?);
            }
            Ok([out[0], out[1], out[2]])
        };
        Ok(Self {
            input: ids("w", &[dim, dim])?,
            hidden: ids("u", &[dim, dim])?,
            bias: ids("b", &[dim])?,
        })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var, h: Var) -> Result<Var> {
        let gate_pre = |g: &mut Graph, k: usize| -> Result<(Var, Var)> {
            let w = g.param(ps, self.input[k]);
            let u = g.param(ps, self.hidden[k]);
            let b = g.param(ps, self.bias[k]);
            let xw = g.matmul(x, w)?;
            let xw = g.add_bias(xw, b)?;
            let hu = g.matmul(h, u)?;
            Ok((xw, hu))
        };
        let (xz, hz) = gate_pre(g, 0)?;
        let (xr, hr) = gate_pre(g, 1)?;
        let (xn, hn) = gate_pre(g, 2)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r)?;
        let rh = g.mul(r, hn)?;
        let cand = g.add(xn, rh)?;
        let cand = g.tanh(cand)?;
        // (1 - z) * n + z * h == n + z * (h - n)
        let diff = g.sub(h, cand)?;
        let gated = g.mul(z, diff)?;
        g.add(cand, gated)
    }
}
