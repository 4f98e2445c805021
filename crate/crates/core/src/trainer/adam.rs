//! Adaptive moment estimation with bias correction.

use std::collections::BTreeMap;

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::networks::{DenseNet, ModelBundle, Role};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moments of one network, one entry per parameter tensor in the order
/// `w0, b0, w1, b1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetMoments {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl NetMoments {
    pub fn zeros_like(net: &DenseNet) -> Self {
        let shapes: Vec<(usize, usize)> = param_shapes(net);
        NetMoments {
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    fn matches(&self, net: &DenseNet) -> bool {
        let shapes = param_shapes(net);
        self.m.len() == shapes.len()
            && self.v.len() == shapes.len()
            && self
                .m
                .iter()
                .zip(&self.v)
                .zip(&shapes)
                .all(|((m, v), s)| m.shape() == *s && v.shape() == *s)
    }
}

fn param_shapes(net: &DenseNet) -> Vec<(usize, usize)> {
    net.layers()
        .iter()
        .flat_map(|l| [l.weight.shape(), l.bias.shape()])
        .collect()
}

fn params_mut(net: &mut DenseNet) -> Vec<&mut Matrix> {
    net.layers_mut()
        .iter_mut()
        .flat_map(|l| [&mut l.weight, &mut l.bias])
        .collect()
}

/// Optimizer state for every trainable network of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub nets: BTreeMap<Role, NetMoments>,
}

impl OptimizerState {
    pub fn new(bundle: &ModelBundle) -> Self {
        OptimizerState {
            nets: bundle
                .nets()
                .map(|(r, n)| (r, NetMoments::zeros_like(n)))
                .collect(),
        }
    }

    pub fn get_mut(&mut self, role: Role) -> Result<&mut NetMoments> {
        self.nets
            .get_mut(&role)
            .ok_or_else(|| Error::Incompatible(format!("no optimizer state for {role}")))
    }

    /// Checks that every network has moments of matching shapes.
    pub fn check(&self, bundle: &ModelBundle) -> Result<()> {
        let roles: Vec<Role> = bundle.nets().map(|(r, _)| r).collect();
        let have: Vec<Role> = self.nets.keys().copied().collect();
        if roles != have {
            return Err(Error::Incompatible(format!(
                "optimizer state covers {have:?}, bundle has {roles:?}"
            )));
        }
        for (role, net) in bundle.nets() {
            if !self.nets[&role].matches(net) {
                return Err(Error::Incompatible(format!(
                    "optimizer moments for {role} do not match its parameter shapes"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.u32(self.nets.len() as u32);
        for (role, m) in &self.nets {
            w.u32(role.code());
            w.u64(m.step);
            w.u32(m.m.len() as u32);
            for (a, b) in m.m.iter().zip(&m.v) {
                w.u32(a.rows() as u32);
                w.u32(a.cols() as u32);
                w.f64s(a.as_slice());
                w.f64s(b.as_slice());
            }
        }
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self> {
        let count = r.u32("optimizer net count")? as usize;
        let mut nets = BTreeMap::new();
        for _ in 0..count {
            let at = r.offset();
            let code = r.u32("optimizer role")?;
            let role = Role::from_code(code)
                .ok_or_else(|| Error::format(at, format!("unknown role code {code}")))?;
            let step = r.u64("optimizer step")?;
            let at = r.offset();
            let tensors = r.u32("moment count")? as usize;
            if tensors > 128 {
                return Err(Error::format(at, format!("implausible moment count {tensors}")));
            }
            let mut m = Vec::with_capacity(tensors);
            let mut v = Vec::with_capacity(tensors);
            for _ in 0..tensors {
                let at = r.offset();
                let rows = r.u32("moment rows")? as usize;
                let cols = r.u32("moment cols")? as usize;
                if rows > 1 << 16 || cols > 1 << 16 {
                    return Err(Error::format(at, format!("implausible moment shape {rows}x{cols}")));
                }
                m.push(Matrix::new(rows, cols, r.finite_f64s(rows * cols, "first moment")?)?);
                v.push(Matrix::new(rows, cols, r.finite_f64s(rows * cols, "second moment")?)?);
            }
            if nets.insert(role, NetMoments { step, m, v }).is_some() {
                return Err(Error::format(at, format!("duplicate optimizer role {role}")));
            }
        }
        Ok(OptimizerState { nets })
    }
}

/// One bias-corrected update of every parameter tensor of `net`.
/// `grads` must follow the `w0, b0, w1, b1, ...` order. Non-finite
/// gradients abort before anything is modified.
pub fn optimizer_step(
    net: &mut DenseNet,
    grads: &[&Matrix],
    state: &mut NetMoments,
    cfg: &AdamConfig,
) -> Result<()> {
    if !state.matches(net) || grads.len() != state.m.len() {
        return Err(Error::Incompatible(format!(
            "{} gradients/moments do not match the network's parameters",
            net.name()
        )));
    }
    for (g, m) in grads.iter().zip(&state.m) {
        if g.shape() != m.shape() {
            return Err(Error::Shape {
                op: "optimizer_step",
                left: g.shape(),
                right: m.shape(),
            });
        }
    }
    if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
        return Err(Error::Domain {
            op: "optimizer_step",
            msg: format!(
                "non-finite gradient in {} tensor {i}",
                net.name()
            ),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let lr = cfg.learning_rate;
    for (((p, g), m), v) in params_mut(net)
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.as_mut_slice())
            .zip(v.as_mut_slice())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
