//! Dense feed-forward generators and discriminators.
//!
//! Every network is a chain of affine layers. Hidden layers use ReLU,
//! discriminators end in a sigmoid and generators end linearly, since
//! cepstra and normalized log-F0 are unbounded reals.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Value};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};

pub const MCC_DIM: usize = 40;
pub const F0_DIM: usize = 1;
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 512];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v <= 0.0 {
                    0.0
                } else {
                    v
                }
            }
            Activation::Sigmoid => crate::autodiff::sigmoid(v),
            Activation::Linear => v,
        }
    }
}

/// One affine layer: `act(x · weight + bias)`, weight is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    name: String,
    layers: Vec<Layer>,
}

impl DenseNet {
    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for l in &layers {
            if l.bias.shape() != (1, l.output_dim()) {
                return Err(Error::Shape {
                    op: "layer bias",
                    left: l.weight.shape(),
                    right: l.bias.shape(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape {
                    op: "layer chain",
                    left: pair[0].weight.shape(),
                    right: pair[1].weight.shape(),
                });
            }
        }
        Ok(DenseNet {
            name: name.into(),
            layers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(Layer::output_dim));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Evaluates the network without recording anything.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "forward",
                left: x.shape(),
                right: (self.input_dim(), self.output_dim()),
            });
        }
        let mut h = x.clone();
        for l in &self.layers {
            let mut out = Matrix::zeros(h.rows(), l.output_dim());
            gemm(1.0, &h, false, &l.weight, false, 0.0, &mut out);
            let b = l.bias.as_slice();
            for r in 0..out.rows() {
                for (o, bv) in out.row_mut(r).iter_mut().zip(b) {
                    *o = l.activation.apply(*o + bv);
                }
            }
            h = out;
        }
        Ok(h)
    }

    /// Records the parameters on `tape`. Trainable bindings collect
    /// gradients; frozen ones still pass gradients through to their inputs.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundNet {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (w, b) = if trainable {
                    (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                } else {
                    (
                        tape.constant(l.weight.clone()),
                        tape.constant(l.bias.clone()),
                    )
                };
                BoundLayer {
                    weight: w,
                    bias: b,
                    activation: l.activation,
                }
            })
            .collect();
        BoundNet {
            layers,
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
        }
    }

    /// Forward pass recorded on `tape` with trainable parameters.
    pub fn forward(&self, tape: &mut Tape, batch: Value) -> Result<Value> {
        self.bind(tape, true).forward(tape, batch)
    }

    /// Exact identity map on `dim` features through ReLU hidden layers,
    /// using the `relu(x) - relu(-x)` split. Needs every hidden width ≥ 2·dim.
    pub fn identity(name: impl Into<String>, dim: usize, hidden: &[usize]) -> Result<Self> {
        if hidden.iter().any(|&h| h < 2 * dim) {
            return Err(Error::Config(format!(
                "identity net on {dim} features needs hidden widths >= {}",
                2 * dim
            )));
        }
        let mut widths = vec![dim];
        widths.extend_from_slice(hidden);
        widths.push(dim);
        let n = widths.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let weight = if i == 0 && n == 1 {
                Matrix::identity(dim)
            } else if i == 0 {
                Matrix::from_fn(fan_in, fan_out, |r, c| {
                    if c == r {
                        1.0
                    } else if c == r + dim {
                        -1.0
                    } else {
                        0.0
                    }
                })
            } else if i == n - 1 {
                Matrix::from_fn(fan_in, fan_out, |r, c| {
                    if r == c {
                        1.0
                    } else if r == c + dim {
                        -1.0
                    } else {
                        0.0
                    }
                })
            } else {
                Matrix::from_fn(fan_in, fan_out, |r, c| {
                    if r == c && r < 2 * dim {
                        1.0
                    } else {
                        0.0
                    }
                })
            };
            let activation = if i == n - 1 {
                Activation::Linear
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                weight,
                bias: Matrix::zeros(1, fan_out),
                activation,
            });
        }
        DenseNet::new(name, layers)
    }

    /// Sets every weight and bias to zero.
    pub fn zero_params(&mut self) {
        for l in &mut self.layers {
            l.weight.as_mut_slice().fill(0.0);
            l.bias.as_mut_slice().fill(0.0);
        }
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.str(&self.name);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.u32(l.input_dim() as u32);
            w.u32(l.output_dim() as u32);
            w.u8(l.activation.code());
        }
        for l in &self.layers {
            w.f64s(l.weight.as_slice());
            w.f64s(l.bias.as_slice());
        }
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self> {
        let name = r.str("network name")?;
        let at = r.offset();
        let count = r.u32("layer count")? as usize;
        if count == 0 || count > 64 {
            return Err(Error::format(at, format!("implausible layer count {count}")));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let at = r.offset();
            let i = r.u32("layer input width")? as usize;
            let o = r.u32("layer output width")? as usize;
            let code = r.u8("activation")?;
            let act = Activation::from_code(code)
                .ok_or_else(|| Error::format(at + 8, format!("unknown activation code {code}")))?;
            if i == 0 || o == 0 || i > 1 << 16 || o > 1 << 16 {
                return Err(Error::format(at, format!("implausible layer shape {i}x{o}")));
            }
            shapes.push((i, o, act));
        }
        let mut layers = Vec::with_capacity(count);
        for (i, o, activation) in shapes {
            let weight = Matrix::new(i, o, r.finite_f64s(i * o, "weights")?)?;
            let bias = Matrix::new(1, o, r.finite_f64s(o, "biases")?)?;
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        DenseNet::new(name, layers)
    }

    /// SHA-256 over the serialized network.
    pub fn param_hash(&self) -> String {
        let mut w = ByteWriter::new();
        self.encode(&mut w);
        crate::codec::sha256_hex(&w.finish())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLayer {
    pub weight: Value,
    pub bias: Value,
    pub activation: Activation,
}

/// A network whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct BoundNet {
    layers: Vec<BoundLayer>,
    input_dim: usize,
    output_dim: usize,
}

impl BoundNet {
    pub fn layers(&self) -> &[BoundLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn forward(&self, tape: &mut Tape, batch: Value) -> Result<Value> {
        if batch.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "forward",
                left: batch.shape(),
                right: (self.input_dim, self.output_dim),
            });
        }
        let mut h = batch;
        for l in &self.layers {
            let z = tape.affine(h, l.weight, l.bias)?;
            h = match l.activation {
                Activation::Relu => tape.relu(z),
                Activation::Sigmoid => tape.sigmoid(z),
                Activation::Linear => z,
            };
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Mcc2Mcc,
    Mcc2F0,
    F02Mcc,
}

impl GeneratorKind {
    pub fn dims(self) -> (usize, usize) {
        match self {
            GeneratorKind::Mcc2Mcc => (MCC_DIM, MCC_DIM),
            GeneratorKind::Mcc2F0 => (MCC_DIM, F0_DIM),
            GeneratorKind::F02Mcc => (F0_DIM, MCC_DIM),
        }
    }
}

/// Per-layer PRNG keyed by (seed, net name, layer index).
fn layer_rng(seed: u64, name: &str, layer: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update((layer as u64).to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn init_layers(
    name: &str,
    seed: u64,
    input: usize,
    hidden: &[usize],
    output: usize,
    out_act: Activation,
) -> Vec<Layer> {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.push(output);
    (0..widths.len() - 1)
        .map(|i| {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = layer_rng(seed, name, i);
            let weight = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit));
            let activation = if i + 2 == widths.len() {
                out_act
            } else {
                Activation::Relu
            };
            Layer {
                weight,
                bias: Matrix::zeros(1, fan_out),
                activation,
            }
        })
        .collect()
}

pub fn build_generator(
    kind: GeneratorKind,
    name: &str,
    seed: u64,
    hidden: &[usize],
) -> DenseNet {
    let (i, o) = kind.dims();
    let layers = init_layers(name, seed, i, hidden, o, Activation::Linear);
    DenseNet::new(name, layers).expect("generator layers chain by construction")
}

pub fn build_discriminator(
    input_dim: usize,
    name: &str,
    seed: u64,
    hidden: &[usize],
) -> Result<DenseNet> {
    if input_dim != MCC_DIM && input_dim != F0_DIM {
        return Err(Error::Config(format!(
            "discriminator input must be {MCC_DIM} or {F0_DIM}, got {input_dim}"
        )));
    }
    let layers = init_layers(name, seed, input_dim, hidden, 1, Activation::Sigmoid);
    DenseNet::new(name, layers)
}

/// Closed-form parameter count for a chain of widths.
pub fn param_count_for(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// The network slots of every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    GenXY,
    GenYX,
    GenYZ,
    GenZY,
    GenZX,
    DiscX,
    DiscY,
    DiscZ,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::GenXY,
        Role::GenYX,
        Role::GenYZ,
        Role::GenZY,
        Role::GenZX,
        Role::DiscX,
        Role::DiscY,
        Role::DiscZ,
    ];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Role> {
        Role::ALL.get(code as usize).copied()
    }

    pub fn is_generator(self) -> bool {
        matches!(
            self,
            Role::GenXY | Role::GenYX | Role::GenYZ | Role::GenZY | Role::GenZX
        )
    }

    pub fn tag(self) -> &'static str {
        match self {
            Role::GenXY => "G_X2Y",
            Role::GenYX => "G_Y2X",
            Role::GenYZ => "G_Y2Z",
            Role::GenZY => "G_Z2Y",
            Role::GenZX => "G_Z2X",
            Role::DiscX => "D_X",
            Role::DiscY => "D_Y",
            Role::DiscZ => "D_Z",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BundleKind {
    /// Whisper MCC ↔ normal MCC.
    CycleGanStage1,
    /// Converted normal MCC ↔ F0, trained on a frozen stage-1 mapping.
    CycleGanStage2,
    CincGan,
}

impl BundleKind {
    pub fn code(self) -> u32 {
        match self {
            BundleKind::CycleGanStage1 => 1,
            BundleKind::CycleGanStage2 => 2,
            BundleKind::CincGan => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(BundleKind::CycleGanStage1),
            2 => Some(BundleKind::CycleGanStage2),
            3 => Some(BundleKind::CincGan),
            _ => None,
        }
    }

    pub fn roles(self) -> &'static [Role] {
        match self {
            BundleKind::CycleGanStage1 => &[Role::GenXY, Role::GenYX, Role::DiscX, Role::DiscY],
            BundleKind::CycleGanStage2 => &[Role::GenYZ, Role::GenZY, Role::DiscY, Role::DiscZ],
            BundleKind::CincGan => &Role::ALL,
        }
    }

    /// Network name for a role; stage-2's normal-side discriminator judges
    /// converted cepstra and is tagged `D_Y'`.
    pub fn net_name(self, role: Role) -> &'static str {
        match (self, role) {
            (BundleKind::CycleGanStage2, Role::DiscY) => "D_Y'",
            _ => role.tag(),
        }
    }

    fn expected_io(role: Role) -> (usize, usize) {
        match role {
            Role::GenXY | Role::GenYX => (MCC_DIM, MCC_DIM),
            Role::GenYZ => (MCC_DIM, F0_DIM),
            Role::GenZY | Role::GenZX => (F0_DIM, MCC_DIM),
            Role::DiscX | Role::DiscY => (MCC_DIM, 1),
            Role::DiscZ => (F0_DIM, 1),
        }
    }
}

/// Role-keyed networks of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    kind: BundleKind,
    seed: u64,
    config_fingerprint: u64,
    nets: BTreeMap<Role, DenseNet>,
}

impl ModelBundle {
    /// Freshly initialized networks for `kind`.
    pub fn initialize(kind: BundleKind, seed: u64, hidden: &[usize], config_fingerprint: u64) -> Self {
        let nets = kind
            .roles()
            .iter()
            .map(|&role| {
                let name = kind.net_name(role);
                let net = match role {
                    Role::GenXY | Role::GenYX => {
                        build_generator(GeneratorKind::Mcc2Mcc, name, seed, hidden)
                    }
                    Role::GenYZ => build_generator(GeneratorKind::Mcc2F0, name, seed, hidden),
                    Role::GenZY | Role::GenZX => {
                        build_generator(GeneratorKind::F02Mcc, name, seed, hidden)
                    }
                    Role::DiscX | Role::DiscY => {
                        build_discriminator(MCC_DIM, name, seed, hidden).unwrap()
                    }
                    Role::DiscZ => build_discriminator(F0_DIM, name, seed, hidden).unwrap(),
                };
                (role, net)
            })
            .collect();
        ModelBundle {
            kind,
            seed,
            config_fingerprint,
            nets,
        }
    }

    /// Assembles a bundle from explicit networks, checking the roster and
    /// each network's input/output widths.
    pub fn from_nets(
        kind: BundleKind,
        seed: u64,
        config_fingerprint: u64,
        nets: BTreeMap<Role, DenseNet>,
    ) -> Result<Self> {
        let want: Vec<Role> = kind.roles().to_vec();
        let have: Vec<Role> = nets.keys().copied().collect();
        if want != have {
            return Err(Error::Incompatible(format!(
                "{kind:?} bundle needs roles {want:?}, got {have:?}"
            )));
        }
        for (role, net) in &nets {
            let io = BundleKind::expected_io(*role);
            if (net.input_dim(), net.output_dim()) != io {
                return Err(Error::Shape {
                    op: "bundle role",
                    left: (net.input_dim(), net.output_dim()),
                    right: io,
                });
            }
            let last = net.layers().last().unwrap().activation;
            let want_last = if role.is_generator() {
                Activation::Linear
            } else {
                Activation::Sigmoid
            };
            if last != want_last {
                return Err(Error::Incompatible(format!(
                    "{role} must end in {want_last:?}, found {last:?}"
                )));
            }
        }
        Ok(ModelBundle {
            kind,
            seed,
            config_fingerprint,
            nets,
        })
    }

    pub fn kind(&self) -> BundleKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config_fingerprint(&self) -> u64 {
        self.config_fingerprint
    }

    pub fn get(&self, role: Role) -> Result<&DenseNet> {
        self.nets
            .get(&role)
            .ok_or_else(|| Error::Incompatible(format!("{:?} bundle has no {role}", self.kind)))
    }

    pub fn get_mut(&mut self, role: Role) -> Result<&mut DenseNet> {
        let kind = self.kind;
        self.nets
            .get_mut(&role)
            .ok_or_else(|| Error::Incompatible(format!("{kind:?} bundle has no {role}")))
    }

    pub fn nets(&self) -> impl Iterator<Item = (Role, &DenseNet)> {
        self.nets.iter().map(|(r, n)| (*r, n))
    }

    pub fn generator_count(&self) -> usize {
        self.nets.keys().filter(|r| r.is_generator()).count()
    }

    pub fn discriminator_count(&self) -> usize {
        self.nets.len() - self.generator_count()
    }

    /// Records every network on `tape`; `trainable` selects which roles
    /// accumulate parameter gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: impl Fn(Role) -> bool) -> BoundBundle {
        BoundBundle {
            nets: self
                .nets
                .iter()
                .map(|(r, n)| (*r, n.bind(tape, trainable(*r))))
                .collect(),
        }
    }

    /// Records only `roles`, all trainable; the others are absent from the
    /// result.
    pub fn bind_roles(&self, tape: &mut Tape, roles: &[Role]) -> BoundBundle {
        BoundBundle {
            nets: self
                .nets
                .iter()
                .filter(|(r, _)| roles.contains(r))
                .map(|(r, n)| (*r, n.bind(tape, true)))
                .collect(),
        }
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.u32(self.kind.code());
        w.u64(self.seed);
        w.u64(self.config_fingerprint);
        w.u32(self.nets.len() as u32);
        for (role, net) in &self.nets {
            w.u32(role.code());
            net.encode(w);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self> {
        let at = r.offset();
        let code = r.u32("bundle kind")?;
        let kind = BundleKind::from_code(code)
            .ok_or_else(|| Error::format(at, format!("unknown bundle kind {code}")))?;
        let seed = r.u64("bundle seed")?;
        let fingerprint = r.u64("config fingerprint")?;
        let at = r.offset();
        let count = r.u32("network count")? as usize;
        if count != kind.roles().len() {
            return Err(Error::format(
                at,
                format!("{kind:?} bundle needs {} networks, found {count}", kind.roles().len()),
            ));
        }
        let mut nets = BTreeMap::new();
        for _ in 0..count {
            let at = r.offset();
            let code = r.u32("role")?;
            let role = Role::from_code(code)
                .ok_or_else(|| Error::format(at, format!("unknown role code {code}")))?;
            if nets.insert(role, DenseNet::decode(r)?).is_some() {
                return Err(Error::format(at, format!("duplicate role {role}")));
            }
        }
        ModelBundle::from_nets(kind, seed, fingerprint, nets)
    }

    /// Hex digests of every network's parameters, keyed by role.
    pub fn param_hashes(&self) -> BTreeMap<Role, String> {
        self.nets.iter().map(|(r, n)| (*r, n.param_hash())).collect()
    }
}

/// A bundle whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct BoundBundle {
    nets: BTreeMap<Role, BoundNet>,
}

impl BoundBundle {
    pub fn get(&self, role: Role) -> Result<&BoundNet> {
        self.nets
            .get(&role)
            .ok_or_else(|| Error::Incompatible(format!("bound bundle has no {role}")))
    }

    pub fn forward(&self, tape: &mut Tape, role: Role, batch: Value) -> Result<Value> {
        self.get(role)?.forward(tape, batch)
    }
}
