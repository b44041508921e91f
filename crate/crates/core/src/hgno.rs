//! Hilbert–Galerkin neural operators with one hidden layer.
//!
//! A critic is `v(x) = w2 · act(W1 E_d(x) + b1) + b2`, where `E_d(x) =
//! (x_1, …, x_d)` are the first `d` sine coefficients. An actor maps the same
//! encoding through `p` outputs onto `span{e_1, …, e_p}`.
//!
//! Input derivatives and every parameter gradient used in training are closed
//! form. Parameters live in one flat vector:
//!
//! * critic: `W1` (row-major, `W × d`), `b1` (`W`), `w2` (`W`), `b2` (1)
//! * actor: `W1` (row-major, `W × d`), `b1` (`W`), `W2` (row-major, `p × W`), `b2` (`p`)

use crate::error::{Error, Result};
use crate::rng::{NormalStream, TAG_INIT};
use crate::spectral::HVec;

/// Smooth scalar nonlinearity with derivatives up to third order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Tanh),
            other => Err(Error::Format(format!("unknown activation id {other}"))),
        }
    }

    /// `(act, act′, act″, act‴)` at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
        }
    }

    /// Supremum of `|act|`.
    pub fn bound(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
        }
    }
}

/// Flat parameter (or parameter-gradient) vector in a network's layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += c · other`
    pub fn axpy(&mut self, c: f64, other: &ParamVector) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a += c * b);
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|a| *a *= c);
    }
}

/// `(v, Dv, D²v)` of a critic at one point, with derivatives expressed on `e_1..e_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticJet {
    pub value: f64,
    pub grad: Vec<f64>,
    /// `d × d`, row-major, symmetric.
    pub hess: Vec<f64>,
}

impl CriticJet {
    pub fn zeros(d: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.dim() + j]
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..i).all(|j| self.hess[i * d + j] == self.hess[j * d + i]))
    }
}

/// Anything that provides a value and its first two Fréchet derivatives.
pub trait Critic: Sync {
    /// Number of leading modes the derivatives live on.
    fn dim(&self) -> usize;
    fn value(&self, x: &HVec) -> Result<f64>;
    fn jet(&self, x: &HVec) -> Result<CriticJet>;
}

fn check_encoder(d: usize, x: &HVec) -> Result<()> {
    if x.len() < d {
        return Err(Error::Shape(format!(
            "point has {} modes but the encoder reads {d}",
            x.len()
        )));
    }
    Ok(())
}

/// Activation derivatives `σ, σ′, σ″, σ‴` of each hidden unit at one input.
#[derive(Debug, Clone)]
pub(crate) struct Hidden {
    pub act: Vec<[f64; 4]>,
}

fn hidden_layer(
    activation: Activation,
    w1: &[f64],
    b1: &[f64],
    d: usize,
    input: &[f64],
) -> Hidden {
    let act = w1
        .chunks_exact(d)
        .zip(b1)
        .map(|(row, b)| activation.derivatives(b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()))
        .collect();
    Hidden { act }
}

fn normal_init(len: usize, std: f64, stream: &mut NormalStream) -> Vec<f64> {
    (0..len).map(|_| std * stream.normal()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    d: usize,
    width: usize,
    activation: Activation,
    params: Vec<f64>,
}

impl CriticNet {
    pub fn param_count(d: usize, width: usize) -> usize {
        width * d + 2 * width + 1
    }

    pub fn zeros(d: usize, width: usize) -> Self {
        Self {
            d,
            width,
            activation: Activation::Tanh,
            params: vec![0.0; Self::param_count(d, width)],
        }
    }

    /// `W1`, `w2` entries drawn from `N(0, 1/fan_in)`; biases zero.
    pub fn init(d: usize, width: usize, seed: u64) -> Self {
        let mut net = Self::zeros(d, width);
        let mut stream = NormalStream::new(seed, TAG_INIT, 0, 0);
        let w1 = normal_init(width * d, 1.0 / (d as f64).sqrt(), &mut stream);
        let w2 = normal_init(width, 1.0 / (width as f64).sqrt(), &mut stream);
        net.params[..width * d].copy_from_slice(&w1);
        let off = width * d + width;
        net.params[off..off + width].copy_from_slice(&w2);
        net
    }

    pub fn from_params(d: usize, width: usize, activation: Activation, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::param_count(d, width) {
            return Err(Error::Shape(format!(
                "critic with d = {d}, W = {width} needs {} parameters, got {}",
                Self::param_count(d, width),
                params.len()
            )));
        }
        Ok(Self {
            d,
            width,
            activation,
            params,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.width * self.d]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.width * self.d;
        &self.params[o..o + self.width]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.width * self.d + self.width;
        &self.params[o..o + self.width]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let wd = self.width * self.d;
        (wd, wd + self.width, wd + 2 * self.width)
    }

    pub(crate) fn hidden(&self, x: &HVec) -> Result<Hidden> {
        check_encoder(self.d, x)?;
        Ok(hidden_layer(
            self.activation,
            self.w1(),
            self.b1(),
            self.d,
            &x.coeffs()[..self.d],
        ))
    }

    pub(crate) fn value_from(&self, h: &Hidden) -> f64 {
        self.b2()
            + self
                .w2()
                .iter()
                .zip(&h.act)
                .map(|(w, a)| w * a[0])
                .sum::<f64>()
    }

    /// `Dv = W1ᵀ (w2 ⊙ act′(z))`.
    pub(crate) fn grad_from(&self, h: &Hidden) -> Vec<f64> {
        let mut grad = vec![0.0; self.d];
        for ((row, w), a) in self.w1().chunks_exact(self.d).zip(self.w2()).zip(&h.act) {
            let c = w * a[1];
            grad.iter_mut().zip(row).for_each(|(g, r)| *g += c * r);
        }
        grad
    }

    pub fn eval(&self, x: &HVec) -> Result<f64> {
        Ok(self.value_from(&self.hidden(x)?))
    }

    /// Value, gradient and Hessian. The Hessian `W1ᵀ diag(w2 ⊙ act″) W1` is
    /// accumulated on the upper triangle and mirrored.
    pub fn jet(&self, x: &HVec) -> Result<CriticJet> {
        let h = self.hidden(x)?;
        let d = self.d;
        let mut hess = vec![0.0; d * d];
        for ((row, w), a) in self.w1().chunks_exact(d).zip(self.w2()).zip(&h.act) {
            let c = w * a[2];
            for i in 0..d {
                let ci = c * row[i];
                for j in i..d {
                    hess[i * d + j] += ci * row[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                hess[i * d + j] = hess[j * d + i];
            }
        }
        Ok(CriticJet {
            value: self.value_from(&h),
            grad: self.grad_from(&h),
            hess,
        })
    }

    /// `∇_θ v(x)`.
    pub fn param_grad_value(&self, x: &HVec) -> Result<ParamVector> {
        let h = self.hidden(x)?;
        let mut out = vec![0.0; self.params.len()];
        self.accumulate_value_grad(&h, &x.coeffs()[..self.d], 1.0, &mut out);
        Ok(ParamVector(out))
    }

    pub(crate) fn accumulate_value_grad(&self, h: &Hidden, input: &[f64], scale: f64, out: &mut [f64]) {
        let (ob1, ow2, ob2) = self.offsets();
        let d = self.d;
        for k in 0..self.width {
            let a = h.act[k];
            let db1 = scale * self.w2()[k] * a[1];
            out[ob1 + k] += db1;
            out[ow2 + k] += scale * a[0];
            out[k * d..(k + 1) * d]
                .iter_mut()
                .zip(input)
                .for_each(|(o, xi)| *o += db1 * xi);
        }
        out[ob2] += scale;
    }

    /// Parameter derivatives of the value, gradient and Hessian at `x`.
    pub fn param_grad_jet(&self, x: &HVec) -> Result<JetParamGrad<'_>> {
        let hidden = self.hidden(x)?;
        Ok(JetParamGrad {
            net: self,
            input: x.coeffs()[..self.d].to_vec(),
            hidden,
        })
    }

    /// Precomputes `W1_k S W1_kᵀ` and `S W1_kᵀ` for a fixed symmetric `d × d` weight `S`.
    pub fn hessian_pairing(&self, s: &[f64]) -> Result<HessianPairing> {
        let d = self.d;
        if s.len() != d * d {
            return Err(Error::Shape(format!("pairing matrix has {} entries, expected {}", s.len(), d * d)));
        }
        let mut q = Vec::with_capacity(self.width);
        let mut sw = Vec::with_capacity(self.width * d);
        for row in self.w1().chunks_exact(d) {
            let srow: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| s[i * d + j] * row[j]).sum())
                .collect();
            q.push(row.iter().zip(&srow).map(|(a, b)| a * b).sum());
            sw.extend(srow);
        }
        Ok(HessianPairing { q, sw })
    }

    /// `⟨S, D²v(x)⟩_F` for the matrix behind `pairing`.
    pub(crate) fn hessian_pairing_value(&self, h: &Hidden, pairing: &HessianPairing) -> f64 {
        self.w2()
            .iter()
            .zip(&h.act)
            .zip(&pairing.q)
            .map(|((w, a), q)| w * a[2] * q)
            .sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(
            NetKind::Critic,
            self.activation,
            self.d,
            self.width,
            1,
            &self.params,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match Network::from_bytes(bytes)? {
            Network::Critic(c) => Ok(c),
            Network::Actor(_) => Err(Error::Format("checkpoint holds an actor, not a critic".into())),
        }
    }
}

impl Critic for CriticNet {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &HVec) -> Result<f64> {
        self.eval(x)
    }

    fn jet(&self, x: &HVec) -> Result<CriticJet> {
        CriticNet::jet(self, x)
    }
}

/// `q_k = W1_k S W1_kᵀ` and the rows `S W1_kᵀ` for a fixed symmetric `S`.
#[derive(Debug, Clone)]
pub struct HessianPairing {
    q: Vec<f64>,
    sw: Vec<f64>,
}

/// Parameter derivatives of `v`, `⟨p, Dv⟩` and `⟨S, D²v⟩_F` at one input.
pub struct JetParamGrad<'a> {
    net: &'a CriticNet,
    input: Vec<f64>,
    hidden: Hidden,
}

impl JetParamGrad<'_> {
    pub(crate) fn hidden(&self) -> &Hidden {
        &self.hidden
    }

    pub fn value(&self) -> ParamVector {
        let mut out = vec![0.0; self.net.params.len()];
        self.net
            .accumulate_value_grad(&self.hidden, &self.input, 1.0, &mut out);
        ParamVector(out)
    }

    /// `∇_θ ⟨p, Dv(x)⟩` for a coefficient vector `p` of length `d`.
    pub fn grad_pairing(&self, p: &[f64]) -> ParamVector {
        let mut out = vec![0.0; self.net.params.len()];
        self.accumulate_grad_pairing(p, 1.0, &mut out);
        ParamVector(out)
    }

    /// `∇_θ ⟨S, D²v(x)⟩_F` for a symmetric `d × d` matrix `S`.
    pub fn hess_pairing(&self, s: &[f64]) -> Result<ParamVector> {
        let pairing = self.net.hessian_pairing(s)?;
        let mut out = vec![0.0; self.net.params.len()];
        self.accumulate_hess_pairing(&pairing, 1.0, &mut out);
        Ok(ParamVector(out))
    }

    pub(crate) fn accumulate_grad_pairing(&self, p: &[f64], scale: f64, out: &mut [f64]) {
        let net = self.net;
        let d = net.d;
        let (ob1, ow2, _) = net.offsets();
        let w1 = net.w1();
        let w2 = net.w2();
        for k in 0..net.width {
            let row = &w1[k * d..(k + 1) * d];
            let r: f64 = row.iter().zip(p).map(|(a, b)| a * b).sum();
            let a = self.hidden.act[k];
            out[ow2 + k] += scale * a[1] * r;
            let c2 = scale * w2[k] * a[2] * r;
            out[ob1 + k] += c2;
            let c1 = scale * w2[k] * a[1];
            out[k * d..(k + 1) * d]
                .iter_mut()
                .zip(&self.input)
                .zip(p)
                .for_each(|((o, xi), pi)| *o += c2 * xi + c1 * pi);
        }
    }

    pub(crate) fn accumulate_hess_pairing(&self, pairing: &HessianPairing, scale: f64, out: &mut [f64]) {
        let net = self.net;
        let d = net.d;
        let (ob1, ow2, _) = net.offsets();
        let w2 = net.w2();
        for k in 0..net.width {
            let a = self.hidden.act[k];
            let q = pairing.q[k];
            out[ow2 + k] += scale * a[2] * q;
            let c3 = scale * w2[k] * a[3] * q;
            out[ob1 + k] += c3;
            let c2 = 2.0 * scale * w2[k] * a[2];
            out[k * d..(k + 1) * d]
                .iter_mut()
                .zip(&self.input)
                .zip(&pairing.sw[k * d..(k + 1) * d])
                .for_each(|((o, xi), swi)| *o += c3 * xi + c2 * swi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    d: usize,
    p: usize,
    width: usize,
    activation: Activation,
    params: Vec<f64>,
}

impl ActorNet {
    pub fn param_count(d: usize, p: usize, width: usize) -> usize {
        width * d + width + p * width + p
    }

    pub fn zeros(d: usize, p: usize, width: usize) -> Self {
        Self {
            d,
            p,
            width,
            activation: Activation::Tanh,
            params: vec![0.0; Self::param_count(d, p, width)],
        }
    }

    pub fn init(d: usize, p: usize, width: usize, seed: u64) -> Self {
        let mut net = Self::zeros(d, p, width);
        let mut stream = NormalStream::new(seed, TAG_INIT, 1, 0);
        let w1 = normal_init(width * d, 1.0 / (d as f64).sqrt(), &mut stream);
        let w2 = normal_init(p * width, 1.0 / (width as f64).sqrt(), &mut stream);
        net.params[..width * d].copy_from_slice(&w1);
        let off = width * d + width;
        net.params[off..off + p * width].copy_from_slice(&w2);
        net
    }

    pub fn from_params(
        d: usize,
        p: usize,
        width: usize,
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self> {
        if params.len() != Self::param_count(d, p, width) {
            return Err(Error::Shape(format!(
                "actor with d = {d}, p = {p}, W = {width} needs {} parameters, got {}",
                Self::param_count(d, p, width),
                params.len()
            )));
        }
        Ok(Self {
            d,
            p,
            width,
            activation,
            params,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1(&self) -> &[f64] {
        &self.params[..self.width * self.d]
    }

    fn b1(&self) -> &[f64] {
        let o = self.width * self.d;
        &self.params[o..o + self.width]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.width * self.d + self.width;
        &self.params[o..o + self.p * self.width]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.params.len() - self.p..]
    }

    fn hidden(&self, x: &HVec) -> Result<Hidden> {
        check_encoder(self.d, x)?;
        Ok(hidden_layer(
            self.activation,
            self.w1(),
            self.b1(),
            self.d,
            &x.coeffs()[..self.d],
        ))
    }

    /// The control `Σ_{j≤p} u_j(x) e_j`, returned with `p` coefficients.
    pub fn eval(&self, x: &HVec) -> Result<HVec> {
        let h = self.hidden(x)?;
        let out = self
            .w2()
            .chunks_exact(self.width)
            .zip(self.b2())
            .map(|(row, b)| b + row.iter().zip(&h.act).map(|(w, a)| w * a[0]).sum::<f64>())
            .collect();
        Ok(HVec::from_coeffs(out))
    }

    /// `∇_φ ⟨w, u(x)⟩`; `w` is read on its first `p` modes.
    pub fn param_grad(&self, x: &HVec, w: &HVec) -> Result<ParamVector> {
        let mut out = vec![0.0; self.params.len()];
        self.accumulate_param_grad(x, w.coeffs(), 1.0, &mut out)?;
        Ok(ParamVector(out))
    }

    pub(crate) fn accumulate_param_grad(&self, x: &HVec, w: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        let h = self.hidden(x)?;
        let (d, p, width) = (self.d, self.p, self.width);
        let weight = |j: usize| w.get(j).copied().unwrap_or(0.0);
        let ob1 = width * d;
        let ow2 = ob1 + width;
        let ob2 = ow2 + p * width;
        let w2 = self.w2();
        let input = &x.coeffs()[..d];
        for j in 0..p {
            let wj = scale * weight(j);
            out[ob2 + j] += wj;
            out[ow2 + j * width..ow2 + (j + 1) * width]
                .iter_mut()
                .zip(&h.act)
                .for_each(|(o, a)| *o += wj * a[0]);
        }
        for k in 0..width {
            let back: f64 = (0..p).map(|j| weight(j) * w2[j * width + k]).sum();
            let c = scale * back * h.act[k][1];
            out[ob1 + k] += c;
            out[k * d..(k + 1) * d]
                .iter_mut()
                .zip(input)
                .for_each(|(o, xi)| *o += c * xi);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(
            NetKind::Actor,
            self.activation,
            self.d,
            self.width,
            self.p,
            &self.params,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match Network::from_bytes(bytes)? {
            Network::Actor(a) => Ok(a),
            Network::Critic(_) => Err(Error::Format("checkpoint holds a critic, not an actor".into())),
        }
    }
}

/// A decoded `.hgno` checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Critic(CriticNet),
    Actor(ActorNet),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NetKind {
    Critic = 0,
    Actor = 1,
}

pub const MAGIC: &[u8; 4] = b"HGNO";
pub const FORMAT_VERSION: u16 = 1;
/// magic, version u16, kind u8, activation u8, d u32, width u32, p u32, count u64
pub const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 + 4 + 4 + 8;

fn encode(kind: NetKind, activation: Activation, d: usize, width: usize, p: usize, params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    out.push(activation.id());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(p as u32).to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Network::Critic(c) => c.to_bytes(),
            Network::Actor(a) => a.to_bytes(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "checkpoint of {} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let kind = bytes[6];
        let activation = Activation::from_id(bytes[7])?;
        let d = u32_at(8);
        let width = u32_at(12);
        let p = u32_at(16);
        let count = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        let expected = match kind {
            0 => CriticNet::param_count(d, width),
            1 => ActorNet::param_count(d, p, width),
            other => return Err(Error::Format(format!("unknown network kind {other}"))),
        };
        if count != expected {
            return Err(Error::Format(format!(
                "header declares {count} parameters but d = {d}, W = {width}, p = {p} implies {expected}"
            )));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * count {
            return Err(Error::Format(format!(
                "payload has {} bytes, header implies {}",
                body.len(),
                8 * count
            )));
        }
        let params: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(match kind {
            0 => Network::Critic(CriticNet::from_params(d, width, activation, params)?),
            _ => Network::Actor(ActorNet::from_params(d, p, width, activation, params)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FD_STEP: f64 = 1e-5;

    fn random_critic(d: usize, width: usize, seed: u64) -> CriticNet {
        let mut net = CriticNet::init(d, width, seed);
        // nonzero biases so that every parameter block is exercised
        let mut s = NormalStream::new(seed, 77, 0, 0);
        let (ob1, _, ob2) = net.offsets();
        for k in 0..width {
            net.params[ob1 + k] = 0.3 * s.normal();
        }
        net.params[ob2] = 0.1 * s.normal();
        net
    }

    fn random_point(len: usize, seed: u64) -> HVec {
        let mut s = NormalStream::new(seed, 78, 0, 0);
        HVec::from_coeffs((1..=len).map(|n| s.normal() / n as f64).collect())
    }

    fn fd_params<F: Fn(&[f64]) -> f64>(params: &[f64], f: F) -> Vec<f64> {
        let mut work = params.to_vec();
        (0..params.len())
            .map(|i| {
                let orig = work[i];
                work[i] = orig + FD_STEP;
                let up = f(&work);
                work[i] = orig - FD_STEP;
                let down = f(&work);
                work[i] = orig;
                (up - down) / (2.0 * FD_STEP)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        diff / scale.max(1e-12)
    }

    fn with_params(net: &CriticNet, params: &[f64]) -> CriticNet {
        CriticNet::from_params(net.d, net.width, net.activation, params.to_vec()).unwrap()
    }

    #[test]
    fn tanh_derivatives_match_fd() {
        for z in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            let [_, d1, d2, d3] = Activation::Tanh.derivatives(z);
            let h = 1e-5;
            let f = |z: f64| Activation::Tanh.derivatives(z);
            assert_abs_diff_eq!(d1, (f(z + h)[0] - f(z - h)[0]) / (2.0 * h), epsilon = 1e-9);
            assert_abs_diff_eq!(d2, (f(z + h)[1] - f(z - h)[1]) / (2.0 * h), epsilon = 1e-9);
            assert_abs_diff_eq!(d3, (f(z + h)[2] - f(z - h)[2]) / (2.0 * h), epsilon = 1e-9);
        }
    }

    #[test]
    fn critic_eval_examples() {
        let zero = CriticNet::zeros(3, 5);
        assert_eq!(zero.eval(&random_point(6, 1)).unwrap(), 0.0);

        let mut unit = CriticNet::zeros(3, 5);
        let (_, ow2, _) = unit.offsets();
        unit.params[ow2] = 1.0;
        assert_eq!(unit.eval(&random_point(6, 2)).unwrap(), 0.0);

        let scalar = CriticNet::from_params(1, 1, Activation::Tanh, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let x = HVec::unit(1, 4).scaled(0.5);
        assert_abs_diff_eq!(scalar.eval(&x).unwrap(), 0.462_117_157_260_009_8, epsilon = 1e-15);

        assert!(matches!(
            CriticNet::zeros(4, 2).eval(&HVec::zeros(3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn critic_jet_examples() {
        let jet = CriticNet::zeros(3, 4).jet(&random_point(5, 3)).unwrap();
        assert_eq!(jet, CriticJet::zeros(3));

        let scalar = CriticNet::from_params(1, 1, Activation::Tanh, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let jet = scalar.jet(&HVec::zeros(2)).unwrap();
        assert_eq!(jet.value, 0.0);
        assert_eq!(jet.grad, vec![1.0]);
        assert_eq!(jet.hess, vec![0.0]);
    }

    #[test]
    fn jet_matches_finite_differences() {
        for seed in 0..10 {
            let net = random_critic(4, 7, seed);
            let x = random_point(9, seed + 100);
            let jet = net.jet(&x).unwrap();
            assert!(jet.is_symmetric());
            for i in 0..4 {
                let mut up = x.clone();
                up.coeffs_mut()[i] += FD_STEP;
                let mut down = x.clone();
                down.coeffs_mut()[i] -= FD_STEP;
                let fd = (net.eval(&up).unwrap() - net.eval(&down).unwrap()) / (2.0 * FD_STEP);
                assert!((fd - jet.grad[i]).abs() < 1e-6 * (1.0 + jet.grad[i].abs()));
                let gu = net.jet(&up).unwrap().grad;
                let gd = net.jet(&down).unwrap().grad;
                for j in 0..4 {
                    let fd_ij = (gu[j] - gd[j]) / (2.0 * FD_STEP);
                    // symmetrized finite-difference Hessian
                    let mut up_j = x.clone();
                    up_j.coeffs_mut()[j] += FD_STEP;
                    let mut down_j = x.clone();
                    down_j.coeffs_mut()[j] -= FD_STEP;
                    let fd_ji = (net.jet(&up_j).unwrap().grad[i] - net.jet(&down_j).unwrap().grad[i])
                        / (2.0 * FD_STEP);
                    let sym = 0.5 * (fd_ij + fd_ji);
                    assert!((sym - jet.hess_at(i, j)).abs() < 1e-6, "hess[{i},{j}]");
                }
            }
        }
    }

    #[test]
    fn value_param_grad() {
        let net = random_critic(3, 6, 4);
        let x = random_point(5, 5);
        let g = net.param_grad_value(&x).unwrap();
        let (_, ow2, ob2) = net.offsets();
        assert_eq!(g.0[ob2], 1.0);
        let h = net.hidden(&x).unwrap();
        for k in 0..6 {
            assert_eq!(g.0[ow2 + k], h.act[k][0]);
        }
        let fd = fd_params(net.params(), |p| with_params(&net, p).eval(&x).unwrap());
        assert!(rel_err(&g.0, &fd) < 1e-6);
    }

    #[test]
    fn jet_param_grad_pairings() {
        for seed in 0..8 {
            let net = random_critic(2, 3, seed);
            let x = random_point(4, seed + 10);
            let jpg = net.param_grad_jet(&x).unwrap();
            assert!(jpg.grad_pairing(&[0.0, 0.0]).0.iter().all(|v| *v == 0.0));
            assert!(jpg.hess_pairing(&[0.0; 4]).unwrap().0.iter().all(|v| *v == 0.0));

            let p = [0.7, -1.3];
            let analytic = jpg.grad_pairing(&p);
            let fd = fd_params(net.params(), |q| {
                let g = with_params(&net, q).jet(&x).unwrap().grad;
                g[0] * p[0] + g[1] * p[1]
            });
            assert!(rel_err(&analytic.0, &fd) < 1e-5, "grad pairing seed {seed}");

            // trace weighted by a diagonal, and a general symmetric S
            for s in [[0.5, 0.0, 0.0, 0.25], [0.4, -0.2, -0.2, 1.1]] {
                let analytic = jpg.hess_pairing(&s).unwrap();
                let fd = fd_params(net.params(), |q| {
                    let h = with_params(&net, q).jet(&x).unwrap().hess;
                    h.iter().zip(&s).map(|(a, b)| a * b).sum()
                });
                assert!(rel_err(&analytic.0, &fd) < 1e-5, "hess pairing seed {seed}");
            }
            assert_eq!(jpg.value(), net.param_grad_value(&x).unwrap());
        }
    }

    #[test]
    fn actor_examples() {
        let zero = ActorNet::zeros(3, 2, 4);
        assert_eq!(zero.eval(&random_point(5, 1)).unwrap(), HVec::zeros(2));

        // W1 = [1], b1 = [0], W2 = [1], b2 = [0]
        let a = ActorNet::from_params(1, 1, 1, Activation::Tanh, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let u = a.eval(&HVec::unit(1, 3).scaled(0.5)).unwrap();
        assert_abs_diff_eq!(u.coeff(1), 0.5f64.tanh(), epsilon = 1e-15);

        // p = 1 has the critic's shape
        let c = CriticNet::from_params(1, 1, Activation::Tanh, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let x = HVec::unit(1, 3).scaled(0.5);
        assert_eq!(u.coeff(1), c.eval(&x).unwrap());
    }

    #[test]
    fn actor_param_grad_matches_fd() {
        for seed in 0..8 {
            let mut a = ActorNet::init(3, 2, 5, seed);
            let mut s = NormalStream::new(seed, 5, 5, 5);
            let o = a.width * a.d;
            for k in 0..a.width {
                a.params[o + k] = 0.2 * s.normal();
            }
            let x = random_point(6, seed);
            let w = HVec::from_coeffs(vec![0.8, -0.4]);
            let g = a.param_grad(&x, &w).unwrap();
            let nb = a.params.len();
            assert_eq!(g.0[nb - 2], 0.8);
            assert_eq!(g.0[nb - 1], -0.4);
            assert!(a.param_grad(&x, &HVec::zeros(2)).unwrap().0.iter().all(|v| *v == 0.0));
            let fd = fd_params(a.params(), |q| {
                let b = ActorNet::from_params(a.d, a.p, a.width, a.activation, q.to_vec()).unwrap();
                b.eval(&x).unwrap().inner(&w)
            });
            assert!(rel_err(&g.0, &fd) < 1e-6);
        }
    }

    #[test]
    fn serialization() {
        let c = random_critic(25, 600, 3);
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * (600 * 25 + 2 * 600 + 1));
        assert_eq!(CriticNet::from_bytes(&bytes).unwrap(), c);
        assert!(CriticNet::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(CriticNet::from_bytes(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CriticNet::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[4] = 9;
        assert!(CriticNet::from_bytes(&bad).is_err());

        let a = ActorNet::init(4, 3, 7, 1);
        let bytes = a.to_bytes();
        assert_eq!(ActorNet::from_bytes(&bytes).unwrap(), a);
        assert!(CriticNet::from_bytes(&bytes).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn encoder_locality(seed in 0u64..1000, tail in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let net = random_critic(3, 5, seed);
            let x = random_point(9, seed);
            let mut y = x.clone();
            y.coeffs_mut()[3..].copy_from_slice(&tail);
            prop_assert_eq!(net.eval(&x).unwrap(), net.eval(&y).unwrap());
        }

        #[test]
        fn actor_output_bounded(seed in 0u64..1000, scale in 0.1f64..50.0) {
            let a = ActorNet::init(4, 3, 6, seed);
            let x = random_point(6, seed).scaled(scale);
            let u = a.eval(&x).unwrap();
            let w2_norm = a.w2().iter().map(|v| v * v).sum::<f64>().sqrt();
            let b2_norm = a.b2().iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = w2_norm * (a.width as f64).sqrt() * a.activation.bound() + b2_norm;
            prop_assert!(u.norm() <= bound + 1e-12);
        }

        #[test]
        fn checkpoint_round_trip(d in 1usize..6, w in 1usize..9, seed in 0u64..100) {
            let c = random_critic(d, w, seed);
            prop_assert_eq!(CriticNet::from_bytes(&c.to_bytes()).unwrap(), c);
        }
    }
}
