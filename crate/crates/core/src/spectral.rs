//! Truncated arithmetic on `H = L²([0, 2π])` in the Dirichlet sine eigenbasis
//! `e_n(ξ) = sin(nξ/2)/√π`, `n = 1, 2, …`.
//!
//! Modes are labelled from 1 in all public docs and arguments that take a mode
//! number `n`. Storage is 0-based: mode `n` lives at `coeffs[n - 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Eigenvalue of `-∂²/∂ξ²` with Dirichlet conditions on `[0, 2π]` for mode `n`.
#[inline]
pub fn eigenvalue(n: usize) -> f64 {
    let n = n as f64;
    n * n / 4.0
}

/// The sine basis truncated at `n_max` modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Basis {
    n_max: usize,
}

impl Basis {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::config("n_max", "must be positive"));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `λ_n = n²/4` for `n = 1..=n_max`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.n_max).map(eigenvalue).collect()
    }

    /// `e_n(ξ)`; errors when `n` or `ξ` leave `[1, n_max] × [0, 2π]`.
    pub fn eval(&self, n: usize, xi: f64) -> Result<f64> {
        if n == 0 || n > self.n_max {
            return Err(Error::Domain(format!(
                "mode {n} outside 1..={}",
                self.n_max
            )));
        }
        if !(0.0..=TWO_PI).contains(&xi) {
            return Err(Error::Domain(format!("xi = {xi} outside [0, 2pi]")));
        }
        Ok(basis_fn(n, xi))
    }

    /// Coefficients `⟨f, e_n⟩` for `n ≤ len`, by composite Simpson with
    /// `16·max(len, 64)` panels.
    pub fn project_function<F: Fn(f64) -> f64>(&self, f: F, len: usize) -> Result<HVec> {
        self.project_function_with_panels(f, len, default_panels(len))
    }

    pub fn project_function_with_panels<F: Fn(f64) -> f64>(
        &self,
        f: F,
        len: usize,
        panels: usize,
    ) -> Result<HVec> {
        self.check_len(len)?;
        if panels < 2 || panels % 2 != 0 {
            return Err(Error::config("panels", "Simpson needs an even panel count >= 2"));
        }
        let h = TWO_PI / panels as f64;
        let samples: Vec<f64> = (0..=panels).map(|j| f(j as f64 * h)).collect();
        Ok(simpson_project(&samples, len))
    }

    /// Same as [`Basis::project_function`] for samples on a uniform grid
    /// `ξ_j = 2πj/(G-1)`, `j = 0..G`. `G - 1` must be even.
    pub fn project_grid(&self, values: &[f64], len: usize) -> Result<HVec> {
        self.check_len(len)?;
        if values.len() < 3 || (values.len() - 1) % 2 != 0 {
            return Err(Error::Shape(format!(
                "grid of {} points does not have an even panel count",
                values.len()
            )));
        }
        Ok(simpson_project(values, len))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == 0 || len > self.n_max {
            return Err(Error::config(
                "modes",
                format!("truncation {len} outside 1..={}", self.n_max),
            ));
        }
        Ok(())
    }
}

fn default_panels(len: usize) -> usize {
    16 * len.max(64)
}

#[inline]
pub(crate) fn basis_fn(n: usize, xi: f64) -> f64 {
    (n as f64 * xi / 2.0).sin() / PI.sqrt()
}

fn simpson_project(samples: &[f64], len: usize) -> HVec {
    let panels = samples.len() - 1;
    let h = TWO_PI / panels as f64;
    let weights: Vec<f64> = (0..=panels)
        .map(|j| {
            let w = if j == 0 || j == panels {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    let coeffs = (1..=len)
        .map(|n| {
            samples
                .iter()
                .zip(&weights)
                .enumerate()
                .map(|(j, (f, w))| f * w * basis_fn(n, j as f64 * h))
                .sum()
        })
        .collect();
    HVec::from_coeffs(coeffs)
}

/// A point of `H` given by its first `len()` sine coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HVec {
    coeffs: Vec<f64>,
}

impl HVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            coeffs: vec![0.0; len],
        }
    }

    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// The basis vector `e_n` truncated at `len` modes.
    pub fn unit(n: usize, len: usize) -> Self {
        assert!(n >= 1 && n <= len, "mode {n} outside 1..={len}");
        let mut x = Self::zeros(len);
        x.coeffs[n - 1] = 1.0;
        x
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of mode `n` (1-based); zero beyond the truncation.
    pub fn coeff(&self, n: usize) -> f64 {
        assert!(n >= 1, "modes are numbered from 1");
        self.coeffs.get(n - 1).copied().unwrap_or(0.0)
    }

    /// Parseval inner product; the shorter vector is zero-padded.
    pub fn inner(&self, other: &HVec) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Zero-padded or truncated copy with exactly `len` coefficients.
    pub fn resized(&self, len: usize) -> HVec {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(len, 0.0);
        HVec { coeffs }
    }

    pub fn scaled(&self, c: f64) -> HVec {
        HVec::from_coeffs(self.coeffs.iter().map(|x| c * x).collect())
    }

    /// Sum, with the result as long as the longer operand.
    pub fn add(&self, other: &HVec) -> HVec {
        let len = self.len().max(other.len());
        HVec::from_coeffs((1..=len).map(|n| self.coeff(n) + other.coeff(n)).collect())
    }

    pub fn sub(&self, other: &HVec) -> HVec {
        self.add(&other.scaled(-1.0))
    }

    /// `Σ x_n e_n(ξ)` evaluated at `ξ`.
    pub fn eval_at(&self, xi: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * basis_fn(i + 1, xi))
            .sum()
    }

    /// Values on `points` evenly spaced nodes covering `[0, 2π]`, endpoints included.
    pub fn eval_grid(&self, points: usize) -> Vec<f64> {
        assert!(points >= 2);
        let h = TWO_PI / (points - 1) as f64;
        (0..points).map(|j| self.eval_at(j as f64 * h)).collect()
    }

    /// Length-prefixed (u64) little-endian f64 array.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.len());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for c in &self.coeffs {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<HVec> {
        let header: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Format("missing HVec length prefix".into()))?;
        let len = u64::from_le_bytes(header) as usize;
        let body = &bytes[8..];
        if body.len() != len.checked_mul(8).unwrap_or(usize::MAX) {
            return Err(Error::Format(format!(
                "HVec declares {len} coefficients but carries {} bytes",
                body.len()
            )));
        }
        let coeffs = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(HVec { coeffs })
    }

    /// Sparse `n1,c1;n2,c2;...` form listing the nonzero modes.
    pub fn to_sparse_csv(&self) -> String {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| format!("{},{}", i + 1, c))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Parses the sparse form into a vector of `len` coefficients.
    pub fn parse_sparse_csv(s: &str, len: usize) -> Result<HVec> {
        let mut x = HVec::zeros(len);
        for entry in s.split(';').map(str::trim).filter(|e| !e.is_empty()) {
            let (n, c) = entry
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("sparse entry `{entry}` is not `n,c`")))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad mode index `{n}`")))?;
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad coefficient `{c}`")))?;
            if n == 0 || n > len {
                return Err(Error::Format(format!("mode {n} outside 1..={len}")));
            }
            x.coeffs[n - 1] = c;
        }
        Ok(x)
    }
}

impl fmt::Display for HVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sparse_csv())
    }
}

impl FromStr for HVec {
    type Err = Error;

    /// Sparse form sized to the largest listed mode.
    fn from_str(s: &str) -> Result<Self> {
        let max_mode = s
            .split(';')
            .filter_map(|e| e.split_once(','))
            .filter_map(|(n, _)| n.trim().parse::<usize>().ok())
            .max()
            .unwrap_or(0);
        HVec::parse_sparse_csv(s, max_mode)
    }
}

/// `A x` with `A = ∂²/∂ξ²`: `(Ax)_n = -λ_n x_n`.
pub fn apply_a(x: &HVec) -> HVec {
    HVec::from_coeffs(
        x.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| -eigenvalue(i + 1) * c)
            .collect(),
    )
}

/// `|(-A)^{1/2} x|² = Σ λ_n x_n² = ∫ (x′)² dξ`.
pub fn dirichlet_energy(x: &HVec) -> f64 {
    x.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| eigenvalue(i + 1) * c * c)
        .sum()
}

/// Orthogonal projection onto `span{e_1, …, e_d}` (kept at the input length).
pub fn project_pd(x: &HVec, d: usize) -> Result<HVec> {
    if d == 0 || d > x.len() {
        return Err(Error::config(
            "d",
            format!("projection rank {d} outside 1..={}", x.len()),
        ));
    }
    let mut out = x.clone();
    out.coeffs[d..].iter_mut().for_each(|c| *c = 0.0);
    Ok(out)
}

/// Burgers nonlinearity `B(x) = x x′` in coefficient space, truncated to the
/// input length `N`:
///
/// `(B x)_n = n/(8√π) Σ_{m<n} x_m x_{n-m} − n/(4√π) Σ_{m≤N-n} x_m x_{n+m}`.
pub fn burgers_b(x: &HVec) -> HVec {
    burgers_b_modes(x, x.len())
}

/// The first `upto` coefficients of [`burgers_b`], in `O(upto · N)`.
pub fn burgers_b_modes(x: &HVec, upto: usize) -> HVec {
    let c = &x.coeffs;
    let len = c.len();
    let upto = upto.min(len);
    let sqrt_pi = PI.sqrt();
    let out = (1..=upto)
        .map(|n| {
            // 0-based: x_m -> c[m-1]
            let mut low = 0.0;
            for m in 1..n {
                low += c[m - 1] * c[n - m - 1];
            }
            let mut high = 0.0;
            for m in 1..=(len - n) {
                high += c[m - 1] * c[n + m - 1];
            }
            let n = n as f64;
            n / (8.0 * sqrt_pi) * low - n / (4.0 * sqrt_pi) * high
        })
        .collect();
    HVec::from_coeffs(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn basis() -> Basis {
        Basis::new(512).unwrap()
    }

    #[test]
    fn eval_basis_examples() {
        let b = basis();
        assert_abs_diff_eq!(b.eval(2, PI).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.eval(1, PI).unwrap(), 0.564_189_583_547_756_3, epsilon = 1e-15);
        assert_abs_diff_eq!(b.eval(4, PI / 2.0).unwrap(), 0.0, epsilon = 1e-15);
        assert!(b.eval(0, 1.0).is_err());
        assert!(b.eval(513, 1.0).is_err());
        assert!(b.eval(1, -0.1).is_err());
        assert!(b.eval(1, 7.0).is_err());
    }

    #[test]
    fn eigenvalues_exact_and_increasing() {
        let ev = basis().eigenvalues();
        assert_eq!(ev[1], 1.0);
        assert_eq!(ev[3], 4.0);
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(eigenvalue(1 << 26), ((1u64 << 52) / 4) as f64);
    }

    #[test]
    fn quadrature_orthonormality() {
        let b = basis();
        for n in 1..=8 {
            let proj = b.project_function(|xi| basis_fn(n, xi), 8).unwrap();
            for m in 1..=8 {
                let expected = if m == n { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(proj.coeff(m), expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn project_function_examples() {
        let b = basis();
        let zero = b.project_function(|_| 0.0, 10).unwrap();
        assert!(zero.coeffs().iter().all(|c| *c == 0.0));

        let s = b.project_function(f64::sin, 10).unwrap();
        assert_abs_diff_eq!(s.coeff(2), PI.sqrt(), epsilon = 1e-8);
        for n in (1..=10).filter(|n| *n != 2) {
            assert_abs_diff_eq!(s.coeff(n), 0.0, epsilon = 1e-8);
        }

        let c = b.project_function(|_| 1.0 / TWO_PI.sqrt(), 10).unwrap();
        for n in 1..=10 {
            let expected = if n % 2 == 1 {
                2.0 * 2f64.sqrt() / (n as f64 * PI)
            } else {
                0.0
            };
            assert_abs_diff_eq!(c.coeff(n), expected, epsilon = 1e-8);
        }

        assert!(b.project_function(|_| 0.0, 513).is_err());
    }

    #[test]
    fn inner_and_norm() {
        let y = HVec::from_coeffs(vec![1.0, -2.0]);
        assert_eq!(HVec::zeros(2).inner(&y), 0.0);
        assert_eq!(HVec::unit(1, 3).inner(&HVec::unit(1, 3)), 1.0);
        assert_eq!(HVec::from_coeffs(vec![3.0, 4.0]).norm(), 5.0);
        // zero padding of the shorter operand
        assert_eq!(HVec::from_coeffs(vec![1.0]).inner(&y), 1.0);
    }

    #[test]
    fn apply_a_and_energy() {
        assert_eq!(apply_a(&HVec::zeros(4)), HVec::zeros(4));
        assert_eq!(apply_a(&HVec::unit(2, 4)).coeff(2), -1.0);
        assert_eq!(apply_a(&HVec::unit(4, 4)).coeff(4), -4.0);
        assert_eq!(dirichlet_energy(&HVec::zeros(3)), 0.0);
        assert_eq!(dirichlet_energy(&HVec::unit(2, 3)), 1.0);
        assert_eq!(dirichlet_energy(&HVec::from_coeffs(vec![1.0, 1.0])), 1.25);
    }

    #[test]
    fn burgers_hand_examples() {
        let sqrt_pi = PI.sqrt();
        assert_eq!(burgers_b(&HVec::zeros(8)), HVec::zeros(8));
        let b1 = burgers_b(&HVec::unit(1, 8));
        for n in 1..=8 {
            let expected = if n == 2 { 1.0 / (4.0 * sqrt_pi) } else { 0.0 };
            assert_abs_diff_eq!(b1.coeff(n), expected, epsilon = 1e-16);
        }
        let b2 = burgers_b(&HVec::unit(2, 8));
        for n in 1..=8 {
            let expected = if n == 4 { 1.0 / (2.0 * sqrt_pi) } else { 0.0 };
            assert_abs_diff_eq!(b2.coeff(n), expected, epsilon = 1e-16);
        }
    }

    #[test]
    fn burgers_head_matches_full() {
        let x = HVec::from_coeffs((1..=20).map(|n| 1.0 / (n * n) as f64).collect());
        let full = burgers_b(&x);
        let head = burgers_b_modes(&x, 7);
        assert_eq!(head.coeffs(), &full.coeffs()[..7]);
    }

    #[test]
    fn project_pd_examples() {
        let x = HVec::from_coeffs(vec![1.0, 2.0, 3.0]);
        assert_eq!(project_pd(&x, 3).unwrap(), x);
        assert_eq!(project_pd(&HVec::unit(5, 6), 3).unwrap(), HVec::zeros(6));
        let y = HVec::unit(2, 8).add(&HVec::unit(7, 8));
        assert_eq!(project_pd(&y, 4).unwrap(), HVec::unit(2, 8));
        assert!(project_pd(&x, 0).is_err());
        assert!(project_pd(&x, 4).is_err());
    }

    #[test]
    fn sparse_csv_and_bytes() {
        let x = HVec::parse_sparse_csv("1,0.5; 3,-2", 4).unwrap();
        assert_eq!(x.coeffs(), &[0.5, 0.0, -2.0, 0.0]);
        assert_eq!(x.to_sparse_csv(), "1,0.5;3,-2");
        assert_eq!("2,1".parse::<HVec>().unwrap().coeffs(), &[0.0, 1.0]);
        assert!(HVec::parse_sparse_csv("5,1", 4).is_err());
        assert!(HVec::parse_sparse_csv("x", 4).is_err());

        let bytes = x.to_le_bytes();
        assert_eq!(HVec::from_le_bytes(&bytes).unwrap(), x);
        assert!(HVec::from_le_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    fn coeffs_strategy() -> impl Strategy<Value = Vec<f64>> {
        (1usize..24).prop_flat_map(|n| proptest::collection::vec(-3.0f64..3.0, n))
    }

    proptest! {
        #[test]
        fn cauchy_schwarz(a in coeffs_strategy(), b in coeffs_strategy()) {
            let n = a.len().min(b.len());
            let x = HVec::from_coeffs(a[..n].to_vec());
            let y = HVec::from_coeffs(b[..n].to_vec());
            prop_assert!(x.inner(&y).abs() <= x.norm() * y.norm() * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn a_is_self_adjoint(a in coeffs_strategy(), b in coeffs_strategy()) {
            let n = a.len().min(b.len());
            let x = HVec::from_coeffs(a[..n].to_vec());
            let y = HVec::from_coeffs(b[..n].to_vec());
            let lhs = apply_a(&x).inner(&y);
            let rhs = x.inner(&apply_a(&y));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            prop_assert_eq!(dirichlet_energy(&x), -apply_a(&x).inner(&x));
        }

        #[test]
        fn projection_idempotent(a in coeffs_strategy(), d in 1usize..24) {
            let x = HVec::from_coeffs(a);
            let d = d.min(x.len());
            let p = project_pd(&x, d).unwrap();
            prop_assert_eq!(project_pd(&p, d).unwrap(), p.clone());
            prop_assert!(p.norm() <= x.norm());
        }

        #[test]
        fn sparse_csv_round_trip(a in coeffs_strategy()) {
            let x = HVec::from_coeffs(a);
            let back = HVec::parse_sparse_csv(&x.to_sparse_csv(), x.len()).unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
