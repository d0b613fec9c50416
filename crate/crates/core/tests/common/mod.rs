//! Independent reference computations shared by the integration tests.
//!
//! Everything here works on plain arrays of complex numbers and never calls
//! into the library's linear algebra.

#![allow(dead_code)]

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use proptest::prelude::*;

pub type C = Complex64;
pub type M2 = [[C; 2]; 2];

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn bs2() -> M2 {
    let h = FRAC_1_SQRT_2;
    [[c(h, 0.0), c(0.0, h)], [c(0.0, h), c(h, 0.0)]]
}

pub fn mirrors2() -> M2 {
    [[c(0.0, 0.0), c(0.0, 1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
}

/// Phase `e^{iφ}` on the `y` amplitude.
pub fn phase_b2(phi: f64) -> M2 {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), C::from_polar(1.0, phi)]]
}

pub fn mul2(a: &M2, b: &M2) -> M2 {
    let mut out = [[c(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn apply2(m: &M2, v: [C; 2]) -> [C; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `Prob{X}` for `BS · M · Φ(φ) · BS |x⟩`.
pub fn mzi_prob_x(phi: f64) -> f64 {
    let u = mul2(&bs2(), &mul2(&mirrors2(), &mul2(&phase_b2(phi), &bs2())));
    apply2(&u, [c(1.0, 0.0), c(0.0, 0.0)])[0].norm_sqr()
}

/// Final `Prob{X}` per which-way outcome after BS₁, readout, mirrors, BS₂,
/// computed by brute force on both collapse branches.
pub fn which_way_branches() -> [(f64, f64); 2] {
    let after_bs1 = apply2(&bs2(), [c(1.0, 0.0), c(0.0, 0.0)]);
    let tail = mul2(&bs2(), &mirrors2());
    let mut out = [(0.0, 0.0); 2];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut collapsed = [c(0.0, 0.0); 2];
        collapsed[k] = after_bs1[k] / after_bs1[k].norm();
        let fin = apply2(&tail, collapsed);
        *slot = (after_bs1[k].norm_sqr(), fin[0].norm_sqr());
    }
    out
}

/// Amplitudes `ψ[direction][photon]` (atom in `g`) of the entangled output
/// state for an optional phase `φ` on path B, built by propagating the two
/// path components separately: path A carries photon A, path B photon B.
pub fn entangled_out(phi: f64) -> [[C; 3]; 2] {
    let after_bs1 = apply2(&bs2(), [c(1.0, 0.0), c(0.0, 0.0)]);
    let tail = mul2(&bs2(), &mul2(&mirrors2(), &phase_b2(phi)));
    let mut psi = [[c(0.0, 0.0); 3]; 2];
    for (path, photon) in [(0usize, 1usize), (1, 2)] {
        let mut comp = [c(0.0, 0.0); 2];
        comp[path] = after_bs1[path];
        let out = apply2(&tail, comp);
        for d in 0..2 {
            psi[d][photon] += out[d];
        }
    }
    psi
}

/// Joint `(abs, detector)` probabilities for symmetric-mode absorption with
/// efficiency `eta`, by expanding the photon state in the `(A ± B)/√2` basis.
/// Index: `[absorbed as usize][direction]`.
pub fn eraser_joint(eta: f64, phi: f64) -> [[f64; 2]; 2] {
    let psi = entangled_out(phi);
    let h = FRAC_1_SQRT_2;
    let mut out = [[0.0; 2]; 2];
    for d in 0..2 {
        let sym = (psi[d][1] + psi[d][2]) * h;
        let anti = (psi[d][1] - psi[d][2]) * h;
        out[1][d] = eta * sym.norm_sqr();
        out[0][d] = (1.0 - eta) * sym.norm_sqr() + anti.norm_sqr() + psi[d][0].norm_sqr();
    }
    out
}

/// Binomial 5σ half-width.
pub fn five_sigma(p: f64, n: u64) -> f64 {
    5.0 * (p * (1.0 - p) / n as f64).sqrt()
}

pub fn complex() -> impl Strategy<Value = C> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| c(re, im))
}

pub fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C>> {
    proptest::collection::vec(complex(), n)
}

/// Random `n × n` unitary (row-major) from Gram–Schmidt on random columns.
pub fn random_unitary(n: usize) -> impl Strategy<Value = Vec<C>> {
    complex_vec(n * n).prop_filter_map("degenerate columns", move |raw| {
        let mut cols: Vec<Vec<C>> = (0..n).map(|j| (0..n).map(|i| raw[i * n + j]).collect()).collect();
        for j in 0..n {
            for k in 0..j {
                let proj: C = (0..n).map(|i| cols[k][i].conj() * cols[j][i]).sum();
                let (done, rest) = cols.split_at_mut(j);
                for (z, v) in rest[0].iter_mut().zip(&done[k]) {
                    *z -= proj * v;
                }
            }
            let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-3 {
                return None;
            }
            cols[j].iter_mut().for_each(|z| *z /= norm);
        }
        Some((0..n * n).map(|k| cols[k % n][k / n]).collect())
    })
}

/// Random normalized vector of length `n`.
pub fn random_state(n: usize) -> impl Strategy<Value = Vec<C>> {
    complex_vec(n).prop_filter_map("zero vector", |v| {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (norm > 1e-3).then(|| v.iter().map(|z| z / norm).collect())
    })
}
