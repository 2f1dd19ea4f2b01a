#![allow(dead_code, clippy::needless_range_loop)]

use faer::Mat;
use nhqrc::dynamics::{trace_distance, DensityMatrix};
use nhqrc::linalg::{adjoint, c64, expm, matmul, trace, CMat};
use nhqrc::oracles::*;
use nhqrc::spin::{embed_pauli, Axis};

pub fn pauli(a: Axis) -> CMat {
    embed_pauli(a, 0, 1).unwrap()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// `W = exp(−itH) exp(−iΘσˣ)` from the dense engine.
pub fn engine_propagator(p: &TwoLevelParams) -> CMat {
    let u = expm(twolevel_generator(p.h, p.gamma).as_ref(), c64::new(0.0, -p.t)).unwrap();
    let r = expm(pauli(Axis::X).as_ref(), c64::new(0.0, -p.theta * p.t_prime)).unwrap();
    matmul(u.as_ref(), r.as_ref())
}

/// Pauli components `(I, x, y, z)` of `W†σᶻW`, and `Tr(WW†)`.
pub fn engine_sigma_z(p: &TwoLevelParams) -> ([f64; 4], f64) {
    let w = engine_propagator(p);
    let wd = adjoint(w.as_ref());
    let m = matmul(matmul(wd.as_ref(), pauli(Axis::Z).as_ref()).as_ref(), w.as_ref());
    let comp = |a: Option<Axis>| {
        let prod = match a {
            Some(a) => matmul(pauli(a).as_ref(), m.as_ref()),
            None => m.clone(),
        };
        0.5 * trace(prod.as_ref()).re
    };
    let coeffs = [comp(None), comp(Some(Axis::X)), comp(Some(Axis::Y)), comp(Some(Axis::Z))];
    (coeffs, trace(matmul(w.as_ref(), wd.as_ref()).as_ref()).re)
}

pub fn engine_distance(p: &TwoLevelParams) -> f64 {
    let u = expm(twolevel_generator(p.h, p.gamma).as_ref(), c64::new(0.0, -p.t)).unwrap();
    let col = |j: usize| [u[(0, j)], u[(1, j)]];
    let up = DensityMatrix::pure(&col(0)).unwrap();
    let down = DensityMatrix::pure(&col(1)).unwrap();
    trace_distance(&up, &down).unwrap()
}

/// Largest disagreement between engine and closed forms at `p`: normalized
/// coefficients, norm (relative), operator entries (relative), distance.
pub fn twolevel_mismatch(p: &TwoLevelParams) -> f64 {
    let (engine, norm) = engine_sigma_z(p);
    let formula = twolevel_sigma_z(p);
    let fnorm = twolevel_heisenberg_coeffs(p).norm;
    let mut worst = ((norm - fnorm) / fnorm).abs();
    for k in 0..4 {
        worst = worst.max((engine[k] / norm - formula[k] / fnorm).abs());
    }
    let m = pauli_combination(formula);
    let w = engine_propagator(p);
    let direct = matmul(matmul(adjoint(w.as_ref()).as_ref(), pauli(Axis::Z).as_ref()).as_ref(), w.as_ref());
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((m[(i, j)] - direct[(i, j)]).norm() / fnorm);
        }
    }
    worst.max((engine_distance(p) - twolevel_distance(p)).abs())
}

/// Plain conjugate gradients on `(XᵀX + λI) w = Xᵀy`.
pub fn cg_normal_equations(x: &Mat<f64>, y: &[f64], lambda: f64) -> Vec<f64> {
    let p = x.ncols();
    let apply = |v: &[f64]| -> Vec<f64> {
        let xv: Vec<f64> = (0..x.nrows()).map(|i| (0..p).map(|j| x[(i, j)] * v[j]).sum()).collect();
        (0..p).map(|j| (0..x.nrows()).map(|i| x[(i, j)] * xv[i]).sum::<f64>() + lambda * v[j]).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let b: Vec<f64> = (0..p).map(|j| (0..x.nrows()).map(|i| x[(i, j)] * y[i]).sum()).collect();
    let mut w = vec![0.0; p];
    let mut r = b.clone();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..10 * p {
        if rr.sqrt() < 1e-15 * dot(&b, &b).sqrt() {
            break;
        }
        let ad = apply(&d);
        let alpha = rr / dot(&d, &ad);
        for j in 0..p {
            w[j] += alpha * d[j];
            r[j] -= alpha * ad[j];
        }
        let rr_new = dot(&r, &r);
        for j in 0..p {
            d[j] = r[j] + rr_new / rr * d[j];
        }
        rr = rr_new;
    }
    w
}
