//! Helpers shared by the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use std::path::PathBuf;
use std::process::{Command, Output};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ffg::flows::VectorField;
use ffg::linalg::CMatrix;
use ffg::series::{Exponent, Series};
use ffg::Transformation;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> String {
    fixtures_dir().join(name).to_string_lossy().into_owned()
}

/// Runs the ffg binary with the given arguments and clean environment
/// (no FFG_TOL leakage between tests).
pub fn ffg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffg"))
        .args(args)
        .env_remove("FFG_TOL")
        .output()
        .expect("run ffg")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_str(out)).expect("JSON on stdout")
}

pub fn norm_of(v: &serde_json::Value) -> f64 {
    let re = v["re"].as_f64().expect("re");
    let im = v["im"].as_f64().expect("im");
    Complex64::new(re, im).norm()
}

/// Eigenvalue tuple with every |lambda_s - lambda^m| through `order` kept
/// away from zero, eigenvalues pairwise separated and clear of the
/// negative real axis: the clean setting where logs, roots and iterates
/// all exist and stay well conditioned.
pub fn sample_nonresonant_values(n: usize, order: u32, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    'draw: loop {
        let values: Vec<Complex64> = (0..n)
            .map(|_| {
                let radius = rng.gen_range(0.6..1.8);
                let angle = rng.gen_range(-2.6..2.6);
                Complex64::from_polar(radius, angle)
            })
            .collect();
        for (i, a) in values.iter().enumerate() {
            for b in values.iter().skip(i + 1) {
                if (a - b).norm() < 0.1 {
                    continue 'draw;
                }
            }
        }
        for d in 2..=order {
            for m in Exponent::enumerate_degree(n, d) {
                let mut prod = Complex64::new(1.0, 0.0);
                for (j, v) in values.iter().enumerate() {
                    prod *= v.powu(m.get(j));
                }
                for s in &values {
                    if (s - prod).norm() < 0.05 * (1.0 + prod.norm()) {
                        continue 'draw;
                    }
                }
            }
        }
        return values;
    }
}

/// Random transformation with a nonresonant triangular linear part (exact
/// eigenvalues on the diagonal) and a dense nonlinear tail.
pub fn sample_nonresonant(n: usize, order: u32, rng: &mut ChaCha8Rng) -> Transformation {
    let values = sample_nonresonant_values(n, order, rng);
    let mut linear = CMatrix::zeros(n, n);
    for i in 0..n {
        linear[(i, i)] = values[i];
        for j in 0..i {
            linear[(i, j)] = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        }
    }
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms: Vec<(Exponent, Complex64)> = Vec::new();
        for e in Exponent::enumerate_degree(n, 1) {
            terms.push((e.clone(), linear[(i, first_index(&e))]));
        }
        for d in 2..=order {
            for e in Exponent::enumerate_degree(n, d) {
                let c = Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                terms.push((e, c));
            }
        }
        components.push(Series::from_terms(n, order, terms).expect("series"));
    }
    Transformation::new(components).expect("invertible linear part")
}

fn first_index(e: &Exponent) -> usize {
    (0..e.len())
        .find(|&j| e.get(j) == 1)
        .expect("degree-1 exponent")
}

/// Time-t flow map of X by adaptive step-doubling RK4 on the truncated
/// jet: an oracle for exp_flow that never touches a matrix exponential.
pub fn jet_flow_oracle(x: &VectorField, t_end: f64, tol: f64) -> Transformation {
    let n = x.n();
    let order = x.order();
    let mut f: Vec<Series> = (0..n).map(|i| Series::coordinate(n, order, i)).collect();
    let deriv = |state: &[Series]| -> Vec<Series> {
        x.components()
            .iter()
            .map(|xi| xi.substitute(state).expect("jet substitution"))
            .collect()
    };
    let step = |state: &[Series], h: f64| -> Vec<Series> {
        let hc = |v: &Series, c: f64| v.scale(Complex64::new(c, 0.0));
        let k1 = deriv(state);
        let mid1: Vec<Series> = state
            .iter()
            .zip(&k1)
            .map(|(y, k)| y.add(&hc(k, h / 2.0)).unwrap())
            .collect();
        let k2 = deriv(&mid1);
        let mid2: Vec<Series> = state
            .iter()
            .zip(&k2)
            .map(|(y, k)| y.add(&hc(k, h / 2.0)).unwrap())
            .collect();
        let k3 = deriv(&mid2);
        let end: Vec<Series> = state
            .iter()
            .zip(&k3)
            .map(|(y, k)| y.add(&hc(k, h)).unwrap())
            .collect();
        let k4 = deriv(&end);
        state
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let sum = k1[i]
                    .add(&k2[i].scale(Complex64::new(2.0, 0.0)))
                    .unwrap()
                    .add(&k3[i].scale(Complex64::new(2.0, 0.0)))
                    .unwrap()
                    .add(&k4[i])
                    .unwrap();
                y.add(&hc(&sum, h / 6.0)).unwrap()
            })
            .collect()
    };
    let total = t_end.abs();
    if total == 0.0 {
        return Transformation::new(f).expect("identity jet");
    }
    let dir = t_end.signum();
    let mut remaining = total;
    let mut h = total / 8.0;
    while remaining > 0.0 {
        let hh = h.min(remaining);
        let coarse = step(&f, dir * hh);
        let half = step(&f, dir * hh / 2.0);
        let fine = step(&half, dir * hh / 2.0);
        let mut err = 0.0f64;
        for (a, b) in coarse.iter().zip(&fine) {
            err = err.max(a.sub(b).unwrap().max_norm());
        }
        let budget = tol * (hh / total).max(1e-3);
        if err <= budget {
            f = fine;
            remaining -= hh;
            if err < budget / 64.0 {
                h *= 2.0;
            }
        } else {
            h /= 2.0;
            assert!(h > 1e-7, "jet integrator cannot meet tolerance");
        }
    }
    Transformation::new(f).expect("jet flow")
}
