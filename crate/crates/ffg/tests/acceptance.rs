//! End-to-end acceptance: the counterexamples, the positive suites, the
//! cross-oracle agreements, and the infrastructure guarantees. Each
//! criterion prints one PASS/FAIL line (visible with --nocapture); the
//! test fails if any criterion does.

mod common;

use std::f64::consts::{LN_2, SQRT_2};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use ffg::fixtures::{random_bl, random_bl_repeated, random_ss};
use ffg::flows::{
    derivation_matrix, exp_flow, functional_root, iterate, log_transform, substitution_matrix,
    VectorField,
};
use ffg::linfun::{mat_exp, mat_log, BranchChoice};
use ffg::resonance::{check_obstructive_by_sampling, find_resonances, DEFAULT_T_GRID};
use ffg::series::{Exponent, Series, Tolerance};
use ffg::textio;
use ffg::transform::random_invertible;
use ffg::Transformation;

type Verdict = Result<String, String>;

fn check(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn within(limit: Duration, took: Duration, what: &str) -> Result<(), String> {
    check(
        took <= limit,
        &format!("{what} took {took:.2?}, budget {limit:.2?}"),
    )
}

fn tol() -> Tolerance {
    Tolerance::new(1e-9)
}

/// Branch table entries must all be obstructed at `component` (1-based)
/// and `monomial`, with vanishing divisor, and partial solutions clean
/// through degree `clean_through`.
fn assert_all_obstructed(
    table: &serde_json::Value,
    degree: u64,
    clean_through: u32,
) -> Result<usize, String> {
    let branches = table["branches"].as_array().ok_or("no branches array")?;
    check(!branches.is_empty(), "branch table is empty")?;
    for b in branches {
        check(
            b["status"] == "obstructed",
            &format!("branch {} not obstructed", b["branch"]),
        )?;
        let ob = &b["obstruction"];
        check(
            ob["degree"].as_u64() == Some(degree),
            &format!("obstruction degree {} instead of {degree}", ob["degree"]),
        )?;
        check(
            norm_of(&ob["divisor"]) < 1e-9,
            &format!("divisor {} not vanishing", ob["divisor"]),
        )?;
        let partial: Transformation = serde_json::from_value(b["partial"].clone())
            .map_err(|e| format!("partial does not deserialize: {e}"))?;
        for d in 2..=clean_through {
            for comp in partial.components() {
                check(
                    comp.degree_part(d).max_norm() < 1e-9,
                    &format!("partial has degree-{d} coefficients"),
                )?;
            }
        }
    }
    check(
        table["certified_no_root"] == true,
        "scan not certified_no_root",
    )?;
    Ok(branches.len())
}

/// Example 1: the sixth-root-of-unity map has no square root; both
/// branches obstruct at z^7 with the degree-7 equation c1(1+c1^6) * c7 = 1.
fn c01_example1_no_square_root() -> Verdict {
    let t0 = Instant::now();
    let out = ffg(&[
        "sqrt",
        &fixture("example1.map"),
        "--order",
        "8",
        "--all-branches",
    ]);
    let took = t0.elapsed();
    check(exit_code(&out) == 2, &format!("exit {}", exit_code(&out)))?;
    let table = stdout_json(&out);
    let count = assert_all_obstructed(&table, 7, 6)?;
    check(count == 2, &format!("{count} branches instead of 2"))?;
    for b in table["branches"].as_array().unwrap() {
        let ob = &b["obstruction"];
        check(ob["component"].as_u64() == Some(1), "component not 1")?;
        check(ob["monomial"] == serde_json::json!([7]), "monomial not z^7")?;
        let res = Complex64::new(
            ob["residual"]["re"].as_f64().unwrap(),
            ob["residual"]["im"].as_f64().unwrap(),
        );
        check(
            (res - Complex64::new(1.0, 0.0)).norm() < 1e-9,
            &format!("residual {res} not 1"),
        )?;
    }
    within(Duration::from_secs(1), took, "sqrt --all-branches")?;
    Ok(format!(
        "both branches obstruct at z^7, divisor < 1e-9, residual = 1, c2..c6 < 1e-9 [{took:.2?}]"
    ))
}

/// Example 1 has no logarithm and no half-iterate; the witness is the
/// winding resonance lambda = lambda^7 with k = -1.
fn c02_example1_no_logarithm() -> Verdict {
    let mut details = Vec::new();
    for args in [
        vec!["log".to_string(), fixture("example1.map")],
        vec![
            "iterate".to_string(),
            fixture("example1.map"),
            "--t".to_string(),
            "0.5".to_string(),
        ],
    ] {
        let argv: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        let t0 = Instant::now();
        let out = ffg(&argv);
        let took = t0.elapsed();
        check(
            exit_code(&out) == 2,
            &format!("{} exited {}", argv[0], exit_code(&out)),
        )?;
        let ob = stdout_json(&out);
        let w = &ob["resonance"];
        check(
            w["s"].as_u64() == Some(1)
                && w["m"] == serde_json::json!([7])
                && w["k"].as_i64() == Some(-1),
            &format!("{} witness {w}", argv[0]),
        )?;
        within(Duration::from_secs(1), took, argv[0])?;
        details.push(format!("{} [{took:.2?}]", argv[0]));
    }
    Ok(format!(
        "log and iterate both certify witness (s=1, m=7, k=-1): {}",
        details.join(", ")
    ))
}

/// Example 2: the area-preserving family has no square root for m in
/// {2, 4}; the obstruction sits exactly at degree m+1.
fn c03_example2_family() -> Verdict {
    let mut details = Vec::new();
    for (m, file) in [(2u32, "example2_m2.map"), (4, "example2_m4.map")] {
        let member = ffg(&["check", &fixture(file), "--group", "ss"]);
        check(
            exit_code(&member) == 0 && stdout_str(&member).trim() == "member",
            &format!("m={m} fixture not certified in SS"),
        )?;
        let t0 = Instant::now();
        let out = ffg(&["sqrt", &fixture(file), "--all-branches"]);
        let took = t0.elapsed();
        check(
            exit_code(&out) == 2,
            &format!("m={m} exit {}", exit_code(&out)),
        )?;
        let table = stdout_json(&out);
        let count = assert_all_obstructed(&table, u64::from(m) + 1, m)?;
        within(Duration::from_secs(5), took, "branch scan")?;
        details.push(format!(
            "m={m}: {count} branches obstruct at degree {} [{took:.2?}]",
            m + 1
        ));
    }
    Ok(details.join("; "))
}

/// Triangular-positive maps always have logarithms, and the numerics
/// reach them: 100 seeded samples round-trip through exp at 1e-8.
fn c04_triangular_logarithm_suite() -> Verdict {
    let t0 = Instant::now();
    let tol = tol();
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let n = if i % 2 == 0 { 2 } else { 3 };
        let u = if i >= 90 {
            random_bl_repeated(n, 8, i)
        } else {
            random_bl(n, 8, i)
        };
        let x = log_transform(&u, &tol).map_err(|e| format!("seed {i}: log failed: {e}"))?;
        let f = exp_flow(&x, 1.0).map_err(|e| format!("seed {i}: flow failed: {e}"))?;
        let rel = f.distance(&u).unwrap() / (1.0 + u.max_norm());
        check(rel <= 1e-8, &format!("seed {i}: roundtrip {rel:.3e}"))?;
        worst = worst.max(rel);
        let l = mat_log(u.linear_part(), &tol).map_err(|e| format!("seed {i}: mat_log: {e}"))?;
        check(
            l.max_imag() <= 1e-9 && l.is_lower_triangular(1e-9),
            &format!("seed {i}: mat_log not real lower triangular"),
        )?;
    }
    let took = t0.elapsed();
    within(Duration::from_secs(60), took, "100 logarithms")?;
    Ok(format!(
        "100/100 logs found, worst roundtrip {worst:.1e}, mat_log real triangular [{took:.2?}]"
    ))
}

/// Flow group law f^t o f^s = f^(t+s), with f^0 = id exactly and f^1 = u.
fn c05_flow_group_law() -> Verdict {
    let tol = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let id1 = Transformation::identity(1, 8);
    let id2 = Transformation::identity(2, 8);
    let mut worst = 0.0f64;
    for i in 0..50usize {
        let n = 1 + (i % 2);
        let u = sample_nonresonant(n, 8, &mut rng);
        let x = log_transform(&u, &tol).map_err(|e| format!("sample {i}: log: {e}"))?;
        let t = rng.gen_range(-1.0..1.0);
        let s = rng.gen_range(-1.0..1.0);
        let ft = exp_flow(&x, t).unwrap();
        let fs = exp_flow(&x, s).unwrap();
        let fts = exp_flow(&x, t + s).unwrap();
        let d = ft.compose(&fs).unwrap().distance(&fts).unwrap();
        check(d <= 1e-7, &format!("sample {i}: group law defect {d:.3e}"))?;
        worst = worst.max(d);
        let f0 = iterate(&u, 0.0, &tol).unwrap();
        let id = if n == 1 { &id1 } else { &id2 };
        check(
            f0.distance(id).unwrap() == 0.0,
            &format!("sample {i}: f^0 is not exactly the identity"),
        )?;
        let f1 = iterate(&u, 1.0, &tol).unwrap();
        let d1 = f1.distance(&u).unwrap();
        check(d1 <= 1e-8, &format!("sample {i}: f^1 defect {d1:.3e}"))?;
    }
    Ok(format!(
        "50/50 samples: worst group-law defect {worst:.1e}, f^0 exact, f^1 within 1e-8"
    ))
}

/// Half-iterate and principal square root are the same object.
fn c06_root_versus_iterate() -> Verdict {
    let tol = tol();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0.0f64;
    for i in 0..25usize {
        let n = 1 + (i % 2);
        let u = sample_nonresonant(n, 8, &mut rng);
        let half = iterate(&u, 0.5, &tol).map_err(|e| format!("sample {i}: iterate: {e}"))?;
        let root = functional_root(&u, 2, &BranchChoice::principal(n), &tol)
            .map_err(|e| format!("sample {i}: root: {e}"))?;
        let d = half.distance(&root).unwrap();
        check(d <= 1e-7, &format!("sample {i}: iterate vs root {d:.3e}"))?;
        worst = worst.max(d);
        let dd = root.compose(&root).unwrap().distance(&u).unwrap();
        check(
            dd <= 1e-8,
            &format!("sample {i}: root o root defect {dd:.3e}"),
        )?;
    }
    Ok(format!(
        "25/25 samples: iterate(1/2) = principal sqrt within {worst:.1e}, root o root = u within 1e-8"
    ))
}

/// Frozen coefficient values with independent closed-form derivations.
fn c07_frozen_scalars() -> Verdict {
    let tol = tol();
    let n1 = |c2: f64| {
        Transformation::new(vec![Series::from_terms(
            1,
            8,
            [
                (Exponent::new(vec![1]), Complex64::new(2.0, 0.0)),
                (Exponent::new(vec![2]), Complex64::new(c2, 0.0)),
            ],
        )
        .unwrap()])
        .unwrap()
    };
    let u = n1(1.0);

    // y' = y ln2 + c y^2 integrates to a Bernoulli flow whose time-1 map
    // is 2z + z^2 when c = ln2 / 2
    let x = log_transform(&u, &tol).unwrap();
    let c1 = x.component(0).coeff(&Exponent::new(vec![1]));
    let c2 = x.component(0).coeff(&Exponent::new(vec![2]));
    check(
        (c1 - Complex64::new(LN_2, 0.0)).norm() < 1e-12,
        &format!("log z-coefficient {c1}"),
    )?;
    check(
        (c2 - Complex64::new(LN_2 / 2.0, 0.0)).norm() < 1e-9,
        &format!("log z^2 coefficient {c2}"),
    )?;

    // matching orders in (az + bz^2)^(o2) = 2z + z^2 gives b = 1/(2+sqrt 2)
    let g = functional_root(&u, 2, &BranchChoice::principal(1), &tol).unwrap();
    let b = g.component(0).coeff(&Exponent::new(vec![2]));
    let expect = 1.0 / (2.0 + SQRT_2);
    check(
        (b - Complex64::new(expect, 0.0)).norm() < 1e-9,
        &format!("sqrt z^2 coefficient {b}"),
    )?;

    // z' = z^2 solves to z/(1-tz): coefficient t^(k-1) on z^k
    let field = VectorField::new(vec![Series::monomial(
        1,
        8,
        Exponent::new(vec![2]),
        Complex64::new(1.0, 0.0),
    )
    .unwrap()])
    .unwrap();
    let t = 0.7;
    let f = exp_flow(&field, t).unwrap();
    for k in 1..=8u32 {
        let got = f.component(0).coeff(&Exponent::new(vec![k]));
        let want = Complex64::new(t.powi(k as i32 - 1), 0.0);
        check(
            (got - want).norm() < 1e-10,
            &format!("flow z^{k} coefficient {got}, expected {want}"),
        )?;
    }
    Ok("ln2, ln2/2, 1/(2+sqrt2), and t^(k-1) all match closed forms".to_string())
}

/// The discrete winding classification must agree with direct sampling of
/// lambda_s^t vs lambda^(tm) on every witness, and planted resonances are
/// always found.
fn c08_winding_versus_sampling() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let radii = [0.5, 1.0, 2.0];
    let mut witness_count = 0usize;
    let mut planted_count = 0usize;
    for i in 0..200usize {
        let n = 2 + (i % 2);
        let mut values: Vec<Complex64> = (0..n)
            .map(|_| {
                let r = radii[rng.gen_range(0..radii.len())];
                let q = rng.gen_range(1..=6u32);
                let p = rng.gen_range(0..q);
                Complex64::from_polar(r, std::f64::consts::TAU * f64::from(p) / f64::from(q))
            })
            .collect();
        let planted: Option<Exponent> = if i % 4 == 0 {
            let d = rng.gen_range(2..=5u32);
            let mut entries = vec![0u32; n];
            if n == 2 {
                entries[0] = d;
            } else {
                entries[0] = rng.gen_range(0..=d);
                entries[1] = d - entries[0];
            }
            let m = Exponent::new(entries);
            let mut prod = Complex64::new(1.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                prod *= v.powu(m.get(j));
            }
            values[n - 1] = prod;
            Some(m)
        } else {
            None
        };
        let report = find_resonances(&values, 6, 1e-9).map_err(|e| format!("tuple {i}: {e}"))?;
        if let Some(m) = &planted {
            check(
                report
                    .witnesses
                    .iter()
                    .any(|w| w.s == n && w.m.entries() == m.entries()),
                &format!("tuple {i}: planted resonance {m:?} not detected"),
            )?;
            planted_count += 1;
        }
        for w in &report.witnesses {
            let sampled = check_obstructive_by_sampling(&values, w.s, &w.m, &DEFAULT_T_GRID, 1e-6)
                .map_err(|e| format!("tuple {i}: sampling: {e}"))?;
            check(
                w.obstructive == sampled,
                &format!(
                    "tuple {i}: witness (s={}, m={:?}, k={}) classified {} but sampling says {}",
                    w.s, w.m, w.k, w.obstructive, sampled
                ),
            )?;
            witness_count += 1;
        }
    }
    Ok(format!(
        "{witness_count} witnesses across 200 tuples all agree with sampling; {planted_count}/{planted_count} planted resonances detected"
    ))
}

/// The flow's substitution matrix is the matrix exponential of the
/// derivation matrix, and the flow agrees with blind ODE integration.
fn c09_operator_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let n = 2;
    let order = 6;
    let mut worst_op = 0.0f64;
    let mut worst_jet = 0.0f64;
    for i in 0..20usize {
        let mut comps = Vec::with_capacity(n);
        for _ in 0..n {
            let mut terms: Vec<(Exponent, Complex64)> = Vec::new();
            for d in 1..=order {
                let span = if d == 1 { 0.3 } else { 0.2 };
                for e in Exponent::enumerate_degree(n, d) {
                    terms.push((
                        e,
                        Complex64::new(rng.gen_range(-span..span), rng.gen_range(-span..span)),
                    ));
                }
            }
            comps.push(Series::from_terms(n, order, terms).unwrap());
        }
        let x = VectorField::new(comps).unwrap();
        let f = exp_flow(&x, 1.0).unwrap();
        let sub = substitution_matrix(&f).map_err(|e| format!("field {i}: {e}"))?;
        let exp = mat_exp(&derivation_matrix(&x).matrix);
        let gap = sub.matrix.sub(&exp).max_abs();
        check(gap <= 1e-8, &format!("field {i}: operator gap {gap:.3e}"))?;
        worst_op = worst_op.max(gap);
        let jet = jet_flow_oracle(&x, 1.0, 1e-9);
        let d = f.distance(&jet).unwrap();
        check(d <= 1e-6, &format!("field {i}: jet oracle gap {d:.3e}"))?;
        worst_jet = worst_jet.max(d);
    }
    Ok(format!(
        "20/20 fields: substitution = mat_exp(derivation) within {worst_op:.1e}, jet integration within {worst_jet:.1e}"
    ))
}

/// Infrastructure: bit-exact text round-trips, a panic-free parser, and
/// the group axioms.
fn c10_infrastructure() -> Verdict {
    // 1000 emit/parse round-trips, byte-identical
    for seed in 0..1000u64 {
        let n = 1 + (seed % 3) as usize;
        let order = 3 + (seed % 4) as u32;
        let u = random_invertible(n, order, seed);
        let text = textio::emit_map(&u);
        let doc = textio::parse_map(&text).map_err(|e| format!("seed {seed}: parse: {e}"))?;
        let v = textio::to_transformation(&doc).map_err(|e| format!("seed {seed}: build: {e}"))?;
        let again = textio::emit_map(&v);
        check(
            text == again,
            &format!("seed {seed}: round-trip not bit-exact"),
        )?;
    }

    // parser fuzz: random garbage and mutated valid documents
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let alphabet: Vec<char> = "xz0123456789+-*/^()>,;.:eiπ \n\t#_".chars().collect();
    let valid = textio::emit_map(&random_invertible(2, 4, 99));
    for _ in 0..100_000 {
        let text: String = if rng.gen_bool(0.5) {
            let len = rng.gen_range(0..60);
            (0..len)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect()
        } else {
            // splice garbage into a valid document
            let mut bytes: Vec<char> = valid.chars().collect();
            for _ in 0..rng.gen_range(1..5) {
                let pos = rng.gen_range(0..bytes.len());
                bytes[pos] = alphabet[rng.gen_range(0..alphabet.len())];
            }
            bytes.into_iter().collect()
        };
        let _ = textio::parse_map(&text); // must not panic
    }

    // group axioms at 1e-8
    let tol = tol();
    for seed in 0..30u64 {
        let n = 1 + (seed % 3) as usize;
        let order = 3 + (seed % 3) as u32;
        let a = random_invertible(n, order, 3 * seed);
        let b = random_invertible(n, order, 3 * seed + 1);
        let c = random_invertible(n, order, 3 * seed + 2);
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        let scale = 1.0 + left.max_norm();
        check(
            left.distance(&right).unwrap() <= 1e-8 * scale,
            &format!("seed {seed}: associativity defect"),
        )?;
        let inv = a.inverse(&tol).unwrap();
        let id = Transformation::identity(n, order);
        check(
            a.compose(&inv).unwrap().distance(&id).unwrap() <= 1e-8 * scale
                && inv.compose(&a).unwrap().distance(&id).unwrap() <= 1e-8 * scale,
            &format!("seed {seed}: inverse defect"),
        )?;
    }

    // SS closure through degree N-1
    for seed in 0..10u64 {
        let n = 2 + (seed % 2) as usize;
        let a = random_ss(n, 6, seed);
        let b = random_ss(n, 6, seed + 100);
        let tags = a
            .compose(&b)
            .unwrap()
            .classify(&Tolerance::new(1e-8))
            .unwrap();
        check(
            tags.contains(&ffg::GroupTag::SS),
            &format!("seed {seed}: SS not closed under composition"),
        )?;
    }
    Ok(
        "1000 bit-exact round-trips, 100k fuzz inputs panic-free, group axioms and SS closure hold"
            .to_string(),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Verdict); 10] = [
        (1, c01_example1_no_square_root),
        (2, c02_example1_no_logarithm),
        (3, c03_example2_family),
        (4, c04_triangular_logarithm_suite),
        (5, c05_flow_group_law),
        (6, c06_root_versus_iterate),
        (7, c07_frozen_scalars),
        (8, c08_winding_versus_sampling),
        (9, c09_operator_oracles),
        (10, c10_infrastructure),
    ];
    let mut failed = Vec::new();
    for (num, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("criterion {num:02}: PASS - {detail}"),
            Ok(Err(why)) => {
                println!("criterion {num:02}: FAIL - {why}");
                failed.push(num);
            }
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "non-string panic".to_string());
                println!("criterion {num:02}: FAIL - panicked: {msg}");
                failed.push(num);
            }
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
