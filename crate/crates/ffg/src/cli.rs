//! The `ffg` command set. Inputs are map files in the text format (or
//! inline map text given directly as the argument); outputs are map text,
//! or JSON where the result is inherently structured.
//!
//! Exit codes: 0 success, 1 usage/input/numeric error, 2 certified
//! obstruction. Code 2 always comes with an obstruction JSON object on
//! standard output; diagnostics go to standard error.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fixtures;
use crate::flows::{
    exp_flow, functional_root, functional_root_all_branches, iterate, log_transform_report,
    Obstruction, RootOutcome, VectorField,
};
use crate::linalg::CMatrix;
use crate::linfun::{self, BranchChoice};
use crate::resonance::find_resonances;
use crate::series::{Exponent, Tolerance, DEFAULT_ZERO_TOL};
use crate::textio;
use crate::transform::{GroupTag, Transformation};

#[derive(Parser)]
#[command(
    name = "ffg",
    about = "Truncated formal transformation groups: compose, invert, flow, and certify obstructions.",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Numeric tolerance (default 1e-9; FFG_TOL overrides the default).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Emit JSON instead of map text where both exist.
    #[arg(long, global = true)]
    json: bool,
    /// Write the result here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Truncate inputs to this order (raising the order is an error),
    /// and the generation order for gen-bl / gen-ss.
    #[arg(long, global = true)]
    order: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compose two maps: emits a after b.
    Compose { a: String, b: String },
    /// Solve g composed with itself = u for the principal branch, or scan
    /// every branch of the linear square root.
    Sqrt {
        map: String,
        /// Try all branch combinations (real ones when the map is real)
        /// and emit the branch table.
        #[arg(long)]
        all_branches: bool,
    },
    /// Find the vector field whose time-1 flow is the map.
    Log { map: String },
    /// Flow a vector field for time t.
    Exp {
        field: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// The continuous iterate f^t of a map.
    Iterate {
        map: String,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
    /// Scan the linear part's eigenvalues for resonances.
    Resonances {
        map: String,
        /// Highest monomial degree scanned (default: the map's order).
        #[arg(long)]
        max_degree: Option<u32>,
    },
    /// Test membership in a transformation group.
    Check {
        map: String,
        /// One of gs, ss, bl, bu.
        #[arg(long)]
        group: GroupTag,
    },
    /// Generate a triangular-positive map (always has a logarithm).
    GenBl {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Force a repeated diagonal eigenvalue.
        #[arg(long)]
        repeat: bool,
    },
    /// Generate a volume-preserving map.
    GenSs {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own exit code for usage errors is 2, which this tool
            // reserves for obstructions
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_tolerance(flag: Option<f64>) -> Result<Tolerance> {
    let value = match flag {
        Some(v) => v,
        None => match std::env::var("FFG_TOL") {
            Ok(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("FFG_TOL is not a number: '{s}'")))?,
            Err(_) => DEFAULT_ZERO_TOL,
        },
    };
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(format!(
            "tolerance must be positive and finite, got {value}"
        )));
    }
    Ok(Tolerance::new(value))
}

/// Arguments are file paths unless they contain "->", in which case they
/// are the map text itself. Inline text without a header gets one
/// synthesized from the bound names and the --order flag.
fn load_document(arg: &str, order_flag: Option<u32>) -> Result<textio::MapDocument> {
    let text = if arg.contains("->") {
        inline_text(arg, order_flag)?
    } else {
        std::fs::read_to_string(arg)
            .map_err(|e| Error::invalid(format!("cannot read '{arg}': {e}")))?
    };
    textio::parse_map(&text)
}

fn inline_text(arg: &str, order_flag: Option<u32>) -> Result<String> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with("vars") {
        return Ok(arg.to_string());
    }
    // bound names tell us the dimension
    let mut names: Vec<String> = Vec::new();
    for binding in arg.split([';', '\n']) {
        if let Some(head) = binding.split("->").next() {
            let name = head.trim();
            if !name.is_empty() && !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
        }
    }
    let n = if names == ["z"] {
        1
    } else {
        let mut max = 0usize;
        for name in &names {
            let idx: usize = name
                .strip_prefix('x')
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "cannot infer variables from inline component '{name}'"
                    ))
                })?;
            max = max.max(idx);
        }
        max
    };
    let order = order_flag.unwrap_or(6);
    let vars = if n == 1 {
        "z".to_string()
    } else {
        (1..=n)
            .map(|k| format!("x{k}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(format!("vars: {vars}; order: {order}\n{arg}\n"))
}

fn load_map(arg: &str, order_flag: Option<u32>) -> Result<Transformation> {
    let doc = load_document(arg, order_flag)?;
    let u = textio::to_transformation(&doc)?;
    match order_flag {
        Some(o) => u.truncated(o),
        None => Ok(u),
    }
}

fn load_field(arg: &str, order_flag: Option<u32>) -> Result<VectorField> {
    let doc = load_document(arg, order_flag)?;
    let x = textio::to_vector_field(&doc)?;
    match order_flag {
        Some(o) if o < x.order() => {
            let comps = x
                .components()
                .iter()
                .map(|c| c.truncated(o))
                .collect::<Result<Vec<_>>>()?;
            VectorField::new(comps)
        }
        Some(o) if o > x.order() => Err(Error::OrderRaise {
            requested: o,
            available: x.order(),
        }),
        _ => Ok(x),
    }
}

fn deliver(out: &Option<PathBuf>, payload: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, payload)
            .map_err(|e| Error::invalid(format!("cannot write '{}': {e}", path.display()))),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

fn emit_obstruction(ob: &Obstruction) -> i32 {
    let text = serde_json::to_string_pretty(ob).expect("obstruction serializes");
    println!("{text}");
    2
}

/// Splits an error into "certified obstruction" (exit 2, JSON on stdout)
/// and everything else.
fn settle(err: Error) -> Result<i32> {
    match err.obstruction() {
        Some(ob) => Ok(emit_obstruction(ob)),
        None => Err(err),
    }
}

fn complex_json(z: num_complex::Complex64) -> serde_json::Value {
    json!({ "re": z.re, "im": z.im })
}

fn matrix_json(m: &CMatrix) -> serde_json::Value {
    let rows: Vec<Vec<serde_json::Value>> = (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| complex_json(m[(i, j)])).collect())
        .collect();
    json!(rows)
}

fn execute(cli: Cli) -> Result<i32> {
    let tol = resolve_tolerance(cli.tol)?;
    match cli.cmd {
        Cmd::Compose { a, b } => {
            let ua = load_map(&a, cli.order)?;
            let ub = load_map(&b, cli.order)?;
            let composed = ua.compose(&ub)?;
            let payload = if cli.json {
                to_pretty(&composed)?
            } else {
                textio::emit_map(&composed)
            };
            deliver(&cli.out, &payload)?;
            Ok(0)
        }
        Cmd::Sqrt { map, all_branches } => {
            let u = load_map(&map, cli.order)?;
            if all_branches {
                return sqrt_all_branches(&u, &tol, &cli.out);
            }
            match functional_root(&u, 2, &BranchChoice::principal(u.n()), &tol) {
                Ok(g) => {
                    let payload = if cli.json {
                        to_pretty(&g)?
                    } else {
                        textio::emit_map(&g)
                    };
                    deliver(&cli.out, &payload)?;
                    Ok(0)
                }
                Err(e) => settle(e),
            }
        }
        Cmd::Log { map } => {
            let u = load_map(&map, cli.order)?;
            match log_transform_report(&u, &tol) {
                Ok(report) => {
                    let payload = if cli.json {
                        let value = json!({
                            "field": report.field,
                            "nonunique_degrees": report.nonunique_degrees,
                        });
                        pretty_value(&value)
                    } else {
                        let mut text = textio::emit_field(&report.field);
                        if !report.nonunique_degrees.is_empty() {
                            let _ = writeln!(
                                text,
                                "# minimal-norm choice at degrees {:?}",
                                report.nonunique_degrees
                            );
                        }
                        text
                    };
                    deliver(&cli.out, &payload)?;
                    Ok(0)
                }
                Err(e) => settle(e),
            }
        }
        Cmd::Exp { field, t } => {
            let x = load_field(&field, cli.order)?;
            let f = exp_flow(&x, t)?;
            let payload = if cli.json {
                to_pretty(&f)?
            } else {
                textio::emit_map(&f)
            };
            deliver(&cli.out, &payload)?;
            Ok(0)
        }
        Cmd::Iterate { map, t } => {
            let u = load_map(&map, cli.order)?;
            match iterate(&u, t, &tol) {
                Ok(f) => {
                    let payload = if cli.json {
                        to_pretty(&f)?
                    } else {
                        textio::emit_map(&f)
                    };
                    deliver(&cli.out, &payload)?;
                    Ok(0)
                }
                Err(e) => settle(e),
            }
        }
        Cmd::Resonances { map, max_degree } => {
            let u = load_map(&map, cli.order)?;
            let es = linfun::eigen(u.linear_part())?;
            let degree = max_degree.unwrap_or(u.order());
            let report = find_resonances(&es.values, degree, tol.zero_tol)?;
            deliver(&cli.out, &to_pretty(&report)?)?;
            Ok(0)
        }
        Cmd::Check { map, group } => {
            let u = load_map(&map, cli.order)?;
            let tags = u.classify(&tol)?;
            let member = tags.contains(&group);
            let payload = if cli.json {
                let names: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
                pretty_value(
                    &json!({ "group": group.to_string(), "member": member, "tags": names }),
                )
            } else if member {
                "member\n".to_string()
            } else {
                "not a member\n".to_string()
            };
            deliver(&cli.out, &payload)?;
            Ok(if member { 0 } else { 1 })
        }
        Cmd::GenBl { seed, n, repeat } => {
            let order = cli.order.unwrap_or(6);
            let u = if repeat {
                fixtures::random_bl_repeated(n, order, seed)
            } else {
                fixtures::random_bl(n, order, seed)
            };
            let payload = if cli.json {
                to_pretty(&u)?
            } else {
                textio::emit_map(&u)
            };
            deliver(&cli.out, &payload)?;
            Ok(0)
        }
        Cmd::GenSs { seed, n } => {
            let order = cli.order.unwrap_or(6);
            let u = fixtures::random_ss(n, order, seed);
            let payload = if cli.json {
                to_pretty(&u)?
            } else {
                textio::emit_map(&u)
            };
            deliver(&cli.out, &payload)?;
            Ok(0)
        }
    }
}

fn to_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))
}

fn pretty_value(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn sqrt_all_branches(u: &Transformation, tol: &Tolerance, out: &Option<PathBuf>) -> Result<i32> {
    let all = functional_root_all_branches(u, 2, tol)?;
    let branches: Vec<serde_json::Value> = all
        .outcomes
        .iter()
        .map(|o| {
            let mut entry = json!({
                "branch": o.branch.indices(),
                "linear_root": matrix_json(&o.linear_root),
            });
            let obj = entry.as_object_mut().expect("object");
            match &o.outcome {
                RootOutcome::Root(g) => {
                    obj.insert("status".into(), json!("root"));
                    obj.insert(
                        "map".into(),
                        serde_json::to_value(g).expect("map serializes"),
                    );
                }
                RootOutcome::Obstructed {
                    obstruction,
                    partial,
                } => {
                    obj.insert("status".into(), json!("obstructed"));
                    obj.insert(
                        "obstruction".into(),
                        serde_json::to_value(obstruction).expect("obstruction serializes"),
                    );
                    obj.insert(
                        "partial".into(),
                        serde_json::to_value(partial).expect("map serializes"),
                    );
                }
            }
            entry
        })
        .collect();
    let mut table = json!({
        "k": 2,
        "branches": branches,
        "certified_no_root": all.certified_no_root,
        "no_real_linear_root": all.no_real_linear_root,
    });
    if all.certified_no_root {
        // exit 2 always carries an obstruction object; when no branch was
        // even real, a degree-1 obstruction records that the linear part
        // has no real square root
        let first = all
            .outcomes
            .iter()
            .find_map(|o| o.outcome.obstruction().cloned())
            .unwrap_or_else(|| Obstruction {
                degree: 1,
                component: 1,
                monomial: Exponent::unit(u.n(), 0),
                divisor: num_complex::Complex64::new(0.0, 0.0),
                residual: num_complex::Complex64::new(1.0, 0.0),
                witness: None,
            });
        table.as_object_mut().expect("object").insert(
            "obstruction".into(),
            serde_json::to_value(&first).expect("obstruction serializes"),
        );
    }
    let payload = pretty_value(&table);
    // the branch table is the structured report either way; respect --out
    // only for the success case so exit 2 always has its JSON on stdout
    if all.certified_no_root {
        print!("{payload}");
        Ok(2)
    } else {
        deliver(out, &payload)?;
        Ok(0)
    }
}
