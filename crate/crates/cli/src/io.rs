//! JSON instance and factor files.
//!
//! ```text
//! {
//!   "name": "...", "n": 50,
//!   "objective": {"kind": "linear", "C": [...]}
//!              | {"kind": "quad_distance", "Y": [...]}
//!              | {"kind": "matrix_sensing", "vectors": [[...], ...], "d": [...]},
//!   "constraints": {"k": 50, "mats": [[...], ...], "b": [...]},
//!   "certificate": {"R_star": [[...], ...], "y_star": [...], "Z_star": [...], "r_star": 2}
//! }
//! ```
//!
//! Symmetric matrices are stored as their upper triangle in row-major order.
//! Factors are lists of rows. Floats are written in the shortest decimal form
//! that parses back to the same `f64`.

use std::fs;
use std::path::Path;

use lowrank_sdp::{Certificate, Factor, Instance, LinOpA, Objective, SymMat};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

pub fn load_instance(path: &Path) -> CliResult<Instance> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_instance(&text)
}

pub fn save_instance(inst: &Instance, path: &Path) -> CliResult<()> {
    write_text(path, &instance_to_string(inst))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn instance_to_string(inst: &Instance) -> String {
    let mut s = instance_to_json(inst).to_string();
    s.push('\n');
    s
}

pub fn parse_instance(text: &str) -> CliResult<Instance> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::schema("<root>", e.to_string()))?;
    instance_from_json(&value)
}

pub fn instance_to_json(inst: &Instance) -> Value {
    let objective = match &inst.objective {
        Objective::Linear(c) => json!({"kind": "linear", "C": c.upper_triangle()}),
        Objective::QuadDistance(y) => json!({"kind": "quad_distance", "Y": y.upper_triangle()}),
        Objective::MatrixSensing { vectors, d } => json!({
            "kind": "matrix_sensing",
            "vectors": vectors.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
            "d": d.as_slice(),
        }),
    };
    let a = &inst.constraints;
    let mut root = json!({
        "name": inst.name,
        "n": inst.n,
        "objective": objective,
        "constraints": {
            "k": a.k(),
            "mats": a.mats().iter().map(|m| m.upper_triangle()).collect::<Vec<_>>(),
            "b": a.b().as_slice(),
        },
    });
    if let Some(c) = &inst.certificate {
        root["certificate"] = json!({
            "R_star": factor_rows(&c.r_star),
            "y_star": c.y_star.as_slice(),
            "Z_star": c.z_star.upper_triangle(),
            "r_star": c.rank,
        });
    }
    root
}

pub fn factor_rows(r: &Factor) -> Vec<Vec<f64>> {
    let m = r.as_matrix();
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn field<'a>(obj: &'a Map<String, Value>, parent: &str, key: &str) -> CliResult<&'a Value> {
    obj.get(key).ok_or_else(|| CliError::schema(join(parent, key), "missing field"))
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> CliResult<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| CliError::schema(path, "expected an object"))
}

fn as_usize(v: &Value, path: &str) -> CliResult<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| CliError::schema(path, "expected a non-negative integer"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> CliResult<&'a str> {
    v.as_str().ok_or_else(|| CliError::schema(path, "expected a string"))
}

fn as_floats(v: &Value, path: &str) -> CliResult<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| CliError::schema(path, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| CliError::schema(format!("{path}[{i}]"), "expected a number"))
        })
        .collect()
}

fn as_float_rows(v: &Value, path: &str) -> CliResult<Vec<Vec<f64>>> {
    let arr = v.as_array().ok_or_else(|| CliError::schema(path, "expected an array of arrays"))?;
    arr.iter()
        .enumerate()
        .map(|(i, row)| as_floats(row, &format!("{path}[{i}]")))
        .collect()
}

fn sym_from(data: &[f64], n: usize, path: &str) -> CliResult<SymMat> {
    let want = n * (n + 1) / 2;
    if data.len() != want {
        return Err(CliError::schema(
            path,
            format!("expected {want} upper-triangle entries for n = {n}, got {}", data.len()),
        ));
    }
    SymMat::from_upper_triangle(n, data).map_err(|e| CliError::schema(path, e.to_string()))
}

fn factor_from_rows(rows: &[Vec<f64>], n: usize, path: &str) -> CliResult<Factor> {
    if rows.len() != n {
        return Err(CliError::schema(path, format!("expected {n} rows, got {}", rows.len())));
    }
    let r = rows.first().map_or(0, |x| x.len());
    if let Some(i) = rows.iter().position(|x| x.len() != r) {
        return Err(CliError::schema(format!("{path}[{i}]"), format!("expected {r} columns")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Factor::from_rows(n, r, &flat).map_err(|e| CliError::schema(path, e.to_string()))
}

pub fn instance_from_json(v: &Value) -> CliResult<Instance> {
    let root = as_object(v, "<root>")?;
    let name = as_str(field(root, "", "name")?, "name")?.to_string();
    let n = as_usize(field(root, "", "n")?, "n")?;
    if n == 0 {
        return Err(CliError::schema("n", "must be positive"));
    }

    let obj = as_object(field(root, "", "objective")?, "objective")?;
    let kind = as_str(field(obj, "objective", "kind")?, "objective.kind")?;
    let objective = match kind {
        "linear" => Objective::Linear(sym_from(
            &as_floats(field(obj, "objective", "C")?, "objective.C")?,
            n,
            "objective.C",
        )?),
        "quad_distance" => Objective::QuadDistance(sym_from(
            &as_floats(field(obj, "objective", "Y")?, "objective.Y")?,
            n,
            "objective.Y",
        )?),
        "matrix_sensing" => {
            let rows = as_float_rows(field(obj, "objective", "vectors")?, "objective.vectors")?;
            let d = as_floats(field(obj, "objective", "d")?, "objective.d")?;
            if let Some(i) = rows.iter().position(|r| r.len() != n) {
                return Err(CliError::schema(format!("objective.vectors[{i}]"), format!("expected length {n}")));
            }
            if rows.len() != d.len() {
                return Err(CliError::schema("objective.d", format!("expected {} entries", rows.len())));
            }
            Objective::MatrixSensing {
                vectors: rows.into_iter().map(DVector::from_vec).collect(),
                d: DVector::from_vec(d),
            }
        }
        other => {
            return Err(CliError::schema(
                "objective.kind",
                format!("unknown kind `{other}` (expected linear, quad_distance or matrix_sensing)"),
            ))
        }
    };

    let cons = as_object(field(root, "", "constraints")?, "constraints")?;
    let k = as_usize(field(cons, "constraints", "k")?, "constraints.k")?;
    let mats_v = field(cons, "constraints", "mats")?
        .as_array()
        .ok_or_else(|| CliError::schema("constraints.mats", "expected an array"))?;
    if mats_v.len() != k {
        return Err(CliError::schema("constraints.mats", format!("expected {k} matrices, got {}", mats_v.len())));
    }
    let mats = mats_v
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let path = format!("constraints.mats[{i}]");
            sym_from(&as_floats(m, &path)?, n, &path)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let b = as_floats(field(cons, "constraints", "b")?, "constraints.b")?;
    if b.len() != k {
        return Err(CliError::schema("constraints.b", format!("expected {k} entries, got {}", b.len())));
    }
    let constraints = LinOpA::new(mats, DVector::from_vec(b)).map_err(|e| CliError::schema("constraints", e.to_string()))?;

    let certificate = match root.get("certificate") {
        None | Some(Value::Null) => None,
        Some(c) => {
            let c = as_object(c, "certificate")?;
            let rows = as_float_rows(field(c, "certificate", "R_star")?, "certificate.R_star")?;
            let r_star = factor_from_rows(&rows, n, "certificate.R_star")?;
            let y = as_floats(field(c, "certificate", "y_star")?, "certificate.y_star")?;
            let z = sym_from(
                &as_floats(field(c, "certificate", "Z_star")?, "certificate.Z_star")?,
                n,
                "certificate.Z_star",
            )?;
            let rank = as_usize(field(c, "certificate", "r_star")?, "certificate.r_star")?;
            Some(Certificate {
                r_star,
                y_star: DVector::from_vec(y),
                z_star: z,
                rank,
            })
        }
    };
    Instance::new(name, objective, constraints, certificate).map_err(|e| match e {
        lowrank_sdp::Error::Certificate(msg) => CliError::schema("certificate", msg),
        lowrank_sdp::Error::Dimension { context, expected, got } => {
            CliError::schema("<root>", format!("dimension mismatch in {context}: expected {expected}, got {got}"))
        }
        other => CliError::Solver(other),
    })
}

/// `{"n": .., "r": .., "rows": [[..], ..]}`
pub fn factor_to_string(r: &Factor) -> String {
    let mut s = json!({"n": r.n(), "r": r.r(), "rows": factor_rows(r)}).to_string();
    s.push('\n');
    s
}

pub fn save_factor(r: &Factor, path: &Path) -> CliResult<()> {
    write_text(path, &factor_to_string(r))
}

pub fn load_factor(path: &Path) -> CliResult<Factor> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::schema("<root>", e.to_string()))?;
    let root = as_object(&v, "<root>")?;
    let n = as_usize(field(root, "", "n")?, "n")?;
    let rows = as_float_rows(field(root, "", "rows")?, "rows")?;
    let f = factor_from_rows(&rows, n, "rows")?;
    let r = as_usize(field(root, "", "r")?, "r")?;
    if f.r() != r {
        return Err(CliError::schema("r", format!("rows have {} columns", f.r())));
    }
    Ok(f)
}
