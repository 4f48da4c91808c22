//! JSON problem files and solver output.
//!
//! A problem file holds either `{"dense": {"H", "f", "G", "h", "A", "b"}}`
//! or `{"ocp": {"N", "Q", "R", "S", "q", "r", "A", "B", "c", "E", "L", "d",
//! "xi"}}` with one entry per stage in each OCP array. Matrices are arrays
//! of rows.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::error::ModelError;
use crate::feasibility::{Certificate, CertificateKind};
use crate::model::{ocp_to_dense, DenseQp, OcpQp, OcpStage, QpProblem, StageDynamics};
use crate::point::PrimalDualPoint;
use crate::solver::SolveResult;

#[derive(Debug, Clone)]
pub enum Problem {
    Dense(DenseQp),
    Ocp(OcpQp),
}

impl Problem {
    /// The problem in stacked dense form.
    pub fn to_dense(&self) -> DenseQp {
        match self {
            Problem::Dense(p) => p.clone(),
            Problem::Ocp(p) => ocp_to_dense(p),
        }
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        match self {
            Problem::Dense(p) => p.objective(z),
            Problem::Ocp(p) => p.objective(z),
        }
    }
}

/// A certificate as read from a file; `kind` may be left for the reader to
/// infer from which blocks are present.
#[derive(Debug, Clone)]
pub struct ClaimedCertificate {
    pub kind: Option<CertificateKind>,
    pub dz: Option<DVector<f64>>,
    pub dlambda: Option<DVector<f64>>,
    pub dv: Option<DVector<f64>>,
}

fn field_err(field: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn number(v: &Value, field: &str) -> Result<f64, ModelError> {
    v.as_f64()
        .ok_or_else(|| field_err(field, format!("expected a number, found {v}")))
}

fn vector(v: &Value, field: &str) -> Result<DVector<f64>, ModelError> {
    let arr = v
        .as_array()
        .ok_or_else(|| field_err(field, "expected an array of numbers"))?;
    let data = arr
        .iter()
        .map(|x| number(x, field))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(data))
}

/// Rows of numbers; `[]` is a matrix with no rows and `cols` columns.
fn matrix(v: &Value, field: &str, cols: Option<usize>) -> Result<DMatrix<f64>, ModelError> {
    let rows = v
        .as_array()
        .ok_or_else(|| field_err(field, "expected an array of rows"))?;
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, cols.unwrap_or(0)));
    }
    let mut data = Vec::new();
    let mut width = None;
    for (i, row) in rows.iter().enumerate() {
        let row = vector(row, field)?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(field_err(
                    field,
                    format!("row {i} has {} entries, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        data.extend(row.iter());
    }
    let width = width.unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows.len(), width, &data))
}

fn object<'a>(v: &'a Value, field: &str) -> Result<&'a Map<String, Value>, ModelError> {
    v.as_object()
        .ok_or_else(|| field_err(field, "expected an object"))
}

fn required<'a>(obj: &'a Map<String, Value>, field: &str) -> Result<&'a Value, ModelError> {
    obj.get(field).ok_or_else(|| field_err(field, "missing"))
}

fn parse_dense(obj: &Map<String, Value>) -> Result<DenseQp, ModelError> {
    let h = matrix(required(obj, "H")?, "H", None)?;
    let f = vector(required(obj, "f")?, "f")?;
    let n = f.len();
    let pair = |mname: &str, vname: &str| -> Result<(DMatrix<f64>, DVector<f64>), ModelError> {
        match (obj.get(mname), obj.get(vname)) {
            (None, None) => Ok((DMatrix::zeros(0, n), DVector::zeros(0))),
            (Some(m), Some(v)) => Ok((matrix(m, mname, Some(n))?, vector(v, vname)?)),
            (Some(_), None) => Err(field_err(
                vname,
                format!("missing while `{mname}` is present"),
            )),
            (None, Some(_)) => Err(field_err(
                mname,
                format!("missing while `{vname}` is present"),
            )),
        }
    };
    let (g, hv) = pair("G", "h")?;
    let (a, b) = pair("A", "b")?;
    DenseQp::new(h, f, g, hv, a, b)
}

fn stage_list<'a>(
    obj: &'a Map<String, Value>,
    field: &str,
    count: usize,
) -> Result<Option<&'a Vec<Value>>, ModelError> {
    let Some(v) = obj.get(field) else {
        return Ok(None);
    };
    let arr = v
        .as_array()
        .ok_or_else(|| field_err(field, "expected one entry per stage"))?;
    if arr.len() != count {
        return Err(field_err(
            field,
            format!("expected {count} stage entries, found {}", arr.len()),
        ));
    }
    Ok(Some(arr))
}

fn parse_ocp(obj: &Map<String, Value>) -> Result<OcpQp, ModelError> {
    let n_val = required(obj, "N")?;
    let horizon = n_val.as_u64().ok_or_else(|| {
        field_err(
            "N",
            format!("expected a nonnegative integer, found {n_val}"),
        )
    })? as usize;
    let xi = vector(required(obj, "xi")?, "xi")?;
    let nx = xi.len();
    let stages = horizon + 1;
    let need = |field: &str, count: usize| -> Result<&Vec<Value>, ModelError> {
        stage_list(obj, field, count)?.ok_or_else(|| field_err(field, "missing"))
    };
    let q_list = need("Q", stages)?;
    let r_list = need("R", stages)?;
    let a_list = need("A", horizon)?;
    let b_list = need("B", horizon)?;
    let r0 = matrix(&r_list[0], "R", None)?;
    let nu = r0.nrows();

    let nc = match stage_list(obj, "d", stages)? {
        Some(d) => vector(&d[0], "d")?.len(),
        None => 0,
    };
    let mat_at =
        |field: &str, i: usize, rows: usize, cols: usize| -> Result<DMatrix<f64>, ModelError> {
            match stage_list(obj, field, stages)? {
                Some(list) => {
                    let m = matrix(&list[i], field, Some(cols))?;
                    Ok(if m.nrows() == 0 {
                        DMatrix::zeros(rows, cols)
                    } else {
                        m
                    })
                }
                None => Ok(DMatrix::zeros(rows, cols)),
            }
        };
    let vec_at = |field: &str, i: usize, len: usize| -> Result<DVector<f64>, ModelError> {
        match stage_list(obj, field, stages)? {
            Some(list) => vector(&list[i], field),
            None => Ok(DVector::zeros(len)),
        }
    };
    let mut st = Vec::with_capacity(stages);
    for i in 0..stages {
        st.push(OcpStage {
            q: matrix(&q_list[i], "Q", Some(nx))?,
            r: matrix(&r_list[i], "R", Some(nu))?,
            s: mat_at("S", i, nu, nx)?,
            q_lin: vec_at("q", i, nx)?,
            r_lin: vec_at("r", i, nu)?,
            e: mat_at("E", i, nc, nx)?,
            l: mat_at("L", i, nc, nu)?,
            d: vec_at("d", i, nc)?,
        });
    }
    let c_list = stage_list(obj, "c", horizon)?;
    let mut dy = Vec::with_capacity(horizon);
    for i in 0..horizon {
        dy.push(StageDynamics {
            a: matrix(&a_list[i], "A", Some(nx))?,
            b: matrix(&b_list[i], "B", Some(nu))?,
            c: match c_list {
                Some(c) => vector(&c[i], "c")?,
                None => DVector::zeros(nx),
            },
        });
    }
    OcpQp::new(st, dy, xi)
}

fn parse_problem_value(v: &Value) -> Result<Problem, ModelError> {
    let obj = object(v, "problem")?;
    if let Some(d) = obj.get("dense") {
        return parse_dense(object(d, "dense")?).map(Problem::Dense);
    }
    if let Some(o) = obj.get("ocp") {
        return parse_ocp(object(o, "ocp")?).map(Problem::Ocp);
    }
    Err(field_err(
        "dense",
        "expected a top-level `dense` or `ocp` object",
    ))
}

pub fn parse_problem(text: &str) -> Result<Problem, ModelError> {
    let v: Value = serde_json::from_str(text).map_err(|e| field_err("document", e.to_string()))?;
    parse_problem_value(&v)
}

/// Reads `{"problem": {...}, "certificate": {...}}`. A solver output
/// document with a `certificate` entry next to the problem also works.
pub fn parse_verify_input(text: &str) -> Result<(Problem, ClaimedCertificate), ModelError> {
    let v: Value = serde_json::from_str(text).map_err(|e| field_err("document", e.to_string()))?;
    let obj = object(&v, "document")?;
    let problem = match obj.get("problem") {
        Some(p) => parse_problem_value(p)?,
        None => parse_problem_value(&v)?,
    };
    Ok((problem, certificate_value(obj)?))
}

/// Reads the `certificate` entry of a document, such as the output of a
/// solve that ended with an infeasible status.
pub fn parse_certificate(text: &str) -> Result<ClaimedCertificate, ModelError> {
    let v: Value = serde_json::from_str(text).map_err(|e| field_err("document", e.to_string()))?;
    certificate_value(object(&v, "document")?)
}

fn certificate_value(obj: &Map<String, Value>) -> Result<ClaimedCertificate, ModelError> {
    let cert = object(required(obj, "certificate")?, "certificate")?;
    let kind = match cert.get("kind") {
        None => None,
        Some(k) => Some(match k.as_str() {
            Some("dual") => CertificateKind::Dual,
            Some("primal") => CertificateKind::Primal,
            Some("both") => CertificateKind::Both,
            _ => {
                return Err(field_err(
                    "kind",
                    format!("expected \"dual\", \"primal\" or \"both\", found {k}"),
                ))
            }
        }),
    };
    let opt_vec = |field: &str| cert.get(field).map(|x| vector(x, field)).transpose();
    let claimed = ClaimedCertificate {
        kind,
        dz: opt_vec("dz")?,
        dlambda: opt_vec("dlambda")?,
        dv: opt_vec("dv")?,
    };
    if claimed.dz.is_none() && claimed.dlambda.is_none() && claimed.dv.is_none() {
        return Err(field_err(
            "certificate",
            "needs at least one of `dz`, `dlambda`, `dv`",
        ));
    }
    Ok(claimed)
}

fn vec_json(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&x| json!(x)).collect())
}

fn mat_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|&x| json!(x)).collect()))
            .collect(),
    )
}

pub fn certificate_json(c: &Certificate) -> Value {
    json!({
        "kind": c.kind.name(),
        "dz": vec_json(&c.dz),
        "dlambda": vec_json(&c.dlambda),
        "dv": vec_json(&c.dv),
    })
}

pub fn point_json(x: &PrimalDualPoint) -> Value {
    json!({ "z": vec_json(&x.z), "lambda": vec_json(&x.lambda), "v": vec_json(&x.v) })
}

/// Solver output: status, residual, iteration counts, and either the
/// solution or the certificate.
pub fn result_json(problem: &Problem, res: &SolveResult) -> Value {
    let mut out = json!({
        "status": res.status.name(),
        "pi_norm": res.stats.residual,
        "outer_iterations": res.stats.outer_iterations,
        "inner_iterations": res.stats.inner_iterations,
    });
    let map = out.as_object_mut().expect("object literal");
    match &res.certificate {
        Some(c) => {
            map.insert("certificate".into(), certificate_json(c));
        }
        None => {
            map.insert("objective".into(), json!(problem.objective(&res.x.z)));
            map.insert("solution".into(), point_json(&res.x));
        }
    }
    out
}

pub fn dense_json(p: &DenseQp) -> Value {
    json!({ "dense": {
        "H": mat_json(&p.hessian),
        "f": vec_json(&p.cost),
        "G": mat_json(&p.eq_mat),
        "h": vec_json(&p.eq_rhs),
        "A": mat_json(&p.ineq_mat),
        "b": vec_json(&p.ineq_rhs),
    }})
}

pub fn ocp_json(p: &OcpQp) -> Value {
    let st = p.stages();
    let dy = p.dynamics();
    let mats = |f: &dyn Fn(&OcpStage) -> &DMatrix<f64>| {
        Value::Array(st.iter().map(|s| mat_json(f(s))).collect())
    };
    let vecs = |f: &dyn Fn(&OcpStage) -> &DVector<f64>| {
        Value::Array(st.iter().map(|s| vec_json(f(s))).collect())
    };
    json!({ "ocp": {
        "N": p.horizon(),
        "Q": mats(&|s| &s.q),
        "R": mats(&|s| &s.r),
        "S": mats(&|s| &s.s),
        "q": vecs(&|s| &s.q_lin),
        "r": vecs(&|s| &s.r_lin),
        "E": mats(&|s| &s.e),
        "L": mats(&|s| &s.l),
        "d": vecs(&|s| &s.d),
        "A": Value::Array(dy.iter().map(|d| mat_json(&d.a)).collect()),
        "B": Value::Array(dy.iter().map(|d| mat_json(&d.b)).collect()),
        "c": Value::Array(dy.iter().map(|d| vec_json(&d.c)).collect()),
        "xi": vec_json(p.initial_state()),
    }})
}
