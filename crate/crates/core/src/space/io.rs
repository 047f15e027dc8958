//! JSON schemas for spaces and point functions.
//!
//! Space files carry either an edge list (graph space, shortest-path
//! metric) or a dense distance matrix:
//!
//!   { "points": [id...], "weights": [w...], "edges": [[i,j]...] }
//!   { "points": [id...], "weights": [w...], "dist": [[...]] }
//!
//! Function files map point ids to values: { "values": { id: x } }.

use serde_json::{json, Value};

use crate::error::{HblError, Result};
use crate::space::FiniteSpace;

/// Canonical JSON value of a space; graph spaces serialize their edge
/// list, metric spaces the dense matrix.
pub fn space_to_json(space: &FiniteSpace) -> Value {
    let points: Vec<Value> = space.ids().iter().map(|s| json!(s)).collect();
    let weights: Vec<Value> = (0..space.len()).map(|i| json!(space.weight(i))).collect();
    if let Some(edges) = space.edges() {
        let es: Vec<Value> = edges.iter().map(|&(a, b)| json!([a, b])).collect();
        json!({"points": points, "weights": weights, "edges": es})
    } else {
        let n = space.len();
        let rows: Vec<Value> = (0..n)
            .map(|i| Value::Array((0..n).map(|j| json!(space.dist(i, j))).collect()))
            .collect();
        json!({"points": points, "weights": weights, "dist": rows})
    }
}

fn field<'v>(value: &'v Value, key: &str, ptr: &str) -> Result<&'v Value> {
    value.get(key).ok_or_else(|| {
        HblError::ParseError(format!("missing field {:?} at {}", key, ptr))
    })
}

/// Parse and validate a space from its JSON value; metric axioms are
/// checked on construction and violations name the offending points.
pub fn space_from_json(value: &Value) -> Result<FiniteSpace> {
    let points = field(value, "points", "/")?
        .as_array()
        .ok_or_else(|| HblError::ParseError("/points must be an array".into()))?;
    let ids: Vec<String> = points
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(HblError::ParseError(format!(
                "/points/{} must be a string or number",
                i
            ))),
        })
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = field(value, "weights", "/")?
        .as_array()
        .ok_or_else(|| HblError::ParseError("/weights must be an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, w)| {
            w.as_f64().ok_or_else(|| {
                HblError::ParseError(format!("/weights/{} must be a number", i))
            })
        })
        .collect::<Result<_>>()?;

    if let Some(edges_v) = value.get("edges") {
        let edges: Vec<(usize, usize)> = edges_v
            .as_array()
            .ok_or_else(|| HblError::ParseError("/edges must be an array".into()))?
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let pair = e.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    HblError::ParseError(format!("/edges/{} must be a pair", i))
                })?;
                let a = pair[0].as_u64().ok_or_else(|| {
                    HblError::ParseError(format!("/edges/{}/0 must be an index", i))
                })? as usize;
                let b = pair[1].as_u64().ok_or_else(|| {
                    HblError::ParseError(format!("/edges/{}/1 must be an index", i))
                })? as usize;
                Ok((a, b))
            })
            .collect::<Result<_>>()?;
        FiniteSpace::from_edges(ids, weights, edges)
    } else if let Some(dist_v) = value.get("dist") {
        let rows = dist_v
            .as_array()
            .ok_or_else(|| HblError::ParseError("/dist must be an array".into()))?;
        let n = ids.len();
        if rows.len() != n {
            return Err(HblError::ParseError(format!(
                "/dist has {} rows for {} points",
                rows.len(),
                n
            )));
        }
        let mut dist = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            let cols = row.as_array().filter(|a| a.len() == n).ok_or_else(|| {
                HblError::ParseError(format!("/dist/{} must hold {} entries", i, n))
            })?;
            for (j, v) in cols.iter().enumerate() {
                dist[i * n + j] = v.as_f64().ok_or_else(|| {
                    HblError::ParseError(format!("/dist/{}/{} must be a number", i, j))
                })?;
            }
        }
        FiniteSpace::new(ids, dist, weights, None)
    } else {
        Err(HblError::ParseError(
            "space needs either /edges or /dist".into(),
        ))
    }
}

/// Read a space from a file path.
pub fn ingest_space(path: &std::path::Path) -> Result<FiniteSpace> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| HblError::ParseError(format!("{}: {}", path.display(), e)))?;
    space_from_json(&value)
}

/// Canonical JSON of a point function.
pub fn function_to_json(space: &FiniteSpace, f: &[f64]) -> Value {
    let mut map = serde_json::Map::new();
    for (i, id) in space.ids().iter().enumerate() {
        map.insert(id.clone(), json!(f[i]));
    }
    json!({ "values": map })
}

/// Parse a point function against a space; missing ids default to 0.
pub fn function_from_json(space: &FiniteSpace, value: &Value) -> Result<Vec<f64>> {
    let values = field(value, "values", "/")?
        .as_object()
        .ok_or_else(|| HblError::ParseError("/values must be an object".into()))?;
    let mut f = vec![0.0; space.len()];
    for (id, v) in values {
        let idx = space.index_of(id).ok_or_else(|| {
            HblError::DataError(format!("function references unknown point {:?}", id))
        })?;
        f[idx] = v.as_f64().ok_or_else(|| {
            HblError::ParseError(format!("/values/{} must be a number", id))
        })?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::canonical_json;
    use crate::space::generators::{gen_hyperbolic_disk, gen_tree};

    #[test]
    fn roundtrip_graph_space_is_byte_identical() {
        let tree = gen_tree(3, 3).unwrap();
        let v1 = space_to_json(&tree);
        let parsed = space_from_json(&v1).unwrap();
        let v2 = space_to_json(&parsed);
        assert_eq!(canonical_json(&v1), canonical_json(&v2));
        assert_eq!(tree, parsed);
    }

    #[test]
    fn roundtrip_metric_space() {
        let h = gen_hyperbolic_disk(5, 2.0, 3).unwrap();
        let v1 = space_to_json(&h);
        let parsed = space_from_json(&v1).unwrap();
        assert_eq!(canonical_json(&v1), canonical_json(&space_to_json(&parsed)));
    }

    #[test]
    fn single_point_space_parses() {
        let v = serde_json::json!({"points": ["a"], "weights": [2.0], "edges": []});
        let s = space_from_json(&v).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.weight(0), 2.0);
    }

    #[test]
    fn asymmetric_matrix_names_points() {
        let v = serde_json::json!({
            "points": ["a", "b"],
            "weights": [1.0, 1.0],
            "dist": [[0.0, 1.0], [2.0, 0.0]]
        });
        let err = space_from_json(&v).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains('a') && msg.contains('b'), "{msg}");
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let v = serde_json::json!({"points": ["a"], "weights": "nope"});
        let err = space_from_json(&v).unwrap_err();
        assert!(format!("{err}").contains("/weights"));
    }

    #[test]
    fn function_roundtrip() {
        let tree = gen_tree(3, 1).unwrap();
        let f = vec![1.0, -0.5, 0.25, 0.0];
        let v = function_to_json(&tree, &f);
        let parsed = function_from_json(&tree, &v).unwrap();
        assert_eq!(f, parsed);
    }
}
