//! Shared fixtures, brute-force oracles and random instance generators.
//!
//! The oracles work on plain tuples and recompute everything from scratch;
//! they never call the engine's operators.

pub mod fixtures;
pub mod gen;
pub mod oracle;

use mra_core::{Relation, Tuple, Value};

/// Rows of `r` as attribute maps.
pub fn tuples_of(r: &Relation) -> Vec<Tuple> {
    r.tuples().collect()
}

fn close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => (x - y).abs() <= tol || (x.is_nan() && y.is_nan()),
        _ => a == b,
    }
}

fn tuple_close(a: &Tuple, b: &Tuple, tol: f64) -> bool {
    a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| close(v, w, tol)))
}

/// Multiset-free equality of two tuple sets with float tolerance.
pub fn same_tuples(a: &[Tuple], b: &[Tuple], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for x in a {
        let Some(j) = (0..b.len()).find(|&j| !used[j] && tuple_close(x, &b[j], tol)) else {
            return false;
        };
        used[j] = true;
    }
    true
}

/// Builds a tuple from `(name, value)` pairs.
pub fn tup<'a>(pairs: impl IntoIterator<Item = (&'a str, Value)>) -> Tuple {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
