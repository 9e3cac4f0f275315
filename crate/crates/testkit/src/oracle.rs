//! Brute-force reference implementations.

use std::collections::{BTreeMap, BTreeSet};

use mra_core::{Tuple, Value};

#[derive(Debug, Clone)]
pub enum OAgg {
    Sum(String),
    Count,
    Ratio(String, String),
}

fn sum(rows: &[&Tuple], col: &str) -> Value {
    let vals: Vec<&Value> = rows.iter().map(|r| &r[col]).filter(|v| !v.is_null()).collect();
    if vals.is_empty() {
        return Value::Null;
    }
    if vals.iter().all(|v| matches!(v, Value::Int(_))) {
        Value::Int(vals.iter().map(|v| if let Value::Int(x) = v { *x } else { 0 }).sum())
    } else {
        Value::Float(vals.iter().filter_map(|v| v.as_f64()).sum())
    }
}

/// GROUP BY `keys` with one output column per aggregation. Null keys form
/// their own group. Empty input gives no groups.
pub fn group_by(rows: &[Tuple], keys: &[&str], aggs: &[(&str, OAgg)]) -> Vec<Tuple> {
    let mut groups: Vec<(Vec<Value>, Vec<&Tuple>)> = Vec::new();
    for r in rows {
        let k: Vec<Value> = keys.iter().map(|c| r[*c].clone()).collect();
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, members)) => members.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(k, members)| {
            let mut out: Tuple = keys.iter().map(|c| c.to_string()).zip(k).collect();
            for (alias, agg) in aggs {
                let v = match agg {
                    OAgg::Sum(c) => sum(&members, c),
                    OAgg::Count => Value::Int(members.len() as i64),
                    OAgg::Ratio(a, b) => match (sum(&members, a).as_f64(), sum(&members, b).as_f64()) {
                        (Some(n), Some(d)) if d != 0.0 => Value::Float(n / d),
                        _ => Value::Null,
                    },
                };
                out.insert(alias.to_string(), v);
            }
            out
        })
        .collect()
}

/// GROUP BY CUBE: one block per subset of `dims`, absent keys padded with
/// null and a grouping id whose bits follow the sorted dimension names,
/// first name most significant, 1 meaning grouped.
pub fn padded_cube(rows: &[Tuple], dims: &[&str], aggs: &[(&str, OAgg)], id_column: &str) -> Vec<Tuple> {
    let mut sorted: Vec<&str> = dims.to_vec();
    sorted.sort();
    let n = sorted.len();
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let keys: Vec<&str> = (0..n).filter(|i| mask >> (n - 1 - i) & 1 == 1).map(|i| sorted[i]).collect();
        for mut t in group_by(rows, &keys, aggs) {
            for d in &sorted {
                t.entry(d.to_string()).or_insert(Value::Null);
            }
            if n > 0 {
                t.insert(id_column.to_string(), Value::Int(mask as i64));
            }
            out.push(t);
        }
    }
    out
}

/// Equality between `left_table.left_attr` and `right_table.right_attr`.
#[derive(Debug, Clone)]
pub struct Eq {
    pub left: usize,
    pub left_attr: String,
    pub right: usize,
    pub right_attr: String,
}

fn values_equal(a: &Value, b: &Value) -> bool {
    if a.is_null() || b.is_null() {
        return false;
    }
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if !matches!(a, Value::Bool(_)) && !matches!(b, Value::Bool(_)) => x == y,
        _ => a == b,
    }
}

/// Keeps a row iff it takes part in some assignment of one row per table
/// that satisfies every condition of its connected component. Tables in no
/// condition are returned unchanged.
pub fn consistent_rows(tables: &[Vec<Tuple>], conds: &[Eq]) -> Vec<BTreeSet<Tuple>> {
    let n = tables.len();
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut Vec<usize>, x: usize) -> usize {
        if c[x] == x {
            x
        } else {
            let r = root(c, c[x]);
            c[x] = r;
            r
        }
    }
    for e in conds {
        let (a, b) = (root(&mut comp, e.left), root(&mut comp, e.right));
        comp[a] = b;
    }
    let mut out: Vec<BTreeSet<Tuple>> = vec![BTreeSet::new(); n];
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = root(&mut comp, i);
        groups.entry(r).or_default().push(i);
    }
    for members in groups.values() {
        let local: Vec<&Eq> = conds.iter().filter(|e| members.contains(&e.left)).collect();
        let mut pick = vec![0usize; members.len()];
        if members.iter().any(|&t| tables[t].is_empty()) {
            continue;
        }
        loop {
            let row = |t: usize| -> &Tuple {
                let k = members.iter().position(|&m| m == t).unwrap();
                &tables[t][pick[k]]
            };
            if local.iter().all(|e| values_equal(&row(e.left)[&e.left_attr], &row(e.right)[&e.right_attr])) {
                for &t in members {
                    out[t].insert(row(t).clone());
                }
            }
            // Odometer over row choices.
            let mut k = 0;
            loop {
                if k == members.len() {
                    break;
                }
                pick[k] += 1;
                if pick[k] < tables[members[k]].len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
            if k == members.len() {
                break;
            }
        }
    }
    out
}

/// Itemsets (attribute-value maps, one value per attribute, non-empty) that
/// occur in at least `minsup` transactions.
pub fn frequent_itemsets(transactions: &[Tuple], minsup: usize) -> BTreeSet<Tuple> {
    let mut counts: BTreeMap<Tuple, usize> = BTreeMap::new();
    for t in transactions {
        let items: Vec<(&String, &Value)> = t.iter().collect();
        for mask in 1u32..(1 << items.len()) {
            let set: Tuple = items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, (k, v))| ((*k).clone(), (*v).clone()))
                .collect();
            *counts.entry(set).or_default() += 1;
        }
    }
    counts.into_iter().filter(|(_, c)| *c >= minsup).map(|(s, _)| s).collect()
}

/// Mean of `sgn((R_i - R_j)(B_i - B_j))` over all test/reference pairs.
pub fn cross_rank_pairs(test: &[(f64, f64)], reference: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for (bt, rt) in test {
        for (bc, rc) in reference {
            let p = (rt - rc) * (bt - bc);
            total += if p > 0.0 {
                1.0
            } else if p < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    }
    total / (test.len() * reference.len()) as f64
}

/// Region attribution for the ratio `(w_γ + w_a) / (s_γ + s_a)` by the
/// midpoint rule over the straight path from `control` to `test`, where
/// each endpoint is `[w_γ, w_a, s_γ, s_a]` and only `w_γ`, `s_γ` are owned
/// by the region.
pub fn ratio_path_integral(control: [f64; 4], test: [f64; 4], steps: usize) -> f64 {
    let delta: Vec<f64> = (0..4).map(|i| test[i] - control[i]).collect();
    let h = 1.0 / steps as f64;
    let mut total = 0.0;
    for k in 0..steps {
        let a = (k as f64 + 0.5) * h;
        let z: Vec<f64> = (0..4).map(|i| control[i] + a * delta[i]).collect();
        let (w, s) = (z[0] + z[1], z[2] + z[3]);
        total += (delta[0] / s - delta[2] * w / (s * s)) * h;
    }
    total
}
