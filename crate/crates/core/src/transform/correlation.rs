//! Rank correlation that only pairs points across two periods.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{params_of, require_numeric, scalar_table, SliceTransformation};
use crate::error::{Error, Result};
use crate::relation::{Relation, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::value::{Value, ValueType};

/// `(B, R)` points of one period.
type Series = Vec<(f64, f64)>;

/// Fenwick tree over counts.
struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< i`.
    fn prefix(&self, i: usize) -> i64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i &= i - 1;
        }
        s
    }
}

/// `Σ_{i,j} sgn((R^t_i − R^c_j)(B^t_i − B^c_j)) / (N M)` over test points
/// `u` and reference points `v`, each `(B, R)`. Ties contribute zero.
///
/// Runs in `O((N + M) log M)`: sweeping test points by `B`, a Fenwick tree
/// over the reference `R` ranks counts the reference points in each
/// quadrant.
pub fn cross_rank_corr(u: &[(f64, f64)], v: &[(f64, f64)]) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::EmptyPeriod(format!("{} test and {} reference points", u.len(), v.len())));
    }
    if u.iter().chain(v).any(|(b, r)| b.is_nan() || r.is_nan()) {
        return Err(Error::InvalidValue("NaN in correlation input".into()));
    }
    let mut rs: Vec<f64> = v.iter().map(|p| p.1).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    let rank = |r: f64| rs.partition_point(|&x| x < r);
    let upper = |r: f64| rs.partition_point(|&x| x <= r);

    let mut vs: Vec<(f64, usize)> = v.iter().map(|&(b, r)| (b, rank(r))).collect();
    vs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut us: Vec<(f64, f64)> = u.to_vec();
    us.sort_by(|a, b| a.0.total_cmp(&b.0));

    // For each test point, (below-R, above-R) counts among reference points
    // whose B is strictly less, and among those whose B is at most equal.
    let sweep = |strict: bool| -> Vec<(i64, i64)> {
        let mut fw = Fenwick::new(rs.len());
        let mut j = 0;
        let mut inserted = 0;
        us.iter()
            .map(|&(b, r)| {
                while j < vs.len() && (if strict { vs[j].0 < b } else { vs[j].0 <= b }) {
                    fw.add(vs[j].1);
                    inserted += 1;
                    j += 1;
                }
                (fw.prefix(rank(r)), inserted - fw.prefix(upper(r)))
            })
            .collect()
    };
    let less = sweep(true);
    let less_eq = sweep(false);
    let mut all_r: Vec<f64> = v.iter().map(|p| p.1).collect();
    all_r.sort_by(f64::total_cmp);

    let mut total: i64 = 0;
    for (k, &(_, r)) in us.iter().enumerate() {
        let (ll, lg) = less[k];
        let (le_below, le_above) = less_eq[k];
        let below = all_r.partition_point(|&y| y < r) as i64;
        let above = (v.len() - all_r.partition_point(|&y| y <= r)) as i64;
        let (gl, gg) = (below - le_below, above - le_above);
        total += ll + gg - lg - gl;
    }
    Ok(total as f64 / (u.len() as f64 * v.len() as f64))
}

fn default_alias() -> String {
    "CrossRankCorr".into()
}

/// Splits a `[time, metric1, metric2]` table into a reference and a test
/// period and returns their cross-rank correlation.
///
/// With `test_column` the split follows that boolean column. Otherwise the
/// first half of the distinct `time` values (rounded down) is the reference
/// period.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossRankCorrelation {
    pub metric1: String,
    pub metric2: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_column: Option<String>,
    #[serde(default = "default_alias")]
    pub alias: String,
}

impl CrossRankCorrelation {
    fn splitter(&self) -> Result<&str> {
        self.test_column
            .as_deref()
            .or(self.time.as_deref())
            .ok_or_else(|| Error::InvalidArgument("cross_rank_corr needs `time` or `test_column`".into()))
    }

    /// Test and reference points of `table`.
    pub fn periods(&self, table: &Relation) -> Result<(Series, Series)> {
        let s = table.schema();
        let (m1, m2) = (s.require(&self.metric1)?, s.require(&self.metric2)?);
        let point = |r: &[Value]| Some((r[m1].as_f64()?, r[m2].as_f64()?));
        let (mut u, mut v) = (Vec::new(), Vec::new());
        if let Some(tc) = &self.test_column {
            let i = s.require(tc)?;
            for r in table.rows() {
                let Some(p) = point(r) else { continue };
                match r[i] {
                    Value::Bool(true) => u.push(p),
                    Value::Bool(false) => v.push(p),
                    _ => {}
                }
            }
        } else {
            let i = s.require(self.splitter()?)?;
            let times: BTreeSet<&Value> = table.rows().map(|r| &r[i]).filter(|t| !t.is_null()).collect();
            let cut: Vec<&Value> = times.iter().copied().take(times.len() / 2).collect();
            for r in table.rows() {
                let Some(p) = point(r) else { continue };
                if r[i].is_null() {
                    continue;
                }
                if cut.contains(&&r[i]) {
                    v.push(p);
                } else {
                    u.push(p);
                }
            }
        }
        Ok((u, v))
    }
}

impl SliceTransformation for CrossRankCorrelation {
    fn key(&self) -> &'static str {
        "cross_rank_corr"
    }

    fn referenced(&self) -> Option<AttrSet> {
        let mut a: AttrSet = [self.metric1.as_str(), self.metric2.as_str()].into_iter().collect();
        a.extend_opt(self.time.as_deref());
        a.extend_opt(self.test_column.as_deref());
        Some(a)
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        require_numeric(input, &self.metric1)?;
        require_numeric(input, &self.metric2)?;
        let split = self.splitter()?;
        if let Some(tc) = &self.test_column {
            if input.type_of(tc) != Some(ValueType::Bool) {
                return Err(Error::TypeMismatch(format!("`{tc}` must be a boolean column")));
            }
        }
        input.require(split)?;
        Ok(Schema::of([(self.alias.as_str(), ValueType::Float)]))
    }

    fn apply(&self, _: &Tuple, input: &Relation, _: Option<&Relation>) -> Result<Relation> {
        self.output_schema(input.schema())?;
        let (u, v) = self.periods(input)?;
        scalar_table(&self.alias, ValueType::Float, Value::Float(cross_rank_corr(&u, &v)?))
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

trait ExtendOpt {
    fn extend_opt(&mut self, a: Option<&str>);
}

impl ExtendOpt for AttrSet {
    fn extend_opt(&mut self, a: Option<&str>) {
        if let Some(a) = a {
            self.insert(a);
        }
    }
}
