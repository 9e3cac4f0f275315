//! Feature extraction, scalar aggregates, a z-score anomaly flag and
//! itemset support.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{params_of, require_numeric, scalar_table, SliceTransformation};
use crate::error::{Error, Result};
use crate::predicate::ScalarAgg;
use crate::relation::{Relation, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::value::{Value, ValueType};

/// Passes the input table through unchanged.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Identity {}

impl SliceTransformation for Identity {
    fn key(&self) -> &'static str {
        "identity"
    }

    fn referenced(&self) -> Option<AttrSet> {
        None
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        Ok(input.clone())
    }

    fn apply(&self, _: &Tuple, input: &Relation, _: Option<&Relation>) -> Result<Relation> {
        Ok(input.clone())
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

/// Renames the single cell of a one-row table: `[Cost] -> [TotalCost]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub attribute: String,
    pub alias: String,
}

impl SliceTransformation for Feature {
    fn key(&self) -> &'static str {
        "feature"
    }

    fn referenced(&self) -> Option<AttrSet> {
        Some([self.attribute.as_str()].into_iter().collect())
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        let ty = input
            .type_of(&self.attribute)
            .ok_or_else(|| Error::UnknownAttribute(self.attribute.clone()))?;
        Ok(Schema::of([(self.alias.as_str(), ty)]))
    }

    fn apply(&self, _: &Tuple, input: &Relation, _: Option<&Relation>) -> Result<Relation> {
        let schema = self.output_schema(input.schema())?;
        if input.len() > 1 {
            return Err(Error::NonScalarFeature(self.attribute.clone()));
        }
        let i = input.schema().require(&self.attribute)?;
        Relation::new(schema, input.rows().map(|r| vec![r[i].clone()]))
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

/// One-row table holding an aggregate of one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarAggregate {
    pub agg: ScalarAgg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    pub alias: String,
}

impl SliceTransformation for ScalarAggregate {
    fn key(&self) -> &'static str {
        "scalar_agg"
    }

    fn referenced(&self) -> Option<AttrSet> {
        self.metric.as_ref().map(|m| [m.as_str()].into_iter().collect())
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        let ty = match (&self.metric, self.agg) {
            (_, ScalarAgg::Count) => ValueType::Int,
            (None, agg) => {
                return Err(Error::InvalidArgument(format!("{} needs a metric", agg.name())))
            }
            (Some(m), ScalarAgg::Avg) => {
                require_numeric(input, m)?;
                ValueType::Float
            }
            (Some(m), ScalarAgg::Sum) => require_numeric(input, m)?,
            (Some(m), _) => input.type_of(m).ok_or_else(|| Error::UnknownAttribute(m.clone()))?,
        };
        Ok(Schema::of([(self.alias.as_str(), ty)]))
    }

    fn apply(&self, _: &Tuple, input: &Relation, _: Option<&Relation>) -> Result<Relation> {
        let schema = self.output_schema(input.schema())?;
        let col = match &self.metric {
            Some(m) => Some(input.schema().require(m)?),
            None => None,
        };
        let v = self.agg.apply(input.rows(), col)?;
        let ty = schema.columns()[0].ty;
        scalar_table(&self.alias, ty, v)
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

fn default_anomaly_alias() -> String {
    "IsAnomaly".into()
}

/// Flags rows whose metric lies more than `threshold` population standard
/// deviations from the mean. Stands in for a real anomaly detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZScoreAnomaly {
    pub time: String,
    pub metric: String,
    pub threshold: f64,
    #[serde(default = "default_anomaly_alias")]
    pub alias: String,
}

impl SliceTransformation for ZScoreAnomaly {
    fn key(&self) -> &'static str {
        "zscore_anomaly"
    }

    fn referenced(&self) -> Option<AttrSet> {
        Some([self.time.as_str(), self.metric.as_str()].into_iter().collect())
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        require_numeric(input, &self.metric)?;
        let mut out = input.restrict(&self.referenced().unwrap())?;
        out.push(self.alias.clone(), ValueType::Bool)?;
        Ok(out)
    }

    fn apply(&self, _: &Tuple, input: &Relation, _: Option<&Relation>) -> Result<Relation> {
        let schema = self.output_schema(input.schema())?;
        let base = input.reorder(&input.schema().restrict(&self.referenced().unwrap())?);
        let m = base.schema().require(&self.metric)?;
        let xs: Vec<f64> = base.rows().filter_map(|r| r[m].as_f64()).collect();
        let flags = zscore_flags(&xs, self.threshold);
        let mut flagged = flags.into_iter();
        let rows = base.rows().map(|r| {
            let flag = match r[m].as_f64() {
                Some(_) => flagged.next().unwrap(),
                None => false,
            };
            let mut row = r.clone();
            row.push(Value::Bool(flag));
            row
        });
        Relation::new(schema, rows.collect::<Vec<_>>())
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

/// `|x - mean| > threshold * stddev` with the population standard deviation;
/// all false when the deviation is zero.
pub fn zscore_flags(xs: &[f64], threshold: f64) -> Vec<bool> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return vec![false; xs.len()];
    }
    xs.iter().map(|x| (x - mean).abs() > threshold * sd).collect()
}

fn default_count() -> String {
    "Count".into()
}

fn default_support() -> String {
    "Support".into()
}

/// Share of the population count that falls in the region.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Support {
    #[serde(default = "default_count")]
    pub count_column: String,
    #[serde(default = "default_support")]
    pub alias: String,
}

impl Default for Support {
    fn default() -> Self {
        Support { count_column: default_count(), alias: default_support() }
    }
}

fn single_count(table: &Relation, col: &str) -> Result<Option<f64>> {
    let i = table.schema().require(col)?;
    match table.len() {
        0 => Ok(Some(0.0)),
        1 => Ok(table.rows().next().unwrap()[i].as_f64()),
        _ => Err(Error::NonScalarFeature(col.to_string())),
    }
}

impl SliceTransformation for Support {
    fn key(&self) -> &'static str {
        "support"
    }

    fn referenced(&self) -> Option<AttrSet> {
        Some([self.count_column.as_str()].into_iter().collect())
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        require_numeric(input, &self.count_column)?;
        Ok(Schema::of([(self.alias.as_str(), ValueType::Float)]))
    }

    fn needs_reference(&self) -> bool {
        true
    }

    fn apply(&self, _: &Tuple, input: &Relation, reference: Option<&Relation>) -> Result<Relation> {
        self.output_schema(input.schema())?;
        let reference = reference.ok_or_else(|| Error::MissingReferenceSlice(self.key().into()))?;
        let total = match single_count(reference, &self.count_column)? {
            Some(t) if t != 0.0 => t,
            _ => return Err(Error::ZeroReferenceCount),
        };
        let v = match single_count(input, &self.count_column)? {
            Some(c) => Value::Float(c / total),
            None => Value::Null,
        };
        scalar_table(&self.alias, ValueType::Float, v)
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::relation;
    use crate::value::ValueType::*;

    #[test]
    fn feature_extract() {
        let f = Feature { attribute: "Cost".into(), alias: "TotalCost".into() };
        let r = relation([("Cost", Int)], [vec![Value::Int(350)]]);
        let out = f.apply(&Tuple::new(), &r, None).unwrap();
        assert_eq!(out, relation([("TotalCost", Int)], [vec![Value::Int(350)]]));
        let empty = relation([("Cost", Int)], []);
        assert!(f.apply(&Tuple::new(), &empty, None).unwrap().is_empty());
        let two = relation([("Cost", Int)], [vec![Value::Int(1)], vec![Value::Int(2)]]);
        assert!(matches!(f.apply(&Tuple::new(), &two, None), Err(Error::NonScalarFeature(_))));
    }

    #[test]
    fn scalar_aggregates() {
        let max = ScalarAggregate { agg: ScalarAgg::Max, metric: Some("Cpc".into()), alias: "m".into() };
        let r = relation([("Cpc", Float)], [vec![Value::Float(15.0)], vec![Value::Float(5.0)]]);
        assert_eq!(
            max.apply(&Tuple::new(), &r, None).unwrap(),
            relation([("m", Float)], [vec![Value::Float(15.0)]])
        );
        let count = ScalarAggregate { agg: ScalarAgg::Count, metric: None, alias: "n".into() };
        let empty = relation([("Cpc", Float)], []);
        assert_eq!(
            count.apply(&Tuple::new(), &empty, None).unwrap(),
            relation([("n", Int)], [vec![Value::Int(0)]])
        );
    }

    #[test]
    fn zscore() {
        assert_eq!(zscore_flags(&[10.0, 10.0, 10.0], 2.0), vec![false; 3]);
        assert_eq!(zscore_flags(&[0.0, 0.0, 0.0, 100.0], 1.5), vec![false, false, false, true]);
        assert_eq!(zscore_flags(&[3.0], 0.0), vec![false]);
    }

    #[test]
    fn support_ratios() {
        let s = Support::default();
        let c = |n: i64| relation([("Count", Int)], [vec![Value::Int(n)]]);
        let sup = |a, b| s.apply(&Tuple::new(), &c(a), Some(&c(b))).unwrap().rows().next().unwrap()[0].clone();
        assert_eq!(sup(3, 3), Value::Float(1.0));
        assert_eq!(sup(0, 3), Value::Float(0.0));
        assert_eq!(sup(2, 5), Value::Float(0.4));
        assert_eq!(s.apply(&Tuple::new(), &c(1), Some(&c(0))), Err(Error::ZeroReferenceCount));
        assert!(matches!(
            s.apply(&Tuple::new(), &c(1), None),
            Err(Error::MissingReferenceSlice(_))
        ));
    }
}
