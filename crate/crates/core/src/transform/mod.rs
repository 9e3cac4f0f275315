//! Slice transformations and the registry of built-ins.
//!
//! A transformation maps a slice (region plus one feature table) to a new
//! table whose schema depends only on the input schema. Transformations that
//! compare a region with the population also receive the reference table,
//! i.e. the same feature at the empty region.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::relation::{Relation, Tuple};
use crate::schema::{AttrSet, Schema};

pub mod attribution;
pub mod basic;
pub mod correlation;

pub trait SliceTransformation: fmt::Debug + Send + Sync {
    /// Registry key.
    fn key(&self) -> &'static str;

    /// Attributes read from the input table, or `None` for the whole table.
    fn referenced(&self) -> Option<AttrSet>;

    /// Output schema for a given (projected) input schema.
    fn output_schema(&self, input: &Schema) -> Result<Schema>;

    fn needs_reference(&self) -> bool {
        false
    }

    /// `input` is already projected to [`SliceTransformation::referenced`].
    fn apply(&self, region: &Tuple, input: &Relation, reference: Option<&Relation>) -> Result<Relation>;

    /// Parameters as JSON, without the `type` key.
    fn params(&self) -> Json;
}

type Ctor = fn(Json) -> Result<Arc<dyn SliceTransformation>>;

/// Maps registry keys to constructors taking JSON parameters.
#[derive(Clone)]
pub struct Registry {
    ctors: BTreeMap<&'static str, Ctor>,
}

fn ctor<T>(params: Json) -> Result<Arc<dyn SliceTransformation>>
where
    T: SliceTransformation + serde::de::DeserializeOwned + 'static,
{
    let t: T = serde_json::from_value(params).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Arc::new(t))
}

impl Registry {
    pub fn empty() -> Self {
        Registry { ctors: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register("identity", ctor::<basic::Identity>);
        r.register("feature", ctor::<basic::Feature>);
        r.register("scalar_agg", ctor::<basic::ScalarAggregate>);
        r.register("zscore_anomaly", ctor::<basic::ZScoreAnomaly>);
        r.register("support", ctor::<basic::Support>);
        r.register("attribution_summable", ctor::<attribution::SummableAttribution>);
        r.register("attribution_density", ctor::<attribution::DensityAttribution>);
        r.register("attribution_numeric", ctor::<attribution::NumericAttribution>);
        r.register("cross_rank_corr", ctor::<correlation::CrossRankCorrelation>);
        r
    }

    /// The shared built-in registry.
    pub fn global() -> &'static Registry {
        static R: OnceLock<Registry> = OnceLock::new();
        R.get_or_init(Registry::builtin)
    }

    pub fn register(&mut self, key: &'static str, ctor: Ctor) {
        self.ctors.insert(key, ctor);
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.ctors.keys().copied()
    }

    pub fn build(&self, key: &str, params: Json) -> Result<Arc<dyn SliceTransformation>> {
        let c = self
            .ctors
            .get(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transformation `{key}`")))?;
        c(params)
    }

    /// Parses `{"type": key, "input": [...]?, ...params}`.
    pub fn spec_from_json(&self, v: &Json) -> Result<TransformSpec> {
        let mut obj = v
            .as_object()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("transformation must be an object".into()))?;
        let key = obj
            .remove("type")
            .and_then(|t| t.as_str().map(str::to_string))
            .ok_or_else(|| Error::InvalidArgument("transformation needs a `type`".into()))?;
        let input = match obj.remove("input") {
            None | Some(Json::Null) => None,
            Some(v) => Some(
                serde_json::from_value::<AttrSet>(v)
                    .map_err(|e| Error::InvalidArgument(format!("transformation input: {e}")))?,
            ),
        };
        let transform = self
            .build(&key, Json::Object(obj))
            .map_err(|e| Error::InvalidArgument(format!("transformation `{key}`: {e}")))?;
        TransformSpec::new(input, transform)
    }
}

/// A transformation bound to the feature schema it consumes.
#[derive(Debug, Clone)]
pub struct TransformSpec {
    input: AttrSet,
    explicit_input: bool,
    transform: Arc<dyn SliceTransformation>,
}

impl TransformSpec {
    /// `input` defaults to the attributes the transformation references.
    pub fn new(input: Option<AttrSet>, transform: Arc<dyn SliceTransformation>) -> Result<Self> {
        let explicit_input = input.is_some();
        let input = match (input, transform.referenced()) {
            (Some(i), Some(r)) if !r.is_subset(&i) => {
                return Err(Error::InvalidArgument(format!(
                    "`{}` reads {r}, which is not within its input {i}",
                    transform.key()
                )))
            }
            (Some(i), _) => i,
            (None, Some(r)) => r,
            (None, None) => {
                return Err(Error::InvalidArgument(format!(
                    "`{}` reads the whole table; give its input feature schema",
                    transform.key()
                )))
            }
        };
        Ok(TransformSpec { input, explicit_input, transform })
    }

    pub fn of(transform: impl SliceTransformation + 'static) -> Result<Self> {
        TransformSpec::new(None, Arc::new(transform))
    }

    pub fn with_input(input: AttrSet, transform: impl SliceTransformation + 'static) -> Result<Self> {
        TransformSpec::new(Some(input), Arc::new(transform))
    }

    /// The feature schema this transformation replaces.
    pub fn input(&self) -> &AttrSet {
        &self.input
    }

    /// The attributes actually passed to the transformation.
    pub fn projection(&self) -> AttrSet {
        self.transform.referenced().unwrap_or_else(|| self.input.clone())
    }

    pub fn transform(&self) -> &dyn SliceTransformation {
        self.transform.as_ref()
    }

    pub fn needs_reference(&self) -> bool {
        self.transform.needs_reference()
    }

    pub fn to_json(&self) -> Json {
        let mut obj = serde_json::Map::new();
        obj.insert("type".into(), Json::from(self.transform.key()));
        if self.explicit_input {
            obj.insert("input".into(), serde_json::to_value(&self.input).unwrap());
        }
        if let Json::Object(p) = self.transform.params() {
            obj.extend(p);
        }
        Json::Object(obj)
    }
}

impl Serialize for TransformSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransformSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Json::deserialize(d)?;
        Registry::global().spec_from_json(&v).map_err(serde::de::Error::custom)
    }
}

fn params_of<T: Serialize>(t: &T) -> Json {
    serde_json::to_value(t).expect("parameters serialize")
}

/// Single-row single-column relation.
pub(crate) fn scalar_table(name: &str, ty: crate::value::ValueType, v: crate::value::Value) -> Result<Relation> {
    Relation::new(Schema::of([(name, ty)]), [vec![v]])
}

pub(crate) fn require_numeric(schema: &Schema, attr: &str) -> Result<crate::value::ValueType> {
    let t = schema
        .type_of(attr)
        .ok_or_else(|| Error::UnknownAttribute(attr.to_string()))?;
    if t.is_numeric() {
        Ok(t)
    } else {
        Err(Error::TypeMismatch(format!("`{attr}` must be numeric, is {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrs;

    #[test]
    fn specs_round_trip_through_json() {
        let v = serde_json::json!({"type": "feature", "attribute": "Cost", "alias": "TotalCost"});
        let s: TransformSpec = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(s.input(), &attrs!["Cost"]);
        assert_eq!(s.to_json(), v);
    }

    #[test]
    fn unknown_keys_and_fields_are_rejected() {
        let r = Registry::global();
        assert!(r.spec_from_json(&serde_json::json!({"type": "causal_impact"})).is_err());
        assert!(r
            .spec_from_json(&serde_json::json!({"type": "feature", "attribute": "a", "alias": "b", "x": 1}))
            .is_err());
    }

    #[test]
    fn input_must_cover_references() {
        let v = serde_json::json!({"type": "feature", "input": ["Other"], "attribute": "Cost", "alias": "T"});
        assert!(Registry::global().spec_from_json(&v).is_err());
    }

    #[test]
    fn registry_has_every_key() {
        let keys: Vec<_> = Registry::global().keys().collect();
        for k in [
            "feature",
            "scalar_agg",
            "zscore_anomaly",
            "support",
            "attribution_summable",
            "attribution_density",
            "attribution_numeric",
            "cross_rank_corr",
        ] {
            assert!(keys.contains(&k), "{k}");
        }
    }
}
