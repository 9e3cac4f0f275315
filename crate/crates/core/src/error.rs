use thiserror::Error;

use crate::schema::AttrSet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("duplicate output alias `{0}`")]
    DuplicateAlias(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("duplicate grouping set {0}")]
    DuplicateGroupingSet(AttrSet),
    #[error("integer overflow in {0}")]
    Overflow(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("relation space is not legitimate: {0}")]
    IllegitimateSpace(String),
    #[error("slice block is not legitimate: region schema {region} and feature schema {feature} overlap")]
    IllegitimateBlock { region: AttrSet, feature: AttrSet },
    #[error("slice relation schema is not legitimate: {0}")]
    IllegitimateSchema(String),
    #[error("no relation matches block (region {region}, feature {feature})")]
    NoMatchingRelation { region: AttrSet, feature: AttrSet },
    #[error("flatten produced two relations with dimensions {0}")]
    IllegitimateDimensions(AttrSet),

    #[error("unknown region schema {0}")]
    UnknownRegionSchema(AttrSet),
    #[error("unknown feature schema {0}")]
    UnknownFeatureSchema(AttrSet),
    #[error("predicate does not match slice schema: {0}")]
    PredicateSchemaError(String),
    #[error("transformation `{0}` needs the reference slice at region () but none exists")]
    MissingReferenceSlice(String),
    #[error("output schema is not legitimate: {0}")]
    IllegitimateOutputSchema(String),
    #[error("dimension conflict: {0}")]
    DimensionConflict(String),
    #[error("projection {projected} is not a subset of {feature}")]
    ProjectionNotSubset { feature: AttrSet, projected: AttrSet },
    #[error("unsupported join graph: {0}")]
    UnsupportedJoinGraph(String),

    #[error("feature `{0}` expects at most one row")]
    NonScalarFeature(String),
    #[error("reference count is zero")]
    ZeroReferenceCount,
    #[error("non-positive denominator total: {0}")]
    NonPositiveDenominator(String),
    #[error("metric model is not finite: {0}")]
    NonFiniteModelValue(String),
    #[error("correlation period is empty: {0}")]
    EmptyPeriod(String),

    #[error("unsound apriori annotation: {0}")]
    UnsoundAnnotation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
