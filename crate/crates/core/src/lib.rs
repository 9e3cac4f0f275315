//! Multi-relational algebra: relation spaces, slice relations and the
//! operators that move between them.

pub mod aggregate;
pub mod algebra;
pub mod crawl;
pub mod error;
pub mod expr;
pub mod io;
pub mod lex;
pub mod predicate;
pub mod relation;
pub mod schema;
pub mod slice;
pub mod space;
pub mod transform;
pub mod value;

pub use aggregate::{group_aggregate, AggFunc, AggSpec};
pub use error::{Error, Result};
pub use expr::{CmpOp, Expr};
pub use relation::{relation, JoinKind, Relation, Row, Tuple};
pub use schema::{AttrSet, Column, Schema};
pub use space::{GroupingSets, Materialization, Member, RelationSpace};
pub use value::{Value, ValueType};
pub use slice::{flatten, region_refines, represent, represent_block, slice_represent, Alignment, Features, SliceRelation};
pub use predicate::{Atom, ScalarAgg, ScalarFn, SetOp, SlicePredicate, TableFn};
pub use transform::{Registry, SliceTransformation, TransformSpec};
pub use algebra::{
    slice_internal_join, slice_internal_project, slice_internal_select, slice_join, slice_project, slice_select,
    slice_transform, FeatureFilter, InternalSelect, JoinCondition, RegionCondition, TransformPlan,
};
pub use crawl::{crawl, crawl_with_stats, AprioriAnnotation, CrawlPlan, CrawlStats, Strategy};
