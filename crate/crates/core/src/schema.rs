use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::ValueType;

/// A set of attribute names. Schema identity throughout the algebra is an
/// `AttrSet`; column order is presentation only.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttrSet(BTreeSet<String>);

impl AttrSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn insert(&mut self, name: impl Into<String>) -> bool {
        self.0.insert(name.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> + '_ {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &AttrSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &AttrSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn union(&self, other: &AttrSet) -> AttrSet {
        AttrSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &AttrSet) -> AttrSet {
        AttrSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &AttrSet) -> AttrSet {
        AttrSet(self.0.difference(&other.0).cloned().collect())
    }

    /// File-name form: names sorted and joined with `__`.
    pub fn file_stem(&self) -> String {
        if self.is_empty() {
            "_root".to_string()
        } else {
            self.0.iter().cloned().collect::<Vec<_>>().join("__")
        }
    }
}

impl<S: Into<String>> FromIterator<S> for AttrSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        AttrSet(iter.into_iter().map(Into::into).collect())
    }
}

impl<'a> IntoIterator for &'a AttrSet {
    type Item = &'a String;
    type IntoIter = std::collections::btree_set::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for AttrSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(a)?;
        }
        f.write_str("]")
    }
}

/// Shorthand for building an [`AttrSet`] from string literals.
#[macro_export]
macro_rules! attrs {
    () => { $crate::schema::AttrSet::new() };
    ($($a:expr),+ $(,)?) => { [$($a),+].into_iter().collect::<$crate::schema::AttrSet>() };
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ValueType,
}

/// Ordered, typed attribute list with unique names.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::SchemaMismatch(format!(
                    "attribute `{}` appears twice",
                    c.name
                )));
            }
        }
        Ok(Schema { columns })
    }

    pub fn empty() -> Self {
        Schema::default()
    }

    /// Builds a schema from `(name, type)` pairs. Panics on duplicate names.
    pub fn of<S: Into<String>>(cols: impl IntoIterator<Item = (S, ValueType)>) -> Self {
        Schema::new(
            cols.into_iter()
                .map(|(name, ty)| Column { name: name.into(), ty })
                .collect(),
        )
        .expect("unique attribute names")
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn attr_set(&self) -> AttrSet {
        self.names().collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn type_of(&self, name: &str) -> Option<ValueType> {
        self.index_of(name).map(|i| self.columns[i].ty)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    /// Restriction to `attrs`, keeping this schema's column order.
    pub fn restrict(&self, attrs: &AttrSet) -> Result<Schema> {
        for a in attrs {
            self.require(a)?;
        }
        Ok(Schema {
            columns: self
                .columns
                .iter()
                .filter(|c| attrs.contains(&c.name))
                .cloned()
                .collect(),
        })
    }

    pub fn push(&mut self, name: impl Into<String>, ty: ValueType) -> Result<()> {
        let name = name.into();
        if self.contains(&name) {
            return Err(Error::DuplicateAlias(name));
        }
        self.columns.push(Column { name, ty });
        Ok(())
    }

    /// Appends the columns of `other` that are not already present; shared
    /// names must agree on type.
    pub fn merge(&self, other: &Schema) -> Result<Schema> {
        let mut out = self.clone();
        for c in &other.columns {
            match out.type_of(&c.name) {
                Some(t) if t == c.ty => {}
                Some(t) => {
                    return Err(Error::SchemaMismatch(format!(
                        "attribute `{}` is {} in one relation and {} in another",
                        c.name, t, c.ty
                    )))
                }
                None => out.columns.push(c.clone()),
            }
        }
        Ok(out)
    }

    /// Same attribute set with identical types, order ignored.
    pub fn same_as(&self, other: &Schema) -> bool {
        self.len() == other.len()
            && self
                .columns
                .iter()
                .all(|c| other.type_of(&c.name) == Some(c.ty))
    }
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl Eq for Schema {}

// Equality ignores column order, so hashing must too.
impl std::hash::Hash for Schema {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        let mut cols: Vec<&Column> = self.columns.iter().collect();
        cols.sort_by(|a, b| a.name.cmp(&b.name));
        cols.hash(state);
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: {}", c.name, c.ty)?;
        }
        f.write_str("]")
    }
}
