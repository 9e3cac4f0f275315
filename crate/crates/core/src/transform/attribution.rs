//! Aumann-Shapley attribution of a metric change to a region.
//!
//! The metric is `F(z)` over parameters owned either by the region or by its
//! complement (the ambient). Moving every parameter along the straight path
//! from the control values `P0` to the test values `P1`, the region's
//! attribution is the line integral of the gradient restricted to the
//! region-owned parameters. Summable and density metrics have closed forms;
//! any other model goes through numerical quadrature.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{params_of, require_numeric, scalar_table, SliceTransformation};
use crate::error::{Error, Result};
use crate::relation::{Relation, Tuple};
use crate::schema::{AttrSet, Schema};
use crate::value::{Value, ValueType};

/// Control (`c`) and test (`t`) values for a density metric `w / s`, for the
/// population and for one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityInput {
    pub w_t: f64,
    pub w_c: f64,
    pub s_t: f64,
    pub s_c: f64,
    pub w_t_region: f64,
    pub w_c_region: f64,
    pub s_t_region: f64,
    pub s_c_region: f64,
}

impl DensityInput {
    /// Overall change `w_t/s_t - w_c/s_c`.
    pub fn delta(&self) -> f64 {
        self.w_t / self.s_t - self.w_c / self.s_c
    }

    /// `(w_t[γ]-w_c[γ])(s_t-s_c) - (w_t-w_c)(s_t[γ]-s_c[γ])`.
    pub fn c_gamma(&self) -> f64 {
        (self.w_t_region - self.w_c_region) * (self.s_t - self.s_c)
            - (self.w_t - self.w_c) * (self.s_t_region - self.s_c_region)
    }

    /// Path endpoints for [`DensityModel`]: `[w[γ], w - w[γ], s[γ], s - s[γ]]`.
    pub fn endpoints(&self) -> ([f64; 4], [f64; 4]) {
        (
            [self.w_c_region, self.w_c - self.w_c_region, self.s_c_region, self.s_c - self.s_c_region],
            [self.w_t_region, self.w_t - self.w_t_region, self.s_t_region, self.s_t - self.s_t_region],
        )
    }

    /// The same population seen from the region itself.
    pub fn population(&self) -> DensityInput {
        DensityInput {
            w_t_region: self.w_t,
            w_c_region: self.w_c,
            s_t_region: self.s_t,
            s_c_region: self.s_c,
            ..*self
        }
    }
}

/// Region-owned indices of [`DensityModel`] parameters.
pub const DENSITY_REGION_OWNED: [usize; 2] = [0, 2];

/// Attribution of a summable metric: the region's own change.
pub fn as_summable(mu_t_region: f64, mu_c_region: f64) -> f64 {
    mu_t_region - mu_c_region
}

/// Closed-form attribution of a density metric `w / s`.
///
/// Falls back to quadrature when the denominator totals are too close for the
/// closed form to be evaluated.
pub fn as_density(x: &DensityInput) -> Result<f64> {
    if !(x.s_t > 0.0 && x.s_c > 0.0) {
        return Err(Error::NonPositiveDenominator(format!("s_t = {}, s_c = {}", x.s_t, x.s_c)));
    }
    let ds = x.s_t - x.s_c;
    if ds.abs() < 1e-9 * x.s_t.max(x.s_c) {
        let (p0, p1) = x.endpoints();
        return as_numeric(&DensityModel, &p0, &p1, &DENSITY_REGION_OWNED, DEFAULT_POINTS);
    }
    let log_ratio = x.s_t.ln() - x.s_c.ln();
    Ok(log_ratio / (ds * ds) * x.c_gamma() + (x.s_t_region - x.s_c_region) / ds * x.delta())
}

/// A differentiable metric over a parameter vector.
pub trait MetricModel: Sync {
    fn arity(&self) -> usize;

    fn eval(&self, z: &[f64]) -> f64;

    /// Analytic gradient, when known. Otherwise central differences are used.
    fn gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// `F(w, w̄) = w + w̄`.
#[derive(Debug, Clone, Copy)]
pub struct SummableModel;

impl MetricModel for SummableModel {
    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, z: &[f64]) -> f64 {
        z[0] + z[1]
    }

    fn gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0, 1.0])
    }
}

/// `F(w, w̄, s, s̄) = (w + w̄) / (s + s̄)`. Partials are taken numerically.
#[derive(Debug, Clone, Copy)]
pub struct DensityModel;

impl DensityModel {
    pub fn analytic_gradient(z: &[f64]) -> [f64; 4] {
        let (w, s) = (z[0] + z[1], z[2] + z[3]);
        let dw = 1.0 / s;
        let ds = -w / (s * s);
        [dw, dw, ds, ds]
    }
}

impl MetricModel for DensityModel {
    fn arity(&self) -> usize {
        4
    }

    fn eval(&self, z: &[f64]) -> f64 {
        (z[0] + z[1]) / (z[2] + z[3])
    }
}

pub const DEFAULT_POINTS: usize = 129;

fn finite(model: &dyn MetricModel, z: &[f64]) -> Result<f64> {
    let v = model.eval(z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteModelValue(format!("F({z:?}) = {v}")))
    }
}

/// Central-difference partial derivative with step `1e-6 * max(|z_i|, 1)`.
pub fn partial(model: &dyn MetricModel, z: &[f64], i: usize) -> Result<f64> {
    let h = 1e-6 * z[i].abs().max(1.0);
    let mut hi = z.to_vec();
    let mut lo = z.to_vec();
    hi[i] += h;
    lo[i] -= h;
    Ok((finite(model, &hi)? - finite(model, &lo)?) / (2.0 * h))
}

/// Path-integral attribution over the region-owned parameters, using
/// composite Simpson quadrature with `points` nodes (rounded up to an odd
/// count of at least 3).
pub fn as_numeric(model: &dyn MetricModel, p0: &[f64], p1: &[f64], owned: &[usize], points: usize) -> Result<f64> {
    if p0.len() != model.arity() || p1.len() != model.arity() {
        return Err(Error::InvalidArgument(format!(
            "model takes {} parameters, got {} and {}",
            model.arity(),
            p0.len(),
            p1.len()
        )));
    }
    if let Some(&i) = owned.iter().find(|&&i| i >= model.arity()) {
        return Err(Error::InvalidArgument(format!("parameter index {i} out of range")));
    }
    let n = points.max(3) | 1;
    let intervals = n - 1;
    if owned.iter().all(|&i| p0[i] == p1[i]) {
        return Ok(0.0);
    }
    // Weighted partials are summed per parameter and scaled by the step at
    // the end, so a constant gradient integrates without rounding.
    let mut sums = vec![0.0; owned.len()];
    let h = 1.0 / intervals as f64;
    for k in 0..=intervals {
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let t = k as f64 * h;
        let z: Vec<f64> = p0.iter().zip(p1).map(|(a, b)| a + t * (b - a)).collect();
        finite(model, &z)?;
        let grad = model.gradient(&z);
        for (acc, &i) in sums.iter_mut().zip(owned) {
            let d = match &grad {
                Some(g) => g[i],
                None => partial(model, &z, i)?,
            };
            *acc += w * d;
        }
    }
    Ok(owned.iter().zip(&sums).map(|(&i, s)| s * h / 3.0 * (p1[i] - p0[i])).sum())
}

/// Quadrature result together with `|result(n) - result(n/2)|`.
pub fn as_numeric_with_error(
    model: &dyn MetricModel,
    p0: &[f64],
    p1: &[f64],
    owned: &[usize],
    points: usize,
) -> Result<(f64, f64)> {
    let full = as_numeric(model, p0, p1, owned, points)?;
    let half = as_numeric(model, p0, p1, owned, points.max(3).div_ceil(2))?;
    Ok((full, (full - half).abs()))
}

fn default_test_column() -> String {
    "is_test".into()
}

fn default_alias() -> String {
    "Attribution".into()
}

/// Sums `cols` separately over test rows and control rows.
fn split_sums(table: &Relation, test_column: &str, cols: &[&str]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ti = table.schema().require(test_column)?;
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| table.schema().require(c))
        .collect::<Result<_>>()?;
    let mut t = vec![0.0; cols.len()];
    let mut c = vec![0.0; cols.len()];
    for r in table.rows() {
        let side = match r[ti] {
            Value::Bool(true) => &mut t,
            Value::Bool(false) => &mut c,
            Value::Null => continue,
            ref v => {
                return Err(Error::TypeMismatch(format!(
                    "`{test_column}` must be boolean, found {}",
                    v.type_name()
                )))
            }
        };
        for (k, &i) in idx.iter().enumerate() {
            side[k] += r[i].as_f64().unwrap_or(0.0);
        }
    }
    Ok((t, c))
}

fn check_test_column(input: &Schema, col: &str) -> Result<()> {
    match input.type_of(col) {
        Some(ValueType::Bool) => Ok(()),
        Some(t) => Err(Error::TypeMismatch(format!("`{col}` must be boolean, is {t}"))),
        None => Err(Error::UnknownAttribute(col.to_string())),
    }
}

/// Attribution of a summable metric split by a boolean test column.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummableAttribution {
    pub metric: String,
    #[serde(default = "default_test_column")]
    pub test_column: String,
    #[serde(default = "default_alias")]
    pub alias: String,
}

impl SliceTransformation for SummableAttribution {
    fn key(&self) -> &'static str {
        "attribution_summable"
    }

    fn referenced(&self) -> Option<AttrSet> {
        Some([self.metric.as_str(), self.test_column.as_str()].into_iter().collect())
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        require_numeric(input, &self.metric)?;
        check_test_column(input, &self.test_column)?;
        Ok(Schema::of([(self.alias.as_str(), ValueType::Float)]))
    }

    fn apply(&self, _: &Tuple, input: &Relation, _: Option<&Relation>) -> Result<Relation> {
        self.output_schema(input.schema())?;
        let (t, c) = split_sums(input, &self.test_column, &[&self.metric])?;
        scalar_table(&self.alias, ValueType::Float, Value::Float(as_summable(t[0], c[0])))
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

/// Attribution of `numerator / denominator`; population totals come from the
/// reference slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityAttribution {
    pub numerator: String,
    pub denominator: String,
    #[serde(default = "default_test_column")]
    pub test_column: String,
    #[serde(default = "default_alias")]
    pub alias: String,
}

impl DensityAttribution {
    fn input(&self, region: &Relation, reference: Option<&Relation>) -> Result<DensityInput> {
        let reference = reference.ok_or_else(|| Error::MissingReferenceSlice(self.key_name().into()))?;
        let cols = [self.numerator.as_str(), self.denominator.as_str()];
        let (rt, rc) = split_sums(region, &self.test_column, &cols)?;
        let (pt, pc) = split_sums(reference, &self.test_column, &cols)?;
        Ok(DensityInput {
            w_t: pt[0],
            w_c: pc[0],
            s_t: pt[1],
            s_c: pc[1],
            w_t_region: rt[0],
            w_c_region: rc[0],
            s_t_region: rt[1],
            s_c_region: rc[1],
        })
    }

    fn key_name(&self) -> &'static str {
        "attribution_density"
    }

    fn schema(&self, input: &Schema) -> Result<Schema> {
        require_numeric(input, &self.numerator)?;
        require_numeric(input, &self.denominator)?;
        check_test_column(input, &self.test_column)?;
        Ok(Schema::of([(self.alias.as_str(), ValueType::Float)]))
    }

    fn refs(&self) -> AttrSet {
        [self.numerator.as_str(), self.denominator.as_str(), self.test_column.as_str()]
            .into_iter()
            .collect()
    }
}

impl SliceTransformation for DensityAttribution {
    fn key(&self) -> &'static str {
        self.key_name()
    }

    fn referenced(&self) -> Option<AttrSet> {
        Some(self.refs())
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        self.schema(input)
    }

    fn needs_reference(&self) -> bool {
        true
    }

    fn apply(&self, _: &Tuple, input: &Relation, reference: Option<&Relation>) -> Result<Relation> {
        self.schema(input.schema())?;
        let x = self.input(input, reference)?;
        scalar_table(&self.alias, ValueType::Float, Value::Float(as_density(&x)?))
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Summable,
    Density,
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

/// Attribution by numerical path integration of a summable or density model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericAttribution {
    pub model: ModelKind,
    pub numerator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denominator: Option<String>,
    #[serde(default = "default_test_column")]
    pub test_column: String,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_alias")]
    pub alias: String,
}

impl NumericAttribution {
    fn density(&self) -> Result<DensityAttribution> {
        let denominator = self
            .denominator
            .clone()
            .ok_or_else(|| Error::InvalidArgument("density model needs a denominator".into()))?;
        Ok(DensityAttribution {
            numerator: self.numerator.clone(),
            denominator,
            test_column: self.test_column.clone(),
            alias: self.alias.clone(),
        })
    }
}

impl SliceTransformation for NumericAttribution {
    fn key(&self) -> &'static str {
        "attribution_numeric"
    }

    fn referenced(&self) -> Option<AttrSet> {
        let mut a: AttrSet = [self.numerator.as_str(), self.test_column.as_str()].into_iter().collect();
        if let Some(d) = &self.denominator {
            a.insert(d.clone());
        }
        Some(a)
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        match self.model {
            ModelKind::Summable => {
                require_numeric(input, &self.numerator)?;
                check_test_column(input, &self.test_column)?;
                Ok(Schema::of([(self.alias.as_str(), ValueType::Float)]))
            }
            ModelKind::Density => self.density()?.schema(input),
        }
    }

    fn needs_reference(&self) -> bool {
        true
    }

    fn apply(&self, _: &Tuple, input: &Relation, reference: Option<&Relation>) -> Result<Relation> {
        self.output_schema(input.schema())?;
        let v = match self.model {
            ModelKind::Summable => {
                let reference = reference.ok_or_else(|| Error::MissingReferenceSlice(self.key().into()))?;
                let (rt, rc) = split_sums(input, &self.test_column, &[&self.numerator])?;
                let (pt, pc) = split_sums(reference, &self.test_column, &[&self.numerator])?;
                let p0 = [rc[0], pc[0] - rc[0]];
                let p1 = [rt[0], pt[0] - rt[0]];
                as_numeric(&SummableModel, &p0, &p1, &[0], self.points)?
            }
            ModelKind::Density => {
                let x = self.density()?.input(input, reference)?;
                if !(x.s_t > 0.0 && x.s_c > 0.0) {
                    return Err(Error::NonPositiveDenominator(format!("s_t = {}, s_c = {}", x.s_t, x.s_c)));
                }
                let (p0, p1) = x.endpoints();
                as_numeric(&DensityModel, &p0, &p1, &DENSITY_REGION_OWNED, self.points)?
            }
        };
        scalar_table(&self.alias, ValueType::Float, Value::Float(v))
    }

    fn params(&self) -> Json {
        params_of(self)
    }
}
