// Copyright 2026 The Skylite Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Typed values, columns and record batches.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BATCH_ROWS: usize = 4_096;
pub const MAX_DECIMAL_PRECISION: u8 = 18;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("decimal overflow")]
    DecimalOverflow,
    #[error("invalid value for {expected}: {value}")]
    InvalidValue { expected: DataType, value: String },
    #[error("column length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("null in non-nullable column {0}")]
    UnexpectedNull(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Int64,
    Float64,
    Decimal { precision: u8, scale: u8 },
    Utf8,
    /// Days since 1970-01-01.
    Date,
    Bool,
}

impl DataType {
    pub fn decimal(precision: u8, scale: u8) -> Self {
        DataType::Decimal { precision, scale }
    }

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            DataType::Int64 | DataType::Float64 | DataType::Decimal { .. }
        )
    }

    pub fn scale(self) -> u8 {
        match self {
            DataType::Decimal { scale, .. } => scale,
            _ => 0,
        }
    }

    /// Width of one plain-encoded value, or `None` for variable width.
    pub fn fixed_width(self) -> Option<usize> {
        match self {
            DataType::Int64 | DataType::Float64 | DataType::Decimal { .. } => Some(8),
            DataType::Date => Some(4),
            DataType::Bool => Some(1),
            DataType::Utf8 => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Int64 => f.write_str("int64"),
            DataType::Float64 => f.write_str("float64"),
            DataType::Decimal { precision, scale } => write!(f, "decimal({precision},{scale})"),
            DataType::Utf8 => f.write_str("string"),
            DataType::Date => f.write_str("date"),
            DataType::Bool => f.write_str("bool"),
        }
    }
}

pub fn pow10(n: u8) -> i128 {
    10i128.pow(n as u32)
}

/// Largest magnitude a decimal of the maximum precision can hold.
pub const DECIMAL_MAX: i128 = 999_999_999_999_999_999;

pub fn checked_decimal(v: i128) -> Result<i64, TypeError> {
    if (-DECIMAL_MAX..=DECIMAL_MAX).contains(&v) {
        Ok(v as i64)
    } else {
        Err(TypeError::DecimalOverflow)
    }
}

/// Rescales `v` from scale `from` to scale `to`, rounding half to even when
/// digits are dropped.
pub fn rescale(v: i128, from: u8, to: u8) -> i128 {
    match from.cmp(&to) {
        Ordering::Equal => v,
        Ordering::Less => v * pow10(to - from),
        Ordering::Greater => div_round_half_even(v, pow10(from - to)),
    }
}

/// `n / d` rounded half to even. `d` must be non-zero.
pub fn div_round_half_even(n: i128, d: i128) -> i128 {
    let (d, n) = if d < 0 { (-d, -n) } else { (d, n) };
    let q = n.div_euclid(d);
    let r = n.rem_euclid(d);
    match (2 * r).cmp(&d) {
        Ordering::Less => q,
        Ordering::Greater => q + 1,
        Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

pub fn format_decimal(v: i64, scale: u8) -> String {
    if scale == 0 {
        return v.to_string();
    }
    let p = pow10(scale) as u128;
    let a = (v as i128).unsigned_abs();
    let sign = if v < 0 { "-" } else { "" };
    format!(
        "{sign}{}.{:0width$}",
        a / p,
        a % p,
        width = scale as usize
    )
}

/// Parses a decimal literal such as `-12.340` into (unscaled, scale).
pub fn parse_decimal(s: &str) -> Option<(i128, u8)> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let digits = digits.trim_start_matches('0');
    if digits.len() > 30 || frac.len() > MAX_DECIMAL_PRECISION as usize {
        return None;
    }
    let v: i128 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
    Some((if neg { -v } else { v }, frac.len() as u8))
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

pub fn date_from_ymd(y: i32, m: u32, d: u32) -> Option<i32> {
    NaiveDate::from_ymd_opt(y, m, d).map(|nd| (nd - epoch()).num_days() as i32)
}

pub fn parse_date(s: &str) -> Option<i32> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|nd| (nd - epoch()).num_days() as i32)
}

pub fn naive_date(days: i32) -> NaiveDate {
    epoch() + chrono::Duration::days(days as i64)
}

pub fn format_date(days: i32) -> String {
    naive_date(days).format("%Y-%m-%d").to_string()
}

/// Calendar arithmetic: adds months, clamping the day to the target month.
pub fn add_months(days: i32, months: i32) -> i32 {
    let d = naive_date(days);
    let total = d.year() * 12 + d.month0() as i32 + months;
    let (y, m0) = (total.div_euclid(12), total.rem_euclid(12) as u32);
    let mut day = d.day();
    loop {
        if let Some(v) = date_from_ymd(y, m0 + 1, day) {
            return v;
        }
        day -= 1;
    }
}

/// A single typed value. Floats compare by total order so values can key
/// hash tables and sorts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "snake_case")]
pub enum ScalarValue {
    Null,
    Int64(i64),
    Float64(f64),
    Decimal { value: i64, scale: u8 },
    Utf8(String),
    Date(i32),
    Bool(bool),
}

impl ScalarValue {
    pub fn is_null(&self) -> bool {
        matches!(self, ScalarValue::Null)
    }

    fn rank(&self) -> u8 {
        match self {
            ScalarValue::Null => 0,
            ScalarValue::Bool(_) => 1,
            ScalarValue::Int64(_) | ScalarValue::Decimal { .. } | ScalarValue::Float64(_) => 2,
            ScalarValue::Date(_) => 3,
            ScalarValue::Utf8(_) => 4,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ScalarValue::Int64(v) => Some(v as f64),
            ScalarValue::Float64(v) => Some(v),
            ScalarValue::Decimal { value, scale } => Some(value as f64 / pow10(scale) as f64),
            _ => None,
        }
    }

    /// Exact decimal view of integral and decimal values.
    pub fn as_decimal(&self) -> Option<(i128, u8)> {
        match *self {
            ScalarValue::Int64(v) => Some((v as i128, 0)),
            ScalarValue::Decimal { value, scale } => Some((value as i128, scale)),
            _ => None,
        }
    }

    /// Casts to `dt`; numeric narrowing to decimal rounds half to even.
    pub fn cast(&self, dt: DataType) -> Result<ScalarValue, TypeError> {
        let bad = || TypeError::InvalidValue {
            expected: dt,
            value: self.to_string(),
        };
        Ok(match (self, dt) {
            (ScalarValue::Null, _) => ScalarValue::Null,
            (ScalarValue::Int64(_), DataType::Int64)
            | (ScalarValue::Float64(_), DataType::Float64)
            | (ScalarValue::Utf8(_), DataType::Utf8)
            | (ScalarValue::Date(_), DataType::Date)
            | (ScalarValue::Bool(_), DataType::Bool) => self.clone(),
            (_, DataType::Decimal { scale, .. }) => {
                if let Some((v, s)) = self.as_decimal() {
                    ScalarValue::Decimal {
                        value: checked_decimal(rescale(v, s, scale))?,
                        scale,
                    }
                } else if let ScalarValue::Float64(f) = self {
                    let v = (f * pow10(scale) as f64).round();
                    if !v.is_finite() || v.abs() > DECIMAL_MAX as f64 {
                        return Err(TypeError::DecimalOverflow);
                    }
                    ScalarValue::Decimal {
                        value: v as i64,
                        scale,
                    }
                } else {
                    return Err(bad());
                }
            }
            (_, DataType::Float64) => ScalarValue::Float64(self.as_f64().ok_or_else(bad)?),
            (ScalarValue::Decimal { value, scale }, DataType::Int64) => {
                ScalarValue::Int64(checked_decimal(rescale(*value as i128, *scale, 0))?)
            }
            (ScalarValue::Utf8(s), DataType::Date) => ScalarValue::Date(parse_date(s).ok_or_else(bad)?),
            _ => return Err(bad()),
        })
    }
}

/// Compares two values, treating integral, decimal and float values as one
/// numeric domain. Nulls sort first.
pub fn compare_values(a: &ScalarValue, b: &ScalarValue) -> Ordering {
    use ScalarValue::*;
    match (a, b) {
        (Null, Null) => Ordering::Equal,
        (Utf8(x), Utf8(y)) => x.cmp(y),
        (Date(x), Date(y)) => x.cmp(y),
        (Bool(x), Bool(y)) => x.cmp(y),
        (Float64(x), Float64(y)) => x.total_cmp(y),
        (Int64(_) | Decimal { .. }, Int64(_) | Decimal { .. }) => {
            let (x, sx) = a.as_decimal().expect("exact numeric");
            let (y, sy) = b.as_decimal().expect("exact numeric");
            let s = sx.max(sy);
            rescale(x, sx, s).cmp(&rescale(y, sy, s))
        }
        (Float64(_), Int64(_) | Decimal { .. }) | (Int64(_) | Decimal { .. }, Float64(_)) => a
            .as_f64()
            .expect("numeric")
            .total_cmp(&b.as_f64().expect("numeric")),
        _ => a.rank().cmp(&b.rank()),
    }
}

impl PartialEq for ScalarValue {
    fn eq(&self, other: &Self) -> bool {
        compare_values(self, other) == Ordering::Equal
    }
}

impl Eq for ScalarValue {}

impl PartialOrd for ScalarValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScalarValue {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_values(self, other)
    }
}

impl Hash for ScalarValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        // Consistent with `eq`: equal exact numerics hash alike across scales.
        match self {
            ScalarValue::Null => 0u8.hash(state),
            ScalarValue::Bool(b) => b.hash(state),
            ScalarValue::Int64(_) | ScalarValue::Decimal { .. } => {
                let (mut v, mut s) = self.as_decimal().expect("exact numeric");
                while s > 0 && v % 10 == 0 {
                    v /= 10;
                    s -= 1;
                }
                (v, s).hash(state)
            }
            ScalarValue::Float64(f) => f.to_bits().hash(state),
            ScalarValue::Date(d) => d.hash(state),
            ScalarValue::Utf8(s) => s.hash(state),
        }
    }
}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Null => f.write_str("NULL"),
            ScalarValue::Int64(v) => write!(f, "{v}"),
            ScalarValue::Float64(v) => write!(f, "{v:?}"),
            ScalarValue::Decimal { value, scale } => f.write_str(&format_decimal(*value, *scale)),
            ScalarValue::Utf8(s) => f.write_str(s),
            ScalarValue::Date(d) => f.write_str(&format_date(*d)),
            ScalarValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub data_type: DataType,
    pub nullable: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, data_type: DataType, nullable: bool) -> Self {
        Self {
            name: name.into(),
            data_type,
            nullable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Schema {
    pub fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Self {
        Self { fields }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn project(&self, names: &[String]) -> Option<Schema> {
        names
            .iter()
            .map(|n| self.field(n).cloned())
            .collect::<Option<Vec<_>>>()
            .map(Schema::new)
    }

    /// Unique column names and decimal parameters within bounds.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.fields {
            if !seen.insert(f.name.as_str()) {
                return Err(format!("duplicate column {}", f.name));
            }
            if let DataType::Decimal { precision, scale } = f.data_type {
                if scale > precision || precision > MAX_DECIMAL_PRECISION || precision == 0 {
                    return Err(format!("invalid decimal({precision},{scale}) for {}", f.name));
                }
            }
        }
        Ok(())
    }
}

pub type SchemaRef = Arc<Schema>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub schema: Schema,
}

/// Values of one column. Null slots hold an arbitrary placeholder value.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    /// Unscaled values; the scale lives in the column's data type.
    Decimal(Vec<i64>),
    Utf8(Vec<String>),
    Date(Vec<i32>),
    Bool(Vec<bool>),
}

impl ColumnData {
    pub fn empty(dt: DataType) -> Self {
        Self::with_capacity(dt, 0)
    }

    pub fn with_capacity(dt: DataType, n: usize) -> Self {
        match dt {
            DataType::Int64 => ColumnData::Int64(Vec::with_capacity(n)),
            DataType::Float64 => ColumnData::Float64(Vec::with_capacity(n)),
            DataType::Decimal { .. } => ColumnData::Decimal(Vec::with_capacity(n)),
            DataType::Utf8 => ColumnData::Utf8(Vec::with_capacity(n)),
            DataType::Date => ColumnData::Date(Vec::with_capacity(n)),
            DataType::Bool => ColumnData::Bool(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Int64(v) | ColumnData::Decimal(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::Utf8(v) => v.len(),
            ColumnData::Date(v) => v.len(),
            ColumnData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub data_type: DataType,
    pub data: ColumnData,
    /// `validity[i]` is false for null slots; `None` means no nulls.
    pub validity: Option<Vec<bool>>,
}

impl Column {
    pub fn new(data_type: DataType, data: ColumnData, validity: Option<Vec<bool>>) -> Self {
        let validity = validity.filter(|v| v.iter().any(|b| !b));
        Self {
            data_type,
            data,
            validity,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.validity.as_ref().map_or(true, |v| v[i])
    }

    pub fn null_count(&self) -> usize {
        self.validity
            .as_ref()
            .map_or(0, |v| v.iter().filter(|b| !**b).count())
    }

    pub fn value(&self, i: usize) -> ScalarValue {
        if !self.is_valid(i) {
            return ScalarValue::Null;
        }
        match &self.data {
            ColumnData::Int64(v) => ScalarValue::Int64(v[i]),
            ColumnData::Float64(v) => ScalarValue::Float64(v[i]),
            ColumnData::Decimal(v) => ScalarValue::Decimal {
                value: v[i],
                scale: self.data_type.scale(),
            },
            ColumnData::Utf8(v) => ScalarValue::Utf8(v[i].clone()),
            ColumnData::Date(v) => ScalarValue::Date(v[i]),
            ColumnData::Bool(v) => ScalarValue::Bool(v[i]),
        }
    }

    pub fn from_values(dt: DataType, values: &[ScalarValue]) -> Result<Column, TypeError> {
        let mut b = ColumnBuilder::new(dt, values.len());
        for v in values {
            b.push(v)?;
        }
        Ok(b.finish())
    }

    pub fn null(dt: DataType, n: usize) -> Column {
        let mut b = ColumnBuilder::new(dt, n);
        for _ in 0..n {
            b.push_null();
        }
        b.finish()
    }

    /// Gathers rows by index.
    pub fn take(&self, idx: &[usize]) -> Column {
        fn g<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        let data = match &self.data {
            ColumnData::Int64(v) => ColumnData::Int64(g(v, idx)),
            ColumnData::Float64(v) => ColumnData::Float64(g(v, idx)),
            ColumnData::Decimal(v) => ColumnData::Decimal(g(v, idx)),
            ColumnData::Utf8(v) => ColumnData::Utf8(g(v, idx)),
            ColumnData::Date(v) => ColumnData::Date(g(v, idx)),
            ColumnData::Bool(v) => ColumnData::Bool(g(v, idx)),
        };
        Column::new(self.data_type, data, self.validity.as_ref().map(|v| g(v, idx)))
    }

    pub fn slice(&self, offset: usize, len: usize) -> Column {
        let idx: Vec<usize> = (offset..offset + len).collect();
        self.take(&idx)
    }

    pub fn concat(dt: DataType, parts: &[&Column]) -> Column {
        let total = parts.iter().map(|c| c.len()).sum();
        let mut b = ColumnBuilder::new(dt, total);
        for c in parts {
            b.extend_from(c);
        }
        b.finish()
    }
}

/// Appends values of one type, tracking validity.
#[derive(Debug, Clone)]
pub struct ColumnBuilder {
    data_type: DataType,
    data: ColumnData,
    validity: Vec<bool>,
    has_null: bool,
}

impl ColumnBuilder {
    pub fn new(data_type: DataType, capacity: usize) -> Self {
        Self {
            data_type,
            data: ColumnData::with_capacity(data_type, capacity),
            validity: Vec::with_capacity(capacity),
            has_null: false,
        }
    }

    pub fn len(&self) -> usize {
        self.validity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validity.is_empty()
    }

    pub fn push_null(&mut self) {
        self.has_null = true;
        self.validity.push(false);
        match &mut self.data {
            ColumnData::Int64(v) | ColumnData::Decimal(v) => v.push(0),
            ColumnData::Float64(v) => v.push(0.0),
            ColumnData::Utf8(v) => v.push(String::new()),
            ColumnData::Date(v) => v.push(0),
            ColumnData::Bool(v) => v.push(false),
        }
    }

    /// Pushes a value already of the builder's type (integral values are
    /// accepted for decimal and float columns).
    pub fn push(&mut self, value: &ScalarValue) -> Result<(), TypeError> {
        if value.is_null() {
            self.push_null();
            return Ok(());
        }
        let value = match (value, self.data_type) {
            (ScalarValue::Decimal { scale, .. }, DataType::Decimal { scale: s, .. }) if *scale == s => {
                value.clone()
            }
            _ => value.cast(self.data_type)?,
        };
        self.validity.push(true);
        match (&mut self.data, value) {
            (ColumnData::Int64(v), ScalarValue::Int64(x)) => v.push(x),
            (ColumnData::Float64(v), ScalarValue::Float64(x)) => v.push(x),
            (ColumnData::Decimal(v), ScalarValue::Decimal { value, .. }) => v.push(value),
            (ColumnData::Utf8(v), ScalarValue::Utf8(x)) => v.push(x),
            (ColumnData::Date(v), ScalarValue::Date(x)) => v.push(x),
            (ColumnData::Bool(v), ScalarValue::Bool(x)) => v.push(x),
            (_, other) => {
                self.validity.pop();
                return Err(TypeError::InvalidValue {
                    expected: self.data_type,
                    value: other.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn extend_from(&mut self, c: &Column) {
        let n = c.len();
        match (&mut self.data, &c.data) {
            (ColumnData::Int64(a), ColumnData::Int64(b)) => a.extend_from_slice(b),
            (ColumnData::Decimal(a), ColumnData::Decimal(b)) => a.extend_from_slice(b),
            (ColumnData::Float64(a), ColumnData::Float64(b)) => a.extend_from_slice(b),
            (ColumnData::Utf8(a), ColumnData::Utf8(b)) => a.extend_from_slice(b),
            (ColumnData::Date(a), ColumnData::Date(b)) => a.extend_from_slice(b),
            (ColumnData::Bool(a), ColumnData::Bool(b)) => a.extend_from_slice(b),
            _ => {
                for i in 0..n {
                    self.push(&c.value(i)).expect("compatible column types");
                }
                return;
            }
        }
        match &c.validity {
            Some(v) => {
                self.has_null = true;
                self.validity.extend_from_slice(v);
            }
            None => self.validity.extend(std::iter::repeat(true).take(n)),
        }
    }

    pub fn finish(self) -> Column {
        let validity = self.has_null.then_some(self.validity);
        Column::new(self.data_type, self.data, validity)
    }
}

/// Equal-length columns plus an explicit row count (needed when a batch
/// carries no columns at all).
#[derive(Debug, Clone, PartialEq)]
pub struct RecordBatch {
    pub schema: SchemaRef,
    pub columns: Vec<Column>,
    pub row_count: usize,
}

impl RecordBatch {
    pub fn try_new(schema: SchemaRef, columns: Vec<Column>) -> Result<Self, TypeError> {
        let rows = columns.first().map_or(0, |c| c.len());
        Self::with_rows(schema, columns, rows)
    }

    pub fn with_rows(schema: SchemaRef, columns: Vec<Column>, row_count: usize) -> Result<Self, TypeError> {
        if columns.len() != schema.len() {
            return Err(TypeError::LengthMismatch(columns.len(), schema.len()));
        }
        for (c, f) in columns.iter().zip(&schema.fields) {
            if c.len() != row_count {
                return Err(TypeError::LengthMismatch(c.len(), row_count));
            }
            if c.data_type != f.data_type {
                return Err(TypeError::InvalidValue {
                    expected: f.data_type,
                    value: c.data_type.to_string(),
                });
            }
            if !f.nullable && c.null_count() > 0 {
                return Err(TypeError::UnexpectedNull(f.name.clone()));
            }
        }
        Ok(Self {
            schema,
            columns,
            row_count,
        })
    }

    pub fn empty(schema: SchemaRef) -> Self {
        let columns = schema
            .fields
            .iter()
            .map(|f| Column::new(f.data_type, ColumnData::empty(f.data_type), None))
            .collect();
        Self {
            schema,
            columns,
            row_count: 0,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.row_count
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn row(&self, i: usize) -> Vec<ScalarValue> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn take(&self, idx: &[usize]) -> RecordBatch {
        RecordBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(idx)).collect(),
            row_count: idx.len(),
        }
    }

    pub fn slice(&self, offset: usize, len: usize) -> RecordBatch {
        RecordBatch {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.slice(offset, len)).collect(),
            row_count: len,
        }
    }

    pub fn concat(schema: SchemaRef, batches: &[RecordBatch]) -> RecordBatch {
        let row_count = batches.iter().map(|b| b.row_count).sum();
        let columns = schema
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let parts: Vec<&Column> = batches.iter().map(|b| &b.columns[i]).collect();
                Column::concat(f.data_type, &parts)
            })
            .collect();
        RecordBatch {
            schema,
            columns,
            row_count,
        }
    }

    /// Splits into batches of at most `rows` rows.
    pub fn chunks(&self, rows: usize) -> Vec<RecordBatch> {
        let rows = rows.max(1);
        (0..self.row_count)
            .step_by(rows)
            .map(|o| self.slice(o, rows.min(self.row_count - o)))
            .collect()
    }

    pub fn from_rows(schema: SchemaRef, rows: &[Vec<ScalarValue>]) -> Result<RecordBatch, TypeError> {
        let mut builders: Vec<ColumnBuilder> = schema
            .fields
            .iter()
            .map(|f| ColumnBuilder::new(f.data_type, rows.len()))
            .collect();
        for r in rows {
            for (b, v) in builders.iter_mut().zip(r) {
                b.push(v)?;
            }
        }
        let columns = builders.into_iter().map(|b| b.finish()).collect();
        RecordBatch::with_rows(schema, columns, rows.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_rounding() {
        assert_eq!(div_round_half_even(5, 2), 2);
        assert_eq!(div_round_half_even(7, 2), 4);
        assert_eq!(div_round_half_even(-5, 2), -2);
        assert_eq!(div_round_half_even(-7, 2), -4);
        assert_eq!(div_round_half_even(10, 3), 3);
        assert_eq!(div_round_half_even(11, -3), -4);
        assert_eq!(rescale(12345, 3, 1), 123);
        assert_eq!(rescale(12350, 3, 1), 124);
    }

    #[test]
    fn decimal_parse_and_format() {
        assert_eq!(parse_decimal("0.06"), Some((6, 2)));
        assert_eq!(parse_decimal("-12.340"), Some((-12340, 3)));
        assert_eq!(parse_decimal("24"), Some((24, 0)));
        assert_eq!(parse_decimal("1.2.3"), None);
        assert_eq!(format_decimal(-5, 2), "-0.05");
        assert_eq!(format_decimal(123456, 3), "123.456");
    }

    #[test]
    fn dates() {
        let d = parse_date("1994-01-01").unwrap();
        assert_eq!(format_date(add_months(d, 12)), "1995-01-01");
        assert_eq!(format_date(add_months(parse_date("1996-01-31").unwrap(), 1)), "1996-02-29");
        assert_eq!(format_date(add_months(d, -3)), "1993-10-01");
        assert_eq!(date_from_ymd(1970, 1, 2), Some(1));
    }

    #[test]
    fn numeric_comparisons_cross_scale() {
        let a = ScalarValue::Decimal { value: 600, scale: 2 };
        let b = ScalarValue::Int64(6);
        assert_eq!(a, b);
        let h = |v: &ScalarValue| {
            use std::collections::hash_map::DefaultHasher;
            let mut s = DefaultHasher::new();
            v.hash(&mut s);
            s.finish()
        };
        assert_eq!(h(&a), h(&b));
        assert!(ScalarValue::Decimal { value: 5, scale: 2 } < ScalarValue::Float64(0.06));
        assert!(ScalarValue::Null < ScalarValue::Int64(i64::MIN));
    }

    #[test]
    fn casts() {
        let v = ScalarValue::Float64(1.005).cast(DataType::decimal(10, 2)).unwrap();
        assert_eq!(v.to_string(), "1.00");
        assert_eq!(
            ScalarValue::Int64(3).cast(DataType::decimal(10, 2)).unwrap().to_string(),
            "3.00"
        );
        assert!(ScalarValue::Utf8("x".into()).cast(DataType::Int64).is_err());
        assert!(ScalarValue::Int64(i64::MAX).cast(DataType::decimal(18, 2)).is_err());
    }

    #[test]
    fn batch_validation() {
        let schema = Arc::new(Schema::new(vec![Field::new("a", DataType::Int64, false)]));
        let col = Column::from_values(DataType::Int64, &[ScalarValue::Null]).unwrap();
        assert!(RecordBatch::try_new(schema.clone(), vec![col]).is_err());
        let b = RecordBatch::from_rows(
            schema,
            &[vec![ScalarValue::Int64(1)], vec![ScalarValue::Int64(2)]],
        )
        .unwrap();
        assert_eq!(b.chunks(1).len(), 2);
        assert_eq!(b.take(&[1]).row(0), vec![ScalarValue::Int64(2)]);
    }

    #[test]
    fn schema_validation() {
        let s = Schema::new(vec![
            Field::new("a", DataType::Int64, false),
            Field::new("a", DataType::Int64, false),
        ]);
        assert!(s.validate().is_err());
        let s = Schema::new(vec![Field::new("d", DataType::decimal(19, 2), false)]);
        assert!(s.validate().is_err());
    }
}
