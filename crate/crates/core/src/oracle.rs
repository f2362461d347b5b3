//! Reference relational algebra over sets of unsigned-integer tuples.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::encoding::{fits, Row, Schema};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparator {
    Eq,
    Gt,
    Lt,
    Ne,
    Ge,
    Le,
}

impl Comparator {
    pub const ALL: [Comparator; 6] =
        [Comparator::Eq, Comparator::Gt, Comparator::Lt, Comparator::Ne, Comparator::Ge, Comparator::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Gt => ">",
            Comparator::Lt => "<",
            Comparator::Ne => "!=",
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
        }
    }

    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            Comparator::Eq => a == b,
            Comparator::Gt => a > b,
            Comparator::Lt => a < b,
            Comparator::Ne => a != b,
            Comparator::Ge => a >= b,
            Comparator::Le => a <= b,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Comparator::ALL
            .into_iter()
            .find(|c| c.symbol() == s)
            .ok_or_else(|| format!("unknown comparator {s:?}"))
    }
}

/// Right-hand side of a predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Const(u64),
    /// 0-based column.
    Field(usize),
}

/// `column θ operand`, with 0-based columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub col: usize,
    pub cmp: Comparator,
    pub rhs: Operand,
}

impl Predicate {
    pub fn holds(&self, row: &Row) -> bool {
        let rhs = match self.rhs {
            Operand::Const(c) => c,
            Operand::Field(f) => row.0[f],
        };
        self.cmp.holds(row.0[self.col], rhs)
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        let n = schema.arity();
        if self.col >= n {
            return Err(Error::Schema(format!("column {} out of range for {}", self.col + 1, schema.name)));
        }
        match self.rhs {
            Operand::Const(c) if !fits(c, schema.width(self.col)) => Err(Error::Schema(format!(
                "constant {c} overflows {}-bit field {}",
                schema.width(self.col),
                schema.fields[self.col].name
            ))),
            Operand::Field(f) if f >= n => {
                Err(Error::Schema(format!("column {} out of range for {}", f + 1, schema.name)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub schema: Schema,
    pub rows: BTreeSet<Row>,
}

fn require_compatible(a: &Schema, b: &Schema) -> Result<()> {
    if a.compatible(b) {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "relations {} and {} have different column widths {:?} vs {:?}",
            a.name,
            b.name,
            a.widths(),
            b.widths()
        )))
    }
}

impl Relation {
    pub fn new(schema: Schema, rows: impl IntoIterator<Item = Row>) -> Result<Self> {
        let rows: BTreeSet<Row> = rows.into_iter().collect();
        for r in &rows {
            schema.check_row(r)?;
        }
        Ok(Self { schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_vec(&self) -> Vec<Row> {
        self.rows.iter().cloned().collect()
    }

    fn with_rows(&self, rows: BTreeSet<Row>) -> Relation {
        Relation { schema: self.schema.clone(), rows }
    }

    pub fn union(&self, other: &Relation) -> Result<Relation> {
        require_compatible(&self.schema, &other.schema)?;
        Ok(self.with_rows(self.rows.union(&other.rows).cloned().collect()))
    }

    pub fn intersect(&self, other: &Relation) -> Result<Relation> {
        require_compatible(&self.schema, &other.schema)?;
        Ok(self.with_rows(self.rows.intersection(&other.rows).cloned().collect()))
    }

    pub fn difference(&self, other: &Relation) -> Result<Relation> {
        require_compatible(&self.schema, &other.schema)?;
        Ok(self.with_rows(self.rows.difference(&other.rows).cloned().collect()))
    }

    pub fn product(&self, other: &Relation) -> Relation {
        let schema = self.schema.concat(&other.schema, &format!("{}_x_{}", self.schema.name, other.schema.name));
        let mut rows = BTreeSet::new();
        for a in &self.rows {
            for b in &other.rows {
                let mut v = a.0.clone();
                v.extend_from_slice(&b.0);
                rows.insert(Row(v));
            }
        }
        Relation { schema, rows }
    }

    pub fn select(&self, pred: &Predicate) -> Result<Relation> {
        pred.check(&self.schema)?;
        Ok(self.with_rows(self.rows.iter().filter(|r| pred.holds(r)).cloned().collect()))
    }

    /// Duplicate-eliminating projection onto 0-based columns.
    pub fn project(&self, cols: &[usize]) -> Result<Relation> {
        check_columns(&self.schema, cols)?;
        let schema = self.schema.project(cols, &self.schema.name);
        let rows = self.rows.iter().map(|r| Row(cols.iter().map(|&c| r.0[c]).collect())).collect();
        Ok(Relation { schema, rows })
    }

    pub fn theta_join(&self, other: &Relation, pred: &Predicate) -> Result<Relation> {
        self.product(other).select(pred)
    }

    /// Maximal quotient: the A-tuples of `self` paired with every row of
    /// `divisor`, where the divisor's columns are the trailing columns of
    /// `self`. An empty divisor yields every A-tuple of `self`.
    pub fn divide(&self, divisor: &Relation) -> Result<Relation> {
        let w = division_split(&self.schema, &divisor.schema)?;
        let a_cols: Vec<usize> = (0..w).collect();
        let candidates = self.project(&a_cols)?;
        let rows = candidates
            .rows
            .iter()
            .filter(|a| {
                divisor.rows.iter().all(|b| {
                    let mut v = a.0.clone();
                    v.extend_from_slice(&b.0);
                    self.rows.contains(&Row(v))
                })
            })
            .cloned()
            .collect();
        Ok(Relation { schema: candidates.schema, rows })
    }

    /// Division computed as π_A(R3) − π_A((π_A(R3) × R4) − R3).
    pub fn divide_by_expression(&self, divisor: &Relation) -> Result<Relation> {
        let w = division_split(&self.schema, &divisor.schema)?;
        let a_cols: Vec<usize> = (0..w).collect();
        let pa = self.project(&a_cols)?;
        let mut prod = pa.product(divisor);
        prod.schema = self.schema.clone();
        let missing = prod.difference(self)?.project(&a_cols)?;
        pa.difference(&missing)
    }
}

/// Number of leading A-columns, after checking that the divisor's widths
/// match the trailing columns of the dividend.
pub fn division_split(dividend: &Schema, divisor: &Schema) -> Result<usize> {
    let (n3, n4) = (dividend.arity(), divisor.arity());
    if n4 >= n3 {
        return Err(Error::Schema(format!(
            "divisor {} must have fewer columns than dividend {}",
            divisor.name, dividend.name
        )));
    }
    let w = n3 - n4;
    if dividend.widths()[w..] != divisor.widths()[..] {
        return Err(Error::Schema(format!(
            "trailing columns of {} do not match the columns of {}",
            dividend.name, divisor.name
        )));
    }
    Ok(w)
}

pub fn check_columns(schema: &Schema, cols: &[usize]) -> Result<()> {
    if cols.is_empty() {
        return Err(Error::Schema("projection needs at least one column".into()));
    }
    let mut seen = BTreeSet::new();
    for &c in cols {
        if c >= schema.arity() {
            return Err(Error::Schema(format!("column {} out of range for {}", c + 1, schema.name)));
        }
        if !seen.insert(c) {
            return Err(Error::Schema(format!("column {} projected twice", c + 1)));
        }
    }
    Ok(())
}

/// Reference answer for a query over a catalog.
pub fn eval(q: &crate::query::Query, catalog: &crate::query::Catalog) -> Result<Relation> {
    crate::query::evaluate(&crate::query::compile(q, catalog)?, catalog)
}
