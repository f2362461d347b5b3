//! Compilation of queries to program trees, and their execution.

use std::collections::BTreeSet;
use std::ops::Range;

use super::ast::{JoinRhs, Query};
use super::catalog::Catalog;
use crate::encoding::{decode_set, load_relation, primary_key_load, Row, Schema};
use crate::machine::{Counts, Machine};
use crate::oracle::{check_columns, division_split, Operand, Predicate, Relation};
use crate::relalg::{self, Input, ProgramReport};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Base(String),
    Union(Box<Plan>, Box<Plan>),
    Intersect(Box<Plan>, Box<Plan>),
    Diff(Box<Plan>, Box<Plan>),
    Product(Box<Plan>, Box<Plan>),
    Divide(Box<Plan>, Box<Plan>),
    Select(Box<Plan>, Predicate),
    Project(Box<Plan>, Vec<usize>),
    Join(Box<Plan>, Box<Plan>, Predicate),
}

/// A resolved query: every name bound to a column, every schema known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub node: Node,
    pub schema: Schema,
    /// Source text of this subquery.
    pub label: String,
}

impl Plan {
    pub fn children(&self) -> Vec<&Plan> {
        match &self.node {
            Node::Base(_) => vec![],
            Node::Select(a, _) | Node::Project(a, _) => vec![a],
            Node::Union(a, b)
            | Node::Intersect(a, b)
            | Node::Diff(a, b)
            | Node::Product(a, b)
            | Node::Divide(a, b)
            | Node::Join(a, b, _) => vec![a, b],
        }
    }

    pub fn base_relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_bases(&mut out);
        out
    }

    fn collect_bases<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Node::Base(name) = &self.node {
            if !out.contains(&name.as_str()) {
                out.push(name);
            }
        }
        for c in self.children() {
            c.collect_bases(out);
        }
    }
}

/// Column of `name` in `schema`: an exact match, or the single field whose
/// qualified name ends in `.name`.
pub fn resolve_field(schema: &Schema, name: &str) -> Result<usize> {
    if let Some(i) = schema.field_index(name) {
        return Ok(i);
    }
    let suffix = format!(".{name}");
    let hits: Vec<usize> =
        schema.fields.iter().enumerate().filter(|(_, f)| f.name.ends_with(&suffix)).map(|(i, _)| i).collect();
    match hits.as_slice() {
        [i] => Ok(*i),
        [] => Err(Error::Schema(format!("unknown field {name} in {}", schema.name))),
        _ => Err(Error::Schema(format!("ambiguous field {name} in {}", schema.name))),
    }
}

fn require_compatible(a: &Schema, b: &Schema, op: &str) -> Result<()> {
    if a.compatible(b) {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "schema mismatch in {op}: {} has widths {:?}, {} has widths {:?}",
            a.name,
            a.widths(),
            b.name,
            b.widths()
        )))
    }
}

pub fn compile(q: &Query, catalog: &Catalog) -> Result<Plan> {
    let label = q.to_string();
    let sub = |x: &Query| compile(x, catalog).map(Box::new);
    let (node, schema) = match q {
        Query::Relation(name) => {
            let t = catalog.get(name).ok_or_else(|| Error::Schema(format!("unknown relation {name}")))?;
            (Node::Base(name.clone()), t.schema.clone())
        }
        Query::Union(a, b) | Query::Intersect(a, b) | Query::Diff(a, b) => {
            let (a, b) = (sub(a)?, sub(b)?);
            let op = q.keyword().unwrap_or_default();
            require_compatible(&a.schema, &b.schema, op)?;
            let schema = a.schema.clone();
            let node = match q {
                Query::Union(..) => Node::Union(a, b),
                Query::Intersect(..) => Node::Intersect(a, b),
                _ => Node::Diff(a, b),
            };
            (node, schema)
        }
        Query::Product(a, b) => {
            let (a, b) = (sub(a)?, sub(b)?);
            let schema = a.schema.concat(&b.schema, &format!("{}_x_{}", a.schema.name, b.schema.name));
            (Node::Product(a, b), schema)
        }
        Query::Divide(a, b) => {
            let (a, b) = (sub(a)?, sub(b)?);
            let w = division_split(&a.schema, &b.schema)?;
            let cols: Vec<usize> = (0..w).collect();
            let schema = a.schema.project(&cols, &a.schema.name);
            (Node::Divide(a, b), schema)
        }
        Query::Select { input, field, cmp, value } => {
            let a = sub(input)?;
            let col = resolve_field(&a.schema, field)?;
            let pred = Predicate { col, cmp: *cmp, rhs: Operand::Const(*value) };
            pred.check(&a.schema)?;
            let schema = a.schema.clone();
            (Node::Select(a, pred), schema)
        }
        Query::Project { input, fields } => {
            let a = sub(input)?;
            let cols = fields.iter().map(|f| resolve_field(&a.schema, f)).collect::<Result<Vec<_>>>()?;
            check_columns(&a.schema, &cols)?;
            let schema = a.schema.project(&cols, &a.schema.name);
            (Node::Project(a, cols), schema)
        }
        Query::Join { left, right, field, cmp, rhs } => {
            let (a, b) = (sub(left)?, sub(right)?);
            let schema = a.schema.concat(&b.schema, &format!("{}_x_{}", a.schema.name, b.schema.name));
            let col = resolve_field(&schema, field)?;
            let rhs = match rhs {
                JoinRhs::Field(f) => Operand::Field(resolve_field(&schema, f)?),
                JoinRhs::Const(c) => Operand::Const(*c),
            };
            let pred = Predicate { col, cmp: *cmp, rhs };
            pred.check(&schema)?;
            (Node::Join(a, b, pred), schema)
        }
    };
    Ok(Plan { node, schema, label })
}

/// Instruction counts and trace span of one plan node's own work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeReport {
    pub node: String,
    pub operator: &'static str,
    pub program: Option<ProgramReport>,
    pub counts: Counts,
    pub trace: Range<usize>,
}

#[derive(Debug)]
pub struct Execution {
    pub machine: Machine,
    pub tube: String,
    pub relation: Relation,
    /// Base loads first, then plan nodes bottom-up.
    pub nodes: Vec<NodeReport>,
}

impl Execution {
    pub fn total(&self) -> Counts {
        self.nodes.iter().map(|n| n.counts).sum()
    }
}

struct Value {
    tube: String,
    rows: Vec<Row>,
    base: bool,
}

struct Executor<'a> {
    m: Machine,
    catalog: &'a Catalog,
    nodes: Vec<NodeReport>,
}

fn at_node(label: &str, e: Error) -> Error {
    match e {
        Error::Node { .. } => e,
        other => Error::Node { node: label.to_string(), source: Box::new(other) },
    }
}

impl Executor<'_> {
    fn record<T>(
        &mut self,
        label: &str,
        operator: &'static str,
        f: impl FnOnce(&mut Machine) -> Result<(T, Option<ProgramReport>)>,
    ) -> Result<T> {
        let (c0, t0) = (self.m.counts(), self.m.trace().len());
        let (out, program) = f(&mut self.m).map_err(|e| at_node(label, e))?;
        self.nodes.push(NodeReport {
            node: label.to_string(),
            operator,
            program,
            counts: self.m.counts() - c0,
            trace: t0..self.m.trace().len(),
        });
        Ok(out)
    }

    fn base(&mut self, name: &str) -> Result<()> {
        let t = self.catalog.get(name).ok_or_else(|| Error::Schema(format!("unknown relation {name}")))?;
        self.record(name, "load", |m| {
            if t.schema.key_prefix > 0 {
                primary_key_load(m, name, &t.rows, &t.schema)?;
            } else {
                load_relation(m, name, &t.rows, &t.schema)?;
            }
            Ok(((), None))
        })
    }

    fn exec(&mut self, plan: &Plan) -> Result<Value> {
        if let Node::Base(name) = &plan.node {
            let rows = self.catalog.get(name).map(|t| t.rows.clone()).unwrap_or_default();
            return Ok(Value { tube: name.clone(), rows, base: true });
        }
        let inputs: Vec<(Value, &Schema)> =
            plan.children().into_iter().map(|c| Ok((self.exec(c)?, &c.schema))).collect::<Result<_>>()?;
        let label = plan.label.as_str();
        let out_schema = &plan.schema;
        let operator = match &plan.node {
            Node::Base(_) => unreachable!(),
            Node::Union(..) => "union",
            Node::Intersect(..) => "intersection",
            Node::Diff(..) => "difference",
            Node::Product(..) => "product",
            Node::Divide(..) => "division",
            Node::Select(..) => "selection",
            Node::Project(..) => "projection",
            Node::Join(..) => "theta_join",
        };
        let tube = self.record(label, operator, |m| {
            // Intermediate results are re-loaded into fresh tubes; base
            // tubes are used in place unless one tube feeds both sides.
            let mut tubes = Vec::new();
            for (i, (v, s)) in inputs.iter().enumerate() {
                let reuse = v.base && !(i == 1 && inputs[0].0.base && inputs[0].0.tube == v.tube);
                let wants_copy = matches!(plan.node, Node::Product(..)) && i == 0;
                let loads = matches!(plan.node, Node::Join(..) | Node::Divide(..));
                if loads {
                    tubes.push(String::new());
                } else if reuse && !wants_copy {
                    tubes.push(v.tube.clone());
                } else {
                    let t = m.fresh_name(&format!("{operator}.in"));
                    load_relation(m, &t, &v.rows, s)?;
                    tubes.push(t);
                }
            }
            let input = |i: usize| Input { tube: &tubes[i], schema: inputs[i].1, rows: &inputs[i].0.rows };
            let (tube, rep) = match &plan.node {
                Node::Union(..) => relalg::union_prog(m, input(0), input(1))?,
                Node::Intersect(..) => relalg::intersection_prog(m, input(0), input(1))?,
                Node::Diff(..) => relalg::difference_prog(m, input(0), input(1))?,
                Node::Select(_, pred) => relalg::select_prog(m, &tubes[0], inputs[0].1, pred)?,
                Node::Project(_, cols) => {
                    let (t, _, rep) = relalg::projection_prog(m, input(0), cols)?;
                    (t, rep)
                }
                Node::Product(..) => {
                    let (t, _, rep) =
                        relalg::product_two_relations(m, &tubes[0], inputs[0].1, inputs[0].0.rows.len(), input(1))?;
                    (t, rep)
                }
                Node::Join(_, _, pred) => {
                    let (t, _, rep) = relalg::theta_join_prog(
                        m,
                        (inputs[0].1, &inputs[0].0.rows),
                        (inputs[1].1, &inputs[1].0.rows),
                        pred,
                    )?;
                    (t, rep)
                }
                Node::Divide(..) => {
                    let (t, _, rep) =
                        relalg::division_prog(m, (inputs[0].1, &inputs[0].0.rows), (inputs[1].1, &inputs[1].0.rows))?;
                    (t, rep)
                }
                Node::Base(_) => unreachable!(),
            };
            Ok((tube, Some(rep)))
        })?;
        let rows: BTreeSet<Row> = decode_set(&self.m, &tube, out_schema).map_err(|e| at_node(label, e))?;
        Ok(Value { tube, rows: rows.into_iter().collect(), base: false })
    }
}

/// Loads the plan's base relations into a fresh machine, runs the plan
/// bottom-up, and decodes the root tube.
pub fn run(plan: &Plan, catalog: &Catalog) -> Result<Execution> {
    let mut ex = Executor { m: Machine::new(), catalog, nodes: Vec::new() };
    for name in plan.base_relations() {
        ex.base(name)?;
    }
    let v = ex.exec(plan)?;
    let rows: BTreeSet<Row> = decode_set(&ex.m, &v.tube, &plan.schema).map_err(|e| at_node(&plan.label, e))?;
    Ok(Execution {
        machine: ex.m,
        tube: v.tube,
        relation: Relation { schema: plan.schema.clone(), rows },
        nodes: ex.nodes,
    })
}

/// Reference evaluation of a plan on in-memory relations.
pub fn evaluate(plan: &Plan, catalog: &Catalog) -> Result<Relation> {
    let kids: Vec<Relation> = plan.children().into_iter().map(|c| evaluate(c, catalog)).collect::<Result<_>>()?;
    let mut out = match &plan.node {
        Node::Base(name) => catalog.relation(name).ok_or_else(|| Error::Schema(format!("unknown relation {name}")))?,
        Node::Union(..) => kids[0].union(&kids[1])?,
        Node::Intersect(..) => kids[0].intersect(&kids[1])?,
        Node::Diff(..) => kids[0].difference(&kids[1])?,
        Node::Product(..) => kids[0].product(&kids[1]),
        Node::Divide(..) => kids[0].divide(&kids[1])?,
        Node::Select(_, pred) => kids[0].select(pred)?,
        Node::Project(_, cols) => kids[0].project(cols)?,
        Node::Join(_, _, pred) => kids[0].theta_join(&kids[1], pred)?,
    };
    out.schema = plan.schema.clone();
    Ok(out)
}
