use std::fmt;

use crate::oracle::Comparator;

/// Right-hand side of a join predicate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum JoinRhs {
    Field(String),
    Const(u64),
}

impl fmt::Display for JoinRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JoinRhs::Field(name) => f.write_str(name),
            JoinRhs::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Query {
    Relation(String),
    Union(Box<Query>, Box<Query>),
    Intersect(Box<Query>, Box<Query>),
    Diff(Box<Query>, Box<Query>),
    Product(Box<Query>, Box<Query>),
    Divide(Box<Query>, Box<Query>),
    Select { input: Box<Query>, field: String, cmp: Comparator, value: u64 },
    Project { input: Box<Query>, fields: Vec<String> },
    Join { left: Box<Query>, right: Box<Query>, field: String, cmp: Comparator, rhs: JoinRhs },
}

impl Query {
    pub fn relation(name: &str) -> Query {
        Query::Relation(name.to_string())
    }

    /// Operator keyword, or `None` for a relation reference.
    pub fn keyword(&self) -> Option<&'static str> {
        Some(match self {
            Query::Relation(_) => return None,
            Query::Union(..) => "union",
            Query::Intersect(..) => "intersect",
            Query::Diff(..) => "diff",
            Query::Product(..) => "product",
            Query::Divide(..) => "divide",
            Query::Select { .. } => "select",
            Query::Project { .. } => "project",
            Query::Join { .. } => "join",
        })
    }

    pub fn children(&self) -> Vec<&Query> {
        match self {
            Query::Relation(_) => vec![],
            Query::Select { input, .. } | Query::Project { input, .. } => vec![input],
            Query::Union(a, b)
            | Query::Intersect(a, b)
            | Query::Diff(a, b)
            | Query::Product(a, b)
            | Query::Divide(a, b) => vec![a, b],
            Query::Join { left, right, .. } => vec![left, right],
        }
    }

    /// Names of the referenced relations, in order of first appearance.
    pub fn relations(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.collect_relations(&mut out);
        out
    }

    fn collect_relations<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Query::Relation(name) = self {
            if !out.contains(&name.as_str()) {
                out.push(name);
            }
        }
        for c in self.children() {
            c.collect_relations(out);
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kw = match self.keyword() {
            None => {
                let Query::Relation(name) = self else { unreachable!() };
                return f.write_str(name);
            }
            Some(kw) => kw,
        };
        match self {
            Query::Select { input, field, cmp, value } => write!(f, "{kw}({input}, {field} {cmp} {value})"),
            Query::Project { input, fields } => write!(f, "{kw}({input}, [{}])", fields.join(", ")),
            Query::Join { left, right, field, cmp, rhs } => write!(f, "{kw}({left}, {right}, {field} {cmp} {rhs})"),
            _ => {
                let c = self.children();
                write!(f, "{kw}({}, {})", c[0], c[1])
            }
        }
    }
}
