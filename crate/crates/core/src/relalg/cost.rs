use std::fmt;
use std::ops::Add;

use crate::machine::{Counts, Opcode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Exact(u64),
    AtMost(u64),
}

impl Bound {
    pub fn value(self) -> u64 {
        match self {
            Bound::Exact(n) | Bound::AtMost(n) => n,
        }
    }

    pub fn admits(self, n: u64) -> bool {
        match self {
            Bound::Exact(b) => n == b,
            Bound::AtMost(b) => n <= b,
        }
    }
}

impl Add for Bound {
    type Output = Bound;

    fn add(self, rhs: Bound) -> Bound {
        match (self, rhs) {
            (Bound::Exact(a), Bound::Exact(b)) => Bound::Exact(a + b),
            (a, b) => Bound::AtMost(a.value() + b.value()),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Exact(n) => write!(f, "={n}"),
            Bound::AtMost(n) => write!(f, "<={n}"),
        }
    }
}

/// Predicted instruction counts, one bound per opcode. Opcodes not set are
/// predicted to be exactly zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostPrediction([Bound; 8]);

impl Default for CostPrediction {
    fn default() -> Self {
        CostPrediction([Bound::Exact(0); 8])
    }
}

impl CostPrediction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exact(mut self, op: Opcode, n: u64) -> Self {
        self.0[op as usize] = Bound::Exact(n);
        self
    }

    pub fn at_most(mut self, op: Opcode, n: u64) -> Self {
        self.0[op as usize] = Bound::AtMost(n);
        self
    }

    /// Exact prediction equal to observed counts.
    pub fn from_counts(c: Counts) -> Self {
        let mut p = Self::new();
        for (op, n) in c.iter() {
            p = p.exact(op, n);
        }
        p
    }

    pub fn get(&self, op: Opcode) -> Bound {
        self.0[op as usize]
    }

    pub fn admits(&self, c: &Counts) -> bool {
        self.violations(c).is_empty()
    }

    /// One message per opcode whose count falls outside its bound.
    pub fn violations(&self, c: &Counts) -> Vec<String> {
        Opcode::ALL
            .into_iter()
            .filter(|&op| !self.get(op).admits(c[op]))
            .map(|op| format!("{op}: observed {} but predicted {}", c[op], self.get(op)))
            .collect()
    }
}

impl Add for CostPrediction {
    type Output = CostPrediction;

    fn add(self, rhs: CostPrediction) -> CostPrediction {
        let mut out = self;
        for (a, b) in out.0.iter_mut().zip(rhs.0) {
            *a = *a + b;
        }
        out
    }
}

impl fmt::Display for CostPrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = Opcode::ALL.iter().map(|&op| format!("{op}{}", self.get(op))).collect();
        f.write_str(&parts.join(" "))
    }
}

/// What one program run cost, next to what it was predicted to cost.
///
/// `counts` covers every instruction the call executed. `overhead` is the
/// part of `counts` spent on bookkeeping outside the modelled procedure
/// (splitting a tube into copies for a product, disposing of comparison
/// partitions); `predicted` is checked against `counts - overhead`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramReport {
    pub operator: &'static str,
    pub params: Vec<(&'static str, u64)>,
    pub predicted: CostPrediction,
    pub counts: Counts,
    pub overhead: Counts,
}

impl ProgramReport {
    pub fn modelled(&self) -> Counts {
        self.counts - self.overhead
    }

    pub fn within_prediction(&self) -> bool {
        self.predicted.admits(&self.modelled())
    }

    pub fn param(&self, name: &str) -> Option<u64> {
        self.params.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }

    pub fn params_line(&self) -> String {
        self.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}
