//! The test-tube machine.
//!
//! A machine owns a set of named tubes. Each tube is a multiset of symbolic
//! strands, and each strand is an ordered list of [`BitBlock`]s. The machine
//! executes the eight tube instructions (extract, merge, detect, discard,
//! amplify, append, append-head, read), appending every successful
//! instruction to a trace and charging the per-opcode counters.
//!
//! Tube names that have never been written are empty tubes. A discarded tube
//! is unusable as an operand until some instruction writes it again (as the
//! destination of a merge, extract or amplify).

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Sub};
use std::str::FromStr;

use thiserror::Error;

/// One (field, bit, value) triple: the symbolic stand-in for one 15-base
/// value sequence. Bit 1 is the most significant bit of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BitBlock {
    field: u16,
    bit: u16,
    value: bool,
}

impl BitBlock {
    /// Panics if `field` or `bit` is zero.
    pub fn new(field: u16, bit: u16, value: bool) -> Self {
        Self::try_new(field, bit, value).expect("field and bit indices are 1-based")
    }

    pub fn try_new(field: u16, bit: u16, value: bool) -> Option<Self> {
        (field >= 1 && bit >= 1).then_some(Self { field, bit, value })
    }

    pub fn field(&self) -> u16 {
        self.field
    }

    pub fn bit(&self) -> u16 {
        self.bit
    }

    pub fn value(&self) -> bool {
        self.value
    }

    /// The same position carrying the other bit value.
    pub fn sibling(&self) -> Self {
        Self { value: !self.value, ..*self }
    }
}

impl fmt::Display for BitBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.field, self.bit, u8::from(self.value))
    }
}

impl FromStr for BitBlock {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("block must look like (k,j,v): {s:?}"))?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("block must have three components: {s:?}"));
        }
        let field: u16 = parts[0].parse().map_err(|_| format!("bad field index in {s:?}"))?;
        let bit: u16 = parts[1].parse().map_err(|_| format!("bad bit index in {s:?}"))?;
        let value = match parts[2] {
            "0" => false,
            "1" => true,
            _ => return Err(format!("bit value must be 0 or 1 in {s:?}")),
        };
        Self::try_new(field, bit, value).ok_or_else(|| format!("indices are 1-based in {s:?}"))
    }
}

/// An ordered list of blocks. Ordering between strands is lexicographic over
/// the block triples, which is the canonical order used by `read`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Strand(Vec<BitBlock>);

impl Strand {
    pub fn new(blocks: Vec<BitBlock>) -> Self {
        Self(blocks)
    }

    pub fn blocks(&self) -> &[BitBlock] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, block: &BitBlock) -> bool {
        self.0.contains(block)
    }

    fn appended(&self, block: BitBlock) -> Self {
        let mut blocks = Vec::with_capacity(self.0.len() + 1);
        blocks.extend_from_slice(&self.0);
        blocks.push(block);
        Self(blocks)
    }

    fn prepended(&self, block: BitBlock) -> Self {
        let mut blocks = Vec::with_capacity(self.0.len() + 1);
        blocks.push(block);
        blocks.extend_from_slice(&self.0);
        Self(blocks)
    }
}

impl From<Vec<BitBlock>> for Strand {
    fn from(blocks: Vec<BitBlock>) -> Self {
        Self(blocks)
    }
}

impl fmt::Display for Strand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// A multiset of strands.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tube {
    strands: BTreeMap<Strand, u64>,
}

impl Tube {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, strand: Strand, copies: u64) {
        if copies > 0 {
            *self.strands.entry(strand).or_insert(0) += copies;
        }
    }

    /// Total number of strands, counting multiplicity.
    pub fn len(&self) -> u64 {
        self.strands.values().sum()
    }

    pub fn distinct(&self) -> usize {
        self.strands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strands.is_empty()
    }

    pub fn multiplicity(&self, strand: &Strand) -> u64 {
        self.strands.get(strand).copied().unwrap_or(0)
    }

    /// Distinct strands in canonical order with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&Strand, u64)> {
        self.strands.iter().map(|(s, &n)| (s, n))
    }

    /// Multiset sum.
    pub fn absorb(&mut self, other: Tube) {
        for (s, n) in other.strands {
            self.insert(s, n);
        }
    }

    fn map_strands(self, f: impl Fn(&Strand) -> Strand) -> Tube {
        let mut out = Tube::new();
        for (s, n) in self.strands {
            out.insert(f(&s), n);
        }
        out
    }
}

impl FromIterator<Strand> for Tube {
    fn from_iter<I: IntoIterator<Item = Strand>>(iter: I) -> Self {
        let mut t = Tube::new();
        for s in iter {
            t.insert(s, 1);
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Opcode {
    Extract,
    Merge,
    Detect,
    Discard,
    Amplify,
    Append,
    AppendHead,
    Read,
}

impl Opcode {
    pub const ALL: [Opcode; 8] = [
        Opcode::Extract,
        Opcode::Merge,
        Opcode::Detect,
        Opcode::Discard,
        Opcode::Amplify,
        Opcode::Append,
        Opcode::AppendHead,
        Opcode::Read,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Opcode::Extract => "extract",
            Opcode::Merge => "merge",
            Opcode::Detect => "detect",
            Opcode::Discard => "discard",
            Opcode::Amplify => "amplify",
            Opcode::Append => "append",
            Opcode::AppendHead => "append_head",
            Opcode::Read => "read",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Opcode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| format!("unknown opcode {s:?}"))
    }
}

/// Per-opcode instruction counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts([u64; 8]);

impl Counts {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Opcode, u64)> + '_ {
        Opcode::ALL.into_iter().map(|op| (op, self[op]))
    }

    /// Flat `name -> count` map, one key per opcode.
    pub fn to_map(&self) -> BTreeMap<String, u64> {
        self.iter().map(|(op, n)| (op.name().to_string(), n)).collect()
    }

    pub fn with(mut self, op: Opcode, n: u64) -> Self {
        self[op] = n;
        self
    }
}

impl Index<Opcode> for Counts {
    type Output = u64;

    fn index(&self, op: Opcode) -> &u64 {
        &self.0[op.slot()]
    }
}

impl IndexMut<Opcode> for Counts {
    fn index_mut(&mut self, op: Opcode) -> &mut u64 {
        &mut self.0[op.slot()]
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(mut self, rhs: Counts) -> Counts {
        self += rhs;
        self
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Counts {
    type Output = Counts;

    /// Panics if any counter would go negative; counters only grow, so this
    /// is only used as `later - earlier`.
    fn sub(mut self, rhs: Counts) -> Counts {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a = a.checked_sub(b).expect("counter snapshot taken out of order");
        }
        self
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(op, n)| format!("{op}={n}")).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    Extract { src: String, probe: BitBlock, plus: String, minus: String },
    /// `dst = ∪(srcs)`. `dst` may itself appear among the sources.
    Merge { dst: String, srcs: Vec<String> },
    Detect { tube: String },
    Discard { tube: String },
    Amplify { src: String, copy1: String, copy2: String },
    Append { tube: String, block: BitBlock },
    AppendHead { tube: String, block: BitBlock },
    Read { tube: String },
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Extract { .. } => Opcode::Extract,
            Instruction::Merge { .. } => Opcode::Merge,
            Instruction::Detect { .. } => Opcode::Detect,
            Instruction::Discard { .. } => Opcode::Discard,
            Instruction::Amplify { .. } => Opcode::Amplify,
            Instruction::Append { .. } => Opcode::Append,
            Instruction::AppendHead { .. } => Opcode::AppendHead,
            Instruction::Read { .. } => Opcode::Read,
        }
    }

    /// Counter increment charged for this instruction. A merge of z tubes
    /// counts as z - 1 binary merges; everything else counts once.
    pub fn weight(&self) -> u64 {
        match self {
            Instruction::Merge { srcs, .. } => srcs.len().saturating_sub(1) as u64,
            _ => 1,
        }
    }

    fn tube_names(&self) -> Vec<&str> {
        match self {
            Instruction::Extract { src, plus, minus, .. } => vec![src, plus, minus],
            Instruction::Merge { dst, srcs } => {
                std::iter::once(dst.as_str()).chain(srcs.iter().map(String::as_str)).collect()
            }
            Instruction::Detect { tube }
            | Instruction::Discard { tube }
            | Instruction::Read { tube }
            | Instruction::Append { tube, .. }
            | Instruction::AppendHead { tube, .. } => vec![tube],
            Instruction::Amplify { src, copy1, copy2 } => vec![src, copy1, copy2],
        }
    }

    fn block(&self) -> Option<BitBlock> {
        match self {
            Instruction::Extract { probe, .. } => Some(*probe),
            Instruction::Append { block, .. } | Instruction::AppendHead { block, .. } => Some(*block),
            _ => None,
        }
    }
}

/// One executed instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub seq: usize,
    pub instruction: Instruction,
    /// Result of a detect instruction.
    pub detected: Option<bool>,
}

impl fmt::Display for TraceEntry {
    /// `<seq>\t<opcode>\t<tube-names>\t<probe-or-block-or-empty>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = &self.instruction;
        let block = i.block().map(|b| b.to_string()).unwrap_or_default();
        write!(f, "{}\t{}\t{}\t{}", self.seq, i.opcode(), i.tube_names().join(","), block)
    }
}

/// Renders a trace in the line format, one instruction per line.
pub fn format_trace(entries: &[TraceEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

/// Parses the line format back into instructions. Lines starting with `#`
/// and blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<Instruction>, String> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 tab-separated columns", lineno + 1));
        }
        let op: Opcode = cols[1].parse()?;
        let names: Vec<String> = cols[2].split(',').map(str::to_string).collect();
        let block = if cols[3].is_empty() { None } else { Some(cols[3].parse::<BitBlock>()?) };
        let need = |n: usize| {
            if names.len() == n {
                Ok(())
            } else {
                Err(format!("line {}: {op} takes {n} tube names", lineno + 1))
            }
        };
        let need_block = || block.ok_or_else(|| format!("line {}: {op} needs a block", lineno + 1));
        let instr = match op {
            Opcode::Extract => {
                need(3)?;
                Instruction::Extract {
                    src: names[0].clone(),
                    probe: need_block()?,
                    plus: names[1].clone(),
                    minus: names[2].clone(),
                }
            }
            Opcode::Merge => {
                if names.len() < 2 {
                    return Err(format!("line {}: merge needs a destination and a source", lineno + 1));
                }
                Instruction::Merge { dst: names[0].clone(), srcs: names[1..].to_vec() }
            }
            Opcode::Detect => {
                need(1)?;
                Instruction::Detect { tube: names[0].clone() }
            }
            Opcode::Discard => {
                need(1)?;
                Instruction::Discard { tube: names[0].clone() }
            }
            Opcode::Amplify => {
                need(3)?;
                Instruction::Amplify {
                    src: names[0].clone(),
                    copy1: names[1].clone(),
                    copy2: names[2].clone(),
                }
            }
            Opcode::Append => {
                need(1)?;
                Instruction::Append { tube: names[0].clone(), block: need_block()? }
            }
            Opcode::AppendHead => {
                need(1)?;
                Instruction::AppendHead { tube: names[0].clone(), block: need_block()? }
            }
            Opcode::Read => {
                need(1)?;
                Instruction::Read { tube: names[0].clone() }
            }
        };
        out.push(instr);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FaultKind {
    #[error("tube {0:?} was discarded")]
    UseAfterDiscard(String),
    #[error("read on empty tube {0:?}")]
    EmptyRead(String),
    #[error("merge needs at least one source tube")]
    NoSources,
    #[error("destination tube {0:?} is not empty")]
    DestinationOccupied(String),
    #[error("tube {0:?} named twice in one instruction")]
    AliasedOperands(String),
}

/// A machine fault. `index` is the trace position the failing instruction
/// would have occupied.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("machine fault at instruction {index} ({opcode}): {kind}")]
pub struct MachineError {
    pub index: usize,
    pub opcode: Opcode,
    pub kind: FaultKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Detected(bool),
    Read(Strand),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Slot {
    Live(Tube),
    Discarded,
}

/// Recorded trace plus counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostReport {
    pub counts: Counts,
    pub trace: Vec<TraceEntry>,
}

impl CostReport {
    /// Rebuilds the counters from the trace alone.
    pub fn replayed_counts(&self) -> Counts {
        let mut c = Counts::zero();
        for e in &self.trace {
            c[e.instruction.opcode()] += e.instruction.weight();
        }
        c
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Machine {
    tubes: BTreeMap<String, Slot>,
    trace: Vec<TraceEntry>,
    counts: Counts,
    next_fresh: u64,
}

impl Machine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Places contents into a tube without executing an instruction. Used to
    /// set up initial states for tests and replays.
    pub fn place(&mut self, name: &str, tube: Tube) {
        self.tubes.insert(name.to_string(), Slot::Live(tube));
    }

    /// A tube name not used before on this machine.
    pub fn fresh_name(&mut self, stem: &str) -> String {
        loop {
            self.next_fresh += 1;
            let name = format!("{stem}#{}", self.next_fresh);
            if !self.tubes.contains_key(&name) {
                return name;
            }
        }
    }

    /// Current contents of a tube, or `None` if it was discarded. Does not
    /// count as an instruction.
    pub fn tube(&self, name: &str) -> Option<Tube> {
        match self.tubes.get(name) {
            None => Some(Tube::new()),
            Some(Slot::Live(t)) => Some(t.clone()),
            Some(Slot::Discarded) => None,
        }
    }

    /// Number of strands currently in the tube (0 for discarded tubes).
    pub fn strand_count(&self, name: &str) -> u64 {
        match self.tubes.get(name) {
            Some(Slot::Live(t)) => t.len(),
            _ => 0,
        }
    }

    pub fn is_discarded(&self, name: &str) -> bool {
        matches!(self.tubes.get(name), Some(Slot::Discarded))
    }

    /// Host-side decoding helper: every distinct strand in canonical order
    /// with its multiplicity. Not an instruction.
    pub fn read_all(&self, name: &str) -> Vec<(Strand, u64)> {
        match self.tubes.get(name) {
            Some(Slot::Live(t)) => t.iter().map(|(s, n)| (s.clone(), n)).collect(),
            _ => Vec::new(),
        }
    }

    /// Names of tubes that exist and are not discarded, with their contents.
    pub fn live_tubes(&self) -> impl Iterator<Item = (&str, &Tube)> {
        self.tubes.iter().filter_map(|(n, s)| match s {
            Slot::Live(t) => Some((n.as_str(), t)),
            Slot::Discarded => None,
        })
    }

    pub fn counts(&self) -> Counts {
        self.counts
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn report(&self) -> CostReport {
        CostReport { counts: self.counts, trace: self.trace.clone() }
    }

    pub fn extract(&mut self, src: &str, probe: BitBlock, plus: &str, minus: &str) -> Result<(), MachineError> {
        self.execute(Instruction::Extract {
            src: src.to_string(),
            probe,
            plus: plus.to_string(),
            minus: minus.to_string(),
        })
        .map(drop)
    }

    pub fn merge(&mut self, dst: &str, srcs: &[&str]) -> Result<(), MachineError> {
        self.execute(Instruction::Merge {
            dst: dst.to_string(),
            srcs: srcs.iter().map(|s| s.to_string()).collect(),
        })
        .map(drop)
    }

    pub fn detect(&mut self, tube: &str) -> Result<bool, MachineError> {
        match self.execute(Instruction::Detect { tube: tube.to_string() })? {
            Outcome::Detected(yes) => Ok(yes),
            other => unreachable!("detect produced {other:?}"),
        }
    }

    pub fn discard(&mut self, tube: &str) -> Result<(), MachineError> {
        self.execute(Instruction::Discard { tube: tube.to_string() }).map(drop)
    }

    pub fn amplify(&mut self, src: &str, copy1: &str, copy2: &str) -> Result<(), MachineError> {
        self.execute(Instruction::Amplify {
            src: src.to_string(),
            copy1: copy1.to_string(),
            copy2: copy2.to_string(),
        })
        .map(drop)
    }

    pub fn append(&mut self, tube: &str, block: BitBlock) -> Result<(), MachineError> {
        self.execute(Instruction::Append { tube: tube.to_string(), block }).map(drop)
    }

    pub fn append_head(&mut self, tube: &str, block: BitBlock) -> Result<(), MachineError> {
        self.execute(Instruction::AppendHead { tube: tube.to_string(), block }).map(drop)
    }

    pub fn read(&mut self, tube: &str) -> Result<Strand, MachineError> {
        match self.execute(Instruction::Read { tube: tube.to_string() })? {
            Outcome::Read(s) => Ok(s),
            other => unreachable!("read produced {other:?}"),
        }
    }

    /// Runs one instruction. On success it is appended to the trace and the
    /// counters are charged; on failure the machine is unchanged.
    pub fn execute(&mut self, instr: Instruction) -> Result<Outcome, MachineError> {
        let fault = |kind| MachineError { index: self.trace.len(), opcode: instr.opcode(), kind };
        let outcome = match &instr {
            Instruction::Extract { src, probe, plus, minus } => {
                if plus == minus {
                    return Err(fault(FaultKind::AliasedOperands(plus.clone())));
                }
                self.require_live(src).map_err(fault)?;
                for d in [plus, minus] {
                    if d != src {
                        self.require_vacant(d).map_err(fault)?;
                    }
                }
                let contents = self.take(src);
                let (mut with, mut without) = (Tube::new(), Tube::new());
                for (s, n) in contents.strands {
                    if s.contains(probe) {
                        with.insert(s, n);
                    } else {
                        without.insert(s, n);
                    }
                }
                self.tubes.insert(plus.clone(), Slot::Live(std::mem::take(&mut with)));
                self.tubes.insert(minus.clone(), Slot::Live(std::mem::take(&mut without)));
                Outcome::Done
            }
            Instruction::Merge { dst, srcs } => {
                if srcs.is_empty() {
                    return Err(fault(FaultKind::NoSources));
                }
                for (i, s) in srcs.iter().enumerate() {
                    if srcs[..i].contains(s) {
                        return Err(fault(FaultKind::AliasedOperands(s.clone())));
                    }
                    if s != dst {
                        self.require_live(s).map_err(fault)?;
                    }
                }
                if !srcs.contains(dst) {
                    self.require_vacant(dst).map_err(fault)?;
                }
                let mut sum = Tube::new();
                for s in srcs {
                    sum.absorb(self.take(s));
                }
                self.tubes.insert(dst.clone(), Slot::Live(sum));
                Outcome::Done
            }
            Instruction::Detect { tube } => {
                let yes = matches!(self.tubes.get(tube), Some(Slot::Live(t)) if !t.is_empty());
                Outcome::Detected(yes)
            }
            Instruction::Discard { tube } => {
                self.tubes.insert(tube.clone(), Slot::Discarded);
                Outcome::Done
            }
            Instruction::Amplify { src, copy1, copy2 } => {
                for (a, b) in [(src, copy1), (src, copy2), (copy1, copy2)] {
                    if a == b {
                        return Err(fault(FaultKind::AliasedOperands(a.clone())));
                    }
                }
                self.require_live(src).map_err(fault)?;
                self.require_vacant(copy1).map_err(fault)?;
                self.require_vacant(copy2).map_err(fault)?;
                let contents = self.take(src);
                self.tubes.insert(copy1.clone(), Slot::Live(contents.clone()));
                self.tubes.insert(copy2.clone(), Slot::Live(contents));
                Outcome::Done
            }
            Instruction::Append { tube, block } | Instruction::AppendHead { tube, block } => {
                self.require_live(tube).map_err(fault)?;
                let head = matches!(instr, Instruction::AppendHead { .. });
                let contents = self.take(tube);
                let grown = if contents.is_empty() {
                    std::iter::once(Strand::new(vec![*block])).collect()
                } else if head {
                    contents.map_strands(|s| s.prepended(*block))
                } else {
                    contents.map_strands(|s| s.appended(*block))
                };
                self.tubes.insert(tube.clone(), Slot::Live(grown));
                Outcome::Done
            }
            Instruction::Read { tube } => match self.tubes.get(tube) {
                Some(Slot::Discarded) => return Err(fault(FaultKind::UseAfterDiscard(tube.clone()))),
                Some(Slot::Live(t)) if !t.is_empty() => {
                    Outcome::Read(t.iter().next().map(|(s, _)| s.clone()).expect("non-empty"))
                }
                _ => return Err(fault(FaultKind::EmptyRead(tube.clone()))),
            },
        };
        self.counts[instr.opcode()] += instr.weight();
        let detected = match outcome {
            Outcome::Detected(yes) => Some(yes),
            _ => None,
        };
        self.trace.push(TraceEntry { seq: self.trace.len(), instruction: instr, detected });
        Ok(outcome)
    }

    fn require_live(&self, name: &str) -> Result<(), FaultKind> {
        match self.tubes.get(name) {
            Some(Slot::Discarded) => Err(FaultKind::UseAfterDiscard(name.to_string())),
            _ => Ok(()),
        }
    }

    /// A destination must hold nothing; a discarded tube is re-created.
    fn require_vacant(&self, name: &str) -> Result<(), FaultKind> {
        match self.tubes.get(name) {
            Some(Slot::Live(t)) if !t.is_empty() => Err(FaultKind::DestinationOccupied(name.to_string())),
            _ => Ok(()),
        }
    }

    fn take(&mut self, name: &str) -> Tube {
        match self.tubes.insert(name.to_string(), Slot::Live(Tube::new())) {
            Some(Slot::Live(t)) => t,
            _ => Tube::new(),
        }
    }
}
