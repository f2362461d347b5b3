//! Relation schemas, record strands, and DNA rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::machine::{BitBlock, Machine, Strand};
use crate::{Error, Result};

/// Length of one value sequence in bases.
pub const BLOCK_BASES: usize = 15;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub width: u16,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub fields: Vec<Field>,
    /// Number of leading key columns.
    pub key_prefix: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Row(pub Vec<u64>);

impl Row {
    pub fn values(&self) -> &[u64] {
        &self.0
    }
}

impl From<Vec<u64>> for Row {
    fn from(v: Vec<u64>) -> Self {
        Row(v)
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl Schema {
    pub fn new(name: &str, fields: &[(&str, u16)], key_prefix: usize) -> Result<Self> {
        let schema = Schema {
            name: name.to_string(),
            fields: fields.iter().map(|&(n, w)| Field { name: n.to_string(), width: w }).collect(),
            key_prefix,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_identifier(&self.name) {
            return Err(Error::Schema(format!("bad relation name {:?}", self.name)));
        }
        if self.fields.is_empty() {
            return Err(Error::Schema(format!("relation {} has no fields", self.name)));
        }
        let mut seen = BTreeSet::new();
        for f in &self.fields {
            if !is_identifier(&f.name) {
                return Err(Error::Schema(format!("bad field name {:?}", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("field {} declared twice in {}", f.name, self.name)));
            }
            if f.width == 0 || f.width > 64 {
                return Err(Error::Schema(format!("field {} width {} not in 1..=64", f.name, f.width)));
            }
        }
        if self.key_prefix > self.fields.len() {
            return Err(Error::Schema(format!(
                "key prefix {} exceeds field count {}",
                self.key_prefix,
                self.fields.len()
            )));
        }
        if self.fields.len() > u16::MAX as usize {
            return Err(Error::Schema("too many fields".into()));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    pub fn widths(&self) -> Vec<u16> {
        self.fields.iter().map(|f| f.width).collect()
    }

    /// Σ L_k.
    pub fn total_bits(&self) -> usize {
        self.fields.iter().map(|f| f.width as usize).sum()
    }

    /// 0-based index of a field name.
    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn width(&self, col: usize) -> u16 {
        self.fields[col].width
    }

    pub fn check_row(&self, row: &Row) -> Result<()> {
        if row.0.len() != self.arity() {
            return Err(Error::Schema(format!(
                "row {row} has {} values, relation {} has {} fields",
                row.0.len(),
                self.name,
                self.arity()
            )));
        }
        for (v, f) in row.0.iter().zip(&self.fields) {
            if !fits(*v, f.width) {
                return Err(Error::Schema(format!(
                    "value {v} overflows {}-bit field {}",
                    f.width, f.name
                )));
            }
        }
        Ok(())
    }

    /// Same shape (widths) ignoring names.
    pub fn compatible(&self, other: &Schema) -> bool {
        self.widths() == other.widths()
    }

    /// Schema of the listed columns (0-based), in the listed order, with no key.
    pub fn project(&self, cols: &[usize], name: &str) -> Schema {
        Schema {
            name: name.to_string(),
            fields: cols.iter().map(|&c| self.fields[c].clone()).collect(),
            key_prefix: 0,
        }
    }

    /// Concatenated schema of a product. Field names that collide are
    /// qualified with their relation name.
    pub fn concat(&self, other: &Schema, name: &str) -> Schema {
        let clash: BTreeSet<&str> = self
            .fields
            .iter()
            .map(|f| f.name.as_str())
            .filter(|n| other.field_index(n).is_some())
            .collect();
        let qualify = |rel: &str, f: &Field| Field {
            name: if clash.contains(f.name.as_str()) { format!("{rel}.{}", f.name) } else { f.name.clone() },
            width: f.width,
        };
        let mut fields: Vec<Field> = self.fields.iter().map(|f| qualify(&self.name, f)).collect();
        fields.extend(other.fields.iter().map(|f| qualify(&other.name, f)));
        let mut seen = BTreeSet::new();
        for f in &mut fields {
            let base = f.name.clone();
            let mut n = 2;
            while !seen.insert(f.name.clone()) {
                f.name = format!("{base}_{n}");
                n += 1;
            }
        }
        Schema { name: name.to_string(), fields, key_prefix: 0 }
    }

    /// Parses one `relation <name>; fields <name>:<width>, …; key <d>` line.
    pub fn parse(line: &str) -> Result<Schema> {
        let bad = |why: &str| Error::Schema(format!("{why}: {line:?}"));
        let parts: Vec<&str> = line.split(';').map(str::trim).filter(|p| !p.is_empty()).collect();
        let mut name = None;
        let mut fields = None;
        let mut key = 0usize;
        for part in parts {
            let (kw, rest) = part.split_once(char::is_whitespace).ok_or_else(|| bad("clause without value"))?;
            let rest = rest.trim();
            match kw {
                "relation" => name = Some(rest.to_string()),
                "fields" => {
                    let mut fs = Vec::new();
                    for spec in rest.split(',') {
                        let (n, w) = spec.split_once(':').ok_or_else(|| bad("field must be name:width"))?;
                        let width: u16 = w.trim().parse().map_err(|_| bad("field width must be an integer"))?;
                        fs.push(Field { name: n.trim().to_string(), width });
                    }
                    fields = Some(fs);
                }
                "key" => key = rest.parse().map_err(|_| bad("key must be an integer"))?,
                other => return Err(bad(&format!("unknown clause {other:?}"))),
            }
        }
        let schema = Schema {
            name: name.ok_or_else(|| bad("missing relation clause"))?,
            fields: fields.ok_or_else(|| bad("missing fields clause"))?,
            key_prefix: key,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Parses a schema file: one schema per non-blank line, `#` comments.
    pub fn parse_file(text: &str) -> Result<Vec<Schema>> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(Schema::parse)
            .collect()
    }

    pub fn read_csv(&self, text: &str) -> Result<Vec<Row>> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).quoting(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let names: Vec<&str> = header.iter().collect();
        let expected: Vec<&str> = self.fields.iter().map(|f| f.name.as_str()).collect();
        if names != expected {
            return Err(Error::Schema(format!(
                "CSV header {names:?} does not match fields {expected:?} of {}",
                self.name
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("line {}: {e}", i + 2)))?;
            let values = rec
                .iter()
                .map(|v| v.parse::<u64>().map_err(|_| Error::Data(format!("line {}: {v:?} is not an unsigned integer", i + 2))))
                .collect::<Result<Vec<u64>>>()?;
            let row = Row(values);
            self.check_row(&row)?;
            rows.push(row);
        }
        Ok(rows)
    }

    pub fn write_csv<'a>(&self, rows: impl IntoIterator<Item = &'a Row>) -> String {
        let mut out = self.fields.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for r in rows {
            out.push_str(&r.0.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fields: Vec<String> = self.fields.iter().map(|x| format!("{}:{}", x.name, x.width)).collect();
        write!(f, "relation {}; fields {}; key {}", self.name, fields.join(", "), self.key_prefix)
    }
}

pub fn fits(value: u64, width: u16) -> bool {
    width >= 64 || value >> width == 0
}

/// Bit `j` (1 = most significant) of a `width`-bit value.
pub fn bit_of(value: u64, width: u16, j: u16) -> bool {
    (value >> (width - j)) & 1 == 1
}

/// The blocks of one row in insertion order.
pub fn row_blocks(row: &Row, schema: &Schema) -> Vec<BitBlock> {
    let mut blocks = Vec::with_capacity(schema.total_bits());
    for (k, (v, f)) in row.0.iter().zip(&schema.fields).enumerate() {
        for j in 1..=f.width {
            blocks.push(BitBlock::new(k as u16 + 1, j, bit_of(*v, f.width, j)));
        }
    }
    blocks
}

/// Host-side encoding of a row, without running instructions.
pub fn encode(row: &Row, schema: &Schema) -> Strand {
    Strand::new(row_blocks(row, schema))
}

/// Builds one record strand in an empty tube with Σ L_k appends.
pub fn insert(m: &mut Machine, tube: &str, row: &Row, schema: &Schema) -> Result<()> {
    schema.check_row(row)?;
    if m.strand_count(tube) != 0 {
        return Err(Error::Precondition(format!("insert target {tube} is not empty")));
    }
    for b in row_blocks(row, schema) {
        m.append(tube, b)?;
    }
    Ok(())
}

/// Loads every row into `t0`: one insert into a scratch tube and one merge
/// per row.
pub fn load_relation(m: &mut Machine, t0: &str, rows: &[Row], schema: &Schema) -> Result<()> {
    for r in rows {
        schema.check_row(r)?;
    }
    if m.strand_count(t0) != 0 {
        return Err(Error::Precondition(format!("load target {t0} is not empty")));
    }
    let t80 = m.fresh_name("T80");
    for r in rows {
        insert(m, &t80, r, schema)?;
        m.merge(t0, &[t0, &t80])?;
    }
    Ok(())
}

/// Loads rows while rejecting any row whose key columns repeat an earlier
/// row's. On a duplicate, `t0` keeps every row accepted so far.
pub fn primary_key_load(m: &mut Machine, t0: &str, rows: &[Row], schema: &Schema) -> Result<()> {
    let d = schema.key_prefix;
    if d == 0 {
        return Err(Error::Precondition(format!("relation {} has no key columns", schema.name)));
    }
    for r in rows {
        schema.check_row(r)?;
    }
    if m.strand_count(t0) != 0 {
        return Err(Error::Precondition(format!("load target {t0} is not empty")));
    }
    let t80 = m.fresh_name("T80");
    for (i, row) in rows.iter().enumerate() {
        if !m.detect(t0)? {
            insert(m, &t80, row, schema)?;
            m.merge(t0, &[t0, &t80])?;
            continue;
        }
        let t82 = m.fresh_name("T82");
        let on82 = m.fresh_name("T82ON");
        let off82 = m.fresh_name("T82OFF");
        let on0 = m.fresh_name("T0ON");
        let off0 = m.fresh_name("T0OFF");
        let eq83 = m.fresh_name("T83EQ");
        let ne83 = m.fresh_name("T83NE");
        let t84 = m.fresh_name("T84");
        let blocks = row_blocks(row, schema);
        for b in &blocks {
            m.append(&t82, *b)?;
        }
        let key_bits: usize = schema.fields[..d].iter().map(|f| f.width as usize).sum();
        for b in &blocks[..key_bits] {
            m.extract(&t82, *b, &on82, &off82)?;
            m.extract(t0, *b, &on0, &off0)?;
            if m.detect(&on82)? {
                m.merge(&eq83, &[&on0, &eq83])?;
                m.merge(&ne83, &[&off0, &ne83])?;
            } else {
                m.merge(&eq83, &[&off0, &eq83])?;
                m.merge(&ne83, &[&on0, &ne83])?;
            }
            m.merge(&t82, &[&on82, &off82])?;
            m.merge(t0, &[t0, &eq83])?;
            m.merge(&t84, &[&t84, &ne83])?;
        }
        m.discard(&t82)?;
        if !m.detect(t0)? {
            insert(m, &t80, row, schema)?;
            m.merge(t0, &[t0, &t80, &t84])?;
        } else {
            m.merge(t0, &[t0, &t84])?;
            return Err(Error::DuplicateKey { row: i + 1 });
        }
    }
    Ok(())
}

/// Inverse of [`encode`]. Block order is not significant.
pub fn decode(strand: &Strand, schema: &Schema) -> Result<Row> {
    if strand.len() != schema.total_bits() {
        return Err(Error::Malformed(format!(
            "strand has {} blocks, relation {} needs {}",
            strand.len(),
            schema.name,
            schema.total_bits()
        )));
    }
    let mut values = vec![0u64; schema.arity()];
    let mut seen = BTreeSet::new();
    for b in strand.blocks() {
        let k = b.field() as usize;
        if k > schema.arity() {
            return Err(Error::Malformed(format!("block {b} names field {k} outside {}", schema.name)));
        }
        let width = schema.fields[k - 1].width;
        if b.bit() > width {
            return Err(Error::Malformed(format!("block {b} exceeds width {width}")));
        }
        if !seen.insert((b.field(), b.bit())) {
            return Err(Error::Malformed(format!("position ({k},{}) appears twice", b.bit())));
        }
        if b.value() {
            values[k - 1] |= 1 << (width - b.bit());
        }
    }
    Ok(Row(values))
}

/// Decodes every distinct strand in a tube, with multiplicities, without
/// running instructions.
pub fn decode_tube(m: &Machine, tube: &str, schema: &Schema) -> Result<Vec<(Row, u64)>> {
    m.read_all(tube).iter().map(|(s, n)| Ok((decode(s, schema)?, *n))).collect()
}

/// Decoded rows of a tube as a set.
pub fn decode_set(m: &Machine, tube: &str, schema: &Schema) -> Result<BTreeSet<Row>> {
    Ok(decode_tube(m, tube, schema)?.into_iter().map(|(r, _)| r).collect())
}

/// The 15-base value sequence of each block.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceLibrary {
    table: BTreeMap<BitBlock, String>,
}

impl SequenceLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, block: BitBlock, seq: String) -> Result<()> {
        if seq.len() != BLOCK_BASES || !seq.bytes().all(|c| b"ACGT".contains(&c)) {
            return Err(Error::Data(format!("{seq:?} is not a {BLOCK_BASES}-base sequence over ACGT")));
        }
        self.table.insert(block, seq);
        Ok(())
    }

    pub fn get(&self, block: &BitBlock) -> Option<&str> {
        self.table.get(block).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BitBlock, &str)> {
        self.table.iter().map(|(b, s)| (b, s.as_str()))
    }

    /// Every (k, j, v) a schema needs, in canonical order.
    pub fn positions(schema: &Schema) -> Vec<BitBlock> {
        let mut out = Vec::new();
        for (k, f) in schema.fields.iter().enumerate() {
            for j in 1..=f.width {
                for v in [false, true] {
                    out.push(BitBlock::new(k as u16 + 1, j, v));
                }
            }
        }
        out
    }

    /// Parses `k,j,value,SEQUENCE` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lib = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Data(format!("library line {}: expected k,j,value,SEQUENCE", n + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(bad());
            }
            let k: u16 = cols[0].parse().map_err(|_| bad())?;
            let j: u16 = cols[1].parse().map_err(|_| bad())?;
            let v = match cols[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            let block = BitBlock::try_new(k, j, v).ok_or_else(bad)?;
            lib.insert(block, cols[3].to_string())?;
        }
        Ok(lib)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (b, s) in &self.table {
            out.push_str(&format!("{},{},{},{}\n", b.field(), b.bit(), u8::from(b.value()), s));
        }
        out
    }
}

/// Concatenates the value sequences of a strand's blocks.
pub fn render(strand: &Strand, lib: &SequenceLibrary) -> Result<String> {
    let mut out = String::with_capacity(BLOCK_BASES * strand.len());
    for b in strand.blocks() {
        out.push_str(lib.get(b).ok_or(Error::MissingSequence(*b))?);
    }
    Ok(out)
}
