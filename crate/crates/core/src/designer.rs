//! Value-sequence design: generation under constraints, constraint checks,
//! mishybridization histograms and nearest-neighbor energy statistics.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoding::{Schema, SequenceLibrary, BLOCK_BASES};
use crate::machine::BitBlock;
use crate::{Error, Result};

const DEFAULT_NN: &str = include_str!("../data/nn_santalucia1998.csv");

fn base_index(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

pub fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'T' => b'A',
        b'C' => b'G',
        b'G' => b'C',
        other => other,
    }
}

pub fn reverse_complement(s: &[u8]) -> Vec<u8> {
    s.iter().rev().map(|&b| complement(b)).collect()
}

/// Per-step enthalpy, entropy and free energy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepEnergy {
    pub dh: f64,
    pub ds: f64,
    pub dg: f64,
}

/// Nearest-neighbor table indexed by 5'→3' dinucleotide step.
#[derive(Clone, Debug, PartialEq)]
pub struct NNParams {
    table: [[Option<StepEnergy>; 4]; 4],
}

impl Default for NNParams {
    fn default() -> Self {
        NNParams::parse(DEFAULT_NN).expect("bundled table is complete")
    }
}

impl NNParams {
    /// Parses `XY,dH,dS,dG` lines. All sixteen steps must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let table = Self::parse_partial(text)?.table;
        for (i, row) in table.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    let step = [b"ACGT"[i] as char, b"ACGT"[j] as char].iter().collect::<String>();
                    return Err(Error::Data(format!("nearest-neighbor table lacks step {step}")));
                }
            }
        }
        Ok(NNParams { table })
    }

    /// Parses a table that may leave steps out.
    pub fn parse_partial(text: &str) -> Result<Self> {
        let mut table = [[None; 4]; 4];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Data(format!("nearest-neighbor line {}: expected XY,dH,dS,dG", n + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 || cols[0].len() != 2 {
                return Err(bad());
            }
            let step = cols[0].as_bytes();
            let (x, y) = (base_index(step[0]).ok_or_else(bad)?, base_index(step[1]).ok_or_else(bad)?);
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            table[x][y] = Some(StepEnergy { dh: num(cols[1])?, ds: num(cols[2])?, dg: num(cols[3])? });
        }
        Ok(NNParams { table })
    }

    pub fn step(&self, x: u8, y: u8) -> Option<StepEnergy> {
        self.table[base_index(x)?][base_index(y)?]
    }

    /// Sum of the step contributions along `seq`.
    pub fn duplex(&self, seq: &[u8]) -> Result<StepEnergy> {
        let mut total = StepEnergy::default();
        for w in seq.windows(2) {
            let e = self.step(w[0], w[1]).ok_or_else(|| {
                Error::Data(format!("no nearest-neighbor entry for step {}{}", w[0] as char, w[1] as char))
            })?;
            total.dh += e.dh;
            total.ds += e.ds;
            total.dg += e.dg;
        }
        Ok(total)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.table.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Some(e) = cell {
                    let (x, y) = (b"ACGT"[i] as char, b"ACGT"[j] as char);
                    out.push_str(&format!("{x}{y},{},{},{}\n", e.dh, e.ds, e.dg));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintConfig {
    pub alphabet: Vec<u8>,
    pub max_homopolymer: usize,
    /// Longest allowed complementary run between a probe and any
    /// unintended site.
    pub max_unintended_match: usize,
    /// Longest substring whose reverse complement also occurs in the same
    /// sequence.
    pub max_self_complement: usize,
    /// Allowed spread (max − min) of per-entry duplex free energy, kcal/mol.
    pub melt_uniformity_band: f64,
    pub retry_budget: u32,
    pub max_restarts: u32,
    pub nn: NNParams,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            alphabet: b"ACT".to_vec(),
            max_homopolymer: 4,
            max_unintended_match: 11,
            max_self_complement: 6,
            melt_uniformity_band: 2.0,
            retry_budget: 10_000,
            max_restarts: 8,
            nn: NNParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    Alphabet,
    Homopolymer,
    SelfComplement,
    Distinctness,
    MeltUniformity,
    UnintendedMatch,
}

impl Constraint {
    pub const ALL: [Constraint; 6] = [
        Constraint::Alphabet,
        Constraint::Homopolymer,
        Constraint::SelfComplement,
        Constraint::Distinctness,
        Constraint::MeltUniformity,
        Constraint::UnintendedMatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constraint::Alphabet => "alphabet",
            Constraint::Homopolymer => "homopolymer",
            Constraint::SelfComplement => "self-complement",
            Constraint::Distinctness => "distinctness",
            Constraint::MeltUniformity => "melt-uniformity",
            Constraint::UnintendedMatch => "unintended-match",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub entry: BitBlock,
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintResult {
    pub constraint: Constraint,
    pub violation: Option<Violation>,
}

impl ConstraintResult {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintReport {
    pub results: Vec<ConstraintResult>,
}

impl ConstraintReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(ConstraintResult::passed)
    }

    pub fn get(&self, c: Constraint) -> &ConstraintResult {
        self.results.iter().find(|r| r.constraint == c).expect("every constraint is reported")
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            match &r.violation {
                None => writeln!(f, "{:<17} pass", r.constraint.name())?,
                Some(v) => writeln!(
                    f,
                    "{:<17} FAIL entry {} offset {}: {}",
                    r.constraint.name(),
                    v.entry,
                    v.offset,
                    v.message
                )?,
            }
        }
        Ok(())
    }
}

/// Start and length of the longest single-base run.
pub fn longest_homopolymer(seq: &[u8]) -> (usize, usize) {
    let (mut best, mut best_at) = (0, 0);
    let mut i = 0;
    while i < seq.len() {
        let mut j = i;
        while j < seq.len() && seq[j] == seq[i] {
            j += 1;
        }
        if j - i > best {
            best = j - i;
            best_at = i;
        }
        i = j;
    }
    (best_at, best)
}

/// Start and length of the longest substring whose reverse complement also
/// occurs in `seq`.
pub fn longest_self_complement(seq: &[u8]) -> (usize, usize) {
    let rc = reverse_complement(seq);
    let mut best = (0, 0);
    for i in 0..seq.len() {
        for j in 0..rc.len() {
            let mut k = 0;
            while i + k < seq.len() && j + k < rc.len() && seq[i + k] == rc[j + k] {
                k += 1;
            }
            if k > best.1 {
                best = (i, k);
            }
        }
    }
    best
}

/// Longest run of positions where `probe` pairs Watson–Crick with the
/// antiparallel `site`. Both have the same length.
pub fn complementary_run(probe: &[u8], site: &[u8]) -> usize {
    let n = probe.len().min(site.len());
    let (mut best, mut cur) = (0, 0);
    for i in 0..n {
        if probe[n - 1 - i] == complement(site[i]) {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// One 15-base stretch of some record strand: either a whole entry or the
/// tail of one entry followed by the head of the entry at the next position.
#[derive(Clone, Debug)]
struct Site {
    first: BitBlock,
    second: Option<BitBlock>,
    offset: usize,
    bases: Vec<u8>,
}

impl Site {
    fn involves(&self, b: &BitBlock) -> bool {
        self.first == *b || self.second.as_ref() == Some(b)
    }
}

fn layout(lib: &BTreeMap<BitBlock, Vec<u8>>) -> Vec<Vec<BitBlock>> {
    let mut by_pos: BTreeMap<(u16, u16), Vec<BitBlock>> = BTreeMap::new();
    for b in lib.keys() {
        by_pos.entry((b.field(), b.bit())).or_default().push(*b);
    }
    by_pos.into_values().collect()
}

fn sites(lib: &BTreeMap<BitBlock, Vec<u8>>) -> Vec<Site> {
    let positions = layout(lib);
    let mut out = Vec::new();
    for (i, here) in positions.iter().enumerate() {
        for a in here {
            out.push(Site { first: *a, second: None, offset: 0, bases: lib[a].clone() });
            if let Some(next) = positions.get(i + 1) {
                for b in next {
                    for off in 1..BLOCK_BASES {
                        let mut bases = lib[a][off..].to_vec();
                        bases.extend_from_slice(&lib[b][..off]);
                        out.push(Site { first: *a, second: Some(*b), offset: off, bases });
                    }
                }
            }
        }
    }
    out
}

/// Longest unintended probe/site match, optionally restricted to pairs in
/// which `focus` is the probe or part of the site.
fn worst_unintended(lib: &BTreeMap<BitBlock, Vec<u8>>, focus: Option<BitBlock>) -> Option<(usize, BitBlock, usize)> {
    let all_sites = sites(lib);
    let mut worst: Option<(usize, BitBlock, usize)> = None;
    for (e, seq) in lib {
        let probe = reverse_complement(seq);
        for site in &all_sites {
            if site.second.is_none() && site.first == *e {
                continue;
            }
            if let Some(f) = &focus {
                if e != f && !site.involves(f) {
                    continue;
                }
            }
            let run = complementary_run(&probe, &site.bases);
            if worst.map_or(true, |(w, _, _)| run > w) {
                worst = Some((run, *e, site.offset));
            }
        }
    }
    worst
}

fn energy_range(lib: &BTreeMap<BitBlock, Vec<u8>>, nn: &NNParams) -> Result<Option<(f64, BitBlock, f64, BitBlock)>> {
    let mut range: Option<(f64, BitBlock, f64, BitBlock)> = None;
    for (b, s) in lib {
        let g = nn.duplex(s)?.dg;
        range = Some(match range {
            None => (g, *b, g, *b),
            Some((lo, lb, hi, hb)) => {
                let (lo, lb) = if g < lo { (g, *b) } else { (lo, lb) };
                let (hi, hb) = if g > hi { (g, *b) } else { (hi, hb) };
                (lo, lb, hi, hb)
            }
        });
    }
    Ok(range)
}

fn check_one(seq: &[u8], block: BitBlock, cfg: &ConstraintConfig) -> Vec<(Constraint, Violation)> {
    let mut out = Vec::new();
    if let Some(i) = seq.iter().position(|c| !cfg.alphabet.contains(c)) {
        out.push((
            Constraint::Alphabet,
            Violation { entry: block, offset: i, message: format!("base {} not allowed", seq[i] as char) },
        ));
    }
    let (at, len) = longest_homopolymer(seq);
    if len > cfg.max_homopolymer {
        out.push((
            Constraint::Homopolymer,
            Violation { entry: block, offset: at, message: format!("run of {len} exceeds {}", cfg.max_homopolymer) },
        ));
    }
    let (at, len) = longest_self_complement(seq);
    if len > cfg.max_self_complement {
        out.push((
            Constraint::SelfComplement,
            Violation {
                entry: block,
                offset: at,
                message: format!("self-complementary stretch of {len} exceeds {}", cfg.max_self_complement),
            },
        ));
    }
    out
}

/// Checks every constraint. Each result names the first violation found.
pub fn check_constraints(lib: &SequenceLibrary, cfg: &ConstraintConfig) -> Result<ConstraintReport> {
    let table: BTreeMap<BitBlock, Vec<u8>> = lib.iter().map(|(b, s)| (*b, s.as_bytes().to_vec())).collect();
    let mut first: BTreeMap<Constraint, Violation> = BTreeMap::new();
    let mut seen: BTreeMap<&[u8], BitBlock> = BTreeMap::new();
    for (b, s) in &table {
        for (c, v) in check_one(s, *b, cfg) {
            first.entry(c).or_insert(v);
        }
        if let Some(prev) = seen.insert(s.as_slice(), *b) {
            first.entry(Constraint::Distinctness).or_insert(Violation {
                entry: *b,
                offset: 0,
                message: format!("same sequence as {prev}"),
            });
        }
    }
    if let Some((lo, lb, hi, hb)) = energy_range(&table, &cfg.nn)? {
        if hi - lo > cfg.melt_uniformity_band {
            first.insert(
                Constraint::MeltUniformity,
                Violation {
                    entry: hb,
                    offset: 0,
                    message: format!(
                        "free energy spread {:.2} between {lb} and {hb} exceeds {:.2}",
                        hi - lo,
                        cfg.melt_uniformity_band
                    ),
                },
            );
        }
    }
    if let Some((run, e, offset)) = worst_unintended(&table, None) {
        if run > cfg.max_unintended_match {
            first.insert(
                Constraint::UnintendedMatch,
                Violation {
                    entry: e,
                    offset,
                    message: format!("probe matches an unintended site over {run} bases (limit {})", cfg.max_unintended_match),
                },
            );
        }
    }
    let results = Constraint::ALL
        .into_iter()
        .map(|c| ConstraintResult { constraint: c, violation: first.remove(&c) })
        .collect();
    Ok(ConstraintReport { results })
}

/// Seeded rejection sampling of one sequence per (field, bit, value).
pub fn generate_library(schema: &Schema, cfg: &ConstraintConfig, seed: u64) -> Result<SequenceLibrary> {
    if cfg.alphabet.is_empty() {
        return Err(Error::Exhausted { constraint: Constraint::Alphabet.name().into() });
    }
    let positions = SequenceLibrary::positions(schema);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections: BTreeMap<Constraint, u64> = BTreeMap::new();
    'restart: for _ in 0..=cfg.max_restarts {
        rejections.clear();
        let mut table: BTreeMap<BitBlock, Vec<u8>> = BTreeMap::new();
        let mut g_range: Option<(f64, f64)> = None;
        for &block in &positions {
            let mut accepted = false;
            for _ in 0..cfg.retry_budget {
                let cand: Vec<u8> =
                    (0..BLOCK_BASES).map(|_| cfg.alphabet[rng.gen_range(0..cfg.alphabet.len())]).collect();
                let mut failed: Vec<Constraint> = check_one(&cand, block, cfg).into_iter().map(|(c, _)| c).collect();
                if table.values().any(|s| *s == cand) {
                    failed.push(Constraint::Distinctness);
                }
                let g = cfg.nn.duplex(&cand)?.dg;
                let (lo, hi) = g_range.map_or((g, g), |(lo, hi)| (lo.min(g), hi.max(g)));
                if hi - lo > cfg.melt_uniformity_band {
                    failed.push(Constraint::MeltUniformity);
                }
                if failed.is_empty() {
                    table.insert(block, cand);
                    match worst_unintended(&table, Some(block)) {
                        Some((run, _, _)) if run > cfg.max_unintended_match => {
                            table.remove(&block);
                            failed.push(Constraint::UnintendedMatch);
                        }
                        _ => {
                            g_range = Some((lo, hi));
                            accepted = true;
                            break;
                        }
                    }
                }
                for c in failed {
                    *rejections.entry(c).or_insert(0) += 1;
                }
            }
            if !accepted {
                continue 'restart;
            }
        }
        let mut lib = SequenceLibrary::new();
        for (b, s) in table {
            lib.insert(b, String::from_utf8(s).expect("alphabet is ASCII"))?;
        }
        return Ok(lib);
    }
    let worst = rejections
        .iter()
        .max_by_key(|(c, n)| (**n, std::cmp::Reverse(**c)))
        .map(|(c, _)| *c)
        .unwrap_or(Constraint::Distinctness);
    Err(Error::Exhausted { constraint: worst.name().into() })
}

/// Counts, for each match length 0..=15, the (probe, strand, offset)
/// alignments whose longest complementary run has that length. A probe's
/// own block site in a strand is not counted.
pub fn mishyb_histogram(lib: &SequenceLibrary, strands: &[String]) -> [u64; BLOCK_BASES + 1] {
    let mut counts = [0u64; BLOCK_BASES + 1];
    let positions: BTreeMap<(u16, u16), usize> = {
        let mut keys: Vec<(u16, u16)> = lib.iter().map(|(b, _)| (b.field(), b.bit())).collect();
        keys.dedup();
        keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect()
    };
    for (e, seq) in lib.iter() {
        let seq = seq.as_bytes();
        let probe = reverse_complement(seq);
        let own = positions[&(e.field(), e.bit())] * BLOCK_BASES;
        for strand in strands {
            let s = strand.as_bytes();
            if s.len() < BLOCK_BASES {
                continue;
            }
            for off in 0..=s.len() - BLOCK_BASES {
                let site = &s[off..off + BLOCK_BASES];
                if off == own && site == seq {
                    continue;
                }
                counts[complementary_run(&probe, site)] += 1;
            }
        }
    }
    counts
}

pub fn format_histogram(h: &[u64]) -> String {
    h.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ThermoStats {
    pub h: Stat,
    pub s: Stat,
    pub g: Stat,
    pub count: usize,
}

fn stat(xs: &[f64]) -> Stat {
    if xs.is_empty() {
        return Stat::default();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Stat { mean, sd: var.sqrt() }
}

/// Mean and population standard deviation of each entry's duplex energy at
/// its intended site.
pub fn thermo_stats(lib: &SequenceLibrary, nn: &NNParams) -> Result<ThermoStats> {
    let mut h = Vec::new();
    let mut s = Vec::new();
    let mut g = Vec::new();
    for (_, seq) in lib.iter() {
        let e = nn.duplex(seq.as_bytes())?;
        h.push(e.dh);
        s.push(e.ds);
        g.push(e.dg);
    }
    Ok(ThermoStats { h: stat(&h), s: stat(&s), g: stat(&g), count: h.len() })
}
