#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use tubedb::machine::{Instruction, MachineError, Outcome};
use tubedb::oracle::{Comparator, Operand, Predicate};
use tubedb::query::{Catalog, JoinRhs, Query};
use tubedb::encoding::{decode_set, load_relation, SequenceLibrary, BLOCK_BASES};
use tubedb::relalg::{self, Input, ProgramReport};
use tubedb::{BitBlock, Counts, Machine, Opcode, Relation, Row, Schema, Strand, Tube};

pub fn schema(name: &str, widths: &[u16]) -> Schema {
    let names: Vec<String> = (0..widths.len()).map(|i| format!("c{i}")).collect();
    let fields: Vec<(&str, u16)> = names.iter().map(String::as_str).zip(widths.iter().copied()).collect();
    Schema::new(name, &fields, 0).unwrap()
}

pub fn random_widths(rng: &mut impl Rng, max_fields: usize, max_width: u16) -> Vec<u16> {
    let n = rng.gen_range(1..=max_fields);
    (0..n).map(|_| rng.gen_range(1..=max_width)).collect()
}

pub fn random_row(rng: &mut impl Rng, widths: &[u16]) -> Row {
    Row(widths.iter().map(|&w| rng.gen_range(0..(1u64 << w))).collect())
}

/// Distinct rows, in random order.
pub fn random_rows(rng: &mut impl Rng, widths: &[u16], max_rows: usize) -> Vec<Row> {
    let target = rng.gen_range(0..=max_rows);
    let space: u64 = widths.iter().map(|&w| 1u64 << w).product();
    let target = target.min(space as usize);
    let mut set = BTreeSet::new();
    while set.len() < target {
        set.insert(random_row(rng, widths));
    }
    let mut rows: Vec<Row> = set.into_iter().collect();
    rows.shuffle(rng);
    rows
}

/// Rows of `widths`, drawn partly from `pool` (the first columns sharing
/// its widths) so that set operations have overlap.
pub fn overlapping_rows(rng: &mut impl Rng, widths: &[u16], pool: &[Row], max_rows: usize) -> Vec<Row> {
    let pool: BTreeSet<&Row> = pool.iter().collect();
    let mut rows: Vec<Row> = pool.into_iter().filter(|_| rng.gen_bool(0.5)).take(max_rows).cloned().collect();
    let extra = random_rows(rng, widths, max_rows);
    for r in extra {
        if rows.len() >= max_rows {
            break;
        }
        if !rows.contains(&r) {
            rows.push(r);
        }
    }
    rows.shuffle(rng);
    rows
}

pub fn random_comparator(rng: &mut impl Rng) -> Comparator {
    *Comparator::ALL.choose(rng).unwrap()
}

pub fn random_const_predicate(rng: &mut impl Rng, widths: &[u16]) -> Predicate {
    let col = rng.gen_range(0..widths.len());
    let c = rng.gen_range(0..(1u64 << widths[col]));
    Predicate { col, cmp: random_comparator(rng), rhs: Operand::Const(c) }
}

pub fn random_predicate(rng: &mut impl Rng, widths: &[u16]) -> Predicate {
    if rng.gen_bool(0.5) {
        random_const_predicate(rng, widths)
    } else {
        let col = rng.gen_range(0..widths.len());
        Predicate { col, cmp: random_comparator(rng), rhs: Operand::Field(rng.gen_range(0..widths.len())) }
    }
}

pub fn random_strand(rng: &mut impl Rng) -> Strand {
    let len = rng.gen_range(0..=4);
    Strand::new(
        (0..len).map(|_| BitBlock::new(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_bool(0.5))).collect(),
    )
}

pub const TUBE_NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

/// A machine with random initial contents in some of the named tubes.
pub fn random_machine(rng: &mut impl Rng) -> Machine {
    let mut m = Machine::new();
    for name in TUBE_NAMES {
        if rng.gen_bool(0.6) {
            let mut t = Tube::new();
            for _ in 0..rng.gen_range(0..5) {
                t.insert(random_strand(rng), rng.gen_range(1..=3));
            }
            m.place(name, t);
        }
    }
    m
}

fn name(rng: &mut impl Rng) -> String {
    TUBE_NAMES.choose(rng).unwrap().to_string()
}

fn block(rng: &mut impl Rng) -> BitBlock {
    BitBlock::new(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_bool(0.5))
}

pub fn random_instruction(rng: &mut impl Rng) -> Instruction {
    match rng.gen_range(0..8) {
        0 => Instruction::Extract { src: name(rng), probe: block(rng), plus: name(rng), minus: name(rng) },
        1 => {
            let k = rng.gen_range(0..=3);
            Instruction::Merge { dst: name(rng), srcs: (0..k).map(|_| name(rng)).collect() }
        }
        2 => Instruction::Detect { tube: name(rng) },
        3 => Instruction::Discard { tube: name(rng) },
        4 => Instruction::Amplify { src: name(rng), copy1: name(rng), copy2: name(rng) },
        5 => Instruction::Append { tube: name(rng), block: block(rng) },
        6 => Instruction::AppendHead { tube: name(rng), block: block(rng) },
        _ => Instruction::Read { tube: name(rng) },
    }
}

fn contents(m: &Machine, name: &str) -> Tube {
    m.tube(name).unwrap_or_default()
}

fn union_of(tubes: impl IntoIterator<Item = Tube>) -> Tube {
    let mut out = Tube::new();
    for t in tubes {
        out.absorb(t);
    }
    out
}

/// Checks one executed instruction against the before/after states.
pub fn check_step(before: &Machine, after: &Machine, instr: &Instruction, out: &Result<Outcome, MachineError>) -> Result<(), String> {
    let err = |msg: String| Err(format!("{instr:?}: {msg}"));
    match out {
        Err(e) => {
            if before != after {
                return err("a faulting instruction changed the machine".into());
            }
            if e.index != before.trace().len() {
                return err(format!("fault index {} but trace length {}", e.index, before.trace().len()));
            }
            return Ok(());
        }
        Ok(outcome) => {
            if after.trace().len() != before.trace().len() + 1 {
                return err("trace did not grow by one".into());
            }
            let expected = {
                let mut c = before.counts();
                c[instr.opcode()] += instr.weight();
                c
            };
            if after.counts() != expected {
                return err(format!("counters {} but expected {}", after.counts(), expected));
            }
            match (instr, outcome) {
                (Instruction::Extract { src, probe, plus, minus }, Outcome::Done) => {
                    let src_before = contents(before, src);
                    let (p, q) = (contents(after, plus), contents(after, minus));
                    if union_of([p.clone(), q.clone()]) != src_before {
                        return err("extract does not partition its source".into());
                    }
                    if p.iter().any(|(s, _)| !s.contains(probe)) || q.iter().any(|(s, _)| s.contains(probe)) {
                        return err("extract sorted a strand to the wrong side".into());
                    }
                }
                (Instruction::Merge { dst, srcs }, Outcome::Done) => {
                    let mut names: Vec<&String> = srcs.iter().collect();
                    names.sort();
                    names.dedup();
                    let mut expected = union_of(names.iter().map(|n| contents(before, n)));
                    if !srcs.contains(dst) {
                        expected.absorb(contents(before, dst));
                    }
                    if contents(after, dst) != expected {
                        return err("merge lost or invented strands".into());
                    }
                    for s in srcs.iter().filter(|s| *s != dst) {
                        if !contents(after, s).is_empty() {
                            return err(format!("merge source {s} not emptied"));
                        }
                    }
                }
                (Instruction::Amplify { src, copy1, copy2 }, Outcome::Done) => {
                    let b = contents(before, src);
                    if contents(after, copy1) != b || contents(after, copy2) != b {
                        return err("amplify copies differ from the source".into());
                    }
                    if !contents(after, src).is_empty() {
                        return err("amplify left its source non-empty".into());
                    }
                }
                (Instruction::Detect { tube }, Outcome::Detected(d)) => {
                    if *d == contents(before, tube).is_empty() {
                        return err("detect disagrees with the contents".into());
                    }
                }
                (Instruction::Discard { tube }, Outcome::Done) => {
                    if !after.is_discarded(tube) {
                        return err("discarded tube is still live".into());
                    }
                }
                (Instruction::Append { tube, block } | Instruction::AppendHead { tube, block }, Outcome::Done) => {
                    let head = matches!(instr, Instruction::AppendHead { .. });
                    let mut expected = Tube::new();
                    for (s, k) in contents(before, tube).iter() {
                        let mut blocks = s.blocks().to_vec();
                        if head {
                            blocks.insert(0, *block);
                        } else {
                            blocks.push(*block);
                        }
                        expected.insert(Strand::new(blocks), k);
                    }
                    if contents(before, tube).is_empty() {
                        expected.insert(Strand::new(vec![*block]), 1);
                    }
                    if contents(after, tube) != expected {
                        return err("append did not extend every strand".into());
                    }
                }
                (Instruction::Read { tube }, Outcome::Read(s)) => {
                    if contents(before, tube).multiplicity(s) == 0 {
                        return err("read returned a strand not in the tube".into());
                    }
                    if before.tube(tube) != after.tube(tube) {
                        return err("read changed the tube".into());
                    }
                }
                (i, o) => return err(format!("unexpected outcome {o:?} for {}", i.opcode())),
            }
        }
    }
    let total_before: u64 = before.live_tubes().map(|(_, t)| t.len()).sum();
    let total_after: u64 = after.live_tubes().map(|(_, t)| t.len()).sum();
    let conserving = matches!(instr, Instruction::Extract { .. } | Instruction::Merge { .. } | Instruction::Read { .. } | Instruction::Detect { .. });
    if conserving && total_before != total_after {
        return err(format!("strand total changed from {total_before} to {total_after}"));
    }
    Ok(())
}

/// Runs a sequence, checking every step, determinism, and trace soundness.
pub fn check_program(start: &Machine, program: &[Instruction]) -> Result<(), String> {
    let mut m = start.clone();
    let mut succeeded = Vec::new();
    for instr in program {
        let before = m.clone();
        let out = m.execute(instr.clone());
        check_step(&before, &m, instr, &out)?;
        if out.is_ok() {
            succeeded.push(instr.clone());
        }
    }
    let mut again = start.clone();
    for instr in program {
        let _ = again.execute(instr.clone());
    }
    if again != m {
        return Err("re-running the same program gave a different machine".into());
    }
    let report = m.report();
    if report.replayed_counts() != m.counts() - start.counts() {
        return Err("trace replay disagrees with the counters".into());
    }
    let logged: Vec<Instruction> = report.trace.iter().map(|e| e.instruction.clone()).collect();
    if logged != succeeded {
        return Err("trace does not list exactly the successful instructions".into());
    }
    let parsed = tubedb::machine::parse_trace(&tubedb::machine::format_trace(&report.trace))?;
    if parsed != succeeded {
        return Err("formatted trace does not parse back to the same program".into());
    }
    let mut replay = start.clone();
    for i in &parsed {
        replay.execute(i.clone()).map_err(|e| format!("replay faulted: {e}"))?;
    }
    if replay.counts() != m.counts() {
        return Err("replaying the trace gave different counters".into());
    }
    Ok(())
}

pub fn sum_counts(cs: &[Counts]) -> Counts {
    cs.iter().copied().sum()
}

pub fn opcode_total(c: &Counts, ops: &[Opcode]) -> u64 {
    ops.iter().map(|&o| c[o]).sum()
}

/// A catalog of up to three small relations named r0, r1, r2.
pub fn random_catalog(rng: &mut impl Rng) -> Catalog {
    let mut cat = Catalog::new();
    let shared = random_widths(rng, 2, 3);
    let mut pool: Vec<Row> = Vec::new();
    for i in 0..3 {
        let widths = if i < 2 || rng.gen_bool(0.3) { shared.clone() } else { random_widths(rng, 2, 3) };
        let rows = if widths == shared { overlapping_rows(rng, &widths, &pool, 5) } else { random_rows(rng, &widths, 5) };
        if widths == shared {
            pool.extend(rows.iter().cloned());
        }
        let names: Vec<String> = (0..widths.len()).map(|k| format!("f{i}{k}")).collect();
        let fields: Vec<(&str, u16)> = names.iter().map(String::as_str).zip(widths.iter().copied()).collect();
        cat.insert(Schema::new(&format!("r{i}"), &fields, 0).unwrap(), rows).unwrap();
    }
    cat
}

/// A random query over the catalog. The result may fail to compile; callers
/// retry.
pub fn random_query(rng: &mut impl Rng, cat: &Catalog, depth: u32) -> Query {
    let names: Vec<&String> = cat.relations.keys().collect();
    if depth == 0 || rng.gen_bool(0.3) {
        return Query::Relation(names.choose(rng).unwrap().to_string());
    }
    let sub = |rng: &mut _| Box::new(random_query(rng, cat, depth - 1));
    let fields = |q: &Query| -> Vec<String> {
        tubedb::query::compile(q, cat).map(|p| p.schema.fields.iter().map(|f| f.name.clone()).collect()).unwrap_or_default()
    };
    match rng.gen_range(0..8) {
        0 => Query::Union(sub(rng), sub(rng)),
        1 => Query::Intersect(sub(rng), sub(rng)),
        2 => Query::Diff(sub(rng), sub(rng)),
        3 => Query::Product(sub(rng), sub(rng)),
        4 => Query::Divide(sub(rng), sub(rng)),
        5 => {
            let input = sub(rng);
            let fs = fields(&input);
            let field = fs.choose(rng).cloned().unwrap_or_else(|| "missing".into());
            Query::Select { input, field, cmp: random_comparator(rng), value: rng.gen_range(0..8) }
        }
        6 => {
            let input = sub(rng);
            let mut fs = fields(&input);
            fs.shuffle(rng);
            let k = rng.gen_range(1..=fs.len().max(1));
            fs.truncate(k);
            Query::Project { input, fields: fs }
        }
        _ => {
            let (left, right) = (sub(rng), sub(rng));
            let q = Query::Product(left.clone(), right.clone());
            let fs = fields(&q);
            let field = fs.choose(rng).cloned().unwrap_or_else(|| "missing".into());
            let rhs = if rng.gen_bool(0.5) {
                JoinRhs::Field(fs.choose(rng).cloned().unwrap_or_else(|| "missing".into()))
            } else {
                JoinRhs::Const(rng.gen_range(0..4))
            };
            Query::Join { left, right, field, cmp: random_comparator(rng), rhs }
        }
    }
}

/// A random query that compiles against the catalog.
pub fn random_valid_query(rng: &mut impl Rng, cat: &Catalog, depth: u32) -> Query {
    loop {
        let q = random_query(rng, cat, depth);
        if tubedb::query::compile(&q, cat).is_ok() {
            return q;
        }
    }
}

pub const OPERATORS: [&str; 8] =
    ["union", "intersection", "difference", "projection", "selection", "product", "theta_join", "division"];

/// One randomized operator run: the decoded tube result, the oracle's
/// answer, and the program's report.
pub struct Instance {
    pub label: String,
    pub got: BTreeSet<Row>,
    pub want: BTreeSet<Row>,
    pub report: ProgramReport,
}

pub struct Limits {
    pub max_fields: usize,
    pub max_width: u16,
    pub max_rows: usize,
}

pub const SWEEP: Limits = Limits { max_fields: 3, max_width: 6, max_rows: 8 };

fn load(m: &mut Machine, name: &str, s: &Schema, rows: &[Row]) -> Result<(), String> {
    load_relation(m, name, rows, s).map_err(|e| e.to_string())
}

fn rel(s: &Schema, rows: &[Row]) -> Relation {
    Relation::new(s.clone(), rows.iter().cloned()).unwrap()
}

fn decoded(m: &Machine, tube: &str, s: &Schema) -> Result<BTreeSet<Row>, String> {
    decode_set(m, tube, s).map_err(|e| e.to_string())
}

/// Dividend and divisor with some A-tuples paired with the whole divisor.
pub fn division_instance(rng: &mut impl Rng, max_w: usize, max_z: usize, max_width: u16, max_rows: usize) -> (Schema, Vec<Row>, Schema, Vec<Row>) {
    let a_widths = random_widths(rng, max_w, max_width);
    let b_widths = random_widths(rng, max_z, max_width);
    let divisor = random_rows(rng, &b_widths, 3.min(max_rows));
    let mut set: BTreeSet<Row> = BTreeSet::new();
    for a in random_rows(rng, &a_widths, 3) {
        let full = rng.gen_bool(0.6);
        for b in &divisor {
            if set.len() < max_rows && (full || rng.gen_bool(0.5)) {
                let mut v = a.0.clone();
                v.extend_from_slice(&b.0);
                set.insert(Row(v));
            }
        }
    }
    let all: Vec<u16> = a_widths.iter().chain(&b_widths).copied().collect();
    for r in random_rows(rng, &all, 2) {
        if set.len() < max_rows {
            set.insert(r);
        }
    }
    let mut dividend: Vec<Row> = set.into_iter().collect();
    dividend.shuffle(rng);
    let s3 = schema("r3", &all);
    let s4 = Schema { name: "r4".into(), ..s3.project(&(a_widths.len()..all.len()).collect::<Vec<_>>(), "r4") };
    (s3, dividend, s4, divisor)
}

pub fn run_operator(op: &str, rng: &mut impl Rng, lim: &Limits) -> Result<Instance, String> {
    let mut m = Machine::new();
    let widths = random_widths(rng, lim.max_fields, lim.max_width);
    let s = schema("x", &widths);
    let xs = random_rows(rng, &widths, lim.max_rows);
    let label = |extra: String| format!("{op} widths={widths:?} {extra}");
    match op {
        "union" | "intersection" | "difference" => {
            let ys = overlapping_rows(rng, &widths, &xs, lim.max_rows);
            let sy = Schema { name: "y".into(), ..s.clone() };
            load(&mut m, "X", &s, &xs)?;
            load(&mut m, "Y", &sy, &ys)?;
            let (x, y) = (Input { tube: "X", schema: &s, rows: &xs }, Input { tube: "Y", schema: &sy, rows: &ys });
            let (t, report) = match op {
                "union" => relalg::union_prog(&mut m, x, y),
                "intersection" => relalg::intersection_prog(&mut m, x, y),
                _ => relalg::difference_prog(&mut m, x, y),
            }
            .map_err(|e| e.to_string())?;
            let (rx, ry) = (rel(&s, &xs), rel(&sy, &ys));
            let want = match op {
                "union" => rx.union(&ry),
                "intersection" => rx.intersect(&ry),
                _ => rx.difference(&ry),
            }
            .unwrap()
            .rows;
            if decoded(&m, "X", &s)? != rx.rows || decoded(&m, "Y", &sy)? != ry.rows {
                return Err(label("input tubes not restored".into()));
            }
            Ok(Instance { label: label(format!("x={xs:?} y={ys:?}")), got: decoded(&m, &t, &s)?, want, report })
        }
        "projection" => {
            let mut cols: Vec<usize> = (0..widths.len()).collect();
            cols.shuffle(rng);
            cols.truncate(rng.gen_range(1..=widths.len()));
            load(&mut m, "R", &s, &xs)?;
            let (t, ps, report) =
                relalg::projection_prog(&mut m, Input { tube: "R", schema: &s, rows: &xs }, &cols).map_err(|e| e.to_string())?;
            let want = rel(&s, &xs).project(&cols).unwrap().rows;
            Ok(Instance { label: label(format!("cols={cols:?} rows={xs:?}")), got: decoded(&m, &t, &ps)?, want, report })
        }
        "selection" => {
            let pred = random_const_predicate(rng, &widths);
            let Operand::Const(c) = pred.rhs else { unreachable!() };
            load(&mut m, "R", &s, &xs)?;
            let (res, report) = relalg::selection_prog(&mut m, "R", &s, pred.col, c).map_err(|e| e.to_string())?;
            let r = rel(&s, &xs);
            let mut got = BTreeSet::new();
            let mut want = BTreeSet::new();
            // Tag rows by comparator so all six outputs are compared at once.
            for (k, cmp) in Comparator::ALL.into_iter().enumerate() {
                let p = Predicate { cmp, ..pred };
                for row in decoded(&m, res.get(cmp), &s)? {
                    got.insert(Row([vec![k as u64], row.0].concat()));
                }
                for row in r.select(&p).unwrap().rows {
                    want.insert(Row([vec![k as u64], row.0].concat()));
                }
            }
            Ok(Instance { label: label(format!("col={} c={c} rows={xs:?}", pred.col)), got, want, report })
        }
        "product" => {
            let w2 = random_widths(rng, lim.max_fields, lim.max_width);
            let s2 = schema("y", &w2);
            let ys = random_rows(rng, &w2, lim.max_rows);
            load(&mut m, "A", &s, &xs)?;
            load(&mut m, "B", &s2, &ys)?;
            let (t, ps, report) =
                relalg::product_two_relations(&mut m, "A", &s, xs.len(), Input { tube: "B", schema: &s2, rows: &ys })
                    .map_err(|e| e.to_string())?;
            let want = rel(&s, &xs).product(&rel(&s2, &ys)).rows;
            if decoded(&m, "B", &s2)? != rel(&s2, &ys).rows {
                return Err(label("right input not restored".into()));
            }
            Ok(Instance { label: label(format!("w2={w2:?} x={xs:?} y={ys:?}")), got: decoded(&m, &t, &ps)?, want, report })
        }
        "theta_join" => {
            let w2 = random_widths(rng, lim.max_fields, lim.max_width);
            let s2 = schema("y", &w2);
            let ys = random_rows(rng, &w2, lim.max_rows);
            let joined: Vec<u16> = widths.iter().chain(&w2).copied().collect();
            let pred = random_predicate(rng, &joined);
            let (t, js, report) = relalg::theta_join_prog(&mut m, (&s, &xs), (&s2, &ys), &pred).map_err(|e| e.to_string())?;
            let want = rel(&s, &xs).theta_join(&rel(&s2, &ys), &pred).unwrap().rows;
            Ok(Instance { label: label(format!("w2={w2:?} pred={pred:?} x={xs:?} y={ys:?}")), got: decoded(&m, &t, &js)?, want, report })
        }
        "division" => {
            let max_w = lim.max_fields.saturating_sub(1).max(1);
            let (s3, r3, s4, r4) = division_instance(rng, max_w, lim.max_fields - max_w, lim.max_width, lim.max_rows);
            let (t, qs, report) = relalg::division_prog(&mut m, (&s3, &r3), (&s4, &r4)).map_err(|e| e.to_string())?;
            let want = rel(&s3, &r3).divide(&rel(&s4, &r4)).unwrap().rows;
            Ok(Instance { label: format!("division r3={r3:?} r4={r4:?}"), got: decoded(&m, &t, &qs)?, want, report })
        }
        other => Err(format!("unknown operator {other}")),
    }
}

/// Longest run of positions where the probe's target (the value sequence
/// itself) equals the window, scanning every position pair directly.
fn naive_run(target: &[u8], window: &[u8]) -> usize {
    let mut best = 0;
    for start in 0..target.len() {
        let mut k = 0;
        while start + k < target.len() && target[start + k] == window[start + k] {
            k += 1;
        }
        best = best.max(k);
    }
    best
}

/// Brute-force histogram in equality form: a probe pairs with a window
/// exactly where the window equals the probe's target.
pub fn naive_histogram(lib: &SequenceLibrary, strands: &[String]) -> [u64; 16] {
    let mut h = [0u64; 16];
    let mut positions: Vec<(u16, u16)> = lib.iter().map(|(b, _)| (b.field(), b.bit())).collect();
    positions.dedup();
    for (e, seq) in lib.iter() {
        let own = positions.iter().position(|&p| p == (e.field(), e.bit())).unwrap() * BLOCK_BASES;
        for s in strands {
            let s = s.as_bytes();
            for off in 0..s.len().saturating_sub(BLOCK_BASES - 1) {
                let w = &s[off..off + BLOCK_BASES];
                if off == own && w == seq.as_bytes() {
                    continue;
                }
                h[naive_run(seq.as_bytes(), w)] += 1;
            }
        }
    }
    h
}

