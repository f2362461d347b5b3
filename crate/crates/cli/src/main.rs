use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use tubedb::designer::{
    check_constraints, format_histogram, generate_library, mishyb_histogram, thermo_stats, ConstraintConfig, NNParams,
};
use tubedb::encoding::{encode, render};
use tubedb::machine::format_trace;
use tubedb::query::{compile, parse, run, Catalog, Execution, Query};
use tubedb::{oracle, Row, Schema, SequenceLibrary};

#[derive(Parser)]
#[command(name = "tubedb", version, about = "Relational queries on a simulated DNA tube machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a catalog file from a schema file and CSV data.
    Load {
        #[command(flatten)]
        data: DataArgs,
        /// Catalog output; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a query and write the result as CSV.
    Query {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        query: QueryArgs,
        /// Result CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Flat JSON document of counters and strand statistics.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Render result strands as DNA and add a `dna` column.
        #[arg(long)]
        render_dna: bool,
        /// Seed for the sequence library used by --render-dna.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate the query in memory too and fail on any difference.
        #[arg(long)]
        check_oracle: bool,
    },
    /// Generate a sequence library and report on its constraints.
    Design {
        #[arg(long)]
        schema: PathBuf,
        /// Relation to design for; the first in the schema file if omitted.
        #[arg(long)]
        relation: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows to render for the mishybridization histogram.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Replacement nearest-neighbor table.
        #[arg(long)]
        nn: Option<PathBuf>,
        /// Library output; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the instruction trace of a query.
    Trace {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Existing catalog file.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Schema file, one relation per line.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// CSV data for one relation, as NAME=FILE. Repeatable.
    #[arg(long = "data", value_name = "NAME=FILE")]
    data: Vec<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct QueryArgs {
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    query_file: Option<PathBuf>,
}

#[derive(Debug)]
struct OracleMismatch(String);

impl fmt::Display for OracleMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tube result differs from the oracle: {}", self.0)
    }
}

impl std::error::Error for OracleMismatch {}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build_catalog(args: &DataArgs) -> anyhow::Result<Catalog> {
    let mut cat = match &args.catalog {
        Some(p) => Catalog::from_json(&read(p)?)?,
        None => Catalog::new(),
    };
    if args.data.is_empty() {
        if args.catalog.is_none() {
            bail!(tubedb::Error::Data("no relations given; use --catalog or --schema with --data".into()));
        }
        return Ok(cat);
    }
    let schema_path = args
        .schema
        .as_ref()
        .ok_or_else(|| tubedb::Error::Data("--data needs --schema".into()))?;
    let schemas: BTreeMap<String, Schema> =
        Schema::parse_file(&read(schema_path)?)?.into_iter().map(|s| (s.name.clone(), s)).collect();
    for spec in &args.data {
        let (name, file) =
            spec.split_once('=').ok_or_else(|| tubedb::Error::Data(format!("--data {spec:?} is not NAME=FILE")))?;
        let schema = schemas
            .get(name)
            .ok_or_else(|| tubedb::Error::Schema(format!("unknown relation {name} in {}", schema_path.display())))?;
        let rows = schema.read_csv(&read(Path::new(file))?)?;
        cat.insert(schema.clone(), rows)?;
    }
    Ok(cat)
}

fn query_text(q: &QueryArgs) -> anyhow::Result<Query> {
    let text = match (&q.query, &q.query_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => read(p)?,
        (None, None) => unreachable!("clap requires one of the query flags"),
    };
    Ok(parse(&text)?)
}

fn execute(cat: &Catalog, q: &Query) -> anyhow::Result<Execution> {
    let plan = compile(q, cat)?;
    Ok(run(&plan, cat)?)
}

fn metrics(ex: &Execution, dna_bases: Option<u64>) -> BTreeMap<String, u64> {
    let counts = ex.total();
    let mut out = counts.to_map();
    let strands = ex.machine.read_all(&ex.tube);
    let total_blocks: u64 = strands.iter().map(|(s, k)| s.len() as u64 * k).sum();
    out.insert("strands".into(), strands.iter().map(|(_, k)| k).sum());
    out.insert("max_strand_blocks".into(), strands.iter().map(|(s, _)| s.len() as u64).max().unwrap_or(0));
    out.insert("dna_bases_total".into(), dna_bases.unwrap_or(15 * total_blocks));
    out
}

fn cmd_query(
    data: &DataArgs,
    query: &QueryArgs,
    out: Option<&Path>,
    metrics_path: Option<&Path>,
    render_dna: bool,
    seed: u64,
    check_oracle: bool,
) -> anyhow::Result<()> {
    let cat = build_catalog(data)?;
    let q = query_text(query)?;
    let (ex, expected) = if check_oracle {
        std::thread::scope(|s| {
            let reference = s.spawn(|| oracle::eval(&q, &cat));
            let ex = execute(&cat, &q);
            (ex, Some(reference.join()))
        })
    } else {
        (execute(&cat, &q), None)
    };
    let ex = ex?;
    if let Some(joined) = expected {
        let want = joined.map_err(|_| anyhow!("oracle thread panicked"))??;
        if want.rows != ex.relation.rows {
            let missing: Vec<&Row> = want.rows.difference(&ex.relation.rows).collect();
            let extra: Vec<&Row> = ex.relation.rows.difference(&want.rows).collect();
            bail!(OracleMismatch(format!("missing {missing:?}, unexpected {extra:?}")));
        }
    }
    let schema = &ex.relation.schema;
    let mut csv = schema.write_csv(ex.relation.rows.iter());
    let mut dna_bases = None;
    if render_dna {
        let lib = generate_library(schema, &ConstraintConfig::default(), seed)?;
        let mut lines = csv.lines();
        let mut with_dna = format!("{},dna\n", lines.next().unwrap_or_default());
        for (line, row) in lines.zip(&ex.relation.rows) {
            with_dna.push_str(&format!("{line},{}\n", render(&encode(row, schema), &lib)?));
        }
        csv = with_dna;
        let mut bases = 0u64;
        for (strand, k) in ex.machine.read_all(&ex.tube) {
            bases += render(&strand, &lib)?.len() as u64 * k;
        }
        dna_bases = Some(bases);
    }
    write_or_print(out, &csv)?;
    if let Some(p) = metrics_path {
        let doc = serde_json::to_string_pretty(&metrics(&ex, dna_bases))?;
        fs::write(p, doc + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn cmd_design(
    schema_path: &Path,
    relation: Option<&str>,
    seed: u64,
    data: Option<&Path>,
    nn: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let schemas = Schema::parse_file(&read(schema_path)?)?;
    let schema = match relation {
        Some(name) => schemas
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| tubedb::Error::Schema(format!("unknown relation {name}")))?,
        None => schemas.first().ok_or_else(|| tubedb::Error::Schema("schema file is empty".into()))?,
    };
    let mut cfg = ConstraintConfig::default();
    if let Some(p) = nn {
        cfg.nn = NNParams::parse(&read(p)?)?;
    }
    let lib: SequenceLibrary = generate_library(schema, &cfg, seed)?;
    let report = check_constraints(&lib, &cfg)?;
    let rows: Vec<Row> = match data {
        Some(p) => schema.read_csv(&read(p)?)?,
        None => {
            let widths = schema.widths();
            let low = Row(vec![0; widths.len()]);
            let high = Row(widths.iter().map(|&w| if w == 64 { u64::MAX } else { (1u64 << w) - 1 }).collect());
            vec![low, high]
        }
    };
    let strands: Vec<String> = rows.iter().map(|r| render(&encode(r, schema), &lib)).collect::<Result<_, _>>()?;
    let hist = mishyb_histogram(&lib, &strands);
    let stats = thermo_stats(&lib, &cfg.nn)?;
    write_or_print(out, &lib.to_text())?;
    let mut summary = String::new();
    summary.push_str(&report.to_string());
    summary.push_str(&format!("histogram {}\n", format_histogram(&hist)));
    summary.push_str(&format!(
        "dH mean {:.3} sd {:.3}; dS mean {:.3} sd {:.3}; dG mean {:.3} sd {:.3}\n",
        stats.h.mean, stats.h.sd, stats.s.mean, stats.s.sd, stats.g.mean, stats.g.sd
    ));
    if out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(())
}

fn cmd_trace(data: &DataArgs, query: &QueryArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let cat = build_catalog(data)?;
    let ex = execute(&cat, &query_text(query)?)?;
    let trace = ex.machine.trace();
    let mut text = String::new();
    for node in &ex.nodes {
        text.push_str(&format!("# {} {}: {}\n", node.operator, node.node, node.counts));
        text.push_str(&format_trace(&trace[node.trace.clone()]));
    }
    write_or_print(out, &text)
}

fn run_cli(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Load { data, out } => {
            let cat = build_catalog(&data)?;
            write_or_print(out.as_deref(), &(cat.to_json() + "\n"))
        }
        Command::Query { data, query, out, metrics, render_dna, seed, check_oracle } => {
            cmd_query(&data, &query, out.as_deref(), metrics.as_deref(), render_dna, seed, check_oracle)
        }
        Command::Design { schema, relation, seed, data, nn, out } => {
            cmd_design(&schema, relation.as_deref(), seed, data.as_deref(), nn.as_deref(), out.as_deref())
        }
        Command::Trace { data, query, out } => cmd_trace(&data, &query, out.as_deref()),
    }
}

/// Failure class and exit status.
fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    if e.downcast_ref::<OracleMismatch>().is_some() {
        return ("oracle", 6);
    }
    if e.downcast_ref::<tubedb::query::ParseError>().is_some() {
        return ("parse", 2);
    }
    if let Some(err) = e.downcast_ref::<tubedb::Error>() {
        return match err.root() {
            tubedb::Error::Parse(_) => ("parse", 2),
            tubedb::Error::Schema(_) => ("schema", 3),
            tubedb::Error::Machine(_) | tubedb::Error::Precondition(_) | tubedb::Error::Malformed(_) => ("machine", 4),
            _ => ("data", 5),
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return ("io", 5);
    }
    ("error", 1)
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = classify(&e);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("tubedb ({class}): {msg}");
            ExitCode::from(code)
        }
    }
}
