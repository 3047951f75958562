//! `cqa`: classify tree queries, decide certain answers, run the repair
//! oracle, print frugal repairs and generate reduction instances.
//!
//! Every command prints a `key=value` report whose last line is the timing.
//! `certain` and `oracle` exit with 0 when the answer is certain, 1 when it is
//! not, and 2 on any error.

mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use cqa_core::classification::{classify_graph, classify_tree, graph_record, tree_record, Record};
use cqa_core::engine::{certain_with, frugal_repair, Method};
use cqa_core::gadgets::{fig5_instance, reach_gadget, sat_gadget, sjf_lift, Digraph, MonotoneCnf};
use cqa_core::homomorphism::HomTable;
use cqa_core::oracle::{first_falsifying_repair, DEFAULT_CAP};
use cqa_core::{Database, GraphQuery, TreeQuery, Vertex};

#[derive(Parser)]
#[command(name = "cqa", version, about = "Consistent query answering for rooted tree queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a query and report the pair conditions.
    Classify {
        /// Query text, or a path to a file holding it.
        query: String,
        /// Read the query as a list of atoms instead of a tree.
        #[arg(long)]
        graph: bool,
    },
    /// Decide whether every repair of the database satisfies the query.
    Certain {
        query: String,
        db: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
        method: MethodArg,
        /// Run a method even if the query violates its precondition.
        #[arg(long)]
        force: bool,
        /// Largest number of repairs the oracle may enumerate.
        #[arg(long, env = "CQA_ORACLE_CAP", default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
    /// Decide certainty by enumerating all repairs.
    Oracle {
        query: String,
        db: PathBuf,
        #[arg(long)]
        graph: bool,
        #[arg(long, env = "CQA_ORACLE_CAP", default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
    /// Print the frugal repair and whether it satisfies the query.
    Frugal { query: String, db: PathBuf },
    /// Generate a reduction instance or the example database.
    Gadget {
        #[command(subcommand)]
        kind: GadgetCmd,
    },
    /// Run the invariant suite on seeded corpora.
    Selftest {
        #[arg(long, default_value_t = selftest::DEFAULT_SEED)]
        seed: u64,
        /// Fuzzed query/database pairs per differential check.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
    },
}

#[derive(Subcommand)]
enum GadgetCmd {
    /// Monotone SAT reduction for a query violating C2.
    Sat {
        #[arg(long)]
        query: String,
        /// Formula such as `(x1|x2)&(~x1|~x2)`.
        #[arg(long)]
        cnf: String,
        /// Witness pair as `x1/x4`; found automatically when omitted.
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reachability reduction for a query with a root-hom-violating ancestor pair.
    Reach {
        #[arg(long)]
        query: String,
        /// Edges such as `s>a,a>t`; the source is `s` and the target `t`.
        #[arg(long)]
        edges: String,
        #[arg(long)]
        pair: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// The example database for `C(R(A,B),R(B,A))`.
    Fig5 {
        #[arg(long)]
        out: PathBuf,
    },
    /// Lift an instance of the self-join-free version to the query itself.
    SjfLift {
        /// Query as a list of atoms.
        #[arg(long)]
        query: String,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Fixpoint,
    Forward,
    Oracle,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Auto => Method::Auto,
            MethodArg::Fixpoint => Method::Fixpoint,
            MethodArg::Forward => Method::Forward,
            MethodArg::Oracle => Method::Oracle,
        }
    }
}

/// What a command produced: its report and the exit code.
struct Outcome {
    record: Record,
    code: u8,
}

fn sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads the argument as a file when such a file exists, otherwise uses it verbatim.
fn query_text(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        fs::read_to_string(path).with_context(|| format!("reading {arg}"))
    } else {
        Ok(arg.to_string())
    }
}

fn load_tree(arg: &str, rec: &mut Record) -> Result<TreeQuery> {
    let text = query_text(arg)?;
    rec.push("query.sha256", sha256(text.trim().as_bytes()));
    TreeQuery::parse(&text).with_context(|| format!("parsing query `{}`", text.trim()))
}

fn load_graph(arg: &str, rec: &mut Record) -> Result<GraphQuery> {
    let text = query_text(arg)?;
    rec.push("query.sha256", sha256(text.trim().as_bytes()));
    GraphQuery::parse(&text).with_context(|| format!("parsing query `{}`", text.trim()))
}

fn load_db(path: &Path, rec: &mut Record) -> Result<Database> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    rec.push("db.sha256", sha256(&bytes));
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    Database::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn vertex_pair(q: &TreeQuery, text: &str) -> Result<(Vertex, Vertex)> {
    let (a, b) = text
        .split_once('/')
        .ok_or_else(|| anyhow!("pair `{text}` should look like x1/x4"))?;
    let find = |n: &str| {
        q.vertex_by_name(n.trim())
            .ok_or_else(|| anyhow!("no vertex named `{n}`"))
    };
    Ok((find(a)?, find(b)?))
}

fn vertex_name(q: &TreeQuery, v: Vertex) -> String {
    q.var_name(v).unwrap_or_else(|| v.to_string())
}

fn classify(query: &str, graph: bool) -> Result<Outcome> {
    let mut rec = Record::default();
    let body = if graph {
        let q = load_graph(query, &mut rec)?;
        graph_record(&classify_graph(&q)?)
    } else {
        let q = load_tree(query, &mut rec)?;
        tree_record(&q, &classify_tree(&q))
    };
    rec.fields.extend(body.fields);
    Ok(Outcome { record: rec, code: 0 })
}

fn certain(query: &str, db: &Path, method: MethodArg, force: bool, cap: u128) -> Result<Outcome> {
    let mut rec = Record::default();
    let q = load_tree(query, &mut rec)?;
    let db = load_db(db, &mut rec)?;
    let answer = certain_with(&q, &db, method.into(), force, cap)?;
    rec.push("certain", answer.value);
    rec.push("method", answer.method);
    rec.push("class", answer.class);
    rec.push("witness", answer.witness.as_deref().unwrap_or("-"));
    rec.push("rounds", answer.rounds.map_or("-".to_string(), |r| r.to_string()));
    rec.push("repairs", db.repair_count());
    Ok(Outcome {
        record: rec,
        code: if answer.value { 0 } else { 1 },
    })
}

fn oracle(query: &str, db: &Path, graph: bool, cap: u128) -> Result<Outcome> {
    let mut rec = Record::default();
    let q = if graph {
        load_graph(query, &mut rec)?
    } else {
        load_tree(query, &mut rec)?.to_graph()
    };
    let db = load_db(db, &mut rec)?;
    let falsifier = first_falsifying_repair(&q, &db, cap)?;
    rec.push("certain", falsifier.is_none());
    rec.push("method", "oracle");
    rec.push("repairs", db.repair_count());
    let text = falsifier.map_or("-".to_string(), |r| {
        r.facts().map(ToString::to_string).collect::<Vec<_>>().join("; ")
    });
    rec.push("falsifying_repair", text);
    let code = if rec.get("certain") == Some("true") { 0 } else { 1 };
    Ok(Outcome { record: rec, code })
}

fn frugal(query: &str, db: &Path) -> Result<Outcome> {
    let mut rec = Record::default();
    let q = load_tree(query, &mut rec)?;
    let db = load_db(db, &mut rec)?;
    let r = frugal_repair(&q, &db)?;
    let sat = cqa_core::oracle::eval_cq(&q.to_graph(), &r).is_some();
    rec.push("satisfies", sat);
    rec.push("facts", r.len());
    for f in r.facts() {
        rec.push("fact", f);
    }
    Ok(Outcome { record: rec, code: 0 })
}

fn write_instance(db: &Database, out: &Path, rec: &mut Record) -> Result<()> {
    let text = db.to_string();
    fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    rec.push("out", out.display());
    rec.push("out.sha256", sha256(text.as_bytes()));
    rec.push("facts", db.len());
    rec.push("blocks", db.block_count());
    rec.push("inconsistent_blocks", db.inconsistent_blocks().len());
    rec.push("repairs", db.repair_count());
    Ok(())
}

fn gadget(kind: GadgetCmd) -> Result<Outcome> {
    let mut rec = Record::default();
    match kind {
        GadgetCmd::Sat { query, cnf, pair, out } => {
            let q = load_tree(&query, &mut rec)?;
            let phi = MonotoneCnf::parse(&cnf)?;
            let pair = pair.map(|p| vertex_pair(&q, &p)).transpose()?;
            let db = sat_gadget(&q, pair, &phi)?;
            rec.push("gadget", "sat");
            rec.push("cnf", &phi);
            rec.push("satisfiable", phi.satisfiable());
            write_instance(&db, &out, &mut rec)?;
        }
        GadgetCmd::Reach {
            query,
            edges,
            pair,
            out,
        } => {
            let q = load_tree(&query, &mut rec)?;
            let g = Digraph::parse(&edges)?;
            let (x, y) = match pair {
                Some(p) => vertex_pair(&q, &p)?,
                None => first_reach_pair(&q)
                    .ok_or_else(|| anyhow!("no same-relation ancestor pair lacks a root homomorphism"))?,
            };
            let db = reach_gadget(&q, x, y, &g)?;
            rec.push("gadget", "reach");
            rec.push("pair", format!("{}/{}", vertex_name(&q, x), vertex_name(&q, y)));
            rec.push("reachable", g.reachable());
            write_instance(&db, &out, &mut rec)?;
        }
        GadgetCmd::Fig5 { out } => {
            let (q, db) = fig5_instance();
            rec.push("gadget", "fig5");
            rec.push("query", &q);
            write_instance(&db, &out, &mut rec)?;
        }
        GadgetCmd::SjfLift { query, db, out } => {
            let q = load_graph(&query, &mut rec)?;
            let src = load_db(&db, &mut rec)?;
            let lifted = sjf_lift(&q, &src)?;
            rec.push("gadget", "sjf-lift");
            write_instance(&lifted, &out, &mut rec)?;
        }
    }
    Ok(Outcome { record: rec, code: 0 })
}

/// First same-relation ancestor pair whose lower subtree does not root-map
/// into the upper one.
fn first_reach_pair(q: &TreeQuery) -> Option<(Vertex, Vertex)> {
    let table = HomTable::new(q, q);
    q.same_relation_pairs()
        .into_iter()
        .find(|&(x, y)| q.is_ancestor(x, y) && !table.feasible(y, x))
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Classify { query, graph } => classify(&query, graph),
        Command::Certain {
            query,
            db,
            method,
            force,
            cap,
        } => certain(&query, &db, method, force, cap),
        Command::Oracle { query, db, graph, cap } => oracle(&query, &db, graph, cap),
        Command::Frugal { query, db } => frugal(&query, &db),
        Command::Gadget { kind } => gadget(kind),
        Command::Selftest { seed, cases } => {
            if cases == 0 {
                bail!("--cases must be positive");
            }
            let (record, ok) = selftest::run(seed, cases);
            Ok(Outcome {
                record,
                code: if ok { 0 } else { 1 },
            })
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let start = Instant::now();
    match run(cli) {
        Ok(out) => {
            println!("command={}", args.join(" "));
            print!("{}", out.record);
            println!("time_ms={}", start.elapsed().as_millis());
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
