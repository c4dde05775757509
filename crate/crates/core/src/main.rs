use std::collections::HashSet;
use std::io::{self, BufWriter, Read, Write};
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;

use pmenum::circuit::CircuitArena;
use pmenum::enumerator::{EnumerationSession, Options};
use pmenum::graph::{build_from_list, EdgeList};
use pmenum::io::{format_matching, parse_graph, write_graph};
use pmenum::{oracle, Error};

#[derive(Parser)]
#[command(name = "pmenum", version, about = "Enumerate the perfect matchings of a bipartite graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Edges,
    CountOnly,
}

#[derive(Subcommand)]
enum Command {
    /// List every perfect matching, one per line.
    Enumerate {
        /// Graph file, or `-` for standard input.
        file: PathBuf,
        #[arg(long, value_enum, default_value = "edges")]
        format: Format,
        /// Stop after this many matchings.
        #[arg(long)]
        limit: Option<u64>,
        /// Print one line per split to standard error.
        #[arg(long)]
        trace: bool,
    },
    /// Compare the enumeration with the brute-force and permanent oracles.
    Check { file: PathBuf },
    /// Write a generated graph to standard output.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Print enumeration statistics as key=value lines.
    Stats {
        file: PathBuf,
        #[arg(long)]
        trace: bool,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Complete bipartite graph K_{n,n}.
    Complete { n: usize },
    /// Cycle on `len` vertices.
    Cycle { len: usize },
    /// K_{n,n} with every edge replaced by a path of 2k+1 edges.
    Hk { n: usize, k: usize },
    /// Graph on n vertices and m edges with exactly m - n + 2 perfect matchings.
    Mincount { n: usize, m: usize },
    /// Random graph with a planted perfect matching.
    Random {
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_graph(file: &PathBuf) -> pmenum::Result<EdgeList> {
    let mut text = String::new();
    let io = if file.as_os_str() == "-" {
        io::stdin().read_to_string(&mut text)
    } else {
        std::fs::File::open(file).and_then(|mut f| f.read_to_string(&mut text))
    };
    io.map_err(|e| Error::MalformedInput(format!("{}: {e}", file.display())))?;
    parse_graph(&text)
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(io::Error),
    Mismatch(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn enumerate(file: &PathBuf, format: Format, limit: Option<u64>, trace: bool) -> Result<(), Failure> {
    let list = read_graph(file)?;
    let mut session = EnumerationSession::new(&list, Options { trace, audit_vertices: None })?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut printed = 0u64;
    let mut truncated = false;
    let mut failed: Option<io::Error> = None;
    session.run(|t| {
        if limit.is_some_and(|l| printed >= l) {
            truncated = true;
            return ControlFlow::Break(());
        }
        printed += 1;
        if let Format::Edges = format {
            if let Err(e) = writeln!(out, "{}", format_matching(&list, &t.edges())) {
                failed = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = failed {
        return Err(e.into());
    }
    writeln!(out, "count {printed}")?;
    if truncated {
        writeln!(out, "truncated")?;
    }
    if trace {
        let mut err = io::stderr().lock();
        for line in &session.stats.trace {
            writeln!(err, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn check(file: &PathBuf) -> Result<(), Failure> {
    let list = read_graph(file)?;
    let mut arena = CircuitArena::new();
    let g = build_from_list(&mut arena, &list)?;
    let mut session = EnumerationSession::new(&list, Options::default())?;
    let half = session.root_graph.vertex_count() / 2;
    let mut got = Vec::new();
    let mut bad = None;
    session.run(|t| {
        let mut m = t.edges();
        m.sort_unstable();
        let lefts: HashSet<usize> = m.iter().map(|&e| list.edges[e].0).collect();
        let rights: HashSet<usize> = m.iter().map(|&e| list.edges[e].1).collect();
        if m.len() != half || lefts.len() != half || rights.len() != half {
            bad.get_or_insert_with(|| format!("not a perfect matching: {}", format_matching(&list, &m)));
        }
        got.push(m);
        ControlFlow::Continue(())
    })?;
    if let Some(msg) = bad {
        return Err(Failure::Mismatch(msg));
    }
    let distinct: HashSet<&Vec<usize>> = got.iter().collect();
    if distinct.len() != got.len() {
        return Err(Failure::Mismatch("a matching was delivered twice".into()));
    }
    if list.left_count <= oracle::brute_force_cap() {
        let want = oracle::brute_force(&g)?.matchings;
        let mut sorted = got.clone();
        sorted.sort();
        if let Some(m) = want.iter().find(|m| sorted.binary_search(m).is_err()) {
            return Err(Failure::Mismatch(format!("missed {}", format_matching(&list, m))));
        }
        if let Some(m) = sorted.iter().find(|m| want.binary_search(m).is_err()) {
            return Err(Failure::Mismatch(format!("extra {}", format_matching(&list, m))));
        }
    }
    if list.left_count <= oracle::permanent_cap() {
        let permanent = oracle::permanent(&g)?;
        if permanent != BigUint::from(got.len()) {
            return Err(Failure::Mismatch(format!("count {} but permanent {permanent}", got.len())));
        }
    }
    println!("OK count={}", got.len());
    Ok(())
}

fn generate(kind: &GenKind) -> Result<(), Failure> {
    let list = match *kind {
        GenKind::Complete { n } => oracle::complete(n),
        GenKind::Cycle { len } => oracle::cycle(len)?,
        GenKind::Hk { n, k } => oracle::path_substituted(n, k)?,
        GenKind::Mincount { n, m } => oracle::min_count_graph(n, m)?,
        GenKind::Random { n, density, seed } => oracle::random_with_matching(n, seed, density)?,
    };
    let mut out = io::stdout().lock();
    out.write_all(write_graph(&list).as_bytes())?;
    Ok(())
}

fn stats(file: &PathBuf, trace: bool) -> Result<(), Failure> {
    let list = read_graph(file)?;
    let mut session = EnumerationSession::new(&list, Options { trace, audit_vertices: None })?;
    session.run(|_| ControlFlow::Continue(()))?;
    let mut out = io::stdout().lock();
    for line in session.stats.to_lines() {
        writeln!(out, "{line}")?;
    }
    if trace {
        let mut err = io::stderr().lock();
        for line in &session.stats.trace {
            writeln!(err, "{line}")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Enumerate { file, format, limit, trace } => enumerate(file, *format, *limit, *trace),
        Command::Check { file } => check(file),
        Command::Gen { kind } => generate(kind),
        Command::Stats { file, trace } => stats(file, *trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(f) => {
            let code = match &f {
                Failure::Lib(Error::NoPerfectMatching) => 2,
                Failure::Lib(Error::MalformedInput(_)) => 3,
                _ => 1,
            };
            match f {
                Failure::Lib(e) => eprintln!("pmenum: {e}"),
                Failure::Io(e) => eprintln!("pmenum: {e}"),
                Failure::Mismatch(msg) => println!("MISMATCH {msg}"),
            }
            ExitCode::from(code)
        }
    }
}
