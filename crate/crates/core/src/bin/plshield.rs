use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use plshield::circuit::{conditional, CompileOptions, Compiler};
use plshield::envs::Domain;
use plshield::harness::{self, RunSpec, RunSummary, SweepParam};
use plshield::logic::{ground, parse, parse_atom, GroundOptions};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "plshield", version, about = "Probabilistic logic shields and shielded policy gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground and compile a program, print circuit statistics.
    Compile {
        program: PathBuf,
        #[arg(long)]
        query: String,
        /// Print the circuit, one node per line.
        #[arg(long)]
        dump: bool,
        #[arg(long, default_value_t = 5_000_000)]
        max_nodes: usize,
    },
    /// Probability of a query, optionally conditioned on an evidence atom.
    Query {
        program: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        evidence: Option<String>,
        /// Value for a named probability parameter, `name=value`.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
    },
    /// Train every seed of a run spec.
    Train { runspec: PathBuf },
    /// Train one run per parameter value.
    Sweep {
        runspec: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Sensor count, circuit size and timings of look-ahead shields.
    Lookahead {
        #[arg(long, default_value = "pacman")]
        domain: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 5_000_000)]
        max_nodes: usize,
    },
    /// Compare run summaries.
    Compare {
        summaries: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Compile {
            program,
            query,
            dump,
            max_nodes,
        } => {
            let theory = parse(&read(&program)?)?;
            let q = parse_atom(&query)?;
            let gp = ground(&theory, std::slice::from_ref(&q), &GroundOptions::default())?;
            let start = std::time::Instant::now();
            let mut c = Compiler::new(&gp, &CompileOptions { max_nodes })?;
            let circuit = c.query(&q)?;
            println!("atoms {}", gp.atoms.len());
            println!("variables {}", gp.vars.len());
            println!("rules {}", gp.rules.len());
            println!("nodes {}", circuit.size());
            println!("edges {}", circuit.edges());
            println!("smooth {}", circuit.is_smooth());
            println!("decomposable {}", circuit.is_decomposable());
            println!("compile_seconds {:.6}", start.elapsed().as_secs_f64());
            if dump {
                print!("{circuit}");
            }
        }
        Command::Query {
            program,
            query,
            evidence,
            set,
        } => {
            let theory = parse(&read(&program)?)?;
            let q = parse_atom(&query)?;
            let mut queries = vec![q.clone()];
            let e = evidence.as_deref().map(parse_atom).transpose()?;
            queries.extend(e.clone());
            let mut bindings = HashMap::new();
            for s in &set {
                let Some((k, v)) = s.split_once('=') else {
                    bail!("--set expects NAME=VALUE, got '{s}'");
                };
                let v: f64 = v.trim().parse().with_context(|| format!("value of {k}"))?;
                bindings.insert(k.trim().to_string(), v);
            }
            let gp = ground(&theory, &queries, &GroundOptions::default())?;
            let mut c = Compiler::new(&gp, &CompileOptions::default())?;
            let v = c.var_table().valuation(&bindings)?;
            let p = match &e {
                None => c.query(&q)?.evaluate(&v)?,
                Some(e) => {
                    let joint = c.conjunction(&[(&q, true), (e, true)])?;
                    let ev = c.query(e)?;
                    conditional(&joint, &ev, &v)?
                }
            };
            println!("{p}");
        }
        Command::Train { runspec } => {
            let spec = RunSpec::load(&runspec)?;
            let s = harness::run(&spec)?;
            print_summary(&s);
        }
        Command::Sweep { runspec, param, values } => {
            let spec = RunSpec::load(&runspec)?;
            let param: SweepParam = param.parse()?;
            let values = if values.is_empty() { param.default_grid() } else { values };
            for s in harness::sweep(&spec, param, &values)? {
                print_summary(&s);
            }
        }
        Command::Lookahead {
            domain,
            horizons,
            max_nodes,
        } => {
            let domain: Domain = domain.parse()?;
            let rows = harness::lookahead_report(domain, &horizons, max_nodes)?;
            print!("{}", harness::format_lookahead(&rows));
        }
        Command::Compare { summaries, output } => {
            let loaded = summaries
                .iter()
                .map(|p| RunSummary::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let report = harness::format_compare(&harness::compare(&loaded)?);
            match output {
                Some(p) => std::fs::write(&p, &report).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{report}"),
            }
        }
    }
    Ok(())
}

fn print_summary(s: &RunSummary) {
    println!(
        "{}: normalized return {:.4}, cumulative violations {:.1}, policy safety {:.4} ({} seeds)",
        s.name,
        s.mean.final_normalized_return,
        s.mean.cumulative_violations,
        s.mean.mean_policy_safety,
        s.seeds.len()
    );
}
