use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use ecm_core::Dimension;
use ecm_harness::fixtures::default_fixture_dir;
use ecm_harness::report::{ablation_table, exp1_table, exp2_table, exp3_table, write_json};
use ecm_harness::{
    run_ablation, run_ablation_all, run_experiment1, run_experiment2, run_experiment3, Fixtures, SEED_PRIMARY,
};
use serde::Serialize;

use crate::{Failure, Global, Outcome};

#[derive(Debug, Args)]
pub struct BenchOpts {
    #[arg(long, default_value_t = SEED_PRIMARY)]
    pub seed: u64,
    /// Fixture tree (library, oracle, templates, profiles, upgrades, long-horizon chains).
    #[arg(long, env = "ECM_FIXTURES", value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Where result files are written.
    #[arg(long, default_value = "results", value_name = "DIR")]
    pub results: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Composition stability over generated chains.
    Exp1(#[command(flatten)] BenchOpts),
    /// Upgrade classification over the upgrade cases.
    Exp2(#[command(flatten)] BenchOpts),
    /// Long-horizon task chains.
    Exp3(#[command(flatten)] BenchOpts),
    /// Dimension ablation.
    Ablation {
        #[command(flatten)]
        opts: BenchOpts,
        /// Remove one dimension.
        #[arg(long, value_name = "DIM", value_parser = crate::parse_dimension, conflicts_with = "all")]
        remove: Option<Dimension>,
        /// Every configuration (the default).
        #[arg(long)]
        all: bool,
    },
    /// Every experiment.
    All(#[command(flatten)] BenchOpts),
}

fn fixtures(opts: &BenchOpts) -> Result<Fixtures, Failure> {
    Ok(Fixtures::load(&opts.fixtures.clone().unwrap_or_else(default_fixture_dir))?)
}

fn save<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    write_json(dir, name, value).map_err(|e| Failure::new(1, format!("{}: {e}", dir.display())))
}

fn show<T: Serialize>(g: &Global, value: &T, table: String) {
    if g.json() {
        println!("{}", serde_json::to_string_pretty(value).expect("results always serialize"));
    } else {
        print!("{table}");
    }
}

fn exp1(fx: &Fixtures, opts: &BenchOpts, g: &Global) -> Result<(), Failure> {
    let r = run_experiment1(fx, opts.seed)?;
    save(&opts.results, "exp1", &r)?;
    show(g, &r, exp1_table(&r));
    Ok(())
}

fn exp2(fx: &Fixtures, opts: &BenchOpts, g: &Global) -> Result<(), Failure> {
    let r = run_experiment2(fx)?;
    save(&opts.results, "exp2", &r)?;
    show(g, &r, exp2_table(&r));
    Ok(())
}

fn exp3(fx: &Fixtures, opts: &BenchOpts, g: &Global) -> Result<(), Failure> {
    let r = run_experiment3(fx)?;
    save(&opts.results, "exp3", &r)?;
    show(g, &r, exp3_table(&r));
    Ok(())
}

fn ablation(fx: &Fixtures, opts: &BenchOpts, remove: Option<Dimension>, g: &Global) -> Result<(), Failure> {
    let rows = match remove {
        Some(d) => vec![run_ablation(fx, opts.seed, Some(d))?],
        None => run_ablation_all(fx, opts.seed)?,
    };
    save(&opts.results, "ablation", &rows)?;
    show(g, &rows, ablation_table(&rows));
    Ok(())
}

pub fn run(cmd: BenchCmd, g: &Global) -> Outcome {
    match cmd {
        BenchCmd::Exp1(opts) => exp1(&fixtures(&opts)?, &opts, g)?,
        BenchCmd::Exp2(opts) => exp2(&fixtures(&opts)?, &opts, g)?,
        BenchCmd::Exp3(opts) => exp3(&fixtures(&opts)?, &opts, g)?,
        BenchCmd::Ablation { opts, remove, all: _ } => ablation(&fixtures(&opts)?, &opts, remove, g)?,
        BenchCmd::All(opts) => {
            let fx = fixtures(&opts)?;
            exp1(&fx, &opts, g)?;
            println!();
            exp2(&fx, &opts, g)?;
            println!();
            exp3(&fx, &opts, g)?;
            println!();
            ablation(&fx, &opts, None, g)?;
        }
    }
    Ok(0)
}
