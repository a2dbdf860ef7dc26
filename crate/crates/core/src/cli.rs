//! Command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::aggregates::{lorenz, world_output};
use crate::appraisal::{appraise, comparison_table, taste_correct, AppraisalReport, Segment};
use crate::bounds::{bound_improvement_stats, bound_matrix, BoundStyle};
use crate::dataset::{convert, ingest_icp, load_aux, load_direct, read_to_string, PooledDataset};
use crate::error::{Error, Result};
use crate::gss::{gss_full, gss_homothetic, GssOptions, GssResult};
use crate::indices::{classical_indices, geary_khamis_with, market_rates, GkSolver, IndexMatrix, Method};
use crate::io;
use crate::rpgraph::{
    check_cewec, check_harp, greedy_homothetic_refset, max_reference_set, money_pump_index, RpGraph,
};

#[derive(Parser, Debug)]
#[command(name = "refcons", version, about = "Reference-consumer price comparisons")]
pub struct Cli {
    /// Worker threads for pairwise sweeps (0 = all cores).
    #[arg(long, global = true, env = "REFCONS_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert ICP PPP and expenditure tables into the direct format.
    Ingest(IngestArgs),
    /// Test the data for a reference consumer.
    Check(RunArgs),
    /// Extract a largest consistent subset.
    Refset(RunArgs),
    /// Multilateral and classical cost-of-living bounds.
    Bounds(RunArgs),
    /// Price index matrices.
    Indices(RunArgs),
    /// Error rates of each index against the bounds.
    Appraise(RunArgs),
    /// Generalised star system parities.
    Gss(RunArgs),
    /// World output and inequality under one index.
    Aggregate(RunArgs),
    /// Replace out-of-bounds index entries by bound midpoints.
    Correct(RunArgs),
    /// Run every stage and write all outputs.
    Pipeline(RunArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long, env = "REFCONS_PPP")]
    pub ppp: PathBuf,
    #[arg(long, env = "REFCONS_EXPENDITURE")]
    pub expenditure: PathBuf,
    #[arg(long, env = "REFCONS_BASE")]
    pub base: String,
    #[arg(long, env = "REFCONS_AUX")]
    pub aux: Option<PathBuf>,
    #[arg(long, env = "REFCONS_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    #[default]
    #[value(alias = "eq4")]
    Laspeyres,
    #[value(alias = "eq5")]
    Paasche,
}

impl From<StyleArg> for BoundStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Laspeyres => BoundStyle::Laspeyres,
            StyleArg::Paasche => BoundStyle::Paasche,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum SegmentArg {
    #[default]
    All,
    InRc,
    OutRc,
}

impl From<SegmentArg> for Segment {
    fn from(s: SegmentArg) -> Self {
        match s {
            SegmentArg::All => Segment::All,
            SegmentArg::InRc => Segment::BaseInRc,
            SegmentArg::OutRc => Segment::BaseOutRc,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum GkArg {
    #[default]
    Iterative,
    Direct,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Direct-format CSV `country,p_1..p_K,q_1..q_K`.
    #[arg(long, env = "REFCONS_DATA")]
    pub data: PathBuf,
    /// `country,population,market_rate` table.
    #[arg(long, env = "REFCONS_AUX")]
    pub aux: Option<PathBuf>,
    /// Base country (defaults to the first row).
    #[arg(long, env = "REFCONS_BASE")]
    pub base: Option<String>,
    #[arg(long, value_enum, default_value_t, env = "REFCONS_BOUND_STYLE")]
    pub bound_style: StyleArg,
    #[arg(long, value_enum, default_value_t, env = "REFCONS_SEGMENT")]
    pub segment: SegmentArg,
    /// Use the homothetic axiom and bounds.
    #[arg(long, env = "REFCONS_HOMOTHETIC")]
    pub homothetic: bool,
    /// Exhaustive largest consistent subset (at most 15 countries).
    #[arg(long, env = "REFCONS_EXACT_SUBSET")]
    pub exact_subset: bool,
    #[arg(long, value_enum, default_value_t, env = "REFCONS_GK_SOLVER")]
    pub gk_solver: GkArg,
    /// Index used by `aggregate` and `correct`.
    #[arg(long, default_value = "gss", env = "REFCONS_METHOD")]
    pub method: String,
    /// Recorded in the manifest.
    #[arg(long, default_value_t = 0, env = "REFCONS_SEED")]
    pub seed: u64,
    #[arg(long, env = "REFCONS_OUT")]
    pub out: Option<PathBuf>,
}

/// Entry point used by the binary. Returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    if cli.threads > 0 {
        // a second initialisation only happens in tests; ignore it
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> Result<i32> {
    match command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Check(a) => cmd_check(a),
        Command::Refset(a) => cmd_refset(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Indices(a) => cmd_indices(a),
        Command::Appraise(a) => cmd_appraise(a),
        Command::Gss(a) => cmd_gss(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Correct(a) => cmd_correct(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

fn load(a: &RunArgs) -> Result<PooledDataset> {
    let mut data = load_direct(&a.data)?;
    if let Some(aux) = &a.aux {
        data.apply_aux(&load_aux(aux)?);
    }
    if let Some(base) = &a.base {
        data = data.with_base(base)?;
    }
    Ok(data)
}

/// Collects outputs so that a command can print and optionally write them.
struct Sink<'a> {
    out: Option<&'a Path>,
    written: Vec<(String, String)>,
}

impl<'a> Sink<'a> {
    fn new(out: Option<&'a Path>) -> Self {
        Sink {
            out,
            written: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, content: String) -> Result<()> {
        if let Some(dir) = self.out {
            io::write_file(dir, name, &content)?;
        }
        self.written.push((name.to_string(), content));
        Ok(())
    }
}

fn cmd_ingest(a: &IngestArgs) -> Result<i32> {
    let raw = ingest_icp(&a.ppp, &a.expenditure, &a.base, a.aux.as_deref())?;
    let conv = convert(&raw)?;
    let mut data = conv.dataset;
    data.apply_aux(&raw.aux);
    io::write_file(&a.out, "dataset.csv", &io::dataset_csv(&data))?;
    io::write_file(&a.out, "aux.csv", &io::aux_csv(&data))?;
    #[derive(Serialize)]
    struct Exclusions<'a> {
        countries: &'a [String],
        headings: &'a [String],
    }
    let ex = Exclusions {
        countries: &conv.excluded_countries,
        headings: &conv.excluded_headings,
    };
    io::write_file(&a.out, "exclusions.json", &serde_json::to_string_pretty(&ex)?)?;
    println!(
        "{} countries, {} headings kept; {} countries and {} headings excluded",
        data.len(),
        data.goods(),
        conv.excluded_countries.len(),
        conv.excluded_headings.len()
    );
    Ok(0)
}

fn cmd_check(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let g = RpGraph::build(&data)?;
    let (label, verdict) = if a.homothetic {
        ("HARP", check_harp(&g))
    } else {
        ("GARP", check_cewec(&g))
    };
    let mut sink = Sink::new(a.out.as_deref());
    sink.put("edges.csv", io::edge_list_csv(&g))?;
    sink.put("adjacency.json", io::adjacency_json(&g)?)?;
    match verdict.cycle() {
        None => {
            println!("{label} SATISFIED ({} countries)", data.len());
            Ok(0)
        }
        Some(c) => {
            println!("{label} VIOLATED");
            println!("cycle: {}", c.describe(g.ids()));
            let weights: Vec<String> = c.weights.iter().map(|w| io::fixed3(*w)).collect();
            println!("weights: {}", weights.join(", "));
            if c.violates_cewec() {
                println!("money pump index: {}", io::fixed3(money_pump_index(&data, c)?));
            } else {
                println!("weight product: {}", io::fixed3(c.product()));
            }
            Ok(1)
        }
    }
}

fn cmd_refset(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let ids = data.ids();
    let members = if a.homothetic {
        let best = greedy_homothetic_refset(&data)?;
        println!(
            "seed {}, coverage {}",
            ids[best.seed],
            io::fixed3(best.coverage)
        );
        best.members
    } else {
        max_reference_set(&data, a.exact_subset)?
    };
    let names: Vec<&str> = members.iter().map(|&m| ids[m].as_str()).collect();
    println!("{} of {}: {}", members.len(), data.len(), names.join(" "));
    Sink::new(a.out.as_deref()).put("refset.csv", io::refset_csv(&ids, &members))?;
    Ok(0)
}

fn cmd_bounds(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let style: BoundStyle = a.bound_style.into();
    let bm = bound_matrix(&data, style)?;
    let stats = bound_improvement_stats(&bm);
    println!("lower bounds\n{}", io::render_matrix(&bm.ids, &bm.lower));
    println!("upper bounds\n{}", io::render_matrix(&bm.ids, &bm.upper));
    println!(
        "mean width improvement {} over {} pairs ({} skipped)",
        io::fixed3(stats.mean_width_improvement),
        stats.pairs.len(),
        stats.skipped
    );
    let mut sink = Sink::new(a.out.as_deref());
    sink.put(&format!("bounds_{}.csv", style.as_str()), io::bounds_csv(&bm))?;
    sink.put(
        &format!("bound_improvement_{}.json", style.as_str()),
        serde_json::to_string_pretty(&stats)?,
    )?;
    Ok(0)
}

fn all_indices(data: &PooledDataset, a: &RunArgs) -> Result<Vec<IndexMatrix>> {
    let mut out = classical_indices(data)?;
    if a.gk_solver == GkArg::Direct {
        out[0] = geary_khamis_with(data, GkSolver::Direct)?.matrix;
    }
    if data.observations().iter().all(|o| o.market_rate.is_some()) {
        out.push(market_rates(data)?);
    }
    Ok(out)
}

fn homothetic_set(data: &PooledDataset) -> Result<PooledDataset> {
    if check_harp(&RpGraph::build(data)?).is_satisfied() {
        return Ok(data.clone());
    }
    data.subset(&greedy_homothetic_refset(data)?.members)
}

fn cmd_indices(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let ms = all_indices(&data, a)?;
    for m in &ms {
        println!("{}\n{}", m.method, io::render_matrix(&m.ids, &m.values));
    }
    let mut sink = Sink::new(a.out.as_deref());
    sink.put("indices.csv", io::index_long_csv(&ms))?;
    sink.put("indices_vs_base.csv", io::vs_base_csv(&ms, data.base_id()))?;
    Ok(0)
}

fn gss_opts(a: &RunArgs) -> GssOptions {
    GssOptions {
        exact_subset: a.exact_subset,
    }
}

fn appraisal_reports(
    gss: &GssResult,
    a: &RunArgs,
) -> Result<(Vec<IndexMatrix>, Vec<AppraisalReport>)> {
    let bm = gss.bound_matrix(a.bound_style.into());
    let ms = all_indices(&gss.data, a)?;
    let reports = ms
        .iter()
        .map(|m| appraise(m, &bm, a.segment.into()))
        .collect::<Result<Vec<_>>>()?;
    Ok((ms, reports))
}

fn print_reports(reports: &[AppraisalReport]) {
    println!("{:<12} {:>10} {:>10} {:>8}", "method", "rate%", "mag%", "pairs");
    for r in reports {
        println!(
            "{:<12} {:>10} {:>10} {:>8}",
            r.method.as_str(),
            format!("{:.2}", 100.0 * r.error_rate),
            format!("{:.2}", 100.0 * r.error_magnitude),
            r.pairs_counted
        );
    }
}

fn cmd_appraise(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let gss = gss_full(&data, gss_opts(a))?;
    let (_, reports) = appraisal_reports(&gss, a)?;
    print_reports(&reports);
    let table = comparison_table(&reports);
    println!("\n{}", table.render());
    let mut sink = Sink::new(a.out.as_deref());
    sink.put("appraisal_pairs.csv", io::appraisal_pairs_csv(&reports, &gss.ids))?;
    sink.put("appraisal_summary.json", io::appraisal_summary_json(&reports)?)?;
    sink.put("comparison.txt", table.render())?;
    Ok(0)
}

fn cmd_gss(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let mut sink = Sink::new(a.out.as_deref());
    if a.homothetic {
        let set = homothetic_set(&data)?;
        let h = gss_homothetic(&set)?;
        println!("{}", io::render_matrix(&h.index.ids, &h.index.values));
        sink.put("gss_homothetic.csv", io::index_long_csv(&[h.index]))?;
        return Ok(0);
    }
    let r = gss_full(&data, gss_opts(a))?;
    print_gss(&r);
    write_gss(&mut sink, &r)?;
    Ok(0)
}

fn print_gss(r: &GssResult) {
    println!("hub: {}", r.hub_ids().join(" "));
    println!("{:<10} {:>12} {:>10} {:>10}", "country", "ppp_vs_base", "lower", "upper");
    for i in 0..r.ids.len() {
        println!(
            "{:<10} {:>12} {:>10} {:>10}{}",
            r.ids[i],
            io::fixed3(r.ppp_vs_base[i]),
            io::fixed3(r.lower[i][r.base]),
            io::fixed3(r.upper[i][r.base]),
            if r.in_hub[i] { "" } else { "  (outside)" }
        );
    }
    for n in &r.notes {
        println!("note: {n}");
    }
    for id in &r.no_extension {
        println!("NO_EXTENSION {id}");
    }
}

fn write_gss(sink: &mut Sink, r: &GssResult) -> Result<()> {
    sink.put("gss_table.csv", io::gss_table_csv(r))?;
    sink.put("gss_matrix.csv", io::gss_matrix_csv(r))?;
    sink.put("gss_forecasts.csv", io::forecasts_csv(r))?;
    Ok(())
}

fn pick_method(
    name: &str,
    gss: &GssResult,
    others: &[IndexMatrix],
    data: &PooledDataset,
) -> Result<IndexMatrix> {
    let method = Method::parse(name)
        .ok_or_else(|| Error::Config(format!("unknown index method {name}")))?;
    match method {
        Method::Gss => Ok(gss.index()),
        Method::HomotheticGss => Ok(gss_homothetic(&homothetic_set(data)?)?.index),
        m => others
            .iter()
            .find(|x| x.method == m)
            .cloned()
            .ok_or_else(|| Error::Config(format!("index {name} unavailable for this data"))),
    }
}

#[derive(Serialize)]
struct AggregateSummary {
    method: String,
    total_output: f64,
    gini: f64,
}

fn aggregate(
    sink: &mut Sink,
    data: &PooledDataset,
    index: &IndexMatrix,
) -> Result<AggregateSummary> {
    let w = world_output(data, index)?;
    let curve = lorenz(&w.per_capita, &w.populations, &w.ids)?;
    let summary = AggregateSummary {
        method: index.method.to_string(),
        total_output: w.total,
        gini: curve.gini(),
    };
    sink.put("lorenz.csv", io::lorenz_csv(&curve, &w.ids))?;
    sink.put("aggregates.json", serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn cmd_aggregate(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let gss = gss_full(&data, gss_opts(a))?;
    let others = all_indices(&gss.data, a)?;
    let index = pick_method(&a.method, &gss, &others, &gss.data)?;
    let mut sink = Sink::new(a.out.as_deref());
    let s = aggregate(&mut sink, &gss.data, &index)?;
    println!(
        "{}: world output {}, Gini {}",
        s.method,
        io::num(s.total_output),
        io::fixed3(s.gini)
    );
    Ok(0)
}

fn cmd_correct(a: &RunArgs) -> Result<i32> {
    let data = load(a)?;
    let gss = gss_full(&data, gss_opts(a))?;
    let others = all_indices(&gss.data, a)?;
    let name = if a.method == "gss" { "geks" } else { a.method.as_str() };
    let index = pick_method(name, &gss, &others, &gss.data)?;
    let bm = gss.bound_matrix(a.bound_style.into());
    let (fixed, log) = taste_correct(&index, &bm)?;
    println!("{} entries corrected", log.len());
    let mut sink = Sink::new(a.out.as_deref());
    sink.put("corrections.csv", io::corrections_csv(index.method, &gss.ids, &log))?;
    sink.put("corrected.csv", io::index_long_csv(&[fixed]))?;
    Ok(0)
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    config: BTreeMap<&'static str, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    skipped: Vec<String>,
    failures: Vec<String>,
    config_hash: String,
    result_hash: String,
}

fn cmd_pipeline(a: &RunArgs) -> Result<i32> {
    let out = a
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("pipeline needs --out".into()))?;
    let data = load(a)?;
    let style: BoundStyle = a.bound_style.into();
    let mut sink = Sink::new(Some(out));
    let mut failures = Vec::new();
    let mut skipped = Vec::new();
    let mut fault: Option<i32> = None;

    let g = RpGraph::build(&data)?;
    sink.put("edges.csv", io::edge_list_csv(&g))?;
    let verdict = check_cewec(&g);
    let hub = max_reference_set(&data, a.exact_subset)?;
    sink.put("refset.csv", io::refset_csv(&data.ids(), &hub))?;

    let gss = gss_full(&data, gss_opts(a))?;
    let hub_data = data.subset(&hub)?;
    for kind in [BoundStyle::Laspeyres, BoundStyle::Paasche] {
        let bm = bound_matrix(&hub_data, kind)?;
        sink.put(&format!("bounds_{}.csv", kind.as_str()), io::bounds_csv(&bm))?;
        sink.put(
            &format!("bound_improvement_{}.json", kind.as_str()),
            serde_json::to_string_pretty(&bound_improvement_stats(&bm))?,
        )?;
    }
    write_gss(&mut sink, &gss)?;

    let (mut ms, reports) = appraisal_reports(&gss, a)?;
    sink.put("appraisal_pairs.csv", io::appraisal_pairs_csv(&reports, &gss.ids))?;
    sink.put("appraisal_summary.json", io::appraisal_summary_json(&reports)?)?;
    let table = comparison_table(&reports);
    sink.put("comparison.txt", table.render())?;

    let bm = gss.bound_matrix(style);
    if let Some(geks) = ms.iter().find(|m| m.method == Method::Geks) {
        let (fixed, log) = taste_correct(geks, &bm)?;
        sink.put("corrections.csv", io::corrections_csv(Method::Geks, &gss.ids, &log))?;
        sink.put("corrected.csv", io::index_long_csv(&[fixed]))?;
    }

    ms.push(gss.index());
    match homothetic_set(&gss.data).and_then(|s| gss_homothetic(&s)) {
        Ok(h) => sink.put("gss_homothetic.csv", io::index_long_csv(&[h.index]))?,
        Err(e) => {
            fault.get_or_insert(e.exit_code());
            failures.push(format!("homothetic: {e}"));
        }
    }
    sink.put("indices.csv", io::index_long_csv(&ms))?;
    sink.put("indices_vs_base.csv", io::vs_base_csv(&ms, gss.data.base_id()))?;

    if gss.data.observations().iter().all(|o| o.population.is_some()) {
        if let Err(e) = aggregate(&mut sink, &gss.data, &gss.index()) {
            fault.get_or_insert(e.exit_code());
            failures.push(format!("aggregate: {e}"));
        }
    } else {
        skipped.push("aggregate: populations not supplied".into());
    }

    let mut config = BTreeMap::new();
    config.insert("base", data.base_id().to_string());
    config.insert("bound_style", style.as_str().to_string());
    config.insert("segment", Segment::from(a.segment).as_str().to_string());
    config.insert("homothetic", a.homothetic.to_string());
    config.insert("exact_subset", a.exact_subset.to_string());
    config.insert("gk_solver", format!("{:?}", a.gk_solver).to_lowercase());
    config.insert("seed", a.seed.to_string());
    let mut inputs = BTreeMap::new();
    for p in std::iter::once(&a.data).chain(a.aux.iter()) {
        let name = p
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        inputs.insert(name, io::sha256_hex(read_to_string(p)?.as_bytes()));
    }
    let outputs: BTreeMap<String, String> = sink
        .written
        .iter()
        .map(|(n, c)| (n.clone(), io::sha256_hex(c.as_bytes())))
        .collect();
    let config_hash = io::sha256_hex(
        format!(
            "{}{}",
            serde_json::to_string(&config)?,
            serde_json::to_string(&inputs)?
        )
        .as_bytes(),
    );
    let result_hash = io::sha256_hex(serde_json::to_string(&outputs)?.as_bytes());
    let manifest = Manifest {
        tool: "refcons",
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs,
        outputs,
        skipped,
        failures,
        config_hash,
        result_hash,
    };
    io::write_file(out, "manifest.json", &serde_json::to_string_pretty(&manifest)?)?;

    match verdict.cycle() {
        None => println!("reference consumer exists for all {} countries", data.len()),
        Some(c) => println!(
            "no reference consumer for the full set (cycle {}); hub has {} of {}",
            c.describe(g.ids()),
            hub.len(),
            data.len()
        ),
    }
    print_gss(&gss);
    print_reports(&reports);
    println!("outputs written to {}", out.display());
    for f in &manifest.failures {
        eprintln!("failed: {f}");
    }
    Ok(fault.unwrap_or(0))
}
