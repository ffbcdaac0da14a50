use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use modeljoin::catalog::{load_metadata, TableSource};
use modeljoin::data::{read_rows, write_rows};
use modeljoin::evaluation::{generative_fscore, ks_two_sample, oracle_join, OracleJoin};
use modeljoin::plan::{bind_sources, load_data_sources};
use modeljoin::synth::{gen_selfjoin_fixture, gen_table, SynthSpec};
use modeljoin::table_model::{build_exact, ModelFile};
use modeljoin::{Catalog, Error, JoinQuery, Plan, Registry, SampleOptions, Table, TableMeta};
use modeljoin_learn::{
    learn_exact_per_pair, learn_table, load_model, CdgConfig, LearnConfig, SkipGramConfig,
};

use crate::{
    Backend, EvalMode, EvaluateArgs, IngestArgs, JoinArgs, LearnArgs, OracleArgs, QueryArgs,
    SampleArgs, SynthArgs,
};

pub const MODEL_SUFFIX: &str = ".model.json";

fn write_json<S: Serialize>(value: &S, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    if let Some(p) = out {
        std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{text}");
    Ok(())
}

fn table_meta(catalog: &Catalog, id: &str) -> Result<TableMeta> {
    Ok(catalog
        .get(id)
        .cloned()
        .ok_or_else(|| Error::Resolution(format!("table {id} is not in the metadata")))?)
}

/// `dir/<table>.csv` when `path` is a directory, else `path` itself.
fn table_file(path: &Path, table: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{table}.csv"))
    } else {
        path.to_path_buf()
    }
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let mut catalog = load_metadata(&a.meta)?;
    std::fs::create_dir_all(&a.out)?;
    for f in &a.files {
        let id = f
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("cannot name a table after {}", f.display()))?;
        let t = Table::load_csv(table_meta(&catalog, id)?, f)
            .with_context(|| format!("reading {}", f.display()))?;
        t.save_csv(&a.out.join(format!("{id}.csv")))?;
        let entry = catalog.get_mut(id).expect("looked up above");
        entry.row_count = t.meta.row_count;
        log::info!("{id}: {} rows", t.len());
    }
    catalog.save(&a.out.join("meta.json"))?;
    Ok(())
}

fn learn_config(a: &LearnArgs) -> LearnConfig {
    LearnConfig {
        embedding: SkipGramConfig {
            dim: a.embed_dim,
            negatives: a.negatives,
            epochs: a.embed_epochs,
            ..Default::default()
        },
        network: CdgConfig {
            hidden: a.hidden,
            epochs: a.epochs,
            lr: a.lr,
            ..Default::default()
        },
        clusters: a.clusters,
        marginal_fallback: a.marginal_fallback,
        seed: a.seed,
    }
}

pub fn learn(a: &LearnArgs) -> Result<()> {
    let meta_path = match &a.meta {
        Some(p) => p.clone(),
        None if a.data.is_dir() => a.data.join("meta.json"),
        None => bail!("--meta is required when --data is a file"),
    };
    let catalog = load_metadata(&meta_path)?;
    let path = table_file(&a.data, &a.table);
    let table = Table::load_csv(table_meta(&catalog, &a.table)?, &path)
        .with_context(|| format!("reading {}", path.display()))?;
    let file = match a.backend {
        Backend::Exact => {
            let index = build_exact(&table)?;
            match a.perturb {
                Some(eps) => ModelFile::perturbed(&index, eps, a.seed)?,
                None => ModelFile::exact(&index)?,
            }
        }
        Backend::Learned => {
            let cfg = learn_config(a);
            let m = if a.per_pair {
                learn_exact_per_pair(&table, &cfg)?
            } else {
                learn_table(&table, &cfg)?
            };
            m.to_model_file()?
        }
    };
    // reject unusable parameters before writing anything
    load_model::<f64>(&file)?;
    file.save(&a.out)?;
    Ok(())
}

/// Loads the query, fills missing sources from the model and data
/// directories, and builds the plan.
pub fn build_plan(q: &QueryArgs) -> Result<(JoinQuery, Catalog, Plan)> {
    let catalog = load_metadata(&q.meta)?;
    let mut query = JoinQuery::load(&q.query)?;
    for t in query.tables.clone() {
        if query.sources.contains_key(&t) {
            continue;
        }
        let model = q.models.as_ref().map(|d| d.join(format!("{t}{MODEL_SUFFIX}")));
        let data = q.data.as_ref().map(|d| d.join(format!("{t}.csv")));
        if let Some(p) = model.filter(|p| p.is_file()) {
            query = query.with_source(&t, TableSource::Model(p));
        } else if let Some(p) = data.filter(|p| p.is_file()) {
            query = query.with_source(&t, TableSource::Data(p));
        }
    }
    let mut registry = Registry::new();
    bind_sources(&query, &catalog, &mut registry, &load_model::<f64>)?;
    let plan = Plan::new(&query, &catalog, registry, q.root.as_deref())?;
    Ok((query, catalog, plan))
}

pub fn join(a: &JoinArgs) -> Result<()> {
    let (_, _, plan) = build_plan(&a.query)?;
    write_json(&plan.inference().report(), a.out.as_deref())
}

#[derive(Serialize)]
struct SampleManifest<'a> {
    query: &'a Path,
    columns: Vec<String>,
    n: usize,
    seed: u64,
    workers: usize,
    reject_budget: usize,
    join_size: f64,
    exact: bool,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let (_, _, plan) = build_plan(&a.query)?;
    let opts = SampleOptions {
        seed: a.seed,
        workers: a.workers,
        reject_budget: a.reject_budget,
    };
    let m = plan.sample(a.n, &opts)?;
    match &a.out {
        Some(p) => {
            m.write_csv(BufWriter::new(File::create(p)?))?;
            let manifest = SampleManifest {
                query: &a.query.query,
                columns: m.columns.clone(),
                n: a.n,
                seed: a.seed,
                workers: a.workers,
                reject_budget: a.reject_budget,
                join_size: plan.inference().join_size,
                exact: plan.inference().exact,
            };
            std::fs::write(manifest_path(p), serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
        None => m.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn read_sample(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_rows(BufReader::new(f))?)
}

/// The raw join over the plan's output columns, named like sample columns.
fn raw_join(query: &JoinQuery, catalog: &Catalog, plan: &Plan, data: Option<&Path>, cap: usize) -> Result<OracleJoin> {
    let mut tables = load_data_sources(query, catalog)?;
    for t in &query.tables {
        if tables.iter().any(|x| x.id() == t) {
            continue;
        }
        let Some(dir) = data else {
            bail!(Error::Resolution(format!("no raw data for table {t}; pass --data")));
        };
        let p = dir.join(format!("{t}.csv"));
        tables.push(Table::load_csv(table_meta(catalog, t)?, &p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(oracle_join(&tables, query, &plan.output_columns(), cap)?.with_columns(plan.columns()))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    match a.mode {
        EvalMode::Ks => evaluate_ks(a),
        EvalMode::Fscore => evaluate_fscore(a),
    }
}

fn evaluate_ks(a: &EvaluateArgs) -> Result<()> {
    let sample = a.sample.as_ref().context("ks needs --sample")?;
    let (header, rows) = read_sample(sample)?;
    let reference = match &a.reference {
        Some(r) => {
            let (h, rows) = read_sample(r)?;
            if h != header {
                bail!(Error::Schema(format!("reference columns {h:?} differ from sample columns {header:?}")));
            }
            rows
        }
        None => {
            let q = QueryArgs {
                query: a.query.clone().context("ks needs --query or --reference")?,
                meta: a.meta.clone().context("ks needs --meta")?,
                models: a.models.clone(),
                data: a.data.clone(),
                root: a.root.clone(),
            };
            let (query, catalog, plan) = build_plan(&q)?;
            if plan.columns() != header {
                bail!(Error::Schema(format!(
                    "sample columns {header:?} differ from the query's {:?}",
                    plan.columns()
                )));
            }
            let oracle = raw_join(&query, &catalog, &plan, a.data.as_deref(), a.oracle_cap)?;
            oracle.sample(rows.len(), a.seed)?
        }
    };
    write_json(&ks_two_sample(&rows, &reference, a.alpha)?, a.out.as_deref())
}

#[derive(Serialize)]
struct FscoreReport<'a> {
    table: &'a str,
    fscore: f64,
    median: f64,
    lower: f64,
    upper: f64,
    confidence: f64,
    sample_size: u64,
    conditions: usize,
}

fn evaluate_fscore(a: &EvaluateArgs) -> Result<()> {
    let model_path = a.models.as_ref().context("fscore needs --models <model file>")?;
    let file = ModelFile::load(model_path)?;
    let model = load_model::<f64>(&file)?;
    let id = file.manifest.table.table_id.clone();
    let data = a.data.as_ref().context("fscore needs --data with the raw table")?;
    let meta = match &a.meta {
        Some(p) => table_meta(&load_metadata(p)?, &id)?,
        None => file.manifest.table.clone(),
    };
    let truth = build_exact(&Table::load_csv(meta, &table_file(data, &id))?)?;
    let g = generative_fscore(model.as_ref(), &truth, a.n, a.alpha, a.seed)?;
    let mut per: Vec<f64> = g.per_condition.values().map(|c| c.fscore()).collect();
    per.sort_by(f64::total_cmp);
    let report = FscoreReport {
        table: &id,
        fscore: g.fscore,
        median: per[per.len() / 2],
        lower: g.lower,
        upper: g.upper,
        confidence: g.confidence,
        sample_size: g.sample_size,
        conditions: per.len(),
    };
    write_json(&report, a.out.as_deref())
}

pub fn oracle(a: &OracleArgs) -> Result<()> {
    let (query, catalog, plan) = build_plan(&a.query)?;
    let o = raw_join(&query, &catalog, &plan, a.query.data.as_deref(), a.oracle_cap)?;
    let rows = match a.n {
        Some(n) => o.sample(n, a.seed)?,
        None => o.expand(),
    };
    match &a.out {
        Some(p) => write_rows(BufWriter::new(File::create(p)?), &o.columns, &rows)?,
        None => write_rows(std::io::stdout().lock(), &o.columns, &rows)?,
    }
    std::io::stdout().flush()?;
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        zipf: a.zipf,
        shared_domain: a.shared_domain,
        ..SynthSpec::new(a.rows, a.ndv1, a.ndv2, a.ndp, a.seed)
    };
    let base = gen_table("T", &spec)?;
    let fixture = gen_selfjoin_fixture(&base, a.ways)?;
    std::fs::create_dir_all(&a.out)?;
    let mut query = fixture.query.clone();
    for t in &fixture.tables {
        let name = format!("{}.csv", t.id());
        t.save_csv(&a.out.join(&name))?;
        query = query.with_source(t.id(), TableSource::Data(PathBuf::from(name)));
    }
    fixture.catalog.save(&a.out.join("meta.json"))?;
    std::fs::write(a.out.join("query.json"), query.to_json()? + "\n")?;
    std::fs::write(a.out.join("synth.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    Ok(())
}
