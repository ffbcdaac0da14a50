//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use modeljoin::evaluation::{
    critical_value, generative_fscore, join_fscore, ks_two_sample, oracle_join, OracleJoin,
};
use modeljoin::fixtures::{self, random_chain_db, random_triangle_db, SmallDb};
use modeljoin::num::Scalar;
use modeljoin::synth::{gen_selfjoin_fixture, gen_table, SynthSpec};
use modeljoin::table_model::{build_exact, perturb_exact, TableModel};
use modeljoin::{ExactPlan, ModelRegistry, Plan, Rational, SampleOptions};
use modeljoin_learn::cdg::Mlp;
use modeljoin_learn::skipgram::{pair_gradient, pair_objective};
use modeljoin_learn::{learn_exact_per_pair, learn_table, CdgConfig, LearnConfig};
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;

const CAP: usize = 5_000_000;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn freqs(pairs: &[(&str, u64)]) -> BTreeMap<String, Rational> {
    pairs.iter().map(|(k, v)| (k.to_string(), Rational::from_count(*v))).collect()
}

fn c1_worked_example_frequencies() -> Check {
    let start = Instant::now();
    let plan = ExactPlan::new(
        &fixtures::chain4_query(),
        &fixtures::chain4_catalog(),
        fixtures::chain4_registry(),
        None,
    )
    .map_err(e)?;
    let r = plan.inference();
    ensure(r.tables[2].freqs == freqs(&[("e1", 1), ("e2", 3)]), format!("F3 = {:?}", r.tables[2].freqs))?;
    ensure(r.tables[1].freqs == freqs(&[("d2", 4)]), format!("F2 = {:?}", r.tables[1].freqs))?;
    ensure(r.tables[0].freqs == freqs(&[("b3", 8)]), format!("F1 = {:?}", r.tables[0].freqs))?;
    ensure(r.join_size == Rational::from_count(8), "F0 != 8")?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), format!("took {t:?}"))?;
    Ok(format!("F3={{e1:1,e2:3}} F2={{d2:4}} F1={{b3:8}} F0=8 in {t:?}"))
}

fn c2_join_conditionals() -> Check {
    let plan = Plan::new(
        &fixtures::chain4_query(),
        &fixtures::chain4_catalog(),
        fixtures::chain4_registry(),
        None,
    )
    .map_err(e)?;
    let d = plan.generator().step(1, "b3").map_err(e)?;
    let e2 = plan.generator().step(2, "d2").map_err(e)?;
    let pd = d.get("d2").copied().unwrap_or(0.0);
    let pe = e2.get("e2").copied().unwrap_or(0.0);
    ensure((pd - 1.0).abs() <= 1e-12, format!("P(d2|b3) = {pd}"))?;
    ensure((pe - 0.75).abs() <= 1e-12, format!("P(e2|d2) = {pe}"))?;
    Ok(format!("P(D=d2|b3)={pd} P(E=e2|d2)={pe}"))
}

fn skeleton_oracle(db: &SmallDb, plan: &Plan) -> Result<OracleJoin, String> {
    let cols: Vec<_> = plan.skeleton.graph.nodes.iter().map(|n| n.members[0].column.clone()).collect();
    oracle_join(&db.tables, &db.query, &cols, CAP).map_err(e)
}

fn c3_tuple_probabilities() -> Check {
    let start = Instant::now();
    let (mut dbs, mut tuples, mut worst) = (0, 0, 0.0f64);
    for seed in 0..80 {
        let db = random_chain_db(seed);
        let plan = Plan::new(&db.query, &db.catalog, db.registry(), None).map_err(e)?;
        let o = skeleton_oracle(&db, &plan)?;
        if o.size == 0 {
            continue;
        }
        dbs += 1;
        for (t, c) in &o.tuples {
            let a = plan.generator().analytic_probability(t).map_err(e)?;
            let want = *c as f64 / o.size as f64;
            worst = worst.max((a - want).abs());
            tuples += 1;
        }
    }
    let t = start.elapsed();
    ensure(dbs >= 20, format!("only {dbs} non-empty databases"))?;
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    ensure(t < Duration::from_secs(30), format!("took {t:?}"))?;
    Ok(format!("{dbs} databases, {tuples} tuples, max |P - count/F0| = {worst:.2e}, {t:?}"))
}

fn c4_join_sizes() -> Check {
    let mut checked = 0;
    for seed in 0..80 {
        let db = random_chain_db(seed);
        let plan = Plan::new(&db.query, &db.catalog, db.registry(), None).map_err(e)?;
        let exact = ExactPlan::new(&db.query, &db.catalog, db.registry(), None).map_err(e)?;
        let o = skeleton_oracle(&db, &plan)?;
        let f0 = plan.inference().join_size;
        ensure(f0 == o.size as f64, format!("seed {seed}: F0 {f0} vs {}", o.size))?;
        ensure(
            exact.inference().join_size == Rational::from_count(o.size),
            format!("seed {seed}: exact F0 differs"),
        )?;
        checked += 1;
    }
    Ok(format!("{checked} databases, F0 equals the oracle size exactly"))
}

fn c5_ks_critical_values() -> Check {
    let cases = [
        (20_000, 162_271, 0.012),
        (2_000, 11_840, 0.039),
        (50_000, 84_279, 0.0091),
        (100_000, 28_407_118, 0.0051),
    ];
    let mut got = Vec::new();
    for (n, m, want) in cases {
        let c = critical_value(0.01, n, m).map_err(e)?;
        ensure((c - want).abs() <= 0.0005, format!("n={n} m={m}: {c} vs {want}"))?;
        got.push(format!("{c:.4}"));
    }
    Ok(format!("critical values {}", got.join(", ")))
}

/// A criterion-3 database with a reasonably varied join.
fn uniformity_db() -> Result<(SmallDb, Plan), String> {
    for seed in 0..200 {
        let db = random_chain_db(seed);
        let plan = Plan::new(&db.query, &db.catalog, db.registry(), None).map_err(e)?;
        let o = skeleton_oracle(&db, &plan)?;
        if o.distinct() >= 20 {
            return Ok((db, plan));
        }
    }
    Err("no database with at least 20 distinct join tuples".into())
}

fn c6_empirical_uniformity() -> Check {
    let (db, plan) = uniformity_db()?;
    let oracle = oracle_join(&db.tables, &db.query, &plan.output_columns(), CAP).map_err(e)?;
    let n = 20_000;
    let mut retained = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let opts = SampleOptions {
            seed: trial,
            ..Default::default()
        };
        let s = plan.sample(n, &opts).map_err(e)?;
        let r = oracle.sample(n, 1_000 + trial).map_err(e)?;
        let ks = ks_two_sample(&s.rows, &r, 0.01).map_err(e)?;
        worst = worst.max(ks.statistic / ks.critical_value);
        retained += ks.retained as usize;
    }
    ensure(retained >= 19, format!("{retained}/20 trials retained"))?;
    Ok(format!(
        "{retained}/20 trials retained over {} distinct tuples; max D/critical = {worst:.3}",
        oracle.distinct()
    ))
}

fn c7_fscore_metric() -> Check {
    let t = gen_table("S", &SynthSpec::new(4_000, 20, 20, 60, 7)).map_err(e)?;
    let m = Arc::new(build_exact(&t).map_err(e)?);
    let mut seen = Vec::new();
    for eps in [0.0, 0.03, 0.1] {
        let eps_r = Rational::from_decimal(eps);
        let p = perturb_exact::<Rational>(m.clone(), eps_r.clone(), 11).map_err(e)?;
        let g = generative_fscore(&p, &m, 4_000, 0.05, 3).map_err(e)?;
        let want = Rational::from_count(1) - eps_r;
        ensure(
            g.per_condition.values().all(|c| c.fscore() == want),
            format!("eps {eps}: some condition differs from 1 - eps"),
        )?;
        ensure(g.fscore == want, format!("eps {eps}: F = {}", g.fscore))?;
        seen.push(format!("eps={eps}: F={} [{:.4}, {:.4}]", g.fscore, g.lower, g.upper));
    }
    Ok(seen.join("; "))
}

fn c8_error_propagation() -> Check {
    let spec = SynthSpec {
        shared_domain: true,
        ..SynthSpec::new(4_000, 100, 100, 300, 21)
    };
    let base = gen_table("T", &spec).map_err(e)?;
    let mut scores = Vec::new();
    for ways in [3, 5, 7] {
        let f = gen_selfjoin_fixture(&base, ways).map_err(e)?;
        let mut reg = ModelRegistry::<f64>::new();
        for t in &f.tables {
            let exact = Arc::new(build_exact(t).map_err(e)?);
            reg.register(t.id(), Arc::new(perturb_exact(exact, 0.03, 5).map_err(e)?));
        }
        let plan = Plan::new(&f.query, &f.catalog, reg, None).map_err(e)?;
        let oracle = oracle_join(&f.tables, &f.query, &plan.output_columns(), CAP).map_err(e)?;
        let score = join_fscore(&oracle, |t| plan.generator().analytic_probability(t)).map_err(e)?;
        scores.push((ways, score, oracle.distinct()));
    }
    let detail = scores
        .iter()
        .map(|(w, s, d)| format!("{w}-way F={s:.4} ({d} tuples)"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(
        scores[0].1 > scores[1].1 && scores[1].1 > scores[2].1,
        format!("not strictly decreasing: {detail}"),
    )?;
    Ok(detail)
}

fn median_fscore(m: &dyn TableModel<f64>, truth: &modeljoin::ExactNestedIndex) -> Result<f64, String> {
    let g = generative_fscore(m, truth, 10_000, 0.05, 3).map_err(e)?;
    let mut per: Vec<f64> = g.per_condition.values().map(|c| c.fscore()).collect();
    per.sort_by(f64::total_cmp);
    Ok(per[per.len() / 2])
}

fn c9_cluster_count() -> Check {
    let start = Instant::now();
    let t = gen_table("S", &SynthSpec::new(10_000, 200, 200, 2_000, 1)).map_err(e)?;
    let truth = build_exact(&t).map_err(e)?;
    let mut medians = Vec::new();
    for c in [1, 5, 20] {
        let cfg = LearnConfig {
            network: CdgConfig {
                hidden: 32,
                epochs: 30,
                lr: 0.002,
                ..Default::default()
            },
            clusters: c,
            seed: 9,
            ..Default::default()
        };
        let m = learn_table(&t, &cfg).map_err(e)?;
        medians.push((c, median_fscore(&m, &truth)?));
    }
    let per_pair = learn_exact_per_pair(&t, &LearnConfig::default()).map_err(e)?;
    let g = generative_fscore::<f64>(&per_pair, &truth, 10_000, 0.05, 3).map_err(e)?;
    let elapsed = start.elapsed();
    let detail = format!(
        "median F {}; C=NDP per-pair F={}; {elapsed:.0?}",
        medians.iter().map(|(c, f)| format!("C={c}:{f:.4}")).collect::<Vec<_>>().join(" "),
        g.fscore
    );
    ensure(medians.windows(2).all(|w| w[0].1 <= w[1].1), format!("not monotone: {detail}"))?;
    ensure(g.fscore == 1.0, format!("per-pair heads not exact: {detail}"))?;
    ensure(elapsed < Duration::from_secs(600), format!("over budget: {detail}"))?;
    Ok(detail)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn c10_gradient_checks() -> Check {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
    let net: Mlp<f64> = Mlp::new(2, 2, 5, 3, &mut rng);
    ensure(net.param_count() <= 50, format!("{} parameters", net.param_count()))?;
    let xs: Vec<[f64; 2]> = (0..4).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (&x[..], i % 3)).collect();
    let (_, g) = net.gradient(&batch);
    let p = net.params();
    let h = 1e-5;
    let mut worst_net: f64 = 0.0;
    for i in 0..p.len() {
        let (mut a, mut b) = (net.clone(), net.clone());
        let (mut pa, mut pb) = (p.clone(), p.clone());
        pa[i] += h;
        pb[i] -= h;
        a.set_params(&pa);
        b.set_params(&pb);
        let fd = (a.nll(&batch) - b.nll(&batch)) / (2.0 * h);
        worst_net = worst_net.max(rel_err(fd, g[i]));
    }

    let v = |rng: &mut rand_chacha::ChaCha8Rng| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let center = v(&mut rng);
    let pos = v(&mut rng);
    let negs: Vec<Vec<f64>> = (0..5).map(|_| v(&mut rng)).collect();
    let (dc, dp, dn) = pair_gradient(&center, &pos, &negs);
    let mut worst_sg: f64 = 0.0;
    for i in 0..2 {
        let (mut a, mut b) = (center.clone(), center.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (pair_objective(&a, &pos, &negs) - pair_objective(&b, &pos, &negs)) / (2.0 * h);
        worst_sg = worst_sg.max(rel_err(fd, dc[i]));
        let (mut a, mut b) = (pos.clone(), pos.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (pair_objective(&center, &a, &negs) - pair_objective(&center, &b, &negs)) / (2.0 * h);
        worst_sg = worst_sg.max(rel_err(fd, dp[i]));
        for k in 0..negs.len() {
            let (mut a, mut b) = (negs.clone(), negs.clone());
            a[k][i] += h;
            b[k][i] -= h;
            let fd = (pair_objective(&center, &pos, &a) - pair_objective(&center, &pos, &b)) / (2.0 * h);
            worst_sg = worst_sg.max(rel_err(fd, dn[k][i]));
        }
    }
    ensure(worst_net <= 1e-4, format!("network gradient rel. error {worst_net:e}"))?;
    ensure(worst_sg <= 1e-4, format!("skip-gram gradient rel. error {worst_sg:e}"))?;
    Ok(format!(
        "{}-parameter network max rel. error {worst_net:.1e}; skip-gram {worst_sg:.1e}",
        net.param_count()
    ))
}

fn c11_sample_determinism() -> Check {
    let (db, _) = uniformity_db()?;
    let dir = tempfile::tempdir().map_err(e)?;
    for t in &db.tables {
        t.save_csv(&dir.path().join(format!("{}.csv", t.id()))).map_err(e)?;
    }
    let meta = dir.path().join("meta.json");
    let query = dir.path().join("query.json");
    db.catalog.save(&meta).map_err(e)?;
    std::fs::write(&query, db.query.to_json().map_err(e)?).map_err(e)?;
    let run = |workers: &str, name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_modeljoin"))
            .args(["sample", "--n", "5000", "--seed", "42", "--workers", workers])
            .arg("--query")
            .arg(&query)
            .arg("--meta")
            .arg(&meta)
            .arg("--data")
            .arg(dir.path())
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(e)?;
        ensure(status.success(), format!("sample exited with {status}"))?;
        std::fs::read(&out).map_err(e)
    };
    let a = run("1", "a.csv")?;
    let b = run("1", "b.csv")?;
    let c = run("4", "c.csv")?;
    ensure(a == b, "two runs differ")?;
    ensure(a == c, "worker counts 1 and 4 differ")?;
    Ok(format!("{} bytes identical across runs and workers {{1, 4}}", a.len()))
}

fn c12_cyclic() -> Check {
    for seed in 0..50 {
        let db = random_triangle_db(seed);
        let plan = Plan::new(&db.query, &db.catalog, db.registry(), None).map_err(e)?;
        let oracle = oracle_join(&db.tables, &db.query, &plan.output_columns(), CAP).map_err(e)?;
        if oracle.distinct() < 5 {
            continue;
        }
        ensure(plan.is_cyclic(), "triangle not detected as cyclic")?;
        let n = 20_000;
        let s = plan
            .sample(n, &SampleOptions { seed: 3, ..Default::default() })
            .map_err(e)?;
        let r = oracle.sample(n, 4).map_err(e)?;
        let ks = ks_two_sample(&s.rows, &r, 0.01).map_err(e)?;
        ensure(
            ks.retained,
            format!("D = {:.5} > {:.5}", ks.statistic, ks.critical_value),
        )?;
        return Ok(format!(
            "triangle seed {seed}: {} distinct tuples, D = {:.5} <= {:.5}",
            oracle.distinct(),
            ks.statistic,
            ks.critical_value
        ));
    }
    Err("no triangle database with a varied join".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("worked example frequencies", c1_worked_example_frequencies),
        ("join conditionals", c2_join_conditionals),
        ("tuple probabilities match the oracle", c3_tuple_probabilities),
        ("join size exactness", c4_join_sizes),
        ("KS critical values", c5_ks_critical_values),
        ("empirical uniformity", c6_empirical_uniformity),
        ("F-score metric", c7_fscore_metric),
        ("error propagation over self joins", c8_error_propagation),
        ("cluster-count knob", c9_cluster_count),
        ("gradient checks", c10_gradient_checks),
        ("sample determinism", c11_sample_determinism),
        ("cyclic queries", c12_cyclic),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {p:?}")));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
