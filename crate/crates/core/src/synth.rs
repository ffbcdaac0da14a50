//! Synthetic two-attribute tables with controlled distinct-value and
//! distinct-pair counts, and self-join chains built from them.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, JoinQuery, TableMeta};
use crate::data::Table;
use crate::error::{Error, Result};

pub const FIRST_ATTR: &str = "att0";
pub const SECOND_ATTR: &str = "att1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub ndv1: usize,
    pub ndv2: usize,
    /// Distinct (first, second) pairs.
    pub ndp: usize,
    pub seed: u64,
    /// Zipf exponent for pair multiplicities; uniform when absent.
    #[serde(default)]
    pub zipf: Option<f64>,
    /// Draw both attributes from one token domain (`v0, v1, ...`), as self-joins need.
    #[serde(default)]
    pub shared_domain: bool,
}

impl SynthSpec {
    pub fn new(rows: usize, ndv1: usize, ndv2: usize, ndp: usize, seed: u64) -> Self {
        SynthSpec {
            rows,
            ndv1,
            ndv2,
            ndp,
            seed,
            zipf: None,
            shared_domain: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if self.ndv1 == 0 || self.ndv2 == 0 {
            return fail("distinct value counts must be positive".into());
        }
        if self.ndp < self.ndv1.max(self.ndv2) {
            return fail(format!(
                "{} distinct pairs cannot cover {} and {} distinct values",
                self.ndp, self.ndv1, self.ndv2
            ));
        }
        if self.ndp as u128 > self.ndv1 as u128 * self.ndv2 as u128 {
            return fail(format!(
                "{} distinct pairs exceed {} x {} possible",
                self.ndp, self.ndv1, self.ndv2
            ));
        }
        if self.rows < self.ndp {
            return fail(format!("{} rows cannot hold {} distinct pairs", self.rows, self.ndp));
        }
        if let Some(s) = self.zipf {
            if !(s.is_finite() && s >= 0.0) {
                return fail(format!("zipf exponent {s} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    fn tokens(&self) -> (Vec<String>, Vec<String>) {
        let (p1, p2) = if self.shared_domain { ("v", "v") } else { ("a", "b") };
        (
            (0..self.ndv1).map(|i| format!("{p1}{i}")).collect(),
            (0..self.ndv2).map(|i| format!("{p2}{i}")).collect(),
        )
    }
}

/// Generates a table satisfying `spec` exactly: `rows` rows, `ndv1`/`ndv2`
/// distinct values and `ndp` distinct pairs, each pair occurring at least once.
pub fn gen_table(table_id: &str, spec: &SynthSpec) -> Result<Table> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (t1, t2) = spec.tokens();
    let mut perm1: Vec<usize> = (0..spec.ndv1).collect();
    let mut perm2: Vec<usize> = (0..spec.ndv2).collect();
    perm1.shuffle(&mut rng);
    perm2.shuffle(&mut rng);

    // covering pairs make every value of both attributes appear
    let cover = spec.ndv1.max(spec.ndv2);
    let mut pairs: Vec<(usize, usize)> = (0..cover)
        .map(|i| (perm1[i % spec.ndv1], perm2[i % spec.ndv2]))
        .collect();
    let mut seen: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
    let wanted = spec.ndp - cover;
    let space = spec.ndv1 * spec.ndv2;
    if wanted > 0 && space <= 4 * spec.ndp {
        let mut rest: Vec<(usize, usize)> = (0..spec.ndv1)
            .flat_map(|x| (0..spec.ndv2).map(move |y| (x, y)))
            .filter(|p| !seen.contains(p))
            .collect();
        rest.shuffle(&mut rng);
        pairs.extend(rest.into_iter().take(wanted));
    } else {
        while pairs.len() < spec.ndp {
            let p = (rng.gen_range(0..spec.ndv1), rng.gen_range(0..spec.ndv2));
            if seen.insert(p) {
                pairs.push(p);
            }
        }
    }

    let mut chosen: Vec<usize> = (0..pairs.len()).collect();
    let extra = spec.rows - pairs.len();
    match spec.zipf {
        Some(s) if s > 0.0 => {
            let mut cdf = Vec::with_capacity(pairs.len());
            let mut acc = 0.0;
            for k in 1..=pairs.len() {
                acc += 1.0 / (k as f64).powf(s);
                cdf.push(acc);
            }
            for _ in 0..extra {
                let u = rng.gen::<f64>() * acc;
                chosen.push(cdf.partition_point(|&c| c <= u).min(pairs.len() - 1));
            }
        }
        _ => chosen.extend((0..extra).map(|_| rng.gen_range(0..pairs.len()))),
    }
    chosen.shuffle(&mut rng);
    let rows = chosen
        .into_iter()
        .map(|i| {
            let (x, y) = pairs[i];
            vec![t1[x].clone(), t2[y].clone()]
        })
        .collect();
    Table::new(
        TableMeta::new(table_id, &[FIRST_ATTR, SECOND_ATTR], 0, &[FIRST_ATTR, SECOND_ATTR]),
        rows,
    )
}

/// `ways` copies `T1..Tw` of `base`, chained by `Tᵢ.att1 = Tᵢ₊₁.att0`.
#[derive(Debug, Clone)]
pub struct SelfJoinFixture {
    pub tables: Vec<Table>,
    pub catalog: Catalog,
    pub query: JoinQuery,
}

pub fn gen_selfjoin_fixture(base: &Table, ways: usize) -> Result<SelfJoinFixture> {
    if ways == 0 {
        return Err(Error::Parameter("a self join needs at least one copy".into()));
    }
    let tables: Vec<Table> = (1..=ways)
        .map(|i| {
            let mut t = base.clone();
            t.meta.table_id = format!("T{i}");
            t
        })
        .collect();
    let joins: Vec<String> = (1..ways)
        .map(|i| format!("T{i}.{SECOND_ATTR} = T{}.{FIRST_ATTR}", i + 1))
        .collect();
    let joins: Vec<&str> = joins.iter().map(String::as_str).collect();
    let mut query = JoinQuery::new(&[], &joins)?;
    if ways == 1 {
        query.tables = vec!["T1".to_string()];
        query.select = base
            .meta
            .attributes
            .iter()
            .map(|a| crate::catalog::ColumnRef::new("T1", a.as_str()))
            .collect();
    }
    let catalog = Catalog::new(tables.iter().map(|t| t.meta.clone()).collect())?;
    Ok(SelfJoinFixture {
        tables,
        catalog,
        query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::oracle_join;
    use proptest::prelude::*;

    fn census(t: &Table) -> (usize, usize, usize) {
        let a: BTreeSet<&String> = t.rows.iter().map(|r| &r[0]).collect();
        let b: BTreeSet<&String> = t.rows.iter().map(|r| &r[1]).collect();
        let p: BTreeSet<(&String, &String)> = t.rows.iter().map(|r| (&r[0], &r[1])).collect();
        (a.len(), b.len(), p.len())
    }

    #[test]
    fn medium_table_counts() {
        let t = gen_table("S", &SynthSpec::new(10_000, 200, 200, 2000, 1)).unwrap();
        assert_eq!(t.len(), 10_000);
        assert_eq!(census(&t), (200, 200, 2000));
    }

    #[test]
    fn single_pair() {
        let t = gen_table("S", &SynthSpec::new(1, 1, 1, 1, 0)).unwrap();
        assert_eq!(t.rows, vec![vec!["a0".to_string(), "b0".to_string()]]);
    }

    #[test]
    fn infeasible_specs() {
        assert!(gen_table("S", &SynthSpec::new(100, 3, 3, 10, 0)).is_err());
        assert!(gen_table("S", &SynthSpec::new(5, 3, 3, 9, 0)).is_err());
        assert!(gen_table("S", &SynthSpec::new(100, 5, 2, 4, 0)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let s = SynthSpec::new(500, 20, 30, 100, 3);
        assert_eq!(gen_table("S", &s).unwrap(), gen_table("S", &s).unwrap());
    }

    #[test]
    fn zipf_keeps_counts() {
        let mut s = SynthSpec::new(2000, 20, 20, 100, 3);
        s.zipf = Some(1.1);
        assert_eq!(census(&gen_table("S", &s).unwrap()), (20, 20, 100));
    }

    #[test]
    fn self_join_shapes() {
        let mut s = SynthSpec::new(4000, 20, 20, 60, 2);
        s.shared_domain = true;
        let base = gen_table("S", &s).unwrap();
        for (ways, edges) in [(3, 2), (5, 4), (7, 6)] {
            let f = gen_selfjoin_fixture(&base, ways).unwrap();
            assert_eq!(f.tables.len(), ways);
            assert_eq!(f.query.joins.len(), edges);
        }
        let one = gen_selfjoin_fixture(&base, 1).unwrap();
        let o = oracle_join(&one.tables, &one.query, &one.query.select, 10_000).unwrap();
        assert_eq!(o.size, 4000);
    }

    proptest! {
        #[test]
        fn output_satisfies_spec(
            ndv1 in 1usize..15, ndv2 in 1usize..15, extra in 0usize..40, seed in any::<u64>(), pick in 0.0f64..1.0
        ) {
            let lo = ndv1.max(ndv2);
            let hi = ndv1 * ndv2;
            let ndp = lo + ((hi - lo) as f64 * pick) as usize;
            let rows = ndp + extra;
            let t = gen_table("S", &SynthSpec::new(rows, ndv1, ndv2, ndp, seed)).unwrap();
            prop_assert_eq!(t.len(), rows);
            prop_assert_eq!(census(&t), (ndv1, ndv2, ndp));
        }
    }
}
