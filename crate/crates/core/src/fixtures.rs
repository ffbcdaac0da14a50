//! The four-table worked example used throughout the docs and tests, and
//! seeded random small databases for property checks.
//!
//! ```text
//! D1(A,B)    D2(B,C,D)     D3(D,E)    D4(E,F)
//! a1 b1      b1 c1 d1      d2 e1      e1 f1
//! a1 b2      b1 c2 d1      d2 e2      e2 f1
//! a2 b3      b3 c2 d1      d2 e3      e2 f1
//! a3 b3      b3 c2 d2      d1 e3      e2 f2
//! ```

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Catalog, JoinQuery, ModelRegistry, TableMeta};
use crate::data::Table;
use crate::num::Scalar;
use crate::table_model::build_exact;

pub fn chain4_metas() -> Vec<TableMeta> {
    vec![
        TableMeta::new("D1", &["A", "B"], 4, &["B"]),
        TableMeta::new("D2", &["B", "C", "D"], 4, &["B", "D"]),
        TableMeta::new("D3", &["D", "E"], 4, &["D", "E"]),
        TableMeta::new("D4", &["E", "F"], 4, &["E"]),
    ]
}

pub fn chain4_catalog() -> Catalog {
    Catalog::new(chain4_metas()).expect("valid fixture")
}

pub fn chain4_table(id: &str) -> Table {
    let rows: &[&[&str]] = match id {
        "D1" => &[&["a1", "b1"], &["a1", "b2"], &["a2", "b3"], &["a3", "b3"]],
        "D2" => &[
            &["b1", "c1", "d1"],
            &["b1", "c2", "d1"],
            &["b3", "c2", "d1"],
            &["b3", "c2", "d2"],
        ],
        "D3" => &[&["d2", "e1"], &["d2", "e2"], &["d2", "e3"], &["d1", "e3"]],
        "D4" => &[&["e1", "f1"], &["e2", "f1"], &["e2", "f1"], &["e2", "f2"]],
        other => panic!("no fixture table {other}"),
    };
    let meta = chain4_metas()
        .into_iter()
        .find(|m| m.table_id == id)
        .expect("fixture meta");
    Table::from_strs(meta, rows).expect("valid fixture")
}

pub fn chain4_tables() -> Vec<Table> {
    ["D1", "D2", "D3", "D4"].into_iter().map(chain4_table).collect()
}

/// `SELECT A, C, F FROM D1, D2, D3, D4 WHERE D1.B = D2.B AND D2.D = D3.D AND D3.E = D4.E`
pub fn chain4_query() -> JoinQuery {
    JoinQuery::new(
        &["D1.A", "D2.C", "D4.F"],
        &["D1.B = D2.B", "D2.D = D3.D", "D3.E = D4.E"],
    )
    .expect("valid fixture")
}

/// Exact models for all four tables.
pub fn chain4_registry<T: Scalar>() -> ModelRegistry<T> {
    let mut reg = ModelRegistry::new();
    for t in chain4_tables() {
        let m = build_exact(&t).expect("valid fixture");
        reg.register(t.id().to_string(), Arc::new(m));
    }
    reg
}

/// A small database with its catalog and one join query over it.
#[derive(Debug, Clone)]
pub struct SmallDb {
    pub tables: Vec<Table>,
    pub catalog: Catalog,
    pub query: JoinQuery,
}

impl SmallDb {
    pub fn table(&self, id: &str) -> &Table {
        self.tables.iter().find(|t| t.id() == id).expect("table of this database")
    }

    /// Exact models of every table.
    pub fn registry<T: Scalar>(&self) -> ModelRegistry<T> {
        let mut reg = ModelRegistry::new();
        for t in &self.tables {
            reg.register(t.id().to_string(), Arc::new(build_exact(t).expect("valid table")));
        }
        reg
    }
}

fn random_rows(
    rng: &mut ChaCha8Rng,
    columns: &[(String, usize)],
    rows: usize,
) -> Vec<Vec<String>> {
    (0..rows)
        .map(|_| {
            columns
                .iter()
                .map(|(prefix, d)| format!("{prefix}{}", rng.gen_range(0..*d)))
                .collect()
        })
        .collect()
}

/// A random chain `T0 - T1 - ... - T(k-1)` of 3 to 5 tables with small domains.
///
/// End tables carry one join attribute and one non-join attribute; middle
/// tables carry two join attributes in a random declared order. Four-table
/// chains sometimes get a fifth table hanging off a middle join attribute.
pub fn random_chain_db(seed: u64) -> SmallDb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: usize = rng.gen_range(3..=5);
    let domain: Vec<usize> = (0..=k).map(|_| rng.gen_range(2..=6)).collect();
    let ja = |i: usize| (format!("J{i}"), format!("j{i}_"));
    let mut metas = Vec::new();
    let mut tables = Vec::new();
    let mut joins = Vec::new();
    for t in 0..k {
        let id = format!("T{t}");
        let (attrs, jas, cols): (Vec<String>, Vec<String>, Vec<(String, usize)>) = if t == 0 {
            let (a, p) = ja(1);
            (vec!["N0".into(), a.clone()], vec![a], vec![("n".into(), 3), (p, domain[1])])
        } else if t == k - 1 {
            let (a, p) = ja(t);
            (
                vec![a.clone(), format!("N{t}")],
                vec![a],
                vec![(p, domain[t]), ("m".into(), 3)],
            )
        } else {
            let (a, pa) = ja(t);
            let (b, pb) = ja(t + 1);
            let jas = if rng.gen_bool(0.5) { vec![a.clone(), b.clone()] } else { vec![b.clone(), a.clone()] };
            (
                vec![a, b, format!("N{t}")],
                jas,
                vec![(pa, domain[t]), (pb, domain[t + 1]), ("c".into(), 2)],
            )
        };
        let rows = rng.gen_range(3..=12);
        let data = random_rows(&mut rng, &cols, rows);
        let attr_refs: Vec<&str> = attrs.iter().map(String::as_str).collect();
        let ja_refs: Vec<&str> = jas.iter().map(String::as_str).collect();
        let meta = TableMeta::new(id.clone(), &attr_refs, 0, &ja_refs);
        tables.push(Table::new(meta.clone(), data).expect("valid random table"));
        metas.push(meta);
        if t > 0 {
            joins.push(format!("T{}.J{t} = T{t}.J{t}", t - 1));
        }
    }
    if k == 4 && rng.gen_bool(0.5) {
        let node = rng.gen_range(2..k);
        let (a, p) = ja(node);
        let meta = TableMeta::new("U", &[&a, "M"], 0, &[&a]);
        let rows = rng.gen_range(3..=12);
        let data = random_rows(&mut rng, &[(p, domain[node]), ("u".into(), 2)], rows);
        tables.push(Table::new(meta.clone(), data).expect("valid random table"));
        metas.push(meta);
        joins.push(format!("T{}.J{node} = U.J{node}", node - 1));
    }
    joins.shuffle(&mut rng);
    let joins: Vec<&str> = joins.iter().map(String::as_str).collect();
    let last = format!("T{}.N{}", k - 1, k - 1);
    let query = JoinQuery::new(&["T0.N0", &last], &joins).expect("valid random query");
    SmallDb {
        tables,
        catalog: Catalog::new(metas).expect("valid random catalog"),
        query,
    }
}

/// A random triangle `T1(X,Y) ⋈ T2(Y,Z) ⋈ T3(Z,X)` with small domains.
pub fn random_triangle_db(seed: u64) -> SmallDb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = [("T1", "X", "Y"), ("T2", "Y", "Z"), ("T3", "Z", "X")];
    let mut metas = Vec::new();
    let mut tables = Vec::new();
    for (id, a, b) in spec {
        let meta = TableMeta::new(id, &[a, b], 0, &[a, b]);
        let rows = rng.gen_range(10..=20);
        let cols = [(a.to_lowercase(), 4), (b.to_lowercase(), 4)];
        let data = random_rows(&mut rng, &cols, rows);
        tables.push(Table::new(meta.clone(), data).expect("valid random table"));
        metas.push(meta);
    }
    let query = JoinQuery::new(&[], &["T1.Y = T2.Y", "T2.Z = T3.Z", "T3.X = T1.X"])
        .expect("valid triangle query");
    SmallDb {
        tables,
        catalog: Catalog::new(metas).expect("valid triangle catalog"),
        query,
    }
}
