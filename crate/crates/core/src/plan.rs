//! End-to-end model join: resolve, build the skeleton, infer, sample.

use std::path::Path;
use std::sync::Arc;

use crate::catalog::{
    resolve_query, BoundSource, Catalog, ColumnRef, JoinQuery, ModelRegistry, ResolvedQuery,
};
use crate::data::Table;
use crate::error::{Error, Result};
use crate::inference::{bind_models, run_inference, InferenceResult};
use crate::join_graph::{build_skeleton, Skeleton};
use crate::num::Scalar;
use crate::sampler::{attach_nonjas, reject_cyclic, EliminatedModels, SampleMatrix, SkeletonGenerator};
use crate::table_model::{build_exact, ModelFile, TableModel};

/// Default cap on candidates tried when rejecting for cyclic queries.
pub const DEFAULT_REJECT_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOptions {
    pub seed: u64,
    pub workers: usize,
    pub reject_budget: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            seed: 0,
            workers: 1,
            reject_budget: DEFAULT_REJECT_BUDGET,
        }
    }
}

/// Registers a model for every table of `query` that has only a file source.
///
/// Data files become exact models; model files go through `load_model`.
pub fn bind_sources<T: Scalar>(
    query: &JoinQuery,
    catalog: &Catalog,
    registry: &mut ModelRegistry<T>,
    load_model: &dyn Fn(&ModelFile) -> Result<Arc<dyn TableModel<T>>>,
) -> Result<()> {
    for t in &query.tables {
        if registry.contains(t) {
            continue;
        }
        let Some(src) = query.sources.get(t) else { continue };
        let model: Arc<dyn TableModel<T>> = match src {
            crate::catalog::TableSource::Data(p) => {
                let meta = catalog
                    .get(t)
                    .ok_or_else(|| Error::Resolution(format!("unknown table {t}")))?;
                Arc::new(build_exact(&Table::load_csv(meta.clone(), p)?)?)
            }
            crate::catalog::TableSource::Model(p) => {
                let file = ModelFile::load(p)?;
                if file.manifest.table.table_id != *t {
                    return Err(Error::Resolution(format!(
                        "model file {} describes table {}, not {t}",
                        p.display(),
                        file.manifest.table.table_id
                    )));
                }
                load_model(&file)?
            }
        };
        registry.register(t.clone(), model);
    }
    Ok(())
}

/// Loads raw tables for every data source of `query`.
pub fn load_data_sources(query: &JoinQuery, catalog: &Catalog) -> Result<Vec<Table>> {
    let mut out = Vec::new();
    for t in &query.tables {
        if let Some(crate::catalog::TableSource::Data(p)) = query.sources.get(t) {
            let meta = catalog
                .get(t)
                .ok_or_else(|| Error::Resolution(format!("unknown table {t}")))?;
            out.push(Table::load_csv(meta.clone(), Path::new(p))?);
        }
    }
    Ok(out)
}

/// A resolved query with its skeleton, inference result and sampler.
pub struct QueryPlan<T: Scalar> {
    pub resolved: ResolvedQuery,
    pub skeleton: Skeleton,
    registry: ModelRegistry<T>,
    generator: SkeletonGenerator<T>,
}

impl<T: Scalar> QueryPlan<T> {
    pub fn new(
        query: &JoinQuery,
        catalog: &Catalog,
        registry: ModelRegistry<T>,
        root: Option<&str>,
    ) -> Result<Self> {
        let resolved = resolve_query(query, catalog, &registry)?;
        if let Some((t, _)) = resolved.sources.iter().find(|(_, s)| !matches!(s, BoundSource::Registered(_))) {
            return Err(Error::Resolution(format!("table {t} has no loaded model")));
        }
        let skeleton = build_skeleton(&resolved, root)?;
        let models = bind_models(&skeleton.graph, &registry)?;
        let result = run_inference(&skeleton.graph, &models)?;
        let generator = SkeletonGenerator::new(skeleton.graph.clone(), models, result)?;
        Ok(QueryPlan {
            resolved,
            skeleton,
            registry,
            generator,
        })
    }

    pub fn inference(&self) -> &InferenceResult<T> {
        self.generator.result()
    }

    pub fn generator(&self) -> &SkeletonGenerator<T> {
        &self.generator
    }

    pub fn registry(&self) -> &ModelRegistry<T> {
        &self.registry
    }

    pub fn is_cyclic(&self) -> bool {
        !self.skeleton.eliminated.is_empty()
    }

    /// Sample column names: skeleton root to leaf, then non-JAs.
    pub fn columns(&self) -> Vec<String> {
        let mut c = self.skeleton.graph.labels();
        c.extend(self.skeleton.attachments.labels());
        c
    }

    /// The source column behind each sample column, for comparisons with raw joins.
    pub fn output_columns(&self) -> Vec<ColumnRef> {
        self.skeleton
            .graph
            .nodes
            .iter()
            .map(|n| n.members[0].column.clone())
            .chain(self.skeleton.attachments.attachments.iter().map(|a| a.column.clone()))
            .collect()
    }

    pub fn sample(&self, n: usize, opts: &SampleOptions) -> Result<SampleMatrix> {
        if n > 0 && self.inference().is_empty() {
            return Err(Error::EmptyJoin);
        }
        let skeleton = if self.is_cyclic() {
            let elim = EliminatedModels::bind(&self.skeleton.eliminated, &self.registry)?;
            reject_cyclic(&self.generator, &elim, n, opts.seed, opts.reject_budget, opts.workers)?
        } else {
            self.generator.generate(n, opts.seed, opts.workers)?
        };
        attach_nonjas(
            skeleton,
            &self.skeleton.attachments,
            &self.registry,
            opts.seed,
            opts.workers,
        )
    }
}
