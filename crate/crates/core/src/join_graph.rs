//! Qualitative learning: the join-attribute skeleton of a resolved query.
//!
//! Every equality-joined group of columns becomes one JA node. A table whose
//! JAs land on two nodes is an edge between them; a table touching a single
//! node contributes a unary frequency factor at that node. Cycles are broken by
//! eliminating edges (handled later by rejection), and the residual must be a
//! path, which is rooted at one end and ordered root to leaf.

use std::collections::BTreeMap;

use crate::catalog::{ColumnRef, JaPosition, ResolvedQuery, TableMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMember {
    pub column: ColumnRef,
    pub position: JaPosition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JaNode {
    /// Column name used for this node in samples.
    pub label: String,
    pub members: Vec<NodeMember>,
}

/// A table linking two consecutive chain nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonEdge {
    pub parent: usize,
    pub child: usize,
    pub table_id: String,
    pub parent_attr: String,
    pub child_attr: String,
}

/// A table that touches only one node: its JA frequencies multiply in there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnaryFactor {
    pub table_id: String,
    pub attr: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonGraph {
    /// Root first, leaf last.
    pub nodes: Vec<JaNode>,
    /// `edges[i]` links `nodes[i]` to `nodes[i + 1]`.
    pub edges: Vec<SkeletonEdge>,
    /// Unary factors per node, parallel to `nodes`.
    pub unary: Vec<Vec<UnaryFactor>>,
}

impl SkeletonGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.label.clone()).collect()
    }

    /// The edge entering node `i`, if `i` is not the root.
    pub fn incoming(&self, i: usize) -> Option<&SkeletonEdge> {
        i.checked_sub(1).map(|p| &self.edges[p])
    }

    /// The edge leaving node `i`, if `i` is not the leaf.
    pub fn outgoing(&self, i: usize) -> Option<&SkeletonEdge> {
        self.edges.get(i)
    }

    /// Node index holding `column`, if it is a skeleton column.
    pub fn node_of(&self, column: &ColumnRef) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.members.iter().any(|m| &m.column == column))
    }
}

/// A selected non-JA column and the same-table JA nodes it is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub column: ColumnRef,
    pub label: String,
    /// (JA attribute of the owning table, node index)
    pub given: Vec<(String, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NonSkeletonAttachment {
    pub attachments: Vec<Attachment>,
}

impl NonSkeletonAttachment {
    pub fn is_empty(&self) -> bool {
        self.attachments.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.attachments.iter().map(|a| a.label.clone()).collect()
    }
}

/// An edge removed to break a cycle. `first_node`/`second_node` hold the
/// node indices of the table's first and second JA in the rooted skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminatedEdge {
    pub table_id: String,
    pub first_attr: String,
    pub second_attr: String,
    pub first_node: usize,
    pub second_node: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    pub graph: SkeletonGraph,
    pub attachments: NonSkeletonAttachment,
    pub eliminated: Vec<EliminatedEdge>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

struct GraphEdge<'a> {
    meta: &'a TableMeta,
    /// node of the table's first JA, node of its second JA
    ends: (usize, usize),
    attrs: (String, String),
}

/// Builds the rooted chain skeleton, non-JA attachments and eliminated edges.
///
/// `root_choice` names a node by its label or by any member column
/// (`table.attr`); it must be an end of the chain. By default the root is the
/// first JA in join-condition order that is an end of the chain.
pub fn build_skeleton(rq: &ResolvedQuery, root_choice: Option<&str>) -> Result<Skeleton> {
    // group joined columns into JA nodes, in first-appearance order
    let mut columns: Vec<ColumnRef> = Vec::new();
    let col_id = |c: &ColumnRef, columns: &mut Vec<ColumnRef>| match columns
        .iter()
        .position(|x| x == c)
    {
        Some(i) => i,
        None => {
            columns.push(c.clone());
            columns.len() - 1
        }
    };
    let mut pairs = Vec::with_capacity(rq.edges.len());
    for e in &rq.edges {
        let a = col_id(&e.parent, &mut columns);
        let b = col_id(&e.child, &mut columns);
        pairs.push((a, b));
    }
    let mut uf = UnionFind::new(columns.len());
    for &(a, b) in &pairs {
        uf.union(a, b);
    }
    let mut root_to_node: BTreeMap<usize, usize> = BTreeMap::new();
    let mut node_members: Vec<Vec<ColumnRef>> = Vec::new();
    for (i, c) in columns.iter().enumerate() {
        let r = uf.find(i);
        let n = *root_to_node.entry(r).or_insert_with(|| {
            node_members.push(Vec::new());
            node_members.len() - 1
        });
        node_members[n].push(c.clone());
    }
    let node_of_column = |c: &ColumnRef| -> Option<usize> {
        node_members.iter().position(|m| m.contains(c))
    };

    if node_members.is_empty() {
        return Err(Error::UnsupportedShape(
            "query has no join conditions, so there is no skeleton".into(),
        ));
    }

    // classify tables into graph edges and unary factors
    let mut graph_edges: Vec<GraphEdge> = Vec::new();
    let mut unary_by_node: Vec<Vec<UnaryFactor>> = vec![Vec::new(); node_members.len()];
    for meta in &rq.tables {
        let mut hits: Vec<(String, usize)> = Vec::new();
        for ja in &meta.join_attrs {
            if let Some(n) = node_of_column(&ColumnRef::new(&meta.table_id, ja)) {
                hits.push((ja.clone(), n));
            }
        }
        match hits.as_slice() {
            [] => {
                return Err(Error::Disconnected(format!(
                    "table {} takes part in no join condition",
                    meta.table_id
                )))
            }
            [(attr, n)] => unary_by_node[*n].push(UnaryFactor {
                table_id: meta.table_id.clone(),
                attr: attr.clone(),
            }),
            [(a0, n0), (a1, n1)] => {
                if n0 == n1 {
                    return Err(Error::UnsupportedShape(format!(
                        "both join attributes of table {} are equated",
                        meta.table_id
                    )));
                }
                graph_edges.push(GraphEdge {
                    meta,
                    ends: (*n0, *n1),
                    attrs: (a0.clone(), a1.clone()),
                });
            }
            _ => unreachable!("at most two join attributes per table"),
        }
    }

    // connectivity over nodes through edge tables
    let n_nodes = node_members.len();
    let mut conn = UnionFind::new(n_nodes);
    for e in &graph_edges {
        conn.union(e.ends.0, e.ends.1);
    }
    let comp0 = conn.find(0);
    if (0..n_nodes).any(|n| conn.find(n) != comp0) {
        return Err(Error::Disconnected(
            "join attributes fall into several unconnected groups".into(),
        ));
    }

    // break cycles: keep edges with fewer distinct pairs first (ties: smaller id),
    // so the edges eliminated are those with the most pairs (ties: larger id)
    let mut order: Vec<usize> = (0..graph_edges.len()).collect();
    order.sort_by(|&a, &b| {
        let pa = rq.pair_counts.get(&graph_edges[a].meta.table_id).copied().unwrap_or(0);
        let pb = rq.pair_counts.get(&graph_edges[b].meta.table_id).copied().unwrap_or(0);
        pa.cmp(&pb)
            .then_with(|| graph_edges[a].meta.table_id.cmp(&graph_edges[b].meta.table_id))
    });
    let mut forest = UnionFind::new(n_nodes);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for i in order {
        let (a, b) = graph_edges[i].ends;
        if forest.union(a, b) {
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    kept.sort_unstable();
    dropped.sort_by(|&a, &b| graph_edges[a].meta.table_id.cmp(&graph_edges[b].meta.table_id));

    // residual must be a path
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for &i in &kept {
        let (a, b) = graph_edges[i].ends;
        adj[a].push(i);
        adj[b].push(i);
    }
    if let Some(n) = (0..n_nodes).find(|&n| adj[n].len() > 2) {
        return Err(Error::UnsupportedShape(format!(
            "join attribute {} has {} neighbours; only chain skeletons are supported",
            node_members[n][0],
            adj[n].len()
        )));
    }

    let root = match root_choice {
        Some(choice) => {
            let n = node_members
                .iter()
                .position(|m| {
                    m.iter().any(|c| c.to_string() == choice)
                        || m.iter().all(|c| c.attr == choice)
                })
                .ok_or_else(|| Error::Resolution(format!("no join attribute named {choice}")))?;
            if adj[n].len() > 1 {
                return Err(Error::UnsupportedShape(format!(
                    "root {choice} is in the middle of the chain"
                )));
            }
            n
        }
        None => (0..n_nodes)
            .find(|&n| adj[n].len() <= 1)
            .expect("a path has an end"),
    };

    // walk the path from the root
    let mut path = vec![root];
    let mut path_edges: Vec<usize> = Vec::new();
    let mut prev_edge: Option<usize> = None;
    let mut cur = root;
    while let Some(&e) = adj[cur].iter().find(|&&e| Some(e) != prev_edge) {
        let (a, b) = graph_edges[e].ends;
        let next = if a == cur { b } else { a };
        path_edges.push(e);
        path.push(next);
        prev_edge = Some(e);
        cur = next;
    }
    debug_assert_eq!(path.len(), n_nodes);
    let position_in_path: BTreeMap<usize, usize> =
        path.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    // labels
    let attr_label = |members: &[ColumnRef]| -> Option<String> {
        let a = &members[0].attr;
        members.iter().all(|c| &c.attr == a).then(|| a.clone())
    };
    let simple: Vec<Option<String>> = node_members.iter().map(|m| attr_label(m)).collect();
    let label_of = |n: usize| -> String {
        match &simple[n] {
            Some(l) if simple.iter().filter(|s| s.as_ref() == Some(l)).count() == 1 => l.clone(),
            _ => node_members[n][0].to_string(),
        }
    };

    let meta_of = |t: &str| rq.table(t).expect("tables resolved");
    let nodes: Vec<JaNode> = path
        .iter()
        .map(|&n| JaNode {
            label: label_of(n),
            members: node_members[n]
                .iter()
                .map(|c| NodeMember {
                    column: c.clone(),
                    position: meta_of(&c.table)
                        .ja_position(&c.attr)
                        .expect("join columns are declared JAs"),
                })
                .collect(),
        })
        .collect();
    let edges: Vec<SkeletonEdge> = path_edges
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let ge = &graph_edges[e];
            let parent_node = path[i];
            let (parent_attr, child_attr) = if ge.ends.0 == parent_node {
                (ge.attrs.0.clone(), ge.attrs.1.clone())
            } else {
                (ge.attrs.1.clone(), ge.attrs.0.clone())
            };
            SkeletonEdge {
                parent: i,
                child: i + 1,
                table_id: ge.meta.table_id.clone(),
                parent_attr,
                child_attr,
            }
        })
        .collect();
    let unary: Vec<Vec<UnaryFactor>> = path.iter().map(|&n| unary_by_node[n].clone()).collect();
    let eliminated: Vec<EliminatedEdge> = dropped
        .iter()
        .map(|&e| {
            let ge = &graph_edges[e];
            EliminatedEdge {
                table_id: ge.meta.table_id.clone(),
                first_attr: ge.attrs.0.clone(),
                second_attr: ge.attrs.1.clone(),
                first_node: position_in_path[&ge.ends.0],
                second_node: position_in_path[&ge.ends.1],
            }
        })
        .collect();
    let graph = SkeletonGraph {
        nodes,
        edges,
        unary,
    };

    // non-JA attachments
    let mut taken: Vec<String> = graph.labels();
    let mut attachments = Vec::new();
    for c in &rq.selected {
        if graph.node_of(c).is_some() {
            continue;
        }
        let meta = meta_of(&c.table);
        let given: Vec<(String, usize)> = meta
            .join_attrs
            .iter()
            .filter_map(|ja| {
                graph
                    .node_of(&ColumnRef::new(&meta.table_id, ja))
                    .map(|n| (ja.clone(), n))
            })
            .collect();
        let clash = taken.contains(&c.attr)
            || rq
                .selected
                .iter()
                .any(|o| o != c && o.attr == c.attr && graph.node_of(o).is_none());
        let label = if clash { c.to_string() } else { c.attr.clone() };
        taken.push(label.clone());
        attachments.push(Attachment {
            column: c.clone(),
            label,
            given,
        });
    }

    Ok(Skeleton {
        graph,
        attachments: NonSkeletonAttachment { attachments },
        eliminated,
    })
}

/// Leaf-to-root node indices; the reverse is the sampling order.
pub fn elimination_order(g: &SkeletonGraph) -> Vec<usize> {
    (0..g.nodes.len()).rev().collect()
}
