//! Multitype allele trees.
//!
//! Each node stands for one allelic subfamily and records its size `A`, its
//! type `C` and the vector `d` of mutant children by type. The children of a
//! node are the subfamilies founded by those mutants, listed block by block:
//! mothers ranked by decreasing number of mutant children (ties by
//! breadth-first index), and inside a block by increasing type, then
//! decreasing size (ties by breadth-first index of the founder).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::genealogy::{ColoredForest, NodeId};

/// Ulam-Harris label: a finite sequence of positive integers.
pub type Path = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlleleRecord {
    /// `A_u`: subfamily size.
    pub size: u64,
    /// `C_u`: zero-based type.
    pub ty: usize,
    /// `d_u`: mutant children by type.
    pub mutants: Counts,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlleleTree {
    d: usize,
    /// Records in shortlex order of their paths.
    nodes: Vec<(Path, AlleleRecord)>,
    index: HashMap<Path, usize>,
    /// 0 for a tree rooted at the empty path, 1 for a forest.
    root_depth: usize,
    /// Last level whose subfamilies are materialized, for pruned forests.
    depth_limit: Option<u32>,
}

struct Pending {
    path: Path,
    members: Vec<NodeId>,
    depth: u32,
}

/// Single-root allele tree; all roots of the forest must share one type.
pub fn build_allele_tree(forest: &ColoredForest) -> Result<AlleleTree> {
    let first = forest.ty(forest.roots()[0]);
    if forest.roots().iter().any(|&r| forest.ty(r) != first) {
        return Err(Error::MixedRootTypes);
    }
    Ok(build(forest, vec![(Vec::new(), first)], 0))
}

/// One root per type present among the forest roots, labelled `1, 2, ...`
/// in increasing type order.
pub fn build_allele_forest(forest: &ColoredForest) -> AlleleTree {
    let a = forest.initial();
    let roots: Vec<(Path, usize)> = (0..forest.d())
        .filter(|&j| a[j] > 0)
        .enumerate()
        .map(|(k, j)| (vec![k as u32 + 1], j))
        .collect();
    build(forest, roots, 1)
}

fn build(forest: &ColoredForest, roots: Vec<(Path, usize)>, root_depth: usize) -> AlleleTree {
    let limit = forest.generation_limit();
    let mut queue: std::collections::VecDeque<Pending> = roots
        .into_iter()
        .map(|(path, ty)| {
            let mut members = Vec::new();
            for &r in forest.roots().iter().filter(|&&r| forest.ty(r) == ty) {
                members.extend(forest.subtree_members(r));
            }
            Pending { path, members, depth: 0 }
        })
        .collect();
    let mut nodes = Vec::new();
    while let Some(Pending { path, members, depth }) = queue.pop_front() {
        let ty = forest.ty(members[0]);
        let mut mutants = Counts::zeros(forest.d());
        let mut mothers: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
        for &m in &members {
            let kids: Vec<NodeId> = forest.children(m).filter(|&c| forest.is_mutant(c)).collect();
            for &c in &kids {
                mutants[forest.ty(c)] += 1;
            }
            if !kids.is_empty() {
                mothers.push((m, kids));
            }
        }
        if limit.is_none_or(|g| depth < g) {
            mothers.sort_by_key(|(m, kids)| (std::cmp::Reverse(kids.len()), *m));
            let mut next = 1u32;
            for (_, kids) in mothers {
                let mut block: Vec<(usize, usize, NodeId, Vec<NodeId>)> = kids
                    .into_iter()
                    .map(|c| {
                        let sub = forest.subtree_members(c);
                        (forest.ty(c), sub.len(), c, sub)
                    })
                    .collect();
                block.sort_by_key(|&(t, size, c, _)| (t, std::cmp::Reverse(size), c));
                for (_, _, _, sub) in block {
                    let mut child = path.clone();
                    child.push(next);
                    next += 1;
                    queue.push_back(Pending {
                        path: child,
                        members: sub,
                        depth: depth + 1,
                    });
                }
            }
        }
        nodes.push((
            path,
            AlleleRecord {
                size: members.len() as u64,
                ty,
                mutants,
            },
        ));
    }
    nodes.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
    let index = nodes.iter().enumerate().map(|(k, (p, _))| (p.clone(), k)).collect();
    AlleleTree {
        d: forest.d(),
        nodes,
        index,
        root_depth,
        depth_limit: limit,
    }
}

impl AlleleTree {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_forest(&self) -> bool {
        self.root_depth == 1
    }

    /// Nodes in shortlex order of their paths.
    pub fn nodes(&self) -> impl Iterator<Item = (&Path, &AlleleRecord)> {
        self.nodes.iter().map(|(p, r)| (p, r))
    }

    /// Record at `path`; `None` stands for a padding node `(0, 0, 0)`.
    pub fn get(&self, path: &[u32]) -> Option<&AlleleRecord> {
        self.index.get(path).map(|&k| &self.nodes[k].1)
    }

    /// Level of a path: 0 for roots.
    pub fn level_of(&self, path: &[u32]) -> usize {
        path.len() - self.root_depth
    }

    /// Paths of the materialized children of `path`, in order.
    pub fn children(&self, path: &[u32]) -> Vec<Path> {
        let mut out = Vec::new();
        for k in 1.. {
            let mut c = path.to_vec();
            c.push(k);
            if !self.index.contains_key(&c) {
                break;
            }
            out.push(c);
        }
        out
    }

    /// `T_k(i) = sum_{|u|=k} A_u 1{C_u = i}` and `M_{k+1} = sum_{|u|=k} d_u`,
    /// in the layout of the clone-mutant chain.
    pub fn aggregate_levels(&self) -> Vec<(Counts, Counts)> {
        let mut levels: Vec<(Counts, Counts)> = Vec::new();
        for (path, rec) in &self.nodes {
            let k = self.level_of(path);
            if levels.len() <= k {
                levels.resize(k + 1, (Counts::zeros(self.d), Counts::zeros(self.d)));
            }
            levels[k].0[rec.ty] += rec.size;
            levels[k].1 += &rec.mutants;
        }
        let truncated = match (self.depth_limit, levels.last()) {
            (Some(g), Some(last)) => levels.len() == g as usize + 1 && !last.1.is_zero(),
            _ => false,
        };
        if !truncated {
            levels.push((Counts::zeros(self.d), Counts::zeros(self.d)));
        }
        levels
    }

    /// Dotted path, or `∅` for the empty path.
    pub fn path_label(path: &[u32]) -> String {
        if path.is_empty() {
            return "∅".to_string();
        }
        let parts: Vec<String> = path.iter().map(u32::to_string).collect();
        parts.join(".")
    }

    /// Tab-separated records `path A C d` with one-based types.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path\tA\tC\td")?;
        for (path, rec) in &self.nodes {
            writeln!(w, "{}\t{}\t{}\t{}", Self::path_label(path), rec.size, rec.ty + 1, rec.mutants.to_csv())?;
        }
        Ok(())
    }

    /// Graph description with node labels `C:A`.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph allele {\n");
        for (k, (_, rec)) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "  a{k} [label=\"{}:{}\"];", rec.ty + 1, rec.size);
        }
        for (k, (path, _)) in self.nodes.iter().enumerate() {
            if path.len() > self.root_depth {
                let parent = self.index[&path[..path.len() - 1]];
                let _ = writeln!(s, "  a{parent} -> a{k};");
            }
        }
        s.push_str("}\n");
        s
    }
}
