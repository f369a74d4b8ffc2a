//! Colored genealogical forests.
//!
//! Nodes live in one arena in breadth-first order, tree by tree: the ids of a
//! tree form a contiguous range, parents precede their children and the
//! children of a node are contiguous. Roots are grouped by type ascending.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::ops::Range;

use rand::Rng;

use crate::counts::Counts;
use crate::error::{CapKind, Error, Result};
use crate::offspring_laws::MotherDependentLaw;

pub type NodeId = usize;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Node {
    parent: u32,
    first_child: u32,
    n_children: u32,
    tree: u32,
    level: u32,
    allelic_gen: u32,
    ty: u16,
    mutant: bool,
    expanded: bool,
}

/// Simulation bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub max_nodes: u64,
    pub max_levels: u64,
    /// Nodes of a larger allelic generation are recorded but get no children.
    pub max_allelic_generation: Option<u32>,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_nodes: 10_000_000,
            max_levels: 100_000,
            max_allelic_generation: None,
        }
    }
}

impl Caps {
    pub fn with_max_nodes(mut self, n: u64) -> Self {
        self.max_nodes = n;
        self
    }

    pub fn pruned_at(mut self, generation: u32) -> Self {
        self.max_allelic_generation = Some(generation);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColoredForest {
    d: usize,
    nodes: Vec<Node>,
    tree_starts: Vec<usize>,
    generation_limit: Option<u32>,
}

/// A maximal connected single-type subgraph, members in breadth-first order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubtreeRef {
    pub root: NodeId,
    pub members: Vec<NodeId>,
    pub ty: usize,
}

impl SubtreeRef {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Set of nodes, none of which is an ancestor of another.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingLine {
    pub members: Vec<NodeId>,
}

/// Draw a forest with `initial[i]` roots of type `i`, breadth-first.
pub fn simulate_forest<R: Rng + ?Sized>(
    law: &MotherDependentLaw,
    initial: &Counts,
    caps: &Caps,
    rng: &mut R,
) -> Result<ColoredForest> {
    law.check_dim(initial.dim())?;
    if initial.is_zero() {
        return Err(Error::InvalidArgument("initial population is empty".into()));
    }
    let limit = caps.max_allelic_generation;
    let mut nodes: Vec<Node> = Vec::new();
    let mut tree_starts = Vec::new();
    let mut buf = Vec::new();
    for ty in 0..law.d() {
        for _ in 0..initial[ty] {
            let start = nodes.len();
            if start as u64 >= caps.max_nodes {
                return Err(Error::CapExceeded { kind: CapKind::Nodes, limit: caps.max_nodes });
            }
            let tree = tree_starts.len() as u32;
            tree_starts.push(start);
            nodes.push(Node {
                parent: NONE,
                first_child: NONE,
                n_children: 0,
                tree,
                level: 0,
                allelic_gen: 0,
                ty: ty as u16,
                mutant: true,
                expanded: false,
            });
            let mut cursor = start;
            while cursor < nodes.len() {
                let node = nodes[cursor];
                if limit.is_some_and(|g| node.allelic_gen > g) {
                    cursor += 1;
                    continue;
                }
                law.sample_children(node.ty as usize, rng, &mut buf);
                if !buf.is_empty() {
                    if (nodes.len() + buf.len()) as u64 > caps.max_nodes {
                        return Err(Error::CapExceeded { kind: CapKind::Nodes, limit: caps.max_nodes });
                    }
                    if node.level as u64 + 1 >= caps.max_levels {
                        return Err(Error::CapExceeded { kind: CapKind::Levels, limit: caps.max_levels });
                    }
                }
                let first = nodes.len() as u32;
                for &child_ty in &buf {
                    let mutant = child_ty != node.ty as usize;
                    nodes.push(Node {
                        parent: cursor as u32,
                        first_child: NONE,
                        n_children: 0,
                        tree,
                        level: node.level + 1,
                        allelic_gen: node.allelic_gen + mutant as u32,
                        ty: child_ty as u16,
                        mutant,
                        expanded: false,
                    });
                }
                let n = &mut nodes[cursor];
                n.expanded = true;
                n.n_children = buf.len() as u32;
                n.first_child = if buf.is_empty() { NONE } else { first };
                cursor += 1;
            }
        }
    }
    Ok(ColoredForest {
        d: law.d(),
        nodes,
        tree_starts,
        generation_limit: limit,
    })
}

impl ColoredForest {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_trees(&self) -> usize {
        self.tree_starts.len()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.tree_starts
    }

    /// Allelic generation beyond which nodes were not expanded, if any.
    pub fn generation_limit(&self) -> Option<u32> {
        self.generation_limit
    }

    /// Root counts by type.
    pub fn initial(&self) -> Counts {
        let mut a = Counts::zeros(self.d);
        for &r in &self.tree_starts {
            a[self.ty(r)] += 1;
        }
        a
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        let p = self.nodes[id].parent;
        (p != NONE).then_some(p as usize)
    }

    pub fn children(&self, id: NodeId) -> Range<NodeId> {
        let n = &self.nodes[id];
        if n.n_children == 0 {
            return 0..0;
        }
        n.first_child as usize..(n.first_child + n.n_children) as usize
    }

    pub fn ty(&self, id: NodeId) -> usize {
        self.nodes[id].ty as usize
    }

    pub fn level(&self, id: NodeId) -> u32 {
        self.nodes[id].level
    }

    pub fn allelic_generation(&self, id: NodeId) -> u32 {
        self.nodes[id].allelic_gen
    }

    pub fn tree_of(&self, id: NodeId) -> usize {
        self.nodes[id].tree as usize
    }

    /// Type differs from the parent's; roots are flagged by convention.
    pub fn is_mutant(&self, id: NodeId) -> bool {
        self.nodes[id].mutant
    }

    /// Whether the children of this node were drawn (false for pruned nodes).
    pub fn is_expanded(&self, id: NodeId) -> bool {
        self.nodes[id].expanded
    }

    /// One-based breadth-first index within the node's tree.
    pub fn bfs_index(&self, id: NodeId) -> usize {
        id - self.tree_starts[self.tree_of(id)] + 1
    }

    /// Children counts by type.
    pub fn offspring_vector(&self, id: NodeId) -> Counts {
        let mut v = Counts::zeros(self.d);
        for c in self.children(id) {
            v[self.ty(c)] += 1;
        }
        v
    }

    /// Key realizing the Ulam-Harris (shortlex) order across the forest.
    pub fn order_key(&self, id: NodeId) -> (u32, u32, NodeId) {
        (self.nodes[id].level, self.nodes[id].tree, id)
    }

    pub fn is_ancestor(&self, a: NodeId, mut b: NodeId) -> bool {
        while let Some(p) = self.parent(b) {
            if p == a {
                return true;
            }
            b = p;
        }
        false
    }

    /// `Y_k`: nodes of each type at level `k`.
    pub fn level_counts(&self) -> Vec<Counts> {
        let mut out: Vec<Counts> = Vec::new();
        for n in &self.nodes {
            let k = n.level as usize;
            if out.len() <= k {
                out.resize(k + 1, Counts::zeros(self.d));
            }
            out[k][n.ty as usize] += 1;
        }
        out
    }

    /// Number of descendants of every node, itself included.
    pub fn descendant_counts(&self) -> Vec<u64> {
        let mut size = vec![1u64; self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            if let Some(p) = self.parent(id) {
                size[p] += size[id];
            }
        }
        size
    }

    /// Members of the single-type subtree rooted at `root`, breadth-first.
    pub fn subtree_members(&self, root: NodeId) -> Vec<NodeId> {
        let mut members = vec![root];
        let mut cursor = 0;
        while cursor < members.len() {
            let id = members[cursor];
            members.extend(self.children(id).filter(|&c| !self.is_mutant(c)));
            cursor += 1;
        }
        members
    }

    /// Maximal type-`i` subtrees in Ulam-Harris order of their roots. In a
    /// pruned forest, subtrees rooted beyond the generation limit are
    /// incomplete and left out.
    pub fn extract_subtrees(&self, i: usize) -> Result<Vec<SubtreeRef>> {
        if i >= self.d {
            return Err(Error::TypeOutOfRange { ty: i, d: self.d });
        }
        let mut roots: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&id| {
                let n = &self.nodes[id];
                n.ty as usize == i && n.mutant && self.generation_limit.is_none_or(|g| n.allelic_gen <= g)
            })
            .collect();
        roots.sort_by_key(|&id| self.order_key(id));
        Ok(roots
            .into_iter()
            .map(|root| SubtreeRef {
                root,
                members: self.subtree_members(root),
                ty: i,
            })
            .collect())
    }

    /// `L_n`: flagged nodes of allelic generation `n`; `L_0` is the roots.
    pub fn mutant_line(&self, n: u32) -> StoppingLine {
        let mut members: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&id| self.nodes[id].mutant && self.nodes[id].allelic_gen == n)
            .collect();
        members.sort_by_key(|&id| self.order_key(id));
        StoppingLine { members }
    }

    /// Line-delimited records: id, parent (or -1), type, level, allelic
    /// generation, mutation flag. Ids and types are one-based.
    pub fn write_records<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# id parent type level allelic_generation mutant")?;
        for id in 0..self.nodes.len() {
            let parent = self.parent(id).map(|p| (p + 1) as i64).unwrap_or(-1);
            writeln!(
                w,
                "{} {} {} {} {} {}",
                id + 1,
                parent,
                self.ty(id) + 1,
                self.level(id),
                self.allelic_generation(id),
                self.is_mutant(id) as u8
            )?;
        }
        Ok(())
    }

    /// Graph description with one edge per parent link; labels `type:size`
    /// where size counts the node's descendants including itself.
    pub fn to_dot(&self) -> String {
        let sizes = self.descendant_counts();
        let mut s = String::from("digraph forest {\n");
        for (id, size) in sizes.iter().enumerate() {
            let _ = writeln!(s, "  n{} [label=\"{}:{}\"];", id + 1, self.ty(id) + 1, size);
        }
        for id in 0..self.nodes.len() {
            if let Some(p) = self.parent(id) {
                let _ = writeln!(s, "  n{} -> n{};", p + 1, id + 1);
            }
        }
        s.push_str("}\n");
        s
    }

    /// Parse the record format of [`write_records`](Self::write_records).
    ///
    /// Records may come in any order as long as siblings appear in birth
    /// order. Nodes are renumbered breadth-first and the level, generation
    /// and flag columns are checked against the parent links. `d` defaults
    /// to the largest type present.
    pub fn from_records(text: &str, d: Option<usize>) -> Result<Self> {
        struct Rec {
            line: usize,
            id: i64,
            parent: i64,
            ty: usize,
            level: u32,
            gen: u32,
            flag: bool,
        }
        let mut recs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::Parse { line, message: format!("expected 6 fields, found {}", fields.len()) });
            }
            let int = |k: usize| -> Result<i64> {
                fields[k].parse::<i64>().map_err(|e| Error::Parse { line, message: format!("field {}: {e}", k + 1) })
            };
            let ty = int(2)?;
            let (level, gen, flag) = (int(3)?, int(4)?, int(5)?);
            if ty < 1 || level < 0 || gen < 0 || !(flag == 0 || flag == 1) {
                return Err(Error::Parse { line, message: "type must be >= 1, level and generation >= 0, flag 0 or 1".into() });
            }
            recs.push(Rec {
                line,
                id: int(0)?,
                parent: int(1)?,
                ty: (ty - 1) as usize,
                level: level as u32,
                gen: gen as u32,
                flag: flag == 1,
            });
        }
        if recs.is_empty() {
            return Err(Error::Parse { line: 0, message: "no records".into() });
        }
        let max_ty = recs.iter().map(|r| r.ty).max().unwrap_or(0) + 1;
        let d = d.unwrap_or(max_ty.max(2));
        if max_ty > d {
            return Err(Error::TypeOutOfRange { ty: max_ty - 1, d });
        }
        let mut index = std::collections::HashMap::new();
        for (k, r) in recs.iter().enumerate() {
            if index.insert(r.id, k).is_some() {
                return Err(Error::Parse { line: r.line, message: format!("duplicate id {}", r.id) });
            }
        }
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); recs.len()];
        let mut roots = Vec::new();
        for (k, r) in recs.iter().enumerate() {
            if r.parent == -1 {
                roots.push(k);
            } else {
                let p = *index
                    .get(&r.parent)
                    .ok_or_else(|| Error::Parse { line: r.line, message: format!("unknown parent {}", r.parent) })?;
                kids[p].push(k);
            }
        }
        roots.sort_by_key(|&k| recs[k].ty);

        let mut nodes: Vec<Node> = Vec::with_capacity(recs.len());
        let mut order: Vec<usize> = Vec::with_capacity(recs.len());
        let mut tree_starts = Vec::new();
        for &root in &roots {
            let tree = tree_starts.len() as u32;
            let start = nodes.len();
            tree_starts.push(start);
            order.push(root);
            nodes.push(Node {
                parent: NONE,
                first_child: NONE,
                n_children: 0,
                tree,
                level: 0,
                allelic_gen: 0,
                ty: recs[root].ty as u16,
                mutant: true,
                expanded: true,
            });
            let mut cursor = start;
            while cursor < nodes.len() {
                let rec = order[cursor];
                let first = nodes.len() as u32;
                let parent = nodes[cursor];
                for &c in &kids[rec] {
                    let mutant = recs[c].ty != parent.ty as usize;
                    order.push(c);
                    nodes.push(Node {
                        parent: cursor as u32,
                        first_child: NONE,
                        n_children: 0,
                        tree,
                        level: parent.level + 1,
                        allelic_gen: parent.allelic_gen + mutant as u32,
                        ty: recs[c].ty as u16,
                        mutant,
                        expanded: true,
                    });
                }
                let n = kids[rec].len() as u32;
                nodes[cursor].n_children = n;
                nodes[cursor].first_child = if n == 0 { NONE } else { first };
                cursor += 1;
            }
        }
        if nodes.len() != recs.len() {
            return Err(Error::Parse { line: 0, message: "parent links contain a cycle".into() });
        }
        for (node, &rec) in nodes.iter().zip(&order) {
            let r = &recs[rec];
            if r.level != node.level || r.gen != node.allelic_gen || r.flag != node.mutant {
                return Err(Error::Parse {
                    line: r.line,
                    message: format!(
                        "columns disagree with parent links (level {}, generation {}, flag {})",
                        node.level, node.allelic_gen, node.mutant as u8
                    ),
                });
            }
        }
        Ok(ColoredForest {
            d,
            nodes,
            tree_starts,
            generation_limit: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring_laws::OffspringLaw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FIGURE: &str = include_str!("../tests/fixtures/figure_forest.txt");

    fn law(base: OffspringLaw, d: usize, r: f64) -> MotherDependentLaw {
        MotherDependentLaw::new(base, d, r).unwrap()
    }

    #[test]
    fn childless_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = law(OffspringLaw::point_mass(0), 2, 0.5);
        let f = simulate_forest(&l, &Counts(vec![3, 0]), &Caps::default(), &mut rng).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.level_counts(), vec![Counts(vec![3, 0])]);
        assert!(f.roots().iter().all(|&r| f.ty(r) == 0 && f.is_mutant(r)));
    }

    #[test]
    fn no_mutation_keeps_root_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = law(OffspringLaw::new([(0, 0.4), (1, 0.3), (2, 0.3)]).unwrap(), 3, 0.0);
        for _ in 0..200 {
            let f = simulate_forest(&l, &Counts(vec![1, 2, 1]), &Caps::default(), &mut rng).unwrap();
            for id in 0..f.len() {
                let root = f.roots()[f.tree_of(id)];
                assert_eq!(f.ty(id), f.ty(root));
            }
        }
    }

    #[test]
    fn roots_grouped_by_type() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = law(OffspringLaw::critical_binary(), 3, 0.4);
        let f = simulate_forest(&l, &Counts(vec![2, 0, 3]), &Caps::default().with_max_nodes(1 << 20), &mut rng);
        if let Ok(f) = f {
            let types: Vec<usize> = f.roots().iter().map(|&r| f.ty(r)).collect();
            assert_eq!(types, vec![0, 0, 2, 2, 2]);
            assert_eq!(f.initial(), Counts(vec![2, 0, 3]));
        }
    }

    #[test]
    fn caps_are_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = law(OffspringLaw::point_mass(2), 2, 0.1);
        let err = simulate_forest(&l, &Counts(vec![1, 0]), &Caps::default().with_max_nodes(1000), &mut rng).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { kind: CapKind::Nodes, .. }));
        let l = law(OffspringLaw::point_mass(1), 2, 0.1);
        let caps = Caps { max_levels: 50, ..Caps::default() };
        let err = simulate_forest(&l, &Counts(vec![1, 0]), &caps, &mut rng).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { kind: CapKind::Levels, .. }));
    }

    #[test]
    fn pruning_stops_at_generation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = law(OffspringLaw::point_mass(2), 2, 0.5);
        let f = simulate_forest(&l, &Counts(vec![1, 0]), &Caps::default().pruned_at(0), &mut rng).unwrap();
        for id in 0..f.len() {
            assert!(f.allelic_generation(id) <= 1);
            assert_eq!(f.is_expanded(id), f.allelic_generation(id) == 0);
        }
    }

    #[test]
    fn three_node_trees() {
        // Plane binary trees: P(size 3) = (1/2)^3 = 1/8.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = law(OffspringLaw::critical_binary(), 2, 0.0);
        let caps = Caps::default().with_max_nodes(64);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| matches!(simulate_forest(&l, &Counts(vec![1, 0]), &caps, &mut rng), Ok(f) if f.len() == 3))
            .count();
        let p = 0.125;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn figure_fixture() {
        let f = ColoredForest::from_records(FIGURE, Some(3)).unwrap();
        assert_eq!(f.len(), 19);
        assert_eq!(
            f.level_counts(),
            vec![Counts(vec![1, 0, 0]), Counts(vec![1, 1, 0]), Counts(vec![2, 3, 2]), Counts(vec![2, 3, 4])]
        );
        let sizes = |i| f.extract_subtrees(i).unwrap().iter().map(SubtreeRef::size).collect::<Vec<_>>();
        assert_eq!(sizes(0), vec![3, 2, 1]);
        assert_eq!(sizes(1).len(), 4);
        assert_eq!(sizes(2).len(), 3);
        let ids = |n| f.mutant_line(n).members.iter().map(|&id| id + 1).collect::<Vec<_>>();
        assert_eq!(ids(0), vec![1]);
        assert_eq!(ids(1), vec![3, 5, 6, 11]);
        assert_eq!(ids(2), vec![7, 9, 10, 14]);
        assert_eq!(ids(3), vec![15]);
    }

    #[test]
    fn records_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = law(OffspringLaw::new([(0, 0.4), (1, 0.2), (2, 0.4)]).unwrap(), 3, 0.3);
        for _ in 0..50 {
            let f = simulate_forest(&l, &Counts(vec![1, 1, 1]), &Caps::default(), &mut rng).unwrap();
            let mut out = Vec::new();
            f.write_records(&mut out).unwrap();
            let g = ColoredForest::from_records(std::str::from_utf8(&out).unwrap(), Some(3)).unwrap();
            assert_eq!(f, g);
        }
    }

    #[test]
    fn inconsistent_records_rejected() {
        let bad = "1 -1 1 0 0 1\n2 1 2 1 0 0\n";
        assert!(matches!(ColoredForest::from_records(bad, None), Err(Error::Parse { line: 2, .. })));
        assert!(ColoredForest::from_records("1 -1 1 0 0\n", None).is_err());
    }

    #[test]
    fn dot_labels() {
        let f = ColoredForest::from_records("1 -1 1 0 0 1\n2 1 2 1 1 1\n", None).unwrap();
        let dot = f.to_dot();
        assert!(dot.contains("n1 [label=\"1:2\"]"));
        assert!(dot.contains("n1 -> n2;"));
    }
}
