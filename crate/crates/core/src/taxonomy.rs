//! Label hierarchies (trees and DAGs) and the labels they induce.
//!
//! Node ids are dense (`0..node_count`). Hierarchy files may use arbitrary
//! non-negative integers; those are remapped in ascending order and the
//! original ids are kept for output.

use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct Taxonomy {
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    leaves: Vec<NodeId>,
    leaf_pos: Vec<Option<usize>>,
    topo: Vec<NodeId>,
    ancestors: Vec<Vec<NodeId>>,
    external: Vec<u64>,
    external_index: HashMap<u64, NodeId>,
}

impl Taxonomy {
    /// Builds a taxonomy from `(parent, child)` pairs of external ids.
    pub fn from_edges(edges: &[(u64, u64)]) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyEdgeList);
        }
        let ids: BTreeSet<u64> = edges.iter().flat_map(|&(p, c)| [p, c]).collect();
        let external: Vec<u64> = ids.into_iter().collect();
        let index: HashMap<u64, NodeId> =
            external.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let dense: Vec<(NodeId, NodeId)> =
            edges.iter().map(|(p, c)| (index[p], index[c])).collect();
        Self::build(external, &dense)
    }

    /// Builds a taxonomy over nodes `0..node_count`. Nodes without edges are
    /// isolated leaves.
    pub fn from_dense(node_count: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        for &(p, c) in edges {
            let bad = p.max(c);
            if bad >= node_count {
                return Err(Error::UnknownNode(bad as u64));
            }
        }
        Self::build((0..node_count as u64).collect(), edges)
    }

    fn build(external: Vec<u64>, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let m = external.len();
        let mut parents = vec![Vec::new(); m];
        let mut children = vec![Vec::new(); m];
        for &(p, c) in edges {
            if p == c {
                return Err(Error::Cycle(external[p]));
            }
            if children[p].contains(&c) {
                return Err(Error::DuplicateEdge(external[p], external[c]));
            }
            children[p].push(c);
            parents[c].push(p);
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }

        // Kahn's algorithm, smallest id first so the order is reproducible.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut heap: BinaryHeap<Reverse<NodeId>> =
            (0..m).filter(|&n| indeg[n] == 0).map(Reverse).collect();
        let mut topo = Vec::with_capacity(m);
        while let Some(Reverse(n)) = heap.pop() {
            topo.push(n);
            for &c in &children[n] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    heap.push(Reverse(c));
                }
            }
        }
        if topo.len() != m {
            let stuck = (0..m).find(|&n| indeg[n] > 0).unwrap_or(0);
            return Err(Error::Cycle(external[stuck]));
        }

        let mut ancestors: Vec<Vec<NodeId>> = vec![Vec::new(); m];
        for &n in &topo {
            let mut set: BTreeSet<NodeId> = BTreeSet::new();
            set.insert(n);
            for &p in &parents[n] {
                set.extend(ancestors[p].iter().copied());
            }
            ancestors[n] = set.into_iter().collect();
        }

        let leaves: Vec<NodeId> = (0..m).filter(|&n| children[n].is_empty()).collect();
        let mut leaf_pos = vec![None; m];
        for (i, &l) in leaves.iter().enumerate() {
            leaf_pos[l] = Some(i);
        }
        let external_index = external.iter().enumerate().map(|(i, &e)| (e, i)).collect();

        Ok(Taxonomy {
            parents,
            children,
            leaves,
            leaf_pos,
            topo,
            ancestors,
            external,
            external_index,
        })
    }

    /// Parses the hierarchy text format: one `parent child` pair per line,
    /// `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut it = line.split_whitespace();
            let (p, c) = match (it.next(), it.next(), it.next()) {
                (Some(p), Some(c), None) => (p, c),
                _ => return Err(parse_err("expected `parent child`")),
            };
            let p: u64 = p.parse().map_err(|_| parse_err("parent id is not a non-negative integer"))?;
            let c: u64 = c.parse().map_err(|_| parse_err("child id is not a non-negative integer"))?;
            if !seen.insert((p, c)) {
                return Err(Error::DuplicateEdge(p, c));
            }
            edges.push((p, c));
        }
        Self::from_edges(&edges)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes back to the hierarchy text format using external ids.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (p, c) in self.edges() {
            out.push_str(&format!("{} {}\n", self.external[p], self.external[c]));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn is_leaf(&self, n: NodeId) -> bool {
        self.leaf_pos[n].is_some()
    }

    /// Position of `n` within [`Taxonomy::leaves`].
    pub fn leaf_position(&self, n: NodeId) -> Option<usize> {
        self.leaf_pos[n]
    }

    pub fn parents(&self, n: NodeId) -> &[NodeId] {
        &self.parents[n]
    }

    pub fn children(&self, n: NodeId) -> &[NodeId] {
        &self.children[n]
    }

    /// Every parent precedes each of its children.
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// `n` together with all of its ancestors, sorted.
    pub fn ancestors_closure(&self, n: NodeId) -> &[NodeId] {
        &self.ancestors[n]
    }

    pub fn roots(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count()).filter(|&n| self.parents[n].is_empty())
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// True when no node has more than one parent (a forest).
    pub fn is_tree(&self) -> bool {
        self.parents.iter().all(|p| p.len() <= 1)
    }

    pub(crate) fn require_tree(&self) -> Result<()> {
        match (0..self.node_count()).find(|&n| self.parents[n].len() > 1) {
            Some(n) => Err(Error::NotATree(self.external[n])),
            None => Ok(()),
        }
    }

    pub fn external_id(&self, n: NodeId) -> u64 {
        self.external[n]
    }

    pub fn node_of_external(&self, id: u64) -> Option<NodeId> {
        self.external_index.get(&id).copied()
    }

    /// Number of nodes on the shortest root-to-leaf path.
    pub fn shortest_path_len(&self) -> usize {
        self.leaves
            .iter()
            .map(|&l| self.shortest_depth(l))
            .min()
            .unwrap_or(0)
    }

    fn shortest_depth(&self, n: NodeId) -> usize {
        // nodes on the shortest path from any root down to n
        let mut best = vec![usize::MAX; self.node_count()];
        for &v in &self.topo {
            best[v] = if self.parents[v].is_empty() {
                1
            } else {
                self.parents[v].iter().map(|&p| best[p]).min().unwrap() + 1
            };
            if v == n {
                break;
            }
        }
        best[n]
    }

    /// Node count of the longest root-to-leaf path passing through each node.
    pub fn longest_path_through(&self) -> Vec<usize> {
        let m = self.node_count();
        let mut up = vec![1usize; m];
        for &v in &self.topo {
            for &p in &self.parents[v] {
                up[v] = up[v].max(up[p] + 1);
            }
        }
        let mut down = vec![1usize; m];
        for &v in self.topo.iter().rev() {
            for &c in &self.children[v] {
                down[v] = down[v].max(down[c] + 1);
            }
        }
        (0..m).map(|v| up[v] + down[v] - 1).collect()
    }

    /// Stable 64-bit FNV-1a fingerprint of the structure (external ids).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.node_count() as u64);
        for &e in &self.external {
            feed(e);
        }
        for (p, c) in self.edges() {
            feed(p as u64);
            feed(c as u64);
        }
        h
    }

    /// The label made of `leaves` and all their ancestors.
    pub fn label_closure(&self, leaves: &[NodeId]) -> Result<Label> {
        if leaves.is_empty() {
            return Err(Error::EmptyLabel);
        }
        let mut nodes = BTreeSet::new();
        let mut leaf_set = BTreeSet::new();
        for &l in leaves {
            if l >= self.node_count() {
                return Err(Error::UnknownNode(l as u64));
            }
            if !self.is_leaf(l) {
                return Err(Error::NotALeaf(self.external[l]));
            }
            leaf_set.insert(l);
            nodes.extend(self.ancestors[l].iter().copied());
        }
        Ok(Label {
            nodes: nodes.into_iter().collect(),
            leaves: leaf_set.into_iter().collect(),
        })
    }

    /// Same as [`Taxonomy::label_closure`] but with external leaf ids.
    pub fn label_from_external(&self, ids: &[u64]) -> Result<Label> {
        let dense = ids
            .iter()
            .map(|&id| self.node_of_external(id).ok_or(Error::UnknownNode(id)))
            .collect::<Result<Vec<_>>>()?;
        self.label_closure(&dense)
    }

    /// Single-leaf label `Ā(leaf)`.
    pub fn leaf_label(&self, leaf: NodeId) -> Label {
        debug_assert!(self.is_leaf(leaf));
        Label {
            nodes: self.ancestors[leaf].clone(),
            leaves: vec![leaf],
        }
    }

    /// Checks that a node indicator describes a member of the multi-label
    /// space: every selected node has all parents selected, every selected
    /// internal node has a selected child, and at least one leaf is selected.
    pub fn is_feasible_selection(&self, selected: &[bool]) -> bool {
        if selected.len() != self.node_count() {
            return false;
        }
        let mut any_leaf = false;
        for n in 0..self.node_count() {
            if !selected[n] {
                continue;
            }
            if self.is_leaf(n) {
                any_leaf = true;
            } else if !self.children[n].iter().any(|&c| selected[c]) {
                return false;
            }
            if !self.parents[n].iter().all(|&p| selected[p]) {
                return false;
            }
        }
        any_leaf
    }

    /// Converts a feasible node indicator to a label.
    pub fn label_from_selection(&self, selected: &[bool]) -> Result<Label> {
        if !self.is_feasible_selection(selected) {
            return Err(Error::Solver("selection is not closed under the hierarchy".into()));
        }
        let leaves: Vec<NodeId> = self.leaves.iter().copied().filter(|&l| selected[l]).collect();
        self.label_closure(&leaves)
    }

    /// Merges every class of duplicated nodes (identical membership across
    /// `labels`) into a single node.
    pub fn minimal_graph(&self, labels: &[Label]) -> Result<MinimalGraph> {
        let m = self.node_count();
        let words = labels.len().div_ceil(64).max(1);
        let mut pattern = vec![vec![0u64; words]; m];
        for (i, y) in labels.iter().enumerate() {
            for &n in y.nodes() {
                if n >= m {
                    return Err(Error::UnknownNode(n as u64));
                }
                pattern[n][i / 64] |= 1 << (i % 64);
            }
        }
        if let Some(n) = (0..m).find(|&n| pattern[n].iter().all(|&w| w == 0)) {
            return Err(Error::UnseenNode(self.external[n]));
        }

        let mut class_of_pattern: HashMap<&[u64], NodeId> = HashMap::new();
        let mut map = vec![0; m];
        let mut classes: Vec<Vec<NodeId>> = Vec::new();
        for n in 0..m {
            let next = classes.len();
            let id = *class_of_pattern.entry(&pattern[n]).or_insert(next);
            if id == next {
                classes.push(Vec::new());
            }
            classes[id].push(n);
            map[n] = id;
        }

        let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for (p, c) in self.edges() {
            if map[p] != map[c] {
                edges.insert((map[p], map[c]));
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        let external = classes.iter().map(|cl| self.external[cl[0]]).collect();
        let taxonomy = Taxonomy::build(external, &edges)?;
        Ok(MinimalGraph {
            taxonomy,
            map,
            classes,
        })
    }
}

/// Result of [`Taxonomy::minimal_graph`].
#[derive(Debug, Clone)]
pub struct MinimalGraph {
    pub taxonomy: Taxonomy,
    /// Original node -> merged node.
    pub map: Vec<NodeId>,
    /// Merged node -> original nodes it stands for.
    pub classes: Vec<Vec<NodeId>>,
}

impl MinimalGraph {
    /// Re-expresses a label of the original graph on the merged graph.
    pub fn map_label(&self, y: &Label) -> Result<Label> {
        let nodes: BTreeSet<NodeId> = y.nodes().iter().map(|&n| self.map[n]).collect();
        let leaves: Vec<NodeId> = nodes
            .iter()
            .copied()
            .filter(|&n| self.taxonomy.is_leaf(n))
            .collect();
        let label = self.taxonomy.label_closure(&leaves)?;
        if label.nodes().len() != nodes.len() {
            return Err(Error::Solver("label does not survive node merging".into()));
        }
        Ok(label)
    }
}

/// A node set closed under ancestors, generated by its leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Label {
    nodes: Vec<NodeId>,
    leaves: Vec<NodeId>,
}

impl Label {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.binary_search(&n).is_ok()
    }

    pub fn is_single(&self) -> bool {
        self.leaves.len() == 1
    }

    pub fn indicator(&self, node_count: usize) -> Vec<bool> {
        let mut v = vec![false; node_count];
        for &n in &self.nodes {
            v[n] = true;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_ancestors(t: &Taxonomy, n: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue = std::collections::VecDeque::from([n]);
        while let Some(v) = queue.pop_front() {
            if seen.insert(v) {
                queue.extend(t.parents(v).iter().copied());
            }
        }
        seen
    }

    #[test]
    fn two_leaf_star() {
        let t = Taxonomy::from_edges(&[(0, 1), (0, 2)]).unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.leaves(), &[1, 2]);
        assert!(t.is_tree());
        let y = t.label_closure(&[1, 2]).unwrap();
        assert_eq!(y.nodes(), &[0, 1, 2]);
    }

    #[test]
    fn diamond_closure() {
        let t = Taxonomy::from_edges(&[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert!(!t.is_tree());
        assert_eq!(t.ancestors_closure(3), &[0, 1, 2, 3]);
        assert_eq!(t.label_closure(&[3]).unwrap().nodes(), &[0, 1, 2, 3]);
    }

    #[test]
    fn chain_closure() {
        let t = Taxonomy::from_edges(&[(0, 1), (1, 2)]).unwrap();
        assert_eq!(t.label_closure(&[2]).unwrap().nodes(), &[0, 1, 2]);
    }

    #[test]
    fn rejects_cycles_duplicates_and_empty() {
        assert!(matches!(Taxonomy::from_edges(&[(0, 1), (1, 0)]), Err(Error::Cycle(_))));
        assert!(matches!(Taxonomy::from_edges(&[(3, 3)]), Err(Error::Cycle(3))));
        assert!(matches!(
            Taxonomy::from_edges(&[(0, 1), (0, 1)]),
            Err(Error::DuplicateEdge(0, 1))
        ));
        assert!(matches!(Taxonomy::from_edges(&[]), Err(Error::EmptyEdgeList)));
    }

    #[test]
    fn closure_rejects_internal_nodes() {
        let t = Taxonomy::from_edges(&[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(t.label_closure(&[1]), Err(Error::NotALeaf(1))));
        assert!(matches!(t.label_closure(&[]), Err(Error::EmptyLabel)));
    }

    #[test]
    fn parses_text_with_comments_and_sparse_ids() {
        let t = Taxonomy::parse("# root\n10 20\n10   30\n\n20 40\n").unwrap();
        assert_eq!(t.node_count(), 4);
        assert_eq!(t.external_id(0), 10);
        let leaves: Vec<u64> = t.leaves().iter().map(|&l| t.external_id(l)).collect();
        assert_eq!(leaves, vec![30, 40]);
        let back = Taxonomy::parse(&t.to_text()).unwrap();
        assert_eq!(back.fingerprint(), t.fingerprint());
        assert!(matches!(Taxonomy::parse("1 2\nx 3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(Taxonomy::parse("1 2 3\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn closure_matches_upward_bfs_on_random_dags() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = rng.random_range(3..25usize);
            let mut edges = Vec::new();
            for c in 1..m {
                let p = rng.random_range(0..c);
                edges.push((p, c));
                if c > 2 && rng.random::<f64>() < 0.3 {
                    let q = rng.random_range(0..c);
                    if q != p {
                        edges.push((q, c));
                    }
                }
            }
            let t = Taxonomy::from_dense(m, &edges).unwrap();
            let pos: Vec<usize> = {
                let mut p = vec![0; m];
                for (i, &n) in t.topo_order().iter().enumerate() {
                    p[n] = i;
                }
                p
            };
            for (p, c) in t.edges() {
                assert!(pos[p] < pos[c]);
            }
            for &l in t.leaves() {
                let got: BTreeSet<NodeId> = t.label_closure(&[l]).unwrap().nodes().iter().copied().collect();
                assert_eq!(got, naive_ancestors(&t, l));
            }
        }
    }

    fn all_single_labels(t: &Taxonomy) -> Vec<Label> {
        t.leaves().iter().map(|&l| t.leaf_label(l)).collect()
    }

    #[test]
    fn minimal_graph_of_figure_one() {
        // root 0 with leaf 2, and leaf 3 hanging under node 1
        let t = Taxonomy::from_edges(&[(0, 1), (0, 2), (1, 3)]).unwrap();
        let mg = t.minimal_graph(&all_single_labels(&t)).unwrap();
        assert_eq!(mg.taxonomy.node_count(), 3);
        assert_eq!(mg.taxonomy.leaves().len(), 2);
        assert_eq!(mg.map[1], mg.map[3]);
        assert_eq!(mg.classes[mg.map[1]], vec![1, 3]);
    }

    #[test]
    fn minimal_graph_without_duplicates_is_identity() {
        let t = Taxonomy::from_edges(&[(0, 1), (0, 2), (1, 3), (1, 4)]).unwrap();
        let mg = t.minimal_graph(&all_single_labels(&t)).unwrap();
        assert_eq!(mg.map, vec![0, 1, 2, 3, 4]);
        assert_eq!(mg.taxonomy.fingerprint(), t.fingerprint());
    }

    #[test]
    fn chain_with_one_label_collapses() {
        let t = Taxonomy::from_edges(&[(0, 1), (1, 2)]).unwrap();
        let mg = t.minimal_graph(&[t.leaf_label(2)]).unwrap();
        assert_eq!(mg.taxonomy.node_count(), 1);
        assert_eq!(mg.map, vec![0, 0, 0]);
    }

    #[test]
    fn unseen_nodes_are_rejected() {
        let t = Taxonomy::from_edges(&[(0, 1), (0, 2)]).unwrap();
        assert!(matches!(t.minimal_graph(&[t.leaf_label(1)]), Err(Error::UnseenNode(2))));
    }

    #[test]
    fn minimal_graph_is_idempotent_and_duplicate_free() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let m = rng.random_range(2..20usize);
            let edges: Vec<_> = (1..m).map(|c| (rng.random_range(0..c), c)).collect();
            let t = Taxonomy::from_dense(m, &edges).unwrap();
            let labels = all_single_labels(&t);
            let once = t.minimal_graph(&labels).unwrap();
            let mapped: Vec<Label> = labels.iter().map(|y| once.map_label(y).unwrap()).collect();
            let twice = once.taxonomy.minimal_graph(&mapped).unwrap();
            assert_eq!(twice.taxonomy.node_count(), once.taxonomy.node_count());
            assert_eq!(twice.map, (0..once.taxonomy.node_count()).collect::<Vec<_>>());
            // no two merged nodes share a membership pattern
            let mut patterns = BTreeSet::new();
            for n in 0..once.taxonomy.node_count() {
                let p: Vec<bool> = mapped.iter().map(|y| y.contains(n)).collect();
                assert!(patterns.insert(p));
            }
        }
    }

    #[test]
    fn feasible_selection_checks_both_directions() {
        let t = Taxonomy::from_edges(&[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        assert!(t.is_feasible_selection(&[true, true, true, true]));
        // child selected without one of its parents
        assert!(!t.is_feasible_selection(&[true, true, false, true]));
        // internal node without a selected child
        assert!(!t.is_feasible_selection(&[true, true, true, false]));
        assert!(!t.is_feasible_selection(&[false; 4]));
    }
}
