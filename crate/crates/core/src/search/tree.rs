//! Search tree with UCT selection and Q backpropagation.

use serde::{Deserialize, Serialize};

use super::{SearchConfig, SearchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: usize,
    /// Full completion text of the call that produced this node.
    pub answer: String,
    /// Extracted SMILES; `None` marks a parse failure.
    pub smiles: Option<String>,
    pub reward: f64,
    pub q: f64,
    pub visits: u32,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Critique that led to this node (absent for the root).
    pub critique: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    /// A tree holding only the root, with `Q = R` and `N = 1`.
    pub fn new(answer: String, smiles: Option<String>, reward: f64) -> SearchTree {
        let root = SearchNode {
            id: 0,
            answer,
            smiles,
            reward,
            q: reward,
            visits: 1,
            parent: None,
            children: Vec::new(),
            critique: None,
        };
        SearchTree { nodes: vec![root] }
    }

    pub fn from_nodes(nodes: Vec<SearchNode>) -> SearchTree {
        SearchTree { nodes }
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: usize) -> &mut SearchNode {
        &mut self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Q(a) + c·sqrt((ln N(parent) + 1) / (N(a) + ε))`; the root uses its own
    /// visit count as the parent term.
    pub fn uct_score(&self, id: usize, cfg: &SearchConfig) -> f64 {
        let node = &self.nodes[id];
        let parent_visits = node.parent.map_or(node.visits, |p| self.nodes[p].visits);
        node.q + cfg.c * (((parent_visits as f64).ln() + 1.0) / (node.visits as f64 + cfg.epsilon)).sqrt()
    }

    /// Argmax of the UCT score over every node with room for another child;
    /// ties go to the smallest id.
    pub fn select_uct(&self, cfg: &SearchConfig) -> Result<usize, SearchError> {
        let mut best: Option<(usize, f64)> = None;
        for node in &self.nodes {
            if node.children.len() >= cfg.max_children {
                continue;
            }
            let score = self.uct_score(node.id, cfg);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((node.id, score));
            }
        }
        best.map(|(id, _)| id).ok_or(SearchError::TreeSaturated)
    }

    /// Adds a freshly evaluated child with `Q = R` and `N = 1`.
    pub fn add_child(
        &mut self,
        parent: usize,
        answer: String,
        smiles: Option<String>,
        reward: f64,
        critique: String,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(SearchNode {
            id,
            answer,
            smiles,
            reward,
            q: reward,
            visits: 1,
            parent: Some(parent),
            children: Vec::new(),
            critique: Some(critique),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Walks from `id` to the root. Each ancestor takes
    /// `Q ← 0.5·Q(child on path) + 0.5·Q` using the child's updated value and
    /// gains one visit.
    pub fn backpropagate(&mut self, id: usize) {
        let mut child = id;
        while let Some(parent) = self.nodes[child].parent {
            let child_q = self.nodes[child].q;
            let p = &mut self.nodes[parent];
            p.q = 0.5 * child_q + 0.5 * p.q;
            p.visits += 1;
            child = parent;
        }
    }

    /// Node with the highest reward; ties go to the smallest id.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for node in &self.nodes {
            if node.reward > self.nodes[best].reward {
                best = node.id;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> SearchConfig {
        SearchConfig::default()
    }

    /// Root with two children at the given Q values, each visited once.
    fn two_children(q1: f64, q2: f64) -> SearchTree {
        let mut t = SearchTree::new("root".into(), Some("C".into()), 0.0);
        t.node_mut(0).children = vec![1, 2];
        for (id, q) in [(1, q1), (2, q2)] {
            t.nodes.push(SearchNode {
                id,
                answer: String::new(),
                smiles: None,
                reward: q,
                q,
                visits: 1,
                parent: Some(0),
                children: Vec::new(),
                critique: None,
            });
        }
        t.node_mut(0).visits = 2;
        t
    }

    #[test]
    fn uct_fixture() {
        let t = two_children(0.5, 0.4);
        let s1 = t.uct_score(1, &cfg());
        assert!((s1 - 1.740655).abs() < 1e-6, "{s1}");
        assert!((t.uct_score(2, &cfg()) - 1.640655).abs() < 1e-6);
        assert_eq!(t.select_uct(&cfg()).unwrap(), 1);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let t = two_children(0.5, 0.5);
        assert_eq!(t.select_uct(&cfg()).unwrap(), 1);
    }

    #[test]
    fn saturated_tree() {
        let t = two_children(0.5, 0.4);
        let one_child = SearchConfig { max_children: 1, ..cfg() };
        // Root is full; only leaves remain, and with zero allowed children nothing does.
        assert_ne!(t.select_uct(&one_child).unwrap(), 0);
        let none = SearchConfig { max_children: 0, ..cfg() };
        assert!(matches!(t.select_uct(&none), Err(SearchError::TreeSaturated)));
    }

    #[test]
    fn backprop_fixture() {
        let mut t = SearchTree::new("r".into(), None, 0.2);
        let a = t.add_child(0, "a".into(), None, 0.4, String::new());
        t.backpropagate(a);
        t.node_mut(0).q = 0.2;
        let new = t.add_child(a, "n".into(), None, 1.0, String::new());
        t.backpropagate(new);
        assert_eq!(t.node(a).q, 0.7);
        // 0.5·0.7 + 0.5·0.2 lands one ulp below the double nearest 0.45.
        assert!((t.node(0).q - 0.45).abs() <= f64::EPSILON);
        assert_eq!(t.node(new).visits, 1);
        assert_eq!(t.node(a).visits, 2);
        assert_eq!(t.node(0).visits, 3);
    }

    #[test]
    fn direct_parent_update() {
        let mut t = SearchTree::new("r".into(), None, 0.6);
        let c = t.add_child(0, "c".into(), None, 0.8, String::new());
        t.backpropagate(c);
        assert!((t.node(0).q - 0.7).abs() < 1e-15);
    }

    fn random_tree(rewards: &[f64], parents_seed: &[usize]) -> SearchTree {
        let mut t = SearchTree::new("r".into(), None, rewards[0]);
        for (i, &r) in rewards.iter().enumerate().skip(1) {
            let candidates: Vec<usize> = (0..t.len()).filter(|&n| t.node(n).children.len() < 2).collect();
            let parent = candidates[parents_seed[i] % candidates.len()];
            let id = t.add_child(parent, String::new(), None, r, String::new());
            t.backpropagate(id);
        }
        t
    }

    proptest! {
        #[test]
        fn backprop_touches_only_ancestors(
            rewards in proptest::collection::vec(-1.0f64..1.0, 2..12),
            picks in proptest::collection::vec(0usize..100, 12),
            new_reward in -1.0f64..1.0,
            pick in 0usize..100,
        ) {
            let mut t = random_tree(&rewards, &picks);
            let candidates: Vec<usize> = (0..t.len()).filter(|&n| t.node(n).children.len() < 2).collect();
            let parent = candidates[pick % candidates.len()];
            let before = t.clone();
            let id = t.add_child(parent, String::new(), None, new_reward, String::new());
            t.backpropagate(id);
            let mut ancestors = std::collections::BTreeSet::new();
            let mut cur = Some(parent);
            while let Some(p) = cur {
                ancestors.insert(p);
                cur = t.node(p).parent;
            }
            for n in before.nodes() {
                let after = t.node(n.id);
                if ancestors.contains(&n.id) {
                    prop_assert_eq!(after.visits, n.visits + 1);
                } else {
                    prop_assert_eq!(after.q.to_bits(), n.q.to_bits());
                    prop_assert_eq!(after.visits, n.visits);
                }
            }
            prop_assert_eq!(t.node(0).visits, before.node(0).visits + 1);
        }

        #[test]
        fn raising_q_never_lowers_rank(rewards in proptest::collection::vec(-1.0f64..1.0, 2..10),
                                       picks in proptest::collection::vec(0usize..100, 10),
                                       target in 0usize..100, bump in 0.0f64..1.0) {
            let t = random_tree(&rewards, &picks);
            let cfg = cfg();
            let id = target % t.len();
            let rank = |t: &SearchTree| {
                let s = t.uct_score(id, &cfg);
                t.nodes().iter().filter(|n| t.uct_score(n.id, &cfg) > s).count()
            };
            let mut raised = t.clone();
            raised.node_mut(id).q += bump;
            prop_assert!(rank(&raised) <= rank(&t));
        }
    }
}
