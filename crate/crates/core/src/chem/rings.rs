//! Ring perception: ring-bond detection, smallest set of smallest rings, and
//! per-atom smallest ring size.

use std::collections::VecDeque;

use super::molecule::Molecule;

/// `true` for every bond that lies on a cycle (i.e. is not a bridge).
pub(crate) fn ring_bond_flags(mol: &Molecule) -> Vec<bool> {
    let n = mol.atom_count();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut is_bridge = vec![false; mol.bond_count()];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // Iterative Tarjan bridge finding: (atom, parent bond, next neighbor slot).
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, parent_bond, ref mut slot)) = stack.last_mut() {
            if *slot < mol.neighbors(v).len() {
                let (w, bond) = mol.neighbors(v)[*slot];
                *slot += 1;
                if bond == parent_bond {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, bond, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(u, _, _)) = stack.last() {
                    low[u] = low[u].min(low[v]);
                    if low[v] > disc[u] {
                        is_bridge[parent_bond] = true;
                    }
                }
            }
        }
    }
    is_bridge.iter().map(|b| !b).collect()
}

/// Length of the shortest cycle through each atom (0 for acyclic atoms).
pub fn smallest_ring_sizes(mol: &Molecule) -> Vec<usize> {
    let n = mol.atom_count();
    let mut sizes = vec![0usize; n];
    for bond_idx in 0..mol.bond_count() {
        let bond = mol.bonds()[bond_idx];
        if !bond.in_ring {
            continue;
        }
        if let Some(d) = ring_distance(mol, bond.a, bond.b, bond_idx) {
            let len = d + 1;
            for atom in [bond.a, bond.b] {
                if sizes[atom] == 0 || len < sizes[atom] {
                    sizes[atom] = len;
                }
            }
        }
    }
    sizes
}

/// BFS distance from `from` to `to` over ring bonds, skipping one bond.
fn ring_distance(mol: &Molecule, from: usize, to: usize, skip_bond: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; mol.atom_count()];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            return Some(dist[v]);
        }
        for &(w, b) in mol.neighbors(v) {
            if b == skip_bond || !mol.bonds()[b].in_ring || dist[w] != usize::MAX {
                continue;
            }
            dist[w] = dist[v] + 1;
            queue.push_back(w);
        }
    }
    None
}

/// Smallest set of smallest rings, each ring given as atoms in traversal order.
///
/// Candidates follow Horton's construction (shortest-path pairs joined by an
/// edge); a minimum cycle basis is then picked greedily by size with GF(2)
/// independence over bond sets.
pub fn sssr(mol: &Molecule) -> Vec<Vec<usize>> {
    let n = mol.atom_count();
    let nb = mol.bond_count();
    let ring_bond_count = mol.bonds().iter().filter(|b| b.in_ring).count();
    if ring_bond_count == 0 {
        return Vec::new();
    }
    let ring_atoms: Vec<usize> = (0..n).filter(|&a| mol.atom(a).in_ring).collect();
    // Cyclomatic number of the ring-bond subgraph.
    let components = ring_components(mol);
    let target = ring_bond_count + components - ring_atoms.len();

    let words = nb.div_ceil(64);
    let mut candidates: Vec<(Vec<usize>, Vec<u64>)> = Vec::new();
    for &root in &ring_atoms {
        let (parent, dist) = bfs_tree(mol, root);
        for (bi, bond) in mol.bonds().iter().enumerate() {
            if !bond.in_ring || dist[bond.a] == usize::MAX || dist[bond.b] == usize::MAX {
                continue;
            }
            let pa = tree_path(&parent, root, bond.a);
            let pb = tree_path(&parent, root, bond.b);
            // Paths must share only the root.
            if pa.iter().skip(1).any(|x| pb.contains(x)) || pa.len() + pb.len() < 4 {
                continue;
            }
            let mut cycle: Vec<usize> = pa.clone();
            cycle.extend(pb.iter().rev().take(pb.len() - 1));
            let mut bits = vec![0u64; words];
            let mut set = |b: usize| bits[b / 64] ^= 1 << (b % 64);
            set(bi);
            for path in [&pa, &pb] {
                for w in path.windows(2) {
                    set(bond_index(mol, w[0], w[1]));
                }
            }
            candidates.push((cycle, bits));
        }
    }
    candidates.sort_by(|x, y| {
        x.0.len().cmp(&y.0.len()).then_with(|| {
            let mut sx = x.0.clone();
            let mut sy = y.0.clone();
            sx.sort_unstable();
            sy.sort_unstable();
            sx.cmp(&sy)
        })
    });

    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut rings = Vec::new();
    for (cycle, bits) in candidates {
        if rings.len() == target {
            break;
        }
        let mut reduced = bits.clone();
        for (row, &p) in basis.iter().zip(&pivots) {
            if reduced[p / 64] >> (p % 64) & 1 == 1 {
                for (r, x) in reduced.iter_mut().zip(row) {
                    *r ^= x;
                }
            }
        }
        if let Some(p) = first_bit(&reduced) {
            // Keep rows fully reduced so later reductions only need pivot checks.
            for (row, _) in basis.iter_mut().zip(&pivots) {
                if row[p / 64] >> (p % 64) & 1 == 1 {
                    for (r, x) in row.iter_mut().zip(&reduced) {
                        *r ^= x;
                    }
                }
            }
            basis.push(reduced);
            pivots.push(p);
            rings.push(cycle);
        }
    }
    rings
}

fn first_bit(bits: &[u64]) -> Option<usize> {
    bits.iter().enumerate().find(|(_, w)| **w != 0).map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

fn bond_index(mol: &Molecule, a: usize, b: usize) -> usize {
    mol.neighbors(a).iter().find(|&&(nb, _)| nb == b).map(|&(_, idx)| idx).unwrap()
}

fn bfs_tree(mol: &Molecule, root: usize) -> (Vec<usize>, Vec<usize>) {
    let n = mol.atom_count();
    let mut parent = vec![usize::MAX; n];
    let mut dist = vec![usize::MAX; n];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let mut nbrs: Vec<(usize, usize)> = mol.neighbors(v).to_vec();
        nbrs.sort_unstable();
        for (w, b) in nbrs {
            if !mol.bonds()[b].in_ring || dist[w] != usize::MAX {
                continue;
            }
            dist[w] = dist[v] + 1;
            parent[w] = v;
            queue.push_back(w);
        }
    }
    (parent, dist)
}

fn tree_path(parent: &[usize], root: usize, to: usize) -> Vec<usize> {
    let mut path = vec![to];
    let mut v = to;
    while v != root {
        v = parent[v];
        path.push(v);
    }
    path.reverse();
    path
}

fn ring_components(mol: &Molecule) -> usize {
    let n = mol.atom_count();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] || !mol.atom(start).in_ring {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(w, b) in mol.neighbors(v) {
                if mol.bonds()[b].in_ring && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}
