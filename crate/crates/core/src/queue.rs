//! `n log n` queue monitor.
//!
//! A queue history is unlinearizable exactly when some value `a` is
//! enqueued and dequeued entirely inside the window where another value `v`
//! is surely stored (`total(a) ⊆ inner(v)`). Inner windows go into a
//! red-black tree keyed on their left end and augmented with the largest
//! right end in each subtree, which answers "is this interval contained in
//! some stored one" along a single root-to-leaf path.

use serde::Serialize;

use crate::history::{op_to_val, AttributedValue, History, Interval, Timestamp, Value};
use crate::prep::prepare;
use crate::verdict::{Verdict, Witness};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Color {
    Red,
    Black,
}

#[derive(Clone, Debug)]
pub struct QTreeNode {
    pub lkey: Timestamp,
    pub rkey: Timestamp,
    /// Largest `rkey` in the subtree; set by [`complete_qtree`].
    pub hkey: Timestamp,
    pub color: Color,
    pub left: Option<usize>,
    pub right: Option<usize>,
    parent: Option<usize>,
    pub value: Value,
}

/// Arena-backed tree; children are indices into [`QTree::nodes`].
#[derive(Clone, Debug, Default)]
pub struct QTree {
    pub nodes: Vec<QTreeNode>,
    pub root: Option<usize>,
}

/// Inserts the intervals in the given order, with standard red-black
/// rebalancing. High keys are left unset.
pub fn build_qtree(intervals: &[(Interval, Value)]) -> QTree {
    let mut work = 0;
    build_counted(intervals, &mut work)
}

fn build_counted(intervals: &[(Interval, Value)], work: &mut u64) -> QTree {
    let mut t = QTree { nodes: Vec::with_capacity(intervals.len()), root: None };
    for &(iv, value) in intervals {
        t.insert(iv, value, work);
    }
    t
}

/// Sets every high key bottom-up in one pass.
pub fn complete_qtree(t: &mut QTree) {
    let Some(root) = t.root else { return };
    // Iterative post-order: children are finished before their parent.
    let mut order = Vec::with_capacity(t.nodes.len());
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        order.push(i);
        stack.extend(t.nodes[i].left);
        stack.extend(t.nodes[i].right);
    }
    for &i in order.iter().rev() {
        let n = &t.nodes[i];
        let h = [n.left, n.right]
            .into_iter()
            .flatten()
            .map(|c| t.nodes[c].hkey)
            .fold(n.rkey, Timestamp::max);
        t.nodes[i].hkey = h;
    }
}

/// Some stored value whose interval contains `q`.
pub fn qtree_contains(t: &QTree, q: Interval) -> Option<Value> {
    let mut work = 0;
    t.search(q, &mut work)
}

impl QTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The node with the given left key.
    pub fn find(&self, lkey: Timestamp) -> Option<&QTreeNode> {
        let mut cur = self.root;
        while let Some(i) = cur {
            let n = &self.nodes[i];
            if lkey == n.lkey {
                return Some(n);
            }
            cur = if lkey < n.lkey { n.left } else { n.right };
        }
        None
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        fn go(t: &QTree, n: Option<usize>) -> usize {
            n.map_or(0, |i| 1 + go(t, t.nodes[i].left).max(go(t, t.nodes[i].right)))
        }
        go(self, self.root)
    }

    /// Search order, red-black coloring and black heights all hold.
    pub fn is_valid_red_black(&self) -> bool {
        // Returns the black height, or None on a violation.
        fn go(t: &QTree, n: Option<usize>, lo: Option<Timestamp>, hi: Option<Timestamp>) -> Option<usize> {
            let Some(i) = n else { return Some(1) };
            let node = &t.nodes[i];
            if lo.is_some_and(|l| node.lkey <= l) || hi.is_some_and(|h| node.lkey >= h) {
                return None;
            }
            if node.color == Color::Red
                && [node.left, node.right].into_iter().flatten().any(|c| t.nodes[c].color == Color::Red)
            {
                return None;
            }
            let l = go(t, node.left, lo, Some(node.lkey))?;
            let r = go(t, node.right, Some(node.lkey), hi)?;
            (l == r).then_some(l + usize::from(node.color == Color::Black))
        }
        self.root.is_none_or(|r| self.nodes[r].color == Color::Black)
            && go(self, self.root, None, None).is_some()
    }

    /// Every high key equals the maximum right key in its subtree.
    pub fn high_keys_consistent(&self) -> bool {
        self.nodes.iter().all(|n| {
            let want = [n.left, n.right]
                .into_iter()
                .flatten()
                .map(|c| self.nodes[c].hkey)
                .fold(n.rkey, Timestamp::max);
            n.hkey == want
        })
    }

    fn search(&self, q: Interval, work: &mut u64) -> Option<Value> {
        let mut cur = self.root;
        while let Some(i) = cur {
            *work += 1;
            let n = &self.nodes[i];
            if n.lkey <= q.left && q.right <= n.rkey {
                return Some(n.value);
            }
            if q.left < n.lkey {
                // Everything to the right starts even later.
                cur = n.left;
                continue;
            }
            match n.left {
                // Every left key here is below `q.left`, so any node whose
                // right key reaches `q.right` contains `q`.
                Some(l) if q.right <= self.nodes[l].hkey => return Some(self.follow_high_key(l, work)),
                _ => cur = n.right,
            }
        }
        None
    }

    /// Walks from `i` to the node holding its subtree's high key.
    fn follow_high_key(&self, mut i: usize, work: &mut u64) -> Value {
        let target = self.nodes[i].hkey;
        loop {
            *work += 1;
            let n = &self.nodes[i];
            if n.rkey == target {
                return n.value;
            }
            i = [n.left, n.right]
                .into_iter()
                .flatten()
                .find(|&c| self.nodes[c].hkey == target)
                .expect("high key comes from a child");
        }
    }

    fn insert(&mut self, iv: Interval, value: Value, work: &mut u64) {
        let z = self.nodes.len();
        let mut parent = None;
        let mut cur = self.root;
        while let Some(i) = cur {
            *work += 1;
            parent = Some(i);
            cur = if iv.left < self.nodes[i].lkey { self.nodes[i].left } else { self.nodes[i].right };
        }
        self.nodes.push(QTreeNode {
            lkey: iv.left,
            rkey: iv.right,
            hkey: iv.right,
            color: Color::Red,
            left: None,
            right: None,
            parent,
            value,
        });
        match parent {
            None => self.root = Some(z),
            Some(p) if iv.left < self.nodes[p].lkey => self.nodes[p].left = Some(z),
            Some(p) => self.nodes[p].right = Some(z),
        }
        self.fix_insert(z, work);
    }

    fn is_red(&self, n: Option<usize>) -> bool {
        n.is_some_and(|i| self.nodes[i].color == Color::Red)
    }

    fn fix_insert(&mut self, mut z: usize, work: &mut u64) {
        while let Some(p) = self.nodes[z].parent.filter(|&p| self.nodes[p].color == Color::Red) {
            *work += 1;
            let g = self.nodes[p].parent.expect("red node has a parent");
            let p_is_left = self.nodes[g].left == Some(p);
            let uncle = if p_is_left { self.nodes[g].right } else { self.nodes[g].left };
            if self.is_red(uncle) {
                self.nodes[p].color = Color::Black;
                self.nodes[uncle.unwrap()].color = Color::Black;
                self.nodes[g].color = Color::Red;
                z = g;
                continue;
            }
            let mut p = p;
            if p_is_left {
                if self.nodes[p].right == Some(z) {
                    z = p;
                    self.rotate_left(z);
                    p = self.nodes[z].parent.unwrap();
                }
                self.nodes[p].color = Color::Black;
                self.nodes[g].color = Color::Red;
                self.rotate_right(g);
            } else {
                if self.nodes[p].left == Some(z) {
                    z = p;
                    self.rotate_right(z);
                    p = self.nodes[z].parent.unwrap();
                }
                self.nodes[p].color = Color::Black;
                self.nodes[g].color = Color::Red;
                self.rotate_left(g);
            }
        }
        let root = self.root.unwrap();
        self.nodes[root].color = Color::Black;
    }

    fn replace_child(&mut self, parent: Option<usize>, old: usize, new: usize) {
        match parent {
            None => self.root = Some(new),
            Some(p) if self.nodes[p].left == Some(old) => self.nodes[p].left = Some(new),
            Some(p) => self.nodes[p].right = Some(new),
        }
    }

    fn rotate_left(&mut self, x: usize) {
        let y = self.nodes[x].right.expect("rotate left needs a right child");
        let beta = self.nodes[y].left;
        self.nodes[x].right = beta;
        if let Some(b) = beta {
            self.nodes[b].parent = Some(x);
        }
        let xp = self.nodes[x].parent;
        self.nodes[y].parent = xp;
        self.replace_child(xp, x, y);
        self.nodes[y].left = Some(x);
        self.nodes[x].parent = Some(y);
    }

    fn rotate_right(&mut self, x: usize) {
        let y = self.nodes[x].left.expect("rotate right needs a left child");
        let beta = self.nodes[y].right;
        self.nodes[x].left = beta;
        if let Some(b) = beta {
            self.nodes[b].parent = Some(x);
        }
        let xp = self.nodes[x].parent;
        self.nodes[y].parent = xp;
        self.replace_child(xp, x, y);
        self.nodes[y].right = Some(x);
        self.nodes[x].parent = Some(y);
    }
}

/// `total(inner) ⊆ inner_window(outer)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CriticalPair {
    pub inner: Value,
    pub outer: Value,
}

/// Quadratic reference scan over all ordered pairs.
pub fn find_critical_pair_naive(vals: &[AttributedValue]) -> Option<CriticalPair> {
    vals.iter().find_map(|a| {
        vals.iter()
            .filter(|v| v.value != a.value)
            .find(|v| v.inner().is_some_and(|i| i.contains(&a.total())))
            .map(|v| CriticalPair { inner: a.value, outer: v.value })
    })
}

/// Decides a queue history after differentiation and completion.
pub fn queue_linearizable(h: &History) -> Verdict {
    queue_linearizable_counted(h).0
}

/// Like [`queue_linearizable`], also returning the number of tree nodes
/// touched while building and searching.
pub fn queue_linearizable_counted(h: &History) -> (Verdict, u64) {
    let prepared = match prepare(h) {
        Ok(p) => p,
        Err(v) => return (v, 0),
    };
    let vals = op_to_val(&prepared.history);
    let mut work = 0;
    match critical_pair(&vals, &mut work) {
        None => (Verdict::linearizable(), work),
        Some(pair) => {
            let witness = Witness::CriticalPair {
                inner: prepared.original(pair.inner),
                outer: prepared.original(pair.outer),
            };
            (Verdict::unlinearizable(witness), work)
        }
    }
}

/// Tree-based critical pair search; values without an inner window are
/// probed but never stored.
pub fn find_critical_pair(vals: &[AttributedValue]) -> Option<CriticalPair> {
    let mut work = 0;
    critical_pair(vals, &mut work)
}

fn critical_pair(vals: &[AttributedValue], work: &mut u64) -> Option<CriticalPair> {
    let stored: Vec<(Interval, Value)> =
        vals.iter().filter_map(|a| a.inner().map(|i| (i, a.value))).collect();
    let mut tree = build_counted(&stored, work);
    complete_qtree(&mut tree);
    *work += tree.len() as u64;
    vals.iter().find_map(|a| {
        tree.search(a.total(), work).map(|outer| CriticalPair { inner: a.value, outer })
    })
}
