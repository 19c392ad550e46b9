//! AVL tree over `f64` keys with multiplicities and subtree sizes, supporting
//! insert, remove-one and k-th order statistic in `O(log n)`.

use std::cell::Cell;
use std::cmp::Ordering;

#[derive(Debug, Clone)]
struct Node {
    key: f64,
    count: usize,
    /// Total multiplicity in this subtree.
    size: usize,
    height: i32,
    left: Link,
    right: Link,
}

type Link = Option<Box<Node>>;

fn height(link: &Link) -> i32 {
    link.as_ref().map_or(0, |n| n.height)
}

fn size(link: &Link) -> usize {
    link.as_ref().map_or(0, |n| n.size)
}

impl Node {
    fn leaf(key: f64) -> Box<Node> {
        Box::new(Node {
            key,
            count: 1,
            size: 1,
            height: 1,
            left: None,
            right: None,
        })
    }

    fn refresh(&mut self) {
        self.height = 1 + height(&self.left).max(height(&self.right));
        self.size = self.count + size(&self.left) + size(&self.right);
    }

    fn balance(&self) -> i32 {
        height(&self.left) - height(&self.right)
    }
}

fn rotate_right(mut n: Box<Node>) -> Box<Node> {
    let mut l = n.left.take().expect("rotate_right needs a left child");
    n.left = l.right.take();
    n.refresh();
    l.right = Some(n);
    l.refresh();
    l
}

fn rotate_left(mut n: Box<Node>) -> Box<Node> {
    let mut r = n.right.take().expect("rotate_left needs a right child");
    n.right = r.left.take();
    n.refresh();
    r.left = Some(n);
    r.refresh();
    r
}

fn rebalance(mut n: Box<Node>) -> Box<Node> {
    n.refresh();
    let b = n.balance();
    if b > 1 {
        if n.left.as_ref().unwrap().balance() < 0 {
            n.left = Some(rotate_left(n.left.take().unwrap()));
        }
        return rotate_right(n);
    }
    if b < -1 {
        if n.right.as_ref().unwrap().balance() > 0 {
            n.right = Some(rotate_right(n.right.take().unwrap()));
        }
        return rotate_left(n);
    }
    n
}

/// Ordered multiset of finite reals.
#[derive(Debug, Clone, Default)]
pub struct OrderedMultiset {
    root: Link,
    visits: Cell<u64>,
}

impl OrderedMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        size(&self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// Height of the tree (0 when empty).
    pub fn height(&self) -> usize {
        height(&self.root) as usize
    }

    /// Nodes touched by all operations so far.
    pub fn visits(&self) -> u64 {
        self.visits.get()
    }

    fn touch(&self) {
        self.visits.set(self.visits.get() + 1);
    }

    pub fn insert(&mut self, key: f64) {
        let root = self.root.take();
        self.root = Some(self.insert_at(root, key));
    }

    fn insert_at(&self, link: Link, key: f64) -> Box<Node> {
        let Some(mut n) = link else {
            return Node::leaf(key);
        };
        self.touch();
        match key.total_cmp(&n.key) {
            Ordering::Equal => {
                n.count += 1;
                n.size += 1;
                return n;
            }
            Ordering::Less => n.left = Some(self.insert_at(n.left.take(), key)),
            Ordering::Greater => n.right = Some(self.insert_at(n.right.take(), key)),
        }
        rebalance(n)
    }

    /// Removes one instance of `key`; returns whether it was present.
    pub fn remove_one(&mut self, key: f64) -> bool {
        let root = self.root.take();
        let (root, removed) = self.remove_at(root, key);
        self.root = root;
        removed
    }

    fn remove_at(&self, link: Link, key: f64) -> (Link, bool) {
        let Some(mut n) = link else {
            return (None, false);
        };
        self.touch();
        let removed = match key.total_cmp(&n.key) {
            Ordering::Less => {
                let (l, r) = self.remove_at(n.left.take(), key);
                n.left = l;
                r
            }
            Ordering::Greater => {
                let (rt, r) = self.remove_at(n.right.take(), key);
                n.right = rt;
                r
            }
            Ordering::Equal => {
                if n.count > 1 {
                    n.count -= 1;
                    n.size -= 1;
                    return (Some(n), true);
                }
                match (n.left.take(), n.right.take()) {
                    (None, r) => return (r, true),
                    (l, None) => return (l, true),
                    (l, Some(r)) => {
                        let (rest, mut min) = self.take_min(r);
                        min.left = l;
                        min.right = rest;
                        n = min;
                        true
                    }
                }
            }
        };
        (Some(rebalance(n)), removed)
    }

    fn take_min(&self, mut n: Box<Node>) -> (Link, Box<Node>) {
        self.touch();
        match n.left.take() {
            None => {
                let rest = n.right.take();
                (rest, n)
            }
            Some(l) => {
                let (rest, min) = self.take_min(l);
                n.left = rest;
                (Some(rebalance(n)), min)
            }
        }
    }

    /// The element at rank `k` in descending order (`k = 0` is the maximum).
    pub fn kth_largest(&self, mut k: usize) -> Option<f64> {
        let mut cur = self.root.as_deref();
        while let Some(n) = cur {
            self.touch();
            let right = size(&n.right);
            if k < right {
                cur = n.right.as_deref();
            } else if k < right + n.count {
                return Some(n.key);
            } else {
                k -= right + n.count;
                cur = n.left.as_deref();
            }
        }
        None
    }

    /// All elements in ascending order, with repetition.
    pub fn to_sorted_vec(&self) -> Vec<f64> {
        fn walk(link: &Link, out: &mut Vec<f64>) {
            if let Some(n) = link {
                walk(&n.left, out);
                out.extend(std::iter::repeat(n.key).take(n.count));
                walk(&n.right, out);
            }
        }
        let mut out = Vec::with_capacity(self.len());
        walk(&self.root, &mut out);
        out
    }
}
