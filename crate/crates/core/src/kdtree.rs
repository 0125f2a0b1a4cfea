//! Exact nearest-neighbour search over feature rows.
//!
//! Balanced implicit tree over a flat row-major buffer. Ties in distance
//! resolve to the smallest row index, so results match an exhaustive scan.

use crate::scalar::{squared_distance, Real};

const LEAF_SIZE: usize = 8;

pub(crate) struct KdTree<'a, T> {
    data: &'a [T],
    dim: usize,
    /// Row ids in tree order.
    order: Vec<usize>,
    /// Split axis for the node stored at each position of `order`.
    axis: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Nearest<T> {
    pub index: usize,
    pub dist2: T,
}

impl<'a, T: Real> KdTree<'a, T> {
    /// Indexes the rows listed in `rows` of the `dim`-wide buffer `data`.
    pub fn build(data: &'a [T], dim: usize, rows: Vec<usize>) -> Self {
        let n = rows.len();
        let mut tree = Self { data, dim, order: rows, axis: vec![0; n] };
        if dim > 0 {
            tree.build_range(0, n);
        }
        tree
    }

    #[inline]
    fn coord(&self, row: usize, axis: usize) -> T {
        self.data[row * self.dim + axis]
    }

    #[inline]
    fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    fn build_range(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        // widest axis
        let mut best_axis = 0;
        let mut best_spread = T::neg_infinity();
        for a in 0..self.dim {
            let (mut mn, mut mx) = (T::infinity(), T::neg_infinity());
            for &r in &self.order[lo..hi] {
                let v = self.coord(r, a);
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > best_spread {
                best_spread = mx - mn;
                best_axis = a;
            }
        }
        let mid = lo + (hi - lo) / 2;
        let (data, dim) = (self.data, self.dim);
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            data[a * dim + best_axis].partial_cmp(&data[b * dim + best_axis]).expect("finite features")
        });
        self.axis[mid] = best_axis;
        self.build_range(lo, mid);
        self.build_range(mid + 1, hi);
    }

    pub fn nearest(&self, query: &[T]) -> Option<Nearest<T>> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = Nearest { index: usize::MAX, dist2: T::infinity() };
        if self.dim == 0 {
            best.index = *self.order.iter().min().expect("non-empty");
            best.dist2 = T::zero();
            return Some(best);
        }
        self.search(query, 0, self.order.len(), &mut best);
        Some(best)
    }

    #[inline]
    fn offer(&self, row: usize, query: &[T], best: &mut Nearest<T>) {
        let d2 = squared_distance(self.row(row), query);
        if d2 < best.dist2 || (d2 == best.dist2 && row < best.index) {
            *best = Nearest { index: row, dist2: d2 };
        }
    }

    fn search(&self, query: &[T], lo: usize, hi: usize, best: &mut Nearest<T>) {
        if hi - lo <= LEAF_SIZE {
            for &r in &self.order[lo..hi] {
                self.offer(r, query, best);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let node = self.order[mid];
        let axis = self.axis[mid];
        let diff = query[axis] - self.coord(node, axis);
        let (near, far) = if diff < T::zero() { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(query, near.0, near.1, best);
        self.offer(node, query, best);
        // equality still explores: an equidistant row with a smaller index may sit there
        if diff * diff <= best.dist2 {
            self.search(query, far.0, far.1, best);
        }
    }
}
