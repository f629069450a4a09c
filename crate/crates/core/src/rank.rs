//! Shared ranking order: descending score, ties by ascending key.

use std::cmp::Ordering;

pub fn ranked_order<K: Ord>(a: &(K, f64), b: &(K, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

pub fn sort_ranked<K: Ord>(items: &mut [(K, f64)]) {
    items.sort_by(ranked_order);
}
