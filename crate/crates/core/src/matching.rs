use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match<T> {
    pub index_a: usize,
    pub index_b: usize,
    /// Euclidean descriptor distance.
    pub distance: T,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest candidate by squared distance, lowest index on ties.
fn nearest<T: Scalar, V: AsRef<[T]>>(query: &[T], candidates: &[V]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (j, c) in candidates.iter().enumerate() {
        let d = sq_dist(query, c.as_ref());
        match best {
            Some((_, bd)) if !(d < bd) => {}
            _ => best = Some((j, d)),
        }
    }
    best
}

/// Mutual nearest neighbours: `(i, j)` is kept iff `j` is the nearest
/// descriptor to `a[i]` in `b` and `i` the nearest to `b[j]` in `a`.
///
/// Panics if descriptor lengths disagree.
pub fn match_bidirectional<T: Scalar, V: AsRef<[T]>>(desc_a: &[V], desc_b: &[V]) -> Vec<Match<T>> {
    if desc_a.is_empty() || desc_b.is_empty() {
        return Vec::new();
    }
    let len = desc_a[0].as_ref().len();
    assert!(
        desc_a.iter().chain(desc_b).all(|d| d.as_ref().len() == len),
        "descriptor lengths differ"
    );
    let back: Vec<usize> = desc_b
        .iter()
        .map(|d| nearest(d.as_ref(), desc_a).expect("non-empty").0)
        .collect();
    desc_a
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let (j, dist) = nearest(d.as_ref(), desc_b).expect("non-empty");
            (back[j] == i).then(|| Match {
                index_a: i,
                index_b: j,
                distance: dist.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_lists_match_identity() {
        let d: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = match_bidirectional(&d, &d);
        let pairs: Vec<(usize, usize)> = m.iter().map(|m| (m.index_a, m.index_b)).collect();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(m.iter().all(|m| m.distance == 0.0));
    }

    #[test]
    fn one_dimensional_mutual_check() {
        let a = vec![vec![0.0f64], vec![10.0]];
        let b = vec![vec![0.1f64]];
        let m = match_bidirectional(&a, &b);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].index_a, m[0].index_b), (0, 0));
        assert!((m[0].distance - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_side() {
        let a = vec![vec![1.0f64]];
        let b: Vec<Vec<f64>> = vec![];
        assert!(match_bidirectional(&a, &b).is_empty());
        assert!(match_bidirectional(&b, &a).is_empty());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let a = vec![vec![0.0f64]];
        let b = vec![vec![1.0f64], vec![-1.0]];
        let m = match_bidirectional(&a, &b);
        assert_eq!((m[0].index_a, m[0].index_b), (0, 0));
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(
            a in prop::collection::vec(prop::collection::vec(0i32..6, 3), 0..12),
            b in prop::collection::vec(prop::collection::vec(0i32..6, 3), 0..12),
        ) {
            let a: Vec<Vec<f64>> = a.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
            let b: Vec<Vec<f64>> = b.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
            let ab: Vec<(usize, usize)> = match_bidirectional(&a, &b).iter().map(|m| (m.index_a, m.index_b)).collect();
            let mut ba: Vec<(usize, usize)> = match_bidirectional(&b, &a).iter().map(|m| (m.index_b, m.index_a)).collect();
            ba.sort();
            prop_assert_eq!(ab.clone(), ba);
            let mut seen_b: Vec<usize> = ab.iter().map(|p| p.1).collect();
            seen_b.sort();
            seen_b.dedup();
            prop_assert_eq!(seen_b.len(), ab.len());
        }
    }
}
