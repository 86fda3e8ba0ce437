//! Execution facade: data-parallel map over independent jobs (chains, sweep
//! grid points, replicate fits) backed by rayon when the `parallel` feature
//! is enabled, plain iteration otherwise. Output order always matches input
//! order, so results are identical either way.

#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

/// Always-sequential map with the same signature, kept for benchmarking the
/// parallel path against a baseline.
pub fn serial_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_and_serial_agree_in_order() {
        let items: Vec<u64> = (0..64).collect();
        let f = |x: u64| x * x + 1;
        assert_eq!(par_map(items.clone(), f), serial_map(items, f));
    }
}
