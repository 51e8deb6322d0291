//! Indexed map helpers with a parallel and a sequential flavour.
//!
//! `run_indexed` dispatches to rayon when the `parallel` feature is active
//! and degrades to a plain sequential map otherwise. Callers must pass a
//! pure function of the index; under that contract both flavours return
//! identical vectors, which is what the determinism guarantees of the GA
//! and the campaign runner rest on.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential counterpart of [`run_indexed`], always available so benches
/// can compare the two paths within one build.
pub fn run_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mix(i: usize) -> u64 {
        let mut z = (i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z ^ (z >> 31)
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let a = run_indexed(1000, mix);
        let b = run_indexed_seq(1000, mix);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_range() {
        let v: Vec<u64> = run_indexed(0, mix);
        assert!(v.is_empty());
    }
}
