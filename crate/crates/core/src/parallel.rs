//! Execution policy for the per-node loops.
//!
//! With the `parallel` feature the node maps run on the rayon pool; without it
//! (or with [`Parallelism::Sequential`]) they run on the calling thread. Both
//! paths produce bit-identical results because every node is computed
//! independently and quadratures are always reduced sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many nodes the rayon dispatch costs more than it saves.
pub const MIN_PARALLEL_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Rayon,
}


impl Parallelism {
    /// Fills `out[j] = f(j)`.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        match self {
            Parallelism::Sequential => {
                out.iter_mut().enumerate().for_each(|(j, o)| *o = f(j));
            }
            #[cfg(feature = "parallel")]
            Parallelism::Rayon => {
                if out.len() < MIN_PARALLEL_LEN {
                    out.iter_mut().enumerate().for_each(|(j, o)| *o = f(j));
                } else {
                    out.par_iter_mut()
                        .with_min_len(64)
                        .enumerate()
                        .for_each(|(j, o)| *o = f(j));
                }
            }
        }
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Parallelism::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Parallelism::Rayon => items.par_iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_matches_sequential() {
        let mut a = vec![0.0; 1000];
        let mut b = vec![0.0; 1000];
        Parallelism::Sequential.fill(&mut a, |j| (j as f64).sin());
        Parallelism::default().fill(&mut b, |j| (j as f64).sin());
        assert_eq!(a, b);
    }
}
