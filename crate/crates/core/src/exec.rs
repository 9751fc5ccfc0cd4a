//! Data-parallel helpers. With the `parallel` feature the element loops run
//! on rayon; without it, or with [`Exec::Sequential`], they run inline. Both
//! paths produce bit-identical results: work is mapped per item and reduced
//! in a fixed order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_range<U, F>(self, len: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..len).into_par_iter().map(f).collect(),
            _ => (0..len).map(f).collect(),
        }
    }

    /// `out[i] = f(i)`.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel if out.len() >= CHUNK => {
                out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i))
            }
            _ => out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i)),
        }
    }

    /// Sum of `f(i)` for `i < len`, accumulated per fixed-size chunk and then
    /// across chunks in index order.
    pub fn sum<F>(self, len: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunks = len.div_ceil(CHUNK);
        let partial = |c: usize| {
            let end = ((c + 1) * CHUNK).min(len);
            (c * CHUNK..end).map(&f).sum::<f64>()
        };
        let partials: Vec<f64> = match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel if chunks > 1 => (0..chunks).into_par_iter().map(partial).collect(),
            _ => (0..chunks).map(partial).collect(),
        };
        partials.into_iter().sum()
    }

    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.sum(a.len(), |i| a[i] * b[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let v: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e3).collect();
        let s = Exec::Sequential.dot(&v, &v);
        let p = Exec::Parallel.dot(&v, &v);
        assert_eq!(s.to_bits(), p.to_bits());
        let ms = Exec::Sequential.map(&v, |x| x * 2.0);
        let mp = Exec::Parallel.map(&v, |x| x * 2.0);
        assert_eq!(ms, mp);
    }
}
