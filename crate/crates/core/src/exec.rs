//! Seeded random streams and the chunked map-reduce every estimator runs on.
//!
//! Work is cut into fixed-size chunks and chunk `i` always draws from the
//! ChaCha stream `i` of the operation's seed. Chunk results are collected in
//! index order and reduced sequentially, so an estimate depends only on the
//! seed and the sample count. Thread count and the parallel/sequential switch
//! do not change a single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per chunk (one RNG stream per chunk).
pub const CHUNK: usize = 4096;

/// A 64-bit master seed. Operations derive labelled sub-seeds so that two
/// estimators in one run never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn derive(self, label: &str) -> Seed {
        // FNV-1a over the label, then a splitmix64 finalizer with the parent.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        Seed(splitmix64(self.0 ^ h.rotate_left(17)))
    }

    pub fn derive_index(self, index: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    /// The random stream for chunk (or worker) `index`.
    pub fn stream(self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Execution strategy. `Parallel` runs chunks on the current rayon pool and
/// silently degrades to sequential when the `parallel` feature is off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f(chunk_index, chunk_len, rng)` over the chunks covering `n`
    /// samples and returns the results in chunk order.
    pub fn map_chunks<T, F>(self, n: usize, seed: Seed, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        let run = |i: usize| {
            let len = if i + 1 == chunks { n - i * CHUNK } else { CHUNK };
            let mut rng = seed.stream(i as u64);
            f(len, &mut rng)
        };
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..chunks).into_par_iter().map(run).collect();
        }
        (0..chunks).map(run).collect()
    }

    /// Ordered map over an index range (no RNG involved).
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Pairwise (tree) reduction in index order.
pub fn tree_reduce<T, F>(mut items: Vec<T>, merge: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(merge(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunk_lengths_cover_n() {
        for n in [0, 1, CHUNK - 1, CHUNK, CHUNK + 1, 3 * CHUNK + 17] {
            let lens = Exec::Sequential.map_chunks(n, Seed(1), |len, _| len);
            assert_eq!(lens.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let f = |len: usize, rng: &mut ChaCha8Rng| (0..len).map(|_| rng.random::<f64>()).sum::<f64>();
        let a = Exec::Sequential.map_chunks(10 * CHUNK + 5, Seed(7), f);
        let b = Exec::Parallel.map_chunks(10 * CHUNK + 5, Seed(7), f);
        assert_eq!(a, b);
    }

    #[test]
    fn derived_seeds_differ() {
        let s = Seed(42);
        assert_ne!(s.derive("a"), s.derive("b"));
        assert_eq!(s.derive("a"), s.derive("a"));
        assert_ne!(s.derive_index(0), s.derive_index(1));
    }

    #[test]
    fn tree_reduce_is_ordered() {
        let v: Vec<String> = (0..7).map(|i| i.to_string()).collect();
        assert_eq!(tree_reduce(v, |a, b| a + &b).unwrap(), "0123456");
        assert!(tree_reduce(Vec::<u8>::new(), |a, _| a).is_none());
    }
}
