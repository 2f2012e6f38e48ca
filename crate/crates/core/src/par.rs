//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on rayon;
//! without it every call degrades to a plain iterator. [`Exec::Sequential`]
//! is always available so benchmarks can compare both in one binary.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving map consuming a vector.
pub fn map_owned<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}

/// Like [`map`], but at most `cap` items are in flight at once.
pub fn map_capped<T, R, F>(exec: Exec, cap: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(cap.max(1)).build() {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
    }
    let _ = (exec, cap);
    items.iter().map(f).collect()
}

/// Runs independent jobs concurrently, each on its own thread, when parallel;
/// otherwise one after another. Suited to blocking work such as track workers.
pub fn run_jobs<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    if exec.is_parallel() && items.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = items.into_iter().map(|it| s.spawn(|| f(it))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("job panicked"))
                .collect()
        })
    } else {
        items.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Exec::Parallel, &xs, |x| x * x);
        let b = map(Exec::Sequential, &xs, |x| x * x);
        assert_eq!(a, b);
        let c = map_capped(Exec::Parallel, 4, &xs, |x| x + 1);
        assert_eq!(c[999], 1000);
        let d = run_jobs(Exec::Parallel, vec![1, 2, 3], |x| x * 10);
        assert_eq!(d, vec![10, 20, 30]);
        let e = map_owned(Exec::Sequential, vec![1, 2], |x| x + 1);
        assert_eq!(e, vec![2, 3]);
    }
}
