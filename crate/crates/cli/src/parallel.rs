//! Thread-pooled batch evaluation. Results are collected by job index, so
//! output is identical to sequential evaluation regardless of scheduling.

use mmmo_core::harness::Evaluator;
use mmmo_core::merge::MergeConfig;
use mmmo_core::moo::Objective;
use mmmo_core::Result;

pub const THREADS_ENV: &str = "MMMO_THREADS";

/// Evaluation concurrency cap: `MMMO_THREADS` when set, otherwise the number
/// of logical cores.
pub fn thread_cap() -> usize {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Wraps an evaluator so batches fan out over up to `threads` scoped
/// threads.
pub struct ParallelEvaluator<'a, E: Evaluator + ?Sized> {
    inner: &'a E,
    threads: usize,
}

impl<'a, E: Evaluator + ?Sized> ParallelEvaluator<'a, E> {
    pub fn new(inner: &'a E, threads: usize) -> Self {
        Self { inner, threads: threads.max(1) }
    }
}

impl<E: Evaluator + ?Sized> Evaluator for ParallelEvaluator<'_, E> {
    fn objective_spec(&self) -> &[Objective] {
        self.inner.objective_spec()
    }

    fn n_models(&self) -> usize {
        self.inner.n_models()
    }

    fn evaluate(&self, config: &MergeConfig, seed: u64) -> Result<Vec<f64>> {
        self.inner.evaluate(config, seed)
    }

    fn evaluate_batch(&self, jobs: &[(MergeConfig, u64)]) -> Vec<Result<Vec<f64>>> {
        let workers = self.threads.min(jobs.len()).max(1);
        if workers == 1 {
            return jobs.iter().map(|(c, s)| self.inner.evaluate(c, *s)).collect();
        }
        // Contiguous chunks, one worker each; rejoined in order.
        let chunk = jobs.len().div_ceil(workers);
        let mut out = Vec::with_capacity(jobs.len());
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|(c, s)| self.inner.evaluate(c, *s))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                out.extend(h.join().expect("evaluation worker panicked"));
            }
        });
        out
    }
}
