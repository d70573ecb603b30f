use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, FileRef, SourceFile};

/// File-level partition into retrieval corpus, validation (selector training) and test sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub retrieval_files: Vec<FileRef>,
    pub validation_files: Vec<FileRef>,
    pub test_files: Vec<FileRef>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `round(test_frac * N)` files go to test and
/// the next `round(val_frac * N)` to validation; the rest form the retrieval corpus.
pub fn split_dataset(files: &[SourceFile], test_frac: f64, val_frac: f64, seed: u64) -> Result<DatasetSplit, CorpusError> {
    let in_range = |f: f64| f.is_finite() && (0.0..1.0).contains(&f);
    if !in_range(test_frac) || !in_range(val_frac) || test_frac + val_frac >= 1.0 {
        return Err(CorpusError::InvalidFraction { test: test_frac, validation: val_frac });
    }
    if files.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = files.len();
    let mut refs: Vec<FileRef> = files.iter().map(SourceFile::file_ref).collect();
    refs.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    refs.shuffle(&mut rng);

    let n_test = (libm::round(test_frac * n as f64) as usize).min(n);
    let n_val = (libm::round(val_frac * n as f64) as usize).min(n - n_test);
    let retrieval_files = refs.split_off(n_test + n_val);
    let validation_files = refs.split_off(n_test);
    Ok(DatasetSplit { retrieval_files, validation_files, test_files: refs, seed })
}
