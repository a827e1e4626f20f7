//! Synthetic fixtures for benchmarks.

use cellink_core::cer::{CandidateList, CandidateSource};
use cellink_core::kb::{Bm25fParams, Entity, EntityKind, KbPaper, KbStore, PaperEntityRelation};
use cellink_core::{SegmentTag, TaggedSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: usize = 2000;

fn word(rng: &mut ChaCha8Rng) -> String {
    format!("w{}", rng.random_range(0..VOCAB))
}

fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

/// `n` entities with random abbreviations, names and descriptions over a
/// fixed vocabulary.
pub fn entities(n: usize, seed: u64) -> Vec<Entity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Entity {
            id: format!("e{i:06}"),
            kind: if i % 3 == 0 { EntityKind::Dataset } else { EntityKind::Method },
            abbreviation: word(&mut rng),
            full_name: phrase(&mut rng, 4),
            description: phrase(&mut rng, 20),
        })
        .collect()
}

pub fn kb(n: usize, seed: u64) -> KbStore {
    KbStore::from_records(entities(n, seed), Vec::<KbPaper>::new(), Vec::<PaperEntityRelation>::new(), Bm25fParams::default())
        .expect("synthetic KB is valid")
}

pub fn query(seed: u64) -> String {
    phrase(&mut ChaCha8Rng::seed_from_u64(seed), 6)
}

/// Two ranked lists of `len` ids drawn from a pool of `2 * len`, so they
/// overlap.
pub fn candidate_lists(len: usize, seed: u64) -> (CandidateList, CandidateList) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..len).map(|_| format!("e{}", rng.random_range(0..2 * len))).collect::<Vec<_>>();
    let (dr, asr) = (draw(), draw());
    (CandidateList::from_ids(CandidateSource::Dr, dr), CandidateList::from_ids(CandidateSource::Asr, asr))
}

/// A random tagged sequence of `len` tokens.
pub fn sequence(len: usize, seed: u64) -> TaggedSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tokens, tags) = (0..len)
        .map(|_| (format!("w{}", rng.random_range(0..50)), SegmentTag::ALL[rng.random_range(0..SegmentTag::ALL.len())]))
        .unzip();
    TaggedSequence::new(tokens, tags).expect("equal lengths")
}
