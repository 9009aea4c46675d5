use std::collections::BTreeSet;

use dlot_core::merge::{merge_journals, merge_states, MergedDataset};
use dlot_core::testing::{simulate_session, SimParams};
use dlot_core::{journal, start_session, Observation, ObservationStatus, SessionState, SubmissionKey, Timestamp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Split {
    full: SessionState,
    parts: Vec<SessionState>,
}

fn state_with(full: &SessionState, observations: &[Observation]) -> SessionState {
    let (mut state, _) = start_session(full.config().clone(), Timestamp::from_millis(0)).unwrap();
    for o in observations {
        state = state.apply_observation(o.clone()).unwrap();
    }
    state
}

/// Spreads one session's observations over `n` sources, each observation
/// landing in at least one source.
fn split(seed: u64, n: usize) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_session(&mut rng, &SimParams::small());
    let mut buckets: Vec<Vec<Observation>> = vec![Vec::new(); n];
    for o in sim.state.observations() {
        let home = rng.random_range(0..n);
        for (i, bucket) in buckets.iter_mut().enumerate() {
            if i == home || rng.random_bool(0.3) {
                bucket.push(o.clone());
            }
        }
    }
    let parts = buckets.iter().map(|b| state_with(&sim.state, b)).collect();
    Split {
        full: sim.state,
        parts,
    }
}

fn labelled(states: &[&SessionState]) -> Vec<(String, SessionState)> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("source{i}"), (*s).clone()))
        .collect()
}

fn observation_set(m: &MergedDataset) -> BTreeSet<String> {
    m.observations.iter().map(|o| format!("{o:?}")).collect()
}

fn conflict_keys(m: &MergedDataset) -> BTreeSet<SubmissionKey> {
    m.report.conflicts.iter().map(|c| c.key.clone()).collect()
}

fn as_state(m: &MergedDataset) -> SessionState {
    let (mut state, _) = start_session(m.config.clone(), Timestamp::from_millis(0)).unwrap();
    for o in &m.observations {
        state = state.apply_observation(o.clone()).unwrap();
    }
    state
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_sessions_reassemble(seed in any::<u64>()) {
        let s = split(seed, 3);
        let [a, b, c] = [&s.parts[0], &s.parts[1], &s.parts[2]];
        let flat = merge_states(&labelled(&[a, b, c])).unwrap();
        prop_assert!(flat.report.conflicts.is_empty());
        prop_assert_eq!(&flat.observations, &merge_states(&labelled(&[&s.full])).unwrap().observations);

        for order in [[b, c, a], [c, a, b], [a, c, b]] {
            let m = merge_states(&labelled(&order)).unwrap();
            prop_assert_eq!(&m.observations, &flat.observations);
        }
        let ab = as_state(&merge_states(&labelled(&[a, b])).unwrap());
        let bc = as_state(&merge_states(&labelled(&[b, c])).unwrap());
        let left = merge_states(&labelled(&[&ab, c])).unwrap();
        let right = merge_states(&labelled(&[a, &bc])).unwrap();
        prop_assert_eq!(&left.observations, &flat.observations);
        prop_assert_eq!(&right.observations, &flat.observations);
    }

    #[test]
    fn conflicts_are_order_independent(seed in any::<u64>(), flips in 1usize..4) {
        let s = split(seed, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        let mut tampered: Vec<Observation> = s.parts[1].observations().to_vec();
        let mut flipped = BTreeSet::new();
        if tampered.is_empty() {
            return Ok(());
        }
        for _ in 0..flips {
            let i = rng.random_range(0..tampered.len());
            let o = &mut tampered[i];
            o.logged_at = o.logged_at.plus_millis(1);
            flipped.insert(o.key());
        }
        let b = state_with(&s.full, &tampered);
        let a = &s.parts[0];
        let c = &s.parts[1];
        let forward = merge_states(&labelled(&[a, &b, c])).unwrap();
        let backward = merge_states(&labelled(&[c, &b, a])).unwrap();
        prop_assert_eq!(observation_set(&forward), observation_set(&backward));
        prop_assert_eq!(conflict_keys(&forward), conflict_keys(&backward));
        prop_assert_eq!(conflict_keys(&forward), flipped.clone());
        for o in &forward.observations {
            prop_assert!(!flipped.contains(&o.key()));
        }
        prop_assert_eq!(forward.report.rows_merged + flipped.len(), s.full.observations().len());
    }
}

#[test]
fn merges_journal_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sim = simulate_session(&mut rng, &SimParams::small());
    let bytes = journal::encode_all(&sim.entries).unwrap();
    let first = dir.path().join("a.dlotj");
    let second = dir.path().join("b.dlotj");
    std::fs::write(&first, &bytes).unwrap();
    std::fs::write(&second, &bytes).unwrap();
    let merged = merge_journals(&[&first, &second]).unwrap();
    assert_eq!(merged.observations.len(), sim.state.observations().len());
    assert!(merged.report.conflicts.is_empty());
    assert!(merged
        .observations
        .iter()
        .all(|o| o.status != ObservationStatus::Logged || !o.selections.is_empty()));

    let mut corrupted = bytes.clone();
    let mid = corrupted.len() / 2;
    corrupted[mid] ^= 0x20;
    std::fs::write(&second, &corrupted).unwrap();
    assert!(merge_journals(&[&first, &second]).is_err());
}
