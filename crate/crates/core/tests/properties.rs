//! Property tests for the protocol and metric invariants.

mod support;

use proptest::prelude::*;

use mad_core::{
    self_bleu, diversity, normalize_answer, AgentRole, Transcript, Utterance,
};

use support::oracle_self_bleu;

/// Generates a legal sequence of appends: for each iteration, all sides in
/// order, optionally followed by a judge utterance, with a possible judge-only
/// closing round.
fn legal_transcript(n_debaters: u32, iterations: u32, with_judge: bool, closing: bool) -> Transcript {
    let mut t = Transcript::new("d", "t", "f");
    for i in 1..=iterations {
        for side in 1..=n_debaters {
            t.append(Utterance::new(AgentRole::debater(side), i, format!("s{side} i{i}")))
                .expect("legal debater append");
        }
        if with_judge {
            t.append(Utterance::new(AgentRole::Judge, i, format!("j i{i}")))
                .expect("legal judge append");
        }
    }
    if closing && with_judge {
        t.append(Utterance::new(AgentRole::Judge, iterations + 1, "extract"))
            .expect("legal closing append");
    }
    t
}

/// Brute-force enumeration of every candidate next utterance over a small
/// grid; append must accept exactly the set that keeps validate() clean.
fn brute_force_next_agreement(base: &Transcript) {
    let max_iteration = base.current_iteration() + 2;
    for iteration in 1..=max_iteration {
        for side in 1..=5u32 {
            let candidate = Utterance::new(AgentRole::debater(side), iteration, "x");
            check_candidate(base, candidate);
        }
        check_candidate(base, Utterance::new(AgentRole::Judge, iteration, "j"));
    }
}

fn check_candidate(base: &Transcript, candidate: Utterance) {
    let mut by_append = base.clone();
    let accepted = by_append.append(candidate.clone()).is_ok();
    let mut by_force = base.clone();
    by_force.utterances.push(candidate.clone());
    let statically_valid = by_force.validate().is_empty();
    assert_eq!(
        accepted, statically_valid,
        "append/validate disagree on {:?} iter {} after {} utterances",
        candidate.role, candidate.iteration, base.len()
    );
}

proptest! {
    #[test]
    fn legal_append_sequences_validate_clean(
        n in 2u32..=4,
        iterations in 1u32..=4,
        with_judge in proptest::bool::ANY,
        closing in proptest::bool::ANY,
    ) {
        let t = legal_transcript(n, iterations, with_judge, closing);
        prop_assert!(t.validate().is_empty());
    }

    #[test]
    fn append_agrees_with_brute_force_validation(
        n in 2u32..=3,
        iterations in 0u32..=2,
        with_judge in proptest::bool::ANY,
    ) {
        let base = if iterations == 0 {
            Transcript::new("d", "t", "f")
        } else {
            legal_transcript(n, iterations, with_judge, false)
        };
        brute_force_next_agreement(&base);
    }

    #[test]
    fn transcript_jsonl_round_trip_is_byte_identical(
        n in 2u32..=4,
        iterations in 1u32..=3,
        texts in proptest::collection::vec("[a-zA-Z0-9 .,!?\n:/-]{0,40}", 1..20),
    ) {
        let mut t = legal_transcript(n, iterations, true, true);
        // Splice arbitrary texts into the judge utterances to exercise escaping.
        let mut text_iter = texts.into_iter();
        for u in t.utterances.iter_mut() {
            if u.role == AgentRole::Judge {
                if let Some(text) = text_iter.next() {
                    u.text = text;
                }
            }
        }
        let bytes = t.to_jsonl();
        let back = Transcript::from_jsonl(bytes.as_bytes()).unwrap();
        prop_assert_eq!(back.to_jsonl(), bytes);
    }

    #[test]
    fn normalize_answer_is_idempotent(input in "[ -~一-鿿]{0,60}") {
        let once = normalize_answer(&input);
        prop_assert_eq!(normalize_answer(&once), once.clone(), "input {:?} -> {:?}", input, once);
    }

    #[test]
    fn self_bleu_identity_and_symmetry(
        a in "[a-z]{1,8}( [a-z]{1,8}){0,8}",
        b in "[a-z]{1,8}( [a-z]{1,8}){0,8}",
    ) {
        prop_assert_eq!(self_bleu(&a, &a), 100.0);
        prop_assert_eq!(diversity(&a, &a), 0.0);
        let forward = self_bleu(&a, &b);
        let backward = self_bleu(&b, &a);
        prop_assert!((forward - backward).abs() < 1e-12);
        prop_assert!((0.0..=100.0).contains(&forward));
    }

    #[test]
    fn self_bleu_tracks_oracle(
        a in "[a-d]{1,3}( [a-d]{1,3}){0,6}",
        b in "[a-d]{1,3}( [a-d]{1,3}){0,6}",
    ) {
        let ours = self_bleu(&a, &b);
        let oracle = oracle_self_bleu(&a, &b);
        prop_assert!((ours - oracle).abs() < 1e-9, "{} vs {}", ours, oracle);
    }
}
