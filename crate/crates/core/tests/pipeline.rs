use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rfa_core::eval::{repeated_holdout, EvalConfig};
use rfa_core::features::{extract_profiles, ExtractConfig, ModelKind, ProfileTable};
use rfa_core::forest::ForestConfig;
use rfa_core::ingest::{
    generate_synthetic_corpus, utc_date, Corpus, InteractionEvent, RevisionEvent, RfaCase, Role, RoleAssignment,
    SignalSpec, Timestamp,
};
use rfa_core::UserId;

const DAY: i64 = 86_400;

fn id(s: &str) -> UserId {
    UserId::new(s).unwrap()
}

fn talk(from: &str, to: &str, n: usize, ts: Timestamp) -> Vec<InteractionEvent> {
    (0..n).map(|i| InteractionEvent::user_talk(id(from), id(to), ts + i as i64)).collect()
}

fn revs(page: &str, cats: &[&str], n: usize, ts: Timestamp) -> Vec<RevisionEvent> {
    let categories: BTreeSet<String> = cats.iter().map(|c| c.to_string()).collect();
    (0..n)
        .map(|i| RevisionEvent { user: id("A"), page: page.into(), categories: categories.clone(), timestamp: ts + i as i64 })
        .collect()
}

/// Candidate A among five other users; D becomes an admin only after the
/// cutoff, and one message and one revision fall after it.
fn fixture() -> (Corpus, Timestamp) {
    let close = utc_date(2007, 3, 15);
    let cutoff = close - 7 * DAY;
    let t = cutoff - 30 * DAY;
    let user_talk = [
        talk("A", "B", 2, t),
        talk("A", "C", 1, t),
        talk("B", "A", 1, t),
        talk("C", "D", 3, t),
        talk("D", "A", 1, t),
        talk("E", "F", 1, t),
        talk("F", "A", 2, t),
        talk("A", "E", 5, cutoff),
    ]
    .concat();
    let article_talk = vec![
        InteractionEvent::article_talk(id("A"), "Talk:P1", t),
        InteractionEvent::article_talk(id("A"), "Talk:P1", t + 1),
        InteractionEvent::article_talk(id("A"), "Talk:P9", t + 2),
        InteractionEvent::article_talk(id("A"), "Talk:P9", t + 3),
        InteractionEvent::article_talk(id("A"), "Talk:P7", cutoff + 1),
    ];
    let revisions = [revs("P1", &["X", "Y"], 3, t), revs("P2", &["Y", "Z"], 1, t), revs("P3", &["W"], 1, cutoff)].concat();
    let roles = vec![
        RoleAssignment { user: id("B"), role: Role::Admin, effective_from: 0 },
        RoleAssignment { user: id("C"), role: Role::Admin, effective_from: 0 },
        RoleAssignment { user: id("C"), role: Role::Bureaucrat, effective_from: 0 },
        RoleAssignment { user: id("D"), role: Role::Admin, effective_from: cutoff },
    ];
    let cases = vec![RfaCase { candidate: id("A"), close_date: close, outcome: true, votes: None }];
    (Corpus { user_talk, article_talk, revisions, roles, cases }, cutoff)
}

fn value(t: &ProfileTable, name: &str) -> f64 {
    t.value(0, name).unwrap()
}

#[test]
fn six_node_fixture_matches_hand_values() {
    let (corpus, _) = fixture();
    let t = extract_profiles(&corpus, &corpus.cases, &ExtractConfig::default()).unwrap();
    let expected = [
        ("Revisions", 4.0),
        ("Pages", 2.0),
        ("Categories", 3.0),
        ("TalkPages", 2.0),
        ("PageTalks", 4.0),
        ("Revision_repartition", 0.25),
        ("PageTalks_repartition", 0.0),
        ("Degree_userSN", 4.0),
        ("outDegree_userSN", 2.0),
        ("inDegree_userSN", 3.0),
        ("TalksNumber_userSN", 7.0),
        ("outTalksNumber_userSN", 3.0),
        ("inTalksNumber_userSN", 4.0),
        ("Closeness_userSN", 0.75),
        ("outTalksRepartition_userSN", 1.0 / 6.0),
        ("inTalksRepartition_userSN", 1.0 / 6.0),
        ("Degree_adminSN", 2.0),
        ("outDegree_adminSN", 2.0),
        ("inDegree_adminSN", 1.0),
        ("TalksNumber_adminSN", 4.0),
        ("Closeness_adminSN", 1.0),
        ("Betweeness_adminSN", 1.0),
        ("outTalksRepartition_adminSN", 1.0 / 6.0),
        ("inTalksRepartition_adminSN", 0.0),
        ("Degree_burSN", 1.0),
        ("outDegree_burSN", 1.0),
        ("inDegree_burSN", 0.0),
        ("Closeness_burSN", 1.0),
        ("Betweeness_burSN", 0.0),
        // A -> C with C dangling: r_A = 0.5 / 1.425.
        ("PageRank_burSN", 0.5 / 1.425),
    ];
    for (name, want) in expected {
        let got = value(&t, name);
        assert!((got - want).abs() < 1e-9, "{name}: {got} != {want}");
    }
    let pr_user = value(&t, "PageRank_userSN");
    assert!(pr_user > 0.0 && pr_user < 1.0);
}

#[test]
fn later_events_do_not_leak() {
    let (mut corpus, cutoff) = fixture();
    let base = extract_profiles(&corpus, &corpus.cases, &ExtractConfig::default()).unwrap();
    corpus.user_talk.extend(talk("A", "F", 4, cutoff + DAY));
    corpus.user_talk.extend(talk("B", "A", 4, cutoff));
    corpus.revisions.extend(revs("P5", &["Q"], 9, cutoff + 2));
    corpus.article_talk.push(InteractionEvent::article_talk(id("A"), "Talk:P5", cutoff));
    corpus.roles.push(RoleAssignment { user: id("F"), role: Role::Bureaucrat, effective_from: cutoff + 1 });
    let after = extract_profiles(&corpus, &corpus.cases, &ExtractConfig::default()).unwrap();
    assert_eq!(base, after);
}

#[test]
fn profiles_ignore_event_order() {
    let s = generate_synthetic_corpus(5, 400, 40, SignalSpec::default()).unwrap();
    let a = extract_profiles(&s.corpus, &s.corpus.cases, &ExtractConfig::default()).unwrap();
    let mut c = s.corpus.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.user_talk.shuffle(&mut rng);
    c.revisions.shuffle(&mut rng);
    c.article_talk.shuffle(&mut rng);
    c.roles.shuffle(&mut rng);
    let b = extract_profiles(&c, &c.cases, &ExtractConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synthetic_tallies_are_recovered() {
    let s = generate_synthetic_corpus(9, 800, 80, SignalSpec::default()).unwrap();
    let t = extract_profiles(&s.corpus, &s.corpus.cases, &ExtractConfig::default()).unwrap();
    assert_eq!(t.len(), s.truth.len());
    for truth in &s.truth {
        let row = t.profiles.iter().position(|p| p.candidate == truth.candidate).unwrap();
        assert_eq!(t.profiles[row].outcome, truth.outcome);
        let v = |n: &str| t.value(row, n).unwrap();
        assert_eq!(v("Revisions"), truth.revisions as f64);
        assert_eq!(v("Pages"), truth.pages as f64);
        assert_eq!(v("Categories"), truth.categories as f64);
        assert_eq!(v("TalkPages"), truth.talk_pages as f64);
        assert_eq!(v("PageTalks"), truth.page_talks as f64);
        assert_eq!(v("outDegree_userSN"), truth.out_degree as f64);
        assert_eq!(v("inDegree_userSN"), truth.in_degree as f64);
        assert_eq!(v("outTalksNumber_userSN"), truth.out_talks as f64);
        assert_eq!(v("inTalksNumber_userSN"), truth.in_talks as f64);
        assert_eq!(v("outDegree_adminSN"), truth.admin_out_degree as f64);
    }
}

#[test]
fn zero_activity_candidate_is_a_zero_row() {
    let (mut corpus, _) = fixture();
    corpus.cases.push(RfaCase { candidate: id("Nobody"), close_date: utc_date(2007, 5, 1), outcome: false, votes: None });
    let t = extract_profiles(&corpus, &corpus.cases, &ExtractConfig::default()).unwrap();
    // PageRank keeps its teleport share even for an isolated node.
    for (name, v) in t.attributes.iter().zip(&t.profiles[1].values) {
        if name.starts_with("PageRank") {
            assert!(*v > 0.0 && *v < 1.0, "{name}");
        } else {
            assert_eq!(*v, 0.0, "{name}");
        }
    }
}

#[test]
fn end_to_end_is_deterministic() {
    let s = generate_synthetic_corpus(2, 600, 60, SignalSpec::default()).unwrap();
    let cfg = EvalConfig { repetitions: 10, seed: 1, forest: ForestConfig { n_trees: 30, ..Default::default() }, ..Default::default() };
    let run = || {
        let t = extract_profiles(&s.corpus, &s.corpus.cases, &ExtractConfig::default()).unwrap();
        repeated_holdout(&t, ModelKind::Model4, &cfg).unwrap().to_json().unwrap()
    };
    assert_eq!(run(), run());
}
