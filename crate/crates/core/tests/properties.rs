use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clifs::augment::{oversample, rtt, AugmentedDataset, LeakageGuard};
use clifs::corpus::{
    balance_round_robin, chunk_text, discretize, split, Chunk, Document, FusionLabel, RiskLabel, SplitSpec,
};
use clifs::eval::{bootstrap_ci, macro_f1, macro_f1_metric, mae};
use clifs::features::{mask_groups, FeatureGroup, FeatureSchema, FeatureVector};
use clifs::lexical::{uai_batch, vri_aggregate, LexicalCounts, VriCategoryScores, VriClass};
use clifs::mlm::{directional_score, fusion_proximity, FusionScorer, ScorerConfig};
use clifs::models::forest::{ForestParams, MaxFeatures, RandomForest};
use clifs::models::hard_vote;
use clifs::risk::risk_feature_names;
use clifs::stub::{ContextMlm, EchoTranslator, FixedTableMlm};
use clifs::synth::fusion_corpus;
use clifs::text::{RuleSegmenter, SentenceSegmenter};
use clifs::vocab::{expand, find_mentions, EmbeddingTable, SeedLists, VocabCategory, Vocabularies, VocabularySet};

fn label() -> impl Strategy<Value = FusionLabel> {
    (0usize..3).prop_map(|i| FusionLabel::ALL[i])
}

const WORDS: &[&str] = &["alpha", "beta", "gamma", "delta", "our", "team", "my", "club", "the", "of"];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..12).prop_map(|ws| {
        let mut s = ws.join(" ");
        s[..1].make_ascii_uppercase();
        s + "."
    })
}

fn table(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, dim), n)
}

fn embeddings(vecs: &[Vec<f32>]) -> EmbeddingTable {
    let mut t = EmbeddingTable::new();
    for (i, v) in vecs.iter().enumerate() {
        t.insert(&format!("w{i}"), v).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discretization_is_shift_invariant(scores in prop::collection::vec(1.0f64..5.0, 1..60), c in 0.0f64..2.0) {
        let (b, labels) = discretize(&scores).unwrap();
        prop_assert!(b.sd >= 0.0 && b.low_cut <= b.high_cut);
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let (_, again) = discretize(&shifted).unwrap();
        // shifting can move a score across a cut by one rounding step
        let moved = labels.iter().zip(&again).filter(|(a, b)| a != b).count();
        prop_assert!(moved == 0 || scores.iter().any(|s| ((s - b.low_cut).abs().min((s - b.high_cut).abs())) < 1e-9));
        let inside = scores.iter().filter(|s| (b.low_cut < **s) && (**s < b.high_cut)).count();
        let medium = labels.iter().filter(|l| **l == FusionLabel::Medium).count();
        prop_assert!(medium >= inside);
    }

    #[test]
    fn split_is_deterministic_disjoint_and_exhaustive(n in 0usize..200, seed in any::<u64>()) {
        let spec = SplitSpec::new(0.7, 0.1, 0.2, seed).unwrap();
        let items: Vec<usize> = (0..n).collect();
        let a = split(items.clone(), &spec).unwrap();
        let b = split(items, &spec).unwrap();
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.test, &b.test);
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn chunker_round_trips_sentences(sents in prop::collection::vec(sentence(), 1..40), target in 3usize..40) {
        let text = sents.join(" ");
        let seg = RuleSegmenter::default();
        let chunks = chunk_text(&text, target, &seg);
        let back: Vec<String> = chunks.iter().flat_map(|c| c.sentences.clone()).collect();
        let want: Vec<String> = seg.sentences(&text).into_iter().map(str::to_string).collect();
        prop_assert_eq!(back, want);
        prop_assert!(chunks.iter().all(|c| c.word_count > 0));
    }

    #[test]
    fn round_robin_is_uniform(counts in prop::collection::vec(1usize..40, 3), authors in 1usize..5) {
        let mut chunks = Vec::new();
        for (label, &n) in RiskLabel::ALL.iter().zip(&counts) {
            for i in 0..n {
                chunks.push(Chunk {
                    source_id: format!("{}-{}", label.as_str(), i % authors),
                    author: format!("a{}", i % authors),
                    label: *label,
                    index: i,
                    text: "x.".into(),
                    word_count: 1,
                });
            }
        }
        let per = *counts.iter().min().unwrap();
        let out = balance_round_robin(&chunks, per).unwrap();
        for l in RiskLabel::ALL {
            prop_assert_eq!(out.iter().filter(|c| c.label == l).count(), per);
        }
    }

    #[test]
    fn expansion_is_monotone_and_single_hop(vecs in table(30, 4), hi in 0.5f64..1.0, drop in 0.0f64..0.4) {
        let t = embeddings(&vecs);
        let seeds = VocabularySet::new(VocabCategory::K, ["w0", "w1", "w2"]);
        let strict = expand(&seeds, &t, hi).unwrap();
        let loose = expand(&seeds, &t, hi - drop).unwrap();
        prop_assert!(seeds.expanded_terms.is_subset(&strict.expanded_terms));
        prop_assert!(strict.expanded_terms.is_subset(&loose.expanded_terms));
        let again = expand(&strict, &t, hi).unwrap();
        prop_assert_eq!(again.expanded_terms, strict.expanded_terms);
    }

    #[test]
    fn mentions_align_to_words_and_do_not_overlap(sents in prop::collection::vec(sentence(), 1..6)) {
        let text = sents.join(" ");
        let vocab = VocabularySet::new(VocabCategory::T, ["team", "our team", "club", "of the"]);
        let spans = find_mentions(&text, &vocab, &[]);
        let boundary = |i: usize| i == 0 || i == text.len() || !text.as_bytes()[i - 1].is_ascii_alphanumeric() || !text.as_bytes()[i].is_ascii_alphanumeric();
        for s in &spans {
            prop_assert!(s.start < s.end && s.end <= text.len());
            prop_assert!(boundary(s.start) && boundary(s.end));
        }
        for w in spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
    }

    #[test]
    fn lower_alpha_never_lowers_the_score(ps in prop::collection::vec(0.01f32..0.2, 3), a in 0.1f64..1.0, d in 0.0f64..0.09) {
        let words = ["i", "my", "team", "x"];
        let mlm = FixedTableMlm::new(words, vec![vec![("i", ps[0]), ("my", ps[1]), ("x", ps[2])]]);
        let i_set = VocabularySet::new(VocabCategory::I, ["i", "my"]);
        let t_set = VocabularySet::new(VocabCategory::T, ["team"]);
        let s = |alpha: f64| {
            let cfg = ScorerConfig { alpha, ..ScorerConfig::default() };
            directional_score("x team x team", &i_set, &t_set, &[], &mlm, &cfg).unwrap().score
        };
        prop_assert!(s(a - d) >= s(a));
        // a candidate the model never predicts adds nothing
        let wider = VocabularySet::new(VocabCategory::I, ["i", "my", "team"]);
        let cfg = ScorerConfig { alpha: a, ..ScorerConfig::default() };
        let w = directional_score("x team x team", &wider, &t_set, &[], &mlm, &cfg).unwrap().score;
        prop_assert_eq!(w, s(a));
    }

    #[test]
    fn harmonic_mean_bounds(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let f = fusion_proximity(a, b).unwrap();
        prop_assert_eq!(f, fusion_proximity(b, a).unwrap());
        prop_assert!(a.min(b) <= f && f <= a.max(b));
    }

    #[test]
    fn uai_batches_are_centered(rates in prop::collection::vec((0.0f64..0.3, 0.0f64..0.3), 2..50)) {
        let batch: Vec<LexicalCounts> = rates.iter().map(|&(a, c)| LexicalCounts { affiliation_rate: a, cogproc_rate: c }).collect();
        let u = uai_batch(&batch).unwrap();
        let mean = u.iter().map(|s| s.uai).sum::<f64>() / u.len() as f64;
        prop_assert!(mean.abs() <= 1e-9);
        for (s, (a, c)) in u.iter().zip(&rates) {
            prop_assert_eq!(s.nuai, a - c);
        }
    }

    #[test]
    fn vri_scales_linearly(xs in prop::collection::vec(0.0f64..1.0, 12), lambda in 0.0f64..1.0) {
        let mut s = VriCategoryScores::uniform(0.0);
        s.a_scores = xs[..4].to_vec();
        s.b_scores = xs[4..7].to_vec();
        s.c_scores = xs[7..].to_vec();
        let base = vri_aggregate(&s).unwrap().vri;
        let mut scaled = s.clone();
        for v in scaled.a_scores.iter_mut().chain(&mut scaled.b_scores).chain(&mut scaled.c_scores) {
            *v *= lambda;
        }
        prop_assert!((vri_aggregate(&scaled).unwrap().vri - lambda * base).abs() <= 1e-9);
    }

    #[test]
    fn vri_classes_cover_the_half_line(v in 0.0f64..200.0) {
        let c = VriClass::from_vri(v);
        let want = if v < 10.0 { VriClass::Low } else if v <= 30.0 { VriClass::Medium } else if v <= 70.0 { VriClass::High } else { VriClass::VeryHigh };
        prop_assert_eq!(c, want);
    }

    #[test]
    fn group_masking_is_idempotent_and_commutes(values in prop::collection::vec(-1.0f64..1.0, 16 + 12), a in 0usize..5, b in 0usize..5) {
        let schema = FeatureSchema::full(16);
        let v = FeatureVector { values, groups: schema.groups.clone(), degraded: BTreeSet::new() };
        let groups = [FeatureGroup::Embeddings, FeatureGroup::ClassProbs, FeatureGroup::Clifs, FeatureGroup::Uai, FeatureGroup::Vri];
        let da: BTreeSet<_> = [groups[a]].into();
        let db: BTreeSet<_> = [groups[b]].into();
        let once = mask_groups(&v, &da);
        prop_assert_eq!(&mask_groups(&once, &da), &once);
        prop_assert_eq!(mask_groups(&once, &db), mask_groups(&mask_groups(&v, &db), &da));
        prop_assert_eq!(schema.mask_groups(&da).names.len(), once.len());
    }

    #[test]
    fn hard_vote_is_total(votes in prop::collection::vec(label(), 2..6)) {
        let l = hard_vote(&votes).unwrap();
        prop_assert!(votes.contains(&l));
    }

    #[test]
    fn macro_f1_is_bounded_and_relabel_invariant(pairs in prop::collection::vec((label(), label()), 1..80), perm in 0usize..6) {
        let p = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
        let map = |l: FusionLabel| FusionLabel::ALL[p[l.index()]];
        let (t, y): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let f = macro_f1(&t, &y).unwrap().macro_f1;
        prop_assert!((0.0..=1.0).contains(&f));
        let t2: Vec<_> = t.iter().map(|&l| map(l)).collect();
        let y2: Vec<_> = y.iter().map(|&l| map(l)).collect();
        prop_assert!((macro_f1(&t2, &y2).unwrap().macro_f1 - f).abs() < 1e-12);
    }

    #[test]
    fn mae_triangle(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let a: Vec<f64> = v.iter().map(|x| x.0).collect();
        let b: Vec<f64> = v.iter().map(|x| x.1).collect();
        let c: Vec<f64> = v.iter().map(|x| x.2).collect();
        prop_assert!(mae(&a, &c).unwrap() <= mae(&a, &b).unwrap() + mae(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn augmentation_leaves_sources_alone(seed in any::<u64>(), fraction in 0.0f64..1.0) {
        let docs = fusion_corpus(30, seed % 1000).unwrap();
        let before = docs.clone();
        let classes: BTreeSet<_> = [FusionLabel::Low, FusionLabel::High].into();
        let over = oversample(&docs, &classes, fraction, seed).unwrap();
        let variants: Vec<Document> = docs.iter().flat_map(|d| rtt(d, &EchoTranslator, &["german".to_string()])).collect();
        prop_assert_eq!(&docs, &before);
        for d in over.iter().chain(&variants) {
            let src = docs.iter().find(|s| Some(&s.id) == d.source_id.as_ref()).unwrap();
            prop_assert_eq!(d.label, src.label);
            prop_assert_eq!(d.vifs_score, src.vifs_score);
        }
        let mut pool = docs.clone();
        pool.extend(over);
        pool.extend(variants);
        prop_assert!(AugmentedDataset::new(pool).validate_lineage().is_ok());
    }

    #[test]
    fn guard_rejects_any_descendant_of_a_test_item(seed in 0u64..500, pick in 0usize..10) {
        let docs = fusion_corpus(30, seed).unwrap();
        let (train, test) = docs.split_at(20);
        let mut pool = train.to_vec();
        pool.extend(rtt(&test[pick], &EchoTranslator, &["chinese".to_string()]));
        prop_assert!(LeakageGuard::default().check(&pool, test).is_err());
    }
}

#[test]
fn risk_layout_has_no_vri_fusion() {
    let lex = clifs::lexical::LexiconBundle::illustrative();
    let names = risk_feature_names(&lex.vri);
    assert_eq!(names.len(), 17);
    assert!(!names.iter().any(|n| n.contains("fusion") && n != "fusion_proximity"));
}

#[test]
fn permuting_columns_permutes_nothing_else() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<Vec<f64>> = (0..90).map(|_| (0..5).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] + r[3] > 1.0) + usize::from(r[1] > 0.7)).collect();
    let perm = [3, 0, 4, 1, 2];
    let xp: Vec<Vec<f64>> = x.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
    let params = ForestParams {
        max_features: MaxFeatures::All,
        ..ForestParams::classifier(25)
    };
    let a = RandomForest::fit_classifier(&x, &y, 3, None, &params, 42).unwrap();
    let b = RandomForest::fit_classifier(&xp, &y, 3, None, &params, 42).unwrap();
    for (r, rp) in x.iter().zip(&xp) {
        assert_eq!(a.predict_class(r).unwrap(), b.predict_class(rp).unwrap());
    }
}

#[test]
fn doubled_weights_do_not_cost_minority_recall() {
    let mut worse = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, n) in [(0usize, 20), (1, 160), (2, 20)] {
            for _ in 0..n {
                x.push(vec![c as f64 + rng.gen_range(-1.2..1.2), rng.gen_range(0.0..1.0)]);
                y.push(c);
            }
        }
        let labels: Vec<FusionLabel> = y.iter().map(|&c| FusionLabel::ALL[c]).collect();
        let w = clifs::models::class_weights(&labels).unwrap();
        let params = ForestParams {
            min_samples_leaf: 5,
            ..ForestParams::classifier(40)
        };
        let recall = |f: &RandomForest| {
            let mut hit = 0;
            for (r, &c) in x.iter().zip(&y) {
                if c != 1 && f.predict_class(r).unwrap() == c {
                    hit += 1;
                }
            }
            hit
        };
        let plain = RandomForest::fit_classifier(&x, &y, 3, None, &params, seed).unwrap();
        let weighted = RandomForest::fit_classifier(&x, &y, 3, Some(&w), &params, seed).unwrap();
        if recall(&weighted) < recall(&plain) {
            worse += 1;
        }
    }
    assert_eq!(worse, 0);
}

#[test]
fn bootstrap_interval_usually_contains_the_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut inside = 0;
    for trial in 0..100 {
        let t: Vec<FusionLabel> = (0..120).map(|i| FusionLabel::ALL[i % 3]).collect();
        let p: Vec<FusionLabel> = t.iter().map(|&l| if rng.gen_bool(0.6) { l } else { FusionLabel::ALL[rng.gen_range(0..3)] }).collect();
        let ci = bootstrap_ci(&t, &p, macro_f1_metric, 300, trial).unwrap();
        if ci.ci_low <= ci.point && ci.point <= ci.ci_high {
            inside += 1;
        }
    }
    assert!(inside >= 95, "{inside}/100");
}

#[test]
fn high_fusion_texts_score_higher_self_to_target() {
    let docs = fusion_corpus(200, 12).unwrap();
    let seeds = SeedLists::default();
    let vocab = Vocabularies::from_seeds(&seeds);
    let words: Vec<&str> = vocab.identity.single_word_terms().chain(vocab.target.single_word_terms()).collect();
    let mlm = ContextMlm::new(words);
    let scorer = FusionScorer::new(&vocab, &mlm, None, ScorerConfig::default()).unwrap();
    let mean = |l: FusionLabel| {
        let xs: Vec<f64> = docs
            .iter()
            .filter(|d| d.label == Some(l))
            .map(|d| scorer.score(&d.text).unwrap().s_i_to_t)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    assert!(mean(FusionLabel::High) > mean(FusionLabel::Low));
}
