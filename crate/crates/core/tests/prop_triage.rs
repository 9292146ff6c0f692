use proptest::prelude::*;
use trustml::triage::*;

fn record() -> impl Strategy<Value = (TriageRecord, Severity)> {
    (
        0u32..90,
        any::<bool>(),
        any::<bool>(),
        prop::sample::select(vec!["building", "tinshed", "other"]),
        prop::sample::select(vec!["Dhaka", "Khulna", "Sylhet", "Barishal"]),
        any::<bool>(),
    )
        .prop_map(|(age, male, urban, house, district, severe)| {
            let r = TriageRecord::new(
                age as f64,
                if male { Gender::Male } else { Gender::Female },
                if urban { AreaType::Urban } else { AreaType::Rural },
                house,
                district,
            )
            .unwrap();
            (r, if severe { Severity::Severe } else { Severity::Mild })
        })
}

fn training_set() -> impl Strategy<Value = (Vec<TriageRecord>, Vec<Severity>, TreeParams)> {
    (prop::collection::vec(record(), 8..80), 1usize..5, 1usize..4).prop_map(|(rows, depth, leaf)| {
        let (r, l) = rows.into_iter().unzip();
        (r, l, TreeParams { max_depth: depth, min_leaf: leaf })
    })
}

fn weighted_child_impurity(node: &Node) -> Option<(f64, f64)> {
    match node {
        Node::Leaf { .. } => None,
        Node::Split { counts, left, right, .. } => {
            let n = (counts[0] + counts[1]) as f64;
            let parent = gini_impurity(counts).unwrap();
            let child = |c: [usize; 2]| (c[0] + c[1]) as f64 / n * gini_impurity(&c).unwrap();
            Some((parent, child(left.counts()) + child(right.counts())))
        }
    }
}

fn check_splits(node: &Node) -> Result<(), TestCaseError> {
    if let Some((parent, children)) = weighted_child_impurity(node) {
        prop_assert!(children <= parent + 1e-12);
        if let Node::Split { left, right, .. } = node {
            check_splits(left)?;
            check_splits(right)?;
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn splits_never_increase_impurity((records, labels, params) in training_set()) {
        prop_assume!(records.len() >= 2 * params.min_leaf);
        let tree = train_tree(&records, &labels, params).unwrap();
        check_splits(tree.root())?;
        prop_assert!(tree.depth() <= params.max_depth);
    }

    #[test]
    fn training_rows_reach_a_leaf_counting_their_label((records, labels, params) in training_set()) {
        prop_assume!(records.len() >= 2 * params.min_leaf);
        let tree = train_tree(&records, &labels, params).unwrap();
        for (r, l) in records.iter().zip(&labels) {
            let counts = tree.leaf_counts(r);
            let idx = usize::from(*l == Severity::Severe);
            prop_assert!(counts[idx] >= 1);
            let p = tree.predict_proba(r).unwrap();
            prop_assert!((p.mild + p.severe - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn training_and_serialization_are_stable((records, labels, params) in training_set()) {
        prop_assume!(records.len() >= 2 * params.min_leaf);
        let a = train_tree(&records, &labels, params).unwrap();
        let b = train_tree(&records, &labels, params).unwrap();
        prop_assert_eq!(a.serialize(), b.serialize());
        let parsed = DecisionTree::parse(&a.serialize()).unwrap();
        prop_assert_eq!(&parsed, &a);
        prop_assert_eq!(parsed.serialize(), a.serialize());
    }

    #[test]
    fn reroute_iff_below_threshold(c in 0.0f64..=1.0) {
        prop_assert_eq!(needs_reroute(c), c < REROUTE_THRESHOLD);
    }
}

#[test]
fn every_message_has_both_languages() {
    let table = StringTable::builtin();
    for m in Message::ALL {
        for lang in [Language::English, Language::Bangla] {
            assert!(!table.get(m, lang).trim().is_empty(), "{m:?} {lang:?}");
        }
        assert_ne!(table.get(m, Language::English), table.get(m, Language::Bangla));
    }
}
