use proptest::prelude::*;
use trustml::data_io::*;
use trustml::equity::{Region, UpazilaRecord};
use trustml::triage::{AreaType, Gender, Severity, TriageRecord};

fn name() -> impl Strategy<Value = String> {
    // commas, quotes and non-ASCII exercise the CSV quoting rules
    "[A-Za-z][A-Za-z ,\"'\u{0995}-\u{0999}-]{0,12}[A-Za-z]"
}

fn dengue_row() -> impl Strategy<Value = (TriageRecord, Option<Severity>)> {
    (0f64..=120.0, any::<bool>(), any::<bool>(), name(), name(), prop::option::of(any::<bool>())).prop_map(
        |(age, male, urban, house, district, label)| {
            (
                TriageRecord {
                    age,
                    gender: if male { Gender::Male } else { Gender::Female },
                    area_type: if urban { AreaType::Urban } else { AreaType::Rural },
                    house_type: house,
                    district,
                },
                label.map(|s| if s { Severity::Severe } else { Severity::Mild }),
            )
        },
    )
}

fn upazila() -> impl Strategy<Value = UpazilaRecord> {
    (name(), name(), any::<bool>(), 0f64..=1.0, 0f64..1e4, 0u64..50_000_000).prop_map(
        |(name, district, haor, poverty, damage, people)| UpazilaRecord {
            name,
            district,
            region_type: if haor { Region::Haor } else { Region::NonHaor },
            poverty_rate: poverty,
            damage_usd_m: damage,
            affected_population: people,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dengue_round_trip_is_lossless(rows in prop::collection::vec(dengue_row(), 1..30), labelled in any::<bool>()) {
        let records: Vec<TriageRecord> = rows.iter().map(|r| r.0.clone()).collect();
        let labels: Vec<Severity> = rows.iter().map(|r| r.1.unwrap_or(Severity::Mild)).collect();
        let labels = labelled.then_some(labels);
        let mut first = Vec::new();
        write_dengue_csv(&mut first, &records, labels.as_deref()).unwrap();
        let table = parse_csv_reader(first.as_slice(), &Schema::dengue(), true).unwrap();
        let (back, back_labels) = dengue_records(&table).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(back_labels, labels);
        let mut second = Vec::new();
        table.write_csv(&mut second).unwrap();
        prop_assert_eq!(second, first);
    }

    #[test]
    fn pdna_round_trip_is_lossless(records in prop::collection::vec(upazila(), 1..30)) {
        let targets: Vec<f64> = records.iter().map(|r| r.poverty_rate / 2.0).collect();
        let mut first = Vec::new();
        write_pdna_csv(&mut first, &records, Some(&targets)).unwrap();
        let table = parse_csv_reader(first.as_slice(), &Schema::pdna(), true).unwrap();
        let (back, back_t) = pdna_records(&table).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(back_t.unwrap(), targets);
        let mut second = Vec::new();
        table.write_csv(&mut second).unwrap();
        prop_assert_eq!(second, first);
    }

    #[test]
    fn generators_are_pure(seed in any::<u64>(), n in 1usize..50) {
        prop_assert_eq!(synth_dengue(seed, n), synth_dengue(seed, n));
        let (a, at) = synth_pdna(seed);
        let (b, bt) = synth_pdna(seed);
        prop_assert_eq!(a, b);
        prop_assert_eq!(at, bt);
    }
}

#[test]
fn dengue_labels_stay_balanced_across_seeds() {
    for seed in 0..10 {
        let (_, labels) = synth_dengue(seed, 5000);
        let p = labels.iter().filter(|l| **l == Severity::Severe).count() as f64 / 5000.0;
        assert!((0.2..=0.8).contains(&p), "seed {seed}: {p}");
    }
}

#[test]
fn age_leads_gini_importance_on_generated_cases() {
    use trustml::triage::{gini_feature_importance, train_tree, Feature, TreeParams};
    for seed in 0..3 {
        let (records, labels) = synth_dengue(seed, 5000);
        let tree = train_tree(&records, &labels, TreeParams::default()).unwrap();
        let imp = gini_feature_importance(&tree);
        let top = imp.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(*top, Feature::Age, "seed {seed}: {imp:?}");
    }
}
