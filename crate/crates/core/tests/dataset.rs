use memreason_core::dataset::{
    analysis_plan, bundled_dataset, dataset_to_json, load_dataset, load_dataset_lenient,
    parse_dataset, validate_sample, EquivalenceType, PlanRole, Rule,
};
use memreason_core::error::Error;
use std::io::Write;

#[test]
fn bundled_sample_carries_the_worked_example() {
    let samples = bundled_dataset();
    assert_eq!(samples.len(), 1);
    let s = &samples[0];
    assert_eq!(s.target_token, "teacher");
    assert_eq!(s.n, 10);
    assert_eq!(
        s.original.text,
        "Caren works as a teacher. Emily is the colleague of Caren, Emily works as a"
    );
    assert!(!s.question_only.includes_premise);
    assert_eq!(s.equivalents.len(), 9);
    let texts: Vec<&str> = s.equivalents.iter().map(|v| v.text.as_str()).collect();
    for expected in [
        "Caren works as a teacher and Tom works as a doctor. Emily is the colleague of Caren, Emily works as a",
        "Caren works as a teacher and she likes singing. Emily is the colleague of Caren, Emily works as a",
        "Caren teaches students at school. Emily is the colleague of Caren, Emily works as a",
        "The school hired Caren as a teacher. Emily is the colleague of Caren, Emily works as a",
        "Tina works at school as a teacher. Emily is the colleague of Tina, Emily works as a",
        "Anna works at school as a teacher. Emily is the colleague of Anna, Emily works as a",
    ] {
        assert!(texts.contains(&expected), "missing {expected:?}");
    }
    for kind in [
        EquivalenceType::Background,
        EquivalenceType::Paraphrase,
        EquivalenceType::Renaming,
    ] {
        assert_eq!(
            s.equivalents
                .iter()
                .filter(|v| v.equivalence_type == kind)
                .count(),
            3
        );
    }
    let report = validate_sample(s);
    assert!(
        report.violations.is_empty() && report.warnings.is_empty(),
        "{report:?}"
    );
}

#[test]
fn annotated_words_share_lattice_bits_across_variants() {
    let s = &bundled_dataset()[0];
    let reference = s.original.annotated_words().unwrap();
    assert_eq!(
        reference,
        [
            "Emily",
            "is",
            "the",
            "colleague",
            "of",
            "Caren",
            "Emily",
            "works",
            "as",
            "a"
        ]
    );
    for v in s.variants() {
        let words = v.annotated_words().unwrap();
        assert_eq!(words.len(), 10);
        for (i, (a, b)) in reference.iter().zip(&words).enumerate() {
            if v.equivalence_type == EquivalenceType::Renaming && a == "Caren" {
                assert_ne!(a, b);
            } else {
                assert_eq!(a, b, "variant {} slot {i}", v.variant_id);
            }
        }
    }
}

#[test]
fn plan_builds_one_table_per_variant() {
    let mut s = bundled_dataset().remove(0);
    let plan = analysis_plan(&s);
    assert_eq!(plan.len(), 11);
    assert_eq!(plan[0].role, PlanRole::Full);
    assert_eq!(plan[1].role, PlanRole::QuestionOnly);
    assert!(plan[2..]
        .iter()
        .all(|p| p.role == PlanRole::EquivalentMember));

    s.equivalents.clear();
    let plan = analysis_plan(&s);
    assert_eq!(plan.len(), 2);
    // the original alone forms the equivalence set
    assert_eq!(s.equivalence_set().len(), 1);
}

#[test]
fn json_round_trip_through_a_file() {
    let samples = bundled_dataset();
    let json = dataset_to_json(&samples);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(json.as_bytes()).unwrap();
    let back = load_dataset(file.path()).unwrap();
    assert_eq!(back, samples);
    // validation of loaded samples reports nothing new
    for s in &back {
        assert!(validate_sample(s).is_valid());
    }
}

fn edited(f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut doc: serde_json::Value =
        serde_json::from_str(&dataset_to_json(&bundled_dataset())).unwrap();
    f(&mut doc);
    serde_json::to_string(&doc).unwrap()
}

#[test]
fn missing_span_fails_the_annotation_count_rule() {
    let json = edited(|doc| {
        doc["samples"][0]["variants"][3]["spans"]
            .as_array_mut()
            .unwrap()
            .pop();
    });
    match parse_dataset(&json, "mem") {
        Err(Error::InvalidSamples(reports)) => {
            assert_eq!(reports[0].sample_id, "caren_teacher");
            assert!(reports[0]
                .violations
                .iter()
                .any(|v| v.rule == Rule::AnnotationCount));
            assert!(Error::InvalidSamples(reports)
                .to_string()
                .contains("annotation-count"));
        }
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn lenient_load_keeps_good_samples() {
    let json = edited(|doc| {
        let mut bad = doc["samples"][0].clone();
        bad["sample_id"] = "broken".into();
        bad["variants"][1]["text"] =
            "Caren works as a teacher. Emily is the colleague of Caren, Emily works as a".into();
        doc["samples"].as_array_mut().unwrap().push(bad);
    });
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(json.as_bytes()).unwrap();
    let load = load_dataset_lenient(file.path()).unwrap();
    assert_eq!(load.samples.len(), 1);
    assert_eq!(load.rejected.len(), 1);
    assert_eq!(load.rejected[0].sample_id, "broken");
}

#[test]
fn malformed_json_reports_location() {
    let err = parse_dataset("{\"samples\": [", "broken.json").unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Parse { .. }));
    assert!(
        msg.contains("broken.json") && msg.contains("line 1"),
        "{msg}"
    );
}
