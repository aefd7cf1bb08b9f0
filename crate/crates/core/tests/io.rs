use std::collections::BTreeMap;

use proptest::prelude::*;
use robustmatch::io::{emit_unit_csv, format_f64, parse_config, parse_unit_csv, parse_unit_csv_str, to_json_string, write_csv, write_unit_csv, ConfigFile, DataOptions, Report, RunConfig};
use robustmatch::model::{validate_dataset, Caliper, Cardinality, CovValue, RawOutcome, RawRecord};
use robustmatch::{BinningSpec, ConstraintSet, Dataset};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        Just(0.1),
        Just(-0.0),
        Just(1e-300),
        Just(f64::MAX),
        Just(f64::MIN_POSITIVE),
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof!["[a-z]{1,6}", "[0-9]{1,3}", "[a-z ,\"]{1,8}", Just("1".to_string()), Just("0.5".to_string())]
}

prop_compose! {
    fn dataset()(
        binary in any::<bool>(),
        cats in prop::collection::vec(any::<bool>(), 0..3),
        n in 2usize..12,
    )(
        ys in prop::collection::vec((any::<bool>(), finite()), n),
        nums in prop::collection::vec(prop::collection::vec(finite(), cats.len()), n),
        strs in prop::collection::vec(prop::collection::vec(text(), cats.len()), n),
        ids in prop::collection::hash_set(text(), n),
        binary in Just(binary),
        cats in Just(cats),
        n in Just(n),
    ) -> Option<Dataset> {
        let names: Vec<String> = (0..cats.len()).map(|k| format!("c{k}")).collect();
        let recs: Vec<RawRecord> = ids
            .into_iter()
            .enumerate()
            .map(|(k, id)| RawRecord {
                id,
                // The first unit is treated and the last a control.
                treated: if k == 0 { true } else if k == n - 1 { false } else { ys[k].0 },
                outcome: if binary { RawOutcome::Binary(ys[k].1 > 0.0) } else { RawOutcome::Real(ys[k].1) },
                covariates: cats
                    .iter()
                    .enumerate()
                    .map(|(c, &cat)| if cat { CovValue::Cat(strs[k][c].clone()) } else { CovValue::Num(nums[k][c]) })
                    .collect(),
            })
            .collect();
        validate_dataset(names, recs).ok()
    }
}

proptest! {
    #[test]
    fn unit_csv_round_trips(ds in dataset()) {
        let Some(ds) = ds else { return Ok(()) };
        let text = emit_unit_csv(&ds);
        let back = parse_unit_csv_str(&text, &DataOptions::default()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn floats_round_trip_through_text(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn reports_round_trip_through_json(z in finite(), seed in any::<u64>()) {
        let run = RunConfig { command: "test z".into(), version: "0".into(), seed: Some(seed), node_limit: 10, ..RunConfig::default() };
        let rep = Report { run, result: vec![z, -z] };
        let text = to_json_string(&rep).unwrap();
        let back: Report<Vec<f64>> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, rep);
    }
}

#[test]
fn config_round_trips() {
    let mut weights = BTreeMap::new();
    weights.insert("x".to_string(), 2.0);
    let mut balance = BTreeMap::new();
    balance.insert("x".to_string(), 0.25);
    let cfg = ConfigFile {
        constraints: ConstraintSet {
            caliper: Some(Caliper::WeightedL1 { weights, threshold: 0.5 }),
            balance,
            cardinality: Some(Cardinality::FixedM(4)),
            binning: Some(BinningSpec::exact("g")),
            full_strata: true,
            ..ConstraintSet::default()
        },
        ..ConfigFile::default()
    };
    let text = to_json_string(&cfg).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
}

#[test]
fn files_are_written_and_read_back() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let ds = Dataset::real(&[1.5, -2.0], &[0.25]).unwrap();
    let path = dir.join("nested/units.csv");
    write_unit_csv(&path, &ds).unwrap();
    assert_eq!(parse_unit_csv(&path, &DataOptions::default()).unwrap(), ds);
    let table = dir.join("t.csv");
    write_csv(&table, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
    assert_eq!(std::fs::read_to_string(&table).unwrap(), "a,b\n1,\"x,y\"\n");
    assert!(parse_unit_csv(&dir.join("missing.csv"), &DataOptions::default()).is_err());
}
