use std::path::PathBuf;

use pinchlab::geometry::{generate_dumbbell, generate_icosphere};
use pinchlab::report::{diagnose, report_schema, DiagnoseConfig, SurfaceSource};

fn schema_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema/pinch_report.schema.json")
}

fn quick() -> DiagnoseConfig {
    DiagnoseConfig { residual_pairs: 20, distortion_pairs: 200, convexity_pairs: 40, antipode_samples: 40, ..Default::default() }
}

/// Regenerate with `PINCHLAB_BLESS_SCHEMA=1 cargo test --test schema`.
#[test]
fn shipped_schema_is_current() {
    let generated = serde_json::to_string_pretty(&report_schema()).unwrap() + "\n";
    if std::env::var_os("PINCHLAB_BLESS_SCHEMA").is_some() {
        std::fs::write(schema_path(), &generated).unwrap();
    }
    let shipped = std::fs::read_to_string(schema_path()).expect("schema file is shipped");
    assert_eq!(shipped, generated, "report layout changed: bump SCHEMA_VERSION and regenerate the schema");
}

#[test]
fn reports_validate_against_shipped_schema() {
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path()).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let round = diagnose(&generate_icosphere(2).unwrap(), SurfaceSource::generator("icosphere", &[("subdivisions", 2.0)]), &quick()).unwrap();
    let forced = diagnose(
        &generate_dumbbell(0.3, 2).unwrap(),
        SurfaceSource::generator("dumbbell", &[("neck", 0.3)]),
        &DiagnoseConfig { force: true, k_max: 2, ..quick() },
    )
    .unwrap();
    for r in [round, forced] {
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
        assert_eq!(v["schema_version"], 1);
    }
}

#[test]
fn schema_rejects_missing_fields() {
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path()).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert!(!validator.is_valid(&serde_json::json!({ "schema_version": 1 })));
}
