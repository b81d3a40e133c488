//! The published flags schema and the `BiasFlags` type agree.

use stereosim::types::BiasFlags;

fn schema() -> serde_json::Value {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../schemas/bias_flags.schema.json"
    );
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn required_fields_match_the_type() {
    let s = schema();
    let mut required: Vec<String> = s["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    required.sort();
    let encoded = serde_json::to_value(BiasFlags::default()).unwrap();
    let mut fields: Vec<String> = encoded.as_object().unwrap().keys().cloned().collect();
    fields.sort();
    assert_eq!(required, fields);
    assert_eq!(s["additionalProperties"], serde_json::json!(false));
}

#[test]
fn type_enforces_the_schema_constraints() {
    let ok = r#"{"stereotype":true,"strong_stereotype":true,"halo":false,"confirmation":false,"role_congruity":false,"self_serving":false}"#;
    assert!(serde_json::from_str::<BiasFlags>(ok).is_ok());
    let strong_alone = ok.replacen("\"stereotype\":true", "\"stereotype\":false", 1);
    assert!(serde_json::from_str::<BiasFlags>(&strong_alone).is_err());
    let extra = ok.replace('}', r#","mood":true}"#);
    assert!(serde_json::from_str::<BiasFlags>(&extra).is_err());
    let missing = r#"{"stereotype":false}"#;
    assert!(serde_json::from_str::<BiasFlags>(missing).is_err());
}
