use pmu_fdl_web::{clusters_json, place_json, simulate_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn placements() {
    let r = parse(place_json("resolution"));
    assert_eq!(r["d"], 12);
    assert_eq!(r["r"], 7);
    assert_eq!(parse(place_json("uniform"))["d"], 11);
    assert!(place_json("cheap").is_err());
}

#[test]
fn hand_picked_set_reports_violations() {
    let v = parse(clusters_json(&[1, 5]));
    assert_eq!(v["r"], 0);
    assert!(!v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn noise_free_fault_is_found() {
    let v = parse(simulate_json(4, 5, 0.5, "3ph", 100.0, false, 0));
    assert_eq!(v["detected"], true);
    assert_eq!(v["detection_time"], 0.5);
    assert_eq!(v["cluster"], v["true_cluster"]);
    assert_eq!(
        v["w0"].as_array().unwrap().len(),
        v["times"].as_array().unwrap().len()
    );
    assert!(simulate_json(4, 6, 0.5, "3ph", 100.0, false, 0).is_err());
}
