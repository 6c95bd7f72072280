use mmfeat_web::{detox_json, interpolation_json, mds_histogram_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn histogram_counts_cover_every_feature() {
    let v = parse(mds_histogram_json(0.0, false, 1, 10).unwrap());
    let bins = v["bins"].as_array().unwrap();
    assert_eq!(bins.len(), 10);
    let total: u64 = bins
        .iter()
        .map(|b| b["count_textd"].as_u64().unwrap() + b["count_crossd"].as_u64().unwrap() + b["count_imgd"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 64);
    assert_eq!(v["agreement"], 1.0);
    assert_eq!(v["counts"]["ImgD"], 10);
}

#[test]
fn rotation_scrambles_raw_feature_categories() {
    let v = parse(mds_histogram_json(0.0, true, 1, 10).unwrap());
    assert!(v["agreement"].as_f64().unwrap() < 1.0);
}

#[test]
fn interpolation_endpoints() {
    let v = parse(interpolation_json(2, 1.0, 11).unwrap());
    assert_eq!(v["alphas"].as_array().unwrap().len(), 11);
    assert_eq!(v["vector"], v["target"]);
    let to_t = v["cos_to_target"].as_array().unwrap();
    assert!((to_t[10].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let to_r = v["cos_to_reference"].as_array().unwrap();
    assert!(to_r[0].as_f64().unwrap() > to_r[10].as_f64().unwrap());
    assert!(interpolation_json(2, 1.5, 11).is_err());
    assert!(interpolation_json(2, 0.5, 1).is_err());
}

#[test]
fn detox_curve_decreases_to_zero() {
    let v = parse(detox_json(3, 50, 0.3).unwrap());
    let curve: Vec<f64> = v["loss_curve"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(curve.len(), 51);
    assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    assert!(*curve.last().unwrap() < 1e-6);
    assert_eq!(v["off_index_unchanged"], true);
    assert!(detox_json(3, 10, 1.0).is_err());
}
