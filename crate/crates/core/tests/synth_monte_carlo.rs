use stabletree::synth::{sample_synthetic, CASES};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn case_rates_match_the_logit_table() {
    let data = sample_synthetic::<f64>(1_000_000, 2024).unwrap();
    let labels = data.labels().unwrap();
    let mut hits = [0usize; 7];
    let mut ones = [0usize; 7];
    for (x, &y) in data.rows().rows().zip(labels) {
        let matching: Vec<usize> = (0..CASES.len()).filter(|&i| CASES[i].matches(x)).collect();
        assert_eq!(matching.len(), 1, "{x:?} matches cases {matching:?}");
        hits[matching[0]] += 1;
        ones[matching[0]] += y;
    }
    let logits = [2.0, -3.0, -4.0, 3.0, 2.0, -2.0, 2.0];
    for i in 0..7 {
        assert!(hits[i] > 10_000, "case {i} has only {} rows", hits[i]);
        let rate = ones[i] as f64 / hits[i] as f64;
        let want = sigmoid(logits[i]);
        assert!((rate - want).abs() < 0.01, "case {i}: rate {rate:.4} vs {want:.4}");
    }
}
