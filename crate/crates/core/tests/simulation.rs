use mirfs::fixtures::{builtin, BERNOULLI, SINGLE_GAUSSIAN, TWO_STATE_GAUSSIAN, TWO_STATE_GAUSSIAN_THETA};
use mirfs::model::transition_matrix;
use mirfs::{ergodic_diagnostics, simulate, ErrorKind};

#[test]
fn same_seed_same_path() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let a = simulate(&m, &TWO_STATE_GAUSSIAN_THETA, 500, 42).unwrap();
    let b = simulate(&m, &TWO_STATE_GAUSSIAN_THETA, 500, 42).unwrap();
    assert_eq!(a, b);
    let c = simulate(&m, &TWO_STATE_GAUSSIAN_THETA, 500, 43).unwrap();
    assert_ne!(a.observations, c.observations);
    assert_eq!(a.states.len(), a.observations.len());
}

#[test]
fn single_state_draws_are_iid() {
    let m = builtin(BERNOULLI);
    let path = simulate(&m, &[0.3], 20000, 1).unwrap();
    assert!(path.states.iter().all(|&s| s == 0));
    let ones = path.observations.iter().filter(|o| o.values()[0] == 1.0).count() as f64;
    let n = 20000.0;
    assert!((ones / n - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / n).sqrt());
    // lag-one pairs are independent
    let both = path.observations.windows(2).filter(|w| w[0].values()[0] == 1.0 && w[1].values()[0] == 1.0).count() as f64;
    assert!((both / (n - 1.0) - 0.09).abs() < 4.0 * (0.09f64 * 0.91 / n).sqrt());
}

#[test]
fn transition_frequencies_match_the_kernel() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let theta = TWO_STATE_GAUSSIAN_THETA;
    let path = simulate(&m, &theta, 100_000, 7).unwrap();
    let k = transition_matrix(&m, &theta).unwrap();
    let mut counts = [[0usize; 2]; 2];
    for w in path.states.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    for y in 0..2 {
        let total = (counts[y][0] + counts[y][1]) as f64;
        for x in 0..2 {
            let p = k[(y, x)];
            let freq = counts[y][x] as f64 / total;
            assert!((freq - p).abs() <= 3.0 * (p * (1.0 - p) / total).sqrt(), "{y}->{x}: {freq} vs {p}");
        }
    }
}

#[test]
fn invalid_requests() {
    let m = builtin(BERNOULLI);
    assert_eq!(simulate(&m, &[0.3], 0, 1).unwrap_err().kind(), ErrorKind::Usage);
    assert_eq!(simulate(&m, &[1.3], 5, 1).unwrap_err().kind(), ErrorKind::Model);
    assert!(ergodic_diagnostics(&m, &[0.3], &[10], 1, 1).is_err());
}

#[test]
fn single_state_information_is_inverse_variance() {
    let m = builtin(SINGLE_GAUSSIAN);
    let rep = ergodic_diagnostics(&m, &[0.5], &[200, 800], 40, 3).unwrap();
    for row in &rep.rows {
        // the Gaussian mean has a constant observed information n/σ²
        assert!((row.mean_info_per_obs[0][0] - 0.25).abs() < 1e-12);
        assert!(row.identity_ok, "z = {}", row.identity_max_z);
    }
    assert_eq!(rep.score_slopes.len(), 1);
}

#[test]
fn diagnostics_are_reproducible() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let a = ergodic_diagnostics(&m, &TWO_STATE_GAUSSIAN_THETA, &[100, 300], 8, 5).unwrap();
    let b = ergodic_diagnostics(&m, &TWO_STATE_GAUSSIAN_THETA, &[100, 300], 8, 5).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
