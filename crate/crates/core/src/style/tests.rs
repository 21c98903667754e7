use super::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::idm::IdmParams;
use crate::rng;

fn flat(theta: [f64; 5], n: usize) -> [Vec<f64>; 5] {
    std::array::from_fn(|i| vec![theta[i]; n])
}

fn wiggly(seed: u64, n: usize) -> [Vec<f64>; 5] {
    let mut r = rng::stream(seed, "style-series", 0);
    let base = IdmParams::default().to_array();
    std::array::from_fn(|i| {
        (0..n)
            .map(|_| base[i] * (1.0 + r.random_range(-0.1..0.1)))
            .collect()
    })
}

#[test]
fn differential_sequence_examples() {
    assert_eq!(differential_sequences(&[3.0; 6]), (vec![], vec![]));
    assert_eq!(differential_sequences(&[1.0, 2.0, 1.0]), (vec![1.0], vec![-1.0]));
    let up: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
    let (p, n) = differential_sequences(&up);
    assert_eq!((p.len(), n.len()), (8, 0));
}

#[test]
fn constant_series_reduce_to_value_terms() {
    let theta = [20.0, 1.5, 2.0, 1.2, 1.8];
    let cfg = IndexConfig::default();
    let h = index_of_means(&flat(theta, 30), &DiffScaling::default(), &cfg);
    let u = cfg.bounds.normalize(&theta);
    let expected: f64 = (0..5).map(|i| R_SIGNS[i] * 3.0 * u[i]).sum();
    assert!((h - expected).abs() < 1e-12);
    for t in index_terms(&flat(theta, 30), &DiffScaling::default(), &cfg) {
        assert_eq!((t.pos_mean, t.pos_std, t.neg_mean, t.neg_std), (0.0, 0.0, 0.0, 0.0));
    }
}

#[test]
fn higher_desired_speed_is_more_aggressive() {
    let a = wiggly(1, 50);
    let mut b = a.clone();
    b[0].iter_mut().for_each(|v| *v -= 2.0);
    let scaling = DiffScaling::fit(&[a.clone(), b.clone()]);
    let cfg = IndexConfig::default();
    assert!(index_of_means(&a, &scaling, &cfg) > index_of_means(&b, &scaling, &cfg));
}

#[test]
fn bigger_decreases_lower_the_index_of_positive_parameters() {
    // same increases; driver b drops v0 by more
    let a = vec![10.0, 11.0, 10.5, 11.5, 11.0];
    let b = vec![10.0, 11.0, 9.0, 10.0, 8.0];
    let (pa, na) = differential_sequences(&a);
    let (pb, nb) = differential_sequences(&b);
    assert_eq!(pa, pb);
    assert!(nb.iter().sum::<f64>() < na.iter().sum::<f64>());
    let mk = |x: &Vec<f64>| -> [Vec<f64>; 5] { std::array::from_fn(|i| if i == 0 { x.clone() } else { vec![1.0; 5] }) };
    let scaling = DiffScaling::fit(&[mk(&a), mk(&b)]);
    let cfg = IndexConfig {
        normalize: true,
        ..Default::default()
    };
    let ta = index_terms(&mk(&a), &scaling, &cfg)[0];
    let tb = index_terms(&mk(&b), &scaling, &cfg)[0];
    assert!(tb.neg_mean > ta.neg_mean);
}

#[test]
fn scaled_differences_lie_in_unit_interval() {
    let pop: Vec<[Vec<f64>; 5]> = (0..6).map(|s| wiggly(s, 40)).collect();
    let scaling = DiffScaling::fit(&pop);
    for d in &pop {
        for t in index_terms(d, &scaling, &IndexConfig::default()) {
            for v in [t.pos_mean, t.pos_std, t.neg_mean, t.neg_std] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

proptest! {
    #[test]
    fn uniform_shift_moves_index_by_sign(seed in 0u64..1000, i in 0usize..5, frac in 0.001f64..0.05) {
        let base = wiggly(seed, 25);
        let cfg = IndexConfig::default();
        let delta = frac * cfg.bounds.width()[i];
        let mut up = base.clone();
        up[i].iter_mut().for_each(|v| *v += delta);
        let scaling = DiffScaling::fit(&[base.clone(), up.clone()]);
        let h0 = index_of_means(&base, &scaling, &cfg);
        let h1 = index_of_means(&up, &scaling, &cfg);
        prop_assert_eq!((h1 - h0).signum(), R_SIGNS[i]);
        prop_assert!((h1 - h0 - 3.0 * R_SIGNS[i] * frac).abs() < 1e-9);
    }
}

fn line_styles(n: usize) -> Vec<StyleVector> {
    let u = [0.3, -1.0, 2.0, 0.0, 0.5];
    let d = [1.0, 2.0, -2.0, 0.5, 0.0];
    (0..n)
        .map(|k| {
            let t = k as f64 / n as f64 - 0.4;
            StyleVector(std::array::from_fn(|j| u[j] + t * d[j]))
        })
        .collect()
}

#[test]
fn pca_of_a_line_reconstructs_exactly() {
    let styles = line_styles(12);
    let pca = fit_pca(&styles).unwrap();
    for r in &styles {
        assert!(pca.reconstruct(pca.project(r)).distance(r) < 1e-12);
    }
    assert!((pca.explained - 1.0).abs() < 1e-12);
    let norm: f64 = pca.w.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
    assert!(pca.w[0] > 0.0);
}

#[test]
fn mirrored_pair_projects_to_plus_minus_norm() {
    let u = [1.0, 2.0, 3.0, 4.0, 5.0];
    let d = [0.0, -3.0, 0.0, 4.0, 0.0];
    let styles = vec![
        StyleVector(std::array::from_fn(|j| u[j] + d[j])),
        StyleVector(std::array::from_fn(|j| u[j] - d[j])),
        StyleVector(u),
    ];
    let pca = fit_pca(&styles).unwrap();
    let p: Vec<f64> = styles.iter().map(|r| pca.project(r)).collect();
    // first non-zero component of w is positive, so w = -d/|d|
    assert!((p[0] + 5.0).abs() < 1e-12 && (p[1] - 5.0).abs() < 1e-12 && p[2].abs() < 1e-12);
    assert!(pca.w[1] > 0.0);
}

/// Top eigenvector by power iteration, for comparison with the library.
fn power_iteration(styles: &[StyleVector]) -> [f64; 5] {
    let n = styles.len() as f64;
    let u: Vec<f64> = (0..5).map(|j| styles.iter().map(|r| r.0[j]).sum::<f64>() / n).collect();
    let mut c = [[0.0; 5]; 5];
    for r in styles {
        for a in 0..5 {
            for b in 0..5 {
                c[a][b] += (r.0[a] - u[a]) * (r.0[b] - u[b]);
            }
        }
    }
    let mut v = [1.0, 0.9, 0.8, 0.7, 0.6];
    for _ in 0..5000 {
        let mut next = [0.0; 5];
        for a in 0..5 {
            for b in 0..5 {
                next[a] += c[a][b] * v[b];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = next.map(|x| x / norm);
    }
    if v.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0) {
        v = v.map(|x| -x);
    }
    v
}

#[test]
fn pca_matches_power_iteration() {
    let mut r = rng::stream(4, "pca", 0);
    let scales = [3.0, 1.0, 0.5, 0.2, 0.1];
    let styles: Vec<StyleVector> = (0..200)
        .map(|_| {
            let z: [f64; 5] = std::array::from_fn(|j| scales[j] * r.sample::<f64, _>(StandardNormal));
            // rotate so the top direction is not an axis
            StyleVector([z[0] + z[1], z[0] - z[1], z[2] + 0.3 * z[0], z[3], z[4] - 0.2 * z[0]])
        })
        .collect();
    let pca = fit_pca(&styles).unwrap();
    let w = power_iteration(&styles);
    for j in 0..5 {
        assert!((pca.w[j] - w[j]).abs() < 1e-9, "{:?} vs {:?}", pca.w, w);
    }
}

#[test]
fn isotropic_cloud_spreads_variance_evenly() {
    let mut r = rng::stream(9, "pca-iso", 0);
    let styles: Vec<StyleVector> = (0..1000)
        .map(|_| StyleVector(std::array::from_fn(|_| r.sample::<f64, _>(StandardNormal))))
        .collect();
    let pca = fit_pca(&styles).unwrap();
    assert!((pca.explained - 0.2).abs() < 0.05, "explained {}", pca.explained);
}

#[test]
fn pca_rejects_degenerate_input() {
    assert!(matches!(fit_pca(&[StyleVector([1.0; 5]); 4]), Err(StyleError::Degenerate(_))));
    assert!(matches!(fit_pca(&line_styles(2)), Err(StyleError::Invalid(_))));
}

fn arb_styles() -> impl Strategy<Value = Vec<StyleVector>> {
    proptest::collection::vec(proptest::array::uniform5(-5.0f64..5.0), 3..20)
        .prop_map(|v| v.into_iter().map(StyleVector).collect())
}

proptest! {
    #[test]
    fn projection_never_moves_away_from_mean(styles in arb_styles()) {
        if let Ok(pca) = fit_pca(&styles) {
            let u = StyleVector(pca.u);
            for r in &styles {
                let rec = pca.reconstruct(pca.project(r));
                prop_assert!(rec.distance(&u) <= r.distance(&u) + 1e-9);
            }
        }
    }

    #[test]
    fn translation_leaves_reduced_values(styles in arb_styles(), shift in proptest::array::uniform5(-10.0f64..10.0)) {
        if let Ok(a) = fit_pca(&styles) {
            let moved: Vec<StyleVector> = styles
                .iter()
                .map(|r| StyleVector(std::array::from_fn(|j| r.0[j] + shift[j])))
                .collect();
            let b = fit_pca(&moved).unwrap();
            for j in 0..5 {
                prop_assert!((b.u[j] - a.u[j] - shift[j]).abs() < 1e-9);
            }
            for (r, m) in styles.iter().zip(&moved) {
                prop_assert!((a.project(r) - b.project(m)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn style_map_fits_lines() {
    let h = [0.5, 1.0, 2.0, 3.5];
    let y: Vec<f64> = h.iter().map(|x| 2.0 - 0.7 * x).collect();
    let m = fit_style_map(&h, &y).unwrap();
    assert!((m.alpha + 0.7).abs() < 1e-12 && (m.beta - 2.0).abs() < 1e-12);
    assert!((m.correlation + 1.0).abs() < 1e-12);
    let flat = fit_style_map(&h, &[1.25; 4]).unwrap();
    assert_eq!((flat.alpha, flat.beta), (0.0, 1.25));
    assert!(matches!(fit_style_map(&[1.0; 4], &y), Err(StyleError::Degenerate(_))));
    assert!(fit_style_map(&h[..2], &y[..2]).is_err());
}

fn collinear_mapping() -> (Vec<f64>, Vec<StyleVector>, StyleMapping) {
    let styles = line_styles(10);
    let pca = fit_pca(&styles).unwrap();
    let h: Vec<f64> = styles.iter().map(|r| 3.0 * pca.project(r) + 1.0).collect();
    let m = fit_mapping(&h, &styles, DiffScaling::default(), IndexConfig::default()).unwrap();
    (h, styles, m)
}

#[test]
fn collinear_population_maps_back_exactly() {
    let (h, styles, m) = collinear_mapping();
    assert!((m.map.correlation - 1.0).abs() < 1e-12);
    assert!(m.reconstruction_rmse < 1e-12);
    for (hi, r) in h.iter().zip(&styles) {
        assert!(style_from_index(*hi, &m).distance(r) < 1e-12);
    }
    let mean_h = crate::stats::mean(&h);
    let at_mean = style_from_index(mean_h, &m);
    for j in 0..5 {
        assert!((at_mean.0[j] - m.pca.u[j]).abs() < 1e-12);
    }
}

#[test]
fn index_difference_moves_along_component() {
    let (_, _, m) = collinear_mapping();
    let (a, b) = (style_from_index(5.0, &m), style_from_index(0.0, &m));
    for j in 0..5 {
        assert!((a.0[j] - b.0[j] - 5.0 * m.map.alpha * m.pca.w[j]).abs() < 1e-12);
    }
    assert!(a.distance(&b) > 0.0);
}

#[test]
fn mapping_file_round_trip_is_exact() {
    let mut m = collinear_mapping().2;
    m.scaling = DiffScaling::fit(&[wiggly(1, 30), wiggly(2, 30)]);
    let text = write_mapping(&m);
    assert_eq!(read_mapping(&text).unwrap(), m);
    assert!(read_mapping(&text.replace("alpha=", "alfa=")).is_err());
    assert!(read_mapping("junk").is_err());
}
