use std::sync::OnceLock;

use hybridcf::idm::equilibrium_spacing;
use hybridcf::np::{train, NpModel, PointSet, TrainConfig, TrainReport};
use hybridcf::synthetic::{synthetic_population, PopulationConfig, SyntheticDriver};
use hybridcf::trajectory::TrafficCondition;

struct Fixture {
    drivers: Vec<SyntheticDriver>,
    sets: Vec<PointSet>,
    model: NpModel,
    report: TrainReport,
}

fn observed(d: &SyntheticDriver) -> PointSet {
    PointSet::from_episode(&d.episode, d.episode.frames.iter().map(|f| f.a_f).collect())
}

fn cfg() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        seed: 5,
        ..Default::default()
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let drivers = synthetic_population(&PopulationConfig {
            n_drivers: 5,
            seed: 21,
            ..Default::default()
        })
        .unwrap();
        let sets: Vec<PointSet> = drivers.iter().map(observed).collect();
        let (model, report) = train(&sets, &cfg()).unwrap();
        Fixture { drivers, sets, model, report }
    })
}

#[test]
fn training_lowers_the_loss() {
    let f = fixture();
    let first = f.report.epochs[0].total;
    let last = f.report.epochs.last().unwrap().total;
    assert_eq!(f.report.epochs.len(), 200);
    assert!(last < first, "first {first} last {last}");
    assert!(f.model.params.iter().all(|w| w.is_finite()));
}

#[test]
fn training_is_deterministic() {
    let f = fixture();
    let short = TrainConfig { epochs: 20, ..cfg() };
    let (a, ra) = train(&f.sets, &short).unwrap();
    let (b, rb) = train(&f.sets, &short).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let (c, _) = train(&f.sets, &TrainConfig { seed: 6, ..short }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn steady_following_decodes_near_zero_acceleration() {
    let f = fixture();
    for (d, set) in f.drivers.iter().zip(&f.sets) {
        let r = f.model.encode_deterministic(set).unwrap();
        let z = f.model.encode_latent(set).unwrap().mu;
        // speeds the driver actually drove at
        let speeds = d.episode.speed();
        let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
        for v in [mean - 1.0, mean, mean + 1.0] {
            let s = equilibrium_spacing(&d.base, v);
            let x = TrafficCondition { dv: 0.0, v, s, v_lead: v, a_lat_lead: 0.0, a_lon_lead: 0.0 };
            let (mu, _) = f.model.decode(&x.to_array(), &r, z);
            assert!(mu.abs() < 0.2, "driver {} v {v}: {mu}", d.driver_id);
        }
    }
}

#[test]
fn styles_separate_drivers() {
    let f = fixture();
    let halves: Vec<_> = f
        .sets
        .iter()
        .map(|s| {
            let n = s.len();
            (
                f.model.encode_deterministic(&s.range(0..n / 2)).unwrap(),
                f.model.encode_deterministic(&s.range(n / 2..n)).unwrap(),
            )
        })
        .collect();
    let whole: Vec<_> = f.sets.iter().map(|s| f.model.encode_deterministic(s).unwrap()).collect();
    // the least and most aggressive drivers
    let order = {
        let mut i: Vec<usize> = (0..f.drivers.len()).collect();
        i.sort_by(|a, b| f.drivers[*a].aggressiveness.total_cmp(&f.drivers[*b].aggressiveness));
        i
    };
    let (lo, hi) = (order[0], order[order.len() - 1]);
    let between = whole[lo].distance(&whole[hi]);
    for i in [lo, hi] {
        let within = halves[i].0.distance(&halves[i].1);
        assert!(within < between, "driver {i}: within {within} between {between}");
    }
}

#[test]
fn style_of_a_shuffled_set_is_unchanged() {
    let f = fixture();
    let set = &f.sets[0];
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.reverse();
    let shuffled = PointSet::new(
        set.driver_id,
        idx.iter().map(|i| set.x[*i]).collect(),
        idx.iter().map(|i| set.y[*i]).collect(),
    );
    let a = f.model.encode_deterministic(set).unwrap();
    let b = f.model.encode_deterministic(&shuffled).unwrap();
    assert!(a.distance(&b) < 1e-9);
}
