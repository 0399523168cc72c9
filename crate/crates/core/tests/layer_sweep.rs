use std::path::Path;

use manifold_gauge::geometry::{Group, Metric};
use manifold_gauge::layers::{phase_portrait, sweep, DynamicsOptions, LayerMeans, LayerTrajectory, PhaseClassification};
use manifold_gauge::store::{self, ActivationSet, Manifest, SampleMeta};
use manifold_gauge::synth::{write_synthetic_store, SynthConfig, SyntheticStoreSpec};
use manifold_gauge::{Attribute, Error, LayerId, Level, Modality};
use ndarray::Array2;
use proptest::prelude::*;

fn synthetic(dir: &Path, basin: Option<usize>, n_layers: usize) {
    let spec = SyntheticStoreSpec {
        config: SynthConfig {
            n_samples: 100,
            d_model: 128,
            ..SynthConfig::default()
        },
        levels: vec![Level::L1, Level::L3, Level::L5],
        n_layers,
        basin_layer: basin,
    };
    write_synthetic_store(dir, &spec).unwrap();
}

#[test]
fn planted_basins_are_recovered() {
    for basin in [19, 21, 24] {
        let dir = tempfile::tempdir().unwrap();
        synthetic(dir.path(), Some(basin), 32);
        let t = sweep(dir.path(), Level::L3, Attribute::IsEven, &Metric::Standard, &DynamicsOptions::default()).unwrap();
        assert_eq!(t.len(), 32);
        assert_eq!(t.basin_layer, Some(basin as u32));
        let PhaseClassification::Phases(p) = &t.phases else { panic!("{:?}", t.phases) };
        assert_eq!(*p.computation_basin.last().unwrap(), basin as u32);
        // The divergence-free level never enters the negative zone.
        let l5 = sweep(dir.path(), Level::L5, Attribute::IsEven, &Metric::Standard, &DynamicsOptions::default()).unwrap();
        assert_eq!(l5.basin_layer, None);
        assert!(l5.cross_u.iter().all(|&c| c > 0.0));
        assert!(l5.max_gap() < 0.1);
        assert!(t.max_gap() > 0.5);
    }
}

#[test]
fn flat_schedule_has_no_basin() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), None, 6);
    let t = sweep(dir.path(), Level::L3, Attribute::IsEven, &Metric::Standard, &DynamicsOptions::default()).unwrap();
    assert_eq!(t.basin_layer, None);
    assert!(matches!(t.phases, PhaseClassification::NoPhases { .. }));
}

#[test]
fn sweep_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path(), Some(5), 8);
    let opts = DynamicsOptions::default();
    let a = sweep(dir.path(), Level::L3, Attribute::IsEven, &Metric::Standard, &opts).unwrap();
    let b = sweep(dir.path(), Level::L3, Attribute::IsEven, &Metric::Standard, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

fn tiny_store(dir: &Path, layers: &[u32], baseline_layers: &[u32]) {
    let samples: Vec<SampleMeta> = (1..=6).map(|v| SampleMeta::new(v as u64, v, Modality::Arabic)).collect();
    let manifest = Manifest::new("tiny", 4, samples);
    let base = Array2::from_shape_fn((6, 4), |(i, k)| if k == 0 { 1.0 } else { 0.1 * ((i + k) % 3) as f64 });
    let task = Array2::from_shape_fn((6, 4), |(i, k)| base[[i, k]] + if k == 3 { (i % 2) as f64 - 0.5 } else { 0.05 * i as f64 });
    for &l in baseline_layers {
        store::write_set(&ActivationSet::from_f64(Level::L1, LayerId::Index(l), &base), &manifest, dir).unwrap();
    }
    for &l in layers {
        store::write_set(&ActivationSet::from_f64(Level::L2, LayerId::Index(l), &task), &manifest, dir).unwrap();
    }
}

#[test]
fn two_layer_store_has_no_phases() {
    let dir = tempfile::tempdir().unwrap();
    tiny_store(dir.path(), &[0, 1], &[0, 1]);
    let t = sweep(dir.path(), Level::L2, Attribute::IsEven, &Metric::Standard, &DynamicsOptions::default()).unwrap();
    assert_eq!(t.layers, vec![0, 1]);
    assert!(matches!(t.phases, PhaseClassification::NoPhases { .. }));
}

#[test]
fn missing_baseline_layer_is_named() {
    let dir = tempfile::tempdir().unwrap();
    tiny_store(dir.path(), &[0, 1, 2], &[0, 2]);
    match sweep(dir.path(), Level::L2, Attribute::IsEven, &Metric::Standard, &DynamicsOptions::default()) {
        Err(Error::MissingData(msg)) => assert!(msg.contains("layer 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn single_layer_store_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    tiny_store(dir.path(), &[3], &[3]);
    assert!(matches!(
        sweep(dir.path(), Level::L2, Attribute::IsEven, &Metric::Standard, &DynamicsOptions::default()),
        Err(Error::MissingData(_))
    ));
}

proptest! {
    #[test]
    fn phases_partition_layers_and_portrait_mirrors_series(
        cross in prop::collection::vec(-1.0f64..1.0, 1..40),
        same in -1.0f64..1.0,
        smoothing in prop::option::of(prop::sample::select(vec![1usize, 3, 5])),
    ) {
        let means: Vec<LayerMeans> = cross.iter().enumerate().map(|(i, &c)| LayerMeans {
            layer: 2 * i as u32,
            same_u: same,
            cross_u: c,
            same_c: 0.1,
            cross_c: -0.1,
            excluded: 0,
        }).collect();
        let opts = DynamicsOptions { smoothing, ..DynamicsOptions::default() };
        let t = LayerTrajectory::from_means(Level::L4, Attribute::IsPrime, means, &opts).unwrap();
        if let Some(b) = t.basin_layer {
            prop_assert!(t.layers.contains(&b));
        }
        match &t.phases {
            PhaseClassification::Phases(p) => {
                let all: Vec<u32> = p.extraction.iter().chain(&p.computation_basin).chain(&p.rebound).copied().collect();
                prop_assert_eq!(&all, &t.layers);
                prop_assert!(!p.computation_basin.is_empty());
            }
            PhaseClassification::NoPhases { .. } => prop_assert!(t.basin_layer.is_none() || t.len() < 3),
        }
        let pts = phase_portrait(&t);
        prop_assert_eq!(pts.len(), 2 * t.len());
        for (k, p) in pts.iter().enumerate() {
            let i = k % t.len();
            let (u, c) = match p.group {
                Group::Same => (t.same_u[i], t.same_c[i]),
                Group::Cross => (t.cross_u[i], t.cross_c[i]),
            };
            prop_assert_eq!((p.layer, p.u_mean, p.c_mean), (t.layers[i], u, c));
        }
    }
}
